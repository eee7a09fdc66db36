// Copyright 2026 The bellgate Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "bellgate/sequence.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <random>
#include <string>

#include <unsupported/Eigen/MatrixFunctions>

#include "bellgate/error.hpp"
#include "bellgate/parallel.hpp"
#include "bellgate/rng.hpp"

namespace bellgate::sequence {

using dynamics::EffectiveParams;
using dynamics::NoiseSpec;
using hilbert::QuantumState;

std::int32_t phase_to_units(double radians) {
  return static_cast<std::int32_t>(std::lround(radians / kPi * kPhaseUnitsPerPi));
}

const char* to_string(SegmentKind kind) {
  switch (kind) {
    case SegmentKind::interaction: return "interaction";
    case SegmentKind::gradient: return "gradient";
    case SegmentKind::pi_pulse: return "pi_pulse";
    case SegmentKind::pi2_pulse: return "pi2_pulse";
    case SegmentKind::idle: return "idle";
    case SegmentKind::ramp_up: return "ramp_up";
    case SegmentKind::ramp_down: return "ramp_down";
  }
  return "?";
}

const char* to_string(Channel channel) {
  switch (channel) {
    case Channel::none: return "none";
    case Channel::gradient: return "gradient";
    case Channel::microwave: return "microwave";
  }
  return "?";
}

const char* to_string(PhaseFrame frame) {
  return frame == PhaseFrame::ion2_shifted ? "ion2_shifted" : "bare";
}

int GateSchedule::count(SegmentKind kind) const {
  return static_cast<int>(std::count_if(segments.begin(), segments.end(),
                                        [kind](const Segment& s) { return s.kind == kind; }));
}

std::int64_t GateSchedule::duration_ns(SegmentKind kind) const {
  std::int64_t total = 0;
  for (const Segment& s : segments)
    if (s.kind == kind) total += s.duration_ns;
  return total;
}

void GateSchedule::validate() const {
  std::int64_t sum = 0;
  for (const Segment& s : segments) {
    require(s.walsh_sign == 1 || s.walsh_sign == -1, ErrorKind::schedule_inconsistent,
            "walsh_sign must be +1 or -1");
    if (s.is_pulse())
      require(s.duration_ns >= 0, ErrorKind::schedule_inconsistent, "negative pulse duration");
    else
      require(s.duration_ns > 0, ErrorKind::schedule_inconsistent,
              std::string(to_string(s.kind)) + " segment must have a positive duration");
    const bool ramp = s.kind == SegmentKind::ramp_up || s.kind == SegmentKind::ramp_down;
    require(ramp == (s.channel != Channel::none), ErrorKind::schedule_inconsistent,
            "ramps, and only ramps, name a channel");
    sum += s.duration_ns;
  }
  require(sum == total_duration_ns, ErrorKind::schedule_inconsistent,
          "segment durations do not add up to total_duration");
}

double EnvelopeSpec::rise(double u) {
  const double s = std::sin(0.5 * kPi * std::clamp(u, 0.0, 1.0));
  return s * s;
}

std::vector<int> walsh_signs(int n_segments) {
  require(n_segments >= 2 && std::has_single_bit(static_cast<unsigned>(n_segments)),
          ErrorKind::invalid_argument, "Walsh segment count must be a power of two >= 2");
  std::vector<int> signs(n_segments);
  for (int k = 0; k < n_segments; ++k)
    signs[k] = std::popcount(static_cast<unsigned>(k)) % 2 == 0 ? 1 : -1;
  return signs;
}

namespace {

Segment pulse(SegmentKind kind, std::int64_t ns, std::int32_t phase_units) {
  Segment s;
  s.kind = kind;
  s.duration_ns = ns;
  s.phase_units = phase_units;
  return s;
}

Segment plain(SegmentKind kind, std::int64_t ns, int sign = 1) {
  Segment s;
  s.kind = kind;
  s.duration_ns = ns;
  s.walsh_sign = sign;
  return s;
}

Segment ramp(SegmentKind kind, Channel channel, std::int64_t ns) {
  Segment s = plain(kind, ns);
  s.channel = channel;
  return s;
}

std::int64_t exact_ns(double seconds, const char* what) {
  const std::int64_t ns = std::llround(seconds * 1e9);
  require(std::abs(static_cast<double>(ns) - seconds * 1e9) < 1e-3,
          ErrorKind::schedule_inconsistent,
          std::string(what) + " is not a whole number of nanoseconds");
  return ns;
}

void finish(GateSchedule& s) {
  s.total_duration_ns = 0;
  for (const Segment& seg : s.segments) s.total_duration_ns += seg.duration_ns;
  s.validate();
}

}  // namespace

GateSchedule build_entangling_schedule(const EffectiveParams& p, const EnvelopeSpec& env,
                                       const EntanglingOptions& opt) {
  p.validate();
  require(p.Delta != 0.0, ErrorKind::schedule_inconsistent, "Delta = 0 has no loop period");
  require(opt.loops_per_segment >= 1, ErrorKind::invalid_argument, "loops per segment must be >= 1");
  require(env.ramp_ns >= 0, ErrorKind::invalid_argument, "ramp duration must be >= 0");
  const std::vector<int> signs =
      opt.walsh ? walsh_signs(opt.segments) : std::vector<int>(std::max(1, opt.segments), 1);
  const std::int64_t plateau =
      exact_ns(kTwoPi * opt.loops_per_segment / std::abs(p.Delta), "interaction plateau");
  const std::int64_t pi_ns = opt.pulses.finite ? opt.pulses.pi_ns : 0;
  const std::int64_t pi2_ns = opt.pulses.finite ? opt.pulses.pi2_ns : 0;

  GateSchedule s;
  s.ac_zeeman_common = opt.ac_zeeman_common;
  s.segments.push_back(pulse(SegmentKind::pi2_pulse, pi2_ns, opt.first_pi2_units));
  std::size_t flips = 0;
  for (std::size_t k = 0; k < signs.size(); ++k) {
    if (k > 0 && signs[k] != signs[k - 1]) {
      require(!opt.pi_phase_units.empty(), ErrorKind::invalid_argument, "no pi-pulse phases given");
      s.segments.push_back(pulse(SegmentKind::pi_pulse, pi_ns,
                                 opt.pi_phase_units[flips % opt.pi_phase_units.size()]));
      ++flips;
    }
    if (env.ramp_ns > 0) {
      s.segments.push_back(ramp(SegmentKind::ramp_up, Channel::gradient, env.ramp_ns));
      s.segments.push_back(ramp(SegmentKind::ramp_up, Channel::microwave, env.ramp_ns));
    }
    s.segments.push_back(plain(SegmentKind::interaction, plateau, signs[k]));
    if (env.ramp_ns > 0) {
      s.segments.push_back(ramp(SegmentKind::ramp_down, Channel::microwave, env.ramp_ns));
      s.segments.push_back(ramp(SegmentKind::ramp_down, Channel::gradient, env.ramp_ns));
    }
  }
  s.segments.push_back(pulse(SegmentKind::pi2_pulse, pi2_ns, opt.last_pi2_units));
  finish(s);
  return s;
}

GateSchedule build_addressing_schedule(double delta_ac_diff, double phase,
                                       const AddressingOptions& opt) {
  require(delta_ac_diff != 0.0 && std::isfinite(delta_ac_diff), ErrorKind::invalid_argument,
          "differential ac Zeeman shift must be nonzero");
  const double ramp_s = 1e-9 * static_cast<double>(opt.env.ramp_ns);
  const double plateau_s = kPi / std::abs(delta_ac_diff) - 2.0 * EnvelopeSpec::mean_square() * ramp_s;
  require(plateau_s > 0.0, ErrorKind::schedule_inconsistent,
          "ramps alone exceed the pi differential phase");
  const std::int64_t plateau = std::llround(plateau_s * 1e9);
  const std::int64_t arm = plateau + 2 * opt.env.ramp_ns;
  const std::int32_t units = phase_to_units(phase);
  const std::int64_t pi_ns = opt.pulses.finite ? opt.pulses.pi_ns : 0;
  const std::int64_t pi2_ns = opt.pulses.finite ? opt.pulses.pi2_ns : 0;

  GateSchedule s;
  s.ac_zeeman_common = opt.ac_zeeman_common;
  s.ac_zeeman_differential = delta_ac_diff;
  s.segments.push_back(pulse(SegmentKind::pi2_pulse, pi2_ns, units));
  if (opt.env.ramp_ns > 0) s.segments.push_back(ramp(SegmentKind::ramp_up, Channel::gradient, opt.env.ramp_ns));
  s.segments.push_back(plain(SegmentKind::gradient, plateau));
  if (opt.env.ramp_ns > 0) s.segments.push_back(ramp(SegmentKind::ramp_down, Channel::gradient, opt.env.ramp_ns));
  s.segments.push_back(pulse(SegmentKind::pi_pulse, pi_ns, units));
  s.segments.push_back(plain(SegmentKind::idle, arm));
  s.segments.push_back(pulse(SegmentKind::pi2_pulse, pi2_ns, units));
  finish(s);
  return s;
}

namespace {

CMatrixXd finite_rotation(double theta, double phi, double duration, double detuning) {
  const double rabi = theta / duration;
  CMatrixXd h = 0.5 * rabi * (std::cos(phi) * hilbert::ion_sigma_x() + std::sin(phi) * hilbert::ion_sigma_y()) +
                0.5 * detuning * hilbert::ion_sigma_z();
  return CMatrixXd(-kI * duration * h).exp();
}

}  // namespace

QuantumState execute_schedule(const GateSchedule& s, const EffectiveParams& p, const NoiseSpec& noise,
                              const QuantumState& init, const ExecOptions& opt) {
  s.validate();
  noise.validate();
  require(opt.method == Method::analytic || !noise.has_dissipation(), ErrorKind::invalid_argument,
          "the numeric propagator handles coherent dynamics only");
  const double g = dynamics::coupling_strength(p);
  const double Delta = p.Delta + opt.delta_offset;
  const double shift1 = s.ac_zeeman_common + 0.5 * s.ac_zeeman_differential;
  const double shift2 = s.ac_zeeman_common - 0.5 * s.ac_zeeman_differential;

  QuantumState state = init;
  bool gradient_on = false;
  for (const Segment& seg : s.segments) {
    double level = gradient_on ? 1.0 : 0.0;
    const bool gradient_ramp = seg.channel == Channel::gradient;
    if (seg.kind == SegmentKind::interaction || seg.kind == SegmentKind::gradient) level = 1.0;
    if (gradient_ramp) {
      require(gradient_on == (seg.kind == SegmentKind::ramp_down), ErrorKind::schedule_inconsistent,
              "gradient ramps must alternate up and down");
      level = EnvelopeSpec::mean_square();
      gradient_on = seg.kind == SegmentKind::ramp_up;
    }
    const double frame = s.frame == PhaseFrame::ion2_shifted ? shift2 : 0.0;
    const double common = noise.qubit_detuning + seg.detuning_offset;
    const std::array<double, 2> ion_shift{level * (shift1 - frame) + common,
                                          level * (shift2 - frame) + common};
    const double T = seg.duration();
    switch (seg.kind) {
      case SegmentKind::interaction: {
        const dynamics::Interval iv{g, Delta, 0.0, T, ion_shift};
        if (opt.method == Method::numeric) {
          const double rate = std::max(std::abs(Delta), 2.0 * std::abs(g));
          dynamics::evolve_interval_numeric(state, iv, opt.numeric_step / std::max(rate, 1.0 / T));
        } else {
          const int steps = std::max(
              1, static_cast<int>(std::lround(opt.trotter_steps_per_loop * std::abs(Delta) * T / kTwoPi)));
          dynamics::evolve_interval(state, iv, noise, steps);
        }
        break;
      }
      case SegmentKind::gradient:
      case SegmentKind::idle:
      case SegmentKind::ramp_up:
      case SegmentKind::ramp_down:
        dynamics::evolve_interval(state, dynamics::Interval{0.0, Delta, 0.0, T, ion_shift}, noise, 1);
        break;
      case SegmentKind::pi_pulse:
      case SegmentKind::pi2_pulse: {
        const bool is_pi = seg.kind == SegmentKind::pi_pulse;
        const double theta = (is_pi ? kPi : 0.5 * kPi) * (1.0 + (is_pi ? opt.pi_area_error : opt.pi2_area_error));
        CMatrixXd u;
        if (seg.duration_ns == 0)
          u = hilbert::global_rotation(theta, seg.phase());
        else
          u = hilbert::kron(finite_rotation(theta, seg.phase(), T, ion_shift[0]),
                            finite_rotation(theta, seg.phase(), T, ion_shift[1]));
        dynamics::apply_spin_unitary(state, u, noise, T);
        break;
      }
    }
  }
  return state;
}

QuantumState schedule_to_propagator(const GateSchedule& s, const EffectiveParams& p,
                                    const NoiseSpec& noise, const QuantumState& init,
                                    const ExecOptions& opt) {
  if (!noise.has_drift()) return execute_schedule(s, p, noise, init, opt);
  if (noise.freq_residual_std_hz == 0.0) {
    ExecOptions one = opt;
    one.delta_offset += angular_hz(noise.freq_residual_mean_hz);
    return execute_schedule(s, p, noise, init, one);
  }
  require(opt.drift_samples >= 1, ErrorKind::invalid_argument, "drift_samples must be >= 1");
  const auto n = static_cast<std::size_t>(opt.drift_samples);
  std::vector<CMatrixXd> out(n);
  parallel_for(n, opt.threads, [&](std::size_t i) {
    Rng rng = make_rng(opt.seed, {0x64726966ULL, i});
    std::normal_distribution<double> shift(noise.freq_residual_mean_hz, noise.freq_residual_std_hz);
    ExecOptions one = opt;
    one.delta_offset += angular_hz(shift(rng));
    out[i] = execute_schedule(s, p, noise, init, one).to_density();
  });
  CMatrixXd mean = CMatrixXd::Zero(init.dim(), init.dim());
  for (const CMatrixXd& rho : out) mean += rho;
  mean /= static_cast<double>(n);
  return QuantumState::from_density(std::move(mean), init.motion_dim());
}

QuantumState ground_state(const hilbert::HilbertSpec& spec, double nbar) {
  spec.validate();
  using hilbert::Level;
  if (nbar == 0.0) return hilbert::product_state(hilbert::spin_ket(Level::down, Level::down), spec.fock_dim);
  const CVectorXd dd = hilbert::spin_ket(Level::down, Level::down);
  return QuantumState::from_density(
      hilbert::kron(CMatrixXd(dd * dd.adjoint()), hilbert::thermal_motion(nbar, spec.fock_dim)),
      spec.fock_dim);
}

double spin_fidelity(const QuantumState& state, const CVectorXd& target) {
  return hilbert::state_fidelity(hilbert::partial_trace_motion(state).density(), target);
}

nlohmann::json to_json(const GateSchedule& s) {
  nlohmann::json segs = nlohmann::json::array();
  for (const Segment& seg : s.segments) {
    segs.push_back({{"kind", to_string(seg.kind)},
                    {"duration_ns", seg.duration_ns},
                    {"phase_units", seg.phase_units},
                    {"walsh_sign", seg.walsh_sign},
                    {"detuning_offset_rad_s", seg.detuning_offset},
                    {"channel", to_string(seg.channel)}});
  }
  return {{"phase_unit", "pi/1024"},
          {"total_duration_ns", s.total_duration_ns},
          {"ac_zeeman_common_rad_s", s.ac_zeeman_common},
          {"ac_zeeman_differential_rad_s", s.ac_zeeman_differential},
          {"frame", to_string(s.frame)},
          {"segments", segs}};
}

namespace {

template <typename Enum, std::size_t N>
Enum parse_enum(const std::string& text, const std::array<Enum, N>& values, const char* what) {
  for (Enum v : values)
    if (text == to_string(v)) return v;
  fail(ErrorKind::invalid_spec, std::string("unknown ") + what + " '" + text + "'");
}

}  // namespace

GateSchedule schedule_from_json(const nlohmann::json& j) {
  try {
    GateSchedule s;
    s.total_duration_ns = j.at("total_duration_ns").get<std::int64_t>();
    s.ac_zeeman_common = j.at("ac_zeeman_common_rad_s").get<double>();
    s.ac_zeeman_differential = j.at("ac_zeeman_differential_rad_s").get<double>();
    s.frame = parse_enum(j.at("frame").get<std::string>(),
                         std::array{PhaseFrame::ion2_shifted, PhaseFrame::bare}, "frame");
    for (const auto& js : j.at("segments")) {
      Segment seg;
      seg.kind = parse_enum(js.at("kind").get<std::string>(),
                            std::array{SegmentKind::interaction, SegmentKind::gradient,
                                       SegmentKind::pi_pulse, SegmentKind::pi2_pulse,
                                       SegmentKind::idle, SegmentKind::ramp_up,
                                       SegmentKind::ramp_down},
                            "segment kind");
      seg.duration_ns = js.at("duration_ns").get<std::int64_t>();
      seg.phase_units = js.at("phase_units").get<std::int32_t>();
      seg.walsh_sign = js.at("walsh_sign").get<int>();
      seg.detuning_offset = js.at("detuning_offset_rad_s").get<double>();
      seg.channel = parse_enum(js.at("channel").get<std::string>(),
                               std::array{Channel::none, Channel::gradient, Channel::microwave},
                               "channel");
      s.segments.push_back(seg);
    }
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::invalid_spec, std::string("malformed schedule JSON: ") + e.what());
  }
}

std::vector<double> DephasingNoiseModel::corner_rates() const {
  require(f_low_hz > 0.0 && f_high_hz >= f_low_hz, ErrorKind::invalid_argument,
          "noise band must satisfy 0 < f_low <= f_high");
  std::vector<double> rates;
  for (double f = f_low_hz; f <= f_high_hz * (1.0 + 1e-9); f *= 10.0) rates.push_back(angular_hz(f));
  return rates;
}

namespace {

using Spinor = Eigen::Vector2cd;

// exp(-i dt (bx sigma_x + bz sigma_z)) applied to psi, in the (down, up) basis.
void rotate(Spinor& psi, double bx, double bz, double dt) {
  const double b = std::hypot(bx, bz);
  if (b == 0.0) return;
  const double c = std::cos(b * dt);
  const double sn = std::sin(b * dt) / b;
  const cplx u00(c, -sn * bz), u11(c, sn * bz), u01(0.0, -sn * bx);
  const cplx p0 = psi(0), p1 = psi(1);
  psi(0) = u00 * p0 + u01 * p1;
  psi(1) = u01 * p0 + u11 * p1;
}

}  // namespace

double idd_echo_experiment(double duration, bool idd_on, const DephasingNoiseModel& noise,
                           const EchoOptions& opt) {
  require(duration >= 0.0, ErrorKind::invalid_argument, "echo duration must be >= 0");
  require(opt.steps_per_period >= 4 && opt.trajectories >= 1, ErrorKind::invalid_argument,
          "echo needs >= 4 steps per period and >= 1 trajectory");
  const double delta = opt.delta > 0.0 ? opt.delta : dynamics::derive_operating_point().delta();
  const double omega_mu = idd_on ? dynamics::idd_amplitude(delta, opt.idd_branch) : 0.0;
  const double period = kTwoPi / delta;
  const long periods = std::max(1L, std::lround(0.5 * duration / period));
  const long steps_per_arm = periods * opt.steps_per_period;
  const double dt = period / opt.steps_per_period;
  const std::vector<double> rates = noise.rms_hz > 0.0 ? noise.corner_rates() : std::vector<double>{};
  const double sigma = rates.empty() ? 0.0 : angular_hz(noise.rms_hz) / std::sqrt(static_cast<double>(rates.size()));
  // Slow components are refreshed only when they have moved appreciably.
  std::vector<long> stride(rates.size());
  std::vector<double> decay(rates.size()), kick(rates.size());
  for (std::size_t k = 0; k < rates.size(); ++k) {
    stride[k] = std::max(1L, static_cast<long>(0.02 / (rates[k] * dt)));
    decay[k] = std::exp(-rates[k] * dt * stride[k]);
    kick[k] = sigma * std::sqrt(1.0 - decay[k] * decay[k]);
  }

  const auto n = static_cast<std::size_t>(opt.trajectories);
  std::vector<Eigen::Vector3d> bloch(n);
  parallel_for(n, opt.threads, [&](std::size_t traj) {
    Rng rng = make_rng(opt.seed, {0x6563686fULL, traj});
    std::normal_distribution<double> normal;
    std::vector<double> x(rates.size());
    for (double& v : x) v = sigma * normal(rng);
    Spinor psi(1.0 / std::sqrt(2.0), cplx(0.0, 1.0 / std::sqrt(2.0)));  // +y
    long step = 0;
    auto arm = [&]() {
      for (long k = 0; k < steps_per_arm; ++k, ++step) {
        double eps = 0.0;
        for (std::size_t c = 0; c < x.size(); ++c) {
          if (step % stride[c] == 0 && step > 0) x[c] = x[c] * decay[c] + kick[c] * normal(rng);
          eps += x[c];
        }
        const double drive = 2.0 * omega_mu * std::cos(delta * (step + 0.5) * dt);
        rotate(psi, drive, 0.5 * eps, dt);
      }
    };
    arm();
    psi = Spinor(psi(1), psi(0));  // pi about x, up to global phase
    arm();
    const cplx coh = std::conj(psi(0)) * psi(1);
    bloch[traj] = Eigen::Vector3d(2.0 * coh.real(), 2.0 * coh.imag(), std::norm(psi(0)) - std::norm(psi(1)));
  });
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& b : bloch) mean += b;
  return (mean / static_cast<double>(n)).norm();
}

CoherenceFit fit_coherence(const std::vector<double>& durations, const std::vector<double>& contrasts,
                           double min_decay) {
  require(durations.size() == contrasts.size() && !durations.empty(), ErrorKind::invalid_argument,
          "durations and contrasts must be non-empty and equally long");
  std::vector<double> xs, ys;
  double longest_undecayed = 0.0;
  for (std::size_t i = 0; i < durations.size(); ++i) {
    const double c = contrasts[i];
    if (c > 1.0 - min_decay) longest_undecayed = std::max(longest_undecayed, durations[i]);
    if (durations[i] > 0.0 && c <= 1.0 - min_decay && c >= 0.15) {
      xs.push_back(std::log(durations[i]));
      ys.push_back(std::log(-std::log(c)));
    }
  }
  CoherenceFit fit;
  fit.points_used = static_cast<int>(xs.size());
  if (xs.size() < 2) {
    fit.bounded = true;
    fit.tau = longest_undecayed;
    return fit;
  }
  const auto m = static_cast<Eigen::Index>(xs.size());
  Eigen::MatrixXd a(m, 2);
  Eigen::VectorXd b(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    a(i, 0) = xs[i];
    a(i, 1) = 1.0;
    b(i) = ys[i];
  }
  const Eigen::Vector2d coef = a.colPivHouseholderQr().solve(b);
  fit.exponent = coef(0);
  require(fit.exponent > 0.0, ErrorKind::estimation_failed, "coherence fit gave a non-decaying law");
  fit.tau = std::exp(-coef(1) / coef(0));
  return fit;
}

}  // namespace bellgate::sequence
