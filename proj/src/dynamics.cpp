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

#include "bellgate/dynamics.hpp"

#include <cmath>
#include <sstream>

#include <unsupported/Eigen/MatrixFunctions>

#include "bellgate/bessel.hpp"
#include "bellgate/error.hpp"
#include "bellgate/log.hpp"

namespace bellgate::dynamics {

using hilbert::QuantumState;

void EffectiveParams::validate() const {
  require(std::isfinite(omega_g) && std::isfinite(omega_r) && std::isfinite(Delta) &&
              std::isfinite(Omega_g) && std::isfinite(Omega_mu),
          ErrorKind::invalid_spec, "effective parameters must be finite");
  require(omega_r != omega_g, ErrorKind::invalid_spec, "omega_r must differ from omega_g");
  require(Omega_mu >= 0.0, ErrorKind::invalid_spec, "Omega_mu must be >= 0");
  require(delta() != 0.0, ErrorKind::invalid_spec, "microwave detuning delta vanishes");
}

std::vector<std::string> EffectiveParams::warnings() const {
  std::vector<std::string> out;
  if (std::abs(Delta) >= 0.2 * std::abs(omega_r - omega_g))
    out.emplace_back("|Delta| is not small compared with |omega_r - omega_g|");
  if (Delta == 0.0) out.emplace_back("Delta = 0: phase-space loops never close");
  return out;
}

double idd_amplitude(double delta, int branch) {
  require(delta > 0.0, ErrorKind::invalid_argument, "delta must be > 0");
  require(branch >= 1, ErrorKind::invalid_argument, "IDD branch must be >= 1");
  return delta * bessel_j0_zero(branch) / 4.0;
}

double coupling_strength(const EffectiveParams& p) {
  return p.Omega_g * bessel_j(2, 4.0 * p.Omega_mu / p.delta());
}

EffectiveParams derive_operating_point(const OperatingPoint& op) {
  require(op.loops >= 1, ErrorKind::invalid_spec, "loop count must be >= 1");
  require(op.interaction_time > 0.0, ErrorKind::invalid_spec, "interaction time must be > 0");
  EffectiveParams p;
  p.omega_g = op.omega_g;
  p.omega_r = op.omega_r;
  p.Delta = kTwoPi * op.loops / op.interaction_time;
  const double g = p.Delta / (4.0 * std::sqrt(static_cast<double>(op.loops)));
  p.Omega_mu = idd_amplitude(p.delta(), op.idd_branch);
  p.Omega_g = g / bessel_j(2, 4.0 * p.Omega_mu / p.delta());
  p.validate();
  return p;
}

void NoiseSpec::validate() const {
  require(motional_coherence_time >= 0.0, ErrorKind::invalid_spec,
          "motional coherence time must be >= 0");
  require(heating_rate >= 0.0, ErrorKind::invalid_spec, "heating rate must be >= 0");
  require(freq_residual_std_hz >= 0.0, ErrorKind::invalid_spec,
          "frequency residual std must be >= 0");
  require(initial_nbar >= 0.0, ErrorKind::invalid_spec, "initial nbar must be >= 0");
  require(std::isfinite(qubit_detuning) && std::isfinite(freq_residual_mean_hz),
          ErrorKind::invalid_spec, "noise parameters must be finite");
}

NoiseSpec NoiseSpec::paper_budget() {
  NoiseSpec n;
  n.motional_coherence_time = 64e-3;
  n.heating_rate = 1.0;
  n.freq_residual_mean_hz = 3.4;
  n.freq_residual_std_hz = 50.0;
  return n;
}

Displacement sector_displacement(double g_lambda, double Delta, double t0, double t1) {
  const double h = t1 - t0;
  const double x = Delta * h;
  const double half = 0.5 * x;
  const double sinc = std::abs(half) < 1e-8 ? 1.0 - half * half / 6.0 : std::sin(half) / half;
  Displacement d;
  d.alpha = -kI * g_lambda * h * sinc * std::exp(-kI * (Delta * (t0 + 0.5 * h)));
  const double ratio = std::abs(x) < 1e-3 ? x / 6.0 - x * x * x / 120.0 : (x - std::sin(x)) / (x * x);
  d.theta = g_lambda * g_lambda * h * h * ratio;
  return d;
}

CMatrixXd displacement_operator(cplx alpha, int fock_dim) {
  const CMatrixXd a = hilbert::annihilation(fock_dim);
  if (alpha == cplx(0.0)) return CMatrixXd::Identity(fock_dim, fock_dim);
  const CMatrixXd gen = alpha * a.adjoint() - std::conj(alpha) * a;
  return gen.exp();
}

PhaseSpaceTrajectory phase_space_trajectory(const EffectiveParams& p, int lambda,
                                            const std::vector<double>& times) {
  PhaseSpaceTrajectory tr;
  tr.lambda = lambda;
  tr.times = times;
  const double g = coupling_strength(p);
  for (double t : times) {
    const Displacement d = sector_displacement(g * lambda, p.Delta, 0.0, t);
    tr.alpha.push_back(d.alpha);
    tr.theta.push_back(d.theta);
  }
  return tr;
}

QuantumState propagate_analytic(const EffectiveParams& p, double t, const QuantumState& init) {
  require(t >= 0.0, ErrorKind::invalid_argument, "propagation time must be >= 0");
  if (p.Delta == 0.0) warn("Delta = 0: using the unbounded-displacement limit alpha = -i g lambda t");
  QuantumState out = init;
  evolve_interval(out, Interval{coupling_strength(p), p.Delta, 0.0, t, {0.0, 0.0}}, NoiseSpec{}, 1);
  return out;
}

namespace {

double sector_energy(int s, const std::array<double, 2>& shift) {
  using hilbert::Level;
  const int z1 = hilbert::sigma_z_value(static_cast<Level>(s / hilbert::kIonLevels));
  const int z2 = hilbert::sigma_z_value(static_cast<Level>(s % hilbert::kIonLevels));
  return 0.5 * (shift[0] * z1 + shift[1] * z2);
}

std::array<bool, hilbert::kSpinDim> active_sectors(const QuantumState& state) {
  const int n = state.motion_dim();
  std::array<bool, hilbert::kSpinDim> active{};
  for (int s = 0; s < hilbert::kSpinDim; ++s) {
    if (state.is_pure())
      active[s] = state.ket().segment(s * n, n).squaredNorm() > 0.0;
    else
      active[s] = state.density().middleRows(s * n, n).squaredNorm() > 0.0 ||
                  state.density().middleCols(s * n, n).squaredNorm() > 0.0;
  }
  return active;
}

void apply_motion_step(QuantumState& state, const MotionStep& step,
                       const std::array<bool, hilbert::kSpinDim>& active) {
  if (step.identity()) return;
  const int n = state.motion_dim();
  CMatrixXd& rho = state.density_mut();
  for (int s = 0; s < hilbert::kSpinDim; ++s) {
    if (!active[s]) continue;
    for (int t = 0; t < hilbert::kSpinDim; ++t)
      if (active[t]) step.apply(rho.block(s * n, t * n, n, n));
  }
}

void ensure_density(QuantumState& state) {
  if (state.is_pure()) state = QuantumState::from_density(state.to_density(), state.motion_dim());
}

}  // namespace

MotionStep::MotionStep(double dephasing_rate, double heating_rate, int fock_dim, double dt)
    : fock_dim_(fock_dim) {
  if ((dephasing_rate <= 0.0 && heating_rate <= 0.0) || dt == 0.0) return;
  const double gam = dephasing_rate;
  const double heat = heating_rate;
  const int N = fock_dim;
  // c_n = (a a^dagger)_{nn} for the truncated ladder.
  auto c = [N](int n) { return n < N - 1 ? n + 1.0 : 0.0; };
  diagonals_.reserve(2 * N - 1);
  for (int k = -(N - 1); k <= N - 1; ++k) {
    const int len = N - std::abs(k);
    RMatrix<double> gen = RMatrix<double>::Zero(len, len);
    for (int j = 0; j < len; ++j) {
      const int n = j + std::max(k, 0);
      const int m = j + std::max(-k, 0);
      gen(j, j) = -0.5 * heat * (c(n) + c(m)) - 0.5 * heat * (n + m) - 0.5 * gam * k * k;
      if (j >= 1) gen(j, j - 1) = heat * std::sqrt(static_cast<double>(n) * m);
      if (j + 1 < len) gen(j, j + 1) = heat * std::sqrt((n + 1.0) * (m + 1.0));
    }
    diagonals_.push_back(heat > 0.0 ? RMatrix<double>((gen * dt).exp())
                                    : RMatrix<double>((gen.diagonal() * dt).array().exp().matrix().asDiagonal()));
  }
}

void MotionStep::apply(Eigen::Ref<CMatrixXd> block) const {
  if (diagonals_.empty()) return;
  const int N = fock_dim_;
  CVectorXd v(N);
  CVectorXd w(N);
  for (int k = -(N - 1); k <= N - 1; ++k) {
    const RMatrix<double>& prop = diagonals_[k + N - 1];
    const int len = N - std::abs(k);
    const int n0 = std::max(k, 0);
    const int m0 = std::max(-k, 0);
    for (int j = 0; j < len; ++j) v(j) = block(n0 + j, m0 + j);
    w.head(len).noalias() = prop.cast<cplx>() * v.head(len);
    for (int j = 0; j < len; ++j) block(n0 + j, m0 + j) = w(j);
  }
}

void evolve_interval(QuantumState& state, const Interval& iv, const NoiseSpec& noise,
                     int trotter_steps) {
  const double span = iv.tau1 - iv.tau0;
  require(span >= 0.0, ErrorKind::invalid_argument, "interval end precedes start");
  if (span == 0.0) return;
  const int N = state.motion_dim();
  const bool dissipative = noise.has_dissipation();
  if (dissipative) ensure_density(state);
  const auto active = active_sectors(state);
  const int steps = (dissipative && iv.g != 0.0) ? std::max(1, trotter_steps) : 1;
  const double dt = span / steps;
  MotionStep half;
  if (dissipative) half = MotionStep(noise.dephasing_rate(), noise.heating_rate, N, 0.5 * dt);

  std::array<CMatrixXd, hilbert::kSpinDim> unitary;
  for (int k = 0; k < steps; ++k) {
    const double ta = iv.tau0 + k * dt;
    const double tb = (k + 1 == steps) ? iv.tau1 : iv.tau0 + (k + 1) * dt;
    std::array<CMatrixXd, 5> disp;  // indexed by lambda + 2
    std::array<double, 5> theta{};
    std::array<bool, 5> have{};
    for (int s = 0; s < hilbert::kSpinDim; ++s) {
      if (!active[s]) continue;
      const int lam = hilbert::differential_z(s);
      if (!have[lam + 2]) {
        const Displacement d = sector_displacement(iv.g * lam, iv.Delta, ta, tb);
        disp[lam + 2] = displacement_operator(d.alpha, N);
        theta[lam + 2] = d.theta;
        have[lam + 2] = true;
      }
      const double phase = theta[lam + 2] + sector_energy(s, iv.ion_shift) * (tb - ta);
      unitary[s] = disp[lam + 2] * std::exp(-kI * phase);
    }
    if (state.is_pure()) {
      CVectorXd& psi = state.ket_mut();
      for (int s = 0; s < hilbert::kSpinDim; ++s)
        if (active[s]) psi.segment(s * N, N) = unitary[s] * psi.segment(s * N, N);
      continue;
    }
    apply_motion_step(state, half, active);
    CMatrixXd& rho = state.density_mut();
    for (int s = 0; s < hilbert::kSpinDim; ++s) {
      if (!active[s]) continue;
      for (int t = 0; t < hilbert::kSpinDim; ++t) {
        if (!active[t]) continue;
        auto blk = rho.block(s * N, t * N, N, N);
        blk = unitary[s] * blk * unitary[t].adjoint();
      }
    }
    apply_motion_step(state, half, active);
  }
}

Hamiltonian interaction_hamiltonian(double g, double Delta, std::array<double, 2> ion_shift,
                                    int fock_dim) {
  const CMatrixXd a = hilbert::annihilation(fock_dim);
  return [=](double t) {
    const int N = fock_dim;
    CMatrixXd h = CMatrixXd::Zero(hilbert::kSpinDim * N, hilbert::kSpinDim * N);
    const CMatrixXd drive = a * std::exp(kI * (Delta * t)) + a.adjoint() * std::exp(-kI * (Delta * t));
    for (int s = 0; s < hilbert::kSpinDim; ++s) {
      auto blk = h.block(s * N, s * N, N, N);
      blk = (g * hilbert::differential_z(s)) * drive;
      blk.diagonal().array() += sector_energy(s, ion_shift);
    }
    return h;
  };
}

QuantumState propagate_numeric(const Hamiltonian& hamiltonian, const QuantumState& init,
                               double t0, double t1, double dt) {
  require(dt > 0.0, ErrorKind::invalid_argument, "time step must be > 0");
  require(t1 >= t0, ErrorKind::invalid_argument, "t_span end precedes start");
  const long steps = std::max(1L, static_cast<long>(std::ceil((t1 - t0) / dt - 1e-9)));
  const double h = (t1 - t0) / steps;
  auto sample = [&](double t) {
    CMatrixXd m = hamiltonian(t);
    require(m.rows() == init.dim() && m.cols() == init.dim(), ErrorKind::dimension_mismatch,
            "Hamiltonian dimension does not match state");
    require(hilbert::hermiticity_defect(m) <= 1e-9 * std::max(1.0, m.cwiseAbs().maxCoeff()),
            ErrorKind::non_hermitian, "Hamiltonian sample is not Hermitian");
    return m;
  };
  if (t1 == t0) return init;
  if (init.is_pure()) {
    CVectorXd psi = init.ket();
    CMatrixXd h_next = sample(t0);
    for (long k = 0; k < steps; ++k) {
      const double t = t0 + k * h;
      const CMatrixXd h0 = std::move(h_next);
      const CMatrixXd hm = sample(t + 0.5 * h);
      h_next = sample(k + 1 == steps ? t1 : t + h);
      const CVectorXd k1 = -kI * (h0 * psi);
      const CVectorXd k2 = -kI * (hm * (psi + 0.5 * h * k1));
      const CVectorXd k3 = -kI * (hm * (psi + 0.5 * h * k2));
      const CVectorXd k4 = -kI * (h_next * (psi + h * k3));
      psi += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return QuantumState::from_ket(std::move(psi), init.motion_dim());
  }
  CMatrixXd rho = init.density();
  auto rhs = [](const CMatrixXd& hm, const CMatrixXd& r) -> CMatrixXd {
    return -kI * (hm * r - r * hm);
  };
  CMatrixXd h_next = sample(t0);
  for (long k = 0; k < steps; ++k) {
    const double t = t0 + k * h;
    const CMatrixXd h0 = std::move(h_next);
    const CMatrixXd hm = sample(t + 0.5 * h);
    h_next = sample(k + 1 == steps ? t1 : t + h);
    const CMatrixXd k1 = rhs(h0, rho);
    const CMatrixXd k2 = rhs(hm, rho + 0.5 * h * k1);
    const CMatrixXd k3 = rhs(hm, rho + 0.5 * h * k2);
    const CMatrixXd k4 = rhs(h_next, rho + h * k3);
    rho += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return QuantumState::from_density(std::move(rho), init.motion_dim());
}

void evolve_interval_numeric(QuantumState& state, const Interval& iv, double dt) {
  require(state.is_pure(), ErrorKind::invalid_argument, "numeric interval propagation needs a ket");
  state = propagate_numeric(interaction_hamiltonian(iv.g, iv.Delta, iv.ion_shift, state.motion_dim()),
                            state, iv.tau0, iv.tau1, dt);
}

void apply_spin_unitary(QuantumState& state, const CMatrixXd& spin_unitary, const NoiseSpec& noise,
                        double duration) {
  const int N = state.motion_dim();
  require(spin_unitary.rows() == hilbert::kSpinDim && spin_unitary.cols() == hilbert::kSpinDim,
          ErrorKind::dimension_mismatch, "spin unitary must be 9x9");
  if (state.is_pure()) {
    CVectorXd& psi = state.ket_mut();
    Eigen::Map<CMatrixXd> m(psi.data(), N, hilbert::kSpinDim);  // column s = sector s
    m = (m * spin_unitary.transpose()).eval();
  } else {
    const CMatrixXd u = hilbert::embed_spin(spin_unitary, N);
    state.density_mut() = u * state.density() * u.adjoint();
  }
  if (duration > 0.0 && noise.has_dissipation()) {
    ensure_density(state);
    apply_motion_step(state,
                      MotionStep(noise.dephasing_rate(), noise.heating_rate, N, duration),
                      active_sectors(state));
  }
}

QuantumState apply_noise_channels(const QuantumState& rho, const NoiseSpec& spec, double t) {
  require(t >= 0.0, ErrorKind::invalid_argument, "channel time must be >= 0");
  spec.validate();
  QuantumState out = QuantumState::from_density(rho.to_density(), rho.motion_dim());
  evolve_interval(out, Interval{0.0, 0.0, 0.0, t, {spec.qubit_detuning, spec.qubit_detuning}}, spec,
                  1);
  return out;
}

}  // namespace bellgate::dynamics
