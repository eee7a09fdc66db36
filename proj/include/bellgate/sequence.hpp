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

// Pulse schedules for the entangling gate and the single-ion addressing echo,
// and their execution on top of the dynamics module.
//
// Durations are integer nanoseconds and phases integer multiples of pi/1024, so
// schedules add up and serialize exactly.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "bellgate/dynamics.hpp"
#include "bellgate/hilbert.hpp"

namespace bellgate::sequence {

inline constexpr std::int32_t kPhaseUnitsPerPi = 1024;

constexpr double phase_from_units(std::int32_t units) {
  return kPi * static_cast<double>(units) / kPhaseUnitsPerPi;
}
std::int32_t phase_to_units(double radians);

enum class SegmentKind { interaction, gradient, pi_pulse, pi2_pulse, idle, ramp_up, ramp_down };
/// Which field a ramp acts on; plateaus and pulses use none.
enum class Channel { none, gradient, microwave };
/// Frame of the pulse phase register: tracking ion 2's ac-Zeeman-shifted frequency, or bare.
enum class PhaseFrame { ion2_shifted, bare };

const char* to_string(SegmentKind kind);
const char* to_string(Channel channel);
const char* to_string(PhaseFrame frame);

struct Segment {
  SegmentKind kind = SegmentKind::idle;
  std::int64_t duration_ns = 0;  // 0 for instantaneous pulses
  std::int32_t phase_units = 0;
  int walsh_sign = 1;
  double detuning_offset = 0.0;  // rad/s on both qubits
  Channel channel = Channel::none;

  double duration() const { return 1e-9 * static_cast<double>(duration_ns); }
  double phase() const { return phase_from_units(phase_units); }
  bool is_pulse() const { return kind == SegmentKind::pi_pulse || kind == SegmentKind::pi2_pulse; }

  friend bool operator==(const Segment&, const Segment&) = default;
};

struct GateSchedule {
  std::vector<Segment> segments;
  std::int64_t total_duration_ns = 0;
  double ac_zeeman_common = 0.0;        // rad/s
  double ac_zeeman_differential = 0.0;  // rad/s, ion 1 minus ion 2
  PhaseFrame frame = PhaseFrame::ion2_shifted;

  double total_duration() const { return 1e-9 * static_cast<double>(total_duration_ns); }
  int count(SegmentKind kind) const;
  std::int64_t duration_ns(SegmentKind kind) const;
  void validate() const;

  friend bool operator==(const GateSchedule&, const GateSchedule&) = default;
};

struct EnvelopeSpec {
  std::int64_t ramp_ns = 5000;  // sine-squared edge

  /// Envelope at fraction u in [0,1] of a rising edge.
  static double rise(double u);
  /// Integral of envelope^2 over one edge divided by its duration (3/8 for sine-squared).
  static constexpr double mean_square() { return 3.0 / 8.0; }
};

struct PulseSpec {
  bool finite = false;
  std::int64_t pi_ns = 1000;
  std::int64_t pi2_ns = 500;
};

struct EntanglingOptions {
  int segments = 8;
  int loops_per_segment = 1;
  bool walsh = true;
  std::vector<std::int32_t> pi_phase_units{0, 512, 0, 512, 0};  // x y x y x
  std::int32_t first_pi2_units = 0;
  std::int32_t last_pi2_units = 1024;
  double ac_zeeman_common = -angular_khz(400.0);
  PulseSpec pulses;
};

/// Sign pattern (-1)^popcount(k): (+,-), (+,-,-,+), (+,-,-,+,-,+,+,-), ...
std::vector<int> walsh_signs(int n_segments);

GateSchedule build_entangling_schedule(const dynamics::EffectiveParams& p, const EnvelopeSpec& env,
                                       const EntanglingOptions& opt = {});

struct AddressingOptions {
  EnvelopeSpec env;
  PulseSpec pulses;
  double ac_zeeman_common = angular_mhz(2.5);
};

/// Ramsey echo with the gradient on in the first arm only; the differential
/// phase collected by ion 1 in that arm is pi.
GateSchedule build_addressing_schedule(double delta_ac_diff, double phase,
                                       const AddressingOptions& opt = {});

enum class Method { analytic, numeric };

struct ExecOptions {
  Method method = Method::analytic;
  int trotter_steps_per_loop = 64;
  double numeric_step = 0.01;  // dt * max(|Delta|, 2 g)
  double delta_offset = 0.0;   // rad/s added to Delta for this trajectory
  double pi_area_error = 0.0;  // relative over-rotation of pi pulses
  double pi2_area_error = 0.0;
  int drift_samples = 500;
  std::uint64_t seed = 0;
  int threads = 1;
};

/// Single trajectory: noise.freq_residual_* are ignored, options.delta_offset is used.
hilbert::QuantumState execute_schedule(const GateSchedule& s, const dynamics::EffectiveParams& p,
                                       const dynamics::NoiseSpec& noise,
                                       const hilbert::QuantumState& init,
                                       const ExecOptions& opt = {});

/// Full execution: averages over quasi-static Delta shifts drawn from the
/// frequency-residual distribution when one is present.
hilbert::QuantumState schedule_to_propagator(const GateSchedule& s,
                                             const dynamics::EffectiveParams& p,
                                             const dynamics::NoiseSpec& noise,
                                             const hilbert::QuantumState& init,
                                             const ExecOptions& opt = {});

/// |down down> with the mode in the thermal state of noise.initial_nbar.
hilbert::QuantumState ground_state(const hilbert::HilbertSpec& spec, double nbar = 0.0);

/// Fidelity of the spin marginal with a two-qutrit target ket.
double spin_fidelity(const hilbert::QuantumState& state, const CVectorXd& target);

nlohmann::json to_json(const GateSchedule& s);
GateSchedule schedule_from_json(const nlohmann::json& j);

// Spin-echo coherence with and without intrinsic dynamical decoupling.

/// Qubit-frequency noise as a sum of Ornstein-Uhlenbeck processes, one per
/// decade between f_low and f_high, with equal variance each (a 1/f-like spectrum).
struct DephasingNoiseModel {
  double rms_hz = 0.0;
  double f_low_hz = 10.0;
  double f_high_hz = 1e5;

  std::vector<double> corner_rates() const;  // rad/s
};

struct EchoOptions {
  double delta = 0.0;  // microwave detuning, rad/s; 0 selects the operating point's
  int idd_branch = 1;
  int steps_per_period = 32;
  int trajectories = 200;
  std::uint64_t seed = 0;
  int threads = 1;
};

/// Contrast (length of the trajectory-averaged Bloch vector) after
/// pi/2 - T/2 - pi - T/2 with arms snapped to whole microwave periods.
double idd_echo_experiment(double duration, bool idd_on, const DephasingNoiseModel& noise,
                           const EchoOptions& opt = {});

struct CoherenceFit {
  double tau = 0.0;       // seconds; a lower bound when bounded
  double exponent = 0.0;  // stretch p of exp(-(T/tau)^p)
  bool bounded = false;   // no decay resolved within the scan
  int points_used = 0;
};

/// Fits C(T) = exp(-(T/tau)^p) by linear regression of log(-log C) on log T over
/// points with resolvable decay.
CoherenceFit fit_coherence(const std::vector<double>& durations,
                           const std::vector<double>& contrasts, double min_decay = 0.02);

}  // namespace bellgate::sequence
