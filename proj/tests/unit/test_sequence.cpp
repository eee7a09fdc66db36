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

#include <gtest/gtest.h>

#include <numeric>

#include "bellgate/dynamics.hpp"
#include "bellgate/sequence.hpp"
#include "oracles.hpp"

namespace bellgate::sequence {
namespace {

using dynamics::EffectiveParams;
using dynamics::NoiseSpec;
using hilbert::Level;
using hilbert::QuantumState;

const EffectiveParams& op() {
  static const EffectiveParams p = dynamics::derive_operating_point();
  return p;
}

double bell_infidelity(const GateSchedule& s, const NoiseSpec& noise = {}, const ExecOptions& opt = {}) {
  const QuantumState out = schedule_to_propagator(s, op(), noise, ground_state({16}, noise.initial_nbar), opt);
  return 1.0 - spin_fidelity(out, hilbert::bell_phi());
}

TEST(Sequence, DefaultTiming) {
  const GateSchedule s = build_entangling_schedule(op(), {});
  EXPECT_EQ(s.total_duration_ns, 740000);
  EXPECT_EQ(s.count(SegmentKind::interaction), 8);
  EXPECT_EQ(s.count(SegmentKind::pi_pulse), 5);
  EXPECT_EQ(s.count(SegmentKind::pi2_pulse), 2);
  EXPECT_EQ(s.duration_ns(SegmentKind::interaction), 580000);
  EXPECT_EQ(s.duration_ns(SegmentKind::ramp_up) + s.duration_ns(SegmentKind::ramp_down), 160000);
  for (const Segment& seg : s.segments)
    if (seg.kind == SegmentKind::interaction) EXPECT_EQ(seg.duration_ns, 72500);
  std::int64_t sum = 0;
  for (const Segment& seg : s.segments) sum += seg.duration_ns;
  EXPECT_EQ(sum, s.total_duration_ns);
  EXPECT_NEAR(s.ac_zeeman_common, -angular_khz(400.0), 1e-6);
  EXPECT_NO_THROW(s.validate());
}

TEST(Sequence, ZeroRampLeavesInteractionAndPulses) {
  EnvelopeSpec env;
  env.ramp_ns = 0;
  const GateSchedule s = build_entangling_schedule(op(), env);
  EXPECT_EQ(s.total_duration_ns, 580000);
  EXPECT_LE(bell_infidelity(s), 1e-8);
}

TEST(Sequence, InconsistentTimingIsRejected) {
  GateSchedule s = build_entangling_schedule(op(), {});
  s.total_duration_ns += 1;
  EXPECT_THROW(s.validate(), Error);
}

TEST(Sequence, EnvelopeShape) {
  EXPECT_NEAR(EnvelopeSpec::rise(0.0), 0.0, 1e-15);
  EXPECT_NEAR(EnvelopeSpec::rise(1.0), 1.0, 1e-15);
  EXPECT_NEAR(EnvelopeSpec::rise(0.5), 0.5, 1e-15);
}

TEST(Sequence, WalshPatterns) {
  EXPECT_EQ(walsh_signs(2), (std::vector<int>{1, -1}));
  EXPECT_EQ(walsh_signs(4), (std::vector<int>{1, -1, -1, 1}));
  const std::vector<int> w8 = walsh_signs(8);
  EXPECT_EQ(w8, (std::vector<int>{1, -1, -1, 1, -1, 1, 1, -1}));
  EXPECT_EQ(std::accumulate(w8.begin(), w8.end(), 0), 0);
  EXPECT_EQ(std::accumulate(w8.begin(), w8.end(), 1, std::multiplies<>()), 1);
  EXPECT_THROW(walsh_signs(6), Error);
}

TEST(Sequence, IdealGateMakesBellState) {
  EXPECT_LE(bell_infidelity(build_entangling_schedule(op(), {})), 1e-8);
}

TEST(Sequence, RobustToStaticQubitDetuning) {
  const GateSchedule s = build_entangling_schedule(op(), {});
  NoiseSpec n;
  n.qubit_detuning = angular_khz(200.0);
  EXPECT_LT(bell_infidelity(s, n), 1e-2);
  for (double khz : {-50.0, 20.0, 50.0}) {
    n.qubit_detuning = angular_khz(khz);
    EXPECT_LT(bell_infidelity(s, n), 1e-4) << khz;
  }
}

TEST(Sequence, RobustToPiPulseOverRotation) {
  ExecOptions o;
  o.pi_area_error = 0.01;
  EXPECT_LT(bell_infidelity(build_entangling_schedule(op(), {}), {}, o), 1e-3);
}

TEST(Sequence, WalshSuppressesMotionalFrequencyOffset) {
  ExecOptions o;
  o.delta_offset = angular_hz(200.0);
  EntanglingOptions plain;
  plain.walsh = false;
  const double with = bell_infidelity(build_entangling_schedule(op(), {}), {}, o);
  const double without = bell_infidelity(build_entangling_schedule(op(), {}, plain), {}, o);
  EXPECT_GT(without, 10.0 * with);
}

TEST(Sequence, PiPulseConjugatesSigmaZ) {
  const CMatrixXd x = hilbert::qubit_rotation(kPi, 0.0);
  const CMatrixXd z = hilbert::ion_sigma_z();
  EXPECT_LT((x.adjoint() * z * x + z).norm(), 1e-14);
  const CMatrixXd y = hilbert::qubit_rotation(kPi, 0.5 * kPi);
  EXPECT_LT((y.adjoint() * z * y + z).norm(), 1e-14);
}

TEST(Sequence, AddressingMapsPhiToSinglet) {
  const GateSchedule a = build_addressing_schedule(angular_khz(20.0), 0.25 * kPi);
  const QuantumState phi = QuantumState::from_ket(hilbert::bell_phi(), 1);
  const QuantumState out = execute_schedule(a, op(), {}, phi);
  EXPECT_NEAR(hilbert::state_fidelity(out.to_density(), hilbert::bell_psi_minus()), 1.0, 1e-9);
  const QuantumState twice = execute_schedule(a, op(), {}, out);
  EXPECT_GE(hilbert::state_fidelity(twice.to_density(), hilbert::bell_phi()), 1.0 - 1e-8);
}

TEST(Sequence, AddressingFlipsOneSpin) {
  const GateSchedule a = build_addressing_schedule(angular_khz(20.0), 0.25 * kPi);
  auto run = [&](Level x, Level y) {
    return execute_schedule(a, op(), {}, QuantumState::from_ket(hilbert::spin_ket(x, y), 1)).to_density();
  };
  // The flipped ion is the one that takes |up, a> to |down, a>.
  EXPECT_NEAR(hilbert::state_fidelity(run(Level::down, Level::down), hilbert::spin_ket(Level::up, Level::down)), 1.0, 1e-9);
  EXPECT_NEAR(hilbert::state_fidelity(run(Level::up, Level::leak), hilbert::spin_ket(Level::down, Level::leak)), 1.0, 1e-9);
  EXPECT_NEAR(hilbert::state_fidelity(run(Level::leak, Level::up), hilbert::spin_ket(Level::leak, Level::up)), 1.0, 1e-9);
}

TEST(Sequence, AddressingScheduleTiming) {
  const GateSchedule a = build_addressing_schedule(angular_khz(20.0), 0.25 * kPi);
  EXPECT_NO_THROW(a.validate());
  EXPECT_NEAR(a.ac_zeeman_differential, angular_khz(20.0), 1e-9);
  // Shift scales with the squared envelope, so each ramp counts at its mean square.
  double effective_ns = 0.0;
  for (const Segment& s : a.segments) {
    if (s.kind == SegmentKind::gradient) effective_ns += static_cast<double>(s.duration_ns);
    if ((s.kind == SegmentKind::ramp_up || s.kind == SegmentKind::ramp_down) && s.channel == Channel::gradient)
      effective_ns += EnvelopeSpec::mean_square() * static_cast<double>(s.duration_ns);
  }
  EXPECT_NEAR(effective_ns, 25000.0, 1e-6);
  EXPECT_THROW(build_addressing_schedule(0.0, 0.0), Error);
}

TEST(Sequence, JsonRoundTripIsExact) {
  for (const GateSchedule& s : {build_entangling_schedule(op(), {}),
                                build_addressing_schedule(angular_khz(20.0), 0.25 * kPi)}) {
    const nlohmann::json j = to_json(s);
    const GateSchedule back = schedule_from_json(nlohmann::json::parse(j.dump()));
    EXPECT_EQ(back, s);
  }
}

TEST(Sequence, FinitePulsesStillEntangle) {
  EntanglingOptions o;
  o.pulses.finite = true;
  const GateSchedule s = build_entangling_schedule(op(), {}, o);
  EXPECT_EQ(s.duration_ns(SegmentKind::pi_pulse), 5 * 1000);
  EXPECT_LT(bell_infidelity(s), 1e-3);
}

TEST(Sequence, EchoWithoutNoiseKeepsFullContrast) {
  DephasingNoiseModel quiet;
  EchoOptions o;
  o.trajectories = 4;
  for (double T : {1e-4, 1e-3})
    for (bool on : {false, true}) EXPECT_NEAR(idd_echo_experiment(T, on, quiet, o), 1.0, 1e-9);
}

TEST(Sequence, EchoDecaysWithoutDecoupling) {
  DephasingNoiseModel noise;
  noise.rms_hz = 1000.0;
  EchoOptions o;
  o.trajectories = 60;
  const double short_off = idd_echo_experiment(50e-6, false, noise, o);
  const double long_off = idd_echo_experiment(1.6e-3, false, noise, o);
  const double long_on = idd_echo_experiment(1.6e-3, true, noise, o);
  EXPECT_GT(short_off, 0.95);
  EXPECT_LT(long_off, 0.5);
  EXPECT_GT(long_on, 0.99);
}

TEST(Sequence, CoherenceFitRecoversStretchedExponential) {
  std::vector<double> t, c;
  for (double x : {1e-4, 2e-4, 4e-4, 8e-4, 1.6e-3}) {
    t.push_back(x);
    c.push_back(std::exp(-std::pow(x / 7e-4, 2.0)));
  }
  const CoherenceFit f = fit_coherence(t, c);
  EXPECT_FALSE(f.bounded);
  EXPECT_NEAR(f.tau, 7e-4, 1e-6);
  EXPECT_NEAR(f.exponent, 2.0, 1e-3);
  const CoherenceFit flat = fit_coherence({1e-3, 2e-3}, {1.0, 0.999});
  EXPECT_TRUE(flat.bounded);
}

}  // namespace
}  // namespace bellgate::sequence
