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

// Spin-dependent-force dynamics:
//
//   H(t) = g (sigma_z1 - sigma_z2) (a e^{i Delta t} + a^dagger e^{-i Delta t})
//
// with g = Omega_g J_2(4 Omega_mu / delta), propagated in closed form sector by
// sector (each spin basis state displaces the mode by its own alpha), or
// numerically as a cross-check. Motional dephasing and heating are Lindblad
// channels on the mode, split symmetrically around the coherent steps.

#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "bellgate/hilbert.hpp"
#include "bellgate/types.hpp"

namespace bellgate::dynamics {

struct EffectiveParams {
  double omega_g = 0.0;   // gradient drive, rad/s
  double omega_r = 0.0;   // motional mode, rad/s
  double Delta = 0.0;     // gate detuning, rad/s
  double Omega_g = 0.0;   // gradient coupling, rad/s
  double Omega_mu = 0.0;  // microwave Rabi rate, rad/s

  /// Microwave detuning; always (omega_r - omega_g)/2 + Delta/2.
  double delta() const { return 0.5 * (omega_r - omega_g) + 0.5 * Delta; }

  void validate() const;
  std::vector<std::string> warnings() const;
};

struct OperatingPoint {
  int loops = 8;
  double interaction_time = 580e-6;  // seconds of plateau, ramps excluded
  double omega_g = angular_mhz(5.0);
  double omega_r = angular_mhz(6.9);
  int idd_branch = 1;
};

/// Delta = 2 pi K / T, g = Delta / (4 sqrt K), Omega_mu on the IDD branch and
/// Omega_g chosen to give that g.
EffectiveParams derive_operating_point(const OperatingPoint& op = {});

/// Omega_mu with J_0(4 Omega_mu / delta) = 0 on the given branch.
double idd_amplitude(double delta, int branch);

double coupling_strength(const EffectiveParams& p);

struct NoiseSpec {
  double motional_coherence_time = 0.0;  // seconds, 0 disables motional dephasing
  double heating_rate = 0.0;             // quanta/s
  double qubit_detuning = 0.0;           // rad/s, enters as (eps/2)(sigma_z1 + sigma_z2)
  double freq_residual_mean_hz = 0.0;
  double freq_residual_std_hz = 0.0;
  double initial_nbar = 0.0;

  /// Rate of the a^dagger a collapse operator: coherence of |0>+|1> decays as e^{-t/tau_m}.
  double dephasing_rate() const {
    return motional_coherence_time > 0.0 ? 2.0 / motional_coherence_time : 0.0;
  }
  bool has_dissipation() const { return dephasing_rate() > 0.0 || heating_rate > 0.0; }
  bool has_drift() const { return freq_residual_mean_hz != 0.0 || freq_residual_std_hz > 0.0; }
  bool is_zero() const {
    return !has_dissipation() && !has_drift() && qubit_detuning == 0.0 && initial_nbar == 0.0;
  }
  void validate() const;

  /// Motional dephasing 64 ms, heating 1 quantum/s, Delta residual 3.4 Hz +- 50 Hz.
  static NoiseSpec paper_budget();
};

struct Displacement {
  cplx alpha;
  double theta = 0.0;
};

/// Closed form of the sector propagator over [t0, t1] for coupling g*lambda:
/// U = e^{-i theta} D(alpha). Continuous through Delta = 0.
Displacement sector_displacement(double g_lambda, double Delta, double t0, double t1);

CMatrixXd displacement_operator(cplx alpha, int fock_dim);

struct PhaseSpaceTrajectory {
  int lambda = 0;
  std::vector<double> times;
  std::vector<cplx> alpha;
  std::vector<double> theta;
};

PhaseSpaceTrajectory phase_space_trajectory(const EffectiveParams& p, int lambda,
                                            const std::vector<double>& times);

/// Exact solution of the equations of motion from 0 to t at constant drive, noiseless.
hilbert::QuantumState propagate_analytic(const EffectiveParams& p, double t,
                                         const hilbert::QuantumState& init);

using Hamiltonian = std::function<CMatrixXd(double)>;

/// Full-space H(t) for the spin-dependent force plus per-ion (shift/2) sigma_z terms.
Hamiltonian interaction_hamiltonian(double g, double Delta, std::array<double, 2> ion_shift,
                                    int fock_dim);

/// Fixed-step RK4 from t0 to t1; the step is shrunk so it divides the span.
hilbert::QuantumState propagate_numeric(const Hamiltonian& hamiltonian,
                                        const hilbert::QuantumState& init, double t0, double t1,
                                        double dt);

/// Exact propagator of the motional Lindbladian (a^dagger a dephasing plus a
/// thermal bath with dn/dt = heating_rate) over one time step.
///
/// The generator preserves n - m for matrix elements rho_{n m}, so it splits into
/// one small real matrix per diagonal of the Fock block.
class MotionStep {
 public:
  MotionStep() = default;
  MotionStep(double dephasing_rate, double heating_rate, int fock_dim, double dt);

  bool identity() const { return diagonals_.empty(); }
  void apply(Eigen::Ref<CMatrixXd> block) const;

 private:
  int fock_dim_ = 0;
  std::vector<RMatrix<double>> diagonals_;
};

/// One spin-diagonal time interval: each spin sector s evolves under
/// g lambda_s (a e^{i Delta tau} + h.c.) + sum_i (ion_shift[i]/2) sigma_zi.
struct Interval {
  double g = 0.0;
  double Delta = 0.0;
  double tau0 = 0.0;
  double tau1 = 0.0;
  std::array<double, 2> ion_shift{0.0, 0.0};
};

/// Propagates across an interval with Trotterised motional noise (half
/// channel, exact sector unitary, half channel). Kets are promoted to density
/// operators only when the noise is dissipative.
void evolve_interval(hilbert::QuantumState& state, const Interval& iv, const NoiseSpec& noise,
                     int trotter_steps);

/// RK4 version of evolve_interval for noiseless cross-checks (kets only).
void evolve_interval_numeric(hilbert::QuantumState& state, const Interval& iv, double dt);

/// Applies a 9x9 spin unitary, then the motional channel for the given duration
/// (the two commute).
void apply_spin_unitary(hilbert::QuantumState& state, const CMatrixXd& spin_unitary,
                        const NoiseSpec& noise, double duration);

/// Motional channels plus the static qubit detuning over time t, no drive.
hilbert::QuantumState apply_noise_channels(const hilbert::QuantumState& rho,
                                           const NoiseSpec& spec, double t);

}  // namespace bellgate::dynamics
