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

// Fidelity estimation from photon-count histograms.
//
// Two estimators are provided. The parity method combines ML populations with a
// joint ML fit of the parity oscillation; the linear method applies optimal
// real coefficients to the measured outcome frequencies. Both feed the same
// bootstrap and trigger-selection machinery.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "bellgate/detect.hpp"
#include "bellgate/types.hpp"

namespace bellgate::estimate {

enum class Target { symmetric, antisymmetric };
enum class Method { parity, linear };

const char* to_string(Target t);
const char* to_string(Method m);
Target target_from_string(const std::string& s);
Method method_from_string(const std::string& s);

/// Ideal two-qutrit target ket for the given Bell state.
CVectorXd target_ket(Target t);

struct Dataset {
  std::string id;
  Target target = Target::symmetric;
  std::vector<detect::CountHistogram> population;
  std::vector<detect::CountHistogram> parity;
  detect::CountHistogram reference_bright;
  detect::CountHistogram reference_dark;

  void validate() const;
  std::int64_t population_trials() const;
};

/// Shape of a synthetic dataset; the defaults follow the symmetric experiment.
struct DatasetShape {
  int population_sets = 40;
  int parity_phases = 52;
  int sets_per_phase = 1;
  std::int64_t trials_per_set = 200;
  std::int64_t reference_trials = 18500;

  static DatasetShape for_target(Target t);
  void validate() const;
};

/// Evenly spaced parity analysis phases: 2 pi k / 52 for the symmetric layout,
/// multiples of pi/3 for the antisymmetric one.
std::vector<double> parity_phases(const DatasetShape& shape, Target t);

Dataset synthesize_dataset(const CMatrixXd& spin_rho, Target target,
                           const detect::ReferenceModel& model, const DatasetShape& shape,
                           const std::string& id, std::uint64_t seed);

struct Populations {
  double p0 = 0.0;
  double p1 = 0.0;
  double p2 = 0.0;
  double log_likelihood = 0.0;
  int iterations = 0;
};

/// EM over the three-component mixture indexed by the number of bright ions.
Populations ml_populations(const detect::CountHistogram& h, const detect::ReferencePmfs& pmfs);
Populations ml_populations(const detect::CountHistogram& h, const detect::ReferenceModel& model);

double parity(double p0, double p1, double p2);

struct ParityFit {
  double amplitude = 0.0;
  double phase_offset = 0.0;
  double imbalance = 0.0;  // P2 - P0, phase independent
  double log_likelihood = 0.0;
  int iterations = 0;
};

/// Joint ML over the raw counts of every phase with
/// parity(phi) = A sin(2 phi + phi0), subject to all populations >= 0.
ParityFit fit_parity_oscillation(const std::vector<detect::CountHistogram>& parity_hists,
                                 const detect::ReferencePmfs& pmfs);

double bell_fidelity_parity(double p0, double p2, double amplitude);
double antisym_fidelity(double p1, double mean_parity);

/// Mean over six pi/3-spaced phases of the per-phase ML parity.
double mean_parity_six_phases(const std::vector<detect::CountHistogram>& parity_hists,
                              const detect::ReferencePmfs& pmfs);

/// Measured fidelity of a state with qubit fidelity f after first-order leakage.
double apply_leakage(double f, double eps, Target t);
/// Exact inverse of apply_leakage.
double correct_leakage(double f_measured, double eps, Target t);

/// Occupancies of the three leak operators assumed by the linear estimator.
std::array<double, 3> leak_occupancies(double eps, Target t);

struct LinearCoeffs {
  std::vector<detect::Analysis> settings;
  std::vector<RVector<double>> alpha;  // per setting, one entry per outcome
  double A = 0.0;
  double B = 0.0;
  double C = 0.0;
  double residual = 0.0;
  double variance = 0.0;  // estimator variance at the reference state

  /// sum_ij alpha_ij Pi_ij minus the leak terms.
  CMatrixXd effective_operator(const std::vector<detect::PovmSet>& povms) const;
};

/// Minimum-variance coefficients for the target ket; trials[j] is the number
/// of repetitions of setting j (equal weights when empty).
LinearCoeffs linear_coeffs(const std::vector<detect::PovmSet>& povms, const CVectorXd& target,
                           const std::vector<double>& trials = {});

/// Operators multiplying A, B and C in the linear-estimator constraint.
std::array<CMatrixXd, 3> leak_operators();

struct FidelityEstimate {
  Method method = Method::parity;
  Target target = Target::symmetric;
  double point = 0.0;        // reported value
  double raw = 0.0;          // before truncation
  double measured = 0.0;     // before leakage correction
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double mean = 0.0;
  double median = 0.0;
  int n_boot = 0;
  bool leakage_corrected = false;
  bool truncated = false;
};

/// Settings and merged histograms of a dataset: population first, then one per
/// distinct parity phase in increasing order.
struct SettingData {
  std::vector<detect::Analysis> settings;
  std::vector<detect::CountHistogram> merged;
};
SettingData merge_settings(const Dataset& d);

FidelityEstimate linear_fidelity(const Dataset& d, const LinearCoeffs& coeffs, double eps);

struct AnalysisOptions {
  bool leakage_correct = true;
  bool truncate = true;
};

/// Point estimate with a given reference model; no resampling.
FidelityEstimate estimate_fidelity(const Dataset& d, Method m, const detect::ReferenceModel& model,
                                   const AnalysisOptions& opt = {});

struct BootstrapOptions {
  int n_boot = 5000;
  std::uint64_t seed = 0;
  double mean_jitter = 0.01;  // relative sd applied to both Poisson means
  int threads = 1;
  AnalysisOptions analysis;
};

/// Point estimates from the original data and percentile intervals from
/// n_boot resamples of the experiment and reference histograms.
std::vector<FidelityEstimate> bootstrap(const Dataset& d, const std::vector<Method>& methods,
                                        const BootstrapOptions& opt = {});
FidelityEstimate bootstrap(const Dataset& d, Method m, const BootstrapOptions& opt = {});

/// Type-7 sample quantile.
double quantile(std::vector<double> values, double q);

/// Splits a dataset into disjoint trigger and analysis halves, seeded by the id.
std::pair<Dataset, Dataset> trigger_split(const Dataset& d, std::uint64_t seed = 0);

struct TriggerSelection {
  std::size_t selected = 0;
  std::vector<double> trigger;
  FidelityEstimate analysis;
};

/// Picks the dataset whose trigger half scores highest and reports the
/// estimate from its analysis half.
TriggerSelection select_by_trigger(const std::vector<Dataset>& datasets, Method m,
                                   const AnalysisOptions& opt = {}, std::uint64_t seed = 0);

/// Qubit-subspace state generator for synthetic data.
struct GeneratedState {
  CMatrixXd rho;             // 9x9 spin density including leakage
  double fidelity = 0.0;     // qubit fidelity with the target
  double coherence_time = 0.0;  // motional coherence time used, 0 for the mixture fallback
};

/// Output of the entangling gate limited by motional dephasing, tuned to the
/// requested fidelity; falls back to a Werner-type mixture below the reach of
/// dephasing. The antisymmetric target applies the ideal addressing step.
GeneratedState dephasing_limited_state(double fidelity, Target t, double eps, int fock_dim = 12);

/// Embeds a qubit-subspace density (4x4 in the order dd, du, ud, uu, or 9x9)
/// and adds first-order leakage into the leak states of the given target.
GeneratedState with_leakage(const CMatrixXd& qubit_rho, Target t, double eps);

/// Werner-type state p |psi><psi| + (1-p) I/4 on the qubit subspace, with leakage.
GeneratedState werner_state(double fidelity, Target t, double eps);

struct BiasPoint {
  double true_fidelity = 0.0;
  double mean_estimate = 0.0;
  double bias = 0.0;
  double std_error = 0.0;
  int replicates = 0;
};

struct BiasOptions {
  Target target = Target::symmetric;
  Method method = Method::linear;
  int replicates = 1000;
  std::uint64_t seed = 0;
  int threads = 1;
  double leak_prob = 3.5e-3;
  detect::ReferenceModel model{};
  DatasetShape shape{};
  bool truncate = false;
  bool recalibrate = true;
};

std::vector<BiasPoint> bias_harness(const std::vector<double>& true_fidelities,
                                    const BiasOptions& opt);
BiasPoint bias_point(const GeneratedState& state, const BiasOptions& opt);

/// Bundle layout: manifest.json plus one histogram file per set.
void write_bundle(const Dataset& d, const std::filesystem::path& dir);
Dataset read_bundle(const std::filesystem::path& dir);

nlohmann::json to_json(const FidelityEstimate& e);

}  // namespace bellgate::estimate
