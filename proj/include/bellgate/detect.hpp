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

// Photon-count detection model for two ions read out together.
//
// A bright ion (|down>) yields Poisson(lambda_bright) counts and a dark ion
// (|up> or the leaked |a>) Poisson(lambda_dark). During the detection window a
// bright ion may depump (probability depump_rate) and a dark ion may repump
// (repump_rate); the switch happens at a uniformly distributed time, so the
// count rate is lambda_from for a fraction u of the window and lambda_to for
// the rest.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "bellgate/types.hpp"

namespace bellgate::detect {

struct ReferenceModel {
  double lambda_bright = 30.0;
  double lambda_dark = 1.0;
  double repump_rate = 0.005;
  double depump_rate = 0.005;
  double leak_prob = 0.0;

  void validate() const;
  /// ceil(2 lambda_b + 8 sqrt(2 lambda_b)); counts above it share the last bin.
  int max_count() const;
};

enum class Context { population, parity, reference_bright, reference_dark };

const char* to_string(Context c);

struct CountHistogram {
  Context context = Context::population;
  double phase_milliradians = 0.0;
  std::int64_t n_trials = 0;
  std::vector<std::int64_t> bins;

  double phase() const { return 1e-3 * phase_milliradians; }
  int max_count() const { return static_cast<int>(bins.size()) - 1; }
  void validate() const;

  friend bool operator==(const CountHistogram&, const CountHistogram&) = default;
};

using Pmf = RVector<double>;

struct ReferencePmfs {
  Pmf bright;                // one bright ion
  Pmf dark;                  // one dark ion
  std::array<Pmf, 3> ions;   // two ions, indexed by the number of bright ions
};

/// Poisson(mean) on 0..max_count with the tail folded into the last bin.
Pmf poisson_pmf(double mean, int max_count);

/// Counts when the rate switches between the two means at a uniform time.
Pmf switch_pmf(double lambda_lo, double lambda_hi, int max_count);

/// Discrete convolution with mass beyond max_count folded into the last bin.
Pmf convolve_folded(const Pmf& a, const Pmf& b);

ReferencePmfs reference_pmfs(const ReferenceModel& model, int max_count = -1);

/// Expected histogram shapes for the two reference preparations.
Pmf bright_reference_pmf(const ReferencePmfs& pmfs, double leak_prob);
inline const Pmf& dark_reference_pmf(const ReferencePmfs& pmfs) { return pmfs.ions[0]; }

struct Calibration {
  ReferenceModel model;
  ReferenceModel sigma;  // one-standard-deviation uncertainties, field by field
  double log_likelihood = 0.0;
  int iterations = 0;
};

struct CalibrationOptions {
  std::optional<ReferenceModel> start;  // data-driven guess when empty
  bool uncertainties = true;
};

/// Joint ML fit of both reference histograms (two ions prepared bright with
/// per-ion leakage, and two ions dark).
Calibration calibrate_reference(const CountHistogram& bright, const CountHistogram& dark,
                                const CalibrationOptions& opt = {});

/// Optional global pi/2 analysis pulse before detection.
struct Analysis {
  bool rotated = false;
  double phase = 0.0;

  static Analysis none() { return {}; }
  static Analysis pi2(double phase) { return {true, phase}; }
};

/// Count-outcome POVM of one analysis setting, stored in factored form:
/// element i is sum_k weights(k, i) * basis[k].
struct PovmSet {
  Analysis analysis;
  std::vector<CMatrixXd> basis;
  RMatrix<double> weights;

  static PovmSet from_elements(std::vector<CMatrixXd> elements, Analysis analysis = {});

  Eigen::Index size() const { return weights.cols(); }
  CMatrixXd element(Eigen::Index i) const;
  std::vector<CMatrixXd> elements() const;
  double completeness_defect() const;
};

PovmSet build_povm(const ReferenceModel& model, const Analysis& analysis, int max_count = -1);
PovmSet build_povm(const ReferencePmfs& pmfs, const Analysis& analysis);

/// Probability of 0, 1 and 2 bright ions after the analysis rotation.
Eigen::Vector3d bright_number_distribution(const CMatrixXd& spin_rho, const Analysis& analysis);

/// Count distribution sum_k P(k bright) * ions[k].
Pmf outcome_distribution(const Eigen::Vector3d& bright_number, const ReferencePmfs& pmfs);

/// n_trials independent draws; trial t uses a counter-based uniform derived
/// from (seed, t), so any subset of trials can be regenerated alone.
CountHistogram sample_histogram(const Pmf& probs, std::int64_t n_trials, std::uint64_t seed,
                                Context context, double phase_milliradians = 0.0);

CountHistogram synthesize_counts(const CMatrixXd& spin_rho, const ReferenceModel& model,
                                 const Analysis& analysis, std::int64_t n_trials,
                                 std::uint64_t seed, int max_count = -1);

/// Reference histogram for two ions prepared bright (with leakage) or dark.
CountHistogram synthesize_reference(const ReferenceModel& model, bool bright,
                                    std::int64_t n_trials, std::uint64_t seed);

nlohmann::json to_json(const CountHistogram& h);
CountHistogram histogram_from_json(const nlohmann::json& j);

}  // namespace bellgate::detect
