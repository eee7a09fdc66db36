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

#include "bellgate/detect.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "bellgate/error.hpp"
#include "bellgate/hilbert.hpp"
#include "bellgate/optimize.hpp"
#include "bellgate/rng.hpp"

namespace bellgate::detect {

void ReferenceModel::validate() const {
  require(lambda_dark >= 0.0 && lambda_bright > lambda_dark, ErrorKind::invalid_spec,
          "reference means must satisfy lambda_bright > lambda_dark >= 0");
  for (double p : {repump_rate, depump_rate, leak_prob})
    require(p >= 0.0 && p <= 1.0, ErrorKind::invalid_spec, "reference probabilities must lie in [0,1]");
}

int ReferenceModel::max_count() const {
  const double two = 2.0 * lambda_bright;
  return static_cast<int>(std::ceil(two + 8.0 * std::sqrt(two)));
}

const char* to_string(Context c) {
  switch (c) {
    case Context::population: return "population";
    case Context::parity: return "parity";
    case Context::reference_bright: return "reference_bright";
    case Context::reference_dark: return "reference_dark";
  }
  return "?";
}

void CountHistogram::validate() const {
  require(!bins.empty(), ErrorKind::invalid_spec, "histogram has no bins");
  std::int64_t sum = 0;
  for (std::int64_t b : bins) {
    require(b >= 0, ErrorKind::invalid_spec, "negative histogram bin");
    sum += b;
  }
  require(sum == n_trials, ErrorKind::invalid_spec, "histogram bins do not sum to n_trials");
}

Pmf poisson_pmf(double mean, int max_count) {
  require(mean >= 0.0 && max_count >= 0, ErrorKind::invalid_argument, "bad Poisson parameters");
  Pmf p = Pmf::Zero(max_count + 1);
  if (mean == 0.0) {
    p(0) = 1.0;
    return p;
  }
  const double log_mean = std::log(mean);
  double head = 0.0;
  for (int k = 0; k < max_count; ++k) {
    p(k) = std::exp(k * log_mean - mean - std::lgamma(k + 1.0));
    head += p(k);
  }
  p(max_count) = std::max(0.0, 1.0 - head);
  return p;
}

Pmf switch_pmf(double lambda_lo, double lambda_hi, int max_count) {
  require(lambda_hi > lambda_lo, ErrorKind::invalid_argument, "switch means must differ");
  const Pmf lo = poisson_pmf(lambda_lo, max_count);
  const Pmf hi = poisson_pmf(lambda_hi, max_count);
  Pmf s = Pmf::Zero(max_count + 1);
  double cdf_lo = 0.0, cdf_hi = 0.0, head = 0.0;
  for (int k = 0; k < max_count; ++k) {
    cdf_lo += lo(k);
    cdf_hi += hi(k);
    s(k) = std::max(0.0, (cdf_lo - cdf_hi) / (lambda_hi - lambda_lo));
    head += s(k);
  }
  s(max_count) = std::max(0.0, 1.0 - head);
  return s;
}

Pmf convolve_folded(const Pmf& a, const Pmf& b) {
  require(a.size() == b.size() && a.size() > 0, ErrorKind::dimension_mismatch,
          "convolved PMFs must share their support");
  const Eigen::Index n = a.size();
  Pmf c = Pmf::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (a(i) == 0.0) continue;
    const Eigen::Index inside = n - 1 - i;  // b indices j < inside land below the last bin
    c.segment(i, inside) += a(i) * b.head(inside);
    c(n - 1) += a(i) * b.tail(n - inside).sum();
  }
  return c;
}

ReferencePmfs reference_pmfs(const ReferenceModel& model, int max_count) {
  model.validate();
  const int m = max_count >= 0 ? max_count : model.max_count();
  const Pmf sw = switch_pmf(model.lambda_dark, model.lambda_bright, m);
  ReferencePmfs r;
  r.bright = (1.0 - model.depump_rate) * poisson_pmf(model.lambda_bright, m) + model.depump_rate * sw;
  r.dark = (1.0 - model.repump_rate) * poisson_pmf(model.lambda_dark, m) + model.repump_rate * sw;
  r.ions[0] = convolve_folded(r.dark, r.dark);
  r.ions[1] = convolve_folded(r.bright, r.dark);
  r.ions[2] = convolve_folded(r.bright, r.bright);
  return r;
}

Pmf bright_reference_pmf(const ReferencePmfs& pmfs, double eps) {
  return (1.0 - eps) * (1.0 - eps) * pmfs.ions[2] + 2.0 * eps * (1.0 - eps) * pmfs.ions[1] +
         eps * eps * pmfs.ions[0];
}

namespace {

double log_likelihood(const CountHistogram& h, const Pmf& p) {
  double ll = 0.0;
  for (std::size_t k = 0; k < h.bins.size(); ++k)
    if (h.bins[k] > 0) ll += static_cast<double>(h.bins[k]) * std::log(std::max(p(static_cast<Eigen::Index>(k)), 1e-300));
  return ll;
}

double mean_count(const CountHistogram& h) {
  double s = 0.0;
  for (std::size_t k = 0; k < h.bins.size(); ++k) s += static_cast<double>(k) * h.bins[k];
  return s / static_cast<double>(h.n_trials);
}

bool degenerate(const CountHistogram& h) {
  return std::count_if(h.bins.begin(), h.bins.end(), [](std::int64_t b) { return b > 0; }) <= 1;
}

ReferenceModel from_vector(const Eigen::VectorXd& v) {
  return ReferenceModel{v(0), v(1), v(2), v(3), v(4)};
}

}  // namespace

Calibration calibrate_reference(const CountHistogram& bright, const CountHistogram& dark,
                                const CalibrationOptions& opt) {
  bright.validate();
  dark.validate();
  require(bright.bins.size() == dark.bins.size(), ErrorKind::dimension_mismatch,
          "reference histograms must share their binning");
  require(bright.n_trials >= 1000 && dark.n_trials >= 1000, ErrorKind::invalid_argument,
          "reference histograms need at least 1000 trials");
  if (degenerate(bright) || degenerate(dark))
    fail(ErrorKind::calibration_failed, "reference histogram has all mass in a single bin");
  const int m = bright.max_count();

  // Natural parameters (lambda_b, lambda_d, repump, depump, leak).
  auto nll = [&](const Eigen::VectorXd& theta) {
    const ReferenceModel model = from_vector(theta);
    if (!(model.lambda_dark >= 0.0 && model.lambda_bright > model.lambda_dark)) return 1e300;
    for (int i = 2; i < 5; ++i)
      if (theta(i) < 0.0 || theta(i) > 1.0) return 1e300;
    const ReferencePmfs pmfs = reference_pmfs(model, m);
    return -(log_likelihood(bright, bright_reference_pmf(pmfs, model.leak_prob)) +
             log_likelihood(dark, dark_reference_pmf(pmfs)));
  };
  // The simplex works on square roots so every parameter stays non-negative.
  auto nll_sqrt = [&](const Eigen::VectorXd& u) { return nll(u.cwiseAbs2()); };

  Eigen::VectorXd u0(5);
  const bool warm = opt.start.has_value();
  if (warm) {
    const ReferenceModel& s = *opt.start;
    u0 << s.lambda_bright, s.lambda_dark, std::max(s.repump_rate, 1e-4), std::max(s.depump_rate, 1e-4),
        std::max(s.leak_prob, 1e-4);
  } else {
    u0 << 0.5 * mean_count(bright), 0.5 * mean_count(dark), 0.01, 0.01, 0.01;
  }
  u0 = u0.cwiseSqrt();
  const Eigen::VectorXd step = (warm ? 0.01 * u0 : 0.05 * u0).cwiseMax(warm ? 0.005 : 0.02);
  MinimizeResult best = minimize_simplex(nll_sqrt, u0, step, 1e-6);
  if (!warm && best.converged) {
    // A restart from the optimum guards against premature simplex collapse.
    const MinimizeResult again =
        minimize_simplex(nll_sqrt, best.x, (0.01 * best.x.cwiseAbs()).cwiseMax(0.005), 1e-7);
    if (again.value <= best.value) best = MinimizeResult{again.x, again.value, best.iterations + again.iterations, true};
  }
  if (!best.converged || !std::isfinite(best.value) || best.value >= 1e299)
    fail(ErrorKind::calibration_failed, "reference likelihood maximization did not converge after " +
                                            std::to_string(best.iterations) + " iterations");

  Calibration cal;
  const Eigen::VectorXd theta = best.x.cwiseAbs2();
  cal.model = from_vector(theta);
  cal.log_likelihood = -best.value;
  cal.iterations = best.iterations;
  if (!opt.uncertainties) return cal;

  Eigen::VectorXd h(5);
  h << 1e-3 * theta(0), 1e-3 * std::max(theta(1), 0.05), 1e-4, 1e-4, 1e-4;
  Eigen::VectorXd center = theta;
  for (int i = 1; i < 5; ++i) center(i) = std::max(center(i), 1.5 * h(i));
  for (int i = 2; i < 5; ++i) center(i) = std::min(center(i), 1.0 - 1.5 * h(i));
  const Eigen::MatrixXd hess = numeric_hessian(nll, center, h);
  const Eigen::MatrixXd cov = hess.completeOrthogonalDecomposition().pseudoInverse();
  const Eigen::VectorXd sd = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  cal.sigma = from_vector(sd);
  return cal;
}

PovmSet PovmSet::from_elements(std::vector<CMatrixXd> elements, Analysis analysis) {
  PovmSet set;
  set.analysis = analysis;
  const auto n = static_cast<Eigen::Index>(elements.size());
  set.weights = RMatrix<double>::Identity(n, n);
  set.basis = std::move(elements);
  return set;
}

CMatrixXd PovmSet::element(Eigen::Index i) const {
  CMatrixXd e = CMatrixXd::Zero(basis.front().rows(), basis.front().cols());
  for (std::size_t k = 0; k < basis.size(); ++k)
    if (weights(static_cast<Eigen::Index>(k), i) != 0.0) e += weights(static_cast<Eigen::Index>(k), i) * basis[k];
  return e;
}

std::vector<CMatrixXd> PovmSet::elements() const {
  std::vector<CMatrixXd> out;
  out.reserve(static_cast<std::size_t>(size()));
  for (Eigen::Index i = 0; i < size(); ++i) out.push_back(element(i));
  return out;
}

double PovmSet::completeness_defect() const {
  if (basis.empty()) return 1.0;
  CMatrixXd sum = CMatrixXd::Zero(basis.front().rows(), basis.front().cols());
  const RVector<double> totals = weights.rowwise().sum();
  for (std::size_t k = 0; k < basis.size(); ++k) sum += totals(static_cast<Eigen::Index>(k)) * basis[k];
  return (sum - CMatrixXd::Identity(sum.rows(), sum.cols())).cwiseAbs().maxCoeff();
}

namespace {

int bright_ions(int spin) {
  using hilbert::Level;
  return (static_cast<Level>(spin / hilbert::kIonLevels) == Level::down ? 1 : 0) +
         (static_cast<Level>(spin % hilbert::kIonLevels) == Level::down ? 1 : 0);
}

CMatrixXd analysis_rotation(const Analysis& a) {
  return a.rotated ? hilbert::global_rotation(0.5 * kPi, a.phase)
                   : CMatrixXd::Identity(hilbert::kSpinDim, hilbert::kSpinDim);
}

}  // namespace

PovmSet build_povm(const ReferencePmfs& pmfs, const Analysis& analysis) {
  const CMatrixXd r = analysis_rotation(analysis);
  const Eigen::Index outcomes = pmfs.ions[0].size();
  PovmSet set;
  set.analysis = analysis;
  set.weights.resize(3, outcomes);
  for (int k = 0; k < 3; ++k) {
    Eigen::VectorXd proj = Eigen::VectorXd::Zero(hilbert::kSpinDim);
    for (int s = 0; s < hilbert::kSpinDim; ++s) proj(s) = bright_ions(s) == k ? 1.0 : 0.0;
    set.basis.push_back(r.adjoint() * proj.cast<cplx>().asDiagonal() * r);
    set.weights.row(k) = pmfs.ions[k].transpose();
  }
  return set;
}

PovmSet build_povm(const ReferenceModel& model, const Analysis& analysis, int max_count) {
  return build_povm(reference_pmfs(model, max_count), analysis);
}

Eigen::Vector3d bright_number_distribution(const CMatrixXd& spin_rho, const Analysis& analysis) {
  require(spin_rho.rows() == hilbert::kSpinDim && spin_rho.cols() == hilbert::kSpinDim,
          ErrorKind::dimension_mismatch, "spin state must be 9x9");
  const CMatrixXd r = analysis_rotation(analysis);
  const CMatrixXd rotated = r * spin_rho * r.adjoint();
  Eigen::Vector3d q = Eigen::Vector3d::Zero();
  for (int s = 0; s < hilbert::kSpinDim; ++s) q(bright_ions(s)) += std::max(0.0, rotated(s, s).real());
  return q / q.sum();
}

Pmf outcome_distribution(const Eigen::Vector3d& q, const ReferencePmfs& pmfs) {
  return q(0) * pmfs.ions[0] + q(1) * pmfs.ions[1] + q(2) * pmfs.ions[2];
}

CountHistogram sample_histogram(const Pmf& probs, std::int64_t n_trials, std::uint64_t seed,
                                Context context, double phase_milliradians) {
  require(n_trials >= 0, ErrorKind::invalid_argument, "n_trials must be >= 0");
  std::vector<double> cdf(static_cast<std::size_t>(probs.size()));
  double acc = 0.0;
  for (Eigen::Index k = 0; k < probs.size(); ++k) cdf[static_cast<std::size_t>(k)] = acc += std::max(0.0, probs(k));
  require(acc > 0.0, ErrorKind::invalid_argument, "outcome distribution has no mass");
  CountHistogram h;
  h.context = context;
  h.phase_milliradians = phase_milliradians;
  h.n_trials = n_trials;
  h.bins.assign(cdf.size(), 0);
  for (std::int64_t t = 0; t < n_trials; ++t) {
    const double u = static_cast<double>(stream_seed(seed, {static_cast<std::uint64_t>(t)}) >> 11) * 0x1.0p-53 * acc;
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    ++h.bins[std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1)];
  }
  return h;
}

CountHistogram synthesize_counts(const CMatrixXd& spin_rho, const ReferenceModel& model,
                                 const Analysis& analysis, std::int64_t n_trials, std::uint64_t seed,
                                 int max_count) {
  const ReferencePmfs pmfs = reference_pmfs(model, max_count);
  const Eigen::Vector3d q = bright_number_distribution(spin_rho, analysis);
  return sample_histogram(outcome_distribution(q, pmfs), n_trials, seed,
                          analysis.rotated ? Context::parity : Context::population,
                          analysis.rotated ? 1e3 * analysis.phase : 0.0);
}

CountHistogram synthesize_reference(const ReferenceModel& model, bool bright, std::int64_t n_trials,
                                    std::uint64_t seed) {
  const ReferencePmfs pmfs = reference_pmfs(model);
  const Pmf p = bright ? bright_reference_pmf(pmfs, model.leak_prob) : dark_reference_pmf(pmfs);
  return sample_histogram(p, n_trials, seed, bright ? Context::reference_bright : Context::reference_dark);
}

nlohmann::json to_json(const CountHistogram& h) {
  return {{"context", to_string(h.context)},
          {"phase_milliradians", h.phase_milliradians},
          {"n_trials", h.n_trials},
          {"bins", h.bins}};
}

CountHistogram histogram_from_json(const nlohmann::json& j) {
  try {
    CountHistogram h;
    const std::string ctx = j.at("context").get<std::string>();
    bool known = false;
    for (Context c : {Context::population, Context::parity, Context::reference_bright, Context::reference_dark}) {
      if (ctx == to_string(c)) {
        h.context = c;
        known = true;
      }
    }
    require(known, ErrorKind::invalid_spec, "unknown histogram context '" + ctx + "'");
    h.phase_milliradians = j.at("phase_milliradians").get<double>();
    h.n_trials = j.at("n_trials").get<std::int64_t>();
    h.bins = j.at("bins").get<std::vector<std::int64_t>>();
    h.validate();
    return h;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::invalid_spec, std::string("malformed histogram JSON: ") + e.what());
  }
}

}  // namespace bellgate::detect
