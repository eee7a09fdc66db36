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

#include "bellgate/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <random>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_roots.h>

#include "bellgate/dynamics.hpp"
#include "bellgate/error.hpp"
#include "bellgate/hilbert.hpp"
#include "bellgate/parallel.hpp"
#include "bellgate/rng.hpp"
#include "bellgate/sequence.hpp"

namespace bellgate::estimate {

using detect::Analysis;
using detect::Context;
using detect::CountHistogram;
using detect::ReferenceModel;
using detect::ReferencePmfs;
using hilbert::Level;
using hilbert::spin_index;

const char* to_string(Target t) { return t == Target::symmetric ? "symmetric" : "antisymmetric"; }
const char* to_string(Method m) { return m == Method::parity ? "parity" : "linear"; }

Target target_from_string(const std::string& s) {
  if (s == "symmetric") return Target::symmetric;
  if (s == "antisymmetric") return Target::antisymmetric;
  fail(ErrorKind::invalid_argument, "unknown target state '" + s + "'");
}

Method method_from_string(const std::string& s) {
  if (s == "parity") return Method::parity;
  if (s == "linear") return Method::linear;
  fail(ErrorKind::invalid_argument, "unknown estimation method '" + s + "'");
}

CVectorXd target_ket(Target t) {
  return t == Target::symmetric ? hilbert::bell_phi() : hilbert::bell_psi_minus();
}

namespace {

constexpr double kSixthTurn = kPi / 3.0;

bool on_sixth_grid(double phase) {
  const double k = phase / kSixthTurn;
  return std::abs(k - std::round(k)) < 1e-6;
}

std::int64_t phase_key(double phase_milliradians) {
  return std::llround(phase_milliradians * 1e3);
}

CountHistogram merge(const std::vector<const CountHistogram*>& hs) {
  CountHistogram out = *hs.front();
  for (std::size_t i = 1; i < hs.size(); ++i) {
    require(hs[i]->bins.size() == out.bins.size(), ErrorKind::dimension_mismatch,
            "histograms have different count ranges");
    out.n_trials += hs[i]->n_trials;
    for (std::size_t k = 0; k < out.bins.size(); ++k) out.bins[k] += hs[i]->bins[k];
  }
  return out;
}

/// Distinct phases in increasing order with their merged histograms.
std::vector<CountHistogram> merge_by_phase(const std::vector<CountHistogram>& hists) {
  std::map<std::int64_t, std::vector<const CountHistogram*>> groups;
  for (const CountHistogram& h : hists) groups[phase_key(h.phase_milliradians)].push_back(&h);
  std::vector<CountHistogram> out;
  out.reserve(groups.size());
  for (const auto& [key, members] : groups) out.push_back(merge(members));
  return out;
}

void require_matching(const CountHistogram& h, const ReferencePmfs& pmfs) {
  h.validate();
  require(static_cast<Eigen::Index>(h.bins.size()) == pmfs.ions[0].size(), ErrorKind::dimension_mismatch,
          "histogram has " + std::to_string(h.bins.size()) + " bins but the reference model has " +
              std::to_string(pmfs.ions[0].size()));
}

int histogram_max_count(const Dataset& d) { return static_cast<int>(d.population.front().bins.size()) - 1; }

}  // namespace

void Dataset::validate() const {
  require(!population.empty(), ErrorKind::invalid_argument, "dataset has no population histograms");
  const std::size_t n_bins = population.front().bins.size();
  auto check = [&](const CountHistogram& h, const char* what) {
    h.validate();
    require(h.n_trials > 0, ErrorKind::invalid_argument, std::string(what) + " set is empty");
    require(h.bins.size() == n_bins, ErrorKind::dimension_mismatch,
            std::string(what) + " histogram count range differs from the population data");
  };
  for (const CountHistogram& h : population) check(h, "population");
  for (const CountHistogram& h : parity) {
    check(h, "parity");
    if (target == Target::antisymmetric)
      require(on_sixth_grid(h.phase()), ErrorKind::invalid_argument,
              "antisymmetric parity phases must be multiples of pi/3");
  }
  reference_bright.validate();
  reference_dark.validate();
}

std::int64_t Dataset::population_trials() const {
  std::int64_t n = 0;
  for (const CountHistogram& h : population) n += h.n_trials;
  return n;
}

DatasetShape DatasetShape::for_target(Target t) {
  DatasetShape s;
  if (t == Target::antisymmetric) {
    s.parity_phases = 6;
    s.sets_per_phase = 7;
  }
  return s;
}

void DatasetShape::validate() const {
  require(population_sets > 0 && parity_phases >= 0 && sets_per_phase > 0 && trials_per_set > 0 &&
              reference_trials > 0,
          ErrorKind::invalid_argument, "dataset shape entries must be positive");
}

std::vector<double> parity_phases(const DatasetShape& shape, Target t) {
  std::vector<double> out;
  for (int k = 0; k < shape.parity_phases; ++k)
    out.push_back(t == Target::antisymmetric ? k * kSixthTurn : kTwoPi * k / shape.parity_phases);
  return out;
}

Dataset synthesize_dataset(const CMatrixXd& spin_rho, Target target, const ReferenceModel& model,
                           const DatasetShape& shape, const std::string& id, std::uint64_t seed) {
  shape.validate();
  model.validate();
  const std::uint64_t base = stream_seed(seed, {hash_label(id)});
  Dataset d;
  d.id = id;
  d.target = target;
  for (int s = 0; s < shape.population_sets; ++s)
    d.population.push_back(detect::synthesize_counts(spin_rho, model, Analysis::none(), shape.trials_per_set,
                                                     stream_seed(base, {0, static_cast<std::uint64_t>(s)})));
  std::uint64_t index = 0;
  for (double phase : parity_phases(shape, target)) {
    for (int r = 0; r < shape.sets_per_phase; ++r, ++index)
      d.parity.push_back(detect::synthesize_counts(spin_rho, model, Analysis::pi2(phase), shape.trials_per_set,
                                                   stream_seed(base, {1, index})));
  }
  d.reference_bright = detect::synthesize_reference(model, true, shape.reference_trials, stream_seed(base, {2, 0}));
  d.reference_dark = detect::synthesize_reference(model, false, shape.reference_trials, stream_seed(base, {2, 1}));
  return d;
}

Populations ml_populations(const CountHistogram& h, const ReferencePmfs& pmfs) {
  require_matching(h, pmfs);
  require(h.n_trials > 0, ErrorKind::estimation_failed, "histogram has no trials");
  std::vector<std::array<double, 3>> e;
  std::vector<double> w;
  for (std::size_t i = 0; i < h.bins.size(); ++i) {
    if (h.bins[i] == 0) continue;
    const auto k = static_cast<Eigen::Index>(i);
    e.push_back({pmfs.ions[0](k), pmfs.ions[1](k), pmfs.ions[2](k)});
    w.push_back(static_cast<double>(h.bins[i]));
  }
  const double n = std::accumulate(w.begin(), w.end(), 0.0);
  std::array<double, 3> q{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  double previous = -std::numeric_limits<double>::infinity();
  constexpr int kMaxIterations = 1000000;
  for (int it = 1; it <= kMaxIterations; ++it) {
    double ll = 0.0;
    std::array<double, 3> acc{0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < e.size(); ++i) {
      const double mix = q[0] * e[i][0] + q[1] * e[i][1] + q[2] * e[i][2];
      require(mix > 0.0, ErrorKind::estimation_failed, "count outcome impossible under the reference model");
      ll += w[i] * std::log(mix);
      for (int k = 0; k < 3; ++k) acc[static_cast<std::size_t>(k)] += w[i] * e[i][static_cast<std::size_t>(k)] / mix;
    }
    for (int k = 0; k < 3; ++k) q[static_cast<std::size_t>(k)] *= acc[static_cast<std::size_t>(k)] / n;
    const double total = q[0] + q[1] + q[2];
    for (double& x : q) x = std::max(0.0, x / total);
    if (std::abs(ll - previous) < 1e-10) return {q[0], q[1], q[2], ll, it};
    previous = ll;
  }
  fail(ErrorKind::estimation_failed, "population likelihood maximization did not converge");
}

Populations ml_populations(const CountHistogram& h, const ReferenceModel& model) {
  return ml_populations(h, detect::reference_pmfs(model, h.max_count()));
}

double parity(double p0, double p1, double p2) { return p0 + p2 - p1; }

namespace {

struct ParityData {
  std::vector<double> s, c;                 // sin 2phi, cos 2phi per phase
  std::vector<std::vector<int>> bins;       // nonzero bins per phase
  std::vector<std::vector<double>> counts;
  std::vector<double> u, v, w;              // per bin: constant, parity and imbalance parts
  double n = 0.0;
};

/// Negative log-likelihood per trial plus the log barrier of the population
/// constraints; +inf outside the feasible set.
double parity_objective(const ParityData& pd, const Eigen::Vector3d& th, double mu, double* ll_out,
                        Eigen::Vector3d* grad, Eigen::Matrix3d* hess) {
  const double amp = std::hypot(th(0), th(1));
  const double c1 = 1.0 - amp - 2.0 * th(2);
  const double c2 = 1.0 - amp + 2.0 * th(2);
  if (!(c1 > 0.0 && c2 > 0.0)) return std::numeric_limits<double>::infinity();
  double ll = 0.0;
  Eigen::Vector3d g = Eigen::Vector3d::Zero();
  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (std::size_t j = 0; j < pd.s.size(); ++j) {
    for (std::size_t t = 0; t < pd.bins[j].size(); ++t) {
      const auto i = static_cast<std::size_t>(pd.bins[j][t]);
      const double q = pd.u[i] + (th(0) * pd.s[j] + th(1) * pd.c[j]) * pd.v[i] + th(2) * pd.w[i];
      if (!(q > 0.0)) return std::numeric_limits<double>::infinity();
      const double cnt = pd.counts[j][t];
      ll += cnt * std::log(q);
      if (grad != nullptr) {
        const Eigen::Vector3d d(pd.s[j] * pd.v[i], pd.c[j] * pd.v[i], pd.w[i]);
        g += (cnt / q) * d;
        h -= (cnt / (q * q)) * d * d.transpose();
      }
    }
  }
  if (ll_out != nullptr) *ll_out = ll;
  const double f = -ll / pd.n - mu * (std::log(c1) + std::log(c2));
  if (grad != nullptr) {
    Eigen::Vector3d da = Eigen::Vector3d::Zero();
    Eigen::Matrix3d dda = Eigen::Matrix3d::Zero();
    if (amp > 0.0) {
      const Eigen::Vector2d u(th(0) / amp, th(1) / amp);
      da.head<2>() = u;
      dda.topLeftCorner<2, 2>() = (Eigen::Matrix2d::Identity() - u * u.transpose()) / amp;
    }
    Eigen::Vector3d dc1 = -da, dc2 = -da;
    dc1(2) = -2.0;
    dc2(2) = 2.0;
    *grad = -g / pd.n - mu * (dc1 / c1 + dc2 / c2);
    *hess = -h / pd.n + mu * (dc1 * dc1.transpose() / (c1 * c1) + dc2 * dc2.transpose() / (c2 * c2) +
                              dda * (1.0 / c1 + 1.0 / c2));
  }
  return f;
}

}  // namespace

ParityFit fit_parity_oscillation(const std::vector<CountHistogram>& parity_hists, const ReferencePmfs& pmfs) {
  const std::vector<CountHistogram> phases = merge_by_phase(parity_hists);
  require(phases.size() >= 4, ErrorKind::estimation_failed,
          "parity fit needs at least 4 distinct phases, got " + std::to_string(phases.size()));
  ParityData pd;
  const Eigen::Index n_bins = pmfs.ions[0].size();
  for (Eigen::Index i = 0; i < n_bins; ++i) {
    const double e0 = pmfs.ions[0](i), e1 = pmfs.ions[1](i), e2 = pmfs.ions[2](i);
    pd.u.push_back(0.25 * e0 + 0.5 * e1 + 0.25 * e2);
    pd.v.push_back(0.25 * e0 - 0.5 * e1 + 0.25 * e2);
    pd.w.push_back(0.5 * (e2 - e0));
  }
  Eigen::Matrix2d spread = Eigen::Matrix2d::Zero();
  for (const CountHistogram& h : phases) {
    require_matching(h, pmfs);
    pd.s.push_back(std::sin(2.0 * h.phase()));
    pd.c.push_back(std::cos(2.0 * h.phase()));
    spread += Eigen::Vector2d(pd.s.back(), pd.c.back()) * Eigen::Vector2d(pd.s.back(), pd.c.back()).transpose();
    pd.bins.emplace_back();
    pd.counts.emplace_back();
    for (std::size_t i = 0; i < h.bins.size(); ++i) {
      if (h.bins[i] == 0) continue;
      pd.bins.back().push_back(static_cast<int>(i));
      pd.counts.back().push_back(static_cast<double>(h.bins[i]));
    }
    pd.n += static_cast<double>(h.n_trials);
  }
  require(std::abs(spread.determinant()) > 1e-9 * spread.trace() * spread.trace(), ErrorKind::estimation_failed,
          "degenerate parity fit: phases do not resolve both quadratures");

  Eigen::Vector3d th(0.01, 0.0, 0.0);
  int iterations = 0;
  double ll = 0.0;
  for (double mu = 1e-4; mu >= 1e-12; mu *= 0.1) {
    for (int it = 0; it < 100; ++it, ++iterations) {
      Eigen::Vector3d g;
      Eigen::Matrix3d h;
      const double f = parity_objective(pd, th, mu, &ll, &g, &h);
      Eigen::LDLT<Eigen::Matrix3d> ldlt(h);
      Eigen::Vector3d step = -ldlt.solve(g);
      if (ldlt.info() != Eigen::Success || !step.allFinite() || g.dot(step) >= 0.0) step = -g;
      const double decrement = -g.dot(step);
      if (decrement < 1e-12) break;
      double t = 1.0;
      while (t > 1e-10) {
        const double ft = parity_objective(pd, th + t * step, mu, nullptr, nullptr, nullptr);
        if (ft <= f - 0.25 * t * decrement) break;
        t *= 0.5;
      }
      if (t <= 1e-10) break;
      th += t * step;
    }
  }
  parity_objective(pd, th, 0.0, &ll, nullptr, nullptr);
  require(th.allFinite(), ErrorKind::estimation_failed, "parity fit diverged");
  ParityFit fit;
  fit.amplitude = std::min(1.0, std::hypot(th(0), th(1)));
  fit.phase_offset = std::atan2(th(1), th(0));
  fit.imbalance = th(2);
  fit.log_likelihood = ll;
  fit.iterations = iterations;
  return fit;
}

double bell_fidelity_parity(double p0, double p2, double amplitude) { return 0.5 * (p0 + p2) + 0.5 * amplitude; }

double antisym_fidelity(double p1, double mean_parity) { return 0.5 * p1 - 0.5 * mean_parity; }

double mean_parity_six_phases(const std::vector<CountHistogram>& parity_hists, const ReferencePmfs& pmfs) {
  const std::vector<CountHistogram> phases = merge_by_phase(parity_hists);
  std::array<bool, 6> seen{};
  for (const CountHistogram& h : phases) {
    require(on_sixth_grid(h.phase()), ErrorKind::invalid_argument,
            "antisymmetric parity phases must be multiples of pi/3");
    const auto k = static_cast<std::size_t>(((std::llround(h.phase() / kSixthTurn) % 6) + 6) % 6);
    require(!seen[k], ErrorKind::invalid_argument, "parity phases repeat modulo 2 pi");
    seen[k] = true;
  }
  require(phases.size() == 6, ErrorKind::invalid_argument,
          "antisymmetric analysis needs six pi/3-spaced phases, got " + std::to_string(phases.size()));
  double sum = 0.0;
  for (const CountHistogram& h : phases) {
    const Populations p = ml_populations(h, pmfs);
    sum += parity(p.p0, p.p1, p.p2);
  }
  return sum / 6.0;
}

namespace {

void require_leak_range(double eps) {
  require(eps >= 0.0 && eps <= 0.1, ErrorKind::invalid_argument, "leak probability must lie in [0, 0.1]");
}

double leak_offset(double eps, Target t) {
  return t == Target::symmetric ? eps * (1.0 - eps) + 0.5 * eps * eps : 0.5 * eps * (1.0 - eps);
}

}  // namespace

double apply_leakage(double f, double eps, Target t) {
  require_leak_range(eps);
  return (1.0 - eps) * (1.0 - eps) * f + leak_offset(eps, t);
}

double correct_leakage(double f_measured, double eps, Target t) {
  require_leak_range(eps);
  return (f_measured - leak_offset(eps, t)) / ((1.0 - eps) * (1.0 - eps));
}

std::array<double, 3> leak_occupancies(double eps, Target t) {
  if (t == Target::symmetric) return {2.0 * eps * (1.0 - eps), 0.0, eps * eps};
  return {eps * (1.0 - eps), eps * (1.0 - eps), eps * eps};
}

std::array<CMatrixXd, 3> leak_operators() {
  auto proj = [](Level a, Level b) {
    CMatrixXd m = CMatrixXd::Zero(hilbert::kSpinDim, hilbert::kSpinDim);
    m(spin_index(a, b), spin_index(a, b)) = 1.0;
    return m;
  };
  return {proj(Level::up, Level::leak) + proj(Level::leak, Level::up),
          proj(Level::down, Level::leak) + proj(Level::leak, Level::down), proj(Level::leak, Level::leak)};
}

namespace {

constexpr int kHermDim = hilbert::kSpinDim * hilbert::kSpinDim;

/// Real coordinates of a Hermitian 9x9 operator: diagonal, then real and
/// imaginary parts of the upper triangle.
Eigen::VectorXd hvec(const CMatrixXd& m) {
  constexpr int d = hilbert::kSpinDim;
  constexpr int upper = d * (d - 1) / 2;
  Eigen::VectorXd v(kHermDim);
  int t = 0;
  for (int i = 0; i < d; ++i) v(i) = m(i, i).real();
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j, ++t) {
      v(d + t) = m(i, j).real();
      v(d + upper + t) = m(i, j).imag();
    }
  return v;
}

double operator_norm(const CMatrixXd& hermitian) {
  const Eigen::SelfAdjointEigenSolver<CMatrixXd> es(0.5 * (hermitian + hermitian.adjoint()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

CMatrixXd LinearCoeffs::effective_operator(const std::vector<detect::PovmSet>& povms) const {
  require(povms.size() == alpha.size(), ErrorKind::dimension_mismatch, "coefficient and POVM counts differ");
  CMatrixXd op = CMatrixXd::Zero(hilbert::kSpinDim, hilbert::kSpinDim);
  for (std::size_t j = 0; j < povms.size(); ++j) {
    const Eigen::VectorXd k_coeff = povms[j].weights * alpha[j];
    for (std::size_t k = 0; k < povms[j].basis.size(); ++k) op += k_coeff(static_cast<Eigen::Index>(k)) * povms[j].basis[k];
  }
  const auto leaks = leak_operators();
  return op - A * leaks[0] - B * leaks[1] - C * leaks[2];
}

LinearCoeffs linear_coeffs(const std::vector<detect::PovmSet>& povms, const CVectorXd& target,
                           const std::vector<double>& trials) {
  require(!povms.empty(), ErrorKind::invalid_argument, "linear estimator needs at least one setting");
  require(target.size() == hilbert::kSpinDim, ErrorKind::dimension_mismatch, "target ket must have size 9");
  require(trials.empty() || trials.size() == povms.size(), ErrorKind::dimension_mismatch,
          "one trial count per setting is required");
  constexpr double kRidge = 1e-12;
  const CVectorXd psi = target.normalized();
  const CMatrixXd rho_ref = psi * psi.adjoint();
  const std::size_t n_settings = povms.size();

  std::vector<Eigen::MatrixXd> basis_vecs(n_settings);
  std::vector<Eigen::VectorXd> probs(n_settings), inv_w(n_settings);
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(kHermDim, kHermDim);
  for (std::size_t j = 0; j < n_settings; ++j) {
    const detect::PovmSet& pv = povms[j];
    require(!pv.basis.empty() && static_cast<Eigen::Index>(pv.basis.size()) == pv.weights.rows(),
            ErrorKind::dimension_mismatch, "malformed POVM set");
    const double n_j = trials.empty() ? 1.0 : trials[j];
    require(n_j > 0.0, ErrorKind::invalid_argument, "trial counts must be positive");
    const auto k_dim = static_cast<Eigen::Index>(pv.basis.size());
    Eigen::VectorXd t(k_dim);
    basis_vecs[j].resize(kHermDim, k_dim);
    for (Eigen::Index k = 0; k < k_dim; ++k) {
      const CMatrixXd& q = pv.basis[static_cast<std::size_t>(k)];
      require(q.rows() == hilbert::kSpinDim && q.cols() == hilbert::kSpinDim, ErrorKind::dimension_mismatch,
              "POVM operators must be 9x9");
      t(k) = (psi.adjoint() * q * psi)(0).real();
      basis_vecs[j].col(k) = hvec(q);
    }
    probs[j] = (pv.weights.transpose() * t).cwiseMax(0.0);
    inv_w[j] = ((probs[j] / n_j).array() + kRidge).inverse().matrix();
    const Eigen::MatrixXd d = pv.weights * inv_w[j].asDiagonal() * pv.weights.transpose();
    s.noalias() += basis_vecs[j] * d * basis_vecs[j].transpose();
  }

  const auto leaks = leak_operators();
  Eigen::MatrixXd h(kHermDim, 4);
  h.col(0) = hvec(CMatrixXd::Identity(hilbert::kSpinDim, hilbert::kSpinDim));
  for (int k = 0; k < 3; ++k) h.col(k + 1) = -hvec(leaks[static_cast<std::size_t>(k)]);
  const Eigen::VectorXd c = hvec(rho_ref);

  std::vector<Eigen::Index> rows;
  for (Eigen::Index r = 0; r < kHermDim; ++r)
    if (s.row(r).cwiseAbs().maxCoeff() > 0.0 || h.row(r).cwiseAbs().maxCoeff() > 0.0 || c(r) != 0.0)
      rows.push_back(r);
  const auto n_rows = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd sr(n_rows, n_rows), hr(n_rows, 4);
  Eigen::VectorXd cr(n_rows);
  for (Eigen::Index a = 0; a < n_rows; ++a) {
    cr(a) = c(rows[static_cast<std::size_t>(a)]);
    hr.row(a) = h.row(rows[static_cast<std::size_t>(a)]);
    for (Eigen::Index b = 0; b < n_rows; ++b) sr(a, b) = s(rows[static_cast<std::size_t>(a)], rows[static_cast<std::size_t>(b)]);
  }

  // Free multipliers: lambda lies in the orthogonal complement of range(H),
  // where the reduced system P S P lambda = P c is solved by pseudo-inverse.
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> hqr(hr);
  const Eigen::MatrixXd qh = Eigen::MatrixXd(hqr.householderQ()).leftCols(hqr.rank());
  const Eigen::MatrixXd proj = Eigen::MatrixXd::Identity(n_rows, n_rows) - qh * qh.transpose();
  const Eigen::MatrixXd psp = proj * sr * proj;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (psp + psp.transpose()));
  const double tol = es.eigenvalues().cwiseAbs().maxCoeff() * 1e-13;
  const Eigen::VectorXd pc = proj * cr;
  Eigen::VectorXd lambda_r = Eigen::VectorXd::Zero(n_rows);
  for (Eigen::Index k = 0; k < n_rows; ++k)
    if (es.eigenvalues()(k) > tol)
      lambda_r += (es.eigenvectors().col(k).dot(pc) / es.eigenvalues()(k)) * es.eigenvectors().col(k);
  lambda_r = proj * lambda_r;
  const Eigen::Vector4d y = hr.completeOrthogonalDecomposition().solve(cr - sr * lambda_r);

  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(kHermDim);
  for (Eigen::Index a = 0; a < n_rows; ++a) lambda(rows[static_cast<std::size_t>(a)]) = lambda_r(a);

  LinearCoeffs out;
  out.A = y(1);
  out.B = y(2);
  out.C = y(3);
  double variance = 0.0;
  for (std::size_t j = 0; j < n_settings; ++j) {
    const Eigen::VectorXd beta =
        inv_w[j].asDiagonal() * (povms[j].weights.transpose() * (basis_vecs[j].transpose() * lambda));
    const double n_j = trials.empty() ? 1.0 : trials[j];
    const double mean = probs[j].dot(beta);
    variance += (probs[j].dot(beta.cwiseAbs2()) - mean * mean) / n_j;
    out.alpha.push_back(beta.array() + y(0) / static_cast<double>(n_settings));
    out.settings.push_back(povms[j].analysis);
  }
  out.variance = variance;
  out.residual = operator_norm(out.effective_operator(povms) - rho_ref);
  require(out.residual <= 1e-8, ErrorKind::feasibility,
          "measurement settings cannot represent the target; constraint residual " + std::to_string(out.residual));
  return out;
}

SettingData merge_settings(const Dataset& d) {
  SettingData sd;
  std::vector<const CountHistogram*> pop;
  for (const CountHistogram& h : d.population) pop.push_back(&h);
  CountHistogram merged = merge(pop);
  merged.context = Context::population;
  merged.phase_milliradians = 0.0;
  sd.settings.push_back(Analysis::none());
  sd.merged.push_back(std::move(merged));
  for (CountHistogram& h : merge_by_phase(d.parity)) {
    sd.settings.push_back(Analysis::pi2(h.phase()));
    sd.merged.push_back(std::move(h));
  }
  return sd;
}

namespace {

FidelityEstimate finish(Method m, Target t, double measured, double eps, bool corrected, bool truncate) {
  FidelityEstimate e;
  e.method = m;
  e.target = t;
  e.measured = measured;
  e.leakage_corrected = corrected;
  e.raw = measured;
  if (corrected) e.raw = m == Method::parity ? correct_leakage(measured, eps, t) : measured / ((1.0 - eps) * (1.0 - eps));
  e.truncated = truncate && e.raw > 1.0;
  e.point = e.truncated ? 1.0 : e.raw;
  e.ci_lo = e.ci_hi = e.mean = e.median = e.point;
  return e;
}

double linear_measured(const SettingData& sd, const LinearCoeffs& coeffs, double eps, Target t) {
  require(sd.settings.size() == coeffs.settings.size(), ErrorKind::invalid_argument,
          "dataset settings do not match the coefficient settings");
  double f = 0.0;
  for (std::size_t j = 0; j < sd.settings.size(); ++j) {
    const Analysis& a = sd.settings[j];
    const Analysis& b = coeffs.settings[j];
    require(a.rotated == b.rotated && (!a.rotated || std::abs(a.phase - b.phase) < 1e-9),
            ErrorKind::invalid_argument, "dataset settings do not match the coefficient settings");
    const CountHistogram& h = sd.merged[j];
    require(static_cast<Eigen::Index>(h.bins.size()) == coeffs.alpha[j].size(), ErrorKind::dimension_mismatch,
            "histogram count range does not match the coefficients");
    double acc = 0.0;
    for (std::size_t i = 0; i < h.bins.size(); ++i)
      acc += coeffs.alpha[j](static_cast<Eigen::Index>(i)) * static_cast<double>(h.bins[i]);
    f += acc / static_cast<double>(h.n_trials);
  }
  const auto occ = leak_occupancies(eps, t);
  return f - coeffs.A * occ[0] - coeffs.B * occ[1] - coeffs.C * occ[2];
}

FidelityEstimate estimate_with_pmfs(const Dataset& d, Method m, const ReferencePmfs& pmfs, double leak_prob,
                                    const AnalysisOptions& opt) {
  const double eps = opt.leakage_correct ? leak_prob : 0.0;
  const SettingData sd = merge_settings(d);
  if (m == Method::linear) {
    std::vector<detect::PovmSet> povms;
    std::vector<double> trials;
    for (std::size_t j = 0; j < sd.settings.size(); ++j) {
      povms.push_back(detect::build_povm(pmfs, sd.settings[j]));
      trials.push_back(static_cast<double>(sd.merged[j].n_trials));
    }
    const LinearCoeffs coeffs = linear_coeffs(povms, target_ket(d.target), trials);
    return finish(m, d.target, linear_measured(sd, coeffs, eps, d.target), eps, opt.leakage_correct, opt.truncate);
  }
  require(!d.parity.empty(), ErrorKind::estimation_failed, "parity method needs parity histograms");
  const Populations pop = ml_populations(sd.merged.front(), pmfs);
  double measured = 0.0;
  if (d.target == Target::symmetric) {
    const ParityFit fit = fit_parity_oscillation(d.parity, pmfs);
    measured = bell_fidelity_parity(pop.p0, pop.p2, fit.amplitude);
  } else {
    measured = antisym_fidelity(pop.p1, mean_parity_six_phases(d.parity, pmfs));
  }
  return finish(m, d.target, measured, eps, opt.leakage_correct, opt.truncate);
}

}  // namespace

FidelityEstimate linear_fidelity(const Dataset& d, const LinearCoeffs& coeffs, double eps) {
  require_leak_range(eps);
  return finish(Method::linear, d.target, linear_measured(merge_settings(d), coeffs, eps, d.target), eps, true,
                false);
}

FidelityEstimate estimate_fidelity(const Dataset& d, Method m, const ReferenceModel& model,
                                   const AnalysisOptions& opt) {
  d.validate();
  model.validate();
  return estimate_with_pmfs(d, m, detect::reference_pmfs(model, histogram_max_count(d)), model.leak_prob, opt);
}

double quantile(std::vector<double> values, double q) {
  require(!values.empty(), ErrorKind::invalid_argument, "quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

namespace {

CountHistogram resample(const CountHistogram& h, Rng& rng) {
  CountHistogram out = h;
  std::int64_t remaining_trials = h.n_trials;
  std::int64_t remaining_mass = std::accumulate(h.bins.begin(), h.bins.end(), std::int64_t{0});
  for (std::size_t i = 0; i < h.bins.size(); ++i) {
    if (h.bins[i] == 0 || remaining_trials == 0) {
      out.bins[i] = 0;
      continue;
    }
    if (h.bins[i] == remaining_mass) {
      out.bins[i] = remaining_trials;
    } else {
      std::binomial_distribution<std::int64_t> draw(
          remaining_trials, static_cast<double>(h.bins[i]) / static_cast<double>(remaining_mass));
      out.bins[i] = draw(rng);
    }
    remaining_trials -= out.bins[i];
    remaining_mass -= h.bins[i];
  }
  return out;
}

Dataset resample(const Dataset& d, Rng& rng) {
  Dataset out = d;
  for (CountHistogram& h : out.population) h = resample(h, rng);
  for (CountHistogram& h : out.parity) h = resample(h, rng);
  out.reference_bright = resample(d.reference_bright, rng);
  out.reference_dark = resample(d.reference_dark, rng);
  return out;
}

}  // namespace

std::vector<FidelityEstimate> bootstrap(const Dataset& d, const std::vector<Method>& methods,
                                        const BootstrapOptions& opt) {
  d.validate();
  require(opt.n_boot >= 1, ErrorKind::invalid_argument, "n_boot must be >= 1");
  require(opt.mean_jitter >= 0.0, ErrorKind::invalid_argument, "mean jitter must be >= 0");
  const int max_count = histogram_max_count(d);
  const detect::Calibration cal = detect::calibrate_reference(d.reference_bright, d.reference_dark,
                                                              {std::nullopt, false});
  std::vector<FidelityEstimate> out;
  for (Method m : methods)
    out.push_back(estimate_with_pmfs(d, m, detect::reference_pmfs(cal.model, max_count), cal.model.leak_prob,
                                     opt.analysis));

  const auto n_boot = static_cast<std::size_t>(opt.n_boot);
  std::vector<std::vector<double>> values(methods.size(), std::vector<double>(n_boot));
  parallel_for(n_boot, opt.threads, [&](std::size_t b) {
    Rng rng = make_rng(opt.seed, {hash_label(d.id), b});
    const Dataset r = resample(d, rng);
    ReferenceModel model =
        detect::calibrate_reference(r.reference_bright, r.reference_dark, {cal.model, false}).model;
    std::normal_distribution<double> jitter(0.0, opt.mean_jitter);
    model.lambda_bright *= 1.0 + jitter(rng);
    model.lambda_dark *= 1.0 + jitter(rng);
    const ReferencePmfs pmfs = detect::reference_pmfs(model, max_count);
    for (std::size_t k = 0; k < methods.size(); ++k)
      values[k][b] = estimate_with_pmfs(r, methods[k], pmfs, model.leak_prob, opt.analysis).raw;
  });

  for (std::size_t k = 0; k < methods.size(); ++k) {
    std::vector<double>& v = values[k];
    if (opt.analysis.truncate)
      for (double& x : v) x = std::min(x, 1.0);
    FidelityEstimate& e = out[k];
    e.n_boot = opt.n_boot;
    e.ci_lo = quantile(v, 0.16);
    e.ci_hi = quantile(v, 0.84);
    e.median = quantile(v, 0.5);
    e.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  }
  return out;
}

FidelityEstimate bootstrap(const Dataset& d, Method m, const BootstrapOptions& opt) {
  return bootstrap(d, std::vector<Method>{m}, opt).front();
}

namespace {

/// Splits the trials of one set uniformly at random into two halves.
std::pair<CountHistogram, CountHistogram> halve(const CountHistogram& h, Rng& rng) {
  std::vector<int> trials;
  trials.reserve(static_cast<std::size_t>(h.n_trials));
  for (std::size_t i = 0; i < h.bins.size(); ++i) trials.insert(trials.end(), static_cast<std::size_t>(h.bins[i]), static_cast<int>(i));
  std::shuffle(trials.begin(), trials.end(), rng);
  CountHistogram first = h, second = h;
  std::fill(first.bins.begin(), first.bins.end(), 0);
  std::fill(second.bins.begin(), second.bins.end(), 0);
  const std::size_t half = trials.size() / 2;
  for (std::size_t t = 0; t < trials.size(); ++t) ++(t < half ? first : second).bins[static_cast<std::size_t>(trials[t])];
  first.n_trials = static_cast<std::int64_t>(half);
  second.n_trials = static_cast<std::int64_t>(trials.size() - half);
  return {first, second};
}

}  // namespace

std::pair<Dataset, Dataset> trigger_split(const Dataset& d, std::uint64_t seed) {
  require(!d.id.empty(), ErrorKind::invalid_argument, "trigger split needs a dataset id");
  const std::uint64_t base = stream_seed(hash_label(d.id), {seed});
  Dataset trig = d, ana = d;
  trig.id = d.id + "/trigger";
  ana.id = d.id + "/analysis";
  trig.population.clear();
  ana.population.clear();
  trig.parity.clear();
  ana.parity.clear();
  for (std::size_t s = 0; s < d.population.size(); ++s) {
    Rng rng = make_rng(base, {0, s});
    auto [a, b] = halve(d.population[s], rng);
    trig.population.push_back(std::move(a));
    ana.population.push_back(std::move(b));
  }
  for (std::size_t s = 0; s < d.parity.size(); ++s) {
    if (d.target == Target::symmetric) {
      (s % 2 == 0 ? trig : ana).parity.push_back(d.parity[s]);
      continue;
    }
    Rng rng = make_rng(base, {1, s});
    auto [a, b] = halve(d.parity[s], rng);
    trig.parity.push_back(std::move(a));
    ana.parity.push_back(std::move(b));
  }
  return {trig, ana};
}

TriggerSelection select_by_trigger(const std::vector<Dataset>& datasets, Method m, const AnalysisOptions& opt,
                                   std::uint64_t seed) {
  require(!datasets.empty(), ErrorKind::invalid_argument, "no datasets to select from");
  TriggerSelection sel;
  std::vector<Dataset> analysis_halves;
  std::vector<ReferenceModel> models;
  for (const Dataset& d : datasets) {
    d.validate();
    auto [trig, ana] = trigger_split(d, seed);
    const ReferenceModel model =
        detect::calibrate_reference(d.reference_bright, d.reference_dark, {std::nullopt, false}).model;
    AnalysisOptions raw = opt;
    raw.truncate = false;
    sel.trigger.push_back(estimate_fidelity(trig, m, model, raw).raw);
    analysis_halves.push_back(std::move(ana));
    models.push_back(model);
  }
  sel.selected = static_cast<std::size_t>(std::max_element(sel.trigger.begin(), sel.trigger.end()) - sel.trigger.begin());
  sel.analysis = estimate_fidelity(analysis_halves[sel.selected], m, models[sel.selected], opt);
  return sel;
}

namespace {

CMatrixXd spin_projector(Level a, Level b) {
  CMatrixXd m = CMatrixXd::Zero(hilbert::kSpinDim, hilbert::kSpinDim);
  m(spin_index(a, b), spin_index(a, b)) = 1.0;
  return m;
}

/// First-order leakage on the symmetric gate output, then the ideal addressing
/// step for the antisymmetric target.
GeneratedState finish_state(const CMatrixXd& qubit_rho, Target t, double eps, double coherence_time) {
  require_leak_range(eps);
  CMatrixXd rho = (1.0 - eps) * (1.0 - eps) * qubit_rho +
                  eps * (1.0 - eps) * (spin_projector(Level::up, Level::leak) + spin_projector(Level::leak, Level::up)) +
                  eps * eps * spin_projector(Level::leak, Level::leak);
  if (t == Target::antisymmetric) {
    const auto p = dynamics::derive_operating_point();
    const sequence::GateSchedule addr = sequence::build_addressing_schedule(angular_khz(20.0), 0.25 * kPi);
    rho = sequence::execute_schedule(addr, p, {}, hilbert::QuantumState::from_density(rho, 1)).density();
  }
  GeneratedState g;
  const CVectorXd psi = target_ket(t);
  g.fidelity = (psi.adjoint() * rho * psi)(0).real() / ((1.0 - eps) * (1.0 - eps));
  g.rho = std::move(rho);
  g.coherence_time = coherence_time;
  return g;
}

struct GateFidelityContext {
  dynamics::EffectiveParams params;
  sequence::GateSchedule schedule;
  hilbert::HilbertSpec spec;
  double target = 0.0;
};

CMatrixXd dephased_gate_output(const GateFidelityContext& ctx, double coherence_time) {
  dynamics::NoiseSpec noise;
  noise.motional_coherence_time = coherence_time;
  sequence::ExecOptions eo;
  eo.trotter_steps_per_loop = 32;
  const auto out = sequence::schedule_to_propagator(ctx.schedule, ctx.params, noise, sequence::ground_state(ctx.spec), eo);
  return hilbert::partial_trace_motion(out).density();
}

double gate_fidelity_gap(double log_tau, void* raw) {
  const auto* ctx = static_cast<const GateFidelityContext*>(raw);
  const CMatrixXd rho = dephased_gate_output(*ctx, std::exp(log_tau));
  const CVectorXd phi = hilbert::bell_phi();
  return (phi.adjoint() * rho * phi)(0).real() - ctx->target;
}

}  // namespace

GeneratedState with_leakage(const CMatrixXd& qubit_rho, Target t, double eps) {
  require_leak_range(eps);
  require(qubit_rho.rows() == qubit_rho.cols() && (qubit_rho.rows() == 4 || qubit_rho.rows() == hilbert::kSpinDim),
          ErrorKind::dimension_mismatch, "density matrix must be 4x4 or 9x9");
  CMatrixXd q = CMatrixXd::Zero(hilbert::kSpinDim, hilbert::kSpinDim);
  if (qubit_rho.rows() == 4) {
    constexpr std::array<Level, 2> lv{Level::down, Level::up};
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c)
        q(spin_index(lv[static_cast<std::size_t>(r / 2)], lv[static_cast<std::size_t>(r % 2)]),
          spin_index(lv[static_cast<std::size_t>(c / 2)], lv[static_cast<std::size_t>(c % 2)])) = qubit_rho(r, c);
  } else {
    q = qubit_rho;
  }
  require(hilbert::hermiticity_defect(q) < 1e-9, ErrorKind::invalid_argument, "density matrix is not Hermitian");
  require(std::abs(q.trace().real() - 1.0) < 1e-6, ErrorKind::invalid_argument, "density matrix must have unit trace");
  const Eigen::SelfAdjointEigenSolver<CMatrixXd> es(q, Eigen::EigenvaluesOnly);
  require(es.eigenvalues().minCoeff() > -1e-9, ErrorKind::invalid_argument, "density matrix is not positive");
  const Level first_leaked = t == Target::symmetric ? Level::up : Level::down;
  CMatrixXd rho = (1.0 - eps) * (1.0 - eps) * q +
                  eps * (1.0 - eps) * (spin_projector(first_leaked, Level::leak) + spin_projector(Level::leak, Level::up)) +
                  eps * eps * spin_projector(Level::leak, Level::leak);
  GeneratedState g;
  const CVectorXd psi = target_ket(t);
  g.fidelity = (psi.adjoint() * q * psi)(0).real();
  g.rho = std::move(rho);
  return g;
}

GeneratedState werner_state(double fidelity, Target t, double eps) {
  require(fidelity >= 0.25 && fidelity <= 1.0, ErrorKind::invalid_argument, "Werner fidelity must lie in [1/4, 1]");
  const double p = (4.0 * fidelity - 1.0) / 3.0;
  const CVectorXd phi = hilbert::bell_phi();
  CMatrixXd qubit = p * phi * phi.adjoint();
  for (Level a : {Level::down, Level::up})
    for (Level b : {Level::down, Level::up}) qubit += 0.25 * (1.0 - p) * spin_projector(a, b);
  return finish_state(qubit, t, eps, 0.0);
}

GeneratedState dephasing_limited_state(double fidelity, Target t, double eps, int fock_dim) {
  require(fidelity > 0.0 && fidelity <= 1.0, ErrorKind::invalid_argument, "fidelity must lie in (0, 1]");
  GateFidelityContext ctx;
  ctx.params = dynamics::derive_operating_point();
  ctx.schedule = sequence::build_entangling_schedule(ctx.params, {});
  ctx.spec.fock_dim = fock_dim;
  ctx.spec.validate();
  ctx.target = fidelity;
  constexpr double kShortest = 1e-5, kLongest = 100.0;
  if (gate_fidelity_gap(std::log(kShortest), &ctx) > 0.0) return werner_state(fidelity, t, eps);
  if (gate_fidelity_gap(std::log(kLongest), &ctx) < 0.0) return finish_state(dephased_gate_output(ctx, 0.0), t, eps, 0.0);

  gsl_function fn{&gate_fidelity_gap, &ctx};
  const auto deleter = [](gsl_root_fsolver* s) { gsl_root_fsolver_free(s); };
  std::unique_ptr<gsl_root_fsolver, decltype(deleter)> solver(gsl_root_fsolver_alloc(gsl_root_fsolver_brent), deleter);
  gsl_root_fsolver_set(solver.get(), &fn, std::log(kShortest), std::log(kLongest));
  double log_tau = 0.0;
  for (int it = 0; it < 60; ++it) {
    gsl_root_fsolver_iterate(solver.get());
    log_tau = gsl_root_fsolver_root(solver.get());
    const double lo = gsl_root_fsolver_x_lower(solver.get()), hi = gsl_root_fsolver_x_upper(solver.get());
    if (gsl_root_test_interval(lo, hi, 0.0, 1e-6) == GSL_SUCCESS) break;
  }
  const double tau = std::exp(log_tau);
  return finish_state(dephased_gate_output(ctx, tau), t, eps, tau);
}

BiasPoint bias_point(const GeneratedState& state, const BiasOptions& opt) {
  require(opt.replicates >= 2, ErrorKind::invalid_argument, "bias estimation needs at least 2 replicates");
  ReferenceModel model = opt.model;
  model.leak_prob = opt.leak_prob;
  const auto n = static_cast<std::size_t>(opt.replicates);
  std::vector<double> est(n);
  const AnalysisOptions ao{true, opt.truncate};
  parallel_for(n, opt.threads, [&](std::size_t r) {
    const Dataset d = synthesize_dataset(state.rho, opt.target, model, opt.shape, "replicate",
                                         stream_seed(opt.seed, {r}));
    const ReferenceModel fitted =
        opt.recalibrate
            ? detect::calibrate_reference(d.reference_bright, d.reference_dark, {model, false}).model
            : model;
    est[r] = estimate_fidelity(d, opt.method, fitted, ao).point;
  });
  BiasPoint bp;
  bp.true_fidelity = state.fidelity;
  bp.replicates = opt.replicates;
  bp.mean_estimate = std::accumulate(est.begin(), est.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double x : est) ss += (x - bp.mean_estimate) * (x - bp.mean_estimate);
  bp.std_error = std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
  bp.bias = bp.mean_estimate - bp.true_fidelity;
  return bp;
}

std::vector<BiasPoint> bias_harness(const std::vector<double>& true_fidelities, const BiasOptions& opt) {
  std::vector<BiasPoint> out;
  for (double f : true_fidelities)
    out.push_back(bias_point(dephasing_limited_state(f, opt.target, opt.leak_prob), opt));
  return out;
}

namespace {

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream os(path);
  require(static_cast<bool>(os), ErrorKind::io, "cannot write " + path.string());
  os << j.dump(1) << '\n';
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), ErrorKind::io, "cannot read " + path.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::io, path.string() + ": " + e.what());
  }
}

std::string numbered(const char* stem, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%03zu.json", stem, i);
  return buf;
}

}  // namespace

void write_bundle(const Dataset& d, const std::filesystem::path& dir) {
  d.validate();
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["dataset_id"] = d.id;
  manifest["target_state"] = to_string(d.target);
  std::vector<double> phases;
  for (const CountHistogram& h : merge_by_phase(d.parity)) phases.push_back(h.phase());
  manifest["phases"] = phases;
  manifest["reference_files"] = {{"bright", "reference_bright.json"}, {"dark", "reference_dark.json"}};
  write_json(dir / "reference_bright.json", detect::to_json(d.reference_bright));
  write_json(dir / "reference_dark.json", detect::to_json(d.reference_dark));
  std::vector<std::string> pop, par;
  for (std::size_t i = 0; i < d.population.size(); ++i) {
    pop.push_back(numbered("population", i));
    write_json(dir / pop.back(), detect::to_json(d.population[i]));
  }
  for (std::size_t i = 0; i < d.parity.size(); ++i) {
    par.push_back(numbered("parity", i));
    write_json(dir / par.back(), detect::to_json(d.parity[i]));
  }
  manifest["population_files"] = pop;
  manifest["parity_files"] = par;
  write_json(dir / "manifest.json", manifest);
}

Dataset read_bundle(const std::filesystem::path& dir) {
  const nlohmann::json m = read_json(dir / "manifest.json");
  Dataset d;
  try {
    d.id = m.at("dataset_id").get<std::string>();
    d.target = target_from_string(m.at("target_state").get<std::string>());
    require(m.contains("reference_files") && m["reference_files"].contains("bright") &&
                m["reference_files"].contains("dark"),
            ErrorKind::io, "bundle manifest lists no reference data");
    const auto ref = [&](const char* key) {
      const std::filesystem::path p = dir / m["reference_files"][key].get<std::string>();
      require(std::filesystem::exists(p), ErrorKind::io, "missing reference data " + p.string());
      return detect::histogram_from_json(read_json(p));
    };
    d.reference_bright = ref("bright");
    d.reference_dark = ref("dark");
    for (const auto& f : m.value("population_files", std::vector<std::string>{}))
      d.population.push_back(detect::histogram_from_json(read_json(dir / f)));
    for (const auto& f : m.value("parity_files", std::vector<std::string>{}))
      d.parity.push_back(detect::histogram_from_json(read_json(dir / f)));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::io, "malformed bundle manifest: " + std::string(e.what()));
  }
  d.validate();
  return d;
}

nlohmann::json to_json(const FidelityEstimate& e) {
  return {{"method", to_string(e.method)},
          {"target_state", to_string(e.target)},
          {"original", e.point},
          {"untruncated", e.raw},
          {"measured", e.measured},
          {"ci68", {e.ci_lo, e.ci_hi}},
          {"mean", e.mean},
          {"median", e.median},
          {"n_boot", e.n_boot},
          {"leakage_corrected", e.leakage_corrected},
          {"truncated", e.truncated}};
}

}  // namespace bellgate::estimate
