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

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include <Eigen/Eigenvalues>

#include "bellgate/detect.hpp"
#include "bellgate/error.hpp"
#include "bellgate/estimate.hpp"
#include "oracles.hpp"

namespace bellgate::estimate {
namespace {

using detect::Analysis;
using detect::CountHistogram;
using detect::PovmSet;
using detect::ReferenceModel;
using detect::ReferencePmfs;

constexpr double kPi = 3.14159265358979323846;

CMatrixXd density(const oracle::Vec& v) { return v * v.adjoint(); }

CMatrixXd random_density(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  CMatrixXd g(9, 9);
  for (Eigen::Index i = 0; i < 9; ++i)
    for (Eigen::Index j = 0; j < 9; ++j) g(i, j) = {n(rng), n(rng)};
  const CMatrixXd r = g * g.adjoint();
  return r / r.trace().real();
}

// Elements sum_k P(k bright) for perfect readout, built from the oracle rotation.
PovmSet projective_povm(bool rotated, double phi) {
  const Eigen::Matrix3cd r = rotated ? oracle::rotation(kPi / 2, phi) : Eigen::Matrix3cd::Identity();
  Eigen::Matrix<std::complex<double>, 9, 9> u;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      for (int c = 0; c < 3; ++c)
        for (int d = 0; d < 3; ++d) u(3 * a + b, 3 * c + d) = r(a, c) * r(b, d);
  std::vector<CMatrixXd> el(3, CMatrixXd::Zero(9, 9));
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      const int k = (a == 0) + (b == 0);
      el[static_cast<std::size_t>(k)](3 * a + b, 3 * a + b) = 1.0;
    }
  for (CMatrixXd& e : el) e = u.adjoint() * e * u;
  return PovmSet::from_elements(std::move(el), rotated ? Analysis::pi2(phi) : Analysis::none());
}

std::vector<PovmSet> model_povms(const ReferenceModel& m, int phases) {
  std::vector<PovmSet> out{detect::build_povm(m, Analysis::none())};
  for (int k = 0; k < phases; ++k) out.push_back(detect::build_povm(m, Analysis::pi2(2 * kPi * k / phases)));
  return out;
}

Eigen::VectorXd herm_coords(const CMatrixXd& m) {
  Eigen::VectorXd v(81);
  int t = 0;
  for (int i = 0; i < 9; ++i) v(t++) = m(i, i).real();
  for (int i = 0; i < 9; ++i)
    for (int j = i + 1; j < 9; ++j) {
      v(t++) = m(i, j).real();
      v(t++) = m(i, j).imag();
    }
  return v;
}

std::array<CMatrixXd, 3> leak_projectors() {
  auto p = [](int a, int b) { return density(oracle::ket(a, b)); };
  return {p(1, 2) + p(2, 1), p(0, 2) + p(2, 0), p(2, 2)};
}

double multinomial_variance(const std::vector<Eigen::VectorXd>& probs, const std::vector<RVector<double>>& alpha) {
  double v = 0.0;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    const Eigen::VectorXd a = alpha[j].transpose();
    const double mean = probs[j].dot(a);
    v += probs[j].dot(a.cwiseAbs2()) - mean * mean;
  }
  return v;
}

std::vector<Eigen::VectorXd> outcome_probs(const std::vector<PovmSet>& povms, const CMatrixXd& rho) {
  std::vector<Eigen::VectorXd> out;
  for (const PovmSet& p : povms) {
    Eigen::VectorXd q(p.size());
    for (Eigen::Index i = 0; i < p.size(); ++i) q(i) = (p.element(i) * rho).trace().real();
    out.push_back(q);
  }
  return out;
}

TEST(Estimate, ParityExamples) {
  EXPECT_DOUBLE_EQ(parity(0.5, 0.0, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(parity(0.0, 1.0, 0.0), -1.0);
  EXPECT_DOUBLE_EQ(parity(0.25, 0.5, 0.25), 0.0);
}

TEST(Estimate, FidelityFormulas) {
  EXPECT_DOUBLE_EQ(bell_fidelity_parity(0.5, 0.5, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(bell_fidelity_parity(0.5, 0.5, 0.0), 0.5);
  EXPECT_DOUBLE_EQ(antisym_fidelity(1.0, -1.0), 1.0);
  EXPECT_DOUBLE_EQ(antisym_fidelity(0.0, 0.0), 0.0);
}

TEST(Estimate, PopulationsOfPureBright) {
  const ReferenceModel m;
  const CountHistogram h = detect::synthesize_counts(density(oracle::ket(0, 0)), m, Analysis::none(), 8000, 11);
  const Populations p = ml_populations(h, m);
  EXPECT_GT(p.p2, 0.995);
  EXPECT_NEAR(p.p0 + p.p1 + p.p2, 1.0, 1e-12);
  EXPECT_GE(std::min({p.p0, p.p1, p.p2}), 0.0);
}

TEST(Estimate, PopulationsOfBellState) {
  const ReferenceModel m;
  const CountHistogram h = detect::synthesize_counts(density(oracle::bell_phi()), m, Analysis::none(), 8000, 12);
  const Populations p = ml_populations(h, m);
  const double sigma = std::sqrt(0.25 / 8000);
  EXPECT_NEAR(p.p0, 0.5, 3 * sigma);
  EXPECT_NEAR(p.p2, 0.5, 3 * sigma);
  EXPECT_LT(p.p1, 0.01);
}

TEST(Estimate, PopulationsOfMixtureWithinMultinomialError) {
  const ReferenceModel m;
  const CMatrixXd rho = 0.25 * density(oracle::ket(0, 0)) + 0.5 * density(oracle::ket(0, 1)) +
                        0.25 * density(oracle::ket(1, 1));
  const int n = 8000;
  const std::array<double, 3> truth{0.25, 0.5, 0.25};
  std::array<double, 3> sigma{};
  for (std::size_t k = 0; k < 3; ++k) sigma[k] = std::sqrt(truth[k] * (1 - truth[k]) / n);

  const Populations one = ml_populations(detect::synthesize_counts(rho, m, Analysis::none(), n, 1), m);
  EXPECT_NEAR(one.p0, truth[0], 3 * sigma[0]);
  EXPECT_NEAR(one.p1, truth[1], 3 * sigma[1]);
  EXPECT_NEAR(one.p2, truth[2], 3 * sigma[2]);

  const int reps = 200;
  std::array<double, 3> sum{}, sum_z2{};
  for (int r = 0; r < reps; ++r) {
    const Populations p = ml_populations(detect::synthesize_counts(rho, m, Analysis::none(), n, 5000 + r), m);
    const std::array<double, 3> got{p.p0, p.p1, p.p2};
    for (std::size_t k = 0; k < 3; ++k) {
      sum[k] += got[k] - truth[k];
      sum_z2[k] += std::pow((got[k] - truth[k]) / sigma[k], 2);
    }
  }
  for (std::size_t k = 0; k < 3; ++k) {
    const double rms_z = std::sqrt(sum_z2[k] / reps);
    EXPECT_NEAR(sum[k] / reps, 0.0, 3 * rms_z * sigma[k] / std::sqrt(reps)) << k;
    EXPECT_GT(rms_z, 0.7) << k;
    EXPECT_LT(rms_z, 1.4) << k;
  }
}

TEST(Estimate, EmptyHistogramFails) {
  const ReferenceModel m;
  CountHistogram h;
  h.bins.assign(static_cast<std::size_t>(m.max_count() + 1), 0);
  try {
    ml_populations(h, m);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::estimation_failed);
  }
}

Dataset make_dataset(const CMatrixXd& rho, Target t, const DatasetShape& shape, std::uint64_t seed,
                     const ReferenceModel& m = {}) {
  return synthesize_dataset(rho, t, m, shape, "unit", seed);
}

TEST(Estimate, ParityFitOfBellStateIsMaximal) {
  const ReferenceModel m;
  const Dataset d = make_dataset(density(oracle::bell_phi()), Target::symmetric, DatasetShape{}, 5);
  const ParityFit fit = fit_parity_oscillation(d.parity, detect::reference_pmfs(m));
  EXPECT_GT(fit.amplitude, 0.98);
  EXPECT_LE(fit.amplitude, 1.0);
  EXPECT_NEAR(fit.imbalance, 0.0, 0.02);
}

TEST(Estimate, ParityFitOfHalfMixture) {
  const ReferenceModel m;
  const CMatrixXd rho = oracle::werner(oracle::bell_phi(), 0.5);
  std::vector<double> phases, exact;
  for (int k = 0; k < 52; ++k) {
    phases.push_back(2 * kPi * k / 52);
    const auto q = oracle::bright_number(rho, true, phases.back());
    exact.push_back(q[0] + q[2] - q[1]);
  }
  const double oracle_amp = oracle::ls_parity_amplitude(phases, exact);
  EXPECT_NEAR(oracle_amp, 0.5, 1e-12);
  const Dataset d = make_dataset(rho, Target::symmetric, DatasetShape{}, 6);
  const ParityFit fit = fit_parity_oscillation(d.parity, detect::reference_pmfs(m));
  EXPECT_NEAR(fit.amplitude, oracle_amp, 0.04);
}

TEST(Estimate, ParityFitOfAntisymmetricStateVanishes) {
  const ReferenceModel m;
  const Dataset d = make_dataset(density(oracle::bell_psi_minus()), Target::symmetric, DatasetShape{}, 7);
  EXPECT_LT(fit_parity_oscillation(d.parity, detect::reference_pmfs(m)).amplitude, 0.03);
}

TEST(Estimate, ParityFitNeedsFourPhases) {
  const ReferenceModel m;
  DatasetShape shape;
  shape.parity_phases = 3;
  const Dataset d = make_dataset(density(oracle::bell_phi()), Target::symmetric, shape, 8);
  try {
    fit_parity_oscillation(d.parity, detect::reference_pmfs(m));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::estimation_failed);
  }
}

TEST(Estimate, ParityFitMatchesLeastSquaresOnExactData) {
  const ReferenceModel m{200.0, 0.0, 0.0, 0.0, 0.0};
  const ReferencePmfs pmfs = detect::reference_pmfs(m);
  const CMatrixXd rho = oracle::werner(oracle::bell_phi(), 0.7);
  const double n = 1e9;
  std::vector<CountHistogram> hists;
  std::vector<double> phases, measured;
  for (int k = 0; k < 52; ++k) {
    const double phi = 2 * kPi * k / 52;
    const auto q = oracle::bright_number(rho, true, phi);
    CountHistogram h;
    h.context = detect::Context::parity;
    h.phase_milliradians = 1e3 * phi;
    double p[3] = {0, 0, 0};
    for (Eigen::Index i = 0; i < pmfs.ions[0].size(); ++i) {
      const double prob = q[0] * pmfs.ions[0](i) + q[1] * pmfs.ions[1](i) + q[2] * pmfs.ions[2](i);
      h.bins.push_back(std::llround(n * prob));
      p[i == 0 ? 0 : i < 300 ? 1 : 2] += static_cast<double>(h.bins.back());
    }
    h.n_trials = std::accumulate(h.bins.begin(), h.bins.end(), std::int64_t{0});
    hists.push_back(h);
    phases.push_back(1e-3 * h.phase_milliradians);
    measured.push_back((p[0] + p[2] - p[1]) / static_cast<double>(h.n_trials));
  }
  const double ls = oracle::ls_parity_amplitude(phases, measured);
  EXPECT_NEAR(ls, 0.7, 1e-6);
  EXPECT_NEAR(fit_parity_oscillation(hists, pmfs).amplitude, ls, 1e-6);
}

TEST(Estimate, MeanParityOfAntisymmetricState) {
  const ReferenceModel m;
  const Dataset d = make_dataset(density(oracle::bell_psi_minus()), Target::antisymmetric,
                                 DatasetShape::for_target(Target::antisymmetric), 9);
  EXPECT_EQ(d.parity.size(), 42u);
  EXPECT_NEAR(mean_parity_six_phases(d.parity, detect::reference_pmfs(m)), -1.0, 0.01);
}

TEST(Estimate, MeanParityRejectsOffGridPhases) {
  const ReferenceModel m;
  DatasetShape shape;
  shape.parity_phases = 8;
  const Dataset d = make_dataset(density(oracle::bell_psi_minus()), Target::symmetric, shape, 10);
  EXPECT_THROW(mean_parity_six_phases(d.parity, detect::reference_pmfs(m)), Error);
}

TEST(Estimate, LeakageExamples) {
  EXPECT_DOUBLE_EQ(correct_leakage(0.97, 0.0, Target::symmetric), 0.97);
  EXPECT_DOUBLE_EQ(correct_leakage(0.97, 0.0, Target::antisymmetric), 0.97);
  EXPECT_NEAR(apply_leakage(1.0, 3.5e-3, Target::symmetric), 1 - 3.5e-3 + 0.5 * 3.5e-3 * 3.5e-3, 1e-15);
  EXPECT_NEAR(apply_leakage(1.0, 3.5e-3, Target::symmetric), 0.9965, 1e-5);
  EXPECT_NEAR(apply_leakage(1.0, 1.7e-3, Target::antisymmetric), 0.99745, 5e-6);
  EXPECT_THROW(correct_leakage(0.9, 0.2, Target::symmetric), Error);
}

TEST(Estimate, LeakageRoundTrip) {
  for (Target t : {Target::symmetric, Target::antisymmetric})
    for (int i = 0; i <= 20; ++i)
      for (int j = 0; j <= 10; ++j) {
        const double f = 0.9 + 0.005 * i, eps = 0.001 * j;
        const double fm = t == Target::symmetric ? oracle::leak_forward_symmetric(f, eps)
                                                 : oracle::leak_forward_antisymmetric(f, eps);
        EXPECT_NEAR(apply_leakage(f, eps, t), fm, 1e-15);
        EXPECT_NEAR(correct_leakage(fm, eps, t), f, 1e-12);
      }
}

TEST(Estimate, LeakageCorrectionIsMonotone) {
  double prev = -1.0;
  for (int i = 0; i <= 100; ++i) {
    const double f = correct_leakage(0.9 + 0.001 * i, 0.004, Target::symmetric);
    EXPECT_GT(f, prev);
    prev = f;
  }
}

TEST(Estimate, LeakOccupanciesMatchGeneratedStates) {
  const auto ops = leak_projectors();
  const double eps = 3.5e-3;
  const GeneratedState s = with_leakage(oracle::werner(oracle::bell_phi(), 1.0), Target::symmetric, eps);
  const GeneratedState a = with_leakage(oracle::werner(oracle::bell_psi_minus(), 1.0), Target::antisymmetric, eps);
  const auto occ_s = leak_occupancies(eps, Target::symmetric);
  const auto occ_a = leak_occupancies(eps, Target::antisymmetric);
  EXPECT_NEAR(occ_s[0], 2 * eps * (1 - eps), 1e-15);
  EXPECT_EQ(occ_s[1], 0.0);
  EXPECT_NEAR(occ_s[2], eps * eps, 1e-15);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_NEAR((ops[k] * s.rho).trace().real(), occ_s[k], 1e-15);
    EXPECT_NEAR((ops[k] * a.rho).trace().real(), occ_a[k], 1e-15);
  }
  EXPECT_NEAR(s.rho.trace().real(), 1.0, 1e-14);
  EXPECT_NEAR(s.fidelity, 1.0, 1e-14);
}

TEST(Estimate, GeneratedStatesRejectBadInput) {
  CMatrixXd bad = CMatrixXd::Identity(4, 4);
  EXPECT_THROW(with_leakage(bad, Target::symmetric, 0.0), Error);
  bad = CMatrixXd::Zero(4, 4);
  bad(0, 0) = 1.5;
  bad(1, 1) = -0.5;
  EXPECT_THROW(with_leakage(bad, Target::symmetric, 0.0), Error);
  const GeneratedState w = werner_state(0.9, Target::antisymmetric, 0.0);
  EXPECT_NEAR(oracle::fidelity(w.rho, oracle::bell_psi_minus()), 0.9, 1e-12);
}

TEST(Estimate, LinearCoeffsPerfectReadoutOfProductState) {
  const LinearCoeffs c = linear_coeffs({projective_povm(false, 0.0)}, oracle::ket(0, 0));
  EXPECT_LE(c.residual, 1e-8);
  EXPECT_NEAR(c.alpha[0](0), 0.0, 1e-8);
  EXPECT_NEAR(c.alpha[0](1), 0.0, 1e-8);
  EXPECT_NEAR(c.alpha[0](2), 1.0, 1e-8);
  EXPECT_NEAR(c.variance, 0.0, 1e-12);
}

TEST(Estimate, LinearCoeffsPerfectReadoutVarianceIsMultinomial) {
  std::vector<PovmSet> povms{projective_povm(false, 0.0)};
  for (int k = 0; k < 8; ++k) povms.push_back(projective_povm(true, 2 * kPi * k / 8));
  const std::vector<double> trials(povms.size(), 1.0);
  const LinearCoeffs c = linear_coeffs(povms, oracle::bell_phi(), trials);
  EXPECT_LE(c.residual, 1e-8);
  const auto probs = outcome_probs(povms, density(oracle::bell_phi()));
  EXPECT_NEAR(c.variance, multinomial_variance(probs, c.alpha), 1e-10);
}

TEST(Estimate, LinearCoeffsInfeasibleSettings) {
  try {
    linear_coeffs({projective_povm(false, 0.0)}, oracle::bell_phi());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::feasibility);
  }
}

TEST(Estimate, LinearExactExpectationIdentity) {
  for (Target t : {Target::symmetric, Target::antisymmetric}) {
    const std::vector<PovmSet> povms = model_povms(ReferenceModel{}, t == Target::symmetric ? 52 : 6);
    const oracle::Vec psi = t == Target::symmetric ? oracle::bell_phi() : oracle::bell_psi_minus();
    const LinearCoeffs c = linear_coeffs(povms, psi);
    EXPECT_LE(c.residual, 1e-8);
    const auto ops = leak_projectors();
    std::mt19937_64 rng(42);
    for (int r = 0; r < 50; ++r) {
      const CMatrixXd rho = random_density(rng);
      const auto probs = outcome_probs(povms, rho);
      double f = 0.0;
      for (std::size_t j = 0; j < povms.size(); ++j) f += probs[j].dot(c.alpha[j].transpose());
      f -= c.A * (ops[0] * rho).trace().real() + c.B * (ops[1] * rho).trace().real() +
           c.C * (ops[2] * rho).trace().real();
      EXPECT_NEAR(f, oracle::fidelity(rho, psi), 1e-9);
    }
  }
}

TEST(Estimate, LinearCoeffsAreVarianceOptimal) {
  const std::vector<PovmSet> povms = model_povms(ReferenceModel{}, 8);
  const oracle::Vec psi = oracle::bell_phi();
  const LinearCoeffs c = linear_coeffs(povms, psi);
  const auto probs = outcome_probs(povms, density(psi));
  const double v0 = multinomial_variance(probs, c.alpha);
  EXPECT_NEAR(c.variance, v0, 1e-9 * v0);

  Eigen::Index n = 3;
  for (const PovmSet& p : povms) n += p.size();
  Eigen::MatrixXd m(81, n);
  Eigen::Index col = 0;
  for (const PovmSet& p : povms)
    for (Eigen::Index i = 0; i < p.size(); ++i) m.col(col++) = herm_coords(p.element(i));
  for (const CMatrixXd& l : leak_projectors()) m.col(col++) = -herm_coords(l);
  const Eigen::MatrixXd mmt_pinv = (m * m.transpose()).completeOrthogonalDecomposition().pseudoInverse();

  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;
  double alpha_norm = 0.0;
  for (const auto& a : c.alpha) alpha_norm += a.squaredNorm();
  alpha_norm = std::sqrt(alpha_norm);
  for (int r = 0; r < 100; ++r) {
    Eigen::VectorXd delta(n);
    for (Eigen::Index k = 0; k < n; ++k) delta(k) = g(rng);
    delta -= m.transpose() * (mmt_pinv * (m * delta));
    ASSERT_LT((m * delta).norm(), 1e-9 * delta.norm());
    delta *= 0.1 * alpha_norm / delta.norm();
    std::vector<RVector<double>> alpha = c.alpha;
    Eigen::Index k = 0;
    for (auto& a : alpha)
      for (Eigen::Index i = 0; i < a.size(); ++i) a(i) += delta(k++);
    EXPECT_GE(multinomial_variance(probs, alpha), v0 * (1 - 1e-9));
  }
}

TEST(Estimate, LinearFidelityWithoutLeakageReducesToQutritEstimator) {
  const ReferenceModel m;
  DatasetShape shape{10, 8, 1, 200, 4000};
  const Dataset d = make_dataset(oracle::werner(oracle::bell_phi(), 0.9), Target::symmetric, shape, 13);
  const SettingData sd = merge_settings(d);
  std::vector<PovmSet> povms;
  std::vector<double> trials;
  for (std::size_t j = 0; j < sd.settings.size(); ++j) {
    povms.push_back(detect::build_povm(m, sd.settings[j]));
    trials.push_back(static_cast<double>(sd.merged[j].n_trials));
  }
  const LinearCoeffs c = linear_coeffs(povms, target_ket(Target::symmetric), trials);
  double direct = 0.0;
  for (std::size_t j = 0; j < sd.merged.size(); ++j)
    for (std::size_t i = 0; i < sd.merged[j].bins.size(); ++i)
      direct += c.alpha[j](static_cast<Eigen::Index>(i)) * static_cast<double>(sd.merged[j].bins[i]) /
                static_cast<double>(sd.merged[j].n_trials);
  const FidelityEstimate e = linear_fidelity(d, c, 0.0);
  EXPECT_NEAR(e.point, direct, 1e-12);
  EXPECT_FALSE(e.truncated);
  EXPECT_THROW(linear_fidelity(make_dataset(oracle::werner(oracle::bell_phi(), 0.9), Target::symmetric,
                                            DatasetShape{10, 6, 1, 200, 4000}, 13),
                               c, 0.0),
               Error);
}

TEST(Estimate, ConsistentAtLargeSampleSize) {
  const double f_true = 0.9;
  const CMatrixXd rho = oracle::werner(oracle::bell_phi(), (4 * f_true - 1) / 3);
  const DatasetShape shape{10, 8, 1, 100000, 100000};
  const Dataset d = make_dataset(rho, Target::symmetric, shape, 14);
  BootstrapOptions opt;
  opt.n_boot = 40;
  opt.seed = 3;
  opt.mean_jitter = 0.0;
  for (const FidelityEstimate& e : bootstrap(d, {Method::parity, Method::linear}, opt)) {
    const double se = 0.5 * (e.ci_hi - e.ci_lo);
    EXPECT_GT(se, 0.0);
    EXPECT_NEAR(e.point, f_true, 3 * se) << to_string(e.method);
  }
}

TEST(Estimate, QuantileIsTypeSeven) {
  EXPECT_DOUBLE_EQ(quantile({3, 1, 2, 4}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile({3, 1, 2, 4}, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile({3, 1, 2, 4}, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(quantile({5}, 0.16), 5.0);
  EXPECT_THROW(quantile({}, 0.5), Error);
}

DatasetShape small_shape() { return {10, 12, 1, 200, 4000}; }

TEST(Estimate, SingleBootstrapCollapses) {
  const Dataset d = make_dataset(oracle::werner(oracle::bell_phi(), 0.9), Target::symmetric, small_shape(), 15);
  BootstrapOptions opt;
  opt.n_boot = 1;
  for (const FidelityEstimate& e : bootstrap(d, {Method::parity, Method::linear}, opt)) {
    EXPECT_EQ(e.ci_lo, e.ci_hi);
    EXPECT_EQ(e.median, e.ci_lo);
    EXPECT_EQ(e.mean, e.ci_lo);
    EXPECT_EQ(e.n_boot, 1);
  }
}

TEST(Estimate, BootstrapIsReproducibleAcrossThreads) {
  const Dataset d = make_dataset(oracle::werner(oracle::bell_phi(), 0.9), Target::symmetric, small_shape(), 16);
  BootstrapOptions opt;
  opt.n_boot = 24;
  opt.seed = 9;
  const FidelityEstimate a = bootstrap(d, Method::linear, opt);
  opt.threads = 4;
  const FidelityEstimate b = bootstrap(d, Method::linear, opt);
  EXPECT_EQ(to_json(a), to_json(b));
}

TEST(Estimate, TruncationNearUnitFidelity) {
  const GeneratedState s = with_leakage(oracle::werner(oracle::bell_phi(), 1.0), Target::symmetric, 3.5e-3);
  ReferenceModel m;
  m.leak_prob = 3.5e-3;
  const Dataset d = synthesize_dataset(s.rho, Target::symmetric, m, DatasetShape{}, "near-one", 17);
  BootstrapOptions opt;
  opt.n_boot = 200;
  opt.seed = 1;
  const auto cut = bootstrap(d, {Method::parity, Method::linear}, opt);
  opt.analysis.truncate = false;
  const auto raw = bootstrap(d, {Method::parity, Method::linear}, opt);
  for (std::size_t k = 0; k < 2; ++k) {
    const FidelityEstimate& e = cut[k];
    EXPECT_LE(e.ci_lo, e.median);
    EXPECT_LE(e.median, e.ci_hi);
    EXPECT_LE(e.ci_hi, 1.0);
    EXPECT_EQ(e.point, std::min(raw[k].point, 1.0));
    EXPECT_EQ(e.truncated, raw[k].point > 1.0);
    EXPECT_DOUBLE_EQ(e.ci_lo, std::min(raw[k].ci_lo, 1.0));
    EXPECT_DOUBLE_EQ(e.ci_hi, std::min(raw[k].ci_hi, 1.0));
    EXPECT_DOUBLE_EQ(e.median, std::min(raw[k].median, 1.0));
  }
  const FidelityEstimate& parity_est = cut[0];
  EXPECT_EQ(parity_est.median, 1.0);
  EXPECT_EQ(parity_est.ci_hi, 1.0);
}

TEST(Estimate, TriggerSplitSymmetric) {
  const Dataset d = make_dataset(oracle::werner(oracle::bell_phi(), 0.9), Target::symmetric, DatasetShape{}, 18);
  const auto [t1, a1] = trigger_split(d);
  const auto [t2, a2] = trigger_split(d);
  EXPECT_EQ(t1.population, t2.population);
  EXPECT_EQ(a1.parity, a2.parity);
  EXPECT_EQ(t1.population_trials(), 4000);
  EXPECT_EQ(a1.population_trials(), 4000);
  ASSERT_EQ(t1.parity.size(), 26u);
  ASSERT_EQ(a1.parity.size(), 26u);
  for (std::size_t s = 0; s < 26; ++s) {
    EXPECT_EQ(t1.parity[s], d.parity[2 * s]);
    EXPECT_EQ(a1.parity[s], d.parity[2 * s + 1]);
  }
  for (std::size_t s = 0; s < d.population.size(); ++s)
    for (std::size_t i = 0; i < d.population[s].bins.size(); ++i)
      EXPECT_EQ(t1.population[s].bins[i] + a1.population[s].bins[i], d.population[s].bins[i]);
  Dataset other = d;
  other.id = "another";
  EXPECT_NE(trigger_split(other).first.population, t1.population);
}

TEST(Estimate, TriggerSplitAntisymmetricHalvesEverySet) {
  const Dataset d = make_dataset(oracle::werner(oracle::bell_psi_minus(), 0.9), Target::antisymmetric,
                                 DatasetShape::for_target(Target::antisymmetric), 19);
  const auto [t, a] = trigger_split(d);
  ASSERT_EQ(t.parity.size(), 42u);
  for (std::size_t s = 0; s < 42; ++s) {
    EXPECT_EQ(t.parity[s].n_trials, 100);
    EXPECT_EQ(a.parity[s].n_trials, 100);
    for (std::size_t i = 0; i < d.parity[s].bins.size(); ++i)
      EXPECT_EQ(t.parity[s].bins[i] + a.parity[s].bins[i], d.parity[s].bins[i]);
  }
}

TEST(Estimate, TriggerSelectionUsesOnlyAnalysisHalf) {
  std::vector<Dataset> ds;
  for (int k = 0; k < 3; ++k)
    ds.push_back(synthesize_dataset(oracle::werner(oracle::bell_phi(), 0.9), Target::symmetric, {}, small_shape(),
                                    "set-" + std::to_string(k), 20));
  const TriggerSelection sel = select_by_trigger(ds, Method::linear);
  ASSERT_EQ(sel.trigger.size(), 3u);
  EXPECT_EQ(sel.trigger[sel.selected], *std::max_element(sel.trigger.begin(), sel.trigger.end()));
  const Dataset& chosen = ds[sel.selected];
  const ReferenceModel m =
      detect::calibrate_reference(chosen.reference_bright, chosen.reference_dark, {std::nullopt, false}).model;
  const FidelityEstimate direct = estimate_fidelity(trigger_split(chosen).second, Method::linear, m);
  EXPECT_EQ(sel.analysis.point, direct.point);
}

TEST(Estimate, SynthesizedShapes) {
  const Dataset s = make_dataset(oracle::werner(oracle::bell_phi(), 0.9), Target::symmetric, DatasetShape{}, 21);
  EXPECT_EQ(s.population.size(), 40u);
  EXPECT_EQ(s.parity.size(), 52u);
  EXPECT_EQ(s.population_trials(), 8000);
  const Dataset a = make_dataset(oracle::werner(oracle::bell_psi_minus(), 0.9), Target::antisymmetric,
                                 DatasetShape::for_target(Target::antisymmetric), 21);
  EXPECT_EQ(a.parity.size(), 42u);
  for (const CountHistogram& h : a.parity) {
    const double k = h.phase() / (kPi / 3);
    EXPECT_NEAR(k, std::round(k), 1e-9);
  }
}

TEST(Estimate, BundleRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "bellgate_bundle_test";
  std::filesystem::remove_all(dir);
  const Dataset d = make_dataset(oracle::werner(oracle::bell_phi(), 0.9), Target::symmetric, small_shape(), 22);
  write_bundle(d, dir);
  const Dataset r = read_bundle(dir);
  EXPECT_EQ(r.id, d.id);
  EXPECT_EQ(r.target, d.target);
  EXPECT_EQ(r.population, d.population);
  EXPECT_EQ(r.parity, d.parity);
  EXPECT_EQ(r.reference_bright, d.reference_bright);
  EXPECT_EQ(r.reference_dark, d.reference_dark);
  std::filesystem::remove(dir / "reference_dark.json");
  try {
    read_bundle(dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::io);
  }
  std::filesystem::remove_all(dir);
}

TEST(Estimate, EstimateJsonFields) {
  FidelityEstimate e;
  e.point = 1.0;
  e.ci_lo = 0.99;
  e.ci_hi = 1.0;
  const auto j = to_json(e);
  for (const char* k : {"method", "original", "ci68", "mean", "median", "leakage_corrected", "truncated"})
    EXPECT_TRUE(j.contains(k)) << k;
}

}  // namespace
}  // namespace bellgate::estimate
