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

#include <random>

#include <Eigen/Eigenvalues>

#include "bellgate/detect.hpp"
#include "bellgate/hilbert.hpp"
#include "oracles.hpp"

namespace bellgate::detect {
namespace {

using hilbert::Level;

double mean_of(const Pmf& p) {
  double m = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k) m += static_cast<double>(k) * p(k);
  return m;
}

CMatrixXd projector(Level a, Level b) {
  const CVectorXd v = hilbert::spin_ket(a, b);
  return v * v.adjoint();
}

TEST(Detect, PmfsAreNormalized) {
  const ReferencePmfs pmfs = reference_pmfs(ReferenceModel{});
  for (const Pmf* p : {&pmfs.bright, &pmfs.dark, &pmfs.ions[0], &pmfs.ions[1], &pmfs.ions[2]}) {
    EXPECT_NEAR(p->sum(), 1.0, 1e-12);
    EXPECT_GE(p->minCoeff(), 0.0);
  }
}

TEST(Detect, NoPumpingGivesPoisson) {
  const ReferenceModel m{30.0, 1.0, 0.0, 0.0, 0.0};
  const ReferencePmfs pmfs = reference_pmfs(m);
  const int top = m.max_count();
  const Pmf two = poisson_pmf(60.0, top);
  EXPECT_LT((pmfs.ions[2] - two).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_NEAR(pmfs.ions[2](0), std::exp(-60.0), 1e-40);
  EXPECT_NEAR(pmfs.ions[2](0) / std::exp(-60.0), 1.0, 1e-9);
  const Pmf one_each = poisson_pmf(31.0, top);
  EXPECT_LT((pmfs.ions[1] - one_each).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Detect, MaxCountRule) {
  EXPECT_EQ(ReferenceModel{}.max_count(), static_cast<int>(std::ceil(60.0 + 8.0 * std::sqrt(60.0))));
}

TEST(Detect, DepumpingLowersBrightMeanAsSimulated) {
  const ReferenceModel m{30.0, 1.0, 0.0, 0.01, 0.0};
  const ReferencePmfs pmfs = reference_pmfs(m);
  const double mean = mean_of(pmfs.bright);
  EXPECT_LT(mean, 30.0);
  const auto [mc, se] = oracle::mc_bright_mean({30.0, 1.0, 0.0, 0.01}, 1000000, 42);
  EXPECT_NEAR(mean, mc, 3.0 * se);
}

TEST(Detect, PovmCompleteAndPositiveForRandomModels) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const ReferenceModel m{10.0 + 30.0 * u(rng), 0.1 + 2.0 * u(rng), 0.02 * u(rng), 0.02 * u(rng), 0.0};
    const Analysis a = trial % 3 == 0 ? Analysis::none() : Analysis::pi2(kTwoPi * u(rng));
    const PovmSet povm = build_povm(m, a);
    EXPECT_LT(povm.completeness_defect(), 1e-10) << trial;
    for (const CMatrixXd& e : povm.elements()) {
      const Eigen::SelfAdjointEigenSolver<CMatrixXd> es(e, Eigen::EigenvaluesOnly);
      ASSERT_GE(es.eigenvalues().minCoeff(), -1e-10) << trial;
    }
  }
}

TEST(Detect, PerfectDiscriminationLimit) {
  const ReferenceModel m{400.0, 0.0, 0.0, 0.0, 0.0};
  const PovmSet povm = build_povm(m, Analysis::none());
  CMatrixXd high = CMatrixXd::Zero(9, 9), mid = CMatrixXd::Zero(9, 9);
  for (Eigen::Index i = 0; i < povm.size(); ++i) {
    if (i >= 566) high += povm.element(i);
    if (i > 0 && i < 566) mid += povm.element(i);
  }
  EXPECT_LT((high - projector(Level::down, Level::down)).norm(), 1e-9);
  const CMatrixXd one_bright = projector(Level::down, Level::up) + projector(Level::up, Level::down) +
                               projector(Level::down, Level::leak) + projector(Level::leak, Level::down);
  EXPECT_LT((mid - one_bright).norm(), 1e-9);
}

TEST(Detect, LeakedStatesLookDark) {
  const PovmSet povm = build_povm(ReferenceModel{}, Analysis::none());
  const CMatrixXd uu = projector(Level::up, Level::up);
  for (const CMatrixXd& other : {projector(Level::up, Level::leak), projector(Level::leak, Level::up),
                                 projector(Level::leak, Level::leak)})
    for (Eigen::Index i = 0; i < povm.size(); ++i) {
      const CMatrixXd e = povm.element(i);
      EXPECT_NEAR((e * uu).trace().real(), (e * other).trace().real(), 1e-15);
    }
}

TEST(Detect, RotationMatchesOracle) {
  const CMatrixXd rho = oracle::werner(oracle::bell_phi(), 0.7);
  for (double phi : {0.0, 0.3, 1.9}) {
    const Eigen::Vector3d lib = bright_number_distribution(rho, Analysis::pi2(phi));
    const auto ref = oracle::bright_number(rho, true, phi);
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(lib(k), ref[static_cast<std::size_t>(k)], 1e-14);
  }
}

TEST(Detect, PovmProbabilitiesMatchSampling) {
  const ReferenceModel m{};
  oracle::Mat rho = oracle::werner(oracle::bell_phi(), 0.8) * 0.98;
  rho(oracle::index(1, 2, 0, 1), oracle::index(1, 2, 0, 1)) += 0.01;
  rho(oracle::index(2, 2, 0, 1), oracle::index(2, 2, 0, 1)) += 0.01;
  const double phi = 0.3;
  const PovmSet povm = build_povm(m, Analysis::pi2(phi));
  std::vector<double> p(static_cast<std::size_t>(povm.size()));
  for (Eigen::Index i = 0; i < povm.size(); ++i) p[static_cast<std::size_t>(i)] = (povm.element(i) * rho).trace().real();

  const long shots = 100000;
  const auto bright = oracle::bright_number(rho, true, phi);
  std::uint64_t state = 99;
  const std::array<int, 4> edges{0, 6, 45, static_cast<int>(povm.size())};
  std::array<long, 3> freq{0, 0, 0};
  for (long s = 0; s < shots; ++s) {
    const double r = oracle::uniform(state);
    const int k = r < bright[0] ? 0 : (r < bright[0] + bright[1] ? 1 : 2);
    const long c = std::min<long>(oracle::sample_counts(k, {m.lambda_bright, m.lambda_dark, m.repump_rate, m.depump_rate}, state),
                                  povm.size() - 1);
    for (int g = 0; g < 3; ++g)
      if (c >= edges[static_cast<std::size_t>(g)] && c < edges[static_cast<std::size_t>(g) + 1]) ++freq[static_cast<std::size_t>(g)];
  }
  for (int g = 0; g < 3; ++g) {
    double pg = 0.0;
    for (int i = edges[static_cast<std::size_t>(g)]; i < edges[static_cast<std::size_t>(g) + 1]; ++i) pg += p[static_cast<std::size_t>(i)];
    const double sigma = std::sqrt(pg * (1 - pg) / shots);
    EXPECT_NEAR(static_cast<double>(freq[static_cast<std::size_t>(g)]) / shots, pg, 3.0 * sigma) << g;
  }
}

TEST(Detect, SynthesisIsReproducible) {
  const CMatrixXd rho = projector(Level::down, Level::down);
  const CountHistogram a = synthesize_counts(rho, ReferenceModel{}, Analysis::none(), 5000, 17);
  const CountHistogram b = synthesize_counts(rho, ReferenceModel{}, Analysis::none(), 5000, 17);
  const CountHistogram c = synthesize_counts(rho, ReferenceModel{}, Analysis::none(), 5000, 18);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  std::int64_t total = 0;
  for (auto v : a.bins) total += v;
  EXPECT_EQ(total, 5000);
}

TEST(Detect, BothBrightIsPoissonOfTwiceTheMean) {
  const ReferenceModel m{30.0, 0.0, 0.0, 0.0, 0.0};
  const long n = 20000;
  const CountHistogram h = synthesize_counts(projector(Level::down, Level::down), m, Analysis::none(), n, 3);
  double mean = 0.0;
  for (std::size_t k = 0; k < h.bins.size(); ++k) mean += static_cast<double>(k * static_cast<std::size_t>(h.bins[k]));
  mean /= n;
  EXPECT_NEAR(mean, 60.0, 3.0 * std::sqrt(60.0 / n));
}

TEST(Detect, HistogramJsonRoundTrip) {
  CountHistogram h = synthesize_counts(projector(Level::up, Level::down), ReferenceModel{}, Analysis::pi2(0.5), 300, 1);
  h.context = Context::parity;
  h.phase_milliradians = 500.0;
  const CountHistogram back = histogram_from_json(nlohmann::json::parse(to_json(h).dump()));
  EXPECT_EQ(back, h);
  nlohmann::json bad = to_json(h);
  bad["n_trials"] = 301;
  EXPECT_THROW(histogram_from_json(bad), Error);
}

TEST(Detect, CalibrationRecoversModel) {
  const ReferenceModel truth{30.0, 1.0, 0.005, 0.005, 3.5e-3};
  const long n = 18500;
  const CountHistogram bright = synthesize_reference(truth, true, n, 101);
  const CountHistogram dark = synthesize_reference(truth, false, n, 202);
  const Calibration cal = calibrate_reference(bright, dark);
  EXPECT_NEAR(cal.model.lambda_bright, truth.lambda_bright, 3.0 * cal.sigma.lambda_bright);
  EXPECT_NEAR(cal.model.lambda_dark, truth.lambda_dark, 3.0 * cal.sigma.lambda_dark);
  EXPECT_NEAR(cal.model.leak_prob, truth.leak_prob, 3.0 * cal.sigma.leak_prob);
  EXPECT_NEAR(cal.model.repump_rate, truth.repump_rate, 3.0 * cal.sigma.repump_rate);
  EXPECT_NEAR(cal.model.depump_rate, truth.depump_rate, 3.0 * cal.sigma.depump_rate);
  EXPECT_GT(cal.sigma.leak_prob, 0.0);
}

TEST(Detect, CalibrationWithoutLeakage) {
  const ReferenceModel truth{30.0, 1.0, 0.005, 0.005, 0.0};
  const Calibration cal =
      calibrate_reference(synthesize_reference(truth, true, 18500, 7), synthesize_reference(truth, false, 18500, 8));
  EXPECT_LE(cal.model.leak_prob, 2.0 * cal.sigma.leak_prob + 1e-12);
}

TEST(Detect, PooledCalibrationPrecision) {
  // Nine reference runs pooled together resolve the leak rate to about 2e-4.
  for (double eps : {1.7e-3, 3.5e-3}) {
    const ReferenceModel truth{30.0, 1.0, 0.005, 0.005, eps};
    const long n = 9 * 18500;
    const Calibration cal =
        calibrate_reference(synthesize_reference(truth, true, n, 31), synthesize_reference(truth, false, n, 32));
    EXPECT_LT(cal.sigma.leak_prob, 3e-4) << eps;
    EXPECT_NEAR(cal.model.leak_prob, eps, 3.0 * cal.sigma.leak_prob) << eps;
  }
}

TEST(Detect, DegenerateReferenceFails) {
  CountHistogram bright{Context::reference_bright, 0.0, 2000, std::vector<std::int64_t>(123, 0)};
  CountHistogram dark{Context::reference_dark, 0.0, 2000, std::vector<std::int64_t>(123, 0)};
  bright.bins[60] = 2000;
  dark.bins[60] = 2000;
  try {
    calibrate_reference(bright, dark);
    FAIL() << "expected calibration failure";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::calibration_failed);
  }
}

}  // namespace
}  // namespace bellgate::detect
