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

#include "bellgate/optimize.hpp"

#include <cmath>
#include <limits>
#include <memory>

#include <gsl/gsl_multimin.h>

namespace bellgate {

namespace {

double trampoline(const gsl_vector* v, void* params) {
  const auto& f = *static_cast<const Objective*>(params);
  const Eigen::Map<const Eigen::VectorXd, 0, Eigen::InnerStride<>> x(
      v->data, static_cast<Eigen::Index>(v->size), Eigen::InnerStride<>(static_cast<Eigen::Index>(v->stride)));
  const double y = f(x);
  return std::isfinite(y) ? y : std::numeric_limits<double>::max();
}

struct VectorDeleter {
  void operator()(gsl_vector* v) const { gsl_vector_free(v); }
};
struct MinimizerDeleter {
  void operator()(gsl_multimin_fminimizer* m) const { gsl_multimin_fminimizer_free(m); }
};

std::unique_ptr<gsl_vector, VectorDeleter> to_gsl(const Eigen::VectorXd& v) {
  std::unique_ptr<gsl_vector, VectorDeleter> out(gsl_vector_alloc(static_cast<std::size_t>(v.size())));
  for (Eigen::Index i = 0; i < v.size(); ++i) gsl_vector_set(out.get(), static_cast<std::size_t>(i), v(i));
  return out;
}

}  // namespace

MinimizeResult minimize_simplex(const Objective& f, const Eigen::VectorXd& x0,
                                const Eigen::VectorXd& step, double size_tol, int max_iter) {
  const auto n = static_cast<std::size_t>(x0.size());
  gsl_multimin_function fn{&trampoline, n, const_cast<Objective*>(&f)};
  auto start = to_gsl(x0);
  auto steps = to_gsl(step);
  std::unique_ptr<gsl_multimin_fminimizer, MinimizerDeleter> m(
      gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n));
  gsl_multimin_fminimizer_set(m.get(), &fn, start.get(), steps.get());

  MinimizeResult r;
  for (r.iterations = 1; r.iterations <= max_iter; ++r.iterations) {
    const int status = gsl_multimin_fminimizer_iterate(m.get());
    if (status == GSL_ENOPROG) {
      // The simplex cannot shrink further around a flat optimum.
      r.converged = true;
      break;
    }
    if (status != GSL_SUCCESS) break;
    if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(m.get()), size_tol) == GSL_SUCCESS) {
      r.converged = true;
      break;
    }
  }
  r.x.resize(x0.size());
  for (std::size_t i = 0; i < n; ++i) r.x(static_cast<Eigen::Index>(i)) = gsl_vector_get(m->x, i);
  r.value = m->fval;
  return r;
}

Eigen::MatrixXd numeric_hessian(const Objective& f, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& step) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd h(n, n);
  const double f0 = f(x);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += step(i);
    xm(i) -= step(i);
    h(i, i) = (f(xp) - 2.0 * f0 + f(xm)) / (step(i) * step(i));
    for (Eigen::Index j = 0; j < i; ++j) {
      Eigen::VectorXd pp = x, pm = x, mp = x, mm = x;
      pp(i) += step(i); pp(j) += step(j);
      pm(i) += step(i); pm(j) -= step(j);
      mp(i) -= step(i); mp(j) += step(j);
      mm(i) -= step(i); mm(j) -= step(j);
      h(i, j) = h(j, i) = (f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * step(i) * step(j));
    }
  }
  return h;
}

}  // namespace bellgate
