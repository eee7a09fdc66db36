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

#pragma once

#include <functional>

#include <Eigen/Dense>

namespace bellgate {

using Objective = std::function<double(const Eigen::VectorXd&)>;

struct MinimizeResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Derivative-free simplex minimization (GSL nmsimplex2).
MinimizeResult minimize_simplex(const Objective& f, const Eigen::VectorXd& x0,
                                const Eigen::VectorXd& step, double size_tol = 1e-9,
                                int max_iter = 20000);

/// Central-difference Hessian with per-coordinate steps.
Eigen::MatrixXd numeric_hessian(const Objective& f, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& step);

}  // namespace bellgate
