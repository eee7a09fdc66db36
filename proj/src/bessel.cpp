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

#include "bellgate/bessel.hpp"

#include <cmath>

#include <gsl/gsl_sf_bessel.h>

#include "bellgate/error.hpp"

namespace bellgate {

double bessel_j(int n, double x) {
  require(n >= 0, ErrorKind::invalid_argument, "Bessel order must be >= 0");
  if (x < 0.0) return (n % 2 == 0 ? 1.0 : -1.0) * std::cyl_bessel_j(static_cast<double>(n), -x);
  return std::cyl_bessel_j(static_cast<double>(n), x);
}

double bessel_j0_zero(int k) {
  require(k >= 1, ErrorKind::invalid_argument, "Bessel zero index must be >= 1");
  return gsl_sf_bessel_zero_J0(static_cast<unsigned>(k));
}

}  // namespace bellgate
