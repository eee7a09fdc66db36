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

#include <string>
#include <vector>

#include "bellgate/dynamics.hpp"
#include "bellgate/sequence.hpp"

namespace bellgate::dynamics {

struct BudgetRow {
  std::string source;
  double infidelity = 0.0;
};

struct ErrorBudget {
  std::vector<BudgetRow> rows;
  double total = 0.0;              // sum over rows
  double ideal_infidelity = 0.0;   // noiseless schedule against |Phi>
};

/// Bell-state infidelity of the schedule with one noise source switched on at a
/// time; sources that are off contribute 0 without being simulated.
ErrorBudget error_budget(const EffectiveParams& p, const NoiseSpec& spec,
                         const sequence::GateSchedule& schedule,
                         const hilbert::HilbertSpec& space = {},
                         const sequence::ExecOptions& opt = {});

}  // namespace bellgate::dynamics
