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

#include "bellgate/error_budget.hpp"

namespace bellgate::dynamics {

namespace {

double bell_infidelity(const EffectiveParams& p, const NoiseSpec& noise,
                       const sequence::GateSchedule& schedule, const hilbert::HilbertSpec& space,
                       const sequence::ExecOptions& opt) {
  const hilbert::QuantumState init = sequence::ground_state(space, noise.initial_nbar);
  const hilbert::QuantumState out = sequence::schedule_to_propagator(schedule, p, noise, init, opt);
  return 1.0 - sequence::spin_fidelity(out, hilbert::bell_phi());
}

}  // namespace

ErrorBudget error_budget(const EffectiveParams& p, const NoiseSpec& spec,
                         const sequence::GateSchedule& schedule, const hilbert::HilbertSpec& space,
                         const sequence::ExecOptions& opt) {
  spec.validate();
  ErrorBudget budget;
  budget.ideal_infidelity = bell_infidelity(p, NoiseSpec{}, schedule, space, opt);

  auto add = [&](const char* name, bool on, auto&& configure) {
    BudgetRow row{name, 0.0};
    if (on) {
      NoiseSpec only;
      configure(only);
      row.infidelity = bell_infidelity(p, only, schedule, space, opt);
    }
    budget.total += row.infidelity;
    budget.rows.push_back(row);
  };
  add("motional_dephasing", spec.motional_coherence_time > 0.0,
      [&](NoiseSpec& n) { n.motional_coherence_time = spec.motional_coherence_time; });
  add("heating", spec.heating_rate > 0.0, [&](NoiseSpec& n) { n.heating_rate = spec.heating_rate; });
  add("frequency_drift", spec.has_drift(), [&](NoiseSpec& n) {
    n.freq_residual_mean_hz = spec.freq_residual_mean_hz;
    n.freq_residual_std_hz = spec.freq_residual_std_hz;
  });
  add("qubit_detuning", spec.qubit_detuning != 0.0,
      [&](NoiseSpec& n) { n.qubit_detuning = spec.qubit_detuning; });
  add("thermal_occupation", spec.initial_nbar > 0.0,
      [&](NoiseSpec& n) { n.initial_nbar = spec.initial_nbar; });
  return budget;
}

}  // namespace bellgate::dynamics
