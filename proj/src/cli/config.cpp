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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <utility>

#include "bellgate/cli.hpp"
#include "bellgate/detect.hpp"
#include "bellgate/dynamics.hpp"
#include "bellgate/error.hpp"

namespace bellgate::cli {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(GateConfig, loops, interaction_time_us, gradient_frequency_mhz,
                                                mode_frequency_mhz, idd_branch, ramp_us, segments, phase_frame,
                                                microwave_detuning_khz, addressing, addressing_shift_khz,
                                                addressing_phase_rad)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(NoiseConfig, motional_coherence_time_ms, heating_rate_quanta_per_s,
                                                qubit_detuning_khz, freq_residual_mean_hz, freq_residual_std_hz,
                                                initial_nbar)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SimulationConfig, fock_dim, method, trotter_steps_per_loop,
                                                drift_samples)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ScanConfig, kind, parameter, from, to, points, log_scale, noise_rms_hz,
                                                idd_off_durations_us, idd_on_durations_us, trajectories)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DetectionConfig, lambda_bright, lambda_dark, repump_rate,
                                                depump_rate, leak_prob)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DatasetConfig, id, target_state, source, fidelity, rho_real,
                                                rho_imag, population_sets, parity_phases, sets_per_phase,
                                                trials_per_set, reference_trials, count)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EstimateConfig, bundles, methods, n_boot, mean_jitter,
                                                leakage_correct, trigger_selection)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(BiasConfig, fidelities, methods, target_state, replicates,
                                                recalibrate)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(Config, gate, noise, simulation, scan, detection, dataset, estimate,
                                                bias)

namespace {

struct Issue {
  std::string key;
  std::string message;
};

bool one_of(const std::string& v, std::initializer_list<const char*> allowed) {
  return std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return v == a; });
}

bool valid_methods(const std::vector<std::string>& ms) {
  return !ms.empty() && std::all_of(ms.begin(), ms.end(), [](const std::string& m) { return one_of(m, {"parity", "linear"}); });
}

bool square_of(const std::vector<std::vector<double>>& m, std::size_t n) {
  return m.size() == n && std::all_of(m.begin(), m.end(), [&](const auto& row) { return row.size() == n; });
}

std::optional<Issue> first_issue(const Config& c) {
  auto scan_target = [](const std::string& path) {
    if (path.rfind("scan.", 0) == 0) return false;
    const nlohmann::json defaults = nlohmann::json(Config{});
    const nlohmann::json::json_pointer ptr("/" + [&] {
      std::string p = path;
      std::replace(p.begin(), p.end(), '.', '/');
      return p;
    }());
    return defaults.contains(ptr) && defaults.at(ptr).is_number();
  };
  auto bad = [](std::string key, std::string message) { return std::optional<Issue>(Issue{std::move(key), std::move(message)}); };
  const GateConfig& g = c.gate;
  if (g.loops < 1) return bad("gate.loops", "must be >= 1");
  if (!(g.interaction_time_us > 0.0)) return bad("gate.interaction_time_us", "must be positive");
  if (!(g.gradient_frequency_mhz > 0.0)) return bad("gate.gradient_frequency_mhz", "must be positive");
  if (!(g.mode_frequency_mhz > 0.0)) return bad("gate.mode_frequency_mhz", "must be positive");
  if (g.idd_branch < 1) return bad("gate.idd_branch", "must be >= 1");
  if (g.ramp_us < 0.0) return bad("gate.ramp_us", "must be >= 0");
  if (g.segments < 1 || (g.segments & (g.segments - 1)) != 0) return bad("gate.segments", "must be a power of two");
  if (g.loops % g.segments != 0) return bad("gate.loops", "must be a multiple of gate.segments");
  if (!one_of(g.phase_frame, {"ion2_shifted", "bare"})) return bad("gate.phase_frame", "must be ion2_shifted or bare");
  if (g.addressing && g.addressing_shift_khz == 0.0) return bad("gate.addressing_shift_khz", "must be non-zero");
  if (g.microwave_detuning_khz != 0.0) {
    try {
      const double derived = dynamics::derive_operating_point({g.loops, 1e-6 * g.interaction_time_us,
                                                               angular_mhz(g.gradient_frequency_mhz),
                                                               angular_mhz(g.mode_frequency_mhz), g.idd_branch})
                                 .delta() / angular_khz(1.0);
      if (std::abs(g.microwave_detuning_khz - derived) > 1e-9 * std::abs(derived))
        return bad("gate.microwave_detuning_khz", "inconsistent with the derived value " + std::to_string(derived) + " kHz");
    } catch (const Error& e) {
      return bad("gate", e.what());
    }
  }

  const NoiseConfig& n = c.noise;
  if (n.motional_coherence_time_ms < 0.0) return bad("noise.motional_coherence_time_ms", "must be >= 0");
  if (n.heating_rate_quanta_per_s < 0.0) return bad("noise.heating_rate_quanta_per_s", "must be >= 0");
  if (n.freq_residual_std_hz < 0.0) return bad("noise.freq_residual_std_hz", "must be >= 0");
  if (n.initial_nbar < 0.0) return bad("noise.initial_nbar", "must be >= 0");

  const SimulationConfig& s = c.simulation;
  if (s.fock_dim < 2) return bad("simulation.fock_dim", "must be >= 2");
  if (!one_of(s.method, {"analytic", "numeric"})) return bad("simulation.method", "must be analytic or numeric");
  if (s.trotter_steps_per_loop < 1) return bad("simulation.trotter_steps_per_loop", "must be >= 1");
  if (s.drift_samples < 1) return bad("simulation.drift_samples", "must be >= 1");

  const ScanConfig& sc = c.scan;
  if (!one_of(sc.kind, {"parameter", "idd_coherence"})) return bad("scan.kind", "must be parameter or idd_coherence");
  if (sc.kind == "parameter" && !scan_target(sc.parameter)) return bad("scan.parameter", "does not name a numeric setting");
  if (sc.points < 2) return bad("scan.points", "must be >= 2");
  if (!(sc.from < sc.to)) return bad("scan.to", "must exceed scan.from");
  if (!(sc.noise_rms_hz > 0.0)) return bad("scan.noise_rms_hz", "must be positive");
  if (sc.trajectories < 1) return bad("scan.trajectories", "must be >= 1");
  for (const auto* durations : {&sc.idd_off_durations_us, &sc.idd_on_durations_us})
    if (durations->empty() || std::any_of(durations->begin(), durations->end(), [](double d) { return !(d > 0.0); }))
      return bad(durations == &sc.idd_off_durations_us ? "scan.idd_off_durations_us" : "scan.idd_on_durations_us",
                 "must be a non-empty list of positive durations");

  const DetectionConfig& d = c.detection;
  try {
    detect::ReferenceModel{d.lambda_bright, d.lambda_dark, d.repump_rate, d.depump_rate, d.leak_prob}.validate();
  } catch (const Error& e) {
    return bad("detection", e.what());
  }

  const DatasetConfig& ds = c.dataset;
  if (ds.id.empty()) return bad("dataset.id", "must not be empty");
  if (!one_of(ds.target_state, {"symmetric", "antisymmetric"})) return bad("dataset.target_state", "must be symmetric or antisymmetric");
  if (!one_of(ds.source, {"simulated", "matrix"})) return bad("dataset.source", "must be simulated or matrix");
  if (!(ds.fidelity >= 0.25 && ds.fidelity <= 1.0)) return bad("dataset.fidelity", "must lie in [0.25, 1]");
  if (ds.source == "matrix") {
    const std::size_t dim = ds.rho_real.size();
    if (!(dim == 4 || dim == 9) || !square_of(ds.rho_real, dim)) return bad("dataset.rho_real", "must be a 4x4 or 9x9 matrix");
    if (!ds.rho_imag.empty() && !square_of(ds.rho_imag, dim)) return bad("dataset.rho_imag", "must match dataset.rho_real");
  }
  if (ds.population_sets < 1) return bad("dataset.population_sets", "must be >= 1");
  if (ds.parity_phases < 0) return bad("dataset.parity_phases", "must be >= 0");
  if (ds.target_state == "antisymmetric" && ds.parity_phases != 6)
    return bad("dataset.parity_phases", "must be 6 for the antisymmetric target");
  if (ds.sets_per_phase < 1) return bad("dataset.sets_per_phase", "must be >= 1");
  if (ds.trials_per_set < 2) return bad("dataset.trials_per_set", "must be >= 2");
  if (ds.reference_trials < 1000) return bad("dataset.reference_trials", "must be >= 1000");
  if (ds.count < 1) return bad("dataset.count", "must be >= 1");

  const EstimateConfig& es = c.estimate;
  if (!valid_methods(es.methods)) return bad("estimate.methods", "must list parity and/or linear");
  if (es.n_boot < 1) return bad("estimate.n_boot", "must be >= 1");
  if (es.mean_jitter < 0.0) return bad("estimate.mean_jitter", "must be >= 0");

  const BiasConfig& b = c.bias;
  if (!valid_methods(b.methods)) return bad("bias.methods", "must list parity and/or linear");
  if (!one_of(b.target_state, {"symmetric", "antisymmetric"})) return bad("bias.target_state", "must be symmetric or antisymmetric");
  if (b.fidelities.empty() || std::any_of(b.fidelities.begin(), b.fidelities.end(), [](double f) { return !(f >= 0.25 && f <= 1.0); }))
    return bad("bias.fidelities", "must be a non-empty list within [0.25, 1]");
  if (b.replicates < 2) return bad("bias.replicates", "must be >= 2");
  return std::nullopt;
}

int line_of_offset(const std::string& text, std::size_t offset) {
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(std::min(offset, text.size())), '\n'));
}

/// Line of a dotted key path in the source text, 0 when it cannot be found.
int locate(const std::string& text, const std::string& path) {
  if (text.empty()) return 0;
  std::size_t pos = 0;
  std::stringstream ss(path);
  std::string part;
  while (std::getline(ss, part, '.')) {
    const std::size_t hit = text.find('"' + part + '"', pos);
    if (hit == std::string::npos) return pos == 0 ? 0 : line_of_offset(text, pos);
    pos = hit;
  }
  return line_of_offset(text, pos);
}

[[noreturn]] void config_error(const std::string& text, const std::string& key, const std::string& message) {
  const int line = locate(text, key);
  fail(ErrorKind::config, (line > 0 ? "line " + std::to_string(line) + ": " : std::string()) + key + ": " + message);
}

const char* type_name(const nlohmann::json& j) {
  if (j.is_boolean()) return "boolean";
  if (j.is_number()) return "number";
  if (j.is_string()) return "string";
  if (j.is_array()) return "array";
  if (j.is_object()) return "object";
  return "null";
}

void check_shape(const nlohmann::json& input, const nlohmann::json& reference, const std::string& prefix,
                 const std::string& text) {
  for (const auto& [key, value] : input.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!reference.contains(key)) config_error(text, path, "unknown key");
    const nlohmann::json& ref = reference.at(key);
    const bool same = std::string(type_name(value)) == type_name(ref);
    if (!same) config_error(text, path, std::string("expected ") + type_name(ref) + ", got " + type_name(value));
    if (ref.is_number_integer() && !value.is_number_integer()) config_error(text, path, "expected an integer");
    if (ref.is_object()) check_shape(value, ref, path, text);
  }
}

}  // namespace

void Config::validate() const {
  if (const auto issue = first_issue(*this)) fail(ErrorKind::config, issue->key + ": " + issue->message);
}

nlohmann::json to_json(const Config& c) { return nlohmann::json(c); }

Config config_from_json(const nlohmann::json& j, const std::string& source_text) {
  if (!j.is_object()) fail(ErrorKind::config, "configuration must be a JSON object");
  check_shape(j, nlohmann::json(Config{}), "", source_text);
  Config c;
  try {
    c = j.get<Config>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::config, e.what());
  }
  if (const auto issue = first_issue(c)) config_error(source_text, issue->key, issue->message);
  return c;
}

Config parse_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::config, "line " + std::to_string(line_of_offset(text, e.byte == 0 ? 0 : e.byte - 1)) +
                                ": malformed JSON: " + e.what());
  }
  return config_from_json(j, text);
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::config, "cannot read configuration " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const Error& e) {
    fail(ErrorKind::config, path.string() + ": " + std::string(e.what()).substr(std::string("config: ").size()));
  }
}

void save_config(const Config& c, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) fail(ErrorKind::io, "cannot write " + path.string());
  os << to_json(c).dump(2) << '\n';
}

}  // namespace bellgate::cli
