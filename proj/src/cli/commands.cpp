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
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <openssl/evp.h>

#include "bellgate/cli.hpp"
#include "bellgate/detect.hpp"
#include "bellgate/dynamics.hpp"
#include "bellgate/error.hpp"
#include "bellgate/error_budget.hpp"
#include "bellgate/estimate.hpp"
#include "bellgate/log.hpp"
#include "bellgate/parallel.hpp"
#include "bellgate/rng.hpp"
#include "bellgate/sequence.hpp"
#include "svg.hpp"

namespace bellgate::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kVersion = "0.1.0";

std::string to_hex(const unsigned char* bytes, unsigned len) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned i = 0; i < len; ++i) {
    out += digits[bytes[i] >> 4];
    out += digits[bytes[i] & 0xf];
  }
  return out;
}

std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Every file a command produces goes through here so the manifest can list it.
class OutputDir {
 public:
  explicit OutputDir(fs::path root) : root_(std::move(root)) {
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec) fail(ErrorKind::io, "cannot create " + root_.string() + ": " + ec.message());
  }

  const fs::path& root() const { return root_; }

  void write(const std::string& rel, const std::string& content) {
    const fs::path path = root_ / rel;
    fs::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) fail(ErrorKind::io, "cannot write " + path.string());
    os << content;
    os.close();
    if (!os) fail(ErrorKind::io, "failed writing " + path.string());
    record(rel);
  }

  void write_json(const std::string& rel, const json& j) { write(rel, j.dump(2) + "\n"); }

  // Adds every regular file below rel, for directories written by library code.
  void record_tree(const std::string& rel) {
    for (const auto& entry : fs::recursive_directory_iterator(root_ / rel))
      if (entry.is_regular_file()) record(fs::relative(entry.path(), root_).generic_string());
  }

  void write_manifest(const Config& config, const RunOptions& opt, const json& extra) {
    json outputs = json::array();
    for (const std::string& rel : files_) {
      const std::string bytes = read_file(root_ / rel);
      outputs.push_back({{"file", rel}, {"sha256", sha256_hex(bytes)}, {"bytes", bytes.size()}});
    }
    json m = {{"tool", "bellgate"},
              {"version", kVersion},
              {"command", opt.command},
              {"seed", opt.seed},
              {"format", opt.format == Format::json ? "json" : "csv"},
              {"config_sha256", sha256_hex(to_json(config).dump())},
              {"config", to_json(config)},
              {"outputs", outputs}};
    if (!extra.is_null()) m["summary"] = extra;
    const fs::path path = root_ / "manifest.json";
    std::ofstream os(path, std::ios::binary);
    if (!os) fail(ErrorKind::io, "cannot write " + path.string());
    os << m.dump(2) << '\n';
  }

 private:
  void record(const std::string& rel) {
    if (std::find(files_.begin(), files_.end(), rel) == files_.end()) {
      files_.push_back(rel);
      std::sort(files_.begin(), files_.end());
    }
  }

  fs::path root_;
  std::vector<std::string> files_;
};

// A flat table, written as CSV or as a JSON array of row objects.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<json>> rows;

  json to_json() const {
    json out = json::array();
    for (const auto& r : rows) {
      json o = json::object();
      for (std::size_t c = 0; c < columns.size(); ++c) o[columns[c]] = r[c];
      out.push_back(std::move(o));
    }
    return out;
  }

  std::string to_csv() const {
    std::string out;
    auto cell = [](const json& v) -> std::string {
      if (v.is_null()) return "";
      if (v.is_string()) {
        const std::string s = v.get<std::string>();
        if (s.find_first_of(",\"\n") == std::string::npos) return s;
        std::string q = "\"";
        for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
        return q + "\"";
      }
      if (v.is_number_float()) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", v.get<double>());
        return buf;
      }
      return v.dump();
    };
    for (std::size_t c = 0; c < columns.size(); ++c) out += (c ? "," : "") + columns[c];
    out += '\n';
    for (const auto& r : rows) {
      for (std::size_t c = 0; c < r.size(); ++c) out += (c ? "," : "") + cell(r[c]);
      out += '\n';
    }
    return out;
  }
};

void write_result(OutputDir& out, const RunOptions& opt, json result, const Table& table) {
  if (opt.format == Format::csv) {
    out.write(opt.command + ".csv", table.to_csv());
  } else {
    result["rows"] = table.to_json();
    out.write_json(opt.command + ".json", result);
  }
}

struct Gate {
  dynamics::EffectiveParams params;
  sequence::GateSchedule schedule;
};

Gate make_gate(const Config& c) {
  dynamics::OperatingPoint op;
  op.loops = c.gate.loops;
  op.interaction_time = c.gate.interaction_time_us * 1e-6;
  op.omega_g = angular_mhz(c.gate.gradient_frequency_mhz);
  op.omega_r = angular_mhz(c.gate.mode_frequency_mhz);
  op.idd_branch = c.gate.idd_branch;
  Gate g;
  g.params = dynamics::derive_operating_point(op);
  sequence::EnvelopeSpec env;
  env.ramp_ns = std::llround(c.gate.ramp_us * 1e3);
  sequence::EntanglingOptions eo;
  eo.segments = c.gate.segments;
  eo.loops_per_segment = c.gate.loops / c.gate.segments;
  g.schedule = sequence::build_entangling_schedule(g.params, env, eo);
  g.schedule.frame = c.gate.phase_frame == "bare" ? sequence::PhaseFrame::bare : sequence::PhaseFrame::ion2_shifted;
  return g;
}

dynamics::NoiseSpec make_noise(const NoiseConfig& n) {
  dynamics::NoiseSpec s;
  s.motional_coherence_time = n.motional_coherence_time_ms * 1e-3;
  s.heating_rate = n.heating_rate_quanta_per_s;
  s.qubit_detuning = angular_khz(n.qubit_detuning_khz);
  s.freq_residual_mean_hz = n.freq_residual_mean_hz;
  s.freq_residual_std_hz = n.freq_residual_std_hz;
  s.initial_nbar = n.initial_nbar;
  s.validate();
  return s;
}

sequence::ExecOptions make_exec(const Config& c, const RunOptions& opt) {
  sequence::ExecOptions e;
  e.method = c.simulation.method == "numeric" ? sequence::Method::numeric : sequence::Method::analytic;
  e.trotter_steps_per_loop = c.simulation.trotter_steps_per_loop;
  e.drift_samples = c.simulation.drift_samples;
  e.seed = opt.seed;
  e.threads = opt.threads;
  return e;
}

detect::ReferenceModel make_model(const DetectionConfig& d) {
  return {d.lambda_bright, d.lambda_dark, d.repump_rate, d.depump_rate, d.leak_prob};
}

estimate::DatasetShape make_shape(const DatasetConfig& d) {
  estimate::DatasetShape s;
  s.population_sets = d.population_sets;
  s.parity_phases = d.parity_phases;
  s.sets_per_phase = d.sets_per_phase;
  s.trials_per_set = d.trials_per_set;
  s.reference_trials = d.reference_trials;
  return s;
}

json params_json(const dynamics::EffectiveParams& p) {
  return {{"omega_g_rad_s", p.omega_g}, {"omega_r_rad_s", p.omega_r}, {"Delta_rad_s", p.Delta},
          {"Omega_g_rad_s", p.Omega_g}, {"Omega_mu_rad_s", p.Omega_mu}, {"delta_rad_s", p.delta()},
          {"coupling_rad_s", dynamics::coupling_strength(p)}, {"warnings", p.warnings()}};
}

json matrix_json(const RMatrix<double>& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

struct GateRun {
  Gate gate;
  CMatrixXd spin_rho;
  double fidelity_phi = 0.0;
  std::optional<double> fidelity_psi;  // after the addressing echo
};

GateRun run_gate(const Config& c, const sequence::ExecOptions& exec) {
  GateRun r{make_gate(c), {}, 0.0, std::nullopt};
  const dynamics::NoiseSpec noise = make_noise(c.noise);
  const auto init = sequence::ground_state({c.simulation.fock_dim}, noise.initial_nbar);
  auto state = sequence::schedule_to_propagator(r.gate.schedule, r.gate.params, noise, init, exec);
  r.fidelity_phi = sequence::spin_fidelity(state, hilbert::bell_phi());
  if (c.gate.addressing) {
    const auto addr = sequence::build_addressing_schedule(angular_khz(c.gate.addressing_shift_khz), c.gate.addressing_phase_rad);
    state = sequence::execute_schedule(addr, r.gate.params, noise, state, exec);
    r.fidelity_psi = sequence::spin_fidelity(state, hilbert::bell_psi_minus());
  }
  r.spin_rho = hilbert::partial_trace_motion(state).to_density();
  return r;
}

json cmd_simulate_gate(const Config& c, const RunOptions& opt, OutputDir& out) {
  const sequence::ExecOptions exec = make_exec(c, opt);
  const GateRun run = run_gate(c, exec);
  const Gate& g = run.gate;
  const CMatrixXd& rho = run.spin_rho;

  static constexpr const char* kLabels[] = {"dd", "du", "da", "ud", "uu", "ua", "ad", "au", "aa"};
  Table table{{"quantity", "value"}, {}};
  table.rows.push_back({"fidelity_phi", run.fidelity_phi});
  table.rows.push_back({"infidelity_phi", 1.0 - run.fidelity_phi});
  if (run.fidelity_psi) table.rows.push_back({"fidelity_psi_minus", *run.fidelity_psi});
  table.rows.push_back({"duration_us", 1e-3 * static_cast<double>(g.schedule.total_duration_ns)});
  json populations = json::object();
  for (int i = 0; i < hilbert::kSpinDim; ++i) {
    populations[kLabels[i]] = rho(i, i).real();
    table.rows.push_back({std::string("population_") + kLabels[i], rho(i, i).real()});
  }

  const dynamics::NoiseSpec noise = make_noise(c.noise);
  json budget = nullptr;
  if (!noise.is_zero()) {
    const auto b = dynamics::error_budget(g.params, noise, g.schedule, {c.simulation.fock_dim}, exec);
    budget = json::array();
    for (const auto& r : b.rows) {
      budget.push_back({{"source", r.source}, {"infidelity", r.infidelity}});
      table.rows.push_back({"budget_" + r.source, r.infidelity});
    }
    table.rows.push_back({"budget_total", b.total});
  }

  out.write_json("schedule.json", sequence::to_json(g.schedule));

  // Phase-space loops of the |du> sector over the continuous drive.
  const double T = 2.0 * kPi * c.gate.loops / std::abs(g.params.Delta);
  std::vector<double> times;
  for (int k = 0; k <= 400 * c.gate.loops; ++k) times.push_back(T * k / (400.0 * c.gate.loops));
  const auto traj = dynamics::phase_space_trajectory(g.params, 2, times);
  Series s{"lambda = 2", {}, {}};
  for (const cplx& a : traj.alpha) {
    s.x.push_back(a.real());
    s.y.push_back(a.imag());
  }
  out.write("phase_space.svg", line_plot({s}, {"Motional displacement", "Re alpha", "Im alpha"}));

  json result = {{"operating_point", params_json(g.params)},
                 {"duration_ns", g.schedule.total_duration_ns},
                 {"segments", g.schedule.segments.size()},
                 {"fidelity_phi", run.fidelity_phi},
                 {"infidelity_phi", 1.0 - run.fidelity_phi},
                 {"populations", populations},
                 {"error_budget", budget}};
  json summary = {{"fidelity_phi", run.fidelity_phi}};
  if (run.fidelity_psi) {
    result["fidelity_psi_minus"] = *run.fidelity_psi;
    summary["fidelity_psi_minus"] = *run.fidelity_psi;
  }
  write_result(out, opt, result, table);
  return summary;
}

json scan_parameter(const Config& c, const RunOptions& opt, OutputDir& out) {
  const ScanConfig& sc = c.scan;
  std::string pointer = "/" + sc.parameter;
  std::replace(pointer.begin(), pointer.end(), '.', '/');
  const json::json_pointer ptr(pointer);
  std::vector<double> grid(static_cast<std::size_t>(sc.points));
  for (int i = 0; i < sc.points; ++i) grid[static_cast<std::size_t>(i)] = sc.from + (sc.to - sc.from) * i / (sc.points - 1);

  std::vector<Config> configs;
  for (double v : grid) {
    json j = to_json(c);
    j[ptr] = v;
    try {
      configs.push_back(config_from_json(j));
    } catch (const Error& e) {
      fail(ErrorKind::config, "scan.parameter: value " + std::to_string(v) + " is invalid: " + e.what());
    }
  }
  std::vector<double> infidelity(grid.size());
  sequence::ExecOptions exec = make_exec(c, opt);
  exec.threads = 1;
  parallel_for(grid.size(), opt.threads, [&](std::size_t i) {
    const GateRun r = run_gate(configs[i], exec);
    infidelity[i] = 1.0 - r.fidelity_psi.value_or(r.fidelity_phi);
  });

  Table table{{sc.parameter, "infidelity"}, {}};
  Series s{"gate", grid, {}};
  for (std::size_t i = 0; i < grid.size(); ++i) {
    table.rows.push_back({grid[i], infidelity[i]});
    s.y.push_back(std::max(infidelity[i], 1e-16));
  }
  out.write("scan.svg", line_plot({s}, {"Bell-state infidelity", sc.parameter, "infidelity", false, sc.log_scale}));
  write_result(out, opt, {{"kind", sc.kind}, {"parameter", sc.parameter}, {"target", c.gate.addressing ? "psi_minus" : "phi"}},
               table);
  const auto [lo, hi] = std::minmax_element(infidelity.begin(), infidelity.end());
  return {{"min_infidelity", *lo}, {"max_infidelity", *hi},
          {"argmin", grid[static_cast<std::size_t>(lo - infidelity.begin())]}};
}

json fit_json(const sequence::CoherenceFit& f) {
  return {{"tau_us", 1e6 * f.tau}, {"exponent", f.exponent}, {"bounded", f.bounded}, {"points_used", f.points_used}};
}

json scan_idd(const Config& c, const RunOptions& opt, OutputDir& out) {
  const ScanConfig& sc = c.scan;
  sequence::DephasingNoiseModel noise;
  noise.rms_hz = sc.noise_rms_hz;
  sequence::EchoOptions eo;
  eo.idd_branch = c.gate.idd_branch;
  eo.trajectories = sc.trajectories;
  eo.seed = opt.seed;
  eo.threads = opt.threads;

  Table table{{"idd", "duration_us", "contrast"}, {}};
  std::vector<Series> series;
  std::map<bool, sequence::CoherenceFit> fits;
  for (const bool on : {false, true}) {
    const auto& durations_us = on ? sc.idd_on_durations_us : sc.idd_off_durations_us;
    std::vector<double> durations, contrasts;
    for (double us : durations_us) {
      durations.push_back(us * 1e-6);
      contrasts.push_back(sequence::idd_echo_experiment(us * 1e-6, on, noise, eo));
      table.rows.push_back({on ? "on" : "off", us, contrasts.back()});
    }
    fits[on] = sequence::fit_coherence(durations, contrasts);
    series.push_back({on ? "IDD on" : "IDD off", durations_us, contrasts});
  }
  out.write("idd_coherence.svg", line_plot(series, {"Echo contrast", "duration (us)", "contrast", true, false}));
  const double ratio = fits[true].tau / fits[false].tau;
  json summary = {{"off", fit_json(fits[false])}, {"on", fit_json(fits[true])},
                  {"ratio", ratio}, {"ratio_is_lower_bound", fits[true].bounded}};
  write_result(out, opt, {{"kind", sc.kind}, {"noise_rms_hz", sc.noise_rms_hz}, {"fits", summary}}, table);
  return summary;
}

estimate::GeneratedState true_state(const Config& c, estimate::Target target) {
  const DatasetConfig& ds = c.dataset;
  if (ds.source == "simulated")
    return estimate::dephasing_limited_state(ds.fidelity, target, c.detection.leak_prob);
  const auto n = static_cast<Eigen::Index>(ds.rho_real.size());
  CMatrixXd rho(n, n);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index col = 0; col < n; ++col) {
      const auto ur = static_cast<std::size_t>(r), uc = static_cast<std::size_t>(col);
      rho(r, col) = {ds.rho_real[ur][uc], ds.rho_imag.empty() ? 0.0 : ds.rho_imag[ur][uc]};
    }
  if (n == hilbert::kSpinDim) {
    estimate::GeneratedState g;
    g.fidelity = (estimate::target_ket(target).adjoint() * rho * estimate::target_ket(target))(0).real();
    g.rho = rho;
    if (hilbert::hermiticity_defect(rho) > 1e-9 || std::abs(rho.trace().real() - 1.0) > 1e-6)
      fail(ErrorKind::config, "dataset.rho_real: not a unit-trace Hermitian matrix");
    return g;
  }
  try {
    return estimate::with_leakage(rho, target, c.detection.leak_prob);
  } catch (const Error& e) {
    fail(ErrorKind::config, std::string("dataset.rho_real: ") + e.what());
  }
}

json cmd_synthesize(const Config& c, const RunOptions& opt, OutputDir& out) {
  const DatasetConfig& ds = c.dataset;
  const estimate::Target target = estimate::target_from_string(ds.target_state);
  const estimate::GeneratedState state = true_state(c, target);
  const detect::ReferenceModel model = make_model(c.detection);
  const estimate::DatasetShape shape = make_shape(ds);

  std::vector<std::string> ids(static_cast<std::size_t>(ds.count));
  for (int k = 0; k < ds.count; ++k) {
    char suffix[16];
    std::snprintf(suffix, sizeof suffix, "-%03d", k);
    ids[static_cast<std::size_t>(k)] = ds.count == 1 ? ds.id : ds.id + suffix;
  }
  std::vector<estimate::Dataset> data(ids.size());
  parallel_for(ids.size(), opt.threads, [&](std::size_t k) {
    data[k] = estimate::synthesize_dataset(state.rho, target, model, shape, ids[k], stream_seed(opt.seed, {k}));
  });
  Table table{{"dataset_id", "bundle", "population_trials"}, {}};
  for (std::size_t k = 0; k < data.size(); ++k) {
    const std::string rel = "bundles/" + ids[k];
    estimate::write_bundle(data[k], out.root() / rel);
    out.record_tree(rel);
    table.rows.push_back({ids[k], rel, data[k].population_trials()});
  }

  RMatrix<double> re = state.rho.real(), im = state.rho.imag();
  json truth = {{"target_state", ds.target_state}, {"fidelity", state.fidelity},
                {"coherence_time_s", state.coherence_time}, {"leak_prob", c.detection.leak_prob},
                {"rho_real", matrix_json(re)}, {"rho_imag", matrix_json(im)}};
  out.write_json("truth.json", truth);
  write_result(out, opt, {{"target_state", ds.target_state}, {"true_fidelity", state.fidelity}}, table);
  return {{"true_fidelity", state.fidelity}, {"bundles", ids.size()}};
}

json cmd_estimate(const Config& c, const RunOptions& opt, OutputDir& out) {
  const EstimateConfig& es = c.estimate;
  if (es.bundles.empty()) fail(ErrorKind::config, "estimate.bundles: must list at least one bundle directory");
  std::vector<estimate::Dataset> data;
  for (const std::string& b : es.bundles) {
    try {
      data.push_back(estimate::read_bundle(b));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::io) throw;
      fail(ErrorKind::estimation_failed, e.what());
    }
  }
  std::vector<estimate::Method> methods;
  for (const std::string& m : es.methods) methods.push_back(estimate::method_from_string(m));

  estimate::BootstrapOptions bo;
  bo.n_boot = es.n_boot;
  bo.seed = opt.seed;
  bo.mean_jitter = es.mean_jitter;
  bo.threads = opt.threads;
  bo.analysis.leakage_correct = es.leakage_correct;

  Table table{{"dataset_id", "target_state", "method", "original", "ci_lo", "ci_hi", "mean", "median", "untruncated",
               "measured", "error"},
              {}};
  json results = json::array(), populations = json::array();
  int successes = 0;
  for (const estimate::Dataset& d : data) {
    for (const estimate::Method m : methods) {
      try {
        const estimate::FidelityEstimate e = estimate::bootstrap(d, m, bo);
        json r = estimate::to_json(e);
        r["dataset_id"] = d.id;
        results.push_back(r);
        table.rows.push_back({d.id, estimate::to_string(d.target), estimate::to_string(m), e.point, e.ci_lo, e.ci_hi,
                              e.mean, e.median, e.raw, e.measured, nullptr});
        ++successes;
      } catch (const Error& e) {
        warn(d.id + " " + estimate::to_string(m) + ": " + e.what());
        results.push_back({{"dataset_id", d.id}, {"method", estimate::to_string(m)}, {"error", e.what()}});
        table.rows.push_back({d.id, estimate::to_string(d.target), estimate::to_string(m), nullptr, nullptr, nullptr,
                              nullptr, nullptr, nullptr, nullptr, e.what()});
      }
    }
    try {
      const auto cal = detect::calibrate_reference(d.reference_bright, d.reference_dark, {std::nullopt, false});
      const auto pops = estimate::ml_populations(estimate::merge_settings(d).merged.front(), cal.model);
      populations.push_back({{"dataset_id", d.id}, {"p0", pops.p0}, {"p1", pops.p1}, {"p2", pops.p2},
                             {"lambda_bright", cal.model.lambda_bright}, {"lambda_dark", cal.model.lambda_dark}});
    } catch (const Error& e) {
      populations.push_back({{"dataset_id", d.id}, {"error", e.what()}});
    }
  }

  json result = {{"results", results}, {"populations", populations}};
  if (opt.format == Format::csv) {
    Table pt{{"dataset_id", "p0", "p1", "p2", "error"}, {}};
    for (const json& p : populations)
      pt.rows.push_back({p["dataset_id"], p.value("p0", json()), p.value("p1", json()), p.value("p2", json()),
                         p.value("error", json())});
    out.write("populations.csv", pt.to_csv());
  }
  if (es.trigger_selection) {
    json selection = json::array();
    for (const estimate::Method m : methods) {
      try {
        const auto sel = estimate::select_by_trigger(data, m, bo.analysis, opt.seed);
        const auto half = estimate::trigger_split(data[sel.selected], opt.seed).second;
        json r = estimate::to_json(estimate::bootstrap(half, m, bo));
        r["selected"] = data[sel.selected].id;
        r["trigger"] = sel.trigger;
        selection.push_back(r);
      } catch (const Error& e) {
        selection.push_back({{"method", estimate::to_string(m)}, {"error", e.what()}});
      }
    }
    result["trigger_selection"] = selection;
  }
  write_result(out, opt, result, table);
  if (successes == 0) fail(ErrorKind::estimation_failed, "no fidelity estimate succeeded; see " + opt.command + " output");
  return {{"estimates", successes}};
}

json cmd_bias_scan(const Config& c, const RunOptions& opt, OutputDir& out) {
  const BiasConfig& bc = c.bias;
  const estimate::Target target = estimate::target_from_string(bc.target_state);
  estimate::DatasetShape shape = make_shape(c.dataset);
  if (c.dataset.target_state != bc.target_state) {
    const auto t = estimate::DatasetShape::for_target(target);
    shape.parity_phases = t.parity_phases;
    shape.sets_per_phase = t.sets_per_phase;
  }
  std::vector<estimate::GeneratedState> states;
  for (double f : bc.fidelities) states.push_back(estimate::dephasing_limited_state(f, target, c.detection.leak_prob));

  Table table{{"method", "true_fidelity", "mean_estimate", "bias", "std_error", "replicates"}, {}};
  std::vector<Series> series;
  for (const std::string& name : bc.methods) {
    estimate::BiasOptions bo;
    bo.target = target;
    bo.method = estimate::method_from_string(name);
    bo.replicates = bc.replicates;
    bo.seed = opt.seed;
    bo.threads = opt.threads;
    bo.leak_prob = c.detection.leak_prob;
    bo.model = make_model(c.detection);
    bo.shape = shape;
    bo.recalibrate = bc.recalibrate;
    Series s{name, {}, {}};
    for (const auto& st : states) {
      const estimate::BiasPoint p = estimate::bias_point(st, bo);
      table.rows.push_back({name, p.true_fidelity, p.mean_estimate, p.bias, p.std_error, p.replicates});
      s.x.push_back(p.true_fidelity);
      s.y.push_back(p.bias);
    }
    series.push_back(std::move(s));
  }
  out.write("bias.svg", line_plot(series, {"Estimator bias", "true fidelity", "mean estimate - true"}));
  write_result(out, opt, {{"target_state", bc.target_state}, {"truncated", false}}, table);
  return {{"points", table.rows.size()}};
}

json cmd_error_budget(const Config& c, const RunOptions& opt, OutputDir& out) {
  const Gate g = make_gate(c);
  const dynamics::NoiseSpec noise = make_noise(c.noise);
  const auto budget = dynamics::error_budget(g.params, noise, g.schedule, {c.simulation.fock_dim}, make_exec(c, opt));
  Table table{{"source", "infidelity"}, {}};
  for (const auto& r : budget.rows) table.rows.push_back({r.source, r.infidelity});
  table.rows.push_back({"total", budget.total});
  write_result(out, opt, {{"total", budget.total}, {"ideal_infidelity", budget.ideal_infidelity}}, table);
  return {{"total", budget.total}, {"ideal_infidelity", budget.ideal_infidelity}};
}

const std::map<std::string, json (*)(const Config&, const RunOptions&, OutputDir&)>& commands() {
  static const std::map<std::string, json (*)(const Config&, const RunOptions&, OutputDir&)> table{
      {"simulate-gate", cmd_simulate_gate},
      {"scan",
       [](const Config& c, const RunOptions& o, OutputDir& d) {
         return c.scan.kind == "idd_coherence" ? scan_idd(c, o, d) : scan_parameter(c, o, d);
       }},
      {"synthesize", cmd_synthesize},
      {"estimate", cmd_estimate},
      {"bias-scan", cmd_bias_scan},
      {"error-budget", cmd_error_budget},
  };
  return table;
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::config:
    case ErrorKind::invalid_spec:
    case ErrorKind::schedule_inconsistent:
      return 2;
    case ErrorKind::estimation_failed:
    case ErrorKind::calibration_failed:
    case ErrorKind::feasibility:
      return 3;
    default:
      return 1;
  }
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    fail(ErrorKind::io, "SHA-256 computation failed");
  return to_hex(digest, len);
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

void run_command(const Config& config, const RunOptions& opt) {
  config.validate();
  const auto it = commands().find(opt.command);
  if (it == commands().end()) fail(ErrorKind::config, "unknown command '" + opt.command + "'");
  require(opt.threads >= 1, ErrorKind::config, "--threads must be >= 1");
  OutputDir out(opt.out_dir);
  json summary;
  try {
    summary = it->second(config, opt, out);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::estimation_failed) out.write_manifest(config, opt, {{"error", e.what()}});
    throw;
  }
  out.write_manifest(config, opt, summary);
}

int main_entry(int argc, char** argv) {
  CLI::App app{"bellgate: two-ion microwave gate simulation and Bell-state fidelity estimation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  std::string config_path;
  RunOptions opt;
  std::string format = "json";
  std::string save_path;
  static const std::map<std::string, std::string> kHelp{
      {"simulate-gate", "Run the entangling schedule and report the Bell-state fidelity"},
      {"scan", "Scan one numeric configuration value, or compare echo coherence with and without IDD"},
      {"synthesize", "Generate photon-count histogram bundles from a known two-ion state"},
      {"estimate", "Bootstrap fidelity estimates from histogram bundles"},
      {"bias-scan", "Measure estimator bias against known input fidelities"},
      {"error-budget", "Infidelity contributed by each configured noise source"},
  };
  for (const auto& [name, fn] : commands()) {
    (void)fn;
    CLI::App* sub = app.add_subcommand(name, kHelp.at(name));
    sub->add_option("--config", config_path, "JSON configuration file (defaults apply when omitted)")->check(CLI::ExistingFile);
    sub->add_option("--seed", opt.seed, "Base random seed");
    sub->add_option("--out", opt.out_dir, "Output directory");
    sub->add_option("--threads", opt.threads, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--format", format, "Table format")->check(CLI::IsMember({"json", "csv"}));
    sub->add_option("--save-config", save_path, "Write the effective configuration here");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  opt.command = app.get_subcommands().front()->get_name();
  opt.format = format == "csv" ? Format::csv : Format::json;

  try {
    const Config config = config_path.empty() ? Config{} : load_config(config_path);
    if (!save_path.empty()) save_config(config, save_path);
    run_command(config, opt);
    std::cout << (opt.out_dir / "manifest.json").string() << '\n';
    return 0;
  } catch (const Error& e) {
    std::cerr << "bellgate " << opt.command << ": " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "bellgate " << opt.command << ": " << e.what() << '\n';
    return 1;
  }
}

int run_args(const std::vector<std::string>& args) {
  std::vector<std::string> storage{"bellgate"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (std::string& s : storage) argv.push_back(s.data());
  return main_entry(static_cast<int>(argv.size()), argv.data());
}

}  // namespace bellgate::cli
