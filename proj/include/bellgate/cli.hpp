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

// Command-line front end: configuration, run manifests and the subcommands.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace bellgate::cli {

struct GateConfig {
  int loops = 8;
  double interaction_time_us = 580.0;
  double gradient_frequency_mhz = 5.0;
  double mode_frequency_mhz = 6.9;
  int idd_branch = 1;
  double ramp_us = 5.0;
  int segments = 8;
  std::string phase_frame = "ion2_shifted";
  double microwave_detuning_khz = 0.0;  // 0 derives it; otherwise must match the derived value
  bool addressing = false;               // follow the gate with the single-ion addressing echo
  double addressing_shift_khz = 20.0;
  double addressing_phase_rad = 0.78539816339744828;

  friend bool operator==(const GateConfig&, const GateConfig&) = default;
};

struct NoiseConfig {
  double motional_coherence_time_ms = 0.0;
  double heating_rate_quanta_per_s = 0.0;
  double qubit_detuning_khz = 0.0;
  double freq_residual_mean_hz = 0.0;
  double freq_residual_std_hz = 0.0;
  double initial_nbar = 0.0;

  friend bool operator==(const NoiseConfig&, const NoiseConfig&) = default;
};

struct SimulationConfig {
  int fock_dim = 16;
  std::string method = "analytic";
  int trotter_steps_per_loop = 64;
  int drift_samples = 500;

  friend bool operator==(const SimulationConfig&, const SimulationConfig&) = default;
};

struct ScanConfig {
  std::string kind = "parameter";  // or "idd_coherence"
  std::string parameter = "noise.qubit_detuning_khz";
  double from = -200.0;
  double to = 200.0;
  int points = 21;
  bool log_scale = true;
  double noise_rms_hz = 1000.0;
  std::vector<double> idd_off_durations_us{50, 100, 200, 400, 800, 1600};
  std::vector<double> idd_on_durations_us{1000, 4000, 16000};
  int trajectories = 100;

  friend bool operator==(const ScanConfig&, const ScanConfig&) = default;
};

struct DetectionConfig {
  double lambda_bright = 30.0;
  double lambda_dark = 1.0;
  double repump_rate = 0.005;
  double depump_rate = 0.005;
  double leak_prob = 3.5e-3;

  friend bool operator==(const DetectionConfig&, const DetectionConfig&) = default;
};

struct DatasetConfig {
  std::string id = "dataset-0001";
  std::string target_state = "symmetric";
  std::string source = "simulated";  // or "matrix"
  double fidelity = 0.9977;
  std::vector<std::vector<double>> rho_real;
  std::vector<std::vector<double>> rho_imag;
  int population_sets = 40;
  int parity_phases = 52;
  int sets_per_phase = 1;
  std::int64_t trials_per_set = 200;
  std::int64_t reference_trials = 18500;
  int count = 1;

  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

struct EstimateConfig {
  std::vector<std::string> bundles;
  std::vector<std::string> methods{"parity", "linear"};
  int n_boot = 5000;
  double mean_jitter = 0.01;
  bool leakage_correct = true;
  bool trigger_selection = false;

  friend bool operator==(const EstimateConfig&, const EstimateConfig&) = default;
};

struct BiasConfig {
  std::vector<double> fidelities{0.5, 0.9, 0.99, 0.999};
  std::vector<std::string> methods{"linear", "parity"};
  std::string target_state = "symmetric";
  int replicates = 1000;
  bool recalibrate = true;

  friend bool operator==(const BiasConfig&, const BiasConfig&) = default;
};

struct Config {
  GateConfig gate;
  NoiseConfig noise;
  SimulationConfig simulation;
  ScanConfig scan;
  DetectionConfig detection;
  DatasetConfig dataset;
  EstimateConfig estimate;
  BiasConfig bias;

  void validate() const;
  friend bool operator==(const Config&, const Config&) = default;
};

nlohmann::json to_json(const Config& c);

/// Parses and validates; every failure is a config error naming the key and,
/// when source text is given, its line.
Config config_from_json(const nlohmann::json& j, const std::string& source_text = {});
Config parse_config(const std::string& text);
Config load_config(const std::filesystem::path& path);
void save_config(const Config& c, const std::filesystem::path& path);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

enum class Format { json, csv };

struct RunOptions {
  std::string command;
  std::filesystem::path out_dir = "out";
  std::uint64_t seed = 0;
  int threads = 1;
  Format format = Format::json;
};

/// Runs one subcommand and writes its outputs plus manifest.json into
/// out_dir. Throws bellgate::Error on failure.
void run_command(const Config& config, const RunOptions& opt);

/// Full command-line entry point; returns the process exit code
/// (0 success, 2 configuration error, 3 estimation failure, 1 other).
int main_entry(int argc, char** argv);
int run_args(const std::vector<std::string>& args);

}  // namespace bellgate::cli
