#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "arrestmap/dataset.hpp"

namespace arrestmap {

struct SynthConfig {
  int n_subjects = 8;
  int electrodes_per_subject = 64;
  double critical_fraction = 0.17;  // of valid electrodes
  double tested_fraction = 0.75;    // electrodes that receive an ESM pair
  double invalid_fraction = 0.02;
  // Trials per task; the default keeps the 2:1:1:2:2 split of 400 trials.
  std::map<Task, int> trials_per_task{{Task::AR, 100}, {Task::AN, 50}, {Task::SC, 50},
                                      {Task::WR, 100}, {Task::PN, 100}};
  double sample_rate = 512.0;
  double effect_size = 5.0;
  double noise_std = 1.0;
  std::uint64_t seed = 1;

  // Shape of the planted signal; amplitudes scale with effect_size.
  double burst_gain = 0.06;          // time-locked 70-150 Hz burst on critical electrodes
  double latent_gain = 0.1;          // shared 70-150 Hz source on coupled electrodes
  double burst_center_s = 0.2;       // after onset
  double burst_width_s = 0.08;       // Gaussian sigma
  double burst_jitter_s = 0.05;      // per-trial latency ~ U[-j, j]
  double response_prob_min = 0.3;    // per-electrode response probability ~ U[min, 1]
  // Non-critical electrodes that respond on every trial with a weaker burst.
  double distractor_fraction = 0.0;
  double distractor_gain = 0.4;      // relative to the critical burst
  // Ceilings of P(coupled to the shared source) for critical / non-critical
  // electrodes and of P(critical lands in a language region). All three are
  // scaled by 1 - exp(-effect_size / noise_std).
  double coupling_specificity = 0.8;
  double coupling_false_rate = 0.05;
  double region_specificity = 0.9;
  std::vector<int> language_regions{3, 8, 16, 17, 22, 25};
  double common_mode_std = 0.5;      // relative to noise_std, removed by CAR
  double trial_spacing_s = 1.0;
  double trial_jitter_s = 0.1;

  void validate() const;
  nlohmann::json to_json() const;
  static SynthConfig from_json(const nlohmann::json& j);
};

struct PlantedTruth {
  // Per subject: electrode id -> planted criticality (valid electrodes only).
  std::map<std::string, std::map<int, bool>> critical;
  // Per subject: electrode id -> label derive_labels must return.
  std::map<std::string, std::map<int, ElectrodeLabel>> labels;
};

struct SynthOutput {
  Dataset dataset;
  PlantedTruth truth;
};

// Deterministic in the config: every subject draws from its own seed stream.
SynthOutput generate_dataset(const SynthConfig& config, unsigned threads = 0);

// Writes the dataset plus `generator.json` (config and planted labels).
void write_synthetic_dataset(const SynthOutput& output, const SynthConfig& config,
                             const std::filesystem::path& root);

}  // namespace arrestmap
