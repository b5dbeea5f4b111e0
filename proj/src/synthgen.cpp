#include "arrestmap/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "arrestmap/binary_io.hpp"
#include "arrestmap/error.hpp"
#include "arrestmap/parallel.hpp"
#include "arrestmap/signal.hpp"

namespace arrestmap {

namespace {

const std::vector<std::string>& region_names() {
  static const std::vector<std::string> names{
      "caudalmiddlefrontal", "cuneus",          "fusiform",          "inferiorparietal",
      "inferiortemporal",    "isthmuscingulate", "lateraloccipital",  "lateralorbitofrontal",
      "middletemporal",      "medialorbitofrontal", "paracentral",    "parahippocampal",
      "parsorbitalis",       "pericalcarine",   "posteriorcingulate", "precuneus",
      "parsopercularis",     "parstriangularis", "rostralanteriorcingulate", "rostralmiddlefrontal",
      "superiorfrontal",     "superiorparietal", "superiortemporal",  "insula",
      "precentral",          "supramarginal"};
  return names;
}

const std::vector<std::string>& word_list() {
  static const std::vector<std::string> words{
      "apple", "bridge", "candle", "desert", "engine", "forest", "garden", "hammer",
      "island", "jacket", "kettle", "ladder", "mirror", "needle", "orange", "pencil",
      "rabbit", "saddle", "tunnel", "window"};
  return words;
}

using Rng = std::mt19937_64;

std::vector<double> white(Rng& rng, std::size_t n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> x(n);
  for (double& v : x) v = normal(rng);
  return x;
}

void scale_to_std(std::vector<double>& x, double target) {
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(x.size()));
  const double k = sd > 0.0 ? target / sd : 0.0;
  for (double& v : x) v = (v - mean) * k;
}

// Power proportional to 1/f, no DC.
std::vector<double> pink_noise(Rng& rng, std::size_t n, double fs, double sd) {
  auto x = spectral_filter(white(rng, n), fs, [](double f) { return f > 0.0 ? 1.0 / std::sqrt(f) : 0.0; });
  scale_to_std(x, sd);
  return x;
}

std::vector<double> band_noise(Rng& rng, std::size_t n, double fs, double lo, double hi) {
  auto x = spectral_filter(white(rng, n), fs, [=](double f) { return f >= lo && f <= hi ? 1.0 : 0.0; });
  scale_to_std(x, 1.0);
  return x;
}

struct ElectrodePlan {
  bool critical = false;
  bool tested = false;
  double response_prob = 1.0;
  double gain = 1.0;
  double coupling = 1.0;
  double burst = 0.0;  // burst amplitude relative to burst_gain * effect * noise
};

Subject make_subject(const SynthConfig& c, int index, PlantedTruth& truth,
                     const std::string& id) {
  Rng rng(mix_seed(c.seed, static_cast<std::uint64_t>(index) + 1));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n = c.electrodes_per_subject;
  const double fs = c.sample_rate;
  const bool planted = c.effect_size > 0.0;

  Subject s;
  s.id = id;
  for (int e = 0; e < n; ++e) s.electrodes.push_back({e, 0, unit(rng) >= c.invalid_fraction});
  std::vector<int> valid;
  for (const auto& e : s.electrodes) {
    if (e.valid) valid.push_back(e.id);
  }
  // Keep enough valid electrodes for two tested criticals and two tested non-criticals.
  for (int e = 0; static_cast<int>(valid.size()) < 4 && e < n; ++e) {
    if (!s.electrodes[static_cast<std::size_t>(e)].valid) {
      s.electrodes[static_cast<std::size_t>(e)].valid = true;
      valid.push_back(e);
    }
  }
  std::sort(valid.begin(), valid.end());

  std::vector<ElectrodePlan> plan(static_cast<std::size_t>(n));
  std::vector<int> order = valid;
  std::shuffle(order.begin(), order.end(), rng);
  const int n_valid = static_cast<int>(valid.size());
  const int n_crit = std::clamp(static_cast<int>(std::lround(c.critical_fraction * n_valid)), 2, n_valid - 2);
  for (int k = 0; k < n_crit; ++k) plan[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])].critical = true;

  // Planted structure fades in with the effect: none at all when it is zero.
  const double ramp = planted ? 1.0 - std::exp(-c.effect_size / c.noise_std) : 0.0;
  int tested_crit = 0, tested_non = 0;
  for (int e : order) {
    auto& p = plan[static_cast<std::size_t>(e)];
    p.tested = unit(rng) < c.tested_fraction;
    p.response_prob = c.response_prob_min + (1.0 - c.response_prob_min) * unit(rng);
    p.gain = 0.8 + 0.4 * unit(rng);
    const double couple_p = (p.critical ? c.coupling_specificity : c.coupling_false_rate) * ramp;
    const double strength = 0.6 + 0.4 * unit(rng);
    p.coupling = planted && unit(rng) < couple_p ? strength : 0.0;
    const bool distractor = unit(rng) < c.distractor_fraction;
    if (planted && p.critical) {
      p.burst = 1.0;
    } else if (planted && distractor) {
      // Speech-responsive but not critical: weaker, on every trial.
      p.burst = c.distractor_gain;
      p.response_prob = 1.0;
    }
    if (p.tested) ++(p.critical ? tested_crit : tested_non);
  }
  for (int e : order) {
    auto& p = plan[static_cast<std::size_t>(e)];
    if (p.tested) continue;
    if (p.critical && tested_crit < 2) p.tested = true, ++tested_crit;
    if (!p.critical && tested_non < 2) p.tested = true, ++tested_non;
  }

  const double p_lang = c.region_specificity * ramp;
  std::uniform_int_distribution<int> any_region(0, kRegionCount - 1);
  std::uniform_int_distribution<std::size_t> lang_pick(0, c.language_regions.size() - 1);
  for (auto& e : s.electrodes) {
    const auto& p = plan[static_cast<std::size_t>(e.id)];
    const bool to_language = e.valid && p.critical && unit(rng) < p_lang;
    e.region_index = to_language ? c.language_regions[lang_pick(rng)] : any_region(rng);
  }

  // ESM: tested criticals chained in arrest pairs, tested non-criticals paired without arrest.
  std::vector<int> crit_ids, non_ids;
  for (int e : valid) {
    const auto& p = plan[static_cast<std::size_t>(e)];
    if (p.tested) (p.critical ? crit_ids : non_ids).push_back(e);
  }
  for (std::size_t k = 0; k + 1 < crit_ids.size(); ++k) {
    s.esm.push_back({crit_ids[k], crit_ids[k + 1], EsmOutcome::arrest});
  }
  for (std::size_t k = 0; k + 1 < non_ids.size(); k += 2) {
    s.esm.push_back({non_ids[k], non_ids[k + 1], EsmOutcome::no_arrest});
  }
  if (non_ids.size() % 2 == 1) s.esm.push_back({non_ids.back(), non_ids.front(), EsmOutcome::no_arrest});

  auto& crit_map = truth.critical[id];
  auto& label_map = truth.labels[id];
  for (const auto& e : s.electrodes) {
    const auto& p = plan[static_cast<std::size_t>(e.id)];
    if (e.valid) crit_map[e.id] = p.critical;
    label_map[e.id] = !e.valid || !p.tested ? ElectrodeLabel::untested
                      : p.critical          ? ElectrodeLabel::critical
                                            : ElectrodeLabel::non_critical;
  }

  // Recordings.
  const auto pre = pre_onset_samples(fs);
  const auto spacing = c.trial_spacing_s * fs;
  const auto jitter = c.trial_jitter_s * fs;
  const double burst_center = c.burst_center_s * fs;
  const double burst_sigma = c.burst_width_s * fs;
  const double burst_jitter = c.burst_jitter_s * fs;
  const auto burst_half = static_cast<std::int64_t>(std::ceil(4.0 * burst_sigma + burst_jitter));
  int next_trial = 1;
  for (const auto& [task, count] : c.trials_per_task) {
    if (count <= 0) continue;
    Recording r;
    r.task = task;
    r.n_electrodes = static_cast<std::size_t>(n);
    std::int64_t onset = std::max<std::int64_t>(pre, static_cast<std::int64_t>(std::ceil(0.5 * fs)));
    std::uniform_int_distribution<std::size_t> word_pick(0, word_list().size() - 1);
    for (int k = 0; k < count; ++k) {
      r.events.push_back({next_trial++, task, word_list()[word_pick(rng)], onset});
      onset += static_cast<std::int64_t>(std::lround(spacing + jitter * (2.0 * unit(rng) - 1.0)));
    }
    // Room for the last epoch and burst, rounded up to a multiple of 256 samples.
    const auto last = r.events.back().onset_sample;
    auto total = last + static_cast<std::int64_t>(std::ceil(std::max(1.0 * fs, burst_center + burst_half + 1.0)));
    total = (total + 255) / 256 * 256;
    r.n_samples = static_cast<std::size_t>(total);
    const std::size_t T = r.n_samples;

    std::vector<double> common = pink_noise(rng, T, fs, c.common_mode_std * c.noise_std);
    std::vector<double> latent;
    if (planted) {
      const auto carrier = band_noise(rng, T, fs, kHighGammaLowHz, kHighGammaHighHz);
      const auto slow = band_noise(rng, T, fs, 0.5, 4.0);
      latent.resize(T);
      const double amp = c.latent_gain * c.effect_size * c.noise_std;
      for (std::size_t t = 0; t < T; ++t) latent[t] = amp * carrier[t] * std::max(0.0, 1.0 + 0.5 * slow[t]);
    }

    r.samples.resize(static_cast<std::size_t>(n) * T);
    for (int e = 0; e < n; ++e) {
      const auto& p = plan[static_cast<std::size_t>(e)];
      const bool is_valid = s.electrodes[static_cast<std::size_t>(e)].valid;
      auto row = pink_noise(rng, T, fs, c.noise_std * p.gain * (is_valid ? 1.0 : 5.0));
      for (std::size_t t = 0; t < T; ++t) row[t] += common[t];
      if (planted && is_valid && p.coupling > 0.0) {
        for (std::size_t t = 0; t < T; ++t) row[t] += p.coupling * latent[t];
      }
      if (is_valid && p.burst > 0.0) {
        const auto carrier = band_noise(rng, T, fs, kHighGammaLowHz, kHighGammaHighHz);
        const double amp = p.burst * c.burst_gain * c.effect_size * c.noise_std;
        for (const auto& ev : r.events) {
          const double latency = burst_jitter * (2.0 * unit(rng) - 1.0);
          if (unit(rng) >= p.response_prob) continue;
          const double center = static_cast<double>(ev.onset_sample) + burst_center + latency;
          const auto lo = static_cast<std::int64_t>(center) - burst_half;
          const auto hi = static_cast<std::int64_t>(center) + burst_half;
          for (auto t = std::max<std::int64_t>(lo, 0); t <= hi && t < total; ++t) {
            const double u = (static_cast<double>(t) - center) / burst_sigma;
            row[static_cast<std::size_t>(t)] += amp * std::exp(-0.5 * u * u) * carrier[static_cast<std::size_t>(t)];
          }
        }
      }
      float* dst = r.samples.data() + static_cast<std::size_t>(e) * T;
      for (std::size_t t = 0; t < T; ++t) dst[t] = static_cast<float>(row[t]);
    }
    s.recordings.push_back(std::move(r));
  }
  return s;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_subjects < 1) throw ConfigError("n_subjects must be >= 1");
  if (electrodes_per_subject < 4) throw ConfigError("electrodes_per_subject must be >= 4");
  if (!(critical_fraction > 0.0 && critical_fraction < 1.0)) throw ConfigError("critical_fraction must be in (0, 1)");
  if (!(tested_fraction > 0.0 && tested_fraction <= 1.0)) throw ConfigError("tested_fraction must be in (0, 1]");
  if (!(invalid_fraction >= 0.0 && invalid_fraction < 1.0)) throw ConfigError("invalid_fraction must be in [0, 1)");
  if (!(effect_size >= 0.0) || !std::isfinite(effect_size)) throw ConfigError("effect_size must be >= 0");
  if (!(noise_std > 0.0)) throw ConfigError("noise_std must be positive");
  if (!(sample_rate > 2.0 * kHighGammaHighHz)) {
    throw ConfigError("sample_rate must exceed 300 Hz so the 70-150 Hz band is representable");
  }
  if (!(response_prob_min >= 0.0 && response_prob_min <= 1.0)) throw ConfigError("response_prob_min must be in [0, 1]");
  if (!(burst_jitter_s >= 0.0)) throw ConfigError("burst_jitter_s must be >= 0");
  if (!(distractor_fraction >= 0.0 && distractor_fraction <= 1.0)) throw ConfigError("distractor_fraction must be in [0, 1]");
  if (!(distractor_gain >= 0.0)) throw ConfigError("distractor_gain must be >= 0");
  if (!(coupling_specificity >= 0.0 && coupling_specificity <= 1.0)) throw ConfigError("coupling_specificity must be in [0, 1]");
  if (!(coupling_false_rate >= 0.0 && coupling_false_rate <= 1.0)) throw ConfigError("coupling_false_rate must be in [0, 1]");
  if (!(region_specificity >= 0.0 && region_specificity <= 1.0)) throw ConfigError("region_specificity must be in [0, 1]");
  if (language_regions.empty()) throw ConfigError("language_regions must not be empty");
  for (int r : language_regions) {
    if (r < 0 || r >= kRegionCount) throw ConfigError("language region " + std::to_string(r) + " outside [0, 25]");
  }
  if (!(burst_width_s > 0.0)) throw ConfigError("burst_width_s must be positive");
  if (!(trial_jitter_s >= 0.0)) throw ConfigError("trial_jitter_s must be >= 0");
  // Epochs of neighboring trials must not overlap, or the layout cannot hold them.
  const double min_gap = trial_spacing_s - trial_jitter_s;
  const double epoch_s = static_cast<double>(epoch_length(sample_rate)) / sample_rate;
  if (min_gap < epoch_s) {
    throw ConfigError("trial layout infeasible: minimum trial spacing " + std::to_string(min_gap) +
                      " s is shorter than the " + std::to_string(epoch_s) + " s epoch");
  }
  int total = 0;
  for (const auto& [task, count] : trials_per_task) {
    if (count < 0) throw ConfigError("trials_per_task entries must be >= 0");
    total += count;
  }
  if (total == 0) throw ConfigError("trials_per_task must request at least one trial");
}

nlohmann::json SynthConfig::to_json() const {
  nlohmann::json trials = nlohmann::json::object();
  for (const auto& [task, count] : trials_per_task) trials[std::string(to_string(task))] = count;
  return {{"n_subjects", n_subjects},
          {"electrodes_per_subject", electrodes_per_subject},
          {"critical_fraction", critical_fraction},
          {"tested_fraction", tested_fraction},
          {"invalid_fraction", invalid_fraction},
          {"trials_per_task", trials},
          {"sample_rate", sample_rate},
          {"effect_size", effect_size},
          {"noise_std", noise_std},
          {"seed", seed},
          {"burst_gain", burst_gain},
          {"latent_gain", latent_gain},
          {"burst_center_s", burst_center_s},
          {"burst_width_s", burst_width_s},
          {"response_prob_min", response_prob_min},
          {"burst_jitter_s", burst_jitter_s},
          {"distractor_fraction", distractor_fraction},
          {"distractor_gain", distractor_gain},
          {"coupling_specificity", coupling_specificity},
          {"coupling_false_rate", coupling_false_rate},
          {"region_specificity", region_specificity},
          {"language_regions", language_regions},
          {"common_mode_std", common_mode_std},
          {"trial_spacing_s", trial_spacing_s},
          {"trial_jitter_s", trial_jitter_s}};
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
  SynthConfig c;
  if (!j.is_object()) throw ConfigError("generator config must be a JSON object");
  static const std::vector<std::string> known{
      "n_subjects", "electrodes_per_subject", "critical_fraction", "tested_fraction", "invalid_fraction",
      "trials_per_task", "words_per_task", "sample_rate", "effect_size", "noise_std", "seed",
      "burst_gain", "latent_gain", "burst_center_s", "burst_width_s", "response_prob_min", "burst_jitter_s",
      "distractor_fraction", "distractor_gain",
      "coupling_specificity", "coupling_false_rate",
      "region_specificity", "language_regions", "common_mode_std", "trial_spacing_s", "trial_jitter_s"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("unknown generator config key '" + key + "'");
    }
  }
  try {
    c.n_subjects = j.value("n_subjects", c.n_subjects);
    c.electrodes_per_subject = j.value("electrodes_per_subject", c.electrodes_per_subject);
    c.critical_fraction = j.value("critical_fraction", c.critical_fraction);
    c.tested_fraction = j.value("tested_fraction", c.tested_fraction);
    c.invalid_fraction = j.value("invalid_fraction", c.invalid_fraction);
    c.sample_rate = j.value("sample_rate", c.sample_rate);
    c.effect_size = j.value("effect_size", c.effect_size);
    c.noise_std = j.value("noise_std", c.noise_std);
    c.seed = j.value("seed", c.seed);
    c.burst_gain = j.value("burst_gain", c.burst_gain);
    c.latent_gain = j.value("latent_gain", c.latent_gain);
    c.burst_center_s = j.value("burst_center_s", c.burst_center_s);
    c.burst_width_s = j.value("burst_width_s", c.burst_width_s);
    c.response_prob_min = j.value("response_prob_min", c.response_prob_min);
    c.burst_jitter_s = j.value("burst_jitter_s", c.burst_jitter_s);
    c.distractor_fraction = j.value("distractor_fraction", c.distractor_fraction);
    c.distractor_gain = j.value("distractor_gain", c.distractor_gain);
    c.coupling_specificity = j.value("coupling_specificity", c.coupling_specificity);
    c.coupling_false_rate = j.value("coupling_false_rate", c.coupling_false_rate);
    c.region_specificity = j.value("region_specificity", c.region_specificity);
    c.language_regions = j.value("language_regions", c.language_regions);
    c.common_mode_std = j.value("common_mode_std", c.common_mode_std);
    c.trial_spacing_s = j.value("trial_spacing_s", c.trial_spacing_s);
    c.trial_jitter_s = j.value("trial_jitter_s", c.trial_jitter_s);
    if (j.contains("words_per_task")) {
      // Shorthand: w words per task gives the 2w:w:w:2w:2w split.
      const int w = j["words_per_task"].get<int>();
      c.trials_per_task = {{Task::AR, 2 * w}, {Task::AN, w}, {Task::SC, w}, {Task::WR, 2 * w}, {Task::PN, 2 * w}};
    }
    if (j.contains("trials_per_task")) {
      c.trials_per_task.clear();
      for (const auto& [key, value] : j["trials_per_task"].items()) {
        c.trials_per_task[parse_task(key)] = value.get<int>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad generator config: ") + e.what());
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("bad generator config: ") + e.what());
  }
  c.validate();
  return c;
}

SynthOutput generate_dataset(const SynthConfig& config, unsigned threads) {
  config.validate();
  SynthOutput out;
  out.dataset.sample_rate = config.sample_rate;
  for (const auto& [task, count] : config.trials_per_task) {
    if (count > 0) out.dataset.tasks.push_back(task);
  }
  out.dataset.region_names = region_names();

  const auto n = static_cast<std::size_t>(config.n_subjects);
  std::vector<Subject> subjects(n);
  std::vector<PlantedTruth> truths(n);
  const int width = config.n_subjects >= 100 ? 3 : 2;
  parallel_for(n, threads, [&](std::size_t i) {
    std::string id = std::to_string(i + 1);
    id = "S" + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(id.size()))), '0') + id;
    subjects[i] = make_subject(config, static_cast<int>(i), truths[i], id);
  });
  out.dataset.subjects = std::move(subjects);
  for (auto& t : truths) {
    out.truth.critical.merge(t.critical);
    out.truth.labels.merge(t.labels);
  }
  validate_dataset(out.dataset);
  return out;
}

void write_synthetic_dataset(const SynthOutput& output, const SynthConfig& config,
                             const std::filesystem::path& root) {
  write_dataset(output.dataset, root);
  nlohmann::json planted = nlohmann::json::object();
  for (const auto& [subject, labels] : output.truth.labels) {
    nlohmann::json sj = nlohmann::json::object();
    for (const auto& [electrode, label] : labels) {
      const auto& crit = output.truth.critical.at(subject);
      const auto it = crit.find(electrode);
      sj[std::to_string(electrode)] = {{"label", to_string(label)},
                                       {"planted_critical", it != crit.end() && it->second}};
    }
    planted[subject] = sj;
  }
  write_json(root / "generator.json", {{"config", config.to_json()}, {"planted", planted}});
}

}  // namespace arrestmap
