#include "arrestmap/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "arrestmap/binary_io.hpp"
#include "arrestmap/error.hpp"
#include "arrestmap/graph.hpp"
#include "arrestmap/hash.hpp"
#include "arrestmap/nmf.hpp"
#include "arrestmap/parallel.hpp"

#ifndef ARRESTMAP_VERSION
#define ARRESTMAP_VERSION "unknown"
#endif

namespace arrestmap {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string version_string() { return std::string("arrestmap ") + ARRESTMAP_VERSION; }

namespace {

// Bumped whenever cached bytes would change meaning.
constexpr std::string_view kPreprocessCacheTag = "preprocess-v1";
constexpr std::string_view kStage1CacheTag = "stage1-v1";

// Re-throws the active exception with the stage and entity prepended, keeping
// its category so the CLI exit code is unchanged.
template <class F>
decltype(auto) in_stage(std::string_view stage, const std::string& entity, F&& f) {
  auto wrap = [&](const std::exception& e) {
    return "stage '" + std::string(stage) + "'" + (entity.empty() ? "" : " [" + entity + "]") +
           ": " + e.what();
  };
  try {
    return f();
  } catch (const std::exception& e) {
    if (std::string_view(e.what()).starts_with("stage '")) throw;
    try {
      throw;
    } catch (const LoadError&) {
      throw LoadError(wrap(e));
    } catch (const FormatError&) {
      throw FormatError(wrap(e));
    } catch (const ValidationError&) {
      throw ValidationError(wrap(e));
    } catch (const ConfigError&) {
      throw ConfigError(wrap(e));
    } catch (const InvalidInput&) {
      throw InvalidInput(wrap(e));
    } catch (const InputError&) {
      throw InputError(wrap(e));
    } catch (const TrainingError&) {
      throw TrainingError(wrap(e));
    } catch (const UndefinedMetric&) {
      throw UndefinedMetric(wrap(e));
    } catch (const InsufficientData&) {
      throw InsufficientData(wrap(e));
    } catch (const DegenerateGraph&) {
      throw DegenerateGraph(wrap(e));
    } catch (const std::exception&) {
      throw Error(wrap(e));
    }
  }
}

void reject_unknown_keys(const json& j, std::initializer_list<std::string_view> known, std::string_view what) {
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("unknown " + std::string(what) + " key '" + key + "'");
    }
  }
}

GridAxes default_grid(const ClassifierSpec& base) {
  GridAxes g;
  for (const char* m : {"all", "region+connectivity", "region", "connectivity"}) {
    g.masks.push_back(FeatureMask::parse(m));
  }
  for (auto kind : {ClassifierKind::linear_svm, ClassifierKind::rbf_svm, ClassifierKind::logreg,
                    ClassifierKind::mlp2}) {
    ClassifierSpec s = base;
    s.kind = kind;
    g.classifiers.push_back(s);
  }
  g.aggregations = {AggregationMethod::average, AggregationMethod::mlp_hist,
                    AggregationMethod::mlp_hist_region};
  return g;
}

}  // namespace

fs::path PipelineConfig::resolved_cache_dir() const { return cache_dir.value_or(output / "cache"); }

json PipelineConfig::to_json() const {
  return {{"dataset", dataset.generic_string()},
          {"signal", to_string(signal)},
          {"features", mask.to_string()},
          {"classifier", classifier.to_json()},
          {"aggregation", to_string(aggregation)},
          {"aggregator", aggregator.to_json()},
          {"validation", to_string(validation)},
          {"cv_folds", cv_folds},
          {"inner_folds", inner_folds},
          {"nmf",
           {{"components", nmf.components},
            {"max_iters", nmf.max_iters},
            {"tol", nmf.tol},
            {"max_trials", nmf.max_trials}}},
          {"seed", seed}};
}

PipelineConfig PipelineConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("pipeline config must be a JSON object");
  reject_unknown_keys(j,
                      {"dataset", "signal", "features", "classifier", "aggregation", "aggregator",
                       "validation", "cv_folds", "inner_folds", "nmf", "seed", "output", "cache_dir",
                       "threads", "grid"},
                      "pipeline config");
  PipelineConfig c;
  try {
    if (j.contains("dataset")) c.dataset = j["dataset"].get<std::string>();
    if (j.contains("signal")) c.signal = parse_signal_kind(j["signal"].get<std::string>());
    if (j.contains("features")) c.mask = FeatureMask::parse(j["features"].get<std::string>());
    if (j.contains("classifier")) c.classifier = ClassifierSpec::from_json(j["classifier"]);
    if (j.contains("aggregation")) c.aggregation = parse_aggregation(j["aggregation"].get<std::string>());
    if (j.contains("aggregator")) c.aggregator = AggregatorOptions::from_json(j["aggregator"]);
    if (j.contains("validation")) c.validation = parse_validation_mode(j["validation"].get<std::string>());
    c.cv_folds = j.value("cv_folds", c.cv_folds);
    c.inner_folds = j.value("inner_folds", c.inner_folds);
    if (j.contains("nmf")) {
      const auto& n = j["nmf"];
      reject_unknown_keys(n, {"components", "max_iters", "tol", "max_trials"}, "nmf");
      c.nmf.components = n.value("components", c.nmf.components);
      c.nmf.max_iters = n.value("max_iters", c.nmf.max_iters);
      c.nmf.tol = n.value("tol", c.nmf.tol);
      c.nmf.max_trials = n.value("max_trials", c.nmf.max_trials);
    }
    c.seed = j.value("seed", c.seed);
    if (j.contains("output")) c.output = j["output"].get<std::string>();
    if (j.contains("cache_dir") && !j["cache_dir"].is_null()) c.cache_dir = fs::path(j["cache_dir"].get<std::string>());
    c.threads = j.value("threads", c.threads);
    c.grid = default_grid(c.classifier);
    if (j.contains("grid")) {
      const auto& g = j["grid"];
      reject_unknown_keys(g, {"features", "classifiers", "aggregations"}, "grid");
      if (g.contains("features")) {
        c.grid.masks.clear();
        for (const auto& m : g["features"]) c.grid.masks.push_back(FeatureMask::parse(m.get<std::string>()));
      }
      if (g.contains("classifiers")) {
        c.grid.classifiers.clear();
        for (const auto& s : g["classifiers"]) c.grid.classifiers.push_back(ClassifierSpec::from_json(s));
      }
      if (g.contains("aggregations")) {
        c.grid.aggregations.clear();
        for (const auto& a : g["aggregations"]) c.grid.aggregations.push_back(parse_aggregation(a.get<std::string>()));
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad pipeline config: ") + e.what());
  }
  if (c.cv_folds < 2) throw ConfigError("cv_folds must be >= 2");
  if (c.inner_folds < 2) throw ConfigError("inner_folds must be >= 2");
  if (c.nmf.components != kNmfDims) {
    throw ConfigError("nmf.components must be " + std::to_string(kNmfDims) + " to fit the feature layout");
  }
  if (c.nmf.max_iters < 1) throw ConfigError("nmf.max_iters must be >= 1");
  if (c.nmf.max_trials < static_cast<std::size_t>(c.nmf.components)) {
    throw ConfigError("nmf.max_trials must be at least the component count");
  }
  if (c.grid.masks.empty() || c.grid.classifiers.empty() || c.grid.aggregations.empty()) {
    throw ConfigError("grid axes must not be empty");
  }
  return c;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  json j;
  try {
    j = read_json(path);
  } catch (const LoadError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return PipelineConfig::from_json(j);
}

// ---------------------------------------------------------------- preprocessing

namespace {

SubjectData subject_skeleton(const Subject& s) {
  SubjectData d;
  d.id = s.id;
  const auto labels = derive_labels(s.esm, s.electrodes);
  for (const auto& e : s.electrodes) {
    if (!e.valid) continue;
    d.electrodes.push_back(e.id);
    d.regions.push_back(e.region_index);
    d.labels.push_back(labels.at(e.id));
  }
  for (const auto& r : s.recordings) {
    for (const auto& ev : r.events) d.trials.push_back({ev.task, ev.trial_id});
  }
  if (d.electrodes.size() < 2) throw ValidationError("fewer than 2 valid electrodes");
  return d;
}

void compute_subject(const Subject& s, double fs, SignalKind kind, SubjectData& d) {
  const std::size_t n_rows = d.electrodes.size();
  const std::size_t n_trials = d.trials.size();
  d.epochs.assign(n_rows * n_trials, {});
  d.graph.assign(n_rows * n_trials, {});
  std::size_t offset = 0;
  std::vector<double> row;
  for (const auto& rec : s.recordings) {
    const Eigen::MatrixXd processed = preprocess_recording(rec, s.electrodes, fs, kind);
    std::vector<Onset> onsets;
    for (const auto& ev : rec.events) onsets.push_back({ev.trial_id, ev.onset_sample});
    row.resize(static_cast<std::size_t>(processed.cols()));
    for (std::size_t r = 0; r < n_rows; ++r) {
      for (std::size_t t = 0; t < row.size(); ++t) row[t] = processed(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(t));
      auto epochs = epoch_and_normalize(row, onsets, fs, d.electrodes[r]);
      for (std::size_t k = 0; k < epochs.size(); ++k) d.epochs[d.index(r, offset + k)] = std::move(epochs[k]);
    }
    offset += rec.events.size();
  }
  std::vector<const TrialEpoch*> ptrs(n_rows);
  for (std::size_t t = 0; t < n_trials; ++t) {
    for (std::size_t r = 0; r < n_rows; ++r) ptrs[r] = &d.epochs[d.index(r, t)];
    const auto metrics = graph_metrics(trial_connectivity(std::span<const TrialEpoch* const>(ptrs)));
    for (std::size_t r = 0; r < n_rows; ++r) d.graph[d.index(r, t)] = metrics[r];
  }
}

void save_subject_cache(const SubjectData& d, std::size_t length, const fs::path& dir) {
  std::vector<float> flat;
  flat.reserve(d.epochs.size() * length);
  for (const auto& e : d.epochs) flat.insert(flat.end(), e.samples.begin(), e.samples.end());
  write_f32(dir / (d.id + ".epochs.f32"), std::span<const float>(flat));
  std::vector<double> g;
  g.reserve(d.graph.size() * 3);
  for (const auto& m : d.graph) {
    g.push_back(m.strength);
    g.push_back(m.centrality);
    g.push_back(m.clustering);
  }
  write_f64(dir / (d.id + ".graph.f64"), g);
}

void load_subject_cache(SubjectData& d, std::size_t length, const fs::path& dir) {
  const std::size_t n = d.electrodes.size() * d.trials.size();
  const auto flat = read_f32_values(dir / (d.id + ".epochs.f32"), n * length);
  const auto g = read_f64(dir / (d.id + ".graph.f64"));
  if (g.size() != 3 * n) throw FormatError(d.id + ": cached graph metrics have the wrong size");
  d.epochs.assign(n, {});
  d.graph.assign(n, {});
  for (std::size_t r = 0; r < d.electrodes.size(); ++r) {
    for (std::size_t t = 0; t < d.trials.size(); ++t) {
      const std::size_t i = d.index(r, t);
      auto& e = d.epochs[i];
      e.electrode = d.electrodes[r];
      e.trial_id = d.trials[t].trial_id;
      e.samples.assign(flat.begin() + static_cast<std::ptrdiff_t>(i * length),
                       flat.begin() + static_cast<std::ptrdiff_t>((i + 1) * length));
      d.graph[i] = {g[3 * i], g[3 * i + 1], g[3 * i + 2]};
    }
  }
}

// Unique sibling used as a staging directory before an atomic rename.
fs::path staging_dir(const fs::path& final_dir) {
  static std::atomic<unsigned> counter{0};
  const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
  return final_dir.parent_path() /
         (final_dir.filename().string() + ".tmp-" + std::to_string(stamp) + "-" + std::to_string(counter++));
}

void publish_dir(const fs::path& staged, const fs::path& final_dir) {
  std::error_code ec;
  fs::rename(staged, final_dir, ec);
  if (ec) fs::remove_all(staged, ec);  // another writer won; its content is identical
}

}  // namespace

PreprocessedData preprocess_dataset(const Dataset& ds, SignalKind kind, const fs::path& cache_dir,
                                    unsigned threads, bool* cache_hit) {
  Fnv1a key;
  key.text(kPreprocessCacheTag);
  key.value(dataset_fingerprint(ds));
  key.text(to_string(kind));

  PreprocessedData out;
  out.key = key.hex();
  out.sample_rate = ds.sample_rate;
  const std::size_t length = static_cast<std::size_t>(epoch_length(ds.sample_rate));
  out.subjects.resize(ds.subjects.size());
  for (std::size_t i = 0; i < ds.subjects.size(); ++i) {
    out.subjects[i] = in_stage("preprocess", "subject " + ds.subjects[i].id,
                               [&] { return subject_skeleton(ds.subjects[i]); });
  }

  const fs::path dir = cache_dir / ("pre-" + out.key);
  const bool hit = fs::exists(dir / "meta.json");
  if (cache_hit) *cache_hit = hit;
  if (hit) {
    for (auto& d : out.subjects) {
      in_stage("preprocess", "subject " + d.id, [&] { load_subject_cache(d, length, dir); });
    }
    return out;
  }

  parallel_for(ds.subjects.size(), threads, [&](std::size_t i) {
    in_stage("preprocess", "subject " + ds.subjects[i].id,
             [&] { compute_subject(ds.subjects[i], ds.sample_rate, kind, out.subjects[i]); });
  });

  fs::create_directories(cache_dir);
  const fs::path staged = staging_dir(dir);
  fs::create_directories(staged);
  json meta{{"signal", to_string(kind)}, {"epoch_length", length}, {"subjects", json::array()}};
  for (const auto& d : out.subjects) {
    save_subject_cache(d, length, staged);
    meta["subjects"].push_back({{"id", d.id}, {"electrodes", d.electrodes.size()}, {"trials", d.trials.size()}});
  }
  write_json(staged / "meta.json", meta);
  publish_dir(staged, dir);
  return out;
}

std::vector<LabeledElectrode> labeled_electrodes(const PreprocessedData& data) {
  std::vector<LabeledElectrode> out;
  for (std::size_t s = 0; s < data.subjects.size(); ++s) {
    const auto& d = data.subjects[s];
    for (std::size_t r = 0; r < d.electrodes.size(); ++r) {
      if (d.labels[r] == ElectrodeLabel::untested) continue;
      LabeledElectrode le;
      le.ref = {d.id, d.electrodes[r], d.labels[r] == ElectrodeLabel::critical ? 1 : 0, d.regions[r]};
      le.subject = s;
      le.row = r;
      out.push_back(le);
    }
  }
  return out;
}

// ---------------------------------------------------------------- stage 1

namespace {

struct FeatureBlock {
  Eigen::MatrixXd x;
  std::vector<int> labels;
  std::vector<std::size_t> offsets;  // first row of each electrode, plus end
};

FeatureBlock build_features(const PreprocessedData& data, std::span<const LabeledElectrode> all,
                            std::span<const std::size_t> which, const NmfModel* nmf, const FeatureMask& mask) {
  FeatureBlock b;
  std::size_t rows = 0;
  b.offsets.push_back(0);
  for (std::size_t k : which) {
    rows += data.subjects[all[k].subject].trials.size();
    b.offsets.push_back(rows);
  }
  b.x.resize(static_cast<Eigen::Index>(rows), kFeatureDim);
  b.labels.resize(rows);
  std::size_t row = 0;
  for (std::size_t k : which) {
    const auto& le = all[k];
    const auto& d = data.subjects[le.subject];
    const auto label = le.ref.label == 1 ? ElectrodeLabel::critical : ElectrodeLabel::non_critical;
    for (std::size_t t = 0; t < d.trials.size(); ++t, ++row) {
      const auto i = d.index(le.row, t);
      const auto f = assemble_trial_features(d.epochs[i], nmf, {le.ref.electrode, d.trials[t].trial_id, d.graph[i]},
                                             le.ref.region_index, mask, label);
      for (int c = 0; c < kFeatureDim; ++c) b.x(static_cast<Eigen::Index>(row), c) = f.values[static_cast<std::size_t>(c)];
      b.labels[row] = le.ref.label;
    }
  }
  return b;
}

NmfModel fit_fold_nmf(const PreprocessedData& data, std::span<const LabeledElectrode> all,
                      std::span<const std::size_t> train, const NmfStageOptions& options, std::uint64_t seed) {
  std::vector<const TrialEpoch*> pool;
  for (std::size_t k : train) {
    const auto& d = data.subjects[all[k].subject];
    for (std::size_t t = 0; t < d.trials.size(); ++t) pool.push_back(&d.epochs[d.index(all[k].row, t)]);
  }
  if (pool.size() > options.max_trials) {
    std::vector<std::size_t> idx(pool.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(options.max_trials);
    std::sort(idx.begin(), idx.end());
    std::vector<const TrialEpoch*> picked;
    for (std::size_t i : idx) picked.push_back(pool[i]);
    pool = std::move(picked);
  }
  NmfOptions o;
  o.components = options.components;
  o.max_iters = options.max_iters;
  o.tol = options.tol;
  o.seed = seed;
  return fit_nmf(nmf_data_matrix(pool), o);
}

Eigen::MatrixXd select_rows(const FeatureBlock& b, std::span<const std::size_t> electrodes, std::vector<int>* labels) {
  std::size_t rows = 0;
  for (std::size_t e : electrodes) rows += b.offsets[e + 1] - b.offsets[e];
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows), b.x.cols());
  labels->clear();
  std::size_t r = 0;
  for (std::size_t e : electrodes) {
    for (std::size_t i = b.offsets[e]; i < b.offsets[e + 1]; ++i, ++r) {
      x.row(static_cast<Eigen::Index>(r)) = b.x.row(static_cast<Eigen::Index>(i));
      labels->push_back(b.labels[i]);
    }
  }
  return x;
}

// Groups of positions within `train` for cross-fitting: whole subjects in loo
// mode, a label-stratified shuffle of electrodes otherwise.
std::vector<std::vector<std::size_t>> inner_groups(std::span<const LabeledElectrode> all,
                                                   std::span<const std::size_t> train, ValidationMode mode,
                                                   int folds, std::uint64_t seed) {
  std::vector<int> group(train.size());
  int k = folds;
  if (mode == ValidationMode::loo) {
    std::vector<std::size_t> subjects;
    for (std::size_t p = 0; p < train.size(); ++p) {
      const auto s = all[train[p]].subject;
      auto it = std::find(subjects.begin(), subjects.end(), s);
      if (it == subjects.end()) {
        subjects.push_back(s);
        it = subjects.end() - 1;
      }
      group[p] = static_cast<int>(it - subjects.begin());
    }
    k = std::min<int>(folds, static_cast<int>(subjects.size()));
    if (k < 2) throw InsufficientData("cross-fitting needs at least 2 training subjects");
    for (int& g : group) g %= k;
  } else {
    std::vector<std::size_t> pos, neg;
    for (std::size_t p = 0; p < train.size(); ++p) (all[train[p]].ref.label == 1 ? pos : neg).push_back(p);
    std::mt19937_64 rng(seed);
    std::shuffle(pos.begin(), pos.end(), rng);
    std::shuffle(neg.begin(), neg.end(), rng);
    std::vector<std::size_t> order = pos;
    order.insert(order.end(), neg.begin(), neg.end());
    for (std::size_t r = 0; r < order.size(); ++r) group[order[r]] = static_cast<int>(r % static_cast<std::size_t>(k));
  }
  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(k));
  for (std::size_t p = 0; p < train.size(); ++p) out[static_cast<std::size_t>(group[p])].push_back(p);
  return out;
}

struct FoldScores {
  std::vector<std::vector<double>> test;   // per test electrode, trial scores
  std::vector<std::vector<double>> train;  // per training electrode, cross-fitted trial scores
  json diagnostics;
};

json model_diagnostics(const TrainedModel& m) {
  const auto& d = m.diagnostics();
  json j{{"rows_used", d.rows_used}};
  if (m.kind() == ClassifierKind::linear_svm || m.kind() == ClassifierKind::rbf_svm) {
    j["kkt_violation"] = d.kkt_violation;
    j["smo_iterations"] = d.smo_iterations;
    j["support_vectors"] = m.support_vector_count();
  } else if (!d.loss_trace.empty()) {
    j["final_training_loss"] = d.loss_trace.back();
  }
  return j;
}

std::vector<std::vector<double>> split_scores(const std::vector<double>& scores, const FeatureBlock& block,
                                              std::span<const std::size_t> electrodes) {
  std::vector<std::vector<double>> out;
  std::size_t r = 0;
  for (std::size_t e : electrodes) {
    const std::size_t n = block.offsets[e + 1] - block.offsets[e];
    out.emplace_back(scores.begin() + static_cast<std::ptrdiff_t>(r), scores.begin() + static_cast<std::ptrdiff_t>(r + n));
    r += n;
  }
  return out;
}

// Everything stage 1 of one fold produces: held-out trial scores for the test
// electrodes and cross-fitted trial scores for the training electrodes.
FoldScores run_stage1_fold(const PipelineConfig& cfg, const PreprocessedData& data,
                           std::span<const LabeledElectrode> all, const Fold& fold, std::uint64_t fold_seed,
                           const fs::path& model_stem) {
  std::optional<NmfModel> nmf;
  json diag = json::object();
  if (cfg.mask.nmf) {
    nmf = fit_fold_nmf(data, all, fold.train, cfg.nmf, mix_seed(fold_seed, 0x6e6d66));
    diag["nmf"] = {{"iterations", nmf->iterations}, {"final_error", nmf->final_error}};
  }
  const NmfModel* nmf_ptr = nmf ? &*nmf : nullptr;
  FeatureBlock train = build_features(data, all, fold.train, nmf_ptr, cfg.mask);
  FeatureBlock test = build_features(data, all, fold.test, nmf_ptr, cfg.mask);

  FeatureScaler scaler;
  scaler.fit(train.x, cfg.mask);
  for (std::size_t k : fold.train) scaler.provenance.insert(all[k].ref.subject + "/" + std::to_string(all[k].ref.electrode));
  for (std::size_t k : fold.test) {
    if (scaler.provenance.count(all[k].ref.subject + "/" + std::to_string(all[k].ref.electrode))) {
      throw Error("held-out electrode " + all[k].ref.subject + "/" + std::to_string(all[k].ref.electrode) +
                  " was used to fit the scaler");
    }
  }
  train.x = scaler.transform(train.x);
  test.x = scaler.transform(test.x);

  ClassifierSpec spec = cfg.classifier;
  spec.seed = mix_seed(fold_seed, 0x5751);
  const TrainedModel model = train_classifier(spec, train.x, train.labels);
  diag["classifier"] = model_diagnostics(model);
  if (!model_stem.empty()) {
    model.save(model_stem);
    if (nmf) save_nmf(*nmf, model_stem.string() + ".nmf");
  }

  std::vector<std::size_t> test_idx(fold.test.size());
  std::iota(test_idx.begin(), test_idx.end(), std::size_t{0});
  FoldScores out;
  out.test = split_scores(predict_trial_scores(model, test.x), test, test_idx);

  const auto groups = inner_groups(all, fold.train, cfg.validation, cfg.inner_folds, mix_seed(fold_seed, 0x1f01d));
  out.train.resize(fold.train.size());
  json inner = json::array();
  for (std::size_t g = 0; g < groups.size(); ++g) {
    std::vector<std::size_t> fit_pos;
    for (std::size_t h = 0; h < groups.size(); ++h) {
      if (h != g) fit_pos.insert(fit_pos.end(), groups[h].begin(), groups[h].end());
    }
    std::sort(fit_pos.begin(), fit_pos.end());
    std::vector<int> fit_labels, held_labels;
    const Eigen::MatrixXd fit_x = select_rows(train, fit_pos, &fit_labels);
    const Eigen::MatrixXd held_x = select_rows(train, groups[g], &held_labels);
    ClassifierSpec inner_spec = cfg.classifier;
    inner_spec.seed = mix_seed(fold_seed, 0x1000 + g);
    const TrainedModel m = train_classifier(inner_spec, fit_x, fit_labels);
    inner.push_back(model_diagnostics(m));
    const auto scores = split_scores(predict_trial_scores(m, held_x), train, groups[g]);
    for (std::size_t i = 0; i < groups[g].size(); ++i) out.train[groups[g][i]] = scores[i];
  }
  diag["inner"] = inner;
  out.diagnostics = diag;
  return out;
}

std::vector<double> flatten(const std::vector<std::vector<double>>& v) {
  std::vector<double> out;
  for (const auto& x : v) out.insert(out.end(), x.begin(), x.end());
  return out;
}

std::vector<std::vector<double>> unflatten(const std::vector<double>& flat, const std::vector<std::size_t>& sizes) {
  std::vector<std::vector<double>> out;
  std::size_t r = 0;
  for (std::size_t n : sizes) {
    if (r + n > flat.size()) throw FormatError("cached trial scores are truncated");
    out.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(r), flat.begin() + static_cast<std::ptrdiff_t>(r + n));
    r += n;
  }
  if (r != flat.size()) throw FormatError("cached trial scores have trailing values");
  return out;
}

std::vector<std::size_t> trial_counts(const PreprocessedData& data, std::span<const LabeledElectrode> all,
                                      std::span<const std::size_t> which) {
  std::vector<std::size_t> out;
  for (std::size_t k : which) out.push_back(data.subjects[all[k].subject].trials.size());
  return out;
}

std::string stage1_key(const PipelineConfig& cfg, const PreprocessedData& data) {
  Fnv1a h;
  h.text(kStage1CacheTag);
  h.text(data.key);
  h.text(cfg.mask.to_string());
  h.text(cfg.classifier.to_json().dump());
  h.text(to_string(cfg.validation));
  h.value(cfg.cv_folds);
  h.value(cfg.inner_folds);
  h.value(cfg.nmf.components);
  h.value(cfg.nmf.max_iters);
  h.value(cfg.nmf.tol);
  h.value(static_cast<std::uint64_t>(cfg.nmf.max_trials));
  h.value(cfg.seed);
  return h.hex();
}

std::uint64_t fold_seed_of(const PipelineConfig& cfg, std::size_t fold) { return mix_seed(cfg.seed, 0xf01d0000ULL + fold); }

struct Stage2Output {
  std::vector<ElectrodeVerdict> verdicts;
  double threshold = 0.0;
};

Stage2Output run_stage2_fold(const PipelineConfig& cfg, std::span<const LabeledElectrode> all, const Fold& fold,
                             const FoldScores& scores, int fold_index, std::uint64_t fold_seed) {
  std::vector<int> train_labels;
  for (std::size_t k : fold.train) train_labels.push_back(all[k].ref.label);

  std::optional<AggregatorMlp> agg;
  std::vector<double> train_scores(fold.train.size());
  if (cfg.aggregation == AggregationMethod::average) {
    for (std::size_t i = 0; i < fold.train.size(); ++i) train_scores[i] = aggregate_by_average(scores.train[i]);
  } else {
    const bool region = cfg.aggregation == AggregationMethod::mlp_hist_region;
    Eigen::MatrixXd x(static_cast<Eigen::Index>(fold.train.size()), kAggregatorInputDim);
    for (std::size_t i = 0; i < fold.train.size(); ++i) {
      const auto in = aggregator_input(score_histogram(scores.train[i]), all[fold.train[i]].ref.region_index, region);
      for (int c = 0; c < kAggregatorInputDim; ++c) x(static_cast<Eigen::Index>(i), c) = in[static_cast<std::size_t>(c)];
    }
    AggregatorOptions opts = cfg.aggregator;
    opts.seed = mix_seed(fold_seed, 0xa66);
    agg = AggregatorMlp::train(x, train_labels, opts, region);
    const Eigen::VectorXd s = agg->score(x);
    for (std::size_t i = 0; i < fold.train.size(); ++i) train_scores[i] = s(static_cast<Eigen::Index>(i));
  }

  Stage2Output out;
  out.threshold = select_threshold_max_f1(train_scores, train_labels);
  for (std::size_t i = 0; i < fold.test.size(); ++i) {
    const auto& ref = all[fold.test[i]].ref;
    auto v = predict_electrode(agg ? &*agg : nullptr, scores.test[i], ref.region_index, out.threshold);
    v.subject = ref.subject;
    v.electrode = ref.electrode;
    v.fold = fold_index;
    v.label = ref.label;
    out.verdicts.push_back(std::move(v));
  }
  return out;
}

MetricSet metrics_of(std::span<const ElectrodeVerdict> verdicts, double threshold) {
  std::vector<double> s;
  std::vector<int> d, y;
  for (const auto& v : verdicts) {
    s.push_back(v.score);
    d.push_back(v.decision ? 1 : 0);
    y.push_back(v.label);
  }
  return compute_metrics(s, d, y, threshold);
}

MetricSet mean_of(const std::vector<MetricSet>& folds) {
  MetricSet m;
  auto avg_opt = [&](auto field) -> std::optional<double> {
    double sum = 0.0;
    int n = 0;
    for (const auto& f : folds) {
      if (const auto& v = f.*field) sum += *v, ++n;
    }
    return n ? std::optional<double>(sum / n) : std::nullopt;
  };
  auto avg = [&](auto field) {
    double sum = 0.0;
    for (const auto& f : folds) sum += f.*field;
    return folds.empty() ? 0.0 : sum / static_cast<double>(folds.size());
  };
  m.roc_auc = avg_opt(&MetricSet::roc_auc);
  m.pr_auc = avg_opt(&MetricSet::pr_auc);
  m.accuracy = avg(&MetricSet::accuracy);
  m.precision = avg(&MetricSet::precision);
  m.recall = avg(&MetricSet::recall);
  m.f1 = avg(&MetricSet::f1);
  m.balanced_accuracy = avg(&MetricSet::balanced_accuracy);
  m.threshold = avg(&MetricSet::threshold);
  for (const auto& f : folds) {
    m.n += f.n;
    m.n_positive += f.n_positive;
  }
  return m;
}

std::string csv_text(const std::function<void(std::ostream&)>& fn) {
  std::ostringstream os;
  fn(os);
  return os.str();
}

PreprocessedData load_and_preprocess(const PipelineConfig& cfg, bool* hit) {
  const Dataset ds = in_stage("load", cfg.dataset.string(), [&] { return load_dataset(cfg.dataset); });
  return preprocess_dataset(ds, cfg.signal, cfg.resolved_cache_dir(), cfg.threads, hit);
}

}  // namespace

RunResult run_pipeline(const PipelineConfig& cfg, const PreprocessedData* preloaded) {
  RunResult result;
  PreprocessedData owned;
  if (!preloaded) {
    owned = load_and_preprocess(cfg, &result.preprocess_cache_hit);
    preloaded = &owned;
  } else {
    result.preprocess_cache_hit = true;
  }
  const PreprocessedData& data = *preloaded;

  const auto all = labeled_electrodes(data);
  std::vector<ElectrodeRef> refs;
  for (const auto& le : all) refs.push_back(le.ref);
  const FoldPlan plan = in_stage("folds", "", [&] {
    return make_folds(refs, cfg.validation, mix_seed(cfg.seed, 0xf01d), cfg.cv_folds);
  });
  const std::size_t n_folds = plan.folds.size();
  auto fold_name = [&](std::size_t k) {
    return "fold " + std::to_string(k) + (plan.fold_subject.empty() ? "" : " (subject " + plan.fold_subject[k] + ")");
  };

  // Stage 1, cached per fold.
  const fs::path s1_dir = cfg.resolved_cache_dir() / ("stage1-" + stage1_key(cfg, data));
  fs::create_directories(s1_dir);
  std::vector<FoldScores> scores(n_folds);
  std::atomic<bool> all_hit{true};
  parallel_for(n_folds, cfg.threads, [&](std::size_t k) {
    const Fold& fold = plan.folds[k];
    const fs::path stem = s1_dir / ("fold_" + std::to_string(k));
    const auto test_sizes = trial_counts(data, all, fold.test);
    const auto train_sizes = trial_counts(data, all, fold.train);
    if (fs::exists(stem.string() + ".json")) {
      in_stage("train", fold_name(k) + " cache", [&] {
        const json meta = read_json(stem.string() + ".json");
        scores[k].diagnostics = meta.at("diagnostics");
        scores[k].test = unflatten(read_f64(stem.string() + ".test.f64"), test_sizes);
        scores[k].train = unflatten(read_f64(stem.string() + ".train.f64"), train_sizes);
      });
      return;
    }
    all_hit = false;
    scores[k] = in_stage("train", fold_name(k), [&] {
      return run_stage1_fold(cfg, data, all, fold, fold_seed_of(cfg, k), stem);
    });
    write_f64(stem.string() + ".test.f64", flatten(scores[k].test));
    write_f64(stem.string() + ".train.f64", flatten(scores[k].train));
    write_json(stem.string() + ".json", {{"diagnostics", scores[k].diagnostics}});
  });
  result.stage1_cache_hit = all_hit;

  // Stage 2 and thresholds.
  std::vector<Stage2Output> stage2(n_folds);
  parallel_for(n_folds, cfg.threads, [&](std::size_t k) {
    stage2[k] = in_stage("aggregate", fold_name(k), [&] {
      return run_stage2_fold(cfg, all, plan.folds[k], scores[k], static_cast<int>(k), fold_seed_of(cfg, k));
    });
  });

  // Evaluation.
  EvalReport& report = result.report;
  json folds_json = json::array();
  double threshold_sum = 0.0;
  for (std::size_t k = 0; k < n_folds; ++k) {
    report.folds.push_back(in_stage("eval", fold_name(k), [&] { return metrics_of(stage2[k].verdicts, stage2[k].threshold); }));
    result.verdicts.insert(result.verdicts.end(), stage2[k].verdicts.begin(), stage2[k].verdicts.end());
    threshold_sum += stage2[k].threshold;
    json f{{"index", k},
           {"n_train_electrodes", plan.folds[k].train.size()},
           {"n_test_electrodes", plan.folds[k].test.size()},
           {"threshold", stage2[k].threshold},
           {"stage1", scores[k].diagnostics}};
    if (!plan.fold_subject.empty()) f["held_out_subject"] = plan.fold_subject[k];
    folds_json.push_back(f);
  }
  report.pooled = in_stage("eval", "pooled", [&] { return metrics_of(result.verdicts, threshold_sum / static_cast<double>(n_folds)); });
  report.fold_mean = mean_of(report.folds);
  {
    std::vector<double> s;
    std::vector<int> y;
    for (const auto& v : result.verdicts) {
      s.push_back(v.score);
      y.push_back(v.label);
    }
    if (report.pooled.roc_auc) report.roc = roc_curve(s, y);
    if (report.pooled.pr_auc) report.pr = pr_curve(s, y);
  }

  std::size_t n_pos = 0, n_trials = 0;
  for (const auto& le : all) {
    n_pos += static_cast<std::size_t>(le.ref.label);
    n_trials += data.subjects[le.subject].trials.size();
  }
  result.summary = {{"version", version_string()},
                    {"config", cfg.to_json()},
                    {"data",
                     {{"preprocess_key", data.key},
                      {"subjects", data.subjects.size()},
                      {"labeled_electrodes", all.size()},
                      {"critical_electrodes", n_pos},
                      {"labeled_trials", n_trials}}},
                    {"metrics", report.to_json()},
                    {"folds", folds_json}};

  fs::create_directories(cfg.output);
  write_text_atomic(cfg.output / "summary.json", result.summary.dump(2) + "\n");
  write_text_atomic(cfg.output / "verdicts.csv", csv_text([&](std::ostream& os) { write_verdict_csv(os, result.verdicts); }));
  write_text_atomic(cfg.output / "roc.csv", csv_text([&](std::ostream& os) { write_curve_csv(os, report.roc, "fpr", "tpr"); }));
  write_text_atomic(cfg.output / "pr.csv", csv_text([&](std::ostream& os) { write_curve_csv(os, report.pr, "recall", "precision"); }));
  return result;
}

void train_final_models(const PipelineConfig& cfg) {
  const PreprocessedData data = load_and_preprocess(cfg, nullptr);
  const auto all = labeled_electrodes(data);
  Fold fold;
  fold.train.resize(all.size());
  std::iota(fold.train.begin(), fold.train.end(), std::size_t{0});
  const fs::path dir = cfg.output / "model";
  fs::create_directories(dir);
  const std::uint64_t seed = mix_seed(cfg.seed, 0xf1a1);
  const FoldScores scores = in_stage("train", "all labeled electrodes", [&] {
    return run_stage1_fold(cfg, data, all, fold, seed, dir / "stage1");
  });
  // Stage 2 on the cross-fitted scores; an empty test set yields no verdicts.
  const Stage2Output s2 = in_stage("aggregate", "all labeled electrodes", [&] {
    return run_stage2_fold(cfg, all, fold, scores, 0, seed);
  });
  if (cfg.aggregation != AggregationMethod::average) {
    std::vector<int> labels;
    const bool region = cfg.aggregation == AggregationMethod::mlp_hist_region;
    Eigen::MatrixXd x(static_cast<Eigen::Index>(all.size()), kAggregatorInputDim);
    for (std::size_t i = 0; i < all.size(); ++i) {
      const auto in = aggregator_input(score_histogram(scores.train[i]), all[i].ref.region_index, region);
      for (int c = 0; c < kAggregatorInputDim; ++c) x(static_cast<Eigen::Index>(i), c) = in[static_cast<std::size_t>(c)];
      labels.push_back(all[i].ref.label);
    }
    AggregatorOptions opts = cfg.aggregator;
    opts.seed = mix_seed(seed, 0xa66);
    AggregatorMlp::train(x, labels, opts, region).save(dir / "aggregator");
  }
  write_json(dir / "model.json", {{"version", version_string()},
                                  {"config", cfg.to_json()},
                                  {"threshold", s2.threshold},
                                  {"labeled_electrodes", all.size()},
                                  {"stage1", scores.diagnostics}});
}

void export_features(const PipelineConfig& cfg) {
  const PreprocessedData data = load_and_preprocess(cfg, nullptr);
  const auto all = labeled_electrodes(data);
  std::vector<std::size_t> which(all.size());
  std::iota(which.begin(), which.end(), std::size_t{0});
  std::optional<NmfModel> nmf;
  if (cfg.mask.nmf) {
    nmf = in_stage("features", "nmf", [&] { return fit_fold_nmf(data, all, which, cfg.nmf, mix_seed(cfg.seed, 0x6e6d66)); });
  }
  const FeatureBlock block = in_stage("features", "", [&] { return build_features(data, all, which, nmf ? &*nmf : nullptr, cfg.mask); });
  std::vector<FeatureRowKey> keys;
  for (const auto& le : all) {
    const auto& d = data.subjects[le.subject];
    for (const auto& t : d.trials) {
      keys.push_back({le.ref.subject, le.ref.electrode, t.task, t.trial_id,
                      le.ref.label == 1 ? ElectrodeLabel::critical : ElectrodeLabel::non_critical});
    }
  }
  fs::create_directories(cfg.output);
  write_text_atomic(cfg.output / "features.csv", csv_text([&](std::ostream& os) { write_feature_csv(os, keys, block.x); }));
  if (nmf) save_nmf(*nmf, cfg.output / "nmf");
}

std::vector<GridRow> run_grid(const PipelineConfig& cfg) {
  bool hit = false;
  PipelineConfig base = cfg;
  if (!base.cache_dir) base.cache_dir = cfg.output / "cache";
  const PreprocessedData data = load_and_preprocess(base, &hit);
  const GridAxes axes_in = cfg.grid.masks.empty() || cfg.grid.classifiers.empty() || cfg.grid.aggregations.empty()
                               ? default_grid(cfg.classifier)
                               : cfg.grid;

  struct Cell {
    PipelineConfig config;
    std::size_t index = 0;
  };
  // Cells sharing a mask and classifier share stage-1 scores, so they run in
  // sequence inside one group and only the first computes them.
  std::vector<std::vector<Cell>> groups;
  std::size_t index = 0;
  for (const auto& mask : axes_in.masks) {
    for (const auto& clf : axes_in.classifiers) {
      std::vector<Cell> group;
      for (auto agg : axes_in.aggregations) {
        Cell c{base, index};
        c.config.mask = mask;
        c.config.classifier = clf;
        c.config.aggregation = agg;
        char name[16];
        std::snprintf(name, sizeof name, "%03zu", index);
        c.config.output = cfg.output / "cells" /
                          (std::string(name) + "_" + mask.to_string() + "_" + std::string(to_string(clf.kind)) + "_" +
                           std::string(to_string(agg)));
        group.push_back(std::move(c));
        ++index;
      }
      groups.push_back(std::move(group));
    }
  }
  std::vector<GridRow> rows(index);
  parallel_for(groups.size(), cfg.threads, [&](std::size_t g) {
    for (const auto& cell : groups[g]) {
      const RunResult r = run_pipeline(cell.config, &data);
      rows[cell.index] = {cell.config.mask.to_string(), std::string(to_string(cell.config.classifier.kind)),
                          std::string(to_string(cell.config.aggregation)), r.report.pooled, r.report.fold_mean};
    }
  });

  auto num = [](const std::optional<double>& v) {
    if (!v) return std::string("");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    return std::string(buf);
  };
  std::ostringstream csv;
  csv << "mask,classifier,aggregation,roc_auc,pr_auc,accuracy,precision,recall,f1,balanced_accuracy,"
         "roc_auc_fold_mean,pr_auc_fold_mean\n";
  json jrows = json::array();
  for (const auto& r : rows) {
    csv << r.mask << ',' << r.classifier << ',' << r.aggregation << ',' << num(r.pooled.roc_auc) << ','
        << num(r.pooled.pr_auc) << ',' << num(r.pooled.accuracy) << ',' << num(r.pooled.precision) << ','
        << num(r.pooled.recall) << ',' << num(r.pooled.f1) << ',' << num(r.pooled.balanced_accuracy) << ','
        << num(r.fold_mean.roc_auc) << ',' << num(r.fold_mean.pr_auc) << '\n';
    jrows.push_back({{"mask", r.mask},
                     {"classifier", r.classifier},
                     {"aggregation", r.aggregation},
                     {"pooled", r.pooled.to_json()},
                     {"fold_mean", r.fold_mean.to_json()}});
  }
  json axes{{"features", json::array()}, {"classifiers", json::array()}, {"aggregations", json::array()}};
  for (const auto& m : axes_in.masks) axes["features"].push_back(m.to_string());
  for (const auto& c : axes_in.classifiers) axes["classifiers"].push_back(c.to_json());
  for (auto a : axes_in.aggregations) axes["aggregations"].push_back(to_string(a));
  fs::create_directories(cfg.output);
  write_text_atomic(cfg.output / "grid.csv", csv.str());
  write_text_atomic(cfg.output / "grid.json",
                    json{{"version", version_string()}, {"config", cfg.to_json()}, {"axes", axes}, {"rows", jrows}}.dump(2) + "\n");
  return rows;
}

}  // namespace arrestmap
