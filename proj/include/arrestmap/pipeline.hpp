#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "arrestmap/aggregate.hpp"
#include "arrestmap/dataset.hpp"
#include "arrestmap/eval.hpp"
#include "arrestmap/features.hpp"
#include "arrestmap/models.hpp"
#include "arrestmap/signal.hpp"

namespace arrestmap {

std::string version_string();

struct NmfStageOptions {
  int components = 5;
  int max_iters = 500;
  double tol = 1e-5;
  std::size_t max_trials = 2000;  // seeded subsample of training trials used for the fit
};

struct GridAxes {
  std::vector<FeatureMask> masks;
  std::vector<ClassifierSpec> classifiers;
  std::vector<AggregationMethod> aggregations;
};

struct PipelineConfig {
  std::filesystem::path dataset;
  SignalKind signal = SignalKind::high_gamma;
  FeatureMask mask = FeatureMask::parse("region+connectivity");
  ClassifierSpec classifier = [] {
    ClassifierSpec s;
    s.kind = ClassifierKind::rbf_svm;
    return s;
  }();
  AggregationMethod aggregation = AggregationMethod::mlp_hist_region;
  AggregatorOptions aggregator;
  ValidationMode validation = ValidationMode::loo;
  int cv_folds = 8;
  int inner_folds = 4;  // cross-fitting folds that produce stage-2 training scores
  NmfStageOptions nmf;
  std::uint64_t seed = 0;
  std::filesystem::path output = "arrestmap-out";
  std::optional<std::filesystem::path> cache_dir;  // default <output>/cache
  unsigned threads = 0;
  GridAxes grid;  // empty axes fall back to the full default grid

  std::filesystem::path resolved_cache_dir() const;

  // Everything that affects results. Output location, cache location and
  // thread count are left out so they cannot change summary.json.
  nlohmann::json to_json() const;
  static PipelineConfig from_json(const nlohmann::json& j);
};

PipelineConfig load_pipeline_config(const std::filesystem::path& path);

// Preprocessed view of one subject: valid electrodes only, in table order.
struct TrialRef {
  Task task = Task::AR;
  int trial_id = 0;
};

struct SubjectData {
  std::string id;
  std::vector<int> electrodes;
  std::vector<int> regions;
  std::vector<ElectrodeLabel> labels;
  std::vector<TrialRef> trials;
  std::vector<TrialEpoch> epochs;   // [electrode row * trials + trial]
  std::vector<NodeMetrics> graph;   // same indexing

  std::size_t index(std::size_t row, std::size_t trial) const { return row * trials.size() + trial; }
};

struct PreprocessedData {
  std::string key;  // cache key (hex)
  double sample_rate = 0.0;
  std::vector<SubjectData> subjects;
};

// CAR, optional high-gamma envelope, epoching and per-trial graph metrics.
// Results are cached under <cache_dir>/pre-<key>; a hit returns identical data.
PreprocessedData preprocess_dataset(const Dataset& dataset, SignalKind kind,
                                    const std::filesystem::path& cache_dir, unsigned threads,
                                    bool* cache_hit = nullptr);

// A labeled electrode with its location in PreprocessedData.
struct LabeledElectrode {
  ElectrodeRef ref;
  std::size_t subject = 0;
  std::size_t row = 0;
};

std::vector<LabeledElectrode> labeled_electrodes(const PreprocessedData& data);

struct RunResult {
  EvalReport report;
  std::vector<ElectrodeVerdict> verdicts;
  nlohmann::json summary;
  bool preprocess_cache_hit = false;
  bool stage1_cache_hit = false;
};

// Full cross-validated run. Writes summary.json, verdicts.csv, roc.csv and pr.csv
// under config.output. `preloaded` skips loading and preprocessing when given.
RunResult run_pipeline(const PipelineConfig& config, const PreprocessedData* preloaded = nullptr);

// Fits every stage on all labeled electrodes and stores the models in config.output.
void train_final_models(const PipelineConfig& config);

// Writes features.csv for every labeled electrode-trial (NMF fit on all of them).
void export_features(const PipelineConfig& config);

struct GridRow {
  std::string mask;
  std::string classifier;
  std::string aggregation;
  MetricSet pooled;
  MetricSet fold_mean;
};

// Cross product masks x classifiers x aggregations; writes grid.csv and grid.json.
std::vector<GridRow> run_grid(const PipelineConfig& config);

}  // namespace arrestmap
