#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace arrestmap {

enum class ValidationMode { cv8, loo };

std::string_view to_string(ValidationMode mode);
ValidationMode parse_validation_mode(std::string_view text);

// A labeled (critical / non-critical), valid electrode.
struct ElectrodeRef {
  std::string subject;
  int electrode = 0;
  int label = 0;
  int region_index = 0;
};

struct Fold {
  std::vector<std::size_t> train;  // indices into the electrode list
  std::vector<std::size_t> test;
};

struct FoldPlan {
  ValidationMode mode = ValidationMode::loo;
  std::uint64_t seed = 0;
  std::vector<Fold> folds;
  std::vector<std::string> fold_subject;  // loo: held-out subject per fold
};

// cv8: stratified seeded shuffle dealt round-robin into `fold_count` folds.
// loo: one fold per subject, in order of first appearance.
FoldPlan make_folds(std::span<const ElectrodeRef> electrodes, ValidationMode mode,
                    std::uint64_t seed, int fold_count = 8);

// Mann-Whitney form: P(score+ > score-) + 0.5 P(tie).
double roc_auc(std::span<const double> scores, std::span<const int> labels);

// Average precision: sum over descending score blocks of delta-recall x precision.
double pr_auc(std::span<const double> scores, std::span<const int> labels);

struct CurvePoint {
  double x = 0.0;
  double y = 0.0;
};
std::vector<CurvePoint> roc_curve(std::span<const double> scores, std::span<const int> labels);
std::vector<CurvePoint> pr_curve(std::span<const double> scores, std::span<const int> labels);

// Candidates: 0, 1 and midpoints of adjacent distinct scores; predicts positive
// when score >= threshold; ties in F1 go to the higher threshold.
double select_threshold_max_f1(std::span<const double> scores, std::span<const int> labels);

struct ThresholdMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double balanced_accuracy = 0.0;
};

ThresholdMetrics confusion_metrics(std::span<const int> predictions, std::span<const int> labels);
ThresholdMetrics thresholded_metrics(std::span<const double> scores, std::span<const int> labels,
                                     double threshold);

struct WilcoxonResult {
  double statistic = 0.0;  // min(W+, W-)
  double p_value = 1.0;    // two-sided
  int n = 0;               // nonzero differences
  bool exact = false;
};

// Zero differences dropped, |d| mid-ranked; exact null distribution for n <= 12,
// normal approximation with continuity and tie correction otherwise.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b);

struct MetricSet {
  std::optional<double> roc_auc;
  std::optional<double> pr_auc;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double balanced_accuracy = 0.0;
  double threshold = 0.0;
  std::size_t n = 0;
  std::size_t n_positive = 0;

  nlohmann::json to_json() const;
};

// Ranking metrics from scores; thresholded metrics from the given decisions
// (each verdict keeps the threshold of its own fold).
MetricSet compute_metrics(std::span<const double> scores, std::span<const int> decisions,
                          std::span<const int> labels, double threshold);

struct EvalReport {
  std::vector<MetricSet> folds;
  MetricSet pooled;     // over concatenated held-out verdicts
  MetricSet fold_mean;  // per-fold values averaged over folds where defined
  std::vector<CurvePoint> roc;
  std::vector<CurvePoint> pr;

  nlohmann::json to_json() const;
};

void write_curve_csv(std::ostream& out, std::span<const CurvePoint> points, std::string_view x_name,
                     std::string_view y_name);

}  // namespace arrestmap
