#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "arrestmap/dataset.hpp"
#include "arrestmap/mlp.hpp"

namespace arrestmap {

enum class AggregationMethod { average, mlp_hist, mlp_hist_region };

std::string_view to_string(AggregationMethod method);
AggregationMethod parse_aggregation(std::string_view text);

inline constexpr int kHistogramBins = 10;
inline constexpr int kAggregatorInputDim = kHistogramBins + kRegionCount;  // 36
inline constexpr double kFocalEpsilon = 1e-7;

// Normalized trial-score frequencies over 10 uniform bins on [0, 1]; bin k is
// [k/10, (k+1)/10) and the last bin also takes 1.0.
struct ScoreHistogram {
  std::array<double, kHistogramBins> mass{};
};

double aggregate_by_average(std::span<const double> trial_scores);
ScoreHistogram score_histogram(std::span<const double> trial_scores);

// y = 1: -alpha (1 - p)^gamma ln p;  y = 0: -(1 - alpha) p^gamma ln(1 - p).
// p is clamped to [1e-7, 1 - 1e-7].
double focal_loss(double p, int y, double gamma, double alpha);

// focal_loss composed with the logistic function, with its derivative in the logit.
LogitLoss focal_logit_loss(double gamma, double alpha);

// Histogram followed by the region one-hot (zeros when region is unused).
std::array<double, kAggregatorInputDim> aggregator_input(const ScoreHistogram& histogram,
                                                         int region_index, bool include_region);

struct AggregatorOptions {
  int epochs = 20;
  double learning_rate = 1e-3;
  int batch_size = 32;
  double focal_gamma = 2.0;
  double focal_alpha = 0.83;
  std::vector<int> hidden{64, 32};
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static AggregatorOptions from_json(const nlohmann::json& j);
};

// Electrode-level classifier: 36 -> 64 -> 32 -> 1 with ReLU hidden layers,
// trained with focal loss and Adam.
class AggregatorMlp {
 public:
  static AggregatorMlp train(const Eigen::MatrixXd& inputs, std::span<const int> labels,
                             const AggregatorOptions& options, bool uses_region);

  bool uses_region() const { return uses_region_; }
  const std::vector<double>& epoch_losses() const { return epoch_losses_; }
  const Mlp& network() const { return mlp_; }
  Mlp& network() { return mlp_; }

  Eigen::VectorXd score(const Eigen::MatrixXd& inputs) const;

  void save(const std::filesystem::path& stem) const;
  static AggregatorMlp load(const std::filesystem::path& stem);

 private:
  Mlp mlp_;
  bool uses_region_ = true;
  std::vector<double> epoch_losses_;
};

struct ElectrodeVerdict {
  std::string subject;
  int electrode = 0;
  double score = 0.0;
  bool decision = false;
  double threshold = 0.5;
  std::size_t n_trials = 0;
  int fold = 0;
  int label = 0;  // ground truth, carried for metrics (not part of the CSV)
};

// aggregator == nullptr selects averaging.
ElectrodeVerdict predict_electrode(const AggregatorMlp* aggregator,
                                   std::span<const double> trial_scores, int region_index,
                                   double threshold);

// Header `subject,electrode,score,decision,threshold,n_trials,fold`.
void write_verdict_csv(std::ostream& out, std::span<const ElectrodeVerdict> verdicts);

}  // namespace arrestmap
