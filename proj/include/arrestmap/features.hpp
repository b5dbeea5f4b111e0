#pragma once

#include <array>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "arrestmap/dataset.hpp"
#include "arrestmap/graph.hpp"
#include "arrestmap/nmf.hpp"
#include "arrestmap/signal.hpp"

namespace arrestmap {

// Fixed layout of the trial feature vector.
inline constexpr int kNmfOffset = 0;
inline constexpr int kNmfDims = 5;
inline constexpr int kMeanActivityIndex = 5;
inline constexpr int kRegionOffset = 6;
inline constexpr int kStrengthIndex = 32;
inline constexpr int kCentralityIndex = 33;
inline constexpr int kClusteringIndex = 34;
inline constexpr int kFeatureDim = 35;

struct FeatureMask {
  bool nmf = true;
  bool mean_activity = true;
  bool region = true;
  bool connectivity = true;

  static FeatureMask all() { return {}; }
  static FeatureMask none() { return {false, false, false, false}; }

  // Accepts "all", or family names joined by '+' ("region+connectivity").
  static FeatureMask parse(std::string_view text);
  std::string to_string() const;

  // Per-dimension flags over the 35-wide layout.
  std::array<bool, kFeatureDim> active_dims() const;
  // Active dims that are standardized (everything except the one-hot block).
  std::array<bool, kFeatureDim> continuous_dims() const;

  bool operator==(const FeatureMask&) const = default;
};

std::array<std::string, kFeatureDim> feature_names();

struct TrialFeatureVector {
  std::array<double, kFeatureDim> values{};
  int electrode = 0;
  int trial_id = 0;
  ElectrodeLabel label = ElectrodeLabel::untested;
};

struct ElectrodeGraphMetrics {
  int electrode = 0;
  int trial_id = 0;
  NodeMetrics metrics;
};

double mean_activity(std::span<const float> epoch);

std::array<double, kRegionCount> region_one_hot(int region_index);

// nmf may be null when the mask disables that family.
TrialFeatureVector assemble_trial_features(const TrialEpoch& epoch, const NmfModel* nmf,
                                           const ElectrodeGraphMetrics& graph, int region_index,
                                           const FeatureMask& mask,
                                           ElectrodeLabel label = ElectrodeLabel::untested);

// Z-scores the continuous active dimensions using statistics of the rows it was
// fit on; masked and one-hot dimensions pass through untouched.
class FeatureScaler {
 public:
  static constexpr double kMinStd = 1e-8;

  void fit(const Eigen::MatrixXd& rows, const FeatureMask& mask);
  Eigen::MatrixXd transform(const Eigen::MatrixXd& rows) const;

  const std::array<double, kFeatureDim>& mean() const { return mean_; }
  const std::array<double, kFeatureDim>& stddev() const { return std_; }
  const std::array<bool, kFeatureDim>& scaled_dims() const { return scaled_; }
  bool fitted() const { return fitted_; }

  // Keys of the rows the scaler was fit on; the pipeline checks these are
  // disjoint from the held-out rows of the fold.
  std::set<std::string> provenance;

 private:
  std::array<double, kFeatureDim> mean_{};
  std::array<double, kFeatureDim> std_{};
  std::array<bool, kFeatureDim> scaled_{};
  bool fitted_ = false;
};

// Header is `subject,electrode,task,trial_id,label,<35 feature names>`.
struct FeatureRowKey {
  std::string subject;
  int electrode = 0;
  Task task = Task::AR;
  int trial_id = 0;
  ElectrodeLabel label = ElectrodeLabel::untested;
};
void write_feature_csv(std::ostream& out, std::span<const FeatureRowKey> keys,
                       const Eigen::MatrixXd& features);

}  // namespace arrestmap
