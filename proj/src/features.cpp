#include "arrestmap/features.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "arrestmap/error.hpp"

namespace arrestmap {

FeatureMask FeatureMask::parse(std::string_view text) {
  if (text == "all") return all();
  FeatureMask mask = none();
  std::string token;
  std::stringstream ss{std::string(text)};
  bool any = false;
  while (std::getline(ss, token, '+')) {
    if (token == "nmf") mask.nmf = true;
    else if (token == "mean_activity" || token == "mean") mask.mean_activity = true;
    else if (token == "region") mask.region = true;
    else if (token == "connectivity") mask.connectivity = true;
    else throw ConfigError("unknown feature family '" + token + "'");
    any = true;
  }
  if (!any) throw ConfigError("empty feature mask");
  return mask;
}

std::string FeatureMask::to_string() const {
  if (*this == all()) return "all";
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += '+';
    out += name;
  };
  add(nmf, "nmf");
  add(mean_activity, "mean_activity");
  add(region, "region");
  add(connectivity, "connectivity");
  return out.empty() ? "none" : out;
}

std::array<bool, kFeatureDim> FeatureMask::active_dims() const {
  std::array<bool, kFeatureDim> on{};
  for (int i = 0; i < kNmfDims; ++i) on[kNmfOffset + i] = nmf;
  on[kMeanActivityIndex] = mean_activity;
  for (int i = 0; i < kRegionCount; ++i) on[kRegionOffset + i] = region;
  on[kStrengthIndex] = on[kCentralityIndex] = on[kClusteringIndex] = connectivity;
  return on;
}

std::array<bool, kFeatureDim> FeatureMask::continuous_dims() const {
  auto on = active_dims();
  for (int i = 0; i < kRegionCount; ++i) on[kRegionOffset + i] = false;
  return on;
}

std::array<std::string, kFeatureDim> feature_names() {
  std::array<std::string, kFeatureDim> names;
  for (int i = 0; i < kNmfDims; ++i) names[kNmfOffset + i] = "nmf_" + std::to_string(i);
  names[kMeanActivityIndex] = "mean_activity";
  for (int i = 0; i < kRegionCount; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "region_%02d", i);
    names[kRegionOffset + i] = buf;
  }
  names[kStrengthIndex] = "strength";
  names[kCentralityIndex] = "eigenvector_centrality";
  names[kClusteringIndex] = "clustering_coefficient";
  return names;
}

double mean_activity(std::span<const float> epoch) {
  if (epoch.empty()) return 0.0;
  double sum = 0.0;
  for (float v : epoch) sum += v;
  return sum / static_cast<double>(epoch.size());
}

std::array<double, kRegionCount> region_one_hot(int region_index) {
  if (region_index < 0 || region_index >= kRegionCount) {
    throw InvalidInput("region index " + std::to_string(region_index) + " outside [0, 25]");
  }
  std::array<double, kRegionCount> v{};
  v[static_cast<std::size_t>(region_index)] = 1.0;
  return v;
}

TrialFeatureVector assemble_trial_features(const TrialEpoch& epoch, const NmfModel* nmf,
                                           const ElectrodeGraphMetrics& graph, int region_index,
                                           const FeatureMask& mask, ElectrodeLabel label) {
  if (graph.electrode != epoch.electrode || graph.trial_id != epoch.trial_id) {
    throw ValidationError("graph metrics for electrode " + std::to_string(graph.electrode) +
                          " trial " + std::to_string(graph.trial_id) +
                          " paired with epoch of electrode " + std::to_string(epoch.electrode) +
                          " trial " + std::to_string(epoch.trial_id));
  }
  TrialFeatureVector out;
  out.electrode = epoch.electrode;
  out.trial_id = epoch.trial_id;
  out.label = label;
  if (mask.nmf) {
    if (nmf == nullptr) throw InvalidInput("NMF features requested without an NMF model");
    const auto corr = nmf_correlations(*nmf, epoch.samples);
    if (static_cast<int>(corr.size()) != kNmfDims) {
      throw InvalidInput("NMF model must have exactly 5 components for the feature layout");
    }
    for (int i = 0; i < kNmfDims; ++i) out.values[kNmfOffset + i] = corr[static_cast<std::size_t>(i)];
  }
  if (mask.mean_activity) out.values[kMeanActivityIndex] = mean_activity(epoch.samples);
  if (mask.region) {
    const auto hot = region_one_hot(region_index);
    for (int i = 0; i < kRegionCount; ++i) out.values[kRegionOffset + i] = hot[static_cast<std::size_t>(i)];
  } else {
    region_one_hot(region_index);  // still validates the index
  }
  if (mask.connectivity) {
    out.values[kStrengthIndex] = graph.metrics.strength;
    out.values[kCentralityIndex] = graph.metrics.centrality;
    out.values[kClusteringIndex] = graph.metrics.clustering;
  }
  return out;
}

void FeatureScaler::fit(const Eigen::MatrixXd& rows, const FeatureMask& mask) {
  if (rows.cols() != kFeatureDim) throw InvalidInput("feature matrix must have 35 columns");
  if (rows.rows() == 0) throw InvalidInput("cannot fit a scaler on zero rows");
  scaled_ = mask.continuous_dims();
  const double n = static_cast<double>(rows.rows());
  for (int d = 0; d < kFeatureDim; ++d) {
    mean_[d] = 0.0;
    std_[d] = 1.0;
    if (!scaled_[d]) continue;
    const double m = rows.col(d).sum() / n;
    const double var = (rows.col(d).array() - m).square().sum() / n;
    mean_[d] = m;
    std_[d] = std::max(std::sqrt(var), kMinStd);
  }
  fitted_ = true;
}

Eigen::MatrixXd FeatureScaler::transform(const Eigen::MatrixXd& rows) const {
  if (!fitted_) throw InvalidInput("scaler used before fit");
  if (rows.cols() != kFeatureDim) throw InvalidInput("feature matrix must have 35 columns");
  Eigen::MatrixXd out = rows;
  for (int d = 0; d < kFeatureDim; ++d) {
    if (!scaled_[d]) continue;
    out.col(d) = (rows.col(d).array() - mean_[d]) / std_[d];
  }
  return out;
}

void write_feature_csv(std::ostream& out, std::span<const FeatureRowKey> keys,
                       const Eigen::MatrixXd& features) {
  if (static_cast<Eigen::Index>(keys.size()) != features.rows() || features.cols() != kFeatureDim) {
    throw InvalidInput("feature CSV keys and matrix disagree");
  }
  out << "subject,electrode,task,trial_id,label";
  for (const auto& name : feature_names()) out << ',' << name;
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const auto& k = keys[i];
    out << k.subject << ',' << k.electrode << ',' << to_string(k.task) << ',' << k.trial_id << ','
        << to_string(k.label);
    for (int d = 0; d < kFeatureDim; ++d) {
      std::snprintf(buf, sizeof buf, "%.9g", features(static_cast<Eigen::Index>(i), d));
      out << ',' << buf;
    }
    out << '\n';
  }
}

}  // namespace arrestmap
