#include "arrestmap/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "arrestmap/binary_io.hpp"
#include "arrestmap/error.hpp"
#include "arrestmap/features.hpp"
#include "arrestmap/numeric.hpp"

namespace arrestmap {

std::string_view to_string(AggregationMethod method) {
  switch (method) {
    case AggregationMethod::average: return "average";
    case AggregationMethod::mlp_hist: return "mlp_hist";
    case AggregationMethod::mlp_hist_region: return "mlp_hist_region";
  }
  return "?";
}

AggregationMethod parse_aggregation(std::string_view text) {
  for (auto m : {AggregationMethod::average, AggregationMethod::mlp_hist,
                 AggregationMethod::mlp_hist_region}) {
    if (to_string(m) == text) return m;
  }
  throw ConfigError("unknown aggregation method '" + std::string(text) + "'");
}

double aggregate_by_average(std::span<const double> scores) {
  if (scores.empty()) throw InvalidInput("cannot average zero trial scores");
  double sum = 0.0;
  for (double s : scores) sum += s;
  return sum / static_cast<double>(scores.size());
}

ScoreHistogram score_histogram(std::span<const double> scores) {
  if (scores.empty()) throw InvalidInput("cannot build a histogram of zero trial scores");
  ScoreHistogram h;
  for (double s : scores) {
    if (!(s >= 0.0 && s <= 1.0)) {
      throw InvalidInput("trial score " + std::to_string(s) + " outside [0, 1]");
    }
    const int bin = std::min(kHistogramBins - 1, static_cast<int>(s * kHistogramBins));
    h.mass[static_cast<std::size_t>(bin)] += 1.0;
  }
  for (double& m : h.mass) m /= static_cast<double>(scores.size());
  return h;
}

double focal_loss(double p, int y, double gamma, double alpha) {
  p = std::clamp(p, kFocalEpsilon, 1.0 - kFocalEpsilon);
  if (y == 1) return -alpha * std::pow(1.0 - p, gamma) * std::log(p);
  return -(1.0 - alpha) * std::pow(p, gamma) * std::log(1.0 - p);
}

LogitLoss focal_logit_loss(double gamma, double alpha) {
  return [=](double z, int y, double* dz) {
    const double raw = sigmoid(z);
    const double p = std::clamp(raw, kFocalEpsilon, 1.0 - kFocalEpsilon);
    const bool clamped = p != raw;
    if (dz) {
      if (clamped) {
        *dz = 0.0;
      } else if (y == 1) {
        *dz = alpha * std::pow(1.0 - p, gamma) * (gamma * p * std::log(p) - (1.0 - p));
      } else {
        *dz = (1.0 - alpha) * std::pow(p, gamma) * (p - gamma * (1.0 - p) * std::log(1.0 - p));
      }
    }
    return focal_loss(p, y, gamma, alpha);
  };
}

std::array<double, kAggregatorInputDim> aggregator_input(const ScoreHistogram& histogram,
                                                         int region_index, bool include_region) {
  std::array<double, kAggregatorInputDim> in{};
  std::copy(histogram.mass.begin(), histogram.mass.end(), in.begin());
  const auto hot = region_one_hot(region_index);
  if (include_region) std::copy(hot.begin(), hot.end(), in.begin() + kHistogramBins);
  return in;
}

nlohmann::json AggregatorOptions::to_json() const {
  return {{"epochs", epochs},
          {"learning_rate", learning_rate},
          {"batch_size", batch_size},
          {"focal_gamma", focal_gamma},
          {"focal_alpha", focal_alpha},
          {"hidden", hidden}};
}

AggregatorOptions AggregatorOptions::from_json(const nlohmann::json& j) {
  AggregatorOptions o;
  try {
    o.epochs = j.value("epochs", o.epochs);
    o.learning_rate = j.value("learning_rate", o.learning_rate);
    o.batch_size = j.value("batch_size", o.batch_size);
    o.focal_gamma = j.value("focal_gamma", o.focal_gamma);
    o.focal_alpha = j.value("focal_alpha", o.focal_alpha);
    if (j.contains("hidden")) o.hidden = j["hidden"].get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad aggregator options: ") + e.what());
  }
  if (o.epochs < 1) throw ConfigError("aggregator epochs must be >= 1");
  if (!(o.focal_alpha > 0.0 && o.focal_alpha < 1.0)) throw ConfigError("focal_alpha must be in (0, 1)");
  if (o.focal_gamma < 0.0) throw ConfigError("focal_gamma must be >= 0");
  return o;
}

AggregatorMlp AggregatorMlp::train(const Eigen::MatrixXd& inputs, std::span<const int> labels,
                                   const AggregatorOptions& options, bool uses_region) {
  if (inputs.cols() != kAggregatorInputDim) {
    throw InvalidInput("aggregator input must be 36-dimensional, got " + std::to_string(inputs.cols()));
  }
  bool pos = false, neg = false;
  for (int y : labels) (y == 1 ? pos : neg) = true;
  if (!pos || !neg) throw TrainingError("aggregator training labels contain a single class");

  std::vector<int> sizes{kAggregatorInputDim};
  sizes.insert(sizes.end(), options.hidden.begin(), options.hidden.end());
  sizes.push_back(1);
  AggregatorMlp agg;
  agg.uses_region_ = uses_region;
  agg.mlp_ = Mlp(sizes, options.seed);
  MlpTrainOptions train;
  train.epochs = options.epochs;
  train.batch_size = options.batch_size;
  train.adam.learning_rate = options.learning_rate;
  train.seed = options.seed ^ 0xa66e6a7eULL;
  agg.epoch_losses_ = train_mlp(agg.mlp_, inputs, labels,
                                focal_logit_loss(options.focal_gamma, options.focal_alpha), train);
  return agg;
}

Eigen::VectorXd AggregatorMlp::score(const Eigen::MatrixXd& inputs) const {
  if (inputs.cols() != kAggregatorInputDim) {
    throw InvalidInput("aggregator input must be 36-dimensional");
  }
  return mlp_.predict_proba(inputs);
}

void AggregatorMlp::save(const std::filesystem::path& stem) const {
  const auto& p = mlp_.parameters();
  nlohmann::json meta{{"kind", "aggregator_mlp"},
                      {"layers", mlp_.layer_sizes()},
                      {"uses_region", uses_region_},
                      {"weight_count", p.size()},
                      {"weights", stem.filename().string() + ".f32"}};
  write_json(stem.string() + ".json", meta);
  write_f32(stem.string() + ".f32", std::span<const double>(p.data(), static_cast<std::size_t>(p.size())));
}

AggregatorMlp AggregatorMlp::load(const std::filesystem::path& stem) {
  const auto meta = read_json(stem.string() + ".json");
  if (meta.value("kind", "") != "aggregator_mlp") {
    throw FormatError(stem.string() + ".json is not an aggregator model");
  }
  AggregatorMlp agg;
  agg.uses_region_ = meta.at("uses_region").get<bool>();
  agg.mlp_ = Mlp(meta.at("layers").get<std::vector<int>>(), 0);
  if (agg.mlp_.input_dim() != kAggregatorInputDim) throw FormatError("aggregator input must be 36-dimensional");
  const auto w = read_f32(stem.string() + ".f32", static_cast<std::size_t>(agg.mlp_.parameters().size()));
  agg.mlp_.parameters() = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
  return agg;
}

ElectrodeVerdict predict_electrode(const AggregatorMlp* aggregator,
                                   std::span<const double> trial_scores, int region_index,
                                   double threshold) {
  if (trial_scores.empty()) throw InvalidInput("electrode has no trial scores");
  ElectrodeVerdict v;
  v.n_trials = trial_scores.size();
  v.threshold = threshold;
  if (aggregator == nullptr) {
    v.score = aggregate_by_average(trial_scores);
  } else {
    const auto in = aggregator_input(score_histogram(trial_scores), region_index,
                                     aggregator->uses_region());
    Eigen::MatrixXd row(1, kAggregatorInputDim);
    for (int d = 0; d < kAggregatorInputDim; ++d) row(0, d) = in[static_cast<std::size_t>(d)];
    v.score = aggregator->score(row)(0);
  }
  v.decision = v.score >= threshold;
  return v;
}

void write_verdict_csv(std::ostream& out, std::span<const ElectrodeVerdict> verdicts) {
  out << "subject,electrode,score,decision,threshold,n_trials,fold\n";
  char score[32], thr[32];
  for (const auto& v : verdicts) {
    std::snprintf(score, sizeof score, "%.17g", v.score);
    std::snprintf(thr, sizeof thr, "%.17g", v.threshold);
    out << v.subject << ',' << v.electrode << ',' << score << ',' << (v.decision ? 1 : 0) << ','
        << thr << ',' << v.n_trials << ',' << v.fold << '\n';
  }
}

}  // namespace arrestmap
