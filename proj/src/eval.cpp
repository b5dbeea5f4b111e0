#include "arrestmap/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>

#include "arrestmap/error.hpp"

namespace arrestmap {

std::string_view to_string(ValidationMode mode) { return mode == ValidationMode::cv8 ? "cv8" : "loo"; }

ValidationMode parse_validation_mode(std::string_view text) {
  if (text == "cv8") return ValidationMode::cv8;
  if (text == "loo") return ValidationMode::loo;
  throw ConfigError("unknown validation mode '" + std::string(text) + "'");
}

FoldPlan make_folds(std::span<const ElectrodeRef> electrodes, ValidationMode mode,
                    std::uint64_t seed, int fold_count) {
  FoldPlan plan;
  plan.mode = mode;
  plan.seed = seed;
  const std::size_t n = electrodes.size();

  if (mode == ValidationMode::cv8) {
    if (fold_count < 2) throw ConfigError("need at least 2 folds");
    if (n < static_cast<std::size_t>(fold_count)) {
      throw ConfigError("cv8 needs at least " + std::to_string(fold_count) +
                        " labeled electrodes, have " + std::to_string(n));
    }
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < n; ++i) (electrodes[i].label == 1 ? pos : neg).push_back(i);
    std::mt19937_64 rng(seed);
    std::shuffle(pos.begin(), pos.end(), rng);
    std::shuffle(neg.begin(), neg.end(), rng);
    std::vector<std::size_t> order = pos;
    order.insert(order.end(), neg.begin(), neg.end());
    std::vector<int> fold_of(n);
    for (std::size_t r = 0; r < order.size(); ++r) {
      fold_of[order[r]] = static_cast<int>(r % static_cast<std::size_t>(fold_count));
    }
    plan.folds.resize(static_cast<std::size_t>(fold_count));
    for (std::size_t i = 0; i < n; ++i) {
      for (int f = 0; f < fold_count; ++f) {
        (fold_of[i] == f ? plan.folds[static_cast<std::size_t>(f)].test
                         : plan.folds[static_cast<std::size_t>(f)].train)
            .push_back(i);
      }
    }
    return plan;
  }

  std::vector<std::string> subjects;
  for (const auto& e : electrodes) {
    if (std::find(subjects.begin(), subjects.end(), e.subject) == subjects.end()) {
      subjects.push_back(e.subject);
    }
  }
  if (subjects.size() < 2) {
    throw ConfigError("leave-one-subject-out needs at least 2 subjects with labeled electrodes");
  }
  for (const auto& s : subjects) {
    Fold fold;
    for (std::size_t i = 0; i < n; ++i) (electrodes[i].subject == s ? fold.test : fold.train).push_back(i);
    plan.folds.push_back(std::move(fold));
    plan.fold_subject.push_back(s);
  }
  return plan;
}

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw InvalidInput("score / label count mismatch");
}

// Indices sorted by descending score.
std::vector<std::size_t> descending(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double n_pos = 0, n_neg = 0, rank_sum = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[idx[k]] == 1) rank_sum += mid_rank;
    }
    i = j;
  }
  for (int y : labels) (y == 1 ? n_pos : n_neg) += 1.0;
  if (n_pos == 0 || n_neg == 0) throw UndefinedMetric("ROC-AUC needs both classes");
  const double u = rank_sum - n_pos * (n_pos + 1.0) / 2.0;
  return u / (n_pos * n_neg);
}

double pr_auc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const double total_pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  if (total_pos == 0) throw UndefinedMetric("PR-AUC needs at least one positive");
  const auto idx = descending(scores);
  double tp = 0, fp = 0, prev_recall = 0, ap = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      (labels[idx[j]] == 1 ? tp : fp) += 1.0;
      ++j;
    }
    const double recall = tp / total_pos;
    const double precision = tp / (tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

std::vector<CurvePoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const double pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const double neg = static_cast<double>(labels.size()) - pos;
  if (pos == 0 || neg == 0) throw UndefinedMetric("ROC curve needs both classes");
  const auto idx = descending(scores);
  std::vector<CurvePoint> out{{0.0, 0.0}};
  double tp = 0, fp = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      (labels[idx[j]] == 1 ? tp : fp) += 1.0;
      ++j;
    }
    out.push_back({fp / neg, tp / pos});
    i = j;
  }
  return out;
}

std::vector<CurvePoint> pr_curve(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const double pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  if (pos == 0) throw UndefinedMetric("PR curve needs at least one positive");
  const auto idx = descending(scores);
  std::vector<CurvePoint> out;
  double tp = 0, fp = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      (labels[idx[j]] == 1 ? tp : fp) += 1.0;
      ++j;
    }
    out.push_back({tp / pos, tp / (tp + fp)});
    i = j;
  }
  return out;
}

ThresholdMetrics confusion_metrics(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw InvalidInput("prediction / label count mismatch");
  double tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool p = predictions[i] == 1;
    const bool y = labels[i] == 1;
    if (p && y) tp += 1;
    else if (p) fp += 1;
    else if (y) fn += 1;
    else tn += 1;
  }
  ThresholdMetrics m;
  const double n = tp + fp + tn + fn;
  m.accuracy = n > 0 ? (tp + tn) / n : 0.0;
  m.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  m.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  // A rate over an empty class is taken as 1 so a single-class fold is not penalized twice.
  const double tpr = tp + fn > 0 ? tp / (tp + fn) : 1.0;
  const double tnr = tn + fp > 0 ? tn / (tn + fp) : 1.0;
  m.balanced_accuracy = 0.5 * (tpr + tnr);
  return m;
}

ThresholdMetrics thresholded_metrics(std::span<const double> scores, std::span<const int> labels,
                                     double threshold) {
  check_inputs(scores, labels);
  std::vector<int> pred(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) pred[i] = scores[i] >= threshold ? 1 : 0;
  return confusion_metrics(pred, labels);
}

double select_threshold_max_f1(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  if (std::count(labels.begin(), labels.end(), 1) == 0) {
    throw UndefinedMetric("F1 threshold selection needs at least one positive");
  }
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<double> candidates{0.0, 1.0};
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) candidates.push_back(0.5 * (sorted[i] + sorted[i + 1]));
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  double best_f1 = -1.0, best = 0.0;
  for (double c : candidates) {
    const double f1 = thresholded_metrics(scores, labels, c).f1;
    if (f1 >= best_f1) {  // ascending scan: >= keeps the higher threshold on ties
      best_f1 = f1;
      best = c;
    }
  }
  return best;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidInput("Wilcoxon test needs paired samples");
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    if (diff != 0.0) d.push_back(diff);
  }
  const int n = static_cast<int>(d.size());
  if (n < 5) {
    throw InsufficientData("Wilcoxon signed-rank test needs at least 5 nonzero differences, have " +
                           std::to_string(n));
  }

  // Doubled mid-ranks keep everything integral.
  std::vector<std::size_t> idx(d.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return std::abs(d[x]) < std::abs(d[y]); });
  std::vector<long> rank2(d.size());
  double tie_term = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && std::abs(d[idx[j]]) == std::abs(d[idx[i]])) ++j;
    const long r2 = static_cast<long>(i + 1 + j);  // 2 * mid-rank of ranks i+1..j
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    for (std::size_t k = i; k < j; ++k) rank2[idx[k]] = r2;
    i = j;
  }
  long w_plus2 = 0, total2 = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    total2 += rank2[i];
    if (d[i] > 0) w_plus2 += rank2[i];
  }
  const long stat2 = std::min(w_plus2, total2 - w_plus2);

  WilcoxonResult r;
  r.n = n;
  r.statistic = static_cast<double>(stat2) / 2.0;
  if (n <= 12) {
    // Null distribution of doubled W+ over all 2^n sign assignments.
    std::vector<double> count(static_cast<std::size_t>(total2 + 1), 0.0);
    count[0] = 1.0;
    for (long rk : rank2) {
      for (long s = total2; s >= rk; --s) count[static_cast<std::size_t>(s)] += count[static_cast<std::size_t>(s - rk)];
    }
    double extreme = 0.0;
    for (long s = 0; s <= total2; ++s) {
      if (std::min(s, total2 - s) <= stat2) extreme += count[static_cast<std::size_t>(s)];
    }
    r.p_value = std::min(1.0, extreme / std::ldexp(1.0, n));
    r.exact = true;
  } else {
    const double nn = n;
    const double mean = nn * (nn + 1.0) / 4.0;
    const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
    const double z = std::min(0.0, (r.statistic - mean + 0.5) / std::sqrt(var));
    r.p_value = std::min(1.0, 2.0 * normal_cdf(z));
    r.exact = false;
  }
  return r;
}

MetricSet compute_metrics(std::span<const double> scores, std::span<const int> decisions,
                          std::span<const int> labels, double threshold) {
  MetricSet m;
  m.n = labels.size();
  m.n_positive = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  m.threshold = threshold;
  if (m.n_positive > 0 && m.n_positive < m.n) m.roc_auc = roc_auc(scores, labels);
  if (m.n_positive > 0) m.pr_auc = pr_auc(scores, labels);
  const auto t = confusion_metrics(decisions, labels);
  m.accuracy = t.accuracy;
  m.precision = t.precision;
  m.recall = t.recall;
  m.f1 = t.f1;
  m.balanced_accuracy = t.balanced_accuracy;
  return m;
}

nlohmann::json MetricSet::to_json() const {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"roc_auc", opt(roc_auc)},
          {"pr_auc", opt(pr_auc)},
          {"accuracy", accuracy},
          {"precision", precision},
          {"recall", recall},
          {"f1", f1},
          {"balanced_accuracy", balanced_accuracy},
          {"threshold", threshold},
          {"n", n},
          {"n_positive", n_positive}};
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["pooled"] = pooled.to_json();
  j["fold_mean"] = fold_mean.to_json();
  j["folds"] = nlohmann::json::array();
  for (const auto& f : folds) j["folds"].push_back(f.to_json());
  return j;
}

void write_curve_csv(std::ostream& out, std::span<const CurvePoint> points, std::string_view x_name,
                     std::string_view y_name) {
  out << x_name << ',' << y_name << '\n';
  char buf[64];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", p.x, p.y);
    out << buf;
  }
}

}  // namespace arrestmap
