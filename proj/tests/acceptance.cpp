// Acceptance gate: prints one PASS/FAIL line per criterion and exits non-zero
// when any attainable criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "arrestmap/aggregate.hpp"
#include "arrestmap/eval.hpp"
#include "arrestmap/graph.hpp"
#include "arrestmap/mlp.hpp"
#include "arrestmap/models.hpp"
#include "arrestmap/nmf.hpp"
#include "arrestmap/parallel.hpp"
#include "arrestmap/pipeline.hpp"
#include "arrestmap/signal.hpp"
#include "arrestmap/synthgen.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace arrestmap;

namespace {

// Tolerances.
constexpr double kSeparableRoc = 0.90;
constexpr double kSeparablePr = 0.70;
constexpr double kRuntimeBudgetS = 600.0;
constexpr double kNullHalfWidth = 0.10;
constexpr double kAblationMargin = 0.03;
constexpr double kAggregationInversion = 0.02;
constexpr double kMonotoneInversion = 0.02;
constexpr double kGraphTol = 1e-10;
constexpr double kAucTol = 1e-12;
constexpr double kGradientTol = 1e-4;
constexpr double kKktTol = 1e-3;
constexpr double kFocalTol = 1e-12;
constexpr double kCarTol = 1e-9;
constexpr double kEnvelopeTol = 0.02;

struct Outcome {
  std::string id;
  bool pass = false;
  std::string detail;
  bool attainable = true;
};

std::vector<Outcome> outcomes;

void report(std::string id, bool pass, std::string detail, bool attainable = true) {
  std::printf("%s  %-3s %s\n", pass ? "PASS" : "FAIL", id.c_str(), detail.c_str());
  std::fflush(stdout);
  outcomes.push_back({std::move(id), pass, std::move(detail), attainable});
}

std::string f4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class Workspace {
 public:
  explicit Workspace(fs::path root) : root_(std::move(root)) {
    fs::remove_all(root_);
    fs::create_directories(root_);
  }

  // Generates (once) an 8- or 16-subject synthetic dataset.
  fs::path dataset(int subjects, int words_per_task, double effect, std::uint64_t seed) {
    const std::string name = "ds-" + std::to_string(subjects) + "s-w" + std::to_string(words_per_task) + "-e" +
                             f4(effect) + "-s" + std::to_string(seed);
    const fs::path dir = root_ / name;
    if (!fs::exists(dir / "manifest.json")) {
      SynthConfig c;
      c.n_subjects = subjects;
      c.effect_size = effect;
      c.seed = seed;
      if (words_per_task > 0) {
        const int w = words_per_task;
        c.trials_per_task = {{Task::AR, 2 * w}, {Task::AN, w}, {Task::SC, w}, {Task::WR, 2 * w}, {Task::PN, 2 * w}};
      }
      write_synthetic_dataset(generate_dataset(c, 1), c, dir);
    }
    return dir;
  }

  PipelineConfig config(const fs::path& dataset, const std::string& mask, ClassifierKind kind,
                        AggregationMethod aggregation, std::uint64_t seed) {
    PipelineConfig c;
    c.dataset = dataset;
    c.mask = FeatureMask::parse(mask);
    c.classifier.kind = kind;
    c.aggregation = aggregation;
    c.seed = seed;
    c.threads = 1;
    c.output = root_ / ("run-" + std::to_string(runs_++));
    c.cache_dir = root_ / "cache";
    return c;
  }

  const fs::path& root() const { return root_; }

 private:
  fs::path root_;
  int runs_ = 0;
};

double pooled_roc(const RunResult& r) { return r.report.pooled.roc_auc.value_or(std::nan("")); }

double best_config_roc(Workspace& ws, const fs::path& ds, std::uint64_t seed) {
  return pooled_roc(run_pipeline(
      ws.config(ds, "region+connectivity", ClassifierKind::rbf_svm, AggregationMethod::mlp_hist_region, seed)));
}

// ---------------------------------------------------------------------------

void criterion_1() {
  report("1", false,
         "clinical LOO ROC-AUC 0.87 / PR-AUC 0.57 need the clinical ECoG/ESM recordings, which are not "
         "available; synthetic targets are criteria 2-5",
         false);
}

void criterion_2(Workspace& ws) {
  const auto start = std::chrono::steady_clock::now();
  const fs::path ds = ws.dataset(8, 0, 5.0, 1);
  const auto r = run_pipeline(
      ws.config(ds, "region+connectivity", ClassifierKind::rbf_svm, AggregationMethod::mlp_hist_region, 1));
  const double elapsed = seconds_since(start);
  const double roc = pooled_roc(r);
  const double pr = r.report.pooled.pr_auc.value_or(std::nan(""));
  report("2", roc >= kSeparableRoc && pr >= kSeparablePr && elapsed < kRuntimeBudgetS,
         "separable run (8x64, 400 trials, effect 5): ROC-AUC " + f4(roc) + " (>= 0.90), PR-AUC " + f4(pr) +
             " (>= 0.70), " + f4(elapsed) + " s single-threaded (< 600)");
}

void criterion_3(Workspace& ws) {
  bool pass = true;
  std::string values;
  for (std::uint64_t seed : {1, 2, 3}) {
    const double roc = best_config_roc(ws, ws.dataset(8, 10, 0.0, seed), seed);
    pass = pass && std::abs(roc - 0.5) <= kNullHalfWidth;
    values += (values.empty() ? "" : ", ") + f4(roc);
  }
  report("3", pass, "null control (effect 0) ROC-AUC per seed: " + values + " (each within 0.5 +/- 0.10)");
}

void criterion_4(Workspace& ws) {
  bool pass = true;
  std::string values;
  for (std::uint64_t seed : {1, 2, 3}) {
    const fs::path ds = ws.dataset(8, 10, 5.0, seed);
    auto roc = [&](const char* mask) {
      return pooled_roc(run_pipeline(ws.config(ds, mask, ClassifierKind::linear_svm, AggregationMethod::average, seed)));
    };
    const double rc = roc("region+connectivity");
    const double r = roc("region");
    const double c = roc("connectivity");
    pass = pass && rc - r >= kAblationMargin && rc - c >= kAblationMargin;
    values += (values.empty() ? "" : "; ") + ("seed " + std::to_string(seed) + " R+C " + f4(rc) + " R " + f4(r) +
                                              " C " + f4(c));
  }
  report("4", pass, "ablation ordering, R+C beats each by >= 0.03: " + values);
}

void criterion_5(Workspace& ws) {
  std::map<AggregationMethod, double> mean;
  const std::vector<AggregationMethod> methods{AggregationMethod::average, AggregationMethod::mlp_hist,
                                               AggregationMethod::mlp_hist_region};
  for (std::uint64_t seed : {1, 2, 3}) {
    const fs::path ds = ws.dataset(16, 10, 2.0, seed);
    for (auto m : methods) {
      mean[m] += pooled_roc(run_pipeline(ws.config(ds, "region+connectivity", ClassifierKind::linear_svm, m, seed))) / 3.0;
    }
  }
  const double avg = mean[AggregationMethod::average];
  const double hist = mean[AggregationMethod::mlp_hist];
  const double region = mean[AggregationMethod::mlp_hist_region];
  const bool pass = region >= hist - kAggregationInversion && hist >= avg - kAggregationInversion;
  report("5", pass,
         "aggregation ordering (16x64, effect 2, 3-seed mean): mlp_hist_region " + f4(region) + " >= mlp_hist " +
             f4(hist) + " >= average " + f4(avg) + " (inversions <= 0.02)");
}

void monotonicity(Workspace& ws) {
  std::vector<double> means;
  for (double effect : {0.0, 1.0, 2.0, 5.0}) {
    double sum = 0.0;
    for (std::uint64_t seed : {1, 2, 3}) sum += best_config_roc(ws, ws.dataset(8, 10, effect, seed), seed);
    means.push_back(sum / 3.0);
  }
  int inversions = 0;
  bool small = true;
  for (std::size_t i = 1; i < means.size(); ++i) {
    if (means[i] < means[i - 1]) {
      ++inversions;
      small = small && means[i - 1] - means[i] <= kMonotoneInversion;
    }
  }
  report("P", inversions <= 1 && small,
         "monotone in effect size {0,1,2,5}: 3-seed mean ROC-AUC " + f4(means[0]) + ", " + f4(means[1]) + ", " +
             f4(means[2]) + ", " + f4(means[3]) + " (at most one inversion <= 0.02)");
}

// ---------------------------------------------------------------------------

void criterion_6() {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> size(3, 10);
  double graph_err = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Eigen::MatrixXd w = oracle::random_graph(rng, size(rng));
    const ConnectivityGraph g{w};
    const auto s = node_strength(g);
    const auto c = clustering_coefficient(g);
    const auto e = eigenvector_centrality(g, 1e-14, 5000).values;
    const auto sr = oracle::strength(w), cr = oracle::clustering(w), er = oracle::centrality(w);
    for (Eigen::Index k = 0; k < w.rows(); ++k) {
      const auto u = static_cast<std::size_t>(k);
      graph_err = std::max({graph_err, std::abs(s(k) - sr[u]), std::abs(c(k) - cr[u]), std::abs(e(k) - er[u])});
    }
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double auc_err = 0.0, ap_err = 0.0;
  for (int i = 0; i < 100; ++i) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (int k = 0; k < 200; ++k) {
      const int y = unit(rng) < 0.3 || k == 0;
      labels.push_back(k == 1 ? 0 : y);
      scores.push_back(std::round((unit(rng) + 0.3 * labels.back()) * 100.0) / 100.0);
    }
    auc_err = std::max(auc_err, std::abs(roc_auc(scores, labels) - oracle::pair_auc(scores, labels)));
    ap_err = std::max(ap_err, std::abs(pr_auc(scores, labels) - oracle::sweep_average_precision(scores, labels)));
  }

  std::normal_distribution<double> g(0.0, 1.0);
  double wilcoxon_err = 0.0;
  int wilcoxon_cases = 0;
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = 5 + static_cast<std::size_t>(i % 8);
    std::vector<double> a(n), b(n);
    for (std::size_t k = 0; k < n; ++k) {
      a[k] = std::round((g(rng) + 0.4) * 4.0) / 4.0;
      b[k] = std::round(g(rng) * 4.0) / 4.0;
    }
    const auto ref = oracle::signed_rank_enumeration(a, b);
    if (ref.n < 5) continue;
    ++wilcoxon_cases;
    wilcoxon_err = std::max(wilcoxon_err, std::abs(wilcoxon_signed_rank(a, b).p_value - ref.p_value));
  }

  // "Exactly" for the threshold sweep is read as agreement to the last few ulps.
  const bool pass = graph_err <= kGraphTol && auc_err <= kAucTol && ap_err <= kAucTol && wilcoxon_err <= 1e-12;
  report("6", pass,
         "formula oracles: graph metrics max err " + sci(graph_err) + " (<= 1e-10), ROC-AUC " + sci(auc_err) +
             " (<= 1e-12), PR-AUC vs sweep " + sci(ap_err) + ", Wilcoxon exact p " + sci(wilcoxon_err) + " over " +
             std::to_string(wilcoxon_cases) + " cases");
}

double gradient_error(Mlp& mlp, const Eigen::MatrixXd& x, const std::vector<int>& y, const LogitLoss& loss) {
  Eigen::VectorXd grad;
  mlp.loss_and_gradient(x, y, loss, &grad);
  double worst = 0.0;
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < mlp.parameters().size(); ++i) {
    const double keep = mlp.parameters()(i);
    mlp.parameters()(i) = keep + h;
    const double up = mlp.loss_and_gradient(x, y, loss, nullptr);
    mlp.parameters()(i) = keep - h;
    const double down = mlp.loss_and_gradient(x, y, loss, nullptr);
    mlp.parameters()(i) = keep;
    const double fd = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - grad(i)) / std::max(1e-4, std::abs(fd) + std::abs(grad(i))));
  }
  return worst;
}

void criterion_7() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);

  bool nmf_monotone = true;
  for (int i = 0; i < 20; ++i) {
    Eigen::MatrixXd x(60 + i, 80);
    for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = unit(rng);
    NmfOptions o;
    o.max_iters = 200;
    o.tol = 0.0;
    o.seed = static_cast<std::uint64_t>(i);
    const auto trace = fit_nmf(x, o).loss_trace;
    for (std::size_t k = 1; k < trace.size(); ++k) nmf_monotone = nmf_monotone && trace[k] <= trace[k - 1] * (1.0 + 1e-12);
  }

  // Parameters are jittered so no ReLU pre-activation sits exactly at its kink.
  auto jittered = [&](std::vector<int> sizes, std::uint64_t seed) {
    Mlp m(std::move(sizes), seed);
    for (Eigen::Index k = 0; k < m.parameters().size(); ++k) m.parameters()(k) += 0.05 * g(rng);
    return m;
  };
  double grad_err = 0.0;
  for (int i = 0; i < 3; ++i) {
    Eigen::MatrixXd trial(16, kFeatureDim), electrode(16, kAggregatorInputDim);
    for (Eigen::Index k = 0; k < trial.size(); ++k) trial.data()[k] = g(rng);
    for (Eigen::Index k = 0; k < electrode.size(); ++k) electrode.data()[k] = unit(rng);
    std::vector<int> y;
    for (int k = 0; k < 16; ++k) y.push_back(k % 3 == 0);
    const auto bce = weighted_bce(2.5, 0.6);
    Mlp logreg = jittered({kFeatureDim, 1}, static_cast<std::uint64_t>(i));
    Mlp mlp2 = jittered({kFeatureDim, 64, 32, 1}, static_cast<std::uint64_t>(i));
    Mlp agg = jittered({kAggregatorInputDim, 64, 32, 1}, static_cast<std::uint64_t>(i));
    grad_err = std::max({grad_err, gradient_error(logreg, trial, y, bce), gradient_error(mlp2, trial, y, bce),
                         gradient_error(agg, electrode, y, focal_logit_loss(2.0, 0.83))});
  }

  double kkt = 0.0;
  for (int i = 0; i < 10; ++i) {
    Eigen::MatrixXd x(120, 6);
    std::vector<int> y;
    for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = g(rng);
    for (int k = 0; k < 120; ++k) y.push_back(x(k, 0) + 0.7 * g(rng) > 0.5);
    for (auto kind : {ClassifierKind::linear_svm, ClassifierKind::rbf_svm}) {
      ClassifierSpec s;
      s.kind = kind;
      kkt = std::max(kkt, train_classifier(s, x, y).diagnostics().kkt_violation);
    }
  }

  double focal_err = 0.0;
  for (int i = 1; i < 1000; ++i) {
    const double p = i / 1000.0;
    focal_err = std::max(focal_err, std::abs(focal_loss(p, 1, 0.0, 0.5) + 0.5 * std::log(p)));
    focal_err = std::max(focal_err, std::abs(focal_loss(p, 0, 0.0, 0.5) + 0.5 * std::log(1.0 - p)));
  }

  const bool pass = nmf_monotone && grad_err < kGradientTol && kkt < kKktTol && focal_err <= kFocalTol;
  report("7", pass,
         std::string("numerics: NMF loss non-increasing on 20 instances ") + (nmf_monotone ? "yes" : "NO") +
             ", gradient rel err " + sci(grad_err) + " (< 1e-4), SMO KKT " + sci(kkt) + " (< 1e-3), focal vs 0.5 BCE " +
             sci(focal_err) + " (<= 1e-12)");
}

void criterion_8() {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 30.0);
  Eigen::MatrixXd raw(16, 2048);
  for (Eigen::Index k = 0; k < raw.size(); ++k) raw.data()[k] = g(rng);
  const Eigen::MatrixXd car = common_average_reference(raw);
  const double car_err = car.colwise().sum().cwiseAbs().maxCoeff();

  const double fs = 512.0;
  auto tone = [&](double freq, double amplitude) {
    Eigen::MatrixXd x(1, 2048);
    for (Eigen::Index t = 0; t < x.cols(); ++t) {
      x(0, t) = amplitude * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(t) / fs + 0.3);
    }
    return high_gamma_envelope(x, fs);
  };
  const Eigen::MatrixXd in_band = tone(100.0, 2.0);
  const Eigen::MatrixXd out_band = tone(10.0, 2.0);
  const Eigen::Index lo = 2048 / 10, len = 2048 - 2 * lo;
  const double in_err = (in_band.middleCols(lo, len).array() - 2.0).abs().maxCoeff() / 2.0;
  const double out_ratio = out_band.middleCols(lo, len).maxCoeff() / 2.0;

  report("8", car_err < kCarTol && in_err < kEnvelopeTol && out_ratio < kEnvelopeTol,
         "DSP: CAR column sum " + sci(car_err) + " (< 1e-9), 100 Hz envelope rel err " + sci(in_err) +
             " (< 0.02), 10 Hz leakage " + sci(out_ratio) + " (< 0.02)");
}

void criterion_9(Workspace& ws) {
  const fs::path ds = ws.dataset(8, 10, 5.0, 1);
  auto cfg = [&](unsigned threads, const std::string& cache) {
    auto c = ws.config(ds, "region+connectivity", ClassifierKind::rbf_svm, AggregationMethod::mlp_hist_region, 9);
    c.threads = threads;
    c.cache_dir = ws.root() / cache;
    return c;
  };
  const auto one = cfg(1, "det-cache-1");
  const auto two = cfg(2, "det-cache-2");
  run_pipeline(one);
  run_pipeline(two);
  const std::string first = slurp(one.output / "summary.json");
  const auto cached = run_pipeline(one);
  const std::string rerun = slurp(one.output / "summary.json");
  const bool pass = !first.empty() && first == slurp(two.output / "summary.json") && first == rerun &&
                    cached.preprocess_cache_hit && cached.stage1_cache_hit;
  report("9", pass,
         std::string("determinism: summary.json byte-identical for 1 vs 2 threads ") +
             (first == slurp(two.output / "summary.json") ? "yes" : "NO") + ", cached rerun " +
             (first == rerun ? "yes" : "NO"));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string work = "acceptance-work";
  app.add_option("--work", work, "Scratch directory (recreated)");
  CLI11_PARSE(app, argc, argv);
  set_default_threads(1);

  const std::vector<std::pair<std::string, std::function<void(Workspace&)>>> checks{
      {"1", [](Workspace&) { criterion_1(); }},
      {"6", [](Workspace&) { criterion_6(); }},
      {"7", [](Workspace&) { criterion_7(); }},
      {"8", [](Workspace&) { criterion_8(); }},
      {"2", criterion_2},
      {"3", criterion_3},
      {"4", criterion_4},
      {"5", criterion_5},
      {"P", monotonicity},
      {"9", criterion_9},
  };
  Workspace ws(work);
  const auto start = std::chrono::steady_clock::now();
  for (const auto& [id, check] : checks) {
    try {
      check(ws);
    } catch (const std::exception& e) {
      report(id, false, std::string("error: ") + e.what());
    }
  }

  int failed = 0, unattainable = 0;
  for (const auto& o : outcomes) {
    if (o.pass) continue;
    (o.attainable ? failed : unattainable) += 1;
  }
  std::printf("%d checks, %d attainable failures, %d unattainable, %.0f s\n", static_cast<int>(outcomes.size()), failed,
              unattainable, seconds_since(start));
  return failed == 0 ? 0 : 1;
}
