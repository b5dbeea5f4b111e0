// arrestmap: command-line driver for dataset generation, the two-stage
// classifier pipeline, the ablation grid and report comparison.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "arrestmap/binary_io.hpp"
#include "arrestmap/error.hpp"
#include "arrestmap/eval.hpp"
#include "arrestmap/parallel.hpp"
#include "arrestmap/pipeline.hpp"
#include "arrestmap/synthgen.hpp"

namespace fs = std::filesystem;
using namespace arrestmap;
using json = nlohmann::json;

namespace {

struct CommonOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool config_required = true) {
  auto* c = cmd->add_option("--config", o.config, "JSON configuration file");
  if (config_required) c->required();
  cmd->add_option("--out", o.out, "Output directory (overrides the config)");
  cmd->add_option("--seed", o.seed, "Master seed (overrides the config)");
  cmd->add_option("--threads", o.threads, "Worker threads (0 = hardware concurrency)");
}

PipelineConfig pipeline_config(const CommonOptions& o) {
  PipelineConfig c = load_pipeline_config(o.config);
  if (!o.out.empty()) c.output = o.out;
  if (o.seed) c.seed = *o.seed;
  if (o.threads) c.threads = o.threads;
  set_default_threads(c.threads);
  if (c.dataset.empty()) throw ConfigError("config does not name a dataset");
  return c;
}

std::string fmt(const json& v) {
  if (v.is_null()) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v.get<double>());
  return buf;
}

void print_metrics(const std::string& title, const json& m) {
  std::cout << title << ": roc_auc " << fmt(m["roc_auc"]) << "  pr_auc " << fmt(m["pr_auc"]) << "  f1 "
            << fmt(m["f1"]) << "  precision " << fmt(m["precision"]) << "  recall " << fmt(m["recall"])
            << "  bal_acc " << fmt(m["balanced_accuracy"]) << "  acc " << fmt(m["accuracy"]) << "  (n "
            << m["n"].get<std::size_t>() << ", positives " << m["n_positive"].get<std::size_t>() << ")\n";
}

void print_summary(const json& s) {
  const auto& c = s["config"];
  std::cout << s.value("version", "?") << "\n"
            << "dataset " << c["dataset"].get<std::string>() << "  signal " << c["signal"].get<std::string>()
            << "  features " << c["features"].get<std::string>() << "  classifier "
            << c["classifier"]["kind"].get<std::string>() << "  aggregation "
            << c["aggregation"].get<std::string>() << "  validation " << c["validation"].get<std::string>()
            << "\n";
  print_metrics("pooled   ", s["metrics"]["pooled"]);
  print_metrics("fold mean", s["metrics"]["fold_mean"]);
}

std::vector<double> fold_aucs(const json& s, const std::string& path) {
  std::vector<double> out;
  for (const auto& f : s["metrics"]["folds"]) {
    if (f["roc_auc"].is_null()) throw InvalidInput(path + ": a fold has no ROC-AUC, cannot pair folds");
    out.push_back(f["roc_auc"].get<double>());
  }
  return out;
}

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speech-critical electrode mapping from intracranial recordings"};
  app.require_subcommand(1);
  app.set_version_flag("--version", version_string());

  CommonOptions gen_o, pre_o, feat_o, train_o, eval_o, grid_o;
  bool eval_grid = false;
  std::vector<std::string> report_paths;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset with planted labels");
  add_common(gen, gen_o);
  auto* pre = app.add_subcommand("preprocess", "Preprocess a dataset into the cache");
  add_common(pre, pre_o);
  auto* feat = app.add_subcommand("features", "Write the trial feature matrix as CSV");
  add_common(feat, feat_o);
  auto* train = app.add_subcommand("train", "Fit both stages on all labeled electrodes");
  add_common(train, train_o);
  auto* eval = app.add_subcommand("eval", "Cross-validated evaluation of one configuration");
  add_common(eval, eval_o);
  eval->add_flag("--grid", eval_grid, "Evaluate the full ablation grid instead");
  auto* grid = app.add_subcommand("grid", "Evaluate masks x classifiers x aggregations");
  add_common(grid, grid_o);
  auto* report = app.add_subcommand("report", "Print a summary, or compare two with a Wilcoxon test");
  report->add_option("summaries", report_paths, "summary.json files (one or two)")->required()->expected(1, 2);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    Timer timer;
    if (*gen) {
      SynthConfig c = SynthConfig::from_json(read_json(gen_o.config));
      if (gen_o.seed) c.seed = *gen_o.seed;
      if (gen_o.out.empty()) throw ConfigError("gen needs --out");
      set_default_threads(gen_o.threads);
      const auto out = generate_dataset(c, gen_o.threads);
      write_synthetic_dataset(out, c, gen_o.out);
      std::cerr << "wrote " << c.n_subjects << " subjects to " << gen_o.out << " in " << timer.seconds() << " s\n";
    } else if (*pre) {
      const PipelineConfig c = pipeline_config(pre_o);
      bool hit = false;
      const auto data = preprocess_dataset(load_dataset(c.dataset), c.signal, c.resolved_cache_dir(), c.threads, &hit);
      json summary{{"version", version_string()}, {"preprocess_key", data.key}, {"signal", to_string(c.signal)},
                   {"subjects", json::array()}};
      for (const auto& s : data.subjects) {
        summary["subjects"].push_back({{"id", s.id}, {"valid_electrodes", s.electrodes.size()}, {"trials", s.trials.size()}});
      }
      fs::create_directories(c.output);
      write_json(c.output / "preprocess.json", summary);
      std::cerr << (hit ? "cache hit" : "preprocessed") << " (" << data.key << ") in " << timer.seconds() << " s\n";
    } else if (*feat) {
      export_features(pipeline_config(feat_o));
      std::cerr << "features written in " << timer.seconds() << " s\n";
    } else if (*train) {
      train_final_models(pipeline_config(train_o));
      std::cerr << "models written in " << timer.seconds() << " s\n";
    } else if (*eval && !eval_grid) {
      const PipelineConfig c = pipeline_config(eval_o);
      const RunResult r = run_pipeline(c);
      print_summary(r.summary);
      std::cerr << "finished in " << timer.seconds() << " s (preprocess cache " << (r.preprocess_cache_hit ? "hit" : "miss")
                << ", stage-1 cache " << (r.stage1_cache_hit ? "hit" : "miss") << ")\n";
    } else if (*grid || *eval) {
      const PipelineConfig c = pipeline_config(*grid ? grid_o : eval_o);
      const auto rows = run_grid(c);
      std::printf("%-22s %-11s %-16s %8s %8s %8s\n", "mask", "classifier", "aggregation", "roc_auc", "pr_auc", "f1");
      for (const auto& r : rows) {
        std::printf("%-22s %-11s %-16s %8s %8s %8.4f\n", r.mask.c_str(), r.classifier.c_str(), r.aggregation.c_str(),
                    r.pooled.roc_auc ? fmt(*r.pooled.roc_auc).c_str() : "n/a",
                    r.pooled.pr_auc ? fmt(*r.pooled.pr_auc).c_str() : "n/a", r.pooled.f1);
      }
      std::cerr << rows.size() << " cells in " << timer.seconds() << " s\n";
    } else if (*report) {
      std::vector<json> summaries;
      for (const auto& p : report_paths) summaries.push_back(read_json(p));
      for (std::size_t i = 0; i < summaries.size(); ++i) {
        if (i) std::cout << "\n";
        std::cout << report_paths[i] << "\n";
        print_summary(summaries[i]);
      }
      if (summaries.size() == 2) {
        const auto a = fold_aucs(summaries[0], report_paths[0]);
        const auto b = fold_aucs(summaries[1], report_paths[1]);
        if (a.size() != b.size()) throw InvalidInput("the two summaries have different fold counts");
        const auto w = wilcoxon_signed_rank(a, b);
        std::cout << "\nWilcoxon signed-rank on per-fold ROC-AUC: W = " << w.statistic << ", n = " << w.n
                  << ", p = " << w.p_value << (w.exact ? " (exact)" : " (normal approximation)") << "\n";
      }
    }
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
