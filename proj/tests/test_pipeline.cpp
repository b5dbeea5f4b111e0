#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <regex>

#include "arrestmap/error.hpp"
#include "arrestmap/pipeline.hpp"
#include "arrestmap/synthgen.hpp"

namespace fs = std::filesystem;
using namespace arrestmap;

namespace {

const fs::path& work_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "arrestmap_test_pipeline";
    fs::remove_all(d);
    fs::create_directories(d);
    SynthConfig c;
    c.n_subjects = 4;
    c.electrodes_per_subject = 20;
    c.trials_per_task = {{Task::AR, 8}, {Task::AN, 4}, {Task::SC, 4}, {Task::WR, 8}, {Task::PN, 8}};
    c.seed = 5;
    write_synthetic_dataset(generate_dataset(c), c, d / "ds");
    return d;
  }();
  return dir;
}

PipelineConfig base_config(const std::string& name) {
  PipelineConfig c;
  c.dataset = work_dir() / "ds";
  c.classifier.kind = ClassifierKind::linear_svm;
  c.aggregation = AggregationMethod::mlp_hist_region;
  c.output = work_dir() / name;
  c.cache_dir = work_dir() / (name + "-cache");
  c.seed = 3;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("summary is identical across thread counts and cache hits") {
  auto one = base_config("threads1");
  one.threads = 1;
  auto two = base_config("threads2");
  two.threads = 2;
  const auto r1 = run_pipeline(one);
  const auto r2 = run_pipeline(two);
  CHECK_FALSE(r1.preprocess_cache_hit);
  CHECK_FALSE(r1.stage1_cache_hit);
  const std::string s1 = slurp(one.output / "summary.json");
  CHECK(!s1.empty());
  CHECK(s1 == slurp(two.output / "summary.json"));
  CHECK(slurp(one.output / "verdicts.csv") == slurp(two.output / "verdicts.csv"));

  const auto again = run_pipeline(one);
  CHECK(again.preprocess_cache_hit);
  CHECK(again.stage1_cache_hit);
  CHECK(slurp(one.output / "summary.json") == s1);

  CHECK(fs::exists(one.output / "roc.csv"));
  CHECK(fs::exists(one.output / "pr.csv"));
  CHECK(r1.report.folds.size() == 4);
  for (const auto& v : r1.verdicts) {
    CHECK(v.score >= 0.0);
    CHECK(v.score <= 1.0);
    CHECK(v.decision == (v.score >= v.threshold));
  }
  const auto m = r1.report.pooled;
  REQUIRE(m.roc_auc.has_value());
  CHECK(*m.roc_auc >= 0.0);
  CHECK(*m.roc_auc <= 1.0);
}

TEST_CASE("summary leaves out output, cache and threads") {
  auto a = base_config("a");
  auto b = a;
  b.output = work_dir() / "elsewhere";
  b.cache_dir = work_dir() / "other-cache";
  b.threads = 7;
  CHECK(a.to_json() == b.to_json());
  CHECK(PipelineConfig::from_json(a.to_json()).to_json() == a.to_json());
}

TEST_CASE("electrode cross-validation with averaging") {
  auto c = base_config("cv");
  c.validation = ValidationMode::cv8;
  c.cv_folds = 4;
  c.aggregation = AggregationMethod::average;
  const auto r = run_pipeline(c);
  CHECK(r.report.folds.size() == 4);
  CHECK(r.verdicts.size() == labeled_electrodes(preprocess_dataset(load_dataset(c.dataset), c.signal,
                                                                  c.resolved_cache_dir(), 1)).size());
}

TEST_CASE("grid has one row per combination") {
  auto c = base_config("grid");
  c.grid.masks = {FeatureMask::parse("region"), FeatureMask::parse("region+connectivity")};
  c.grid.classifiers = {c.classifier};
  c.grid.aggregations = {AggregationMethod::average, AggregationMethod::mlp_hist};
  const auto rows = run_grid(c);
  CHECK(rows.size() == 4);
  const std::string csv = slurp(c.output / "grid.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
}

TEST_CASE("stage failures name the stage and keep their category") {
  const fs::path broken = work_dir() / "no-arrests";
  fs::remove_all(broken);
  fs::copy(work_dir() / "ds", broken, fs::copy_options::recursive);
  for (const auto& entry : fs::recursive_directory_iterator(broken)) {
    if (entry.path().filename() != "esm.csv") continue;
    const std::string text = std::regex_replace(slurp(entry.path()), std::regex(",arrest\\b"), ",no_arrest");
    std::ofstream(entry.path(), std::ios::binary | std::ios::trunc) << text;
  }
  auto c = base_config("broken");
  c.dataset = broken;
  try {
    (void)run_pipeline(c);
    FAIL("expected a failure");
  } catch (const InputError&) {
    FAIL("a single-class dataset is not an input error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).rfind("stage '", 0) == 0);
  }

  auto missing = base_config("missing");
  missing.dataset = work_dir() / "does-not-exist";
  try {
    (void)run_pipeline(missing);
    FAIL("expected LoadError");
  } catch (const LoadError& e) {
    CHECK(std::string(e.what()).rfind("stage 'load'", 0) == 0);
  }
}
