#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>

#include "arrestmap/dataset.hpp"
#include "arrestmap/error.hpp"
#include "arrestmap/synthgen.hpp"

namespace fs = std::filesystem;
using namespace arrestmap;

namespace {

SynthConfig small_config() {
  SynthConfig c;
  c.n_subjects = 3;
  c.electrodes_per_subject = 12;
  c.trials_per_task = {{Task::AR, 6}, {Task::AN, 3}, {Task::SC, 3}, {Task::WR, 6}, {Task::PN, 6}};
  c.seed = 21;
  return c;
}

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    std::ifstream in(entry.path(), std::ios::binary);
    files[fs::relative(entry.path(), root).string()] =
        std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  return files;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("arrestmap_test_synth_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("same config gives byte-identical files under any thread count") {
  const auto config = small_config();
  const auto a = scratch("a"), b = scratch("b");
  write_synthetic_dataset(generate_dataset(config, 1), config, a);
  write_synthetic_dataset(generate_dataset(config, 3), config, b);
  const auto fa = read_tree(a);
  CHECK(fa.size() >= 2 + 3);
  CHECK(fa == read_tree(b));

  auto other = config;
  other.seed = 22;
  const auto c = scratch("c");
  write_synthetic_dataset(generate_dataset(other, 1), other, c);
  CHECK(fa != read_tree(c));
  fs::remove_all(a);
  fs::remove_all(b);
  fs::remove_all(c);
}

TEST_CASE("generated dataset loads, validates and reproduces the planted labels") {
  for (double effect : {0.0, 5.0}) {
    auto config = small_config();
    config.effect_size = effect;
    const auto out = generate_dataset(config);
    const auto root = scratch("load");
    write_synthetic_dataset(out, config, root);
    const Dataset ds = load_dataset(root);
    CHECK_NOTHROW(validate_dataset(ds));
    REQUIRE(ds.subjects.size() == 3);
    int critical = 0, valid = 0;
    for (const auto& s : ds.subjects) {
      const auto labels = derive_labels(s.esm, s.electrodes);
      const auto& planted = out.truth.labels.at(s.id);
      for (const auto& [id, label] : planted) CHECK(labels.at(id) == label);
      for (const auto& e : s.electrodes) {
        if (!e.valid) continue;
        ++valid;
        const bool is_critical = out.truth.critical.at(s.id).at(e.id);
        critical += is_critical;
        if (labels.at(e.id) == ElectrodeLabel::critical) CHECK(is_critical);
        if (labels.at(e.id) == ElectrodeLabel::non_critical) CHECK_FALSE(is_critical);
      }
      for (const auto& r : s.recordings) CHECK(r.events.size() == static_cast<std::size_t>(config.trials_per_task.at(r.task)));
    }
    CHECK(critical > 0);
    CHECK(critical < valid);
    CHECK(fs::exists(root / "generator.json"));
    fs::remove_all(root);
  }
}

TEST_CASE("config validation") {
  SUBCASE("critical fraction outside (0, 1)") {
    auto c = small_config();
    c.critical_fraction = 1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
  SUBCASE("negative effect") {
    auto c = small_config();
    c.effect_size = -1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
  SUBCASE("trials do not fit the recording") {
    auto c = small_config();
    c.trial_spacing_s = 0.5;
    CHECK_THROWS_AS(generate_dataset(c), ConfigError);
  }
  SUBCASE("unknown key") {
    auto j = small_config().to_json();
    j["effect"] = 3;
    CHECK_THROWS_AS(SynthConfig::from_json(j), ConfigError);
  }
  SUBCASE("JSON round trip") {
    const auto c = small_config();
    CHECK(SynthConfig::from_json(c.to_json()).to_json() == c.to_json());
  }
}
