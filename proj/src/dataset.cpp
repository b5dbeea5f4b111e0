#include "arrestmap/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "arrestmap/error.hpp"
#include "arrestmap/hash.hpp"

namespace arrestmap {

static_assert(std::endian::native == std::endian::little,
              "signal binaries are little-endian float32; big-endian hosts need byte swapping");

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Task task) {
  switch (task) {
    case Task::AR: return "AR";
    case Task::AN: return "AN";
    case Task::SC: return "SC";
    case Task::WR: return "WR";
    case Task::PN: return "PN";
  }
  return "?";
}

Task parse_task(std::string_view text) {
  for (Task t : {Task::AR, Task::AN, Task::SC, Task::WR, Task::PN}) {
    if (to_string(t) == text) return t;
  }
  throw ValidationError("unknown task '" + std::string(text) + "'");
}

std::string_view to_string(EsmOutcome outcome) {
  return outcome == EsmOutcome::arrest ? "arrest" : "no_arrest";
}

EsmOutcome parse_outcome(std::string_view text) {
  if (text == "arrest") return EsmOutcome::arrest;
  if (text == "no_arrest") return EsmOutcome::no_arrest;
  throw ValidationError("unknown ESM outcome '" + std::string(text) + "'");
}

std::string_view to_string(ElectrodeLabel label) {
  switch (label) {
    case ElectrodeLabel::critical: return "critical";
    case ElectrodeLabel::non_critical: return "non_critical";
    case ElectrodeLabel::untested: return "untested";
  }
  return "?";
}

const Electrode* Subject::find_electrode(int id) const {
  auto it = std::find_if(electrodes.begin(), electrodes.end(),
                         [id](const Electrode& e) { return e.id == id; });
  return it == electrodes.end() ? nullptr : &*it;
}

const Subject* Dataset::find_subject(std::string_view id) const {
  auto it = std::find_if(subjects.begin(), subjects.end(),
                         [id](const Subject& s) { return s.id == id; });
  return it == subjects.end() ? nullptr : &*it;
}

std::int64_t pre_onset_samples(double sample_rate) {
  return static_cast<std::int64_t>(std::ceil(0.25 * sample_rate));
}

std::int64_t post_onset_samples(double sample_rate) {
  return static_cast<std::int64_t>(std::ceil(0.5 * sample_rate));
}

std::int64_t epoch_length(double sample_rate) {
  return static_cast<std::int64_t>(std::llround(0.75 * sample_rate));
}

std::map<int, ElectrodeLabel> derive_labels(std::span<const EsmEvent> events,
                                            std::span<const Electrode> electrodes) {
  std::map<int, ElectrodeLabel> labels;
  for (const auto& e : electrodes) labels[e.id] = ElectrodeLabel::untested;
  for (const auto& ev : events) {
    for (int id : {ev.electrode_a, ev.electrode_b}) {
      auto it = labels.find(id);
      if (it == labels.end()) {
        throw ValidationError("ESM pair references unknown electrode " + std::to_string(id));
      }
      if (ev.outcome == EsmOutcome::arrest) {
        it->second = ElectrodeLabel::critical;
      } else if (it->second == ElectrodeLabel::untested) {
        it->second = ElectrodeLabel::non_critical;
      }
    }
  }
  return labels;
}

void validate_dataset(const Dataset& ds) {
  if (!(ds.sample_rate > 0.0) || !std::isfinite(ds.sample_rate)) {
    throw ValidationError("sample_rate must be positive");
  }
  std::set<std::string> subject_ids;
  const std::int64_t pre = pre_onset_samples(ds.sample_rate);
  const std::int64_t post = post_onset_samples(ds.sample_rate);
  for (const auto& s : ds.subjects) {
    if (s.id.empty()) throw ValidationError("empty subject id");
    if (!subject_ids.insert(s.id).second) throw ValidationError("duplicate subject id " + s.id);
    std::set<int> ids;
    for (const auto& e : s.electrodes) {
      if (!ids.insert(e.id).second) {
        throw ValidationError(s.id + ": duplicate electrode id " + std::to_string(e.id));
      }
      if (e.region_index < 0 || e.region_index >= kRegionCount) {
        throw ValidationError(s.id + ": electrode " + std::to_string(e.id) +
                              " region_index " + std::to_string(e.region_index) +
                              " outside [0, 25]");
      }
    }
    if (s.electrodes.size() < 2) throw ValidationError(s.id + ": fewer than 2 electrodes");
    for (const auto& ev : s.esm) {
      if (ev.electrode_a == ev.electrode_b) {
        throw ValidationError(s.id + ": ESM pair with identical members " +
                              std::to_string(ev.electrode_a));
      }
      for (int id : {ev.electrode_a, ev.electrode_b}) {
        if (!ids.count(id)) {
          throw ValidationError(s.id + ": ESM pair references unknown electrode " +
                                std::to_string(id));
        }
      }
    }
    for (const auto& r : s.recordings) {
      const std::string where = s.id + "/" + std::string(to_string(r.task));
      if (r.n_electrodes != s.electrodes.size()) {
        throw ValidationError(where + ": recording rows do not match electrode table");
      }
      if (r.n_samples == 0) throw ValidationError(where + ": empty recording");
      if (r.samples.size() != r.n_electrodes * r.n_samples) {
        throw FormatError(where + ": sample buffer size does not match declared shape");
      }
      if (!std::all_of(r.samples.begin(), r.samples.end(),
                       [](float v) { return std::isfinite(v); })) {
        throw ValidationError(where + ": non-finite sample value");
      }
      std::set<int> trial_ids;
      for (const auto& ev : r.events) {
        if (ev.task != r.task) {
          throw ValidationError(where + ": event row for trial " + std::to_string(ev.trial_id) +
                                " has task " + std::string(to_string(ev.task)));
        }
        if (!trial_ids.insert(ev.trial_id).second) {
          throw ValidationError(where + ": duplicate trial_id " + std::to_string(ev.trial_id));
        }
        if (ev.onset_sample - pre < 0 ||
            ev.onset_sample + post > static_cast<std::int64_t>(r.n_samples)) {
          throw ValidationError(where + ": epoch of trial " + std::to_string(ev.trial_id) +
                                " does not fit in the recording");
        }
      }
    }
  }
}

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path,
                                               std::string_view expected_header) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != expected_header) {
    throw FormatError(path.string() + ": expected header '" + std::string(expected_header) + "'");
  }
  const auto columns = static_cast<std::size_t>(
      std::count(expected_header.begin(), expected_header.end(), ',') + 1);
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != columns) {
      throw FormatError(path.string() + ": row has " + std::to_string(cells.size()) +
                        " fields, expected " + std::to_string(columns));
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

template <class Int>
Int parse_int(const std::string& s, const fs::path& path) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return static_cast<Int>(v);
  } catch (const std::exception&) {
    throw FormatError(path.string() + ": not an integer: '" + s + "'");
  }
}

std::vector<float> read_f32(const fs::path& path, std::size_t rows, std::size_t cols) {
  std::error_code ec;
  const auto size = fs::file_size(path, ec);
  if (ec) throw LoadError("cannot open " + path.string());
  const std::uintmax_t expected = static_cast<std::uintmax_t>(rows) * cols * sizeof(float);
  if (size != expected) {
    throw FormatError(path.string() + ": holds " + std::to_string(size / sizeof(float)) +
                      " floats but manifest declares " + std::to_string(rows) + "x" +
                      std::to_string(cols));
  }
  std::vector<float> data(rows * cols);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(expected));
  if (!in) throw FormatError(path.string() + ": short read");
  return data;
}

template <class T>
T require(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw FormatError(where + ": missing key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(where + ": bad value for '" + key + "': " + e.what());
  }
}

}  // namespace

Dataset load_dataset(const fs::path& root) {
  const fs::path manifest_path = root / "manifest.json";
  json manifest;
  try {
    manifest = json::parse(read_text(manifest_path));
  } catch (const json::parse_error& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  const std::string where = manifest_path.string();

  Dataset ds;
  ds.sample_rate = require<double>(manifest, "sample_rate", where);
  for (const auto& t : require<std::vector<std::string>>(manifest, "tasks", where)) {
    ds.tasks.push_back(parse_task(t));
  }
  if (manifest.contains("region_names")) {
    ds.region_names = manifest["region_names"].get<std::vector<std::string>>();
  }

  for (const auto& sj : require<json>(manifest, "subjects", where)) {
    Subject s;
    s.id = require<std::string>(sj, "id", where);
    for (const auto& ej : require<json>(sj, "electrodes", where + " subject " + s.id)) {
      Electrode e;
      e.id = require<int>(ej, "id", where);
      e.region_index = require<int>(ej, "region_index", where);
      e.valid = ej.value("valid", true);
      s.electrodes.push_back(e);
    }
    if (sj.contains("esm")) {
      const fs::path esm_path = root / sj["esm"].get<std::string>();
      for (const auto& row : read_csv(esm_path, "electrode_a,electrode_b,outcome")) {
        s.esm.push_back({parse_int<int>(row[0], esm_path), parse_int<int>(row[1], esm_path),
                         parse_outcome(row[2])});
      }
    }
    ds.subjects.push_back(std::move(s));
  }

  for (const auto& rj : require<json>(manifest, "recordings", where)) {
    const auto subject_id = require<std::string>(rj, "subject", where);
    auto it = std::find_if(ds.subjects.begin(), ds.subjects.end(),
                           [&](const Subject& s) { return s.id == subject_id; });
    if (it == ds.subjects.end()) {
      throw ValidationError(where + ": recording references unknown subject '" + subject_id + "'");
    }
    Recording r;
    r.task = parse_task(require<std::string>(rj, "task", where));
    r.n_electrodes = require<std::size_t>(rj, "n_electrodes", where);
    r.n_samples = require<std::size_t>(rj, "n_samples", where);
    r.samples = read_f32(root / require<std::string>(rj, "signal", where), r.n_electrodes,
                         r.n_samples);
    const fs::path events_path = root / require<std::string>(rj, "events", where);
    for (const auto& row : read_csv(events_path, "trial_id,task,word,onset_sample")) {
      r.events.push_back({parse_int<int>(row[0], events_path), parse_task(row[1]), row[2],
                          parse_int<std::int64_t>(row[3], events_path)});
    }
    it->recordings.push_back(std::move(r));
  }

  validate_dataset(ds);
  return ds;
}

void write_dataset(const Dataset& ds, const fs::path& root) {
  validate_dataset(ds);
  fs::create_directories(root);
  json manifest;
  manifest["format"] = "arrestmap-dataset";
  manifest["version"] = 1;
  manifest["sample_rate"] = ds.sample_rate;
  manifest["tasks"] = json::array();
  for (Task t : ds.tasks) manifest["tasks"].push_back(to_string(t));
  if (!ds.region_names.empty()) manifest["region_names"] = ds.region_names;
  manifest["subjects"] = json::array();
  manifest["recordings"] = json::array();

  for (const auto& s : ds.subjects) {
    fs::create_directories(root / s.id);
    json sj;
    sj["id"] = s.id;
    sj["electrodes"] = json::array();
    for (const auto& e : s.electrodes) {
      sj["electrodes"].push_back({{"id", e.id}, {"region_index", e.region_index}, {"valid", e.valid}});
    }
    const std::string esm_rel = s.id + "/esm.csv";
    {
      std::ofstream out(root / esm_rel, std::ios::binary);
      out << "electrode_a,electrode_b,outcome\n";
      for (const auto& ev : s.esm) {
        out << ev.electrode_a << ',' << ev.electrode_b << ',' << to_string(ev.outcome) << '\n';
      }
      if (!out) throw Error("failed writing " + (root / esm_rel).string());
    }
    sj["esm"] = esm_rel;
    manifest["subjects"].push_back(sj);

    for (const auto& r : s.recordings) {
      const std::string base = s.id + "/" + std::string(to_string(r.task));
      {
        std::ofstream out(root / (base + ".f32"), std::ios::binary);
        out.write(reinterpret_cast<const char*>(r.samples.data()),
                  static_cast<std::streamsize>(r.samples.size() * sizeof(float)));
        if (!out) throw Error("failed writing " + (root / (base + ".f32")).string());
      }
      {
        std::ofstream out(root / (base + ".events.csv"), std::ios::binary);
        out << "trial_id,task,word,onset_sample\n";
        for (const auto& ev : r.events) {
          if (ev.word.find_first_of(",\n\r") != std::string::npos) {
            throw ValidationError("event word contains a CSV delimiter: " + ev.word);
          }
          out << ev.trial_id << ',' << to_string(ev.task) << ',' << ev.word << ','
              << ev.onset_sample << '\n';
        }
      }
      manifest["recordings"].push_back({{"subject", s.id},
                                        {"task", to_string(r.task)},
                                        {"signal", base + ".f32"},
                                        {"events", base + ".events.csv"},
                                        {"n_electrodes", r.n_electrodes},
                                        {"n_samples", r.n_samples}});
    }
  }
  std::ofstream out(root / "manifest.json", std::ios::binary);
  out << manifest.dump(2) << '\n';
  if (!out) throw Error("failed writing manifest in " + root.string());
}

std::uint64_t dataset_fingerprint(const Dataset& ds) {
  Fnv1a h;
  h.value(ds.sample_rate);
  for (Task t : ds.tasks) h.value(t);
  for (const auto& s : ds.subjects) {
    h.text(s.id);
    for (const auto& e : s.electrodes) {
      h.value(e.id);
      h.value(e.region_index);
      h.value(e.valid);
    }
    for (const auto& ev : s.esm) {
      h.value(ev.electrode_a);
      h.value(ev.electrode_b);
      h.value(ev.outcome);
    }
    for (const auto& r : s.recordings) {
      h.value(r.task);
      h.value(r.n_electrodes);
      h.value(r.n_samples);
      h.values(std::span<const float>(r.samples));
      for (const auto& ev : r.events) {
        h.value(ev.trial_id);
        h.text(ev.word);
        h.value(ev.onset_sample);
      }
    }
  }
  return h.digest();
}

}  // namespace arrestmap
