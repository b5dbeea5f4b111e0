#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace arrestmap {

inline constexpr int kRegionCount = 26;

enum class Task { AR, AN, SC, WR, PN };
enum class EsmOutcome { arrest, no_arrest };
enum class ElectrodeLabel { critical, non_critical, untested };

std::string_view to_string(Task task);
Task parse_task(std::string_view text);
std::string_view to_string(EsmOutcome outcome);
EsmOutcome parse_outcome(std::string_view text);
std::string_view to_string(ElectrodeLabel label);

struct Electrode {
  int id = 0;
  int region_index = 0;
  bool valid = true;

  bool operator==(const Electrode&) const = default;
};

struct EsmEvent {
  int electrode_a = 0;
  int electrode_b = 0;
  EsmOutcome outcome = EsmOutcome::no_arrest;

  bool operator==(const EsmEvent&) const = default;
};

struct Event {
  int trial_id = 0;
  Task task = Task::AR;
  std::string word;
  std::int64_t onset_sample = 0;

  bool operator==(const Event&) const = default;
};

// One task recording of one subject. Rows follow the subject's electrode table
// order (invalid electrodes included); storage is row-major [electrodes x samples].
struct Recording {
  Task task = Task::AR;
  std::size_t n_electrodes = 0;
  std::size_t n_samples = 0;
  std::vector<float> samples;
  std::vector<Event> events;

  std::span<const float> channel(std::size_t row) const {
    return {samples.data() + row * n_samples, n_samples};
  }

  bool operator==(const Recording&) const = default;
};

struct Subject {
  std::string id;
  std::vector<Electrode> electrodes;
  std::vector<Recording> recordings;
  std::vector<EsmEvent> esm;

  const Electrode* find_electrode(int id) const;

  bool operator==(const Subject&) const = default;
};

struct Dataset {
  double sample_rate = 512.0;
  std::vector<Task> tasks;
  std::vector<std::string> region_names;  // optional, reporting only
  std::vector<Subject> subjects;

  const Subject* find_subject(std::string_view id) const;

  bool operator==(const Dataset&) const = default;
};

// Epoch geometry shared by validation, preprocessing and the generator.
std::int64_t pre_onset_samples(double sample_rate);   // ceil(0.25 fs)
std::int64_t post_onset_samples(double sample_rate);  // ceil(0.5 fs)
std::int64_t epoch_length(double sample_rate);        // round(0.75 fs)

// Throws ValidationError on the first violated invariant.
void validate_dataset(const Dataset& dataset);

Dataset load_dataset(const std::filesystem::path& root);
void write_dataset(const Dataset& dataset, const std::filesystem::path& root);

// An electrode in any arrest pair is critical; one appearing only in no-arrest
// pairs is non-critical; one in no pair is untested. Order of events is irrelevant.
std::map<int, ElectrodeLabel> derive_labels(std::span<const EsmEvent> events,
                                            std::span<const Electrode> electrodes);

// Hash over the manifest and every binary/CSV the dataset references; stable
// across processes and used as the cache key for preprocessing.
std::uint64_t dataset_fingerprint(const Dataset& dataset);

}  // namespace arrestmap
