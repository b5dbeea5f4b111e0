#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace arrestmap {

// Little-endian float32 arrays used by the model/NMF caches.
void write_f32(const std::filesystem::path& path, std::span<const double> values);
std::vector<double> read_f32(const std::filesystem::path& path, std::size_t expected_count);
void write_f32(const std::filesystem::path& path, std::span<const float> values);
std::vector<float> read_f32_values(const std::filesystem::path& path, std::size_t expected_count);

// Exact float64 arrays used by the intermediate caches.
void write_f64(const std::filesystem::path& path, std::span<const double> values);
std::vector<double> read_f64(const std::filesystem::path& path);

void write_json(const std::filesystem::path& path, const nlohmann::json& value);
nlohmann::json read_json(const std::filesystem::path& path);

// Writes to a sibling temporary and renames, so concurrent readers never see a
// partially written file.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace arrestmap
