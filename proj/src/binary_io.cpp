#include "arrestmap/binary_io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

#include "arrestmap/error.hpp"

namespace arrestmap {

namespace fs = std::filesystem;

namespace {

fs::path temp_sibling(const fs::path& path) {
  std::ostringstream suffix;
  suffix << ".tmp." << std::this_thread::get_id();
  return fs::path(path.string() + suffix.str());
}

void write_bytes_atomic(const fs::path& path, const char* data, std::size_t size) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = temp_sibling(path);
  {
    std::ofstream out(tmp, std::ios::binary);
    out.write(data, static_cast<std::streamsize>(size));
    if (!out) throw Error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void write_f32(const fs::path& path, std::span<const double> values) {
  std::vector<float> buf(values.begin(), values.end());
  write_bytes_atomic(path, reinterpret_cast<const char*>(buf.data()), buf.size() * sizeof(float));
}

std::vector<double> read_f32(const fs::path& path, std::size_t expected_count) {
  const std::string bytes = read_all(path);
  if (bytes.size() != expected_count * sizeof(float)) {
    throw FormatError(path.string() + ": expected " + std::to_string(expected_count) +
                      " float32 values, found " + std::to_string(bytes.size() / sizeof(float)));
  }
  std::vector<float> buf(expected_count);
  std::memcpy(buf.data(), bytes.data(), bytes.size());
  return {buf.begin(), buf.end()};
}

void write_f32(const fs::path& path, std::span<const float> values) {
  write_bytes_atomic(path, reinterpret_cast<const char*>(values.data()), values.size_bytes());
}

std::vector<float> read_f32_values(const fs::path& path, std::size_t expected_count) {
  const std::string bytes = read_all(path);
  if (bytes.size() != expected_count * sizeof(float)) {
    throw FormatError(path.string() + ": expected " + std::to_string(expected_count) +
                      " float32 values, found " + std::to_string(bytes.size() / sizeof(float)));
  }
  std::vector<float> buf(expected_count);
  std::memcpy(buf.data(), bytes.data(), bytes.size());
  return buf;
}

void write_f64(const fs::path& path, std::span<const double> values) {
  write_bytes_atomic(path, reinterpret_cast<const char*>(values.data()), values.size_bytes());
}

std::vector<double> read_f64(const fs::path& path) {
  const std::string bytes = read_all(path);
  if (bytes.size() % sizeof(double) != 0) throw FormatError(path.string() + ": truncated float64 file");
  std::vector<double> out(bytes.size() / sizeof(double));
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

void write_json(const fs::path& path, const nlohmann::json& value) {
  write_text_atomic(path, value.dump(2) + "\n");
}

nlohmann::json read_json(const fs::path& path) {
  try {
    return nlohmann::json::parse(read_all(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  write_bytes_atomic(path, text.data(), text.size());
}

}  // namespace arrestmap
