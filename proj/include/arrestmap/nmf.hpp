#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "arrestmap/signal.hpp"

namespace arrestmap {

inline constexpr double kNmfEpsilon = 1e-12;

struct NmfOptions {
  int components = 5;
  int max_iters = 500;
  double tol = 1e-5;  // stop when relative loss improvement drops below this
  std::uint64_t seed = 0;
};

// Prototype temporal patterns: basis is [epoch length x components].
struct NmfModel {
  Eigen::MatrixXd basis;
  int iterations = 0;
  double final_error = 0.0;        // ||X - TH||_F at the last iterate
  std::vector<double> loss_trace;  // ||X - TH||_F after every iteration

  int components() const { return static_cast<int>(basis.cols()); }
  int length() const { return static_cast<int>(basis.rows()); }
};

// Lee-Seung multiplicative updates on the Frobenius objective. X must be
// entrywise nonnegative with components <= min(rows, cols).
NmfModel fit_nmf(const Eigen::MatrixXd& data, const NmfOptions& options);

// Builds the [length x n] data matrix from epochs, clamping negative values to 0.
Eigen::MatrixXd nmf_data_matrix(std::span<const TrialEpoch* const> epochs);

// Pearson correlation of the epoch with each basis column.
std::vector<double> nmf_correlations(const NmfModel& model, std::span<const float> epoch);

// <stem>.json holds shape and fit metadata, <stem>.f32 the basis (row-major float32).
void save_nmf(const NmfModel& model, const std::filesystem::path& stem);
NmfModel load_nmf(const std::filesystem::path& stem);

}  // namespace arrestmap
