#include "arrestmap/nmf.hpp"

#include <cassert>
#include <random>

#include "arrestmap/binary_io.hpp"
#include "arrestmap/error.hpp"
#include "arrestmap/numeric.hpp"

namespace arrestmap {

NmfModel fit_nmf(const Eigen::MatrixXd& data, const NmfOptions& options) {
  const Eigen::Index rows = data.rows();
  const Eigen::Index cols = data.cols();
  const int k = options.components;
  if (k < 1 || k > std::min(rows, cols)) {
    throw InvalidInput("NMF component count " + std::to_string(k) + " exceeds min(" +
                       std::to_string(rows) + ", " + std::to_string(cols) + ")");
  }
  if (!data.allFinite()) throw InvalidInput("NMF input contains non-finite values");
  if ((data.array() < 0.0).any()) throw InvalidInput("NMF input has a negative entry");

  std::mt19937_64 rng(options.seed);
  // Uniform on (0, 1]: 1 - U[0, 1).
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::MatrixXd basis(rows, k);
  Eigen::MatrixXd coef(k, cols);
  for (Eigen::Index j = 0; j < k; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) basis(i, j) = 1.0 - unit(rng);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < k; ++i) coef(i, j) = 1.0 - unit(rng);

  NmfModel model;
  double previous = (data - basis * coef).norm();
  for (int iter = 0; iter < options.max_iters; ++iter) {
    const Eigen::MatrixXd gram_t = basis.transpose() * basis;
    coef.array() *= (basis.transpose() * data).array() /
                    ((gram_t * coef).array() + kNmfEpsilon);

    const Eigen::MatrixXd gram_h = coef * coef.transpose();
    basis.array() *= (data * coef.transpose()).array() /
                     ((basis * gram_h).array() + kNmfEpsilon);
    basis = basis.cwiseMax(kNmfEpsilon);

    assert((coef.array() >= 0.0).all() && (basis.array() >= 0.0).all());

    const double loss = (data - basis * coef).norm();
    model.loss_trace.push_back(loss);
    model.iterations = iter + 1;
    const bool converged = previous <= 0.0 || (previous - loss) / previous < options.tol;
    previous = loss;
    if (converged) break;
  }
  model.final_error = previous;
  model.basis = std::move(basis);
  return model;
}

Eigen::MatrixXd nmf_data_matrix(std::span<const TrialEpoch* const> epochs) {
  if (epochs.empty()) return {};
  const auto length = static_cast<Eigen::Index>(epochs.front()->samples.size());
  Eigen::MatrixXd data(length, static_cast<Eigen::Index>(epochs.size()));
  for (std::size_t j = 0; j < epochs.size(); ++j) {
    const auto& s = epochs[j]->samples;
    if (static_cast<Eigen::Index>(s.size()) != length) {
      throw InvalidInput("epochs of unequal length in NMF data matrix");
    }
    for (Eigen::Index i = 0; i < length; ++i) {
      data(i, static_cast<Eigen::Index>(j)) = std::max(0.0, static_cast<double>(s[static_cast<std::size_t>(i)]));
    }
  }
  return data;
}

std::vector<double> nmf_correlations(const NmfModel& model, std::span<const float> epoch) {
  if (static_cast<Eigen::Index>(epoch.size()) != model.basis.rows()) {
    throw InvalidInput("epoch length " + std::to_string(epoch.size()) +
                       " does not match NMF basis length " + std::to_string(model.basis.rows()));
  }
  std::vector<double> out(static_cast<std::size_t>(model.basis.cols()));
  for (Eigen::Index k = 0; k < model.basis.cols(); ++k) {
    const Eigen::VectorXd column = model.basis.col(k);
    out[static_cast<std::size_t>(k)] =
        pearson(epoch, std::span<const double>(column.data(), static_cast<std::size_t>(column.size())));
  }
  return out;
}

void save_nmf(const NmfModel& model, const std::filesystem::path& stem) {
  nlohmann::json meta{{"kind", "nmf"},
                      {"rows", model.basis.rows()},
                      {"components", model.basis.cols()},
                      {"iterations", model.iterations},
                      {"final_error", model.final_error},
                      {"weights", stem.filename().string() + ".f32"}};
  write_json(stem.string() + ".json", meta);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> row_major = model.basis;
  write_f32(stem.string() + ".f32",
            std::span<const double>(row_major.data(), static_cast<std::size_t>(row_major.size())));
}

NmfModel load_nmf(const std::filesystem::path& stem) {
  const auto meta = read_json(stem.string() + ".json");
  if (meta.value("kind", "") != "nmf") throw FormatError(stem.string() + ".json is not an NMF model");
  const auto rows = meta.at("rows").get<Eigen::Index>();
  const auto cols = meta.at("components").get<Eigen::Index>();
  const auto values = read_f32(stem.string() + ".f32", static_cast<std::size_t>(rows * cols));
  NmfModel model;
  model.basis = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), rows, cols);
  model.iterations = meta.at("iterations").get<int>();
  model.final_error = meta.at("final_error").get<double>();
  return model;
}

}  // namespace arrestmap
