#include "arrestmap/graph.hpp"

#include <cmath>
#include <limits>

#include "arrestmap/error.hpp"

namespace arrestmap {

ConnectivityGraph trial_connectivity(std::span<const TrialEpoch* const> epochs) {
  const auto n = static_cast<Eigen::Index>(epochs.size());
  if (n == 0) return {};
  const auto length = static_cast<Eigen::Index>(epochs.front()->samples.size());

  // Rows centered and scaled to unit norm; zero-variance rows stay zero.
  Eigen::MatrixXd z(n, length);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = epochs[static_cast<std::size_t>(i)]->samples;
    if (static_cast<Eigen::Index>(s.size()) != length) {
      throw InvalidInput("epochs of unequal length in connectivity graph");
    }
    double mean = 0.0;
    for (float v : s) mean += v;
    mean /= static_cast<double>(length);
    double ss = 0.0;
    for (Eigen::Index t = 0; t < length; ++t) {
      const double d = static_cast<double>(s[static_cast<std::size_t>(t)]) - mean;
      z(i, t) = d;
      ss += d * d;
    }
    if (ss > 0.0) {
      z.row(i) /= std::sqrt(ss);
    } else {
      z.row(i).setZero();
    }
  }

  const Eigen::MatrixXd corr = z * z.transpose();
  ConnectivityGraph graph;
  graph.weights = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double w = std::min(1.0, std::abs(corr(i, j)));
      graph.weights(i, j) = w;
      graph.weights(j, i) = w;
    }
  }
  return graph;
}

ConnectivityGraph trial_connectivity(std::span<const TrialEpoch> epochs) {
  std::vector<const TrialEpoch*> ptrs;
  ptrs.reserve(epochs.size());
  for (const auto& e : epochs) ptrs.push_back(&e);
  return trial_connectivity(std::span<const TrialEpoch* const>(ptrs));
}

Eigen::VectorXd node_strength(const ConnectivityGraph& graph) {
  const Eigen::Index n = graph.size();
  if (n < 2) throw InvalidInput("node strength needs at least 2 nodes");
  return graph.weights.rowwise().sum() / static_cast<double>(n - 1);
}

CentralityResult eigenvector_centrality(const ConnectivityGraph& graph, double tol,
                                        int max_iters) {
  const Eigen::Index n = graph.size();
  const Eigen::MatrixXd& w = graph.weights;
  if (n == 0 || w.cwiseAbs().maxCoeff() == 0.0) {
    throw DegenerateGraph("eigenvector centrality of an all-zero graph is undefined");
  }

  CentralityResult result;
  Eigen::VectorXd e = Eigen::VectorXd::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
  double best_residual = std::numeric_limits<double>::infinity();
  for (int iter = 1; iter <= max_iters; ++iter) {
    Eigen::VectorXd next = w * e + e;
    next /= next.norm();
    const Eigen::VectorXd we = w * next;
    const double lambda = next.dot(we);
    const double residual = (we - lambda * next).norm();
    e = std::move(next);
    if (residual < best_residual) {
      best_residual = residual;
      result.values = e;
      result.eigenvalue = lambda;
      result.residual = residual;
      result.iterations = iter;
    }
    if (residual < tol) {
      result.converged = true;
      break;
    }
  }
  // Perron vector of a nonnegative matrix; clear round-off negatives.
  result.values = result.values.cwiseMax(0.0);
  result.values /= result.values.norm();
  return result;
}

Eigen::VectorXd clustering_coefficient(const ConnectivityGraph& graph) {
  const Eigen::Index n = graph.size();
  if (n < 3) throw InvalidInput("clustering coefficient needs at least 3 nodes");
  const Eigen::MatrixXd c = graph.weights.unaryExpr([](double v) { return std::cbrt(v); });
  // (C C) .* C summed over each row gives sum_{j,k} c_ij c_ik c_jk; the zero
  // diagonal removes every term with j == k, j == i or k == i.
  const Eigen::MatrixXd paths = c * c;
  const Eigen::VectorXd numerator = paths.cwiseProduct(c).rowwise().sum();
  const double degree = static_cast<double>(n - 1);
  return numerator / (degree * (degree - 1.0));
}

std::vector<NodeMetrics> graph_metrics(const ConnectivityGraph& graph) {
  const Eigen::Index n = graph.size();
  std::vector<NodeMetrics> out(static_cast<std::size_t>(n));
  if (n == 0) return out;
  const Eigen::VectorXd strength = n >= 2 ? node_strength(graph) : Eigen::VectorXd::Zero(n);
  const Eigen::VectorXd clustering = n >= 3 ? clustering_coefficient(graph) : Eigen::VectorXd::Zero(n);
  Eigen::VectorXd centrality;
  try {
    centrality = eigenvector_centrality(graph).values;
  } catch (const DegenerateGraph&) {
    centrality = Eigen::VectorXd::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = {strength(i), centrality(i), clustering(i)};
  }
  return out;
}

}  // namespace arrestmap
