#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "arrestmap/signal.hpp"

namespace arrestmap {

// Weighted undirected graph over the electrodes of one subject for one trial:
// symmetric, weights in [0, 1], zero diagonal.
struct ConnectivityGraph {
  Eigen::MatrixXd weights;

  Eigen::Index size() const { return weights.rows(); }
};

struct CentralityResult {
  Eigen::VectorXd values;  // unit L2 norm, nonnegative
  double eigenvalue = 0.0;
  double residual = 0.0;   // ||W e - lambda e||_2
  int iterations = 0;
  bool converged = false;
};

// Absolute Pearson correlation between every pair of epochs.
ConnectivityGraph trial_connectivity(std::span<const TrialEpoch* const> epochs);
ConnectivityGraph trial_connectivity(std::span<const TrialEpoch> epochs);

// Mean edge weight per node, (1/(L-1)) sum_{j != i} w_ij.
Eigen::VectorXd node_strength(const ConnectivityGraph& graph);

// Leading eigenvector by shifted power iteration (W + I shares eigenvectors with W
// and removes the +/- lambda oscillation of bipartite-like graphs). Throws
// DegenerateGraph when every weight is zero.
CentralityResult eigenvector_centrality(const ConnectivityGraph& graph, double tol = 1e-10,
                                        int max_iters = 1000);

// sum over ordered pairs (j, k), j != k, both != i, of (w_ij w_ik w_jk)^(1/3),
// divided by (L-1)(L-2).
Eigen::VectorXd clustering_coefficient(const ConnectivityGraph& graph);

struct NodeMetrics {
  double strength = 0.0;
  double centrality = 0.0;
  double clustering = 0.0;
};

// All three metrics for every node; an all-zero graph yields strength 0,
// clustering 0 and uniform centrality 1/sqrt(L).
std::vector<NodeMetrics> graph_metrics(const ConnectivityGraph& graph);

}  // namespace arrestmap
