#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace arrestmap {

// Per-sample loss on a logit; writes d(loss)/d(logit) to *dlogit when non-null.
using LogitLoss = std::function<double(double logit, int label, double* dlogit)>;

// Class-weighted binary cross-entropy on the logit.
LogitLoss weighted_bce(double positive_weight, double negative_weight);

// Fully connected network: ReLU on every hidden layer, a single linear output
// logit squashed by the logistic function. layer_sizes = {in, h1, ..., 1};
// {in, 1} is plain logistic regression. All parameters live in one flat vector
// (per layer: weight matrix [out x in] column-major, then bias [out]).
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<int> layer_sizes, std::uint64_t seed);

  const std::vector<int>& layer_sizes() const { return sizes_; }
  int input_dim() const { return sizes_.empty() ? 0 : sizes_.front(); }
  Eigen::VectorXd& parameters() { return params_; }
  const Eigen::VectorXd& parameters() const { return params_; }

  // rows of x are samples
  Eigen::VectorXd logits(const Eigen::MatrixXd& x) const;
  Eigen::VectorXd predict_proba(const Eigen::MatrixXd& x) const;

  // Mean loss over the rows of x; gradient (same layout as parameters()) is
  // written when non-null.
  double loss_and_gradient(const Eigen::MatrixXd& x, std::span<const int> labels,
                           const LogitLoss& loss, Eigen::VectorXd* gradient) const;

 private:
  std::vector<int> sizes_;
  Eigen::VectorXd params_;
};

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam(Eigen::Index size, AdamOptions options);
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& gradient);

 private:
  AdamOptions options_;
  Eigen::VectorXd m_, v_;
  long t_ = 0;
};

struct MlpTrainOptions {
  int epochs = 100;
  int batch_size = 64;  // <= 0 means full batch
  AdamOptions adam;
  std::uint64_t seed = 0;
};

// Mini-batch Adam with a seeded shuffle per epoch. Returns the mean training
// loss over the full set after every epoch.
std::vector<double> train_mlp(Mlp& mlp, const Eigen::MatrixXd& x, std::span<const int> labels,
                              const LogitLoss& loss, const MlpTrainOptions& options);

}  // namespace arrestmap
