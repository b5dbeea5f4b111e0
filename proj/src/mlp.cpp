#include "arrestmap/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "arrestmap/error.hpp"

namespace arrestmap {

LogitLoss weighted_bce(double positive_weight, double negative_weight) {
  return [=](double z, int y, double* dz) {
    // log(1 + e^z) computed without overflow
    const double softplus = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    const double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    if (y == 1) {
      if (dz) *dz = positive_weight * (p - 1.0);
      return positive_weight * (softplus - z);
    }
    if (dz) *dz = negative_weight * p;
    return negative_weight * softplus;
  };
}

Mlp::Mlp(std::vector<int> layer_sizes, std::uint64_t seed) : sizes_(std::move(layer_sizes)) {
  if (sizes_.size() < 2 || sizes_.back() != 1) {
    throw InvalidInput("MLP needs at least an input layer and a single output unit");
  }
  for (int s : sizes_) {
    if (s < 1) throw InvalidInput("MLP layer sizes must be positive");
  }
  Eigen::Index total = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) total += sizes_[l + 1] * (sizes_[l] + 1);
  params_ = Eigen::VectorXd::Zero(total);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const int in = sizes_[l];
    const int out = sizes_[l + 1];
    // Glorot-uniform weights, zero biases.
    const double bound = std::sqrt(6.0 / (in + out));
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(in) * out; ++i) {
      params_(offset + i) = bound * unit(rng);
    }
    offset += static_cast<Eigen::Index>(in) * out + out;
  }
}

Eigen::VectorXd Mlp::logits(const Eigen::MatrixXd& x) const {
  if (x.cols() != input_dim()) {
    throw InvalidInput("MLP expects " + std::to_string(input_dim()) + " inputs, got " +
                       std::to_string(x.cols()));
  }
  Eigen::MatrixXd a = x.transpose();
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const int in = sizes_[l];
    const int out = sizes_[l + 1];
    Eigen::Map<const Eigen::MatrixXd> w(params_.data() + offset, out, in);
    Eigen::Map<const Eigen::VectorXd> b(params_.data() + offset + static_cast<Eigen::Index>(in) * out, out);
    Eigen::MatrixXd z = w * a;
    z.colwise() += b;
    if (l + 2 < sizes_.size()) z = z.cwiseMax(0.0);
    a = std::move(z);
    offset += static_cast<Eigen::Index>(in) * out + out;
  }
  return a.row(0).transpose();
}

Eigen::VectorXd Mlp::predict_proba(const Eigen::MatrixXd& x) const {
  Eigen::VectorXd z = logits(x);
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double v = z(i);
    z(i) = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return z;
}

double Mlp::loss_and_gradient(const Eigen::MatrixXd& x, std::span<const int> labels,
                              const LogitLoss& loss, Eigen::VectorXd* gradient) const {
  const Eigen::Index n = x.rows();
  if (static_cast<Eigen::Index>(labels.size()) != n) throw InvalidInput("label count mismatch");
  if (x.cols() != input_dim()) throw InvalidInput("MLP input width mismatch");
  if (n == 0) return 0.0;
  const std::size_t layers = sizes_.size() - 1;

  // activations[l] is the input to layer l (features x samples)
  std::vector<Eigen::MatrixXd> activations;
  activations.reserve(layers + 1);
  activations.push_back(x.transpose());
  std::vector<Eigen::Index> offsets(layers);
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    offsets[l] = offset;
    const int in = sizes_[l];
    const int out = sizes_[l + 1];
    Eigen::Map<const Eigen::MatrixXd> w(params_.data() + offset, out, in);
    Eigen::Map<const Eigen::VectorXd> b(params_.data() + offset + static_cast<Eigen::Index>(in) * out, out);
    Eigen::MatrixXd z = w * activations.back();
    z.colwise() += b;
    if (l + 1 < layers) z = z.cwiseMax(0.0);
    activations.push_back(std::move(z));
    offset += static_cast<Eigen::Index>(in) * out + out;
  }

  const Eigen::MatrixXd& out_logits = activations.back();
  double total = 0.0;
  Eigen::MatrixXd delta(1, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double dz = 0.0;
    total += loss(out_logits(0, i), labels[static_cast<std::size_t>(i)], &dz);
    delta(0, i) = dz / static_cast<double>(n);
  }
  if (!gradient) return total / static_cast<double>(n);

  gradient->setZero(params_.size());
  for (std::size_t l = layers; l-- > 0;) {
    const int in = sizes_[l];
    const int out = sizes_[l + 1];
    Eigen::Map<Eigen::MatrixXd> gw(gradient->data() + offsets[l], out, in);
    Eigen::Map<Eigen::VectorXd> gb(gradient->data() + offsets[l] + static_cast<Eigen::Index>(in) * out, out);
    gw.noalias() = delta * activations[l].transpose();
    gb = delta.rowwise().sum();
    if (l == 0) break;
    Eigen::Map<const Eigen::MatrixXd> w(params_.data() + offsets[l], out, in);
    Eigen::MatrixXd back = w.transpose() * delta;
    // ReLU derivative from the post-activation values of the previous layer
    delta = back.cwiseProduct((activations[l].array() > 0.0).cast<double>().matrix());
  }
  return total / static_cast<double>(n);
}

Adam::Adam(Eigen::Index size, AdamOptions options)
    : options_(options), m_(Eigen::VectorXd::Zero(size)), v_(Eigen::VectorXd::Zero(size)) {}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& gradient) {
  ++t_;
  m_ = options_.beta1 * m_ + (1.0 - options_.beta1) * gradient;
  v_ = options_.beta2 * v_ + (1.0 - options_.beta2) * gradient.cwiseAbs2();
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  params.array() -= options_.learning_rate * (m_.array() / c1) /
                    ((v_.array() / c2).sqrt() + options_.epsilon);
}

std::vector<double> train_mlp(Mlp& mlp, const Eigen::MatrixXd& x, std::span<const int> labels,
                              const LogitLoss& loss, const MlpTrainOptions& options) {
  const Eigen::Index n = x.rows();
  if (n == 0) throw TrainingError("no training rows");
  Adam adam(mlp.parameters().size(), options.adam);
  std::mt19937_64 rng(options.seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const Eigen::Index batch = options.batch_size <= 0 ? n : std::min<Eigen::Index>(options.batch_size, n);

  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(options.epochs));
  Eigen::VectorXd grad;
  Eigen::MatrixXd xb;
  std::vector<int> yb;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    if (batch < n) std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index start = 0; start < n; start += batch) {
      const Eigen::Index count = std::min(batch, n - start);
      if (batch == n) {
        mlp.loss_and_gradient(x, labels, loss, &grad);
      } else {
        xb.resize(count, x.cols());
        yb.resize(static_cast<std::size_t>(count));
        for (Eigen::Index i = 0; i < count; ++i) {
          const Eigen::Index src = order[static_cast<std::size_t>(start + i)];
          xb.row(i) = x.row(src);
          yb[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(src)];
        }
        mlp.loss_and_gradient(xb, yb, loss, &grad);
      }
      adam.step(mlp.parameters(), grad);
    }
    trace.push_back(mlp.loss_and_gradient(x, labels, loss, nullptr));
  }
  return trace;
}

}  // namespace arrestmap
