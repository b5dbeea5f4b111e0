#include "arrestmap/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "arrestmap/binary_io.hpp"
#include "arrestmap/error.hpp"
#include "arrestmap/numeric.hpp"
#include "arrestmap/parallel.hpp"

namespace arrestmap {

std::string_view to_string(ClassifierKind kind) {
  switch (kind) {
    case ClassifierKind::linear_svm: return "linear_svm";
    case ClassifierKind::rbf_svm: return "rbf_svm";
    case ClassifierKind::logreg: return "logreg";
    case ClassifierKind::mlp2: return "mlp2";
  }
  return "?";
}

ClassifierKind parse_classifier_kind(std::string_view text) {
  for (auto k : {ClassifierKind::linear_svm, ClassifierKind::rbf_svm, ClassifierKind::logreg,
                 ClassifierKind::mlp2}) {
    if (to_string(k) == text) return k;
  }
  throw ConfigError("unknown classifier kind '" + std::string(text) + "'");
}

void ClassifierSpec::validate() const {
  if (!(C > 0.0)) throw ConfigError("classifier C must be > 0");
  if (gamma && !(*gamma > 0.0)) throw ConfigError("classifier gamma must be > 0");
  if (epochs < 1) throw ConfigError("classifier epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("classifier learning_rate must be > 0");
  for (int h : hidden) {
    if (h < 1) throw ConfigError("hidden layer sizes must be positive");
  }
}

nlohmann::json ClassifierSpec::to_json() const {
  nlohmann::json j{{"kind", to_string(kind)},
                   {"C", C},
                   {"learning_rate", learning_rate},
                   {"epochs", epochs},
                   {"hidden", hidden},
                   {"batch_size", batch_size},
                   {"class_weight", class_weight == ClassWeightMode::none ? "none" : "inverse_frequency"},
                   {"max_train_samples", max_train_samples},
                   {"smo_tolerance", smo_tolerance}};
  j["gamma"] = gamma ? nlohmann::json(*gamma) : nlohmann::json(nullptr);
  return j;
}

ClassifierSpec ClassifierSpec::from_json(const nlohmann::json& j) {
  ClassifierSpec s;
  if (j.is_string()) {
    s.kind = parse_classifier_kind(j.get<std::string>());
    return s;
  }
  try {
    if (j.contains("kind")) s.kind = parse_classifier_kind(j["kind"].get<std::string>());
    s.C = j.value("C", s.C);
    if (j.contains("gamma") && !j["gamma"].is_null()) s.gamma = j["gamma"].get<double>();
    s.learning_rate = j.value("learning_rate", s.learning_rate);
    s.epochs = j.value("epochs", s.epochs);
    if (j.contains("hidden")) s.hidden = j["hidden"].get<std::vector<int>>();
    s.batch_size = j.value("batch_size", s.batch_size);
    if (j.contains("class_weight")) {
      const auto mode = j["class_weight"].get<std::string>();
      if (mode == "none") s.class_weight = ClassWeightMode::none;
      else if (mode == "inverse_frequency") s.class_weight = ClassWeightMode::inverse_frequency;
      else throw ConfigError("unknown class_weight mode '" + mode + "'");
    }
    s.max_train_samples = j.value("max_train_samples", s.max_train_samples);
    s.smo_tolerance = j.value("smo_tolerance", s.smo_tolerance);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad classifier spec: ") + e.what());
  }
  s.validate();
  return s;
}

double PlattParams::probability(double decision) const { return sigmoid(a * decision + b); }

PlattParams calibrate_probabilities(std::span<const double> f, std::span<const int> labels) {
  const std::size_t n = f.size();
  if (labels.size() != n) throw InvalidInput("decision value / label count mismatch");
  double n_pos = 0, n_neg = 0;
  for (int y : labels) (y == 1 ? n_pos : n_neg) += 1.0;
  if (n_pos == 0 || n_neg == 0) throw TrainingError("Platt scaling needs both classes");

  const double hi = (n_pos + 1.0) / (n_pos + 2.0);
  const double lo = 1.0 / (n_neg + 2.0);
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = labels[i] == 1 ? hi : lo;

  constexpr int kMaxIter = 100;
  constexpr double kMinStep = 1e-10;
  constexpr double kRidge = 1e-12;
  constexpr double kGradTol = 1e-5;

  auto objective = [&](double a, double b) {
    double fval = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = a * f[i] + b;
      fval += z >= 0.0 ? (1.0 - t[i]) * z + std::log1p(std::exp(-z))
                       : -t[i] * z + std::log1p(std::exp(z));
    }
    return fval;
  };

  PlattParams out;
  out.a = 0.0;
  out.b = std::log((n_pos + 1.0) / (n_neg + 1.0));
  double fval = objective(out.a, out.b);
  out.converged = false;
  for (int iter = 1; iter <= kMaxIter; ++iter) {
    double h11 = kRidge, h22 = kRidge, h21 = 0.0, g1 = 0.0, g2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(out.a * f[i] + out.b);
      const double d1 = p - t[i];
      const double d2 = p * (1.0 - p);
      h11 += f[i] * f[i] * d2;
      h22 += d2;
      h21 += f[i] * d2;
      g1 += f[i] * d1;
      g2 += d1;
    }
    out.iterations = iter;
    if (std::abs(g1) < kGradTol && std::abs(g2) < kGradTol) {
      out.converged = true;
      break;
    }
    const double det = h11 * h22 - h21 * h21;
    const double da = -(h22 * g1 - h21 * g2) / det;
    const double db = -(-h21 * g1 + h11 * g2) / det;
    const double gd = g1 * da + g2 * db;
    double step = 1.0;
    bool moved = false;
    while (step >= kMinStep) {
      const double na = out.a + step * da;
      const double nb = out.b + step * db;
      const double nf = objective(na, nb);
      if (nf < fval + 1e-4 * step * gd) {
        out.a = na;
        out.b = nb;
        fval = nf;
        moved = true;
        break;
      }
      step /= 2.0;
    }
    if (!moved) break;  // line search failed; keep the best iterate
  }
  return out;
}

SmoResult solve_svm_dual(const Eigen::MatrixXd& kernel, std::span<const int> y,
                         std::span<const double> upper, double tolerance, long max_iterations,
                         bool track_objective) {
  const auto n = static_cast<Eigen::Index>(y.size());
  if (kernel.rows() != n || kernel.cols() != n || static_cast<Eigen::Index>(upper.size()) != n) {
    throw InvalidInput("SMO inputs have inconsistent sizes");
  }
  constexpr double kTau = 1e-12;
  SmoResult r;
  r.alpha = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd& alpha = r.alpha;
  // Gradient of 0.5 a'Qa - e'a with Q_ij = y_i y_j K_ij.
  Eigen::VectorXd grad = Eigen::VectorXd::Constant(n, -1.0);
  auto yi = [&](Eigen::Index i) { return static_cast<double>(y[static_cast<std::size_t>(i)]); };
  auto ub = [&](Eigen::Index i) { return upper[static_cast<std::size_t>(i)]; };
  auto in_up = [&](Eigen::Index t) {
    return (yi(t) > 0 && alpha(t) < ub(t)) || (yi(t) < 0 && alpha(t) > 0);
  };
  auto in_low = [&](Eigen::Index t) {
    return (yi(t) > 0 && alpha(t) > 0) || (yi(t) < 0 && alpha(t) < ub(t));
  };
  auto dual = [&] {
    double d = 0.0;
    for (Eigen::Index t = 0; t < n; ++t) d -= 0.5 * alpha(t) * (grad(t) - 1.0);
    return d;
  };

  for (;;) {
    double gmax = -std::numeric_limits<double>::infinity();
    double gmin = std::numeric_limits<double>::infinity();
    Eigen::Index i = -1, j = -1;
    for (Eigen::Index t = 0; t < n; ++t) {
      const double v = -yi(t) * grad(t);
      if (in_up(t) && v > gmax) {
        gmax = v;
        i = t;
      }
      if (in_low(t) && v < gmin) {
        gmin = v;
        j = t;
      }
    }
    r.kkt_violation = (i < 0 || j < 0) ? 0.0 : gmax - gmin;
    if (i < 0 || j < 0 || gmax - gmin < tolerance) {
      r.converged = true;
      break;
    }
    if (r.iterations >= max_iterations) break;
    ++r.iterations;

    const double old_i = alpha(i), old_j = alpha(j);
    const double ci = ub(i), cj = ub(j);
    const double kii = kernel(i, i), kjj = kernel(j, j), kij = kernel(i, j);
    if (yi(i) != yi(j)) {
      // y_i != y_j, so Q_ii + Q_jj + 2 Q_ij = K_ii + K_jj - 2 K_ij
      double quad = kii + kjj - 2.0 * kij;
      if (quad <= 0) quad = kTau;
      const double delta = (-grad(i) - grad(j)) / quad;
      const double diff = alpha(i) - alpha(j);
      alpha(i) += delta;
      alpha(j) += delta;
      if (diff > 0) {
        if (alpha(j) < 0) {
          alpha(j) = 0;
          alpha(i) = diff;
        }
      } else if (alpha(i) < 0) {
        alpha(i) = 0;
        alpha(j) = -diff;
      }
      if (diff > ci - cj) {
        if (alpha(i) > ci) {
          alpha(i) = ci;
          alpha(j) = ci - diff;
        }
      } else if (alpha(j) > cj) {
        alpha(j) = cj;
        alpha(i) = cj + diff;
      }
    } else {
      double quad = kii + kjj - 2.0 * kij;
      if (quad <= 0) quad = kTau;
      const double delta = (grad(i) - grad(j)) / quad;
      const double sum = alpha(i) + alpha(j);
      alpha(i) -= delta;
      alpha(j) += delta;
      if (sum > ci) {
        if (alpha(i) > ci) {
          alpha(i) = ci;
          alpha(j) = sum - ci;
        }
      } else if (alpha(j) < 0) {
        alpha(j) = 0;
        alpha(i) = sum;
      }
      if (sum > cj) {
        if (alpha(j) > cj) {
          alpha(j) = cj;
          alpha(i) = sum - cj;
        }
      } else if (alpha(i) < 0) {
        alpha(i) = 0;
        alpha(j) = sum;
      }
    }
    const double di = (alpha(i) - old_i) * yi(i);
    const double dj = (alpha(j) - old_j) * yi(j);
    for (Eigen::Index t = 0; t < n; ++t) {
      grad(t) += yi(t) * (kernel(t, i) * di + kernel(t, j) * dj);
    }
    if (track_objective) r.dual_objective.push_back(dual());
  }

  // Bias: average -y G over free vectors, else the midpoint of the feasible range.
  double sum_free = 0.0;
  long free_count = 0;
  double ub_r = std::numeric_limits<double>::infinity();
  double lb_r = -std::numeric_limits<double>::infinity();
  for (Eigen::Index t = 0; t < n; ++t) {
    const double yg = yi(t) * grad(t);
    if (alpha(t) > 0 && alpha(t) < ub(t)) {
      sum_free += yg;
      ++free_count;
    } else if ((alpha(t) >= ub(t) && yi(t) < 0) || (alpha(t) <= 0 && yi(t) > 0)) {
      ub_r = std::min(ub_r, yg);
    } else {
      lb_r = std::max(lb_r, yg);
    }
  }
  const double rho = free_count > 0 ? sum_free / static_cast<double>(free_count) : 0.5 * (ub_r + lb_r);
  r.bias = -rho;
  return r;
}

double svm_kkt_violation(const Eigen::MatrixXd& kernel, std::span<const int> y,
                         std::span<const double> upper, const Eigen::VectorXd& alpha) {
  const auto n = static_cast<Eigen::Index>(y.size());
  Eigen::VectorXd ya(n);
  for (Eigen::Index t = 0; t < n; ++t) ya(t) = y[static_cast<std::size_t>(t)] * alpha(t);
  const Eigen::VectorXd k_ya = kernel * ya;
  double gmax = -std::numeric_limits<double>::infinity();
  double gmin = std::numeric_limits<double>::infinity();
  for (Eigen::Index t = 0; t < n; ++t) {
    const double yt = y[static_cast<std::size_t>(t)];
    const double grad = yt * k_ya(t) - 1.0;
    const double v = -yt * grad;
    const double c = upper[static_cast<std::size_t>(t)];
    const bool up = (yt > 0 && alpha(t) < c) || (yt < 0 && alpha(t) > 0);
    const bool low = (yt > 0 && alpha(t) > 0) || (yt < 0 && alpha(t) < c);
    if (up) gmax = std::max(gmax, v);
    if (low) gmin = std::min(gmin, v);
  }
  if (!std::isfinite(gmax) || !std::isfinite(gmin)) return 0.0;
  return std::max(0.0, gmax - gmin);
}

std::pair<double, double> inverse_frequency_weights(std::span<const int> labels) {
  double pos = 0, neg = 0;
  for (int y : labels) (y == 1 ? pos : neg) += 1.0;
  const double n = pos + neg;
  if (pos == 0 || neg == 0) throw TrainingError("class weights need both classes");
  return {n / (2.0 * neg), n / (2.0 * pos)};
}

std::vector<std::size_t> stratified_subsample(std::span<const int> labels, std::size_t cap,
                                              std::uint64_t seed) {
  const std::size_t n = labels.size();
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (cap == 0 || n <= cap) return all;
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < n; ++i) (labels[i] == 1 ? pos : neg).push_back(i);
  std::mt19937_64 rng(seed);
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);
  auto keep_pos = static_cast<std::size_t>(std::llround(static_cast<double>(cap) * pos.size() / n));
  keep_pos = std::clamp<std::size_t>(keep_pos, pos.empty() ? 0 : 1, pos.size());
  const std::size_t keep_neg = std::min(neg.size(), cap - keep_pos);
  std::vector<std::size_t> out(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(keep_pos));
  out.insert(out.end(), neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(keep_neg));
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

Eigen::MatrixXd rbf_kernel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double gamma) {
  const Eigen::VectorXd na = a.rowwise().squaredNorm();
  const Eigen::VectorXd nb = b.rowwise().squaredNorm();
  Eigen::MatrixXd k = -2.0 * (a * b.transpose());
  k.colwise() += na;
  k.rowwise() += nb.transpose();
  return (-gamma * k.cwiseMax(0.0)).array().exp().matrix();
}

}  // namespace

TrainedModel train_classifier(const ClassifierSpec& spec, const Eigen::MatrixXd& x_all,
                              std::span<const int> labels_all) {
  spec.validate();
  if (static_cast<Eigen::Index>(labels_all.size()) != x_all.rows()) {
    throw InvalidInput("feature rows and labels disagree");
  }
  if (!x_all.allFinite()) throw InvalidInput("non-finite value in training features");
  if (x_all.rows() < 2) throw TrainingError("need at least 2 training rows");
  {
    bool pos = false, neg = false;
    for (int y : labels_all) (y == 1 ? pos : neg) = true;
    if (!pos || !neg) throw TrainingError("training labels contain a single class");
  }

  const auto keep = stratified_subsample(labels_all, spec.max_train_samples, spec.seed);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(keep.size()), x_all.cols());
  std::vector<int> labels(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = x_all.row(static_cast<Eigen::Index>(keep[i]));
    labels[i] = labels_all[keep[i]];
  }
  auto [w_neg, w_pos] = spec.class_weight == ClassWeightMode::inverse_frequency
                            ? inverse_frequency_weights(labels)
                            : std::pair<double, double>{1.0, 1.0};

  TrainedModel model;
  model.kind_ = spec.kind;
  model.dim_ = static_cast<int>(x.cols());
  model.diagnostics_.rows_used = keep.size();
  const auto n = x.rows();

  switch (spec.kind) {
    case ClassifierKind::linear_svm:
    case ClassifierKind::rbf_svm: {
      const bool rbf = spec.kind == ClassifierKind::rbf_svm;
      model.gamma_ = spec.gamma.value_or(1.0 / static_cast<double>(x.cols()));
      const Eigen::MatrixXd kernel = rbf ? rbf_kernel(x, x, model.gamma_) : Eigen::MatrixXd(x * x.transpose());
      std::vector<int> signs(labels.size());
      std::vector<double> bounds(labels.size());
      for (std::size_t i = 0; i < labels.size(); ++i) {
        signs[i] = labels[i] == 1 ? 1 : -1;
        bounds[i] = spec.C * (labels[i] == 1 ? w_pos : w_neg);
      }
      const long max_iter = std::max<long>(1'000'000, 200 * static_cast<long>(n));
      SmoResult smo = solve_svm_dual(kernel, signs, bounds, spec.smo_tolerance, max_iter,
                                     spec.track_dual_objective);
      if (!smo.converged) {
        throw TrainingError("SMO stopped after " + std::to_string(smo.iterations) +
                            " iterations with KKT violation " + std::to_string(smo.kkt_violation));
      }
      model.diagnostics_.kkt_violation = svm_kkt_violation(kernel, signs, bounds, smo.alpha);
      if (model.diagnostics_.kkt_violation >= spec.smo_tolerance) {
        throw TrainingError("SMO solution fails the KKT check: violation " +
                            std::to_string(model.diagnostics_.kkt_violation));
      }
      model.diagnostics_.smo_iterations = smo.iterations;
      model.diagnostics_.dual_objective = std::move(smo.dual_objective);
      model.bias_ = smo.bias;

      std::vector<Eigen::Index> sv;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (smo.alpha(i) > 0.0) sv.push_back(i);
      }
      if (rbf) {
        model.support_.resize(static_cast<Eigen::Index>(sv.size()), x.cols());
        model.coef_.resize(static_cast<Eigen::Index>(sv.size()));
        for (std::size_t k = 0; k < sv.size(); ++k) {
          model.support_.row(static_cast<Eigen::Index>(k)) = x.row(sv[k]);
          model.coef_(static_cast<Eigen::Index>(k)) = smo.alpha(sv[k]) * signs[static_cast<std::size_t>(sv[k])];
        }
      } else {
        model.coef_ = Eigen::VectorXd::Zero(x.cols());
        for (Eigen::Index i : sv) {
          model.coef_ += smo.alpha(i) * signs[static_cast<std::size_t>(i)] * x.row(i).transpose();
        }
      }
      const Eigen::VectorXd f = model.decision_values(x);
      model.platt_ = calibrate_probabilities(std::span<const double>(f.data(), static_cast<std::size_t>(f.size())), labels);
      break;
    }
    case ClassifierKind::logreg:
    case ClassifierKind::mlp2: {
      std::vector<int> sizes{static_cast<int>(x.cols())};
      if (spec.kind == ClassifierKind::mlp2) sizes.insert(sizes.end(), spec.hidden.begin(), spec.hidden.end());
      sizes.push_back(1);
      model.mlp_ = Mlp(sizes, spec.seed);
      MlpTrainOptions opts;
      opts.epochs = spec.epochs;
      opts.batch_size = spec.kind == ClassifierKind::logreg ? 0 : spec.batch_size;  // logreg: full batch
      opts.adam.learning_rate = spec.learning_rate;
      opts.seed = mix_seed(spec.seed, 0x5eed);
      model.diagnostics_.loss_trace = train_mlp(model.mlp_, x, labels, weighted_bce(w_pos, w_neg), opts);
      break;
    }
  }
  return model;
}

Eigen::VectorXd TrainedModel::decision_values(const Eigen::MatrixXd& x) const {
  if (x.cols() != dim_) {
    throw InvalidInput("model expects " + std::to_string(dim_) + " feature columns, got " +
                       std::to_string(x.cols()));
  }
  switch (kind_) {
    case ClassifierKind::linear_svm:
      return (x * coef_).array() + bias_;
    case ClassifierKind::rbf_svm: {
      Eigen::VectorXd out(x.rows());
      constexpr Eigen::Index kBlock = 1024;
      for (Eigen::Index start = 0; start < x.rows(); start += kBlock) {
        const Eigen::Index count = std::min(kBlock, x.rows() - start);
        const Eigen::MatrixXd k = rbf_kernel(x.middleRows(start, count), support_, gamma_);
        out.segment(start, count) = (k * coef_).array() + bias_;
      }
      return out;
    }
    case ClassifierKind::logreg:
    case ClassifierKind::mlp2:
      return mlp_.logits(x);
  }
  return {};
}

Eigen::VectorXd TrainedModel::predict(const Eigen::MatrixXd& x) const {
  Eigen::VectorXd f = decision_values(x);
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    f(i) = platt_ ? platt_->probability(f(i)) : sigmoid(f(i));
  }
  return f;
}

std::vector<double> predict_trial_scores(const TrainedModel& model, const Eigen::MatrixXd& x) {
  const Eigen::VectorXd p = model.predict(x);
  return {p.data(), p.data() + p.size()};
}

void TrainedModel::save(const std::filesystem::path& stem) const {
  nlohmann::json meta{{"kind", to_string(kind_)}, {"input_dim", dim_}, {"bias", bias_}, {"gamma", gamma_}};
  std::vector<double> weights;
  switch (kind_) {
    case ClassifierKind::linear_svm:
      weights.assign(coef_.data(), coef_.data() + coef_.size());
      break;
    case ClassifierKind::rbf_svm: {
      meta["support_vectors"] = support_.rows();
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> sv = support_;
      weights.assign(sv.data(), sv.data() + sv.size());
      weights.insert(weights.end(), coef_.data(), coef_.data() + coef_.size());
      break;
    }
    case ClassifierKind::logreg:
    case ClassifierKind::mlp2:
      meta["layers"] = mlp_.layer_sizes();
      weights.assign(mlp_.parameters().data(), mlp_.parameters().data() + mlp_.parameters().size());
      break;
  }
  if (platt_) meta["platt"] = {{"a", platt_->a}, {"b", platt_->b}};
  meta["weight_count"] = weights.size();
  meta["weights"] = stem.filename().string() + ".f32";
  write_json(stem.string() + ".json", meta);
  write_f32(stem.string() + ".f32", weights);
}

TrainedModel TrainedModel::load(const std::filesystem::path& stem) {
  const auto meta = read_json(stem.string() + ".json");
  TrainedModel m;
  try {
    m.kind_ = parse_classifier_kind(meta.at("kind").get<std::string>());
    m.dim_ = meta.at("input_dim").get<int>();
    m.bias_ = meta.at("bias").get<double>();
    m.gamma_ = meta.at("gamma").get<double>();
    const auto count = meta.at("weight_count").get<std::size_t>();
    const auto w = read_f32(stem.string() + ".f32", count);
    switch (m.kind_) {
      case ClassifierKind::linear_svm:
        m.coef_ = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
        break;
      case ClassifierKind::rbf_svm: {
        const auto nsv = meta.at("support_vectors").get<Eigen::Index>();
        m.support_ = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            w.data(), nsv, m.dim_);
        m.coef_ = Eigen::Map<const Eigen::VectorXd>(w.data() + nsv * m.dim_, nsv);
        break;
      }
      case ClassifierKind::logreg:
      case ClassifierKind::mlp2: {
        m.mlp_ = Mlp(meta.at("layers").get<std::vector<int>>(), 0);
        if (m.mlp_.parameters().size() != static_cast<Eigen::Index>(w.size())) {
          throw FormatError(stem.string() + ": weight count does not match layer sizes");
        }
        m.mlp_.parameters() = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
        break;
      }
    }
    if (meta.contains("platt")) {
      PlattParams p;
      p.a = meta["platt"].at("a").get<double>();
      p.b = meta["platt"].at("b").get<double>();
      m.platt_ = p;
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(stem.string() + ".json: " + e.what());
  }
  return m;
}

}  // namespace arrestmap
