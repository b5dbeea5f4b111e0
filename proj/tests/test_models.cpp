#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "arrestmap/error.hpp"
#include "arrestmap/mlp.hpp"
#include "arrestmap/models.hpp"

using namespace arrestmap;

namespace {

struct Data {
  Eigen::MatrixXd x;
  std::vector<int> y;
};

Data blobs(std::uint64_t seed, int per_class = 40) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.5);
  Data d{Eigen::MatrixXd(2 * per_class, 2), {}};
  for (int i = 0; i < 2 * per_class; ++i) {
    const int label = i < per_class ? 1 : 0;
    const double c = label ? 2.0 : -2.0;
    d.x(i, 0) = c + g(rng);
    d.x(i, 1) = c + g(rng);
    d.y.push_back(label);
  }
  return d;
}

Data xor_points() {
  Data d{Eigen::MatrixXd(4, 2), {1, 1, 0, 0}};
  d.x << 0, 1, 1, 0, 0, 0, 1, 1;
  return d;
}

double accuracy(const Eigen::VectorXd& decision, const std::vector<int>& y) {
  double hits = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) hits += (decision(static_cast<Eigen::Index>(i)) > 0.0) == (y[i] == 1);
  return hits / static_cast<double>(y.size());
}

// Max relative difference between an analytic gradient and central differences.
double gradient_error(Mlp& mlp, const Eigen::MatrixXd& x, const std::vector<int>& y, const LogitLoss& loss) {
  Eigen::VectorXd grad;
  mlp.loss_and_gradient(x, y, loss, &grad);
  double worst = 0.0;
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < mlp.parameters().size(); ++i) {
    const double keep = mlp.parameters()(i);
    mlp.parameters()(i) = keep + h;
    const double up = mlp.loss_and_gradient(x, y, loss, nullptr);
    mlp.parameters()(i) = keep - h;
    const double down = mlp.loss_and_gradient(x, y, loss, nullptr);
    mlp.parameters()(i) = keep;
    const double fd = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - grad(i)) / std::max(1e-3, std::abs(fd) + std::abs(grad(i))));
  }
  return worst;
}

}  // namespace

TEST_CASE("linear SVM separates the blobs") {
  const auto d = blobs(1);
  ClassifierSpec s;
  s.kind = ClassifierKind::linear_svm;
  const auto m = train_classifier(s, d.x, d.y);
  CHECK(accuracy(m.decision_values(d.x), d.y) == 1.0);
  CHECK(m.diagnostics().kkt_violation < 1e-3);
  const auto p = predict_trial_scores(m, d.x);
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(p[i] >= 0.0);
    CHECK(p[i] <= 1.0);
  }
  Eigen::MatrixXd deep(1, 2);
  deep << 4.0, 4.0;
  CHECK(predict_trial_scores(m, deep)[0] > 0.5);
  CHECK_THROWS_AS(predict_trial_scores(m, Eigen::MatrixXd::Zero(1, 3)), InvalidInput);
}

TEST_CASE("XOR needs the RBF kernel") {
  const auto d = xor_points();
  ClassifierSpec rbf;
  rbf.kind = ClassifierKind::rbf_svm;
  rbf.gamma = 1.0;
  rbf.C = 10.0;
  CHECK(accuracy(train_classifier(rbf, d.x, d.y).decision_values(d.x), d.y) == 1.0);
  ClassifierSpec lin;
  lin.kind = ClassifierKind::linear_svm;
  CHECK(accuracy(train_classifier(lin, d.x, d.y).decision_values(d.x), d.y) <= 0.75);
}

TEST_CASE("SMO meets the KKT tolerance and the dual objective never decreases") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int instance = 0; instance < 10; ++instance) {
    Data d{Eigen::MatrixXd(60, 4), {}};
    for (int i = 0; i < 60; ++i) {
      for (int c = 0; c < 4; ++c) d.x(i, c) = g(rng);
      d.y.push_back(d.x(i, 0) + 0.5 * g(rng) > 0.3 ? 1 : 0);
    }
    for (auto kind : {ClassifierKind::linear_svm, ClassifierKind::rbf_svm}) {
      ClassifierSpec s;
      s.kind = kind;
      s.track_dual_objective = true;
      const auto m = train_classifier(s, d.x, d.y);
      CHECK(m.diagnostics().kkt_violation < 1e-3);
      const auto& obj = m.diagnostics().dual_objective;
      REQUIRE(!obj.empty());
      for (std::size_t i = 1; i < obj.size(); ++i) CHECK(obj[i] >= obj[i - 1] - 1e-9 * std::abs(obj[i - 1]));
    }
  }
}

TEST_CASE("logistic regression loss strictly decreases on the blobs") {
  const auto d = blobs(2);
  ClassifierSpec s;
  s.kind = ClassifierKind::logreg;
  s.learning_rate = 0.01;
  const auto m = train_classifier(s, d.x, d.y);
  const auto& trace = m.diagnostics().loss_trace;
  REQUIRE(trace.size() == 100);
  for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] < trace[i - 1]);
  CHECK(accuracy(m.decision_values(d.x), d.y) == 1.0);
}

TEST_CASE("MLP and logistic gradients match central differences") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int instance = 0; instance < 5; ++instance) {
    Eigen::MatrixXd x(12, 5);
    std::vector<int> y;
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
    for (int i = 0; i < 12; ++i) y.push_back(i % 3 == 0);
    const auto loss = weighted_bce(2.0, 0.7);
    Mlp logreg({5, 1}, static_cast<std::uint64_t>(instance));
    CHECK(gradient_error(logreg, x, y, loss) < 1e-4);
    Mlp net({5, 8, 4, 1}, static_cast<std::uint64_t>(instance));
    // Nonzero biases keep every pre-activation off the ReLU kink.
    for (Eigen::Index i = 0; i < net.parameters().size(); ++i) net.parameters()(i) += 0.1 * g(rng);
    CHECK(gradient_error(net, x, y, loss) < 1e-4);
  }
}

TEST_CASE("Platt calibration") {
  SUBCASE("well separated margins") {
    std::vector<double> f;
    std::vector<int> y;
    for (int i = 0; i < 200; ++i) {
      f.push_back(5.0 + 0.001 * i);
      y.push_back(1);
      f.push_back(-5.0 - 0.001 * i);  // 200 per class: smoothed target 201/202 > 0.99
      y.push_back(0);
    }
    const auto p = calibrate_probabilities(f, y);
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (y[i] == 1) CHECK(p.probability(f[i]) >= 0.99);
    }
  }
  SUBCASE("symmetric margins give a zero offset") {
    std::vector<double> f;
    std::vector<int> y;
    for (int i = 0; i < 20; ++i) {
      const double m = 0.2 + 0.1 * (i % 5);
      const bool flip = i % 4 == 0;
      f.push_back(m);
      y.push_back(flip ? 0 : 1);
      f.push_back(-m);
      y.push_back(flip ? 1 : 0);
    }
    CHECK(std::abs(calibrate_probabilities(f, y).b) < 1e-6);
  }
  SUBCASE("constant margins give the smoothed prior") {
    const std::vector<double> f(10, 0.7);
    const std::vector<int> y{1, 1, 1, 0, 0, 0, 0, 0, 0, 0};
    const auto p = calibrate_probabilities(f, y);
    const double hi = 4.0 / 5.0, lo = 1.0 / 9.0;
    const double prior = (3.0 * hi + 7.0 * lo) / 10.0;
    CHECK(p.probability(0.7) == doctest::Approx(prior).epsilon(1e-5));
  }
  SUBCASE("single class") {
    const std::vector<double> f{1.0, 2.0};
    const std::vector<int> y{1, 1};
    CHECK_THROWS_AS(calibrate_probabilities(f, y), TrainingError);
  }
}

TEST_CASE("training preconditions") {
  auto d = blobs(3, 5);
  ClassifierSpec s;
  const std::vector<int> one_class(d.y.size(), 1);
  CHECK_THROWS_AS(train_classifier(s, d.x, one_class), TrainingError);
  d.x(2, 1) = std::nan("");
  CHECK_THROWS_AS(train_classifier(s, d.x, d.y), InvalidInput);
  s.C = 0.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("determinism, zero rows and save/load for every kind") {
  const auto d = blobs(4);
  Eigen::MatrixXd probe(3, 2);
  probe << 0.3, -0.1, 0.3, -0.1, 0.0, 0.0;
  for (auto kind : {ClassifierKind::linear_svm, ClassifierKind::rbf_svm, ClassifierKind::logreg, ClassifierKind::mlp2}) {
    CAPTURE(to_string(kind));
    ClassifierSpec s;
    s.kind = kind;
    s.epochs = 20;
    s.seed = 11;
    const auto a = train_classifier(s, d.x, d.y);
    const auto b = train_classifier(s, d.x, d.y);
    const auto pa = a.predict(probe);
    CHECK(pa == b.predict(probe));
    CHECK(pa(0) == pa(1));
    CHECK(std::isfinite(pa(2)));
    CHECK(pa(2) >= 0.0);
    CHECK(pa(2) <= 1.0);

    const auto stem = std::filesystem::temp_directory_path() / ("arrestmap_test_model_" + std::string(to_string(kind)));
    a.save(stem);
    const auto back = TrainedModel::load(stem);
    CHECK(back.kind() == kind);
    CHECK((back.predict(probe) - pa).cwiseAbs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("class weights and stratified subsampling") {
  const std::vector<int> y{1, 0, 0, 0, 0};
  const auto [neg, pos] = inverse_frequency_weights(y);
  CHECK(pos == doctest::Approx(2.5));
  CHECK(neg == doctest::Approx(0.625));

  std::vector<int> many(1000, 0);
  for (int i = 0; i < 200; ++i) many[static_cast<std::size_t>(i * 5)] = 1;
  const auto keep = stratified_subsample(many, 100, 9);
  CHECK(keep.size() == 100);
  CHECK(std::is_sorted(keep.begin(), keep.end()));
  int positives = 0;
  for (auto i : keep) positives += many[i];
  CHECK(positives == 20);
  CHECK(keep == stratified_subsample(many, 100, 9));
  CHECK(stratified_subsample(many, 0, 9).size() == 1000);
}
