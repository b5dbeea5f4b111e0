#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "arrestmap/mlp.hpp"

namespace arrestmap {

enum class ClassifierKind { linear_svm, rbf_svm, logreg, mlp2 };
enum class ClassWeightMode { none, inverse_frequency };

std::string_view to_string(ClassifierKind kind);
ClassifierKind parse_classifier_kind(std::string_view text);

struct ClassifierSpec {
  ClassifierKind kind = ClassifierKind::linear_svm;
  double C = 1.0;
  std::optional<double> gamma;  // RBF width; defaults to 1 / input dimension
  double learning_rate = 1e-3;
  int epochs = 100;
  std::vector<int> hidden{64, 32};
  int batch_size = 64;  // mlp2 minibatch; logreg always trains full batch
  ClassWeightMode class_weight = ClassWeightMode::inverse_frequency;
  std::uint64_t seed = 0;
  // Stratified subsample cap on the rows handed to the solver (0 = no cap).
  std::size_t max_train_samples = 2000;
  double smo_tolerance = 1e-3;
  // Records the dual objective after every SMO step (costs O(n) per step).
  bool track_dual_objective = false;

  void validate() const;
  nlohmann::json to_json() const;
  static ClassifierSpec from_json(const nlohmann::json& j);
};

// Platt sigmoid p = 1 / (1 + exp(-(a f + b))).
struct PlattParams {
  double a = 0.0;
  double b = 0.0;
  int iterations = 0;
  bool converged = true;

  double probability(double decision) const;
};

// Newton iterations with backtracking on the regularized log-loss, with
// smoothed targets (N+ + 1)/(N+ + 2) and 1/(N- + 2).
PlattParams calibrate_probabilities(std::span<const double> decision_values,
                                    std::span<const int> labels);

// Dual C-SVM solved by SMO with maximal-violating-pair selection.
struct SmoResult {
  Eigen::VectorXd alpha;
  double bias = 0.0;           // decision = sum alpha_i y_i K(x_i, x) + bias
  double kkt_violation = 0.0;  // max_{I_up} -y G - min_{I_low} -y G at exit
  long iterations = 0;
  bool converged = false;
  std::vector<double> dual_objective;  // only when tracking is requested
};

SmoResult solve_svm_dual(const Eigen::MatrixXd& kernel, std::span<const int> signs,
                         std::span<const double> upper_bounds, double tolerance, long max_iterations,
                         bool track_objective);

// Recomputes the gradient from scratch and returns the maximal KKT violation
// of alpha; used to verify every SMO fit independently of the solver state.
double svm_kkt_violation(const Eigen::MatrixXd& kernel, std::span<const int> signs,
                         std::span<const double> upper_bounds, const Eigen::VectorXd& alpha);

struct TrainDiagnostics {
  std::size_t rows_used = 0;
  double kkt_violation = 0.0;
  long smo_iterations = 0;
  std::vector<double> dual_objective;
  std::vector<double> loss_trace;  // logreg / mlp2 per-epoch training loss
};

class TrainedModel {
 public:
  ClassifierKind kind() const { return kind_; }
  int input_dim() const { return dim_; }

  // Raw margin (SVM) or logit (logreg / mlp2).
  Eigen::VectorXd decision_values(const Eigen::MatrixXd& x) const;
  // Calibrated probabilities in [0, 1].
  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;

  const std::optional<PlattParams>& calibrator() const { return platt_; }
  const TrainDiagnostics& diagnostics() const { return diagnostics_; }
  std::size_t support_vector_count() const { return static_cast<std::size_t>(support_.rows()); }

  // <stem>.json carries kind, shapes and scalars; <stem>.f32 the weights.
  void save(const std::filesystem::path& stem) const;
  static TrainedModel load(const std::filesystem::path& stem);

 private:
  friend TrainedModel train_classifier(const ClassifierSpec&, const Eigen::MatrixXd&,
                                       std::span<const int>);
  ClassifierKind kind_ = ClassifierKind::linear_svm;
  int dim_ = 0;
  double gamma_ = 0.0;
  Eigen::MatrixXd support_;     // rbf: support vectors
  Eigen::VectorXd coef_;        // rbf: alpha_i y_i; linear: weight vector
  double bias_ = 0.0;
  Mlp mlp_;                     // logreg ({d, 1}) and mlp2
  std::optional<PlattParams> platt_;
  TrainDiagnostics diagnostics_;
};

// labels are 0/1. Throws TrainingError for single-class input and
// InvalidInput for non-finite features.
TrainedModel train_classifier(const ClassifierSpec& spec, const Eigen::MatrixXd& x,
                              std::span<const int> labels);

std::vector<double> predict_trial_scores(const TrainedModel& model, const Eigen::MatrixXd& x);

// Inverse-frequency class weights n / (2 n_c) as {negative, positive}.
std::pair<double, double> inverse_frequency_weights(std::span<const int> labels);

// Seeded stratified subsample of row indices, returned in increasing order.
std::vector<std::size_t> stratified_subsample(std::span<const int> labels, std::size_t cap,
                                              std::uint64_t seed);

}  // namespace arrestmap
