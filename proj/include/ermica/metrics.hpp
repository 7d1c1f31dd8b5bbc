#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ermica/datagen.hpp"
#include "ermica/matrix.hpp"

namespace ermica {

enum class Method { erm, erm_pca, erm_ica };
std::string_view to_string(Method m);
Method parse_method(std::string_view s);

struct EvalResult {
  Method method = Method::erm;
  TaskType task_type = TaskType::regression;
  std::size_t d = 0;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  double label_score = 0.0;  // average R^2 or average accuracy
  double mcc = 0.0;
  std::optional<bool> ica_converged;
  double wall_time_s = 0.0;
};

/// rho(i, j) = Pearson correlation of z column i with zhat column j.
/// Zero-variance columns get correlation 0; a message per degenerate column
/// is appended to `warnings` when given.
Matrix corr_matrix(const Matrix& z, const Matrix& zhat, std::vector<std::string>* warnings = nullptr);

struct Assignment {
  std::vector<std::size_t> columns;  // row i -> columns[i]
  double total = 0.0;
};

/// Maximum-weight perfect matching on a square score matrix. Among optimal
/// matchings the lexicographically smallest permutation is returned.
Assignment hungarian_max(const Matrix& score);

/// Mean absolute correlation under the best one-to-one matching of true to
/// recovered components. If zhat has fewer columns than z, unmatched true
/// components contribute 0.
double mcc(const Matrix& z, const Matrix& zhat, std::vector<std::string>* warnings = nullptr);

/// Mean over tasks of 1 - SSE/SST. Throws on a zero-variance task.
double r2_avg(const Matrix& y, const Matrix& yhat);
/// Mean over tasks of the fraction of matching entries; inputs must be 0/1.
double accuracy_avg(const Matrix& y, const Matrix& yhat_binary);
/// 1 where the logit is >= 0 (probability >= 0.5), else 0.
Matrix threshold_logits(const Matrix& logits);

struct Readout {
  Matrix weight;             // k x d
  std::vector<double> bias;  // k
  double score = 0.0;        // on the held-out split
  bool converged = true;     // classification only
};

inline constexpr double kRidgeLambda = 1e-6;
inline constexpr std::size_t kLogisticIterations = 2000;
inline constexpr double kLogisticLr = 0.1;
inline constexpr double kLogisticGradTol = 1e-6;

/// Fits an affine predictor on (r_train, y_train) and scores it on
/// (r_test, y_test): ridge closed form for regression (R^2), per-task
/// logistic regression by full-batch gradient descent for classification
/// (accuracy).
Readout downstream_readout(const Matrix& r_train, const Matrix& y_train, const Matrix& r_test,
                           const Matrix& y_test, TaskType task_type);

Matrix readout_predict(const Readout& readout, const Matrix& r);

}  // namespace ermica
