#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string_view>

#include "ermica/matrix.hpp"

namespace ermica {

enum class TransformKind { whiten, pca, ica };
std::string_view to_string(TransformKind k);
TransformKind parse_transform_kind(std::string_view s);

/// y = matrix * (x - offset), applied row-wise. matrix is d' x d with d' <= d
/// (whitening drops null directions of the covariance).
struct LinearTransform {
  Matrix matrix;
  Matrix offset;  // d x 1
  TransformKind kind = TransformKind::whiten;
  bool converged = true;
  std::size_t iterations = 0;

  std::size_t input_dim() const { return matrix.cols(); }
  std::size_t output_dim() const { return matrix.rows(); }
};

/// Eigenvalues at or below this fraction of the largest are treated as null.
inline constexpr double kRangeTolerance = 1e-10;

LinearTransform fit_whiten(const Matrix& r);
LinearTransform fit_pca(const Matrix& r);

struct IcaOptions {
  std::size_t max_iter = 30000;
  double tol = 1e-4;
  std::uint64_t seed = 0;
};

struct IcaFit {
  LinearTransform transform;  // unmixing composed with whitening
  LinearTransform whitening;
  Matrix unmixing;  // d' x d', orthonormal rows
};

/// Symmetric fixed-point ICA with contrast log cosh (nonlinearity tanh) on
/// whitened data. Non-convergence is not an error: the iterate with the
/// smallest update is returned with converged = false.
IcaFit fit_ica_detailed(const Matrix& r, const IcaOptions& options = {});
LinearTransform fit_ica(const Matrix& r, const IcaOptions& options = {});

/// (W W^T)^(-1/2) W
Matrix symmetric_decorrelation(const Matrix& w);

Matrix apply_transform(const LinearTransform& t, const Matrix& r);

void save_transform(const LinearTransform& t, const std::filesystem::path& path);
LinearTransform load_transform(const std::filesystem::path& path);

}  // namespace ermica
