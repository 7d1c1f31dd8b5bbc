#pragma once

#include <cstddef>
#include <vector>

#include "ermica/matrix.hpp"

namespace ermica {

struct SymEig {
  Matrix eigenvalues;   // d x 1, descending
  Matrix eigenvectors;  // d x d, column i pairs with eigenvalues(i)
};

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Throws std::invalid_argument if `a` is not symmetric within 1e-9
/// (relative to its largest entry) and std::runtime_error if the sweep cap
/// is reached before the off-diagonal mass vanishes.
SymEig sym_eig(const Matrix& a);

/// LU factorisation with partial pivoting, reusable across right-hand sides.
class LuFactor {
 public:
  explicit LuFactor(const Matrix& a);
  /// Solves A x = b for every column of b.
  Matrix solve(const Matrix& b) const;
  std::size_t dim() const { return lu_.rows(); }

 private:
  Matrix lu_;
  std::vector<std::size_t> perm_;
};

inline constexpr double kPivotTolerance = 1e-12;

Matrix solve_linear(const Matrix& a, const Matrix& b);

/// Singular values in descending order (via eigenvalues of A^T A).
std::vector<double> singular_values(const Matrix& a);
double condition_number(const Matrix& a);

/// (S)^(-1/2) for symmetric positive definite S.
Matrix inverse_sqrt_sym(const Matrix& s);

}  // namespace ermica
