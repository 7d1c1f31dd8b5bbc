#include "ermica/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace ermica {

namespace {

constexpr int kMaxJacobiSweeps = 100;

double off_diagonal_norm(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (i != j) s += a(i, j) * a(i, j);
  return std::sqrt(s);
}

}  // namespace

SymEig sym_eig(const Matrix& input) {
  const std::size_t n = input.rows();
  if (input.cols() != n) throw std::invalid_argument("sym_eig: matrix must be square");
  double scale = 0.0;
  for (double v : input.values()) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(input(i, j) - input(j, i)) > 1e-9 * std::max(scale, 1.0))
        throw std::invalid_argument("sym_eig: matrix is not symmetric at (" + std::to_string(i) +
                                    ", " + std::to_string(j) + ")");

  Matrix a = input;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) a(j, i) = a(i, j);
  Matrix v = Matrix::identity(n);

  const double total = frobenius_norm(a);
  const double threshold = 1e-14 * std::max(total, 1e-300);
  bool converged = n < 2 || off_diagonal_norm(a) <= threshold;
  for (int sweep = 0; sweep < kMaxJacobiSweeps && !converged; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double app = a(p, p), aqq = a(q, q);
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
    converged = off_diagonal_norm(a) <= threshold;
  }
  if (!converged) throw std::runtime_error("sym_eig: Jacobi iteration did not converge");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });
  SymEig out{Matrix(n, 1), Matrix(n, n)};
  for (std::size_t i = 0; i < n; ++i) {
    out.eigenvalues(i, 0) = a(order[i], order[i]);
    // sign convention: largest-magnitude entry of each eigenvector is positive
    std::size_t arg = 0;
    for (std::size_t k = 0; k < n; ++k)
      if (std::abs(v(k, order[i])) > std::abs(v(arg, order[i]))) arg = k;
    const double sign = v(arg, order[i]) < 0 ? -1.0 : 1.0;
    for (std::size_t k = 0; k < n; ++k) out.eigenvectors(k, i) = sign * v(k, order[i]);
  }
  return out;
}

LuFactor::LuFactor(const Matrix& a) : lu_(a), perm_(a.rows()) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw std::invalid_argument("LuFactor: matrix must be square");
  std::iota(perm_.begin(), perm_.end(), 0);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t pivot = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(lu_(i, k)) > std::abs(lu_(pivot, k))) pivot = i;
    if (std::abs(lu_(pivot, k)) <= kPivotTolerance)
      throw std::runtime_error("solve_linear: singular matrix, pivot " + std::to_string(k) +
                               " has magnitude " + std::to_string(std::abs(lu_(pivot, k))));
    if (pivot != k) {
      std::swap_ranges(lu_.row(k).begin(), lu_.row(k).end(), lu_.row(pivot).begin());
      std::swap(perm_[k], perm_[pivot]);
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = lu_(i, k) / lu_(k, k);
      lu_(i, k) = f;
      for (std::size_t j = k + 1; j < n; ++j) lu_(i, j) -= f * lu_(k, j);
    }
  }
}

Matrix LuFactor::solve(const Matrix& b) const {
  const std::size_t n = lu_.rows();
  if (b.rows() != n) throw std::invalid_argument("solve_linear: right-hand side row mismatch");
  const std::size_t m = b.cols();
  Matrix x(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const auto src = b.row(perm_[i]);
    std::copy(src.begin(), src.end(), x.row(i).begin());
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < i; ++k) {
      const double f = lu_(i, k);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) x(i, j) -= f * x(k, j);
    }
  for (std::size_t ii = n; ii-- > 0;) {
    for (std::size_t k = ii + 1; k < n; ++k) {
      const double f = lu_(ii, k);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) x(ii, j) -= f * x(k, j);
    }
    const double d = lu_(ii, ii);
    for (std::size_t j = 0; j < m; ++j) x(ii, j) /= d;
  }
  return x;
}

Matrix solve_linear(const Matrix& a, const Matrix& b) { return LuFactor(a).solve(b); }

std::vector<double> singular_values(const Matrix& a) {
  const SymEig e = sym_eig(matmul_tn(a, a));
  std::vector<double> s(e.eigenvalues.rows());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = std::sqrt(std::max(e.eigenvalues(i, 0), 0.0));
  return s;
}

double condition_number(const Matrix& a) {
  const auto s = singular_values(a);
  if (s.empty()) return 1.0;
  if (s.back() <= 0.0) return std::numeric_limits<double>::infinity();
  return s.front() / s.back();
}

Matrix inverse_sqrt_sym(const Matrix& s) {
  const SymEig e = sym_eig(s);
  const std::size_t n = s.rows();
  Matrix scaled = e.eigenvectors;
  for (std::size_t i = 0; i < n; ++i) {
    const double lambda = e.eigenvalues(i, 0);
    if (!(lambda > 0.0)) throw std::runtime_error("inverse_sqrt_sym: matrix not positive definite");
    const double f = 1.0 / std::sqrt(lambda);
    for (std::size_t k = 0; k < n; ++k) scaled(k, i) *= f;
  }
  return matmul_nt(scaled, e.eigenvectors);
}

}  // namespace ermica
