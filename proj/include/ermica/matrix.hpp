#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace ermica {

/// Dense row-major matrix of doubles.
///
/// Constructing from explicit data rejects NaN/Inf entries; shape-only
/// construction zero-fills. Kernels below return fresh values and never
/// alias their inputs.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix column(std::initializer_list<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<double>& storage() const { return data_; }

  Matrix transposed() const;
  Matrix select_rows(std::span<const std::size_t> indices) const;
  Matrix slice_rows(std::size_t begin, std::size_t end) const;
  Matrix column_at(std::size_t c) const;

  bool all_finite() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
// a * b^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);
// a^T * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);

/// Column means as a cols x 1 matrix.
Matrix column_means(const Matrix& a);
/// Subtracts a cols x 1 offset from every row.
Matrix subtract_row_offset(const Matrix& a, const Matrix& offset);
/// Adds a 1 x cols (or cols x 1) bias to every row.
Matrix add_row_bias(const Matrix& a, std::span<const double> bias);
/// Covariance normalised by n (maximum-likelihood form).
Matrix covariance(const Matrix& a);

double frobenius_norm(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);
double trace(const Matrix& a);

}  // namespace ermica
