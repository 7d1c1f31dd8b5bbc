#include "ermica/transform.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "ermica/io.hpp"
#include "ermica/linalg.hpp"
#include "ermica/rng.hpp"

namespace ermica {

std::string_view to_string(TransformKind k) {
  switch (k) {
    case TransformKind::whiten: return "whiten";
    case TransformKind::pca: return "pca";
    case TransformKind::ica: return "ica";
  }
  return "?";
}

TransformKind parse_transform_kind(std::string_view s) {
  if (s == "whiten") return TransformKind::whiten;
  if (s == "pca") return TransformKind::pca;
  if (s == "ica") return TransformKind::ica;
  throw std::invalid_argument("unknown transform kind: " + std::string(s));
}

namespace {

void require_tall(const Matrix& r, const char* what) {
  if (r.rows() <= r.cols())
    throw std::invalid_argument(std::string(what) + ": need more rows than columns");
}

}  // namespace

LinearTransform fit_whiten(const Matrix& r) {
  require_tall(r, "fit_whiten");
  LinearTransform t;
  t.kind = TransformKind::whiten;
  t.offset = column_means(r);
  const SymEig e = sym_eig(covariance(r));
  const double lmax = e.eigenvalues(0, 0);
  if (!(lmax > 0.0)) throw std::runtime_error("fit_whiten: covariance has rank 0");
  std::size_t rank = 0;
  while (rank < e.eigenvalues.rows() && e.eigenvalues(rank, 0) > kRangeTolerance * lmax) ++rank;
  const std::size_t d = r.cols();
  t.matrix = Matrix(rank, d);
  for (std::size_t i = 0; i < rank; ++i) {
    const double f = 1.0 / std::sqrt(e.eigenvalues(i, 0));
    for (std::size_t j = 0; j < d; ++j) t.matrix(i, j) = f * e.eigenvectors(j, i);
  }
  return t;
}

LinearTransform fit_pca(const Matrix& r) {
  require_tall(r, "fit_pca");
  LinearTransform t;
  t.kind = TransformKind::pca;
  t.offset = column_means(r);
  t.matrix = sym_eig(covariance(r)).eigenvectors.transposed();
  return t;
}

Matrix symmetric_decorrelation(const Matrix& w) {
  return matmul(inverse_sqrt_sym(matmul_nt(w, w)), w);
}

IcaFit fit_ica_detailed(const Matrix& r, const IcaOptions& options) {
  require_tall(r, "fit_ica");
  IcaFit fit;
  fit.whitening = fit_whiten(r);
  const Matrix xw = apply_transform(fit.whitening, r);  // n x m
  const std::size_t n = xw.rows(), m = xw.cols();
  const double inv_n = 1.0 / static_cast<double>(n);

  RngStream rng(options.seed);
  Matrix w = symmetric_decorrelation(rng_normal(rng, m, m, 0.0, 1.0));
  Matrix best = w;
  double best_lim = std::numeric_limits<double>::infinity();
  bool converged = false;
  std::size_t it = 0;
  while (it < options.max_iter) {
    ++it;
    Matrix g = matmul_nt(xw, w);  // n x m projections
    std::vector<double> mean_dg(m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      auto row = g.row(i);
      for (std::size_t j = 0; j < m; ++j) {
        const double t = std::tanh(row[j]);
        row[j] = t;
        mean_dg[j] += 1.0 - t * t;
      }
    }
    Matrix next = matmul_tn(g, xw);  // m x m
    for (std::size_t a = 0; a < m; ++a) {
      const double md = mean_dg[a] * inv_n;
      for (std::size_t b = 0; b < m; ++b) next(a, b) = next(a, b) * inv_n - md * w(a, b);
    }
    next = symmetric_decorrelation(next);

    double lim = 0.0;
    for (std::size_t a = 0; a < m; ++a) {
      double dot = 0.0;
      for (std::size_t b = 0; b < m; ++b) dot += next(a, b) * w(a, b);
      lim = std::max(lim, std::abs(std::abs(dot) - 1.0));
    }
    w = std::move(next);
    if (lim < best_lim) {
      best_lim = lim;
      best = w;
    }
    if (lim < options.tol) {
      converged = true;
      break;
    }
  }

  fit.unmixing = converged ? w : best;
  fit.transform.kind = TransformKind::ica;
  fit.transform.offset = fit.whitening.offset;
  fit.transform.matrix = matmul(fit.unmixing, fit.whitening.matrix);
  fit.transform.converged = converged;
  fit.transform.iterations = it;
  return fit;
}

LinearTransform fit_ica(const Matrix& r, const IcaOptions& options) {
  return fit_ica_detailed(r, options).transform;
}

Matrix apply_transform(const LinearTransform& t, const Matrix& r) {
  if (r.cols() != t.input_dim() || t.offset.size() != t.input_dim())
    throw std::invalid_argument("apply_transform: expected " + std::to_string(t.input_dim()) +
                                " columns, got " + std::to_string(r.cols()));
  return matmul_nt(subtract_row_offset(r, t.offset), t.matrix);
}

void save_transform(const LinearTransform& t, const std::filesystem::path& path) {
  nlohmann::json j = {{"kind", to_string(t.kind)},
                      {"matrix", matrix_to_json(t.matrix)},
                      {"offset", std::vector<double>(t.offset.values().begin(), t.offset.values().end())},
                      {"converged", t.converged},
                      {"iterations", t.iterations}};
  write_json(j, path);
}

LinearTransform load_transform(const std::filesystem::path& path) {
  const auto j = read_json(path);
  LinearTransform t;
  t.kind = parse_transform_kind(j.at("kind").get<std::string>());
  t.matrix = matrix_from_json(j.at("matrix"));
  auto offset = j.at("offset").get<std::vector<double>>();
  const std::size_t d = offset.size();
  t.offset = Matrix(d, 1, std::move(offset));
  t.converged = j.value("converged", true);
  t.iterations = j.value("iterations", std::size_t{0});
  if (t.matrix.cols() != d) throw std::runtime_error(path.string() + ": offset/matrix mismatch");
  return t;
}

}  // namespace ermica
