#include "ermica/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ermica/linalg.hpp"

namespace ermica {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::erm: return "erm";
    case Method::erm_pca: return "erm_pca";
    case Method::erm_ica: return "erm_ica";
  }
  return "?";
}

Method parse_method(std::string_view s) {
  if (s == "erm") return Method::erm;
  if (s == "erm_pca") return Method::erm_pca;
  if (s == "erm_ica") return Method::erm_ica;
  throw std::invalid_argument("unknown method: " + std::string(s));
}

Matrix corr_matrix(const Matrix& z, const Matrix& zhat, std::vector<std::string>* warnings) {
  if (z.rows() != zhat.rows()) throw std::invalid_argument("corr_matrix: row count mismatch");
  if (z.rows() < 3) throw std::invalid_argument("corr_matrix: need at least 3 rows");
  const Matrix zc = subtract_row_offset(z, column_means(z));
  const Matrix hc = subtract_row_offset(zhat, column_means(zhat));
  const Matrix cross = matmul_tn(zc, hc);
  auto norms = [](const Matrix& c) {
    std::vector<double> s(c.cols(), 0.0);
    for (std::size_t i = 0; i < c.rows(); ++i)
      for (std::size_t j = 0; j < c.cols(); ++j) s[j] += c(i, j) * c(i, j);
    for (double& v : s) v = std::sqrt(v);
    return s;
  };
  const auto nz = norms(zc);
  const auto nh = norms(hc);
  // Constant up to rounding: centred norm negligible against the raw magnitude.
  auto degenerate = [](const Matrix& raw, std::size_t col, double centred_norm) {
    double scale = 0.0;
    for (std::size_t i = 0; i < raw.rows(); ++i) scale = std::max(scale, std::abs(raw(i, col)));
    return !(centred_norm > 1e-12 * scale * std::sqrt(static_cast<double>(raw.rows())));
  };
  std::vector<bool> bad_z(z.cols()), bad_h(zhat.cols());
  for (std::size_t i = 0; i < z.cols(); ++i) {
    bad_z[i] = nz[i] == 0.0 || degenerate(z, i, nz[i]);
    if (bad_z[i] && warnings)
      warnings->push_back("corr_matrix: true component " + std::to_string(i) + " has zero variance");
  }
  for (std::size_t j = 0; j < zhat.cols(); ++j) {
    bad_h[j] = nh[j] == 0.0 || degenerate(zhat, j, nh[j]);
    if (bad_h[j] && warnings)
      warnings->push_back("corr_matrix: recovered component " + std::to_string(j) +
                          " has zero variance");
  }
  Matrix rho(z.cols(), zhat.cols());
  for (std::size_t i = 0; i < z.cols(); ++i)
    for (std::size_t j = 0; j < zhat.cols(); ++j)
      rho(i, j) = bad_z[i] || bad_h[j] ? 0.0 : std::clamp(cross(i, j) / (nz[i] * nh[j]), -1.0, 1.0);
  return rho;
}

namespace {

// Augmenting-path search over tight edges, avoiding fixed rows/columns.
bool augment(std::size_t row, std::size_t target_col, const std::vector<std::vector<char>>& tight,
             std::vector<std::size_t>& match_row, std::vector<std::size_t>& match_col,
             const std::vector<char>& row_blocked, const std::vector<char>& col_blocked,
             std::vector<char>& visited) {
  const std::size_t n = tight.size();
  for (std::size_t c = 0; c < n; ++c) {
    if (!tight[row][c] || col_blocked[c] || visited[c]) continue;
    visited[c] = 1;
    if (c == target_col) {
      match_row[row] = c;
      match_col[c] = row;
      return true;
    }
    const std::size_t owner = match_col[c];
    if (row_blocked[owner]) continue;
    if (augment(owner, target_col, tight, match_row, match_col, row_blocked, col_blocked, visited)) {
      match_row[row] = c;
      match_col[c] = row;
      return true;
    }
  }
  return false;
}

}  // namespace

Assignment hungarian_max(const Matrix& score) {
  const std::size_t n = score.rows();
  if (score.cols() != n) throw std::invalid_argument("hungarian_max: matrix must be square");
  if (!score.all_finite()) throw std::invalid_argument("hungarian_max: non-finite score");
  Assignment result;
  if (n == 0) return result;

  // Shortest augmenting path on cost = -score with potentials (1-indexed).
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  auto cost = [&](std::size_t i, std::size_t j) { return -score(i - 1, j - 1); };
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<std::size_t> match_row(n), match_col(n);
  for (std::size_t j = 1; j <= n; ++j) {
    match_row[p[j] - 1] = j - 1;
    match_col[j - 1] = p[j] - 1;
  }

  // Every optimal matching lives on the tight edges of an optimal dual, so
  // the lexicographically smallest one is found greedily row by row.
  double scale = 0.0;
  for (double s : score.values()) scale = std::max(scale, std::abs(s));
  const double tol = 1e-10 * std::max(scale, 1.0) * static_cast<double>(n);
  std::vector<std::vector<char>> tight(n, std::vector<char>(n, 0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      tight[i][j] = std::abs(cost(i + 1, j + 1) - u[i + 1] - v[j + 1]) <= tol;
  for (std::size_t i = 0; i < n; ++i) tight[i][match_row[i]] = 1;

  std::vector<char> row_fixed(n, 0), col_fixed(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (!tight[i][j] || col_fixed[j]) continue;
      if (match_row[i] == j) break;
      // try i -> j: j's owner must re-route to the column i releases
      auto mr = match_row;
      auto mc = match_col;
      const std::size_t owner = mc[j];
      const std::size_t released = mr[i];
      mr[i] = j;
      mc[j] = i;
      std::vector<char> row_blocked = row_fixed, col_blocked = col_fixed, visited(n, 0);
      row_blocked[i] = 1;
      col_blocked[j] = 1;
      if (augment(owner, released, tight, mr, mc, row_blocked, col_blocked, visited)) {
        match_row = std::move(mr);
        match_col = std::move(mc);
        break;
      }
    }
    row_fixed[i] = 1;
    col_fixed[match_row[i]] = 1;
  }

  result.columns = match_row;
  for (std::size_t i = 0; i < n; ++i) result.total += score(i, match_row[i]);
  return result;
}

double mcc(const Matrix& z, const Matrix& zhat, std::vector<std::string>* warnings) {
  const Matrix rho = corr_matrix(z, zhat, warnings);
  const std::size_t n = std::max(rho.rows(), rho.cols());
  Matrix score(n, n);
  for (std::size_t i = 0; i < rho.rows(); ++i)
    for (std::size_t j = 0; j < rho.cols(); ++j) score(i, j) = std::abs(rho(i, j));
  const Assignment a = hungarian_max(score);
  double total = 0.0;
  for (std::size_t i = 0; i < rho.rows(); ++i) total += score(i, a.columns[i]);
  return total / static_cast<double>(rho.rows());
}

double r2_avg(const Matrix& y, const Matrix& yhat) {
  if (y.rows() != yhat.rows() || y.cols() != yhat.cols())
    throw std::invalid_argument("r2_avg: shape mismatch");
  if (y.rows() < 2) throw std::invalid_argument("r2_avg: need at least 2 rows");
  const Matrix mean = column_means(y);
  double total = 0.0;
  for (std::size_t j = 0; j < y.cols(); ++j) {
    double sse = 0.0, sst = 0.0;
    for (std::size_t i = 0; i < y.rows(); ++i) {
      const double e = y(i, j) - yhat(i, j);
      const double c = y(i, j) - mean(j, 0);
      sse += e * e;
      sst += c * c;
    }
    if (!(sst > 0.0)) throw std::invalid_argument("r2_avg: task " + std::to_string(j) + " has zero variance");
    total += 1.0 - sse / sst;
  }
  return total / static_cast<double>(y.cols());
}

double accuracy_avg(const Matrix& y, const Matrix& yhat) {
  if (y.rows() != yhat.rows() || y.cols() != yhat.cols())
    throw std::invalid_argument("accuracy_avg: shape mismatch");
  if (y.rows() == 0) throw std::invalid_argument("accuracy_avg: empty input");
  auto binary = [](double v) { return v == 0.0 || v == 1.0; };
  double total = 0.0;
  for (std::size_t j = 0; j < y.cols(); ++j) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < y.rows(); ++i) {
      if (!binary(y(i, j)) || !binary(yhat(i, j)))
        throw std::invalid_argument("accuracy_avg: entries must be 0 or 1");
      hits += y(i, j) == yhat(i, j);
    }
    total += static_cast<double>(hits) / static_cast<double>(y.rows());
  }
  return total / static_cast<double>(y.cols());
}

Matrix threshold_logits(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  const auto in = logits.values();
  auto o = out.values();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = in[i] >= 0.0 ? 1.0 : 0.0;
  return out;
}

Matrix readout_predict(const Readout& readout, const Matrix& r) {
  return add_row_bias(matmul_nt(r, readout.weight), readout.bias);
}

namespace {

Readout fit_ridge(const Matrix& r, const Matrix& y) {
  const std::size_t n = r.rows(), d = r.cols(), k = y.cols();
  Matrix aug(n, d + 1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) aug(i, j) = r(i, j);
    aug(i, d) = 1.0;
  }
  Matrix normal = matmul_tn(aug, aug);
  for (std::size_t j = 0; j <= d; ++j) normal(j, j) += kRidgeLambda;
  const Matrix coef = solve_linear(normal, matmul_tn(aug, y));  // (d+1) x k
  Readout out{Matrix(k, d), std::vector<double>(k)};
  for (std::size_t t = 0; t < k; ++t) {
    for (std::size_t j = 0; j < d; ++j) out.weight(t, j) = coef(j, t);
    out.bias[t] = coef(d, t);
  }
  return out;
}

Readout fit_logistic(const Matrix& r, const Matrix& y) {
  const std::size_t n = r.rows(), d = r.cols(), k = y.cols();
  for (double v : y.values())
    if (v != 0.0 && v != 1.0) throw std::invalid_argument("downstream_readout: labels must be 0 or 1");
  Readout out{Matrix(k, d), std::vector<double>(k, 0.0)};
  std::vector<char> done(k, 0);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t iter = 0; iter < kLogisticIterations; ++iter) {
    Matrix g = readout_predict(out, r);  // logits, then residuals
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t t = 0; t < k; ++t) {
        const double z = g(i, t);
        const double p = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
        g(i, t) = (p - y(i, t)) * inv_n;
      }
    const Matrix gw = matmul_tn(g, r);  // k x d
    bool all_done = true;
    for (std::size_t t = 0; t < k; ++t) {
      if (done[t]) continue;
      double gb = 0.0;
      for (std::size_t i = 0; i < n; ++i) gb += g(i, t);
      double gmax = std::abs(gb);
      for (std::size_t j = 0; j < d; ++j) gmax = std::max(gmax, std::abs(gw(t, j)));
      if (gmax < kLogisticGradTol) {
        done[t] = 1;
        continue;
      }
      all_done = false;
      for (std::size_t j = 0; j < d; ++j) out.weight(t, j) -= kLogisticLr * gw(t, j);
      out.bias[t] -= kLogisticLr * gb;
    }
    if (all_done) break;
  }
  out.converged = std::all_of(done.begin(), done.end(), [](char c) { return c != 0; });
  return out;
}

}  // namespace

Readout downstream_readout(const Matrix& r_train, const Matrix& y_train, const Matrix& r_test,
                           const Matrix& y_test, TaskType task_type) {
  if (r_train.rows() != y_train.rows() || r_test.rows() != y_test.rows() ||
      r_train.cols() != r_test.cols() || y_train.cols() != y_test.cols())
    throw std::invalid_argument("downstream_readout: shape mismatch");
  if (task_type == TaskType::regression) {
    Readout out = fit_ridge(r_train, y_train);
    out.score = r2_avg(y_test, readout_predict(out, r_test));
    return out;
  }
  Readout out = fit_logistic(r_train, y_train);
  out.score = accuracy_avg(y_test, threshold_logits(readout_predict(out, r_test)));
  return out;
}

}  // namespace ermica
