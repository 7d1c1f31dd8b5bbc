#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ermica/datagen.hpp"
#include "ermica/linalg.hpp"
#include "ermica/metrics.hpp"
#include "ermica/rng.hpp"

using namespace ermica;

namespace {

// Oracle: enumerate every permutation, keep the first (lexicographically
// smallest) strict maximum.
std::vector<std::size_t> brute_force(const Matrix& score) {
  const std::size_t d = score.rows();
  std::vector<std::size_t> perm(d), best;
  std::iota(perm.begin(), perm.end(), 0);
  double best_total = -INFINITY;
  do {
    double s = 0;
    for (std::size_t i = 0; i < d; ++i) s += score(i, perm[i]);
    if (s > best_total) {
      best_total = s;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

TEST_CASE("correlation matrix") {
  RngStream rng(1);
  Matrix z = rng_normal(rng, 200, 3, 0.0, 1.0);
  // exactly uncorrelated columns, so rho(z, z) is the identity
  z = matmul(subtract_row_offset(z, column_means(z)), inverse_sqrt_sym(covariance(z)));
  CHECK(max_abs_diff(corr_matrix(z, z), Matrix::identity(3)) < 1e-12);
  CHECK(max_abs_diff(corr_matrix(z, -1.0 * z), -1.0 * Matrix::identity(3)) < 1e-12);
  Matrix affine(200, 3);
  for (std::size_t i = 0; i < 200; ++i) {
    affine(i, 0) = 3.0 * z(i, 2) + 7.0;
    affine(i, 1) = z(i, 0);
    affine(i, 2) = z(i, 1);
  }
  CHECK(corr_matrix(z, affine)(2, 0) == doctest::Approx(1.0).epsilon(1e-12));

  Matrix degenerate = z;
  for (std::size_t i = 0; i < 200; ++i) degenerate(i, 1) = 4.0;
  std::vector<std::string> warnings;
  const Matrix rho = corr_matrix(z, degenerate, &warnings);
  for (std::size_t i = 0; i < 3; ++i) CHECK(rho(i, 1) == 0.0);
  CHECK(warnings.size() == 1);
  CHECK(std::isfinite(mcc(z, degenerate)));
}

TEST_CASE("hungarian assignment") {
  const auto a = hungarian_max(Matrix::from_rows({{0.9, 0.2}, {0.1, 0.8}}));
  CHECK(a.columns == std::vector<std::size_t>{0, 1});
  CHECK(a.total == doctest::Approx(1.7));

  const auto tie = hungarian_max(Matrix(4, 4, 0.5));
  CHECK(tie.columns == std::vector<std::size_t>{0, 1, 2, 3});

  // ties between two optimal permutations resolve to the smaller one
  const auto two = hungarian_max(Matrix::from_rows({{0, 1, 1}, {1, 0, 1}, {1, 1, 0}}));
  CHECK(two.columns == std::vector<std::size_t>{1, 2, 0});
  CHECK(brute_force(Matrix::from_rows({{0, 1, 1}, {1, 0, 1}, {1, 1, 0}})) == two.columns);

  RngStream rng(2);
  for (std::size_t d = 1; d <= 7; ++d)
    for (int t = 0; t < 200; ++t) {
      Matrix s(d, d);
      for (double& v : s.values()) v = rng.uniform();
      CHECK(hungarian_max(s).columns == brute_force(s));
    }

  // integer-valued matrices have many ties
  for (int t = 0; t < 200; ++t) {
    Matrix s(5, 5);
    for (double& v : s.values()) v = static_cast<double>(rng.uniform_index(3));
    CHECK(hungarian_max(s).columns == brute_force(s));
  }

  // negative entries
  Matrix neg(4, 4);
  for (double& v : neg.values()) v = -rng.uniform();
  CHECK(hungarian_max(neg).columns == brute_force(neg));
}

TEST_CASE("mcc") {
  RngStream rng(3);
  const Matrix z = sample_latents(rng, 1000, 5);

  SUBCASE("signed scaled permutation plus offset scores 1") {
    const std::vector<std::size_t> perm{3, 1, 4, 0, 2};
    const double scale[5] = {2.0, -0.5, 3.0, -1.0, 7.0};
    Matrix zhat(1000, 5);
    for (std::size_t i = 0; i < 1000; ++i)
      for (std::size_t j = 0; j < 5; ++j) zhat(i, j) = scale[j] * z(i, perm[j]) + 1.5 * j;
    CHECK(std::abs(mcc(z, zhat) - 1.0) < 1e-10);
  }

  SUBCASE("invariance under reparameterisation") {
    const Matrix zhat = z + 0.7 * rng_normal(rng, 1000, 5, 0.0, 1.0);
    Matrix moved(1000, 5);
    const std::vector<std::size_t> perm{1, 2, 0, 4, 3};
    for (std::size_t i = 0; i < 1000; ++i)
      for (std::size_t j = 0; j < 5; ++j) moved(i, j) = -3.0 * zhat(i, perm[j]) + 2.0;
    CHECK(std::abs(mcc(z, zhat) - mcc(z, moved)) < 1e-10);
    CHECK(mcc(z, zhat) <= 1.0);
  }

  SUBCASE("two-by-two closed form") {
    // construct components with |rho| close to the hand example via exact
    // evaluation of mcc on the correlation matrix path
    const Matrix rho = Matrix::from_rows({{0.9, 0.2}, {0.1, 0.8}});
    const auto a = hungarian_max(rho);
    CHECK(a.total / 2.0 == doctest::Approx(0.85));
  }

  SUBCASE("independent noise scores near zero") {
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
      RngStream r(1000 + t);
      const Matrix a = sample_latents(r, 5000, 8);
      const Matrix b = rng_normal(r, 5000, 8, 0.0, 1.0);
      worst = std::max(worst, mcc(a, b));
    }
    CHECK(worst < 0.1);
  }

  SUBCASE("fewer recovered components than latents") {
    const Matrix part = z.column_at(0);
    CHECK(mcc(z, part) == doctest::Approx(0.2).epsilon(1e-10));
  }
}

TEST_CASE("r2 and accuracy") {
  const Matrix y = Matrix::column({1, 2, 3});
  CHECK(r2_avg(y, y) == 1.0);
  CHECK(r2_avg(y, Matrix::column({2, 2, 2})) == 0.0);
  CHECK(r2_avg(y, Matrix::column({1, 2, 4})) == doctest::Approx(0.5));
  CHECK_THROWS(r2_avg(Matrix::column({1, 1, 1}), y));

  // raw R2 decreases when independent noise is added to the prediction
  RngStream rng(4);
  int decreased = 0;
  for (int t = 0; t < 50; ++t) {
    const Matrix truth = rng_normal(rng, 300, 2, 0.0, 1.0);
    const Matrix pred = truth + 0.5 * rng_normal(rng, 300, 2, 0.0, 1.0);
    const Matrix noisier = pred + 0.5 * rng_normal(rng, 300, 2, 0.0, 1.0);
    decreased += r2_avg(truth, noisier) < r2_avg(truth, pred);
  }
  CHECK(decreased >= 48);

  const Matrix b = Matrix::from_rows({{1, 0}, {0, 1}, {1, 1}, {0, 0}});
  CHECK(accuracy_avg(b, b) == 1.0);
  Matrix flipped = b;
  for (double& v : flipped.values()) v = 1.0 - v;
  CHECK(accuracy_avg(b, flipped) == 0.0);
  CHECK(accuracy_avg(Matrix::column({1, 0, 1, 1}), Matrix::column({1, 0, 1, 0})) == 0.75);
  CHECK_THROWS(accuracy_avg(b, 0.5 * b));
  CHECK(threshold_logits(Matrix::from_rows({{-0.1, 0.0, 3.0}})) == Matrix::from_rows({{0, 1, 1}}));
}

TEST_CASE("downstream readouts") {
  RngStream rng(5);
  SUBCASE("exactly linear labels") {
    const Matrix r = rng_normal(rng, 400, 4, 0.0, 1.0);
    const Matrix w = rng_normal(rng, 2, 4, 0.0, 1.0);
    const Matrix y = add_row_bias(matmul_nt(r, w), std::vector<double>{1.0, -2.0});
    const auto ro = downstream_readout(r.slice_rows(0, 300), y.slice_rows(0, 300), r.slice_rows(300, 400),
                                       y.slice_rows(300, 400), TaskType::regression);
    CHECK(ro.score == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(max_abs_diff(ro.weight, w) < 1e-5);
  }
  SUBCASE("separable classification") {
    Matrix r = rng_normal(rng, 400, 2, 0.0, 1.0);
    Matrix y(400, 1);
    for (std::size_t i = 0; i < 400; ++i) {
      r(i, 0) += r(i, 0) >= 0 ? 0.5 : -0.5;  // margin around the boundary
      y(i, 0) = r(i, 0) > 0 ? 1.0 : 0.0;
    }
    const auto ro = downstream_readout(r.slice_rows(0, 300), y.slice_rows(0, 300), r.slice_rows(300, 400),
                                       y.slice_rows(300, 400), TaskType::classification);
    CHECK(ro.score == 1.0);
  }
  SUBCASE("identity representation reaches the Bayes R2") {
    DatasetConfig c;
    c.d = 8;
    c.k = 4;
    c.seed = 12;
    const Dataset ds = make_dataset(c);
    const auto ro = downstream_readout(ds.train.z, ds.train.y, ds.test.z, ds.test.y, TaskType::regression);
    double bayes = 0.0;
    for (std::size_t j = 0; j < 4; ++j) {
      double signal = 0.0;
      for (std::size_t i = 0; i < 8; ++i) signal += 0.25 * ds.tasks.gamma(j, i) * ds.tasks.gamma(j, i);
      bayes += signal / (signal + 1.0) / 4.0;
    }
    CHECK(std::abs(ro.score - bayes) < 0.03);
  }
  SUBCASE("predict applies the fitted map") {
    const Readout ro{Matrix::from_rows({{2.0, 0.0}}), {1.0}, 0.0, true};
    CHECK(readout_predict(ro, Matrix::from_rows({{3.0, 5.0}})) == Matrix::from_rows({{7.0}}));
  }
}
