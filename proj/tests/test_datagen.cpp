#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "ermica/datagen.hpp"
#include "ermica/linalg.hpp"

using namespace ermica;

namespace {

double column_mean(const Matrix& m, std::size_t j) {
  double s = 0;
  for (std::size_t i = 0; i < m.rows(); ++i) s += m(i, j);
  return s / static_cast<double>(m.rows());
}

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

TEST_CASE("latents are independent fair bits") {
  RngStream rng(1);
  const Matrix z = sample_latents(rng, 10000, 4);
  for (double v : z.storage()) CHECK((v == 0.0 || v == 1.0));
  for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(column_mean(z, j) - 0.5) < 0.03);
  const Matrix c = covariance(z);
  CHECK(std::abs(c(0, 1) / std::sqrt(c(0, 0) * c(1, 1))) < 0.05);

  // pairwise and three-way joint frequencies factorise
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = a + 1; b < 4; ++b)
      for (int va = 0; va < 2; ++va)
        for (int vb = 0; vb < 2; ++vb) {
          double joint = 0;
          for (std::size_t i = 0; i < z.rows(); ++i) joint += z(i, a) == va && z(i, b) == vb;
          CHECK(std::abs(joint / 10000.0 - 0.25) < 0.03);
        }
  for (int pattern = 0; pattern < 8; ++pattern) {
    double joint = 0;
    for (std::size_t i = 0; i < z.rows(); ++i)
      joint += z(i, 0) == (pattern & 1) && z(i, 1) == ((pattern >> 1) & 1) && z(i, 2) == ((pattern >> 2) & 1);
    CHECK(std::abs(joint / 10000.0 - 0.125) < 0.03);
  }

  const Matrix u = sample_latents(rng, 1000, 3, LatentDistribution::uniform);
  for (double v : u.storage()) CHECK((v >= 0.0 && v < 1.0));
}

TEST_CASE("task matrices") {
  SUBCASE("regression entries are standard normal") {
    RngStream rng(2);
    double ss = 0, s = 0;
    for (int t = 0; t < 20; ++t) {
      const auto tm = sample_task_matrix(rng, 16, 16, TaskType::regression);
      CHECK(condition_number(tm.gamma) <= kTaskMaxCondition);
      for (double v : tm.gamma.storage()) {
        s += v;
        ss += v * v;
      }
    }
    const double n = 20 * 256, mean = s / n;
    CHECK(std::abs(std::sqrt(ss / n - mean * mean) - 1.0) < 0.1);
  }
  SUBCASE("classification entries have std 10") {
    RngStream rng(3);
    const auto tm = sample_task_matrix(rng, 16, 16, TaskType::classification);
    CHECK(tm.scale == 10.0);
    double ss = 0;
    for (double v : tm.gamma.storage()) ss += v * v;
    CHECK(std::abs(std::sqrt(ss / 256.0) - 10.0) < 1.0);
  }
  SUBCASE("k = 1 row vector has no zeros") {
    RngStream rng(4);
    const auto tm = sample_task_matrix(rng, 1, 9, TaskType::regression);
    CHECK(tm.gamma.rows() == 1);
    CHECK(tm.gamma.cols() == 9);
    for (double v : tm.gamma.storage()) CHECK(v != 0.0);
  }
  SUBCASE("k > d is rejected") {
    RngStream rng(5);
    CHECK_THROWS_AS(sample_task_matrix(rng, 5, 4, TaskType::regression), std::invalid_argument);
  }
}

TEST_CASE("generator construction and inversion") {
  SUBCASE("hand-traced scalar chain") {
    Generator g{Matrix::from_rows({{2.0}}), Matrix::from_rows({{3.0}}), 0.2};
    // -1 -> -2 -> leaky -0.4 -> x3 -1.2 -> leaky -0.24
    const Matrix x = apply_generator(g, Matrix::from_rows({{-1.0}}));
    CHECK(x(0, 0) == doctest::Approx(-0.24).epsilon(1e-15));
    CHECK(invert_generator(g, Matrix::from_rows({{-0.24}}))(0, 0) == doctest::Approx(-1.0).epsilon(1e-14));
    CHECK(apply_generator(g, Matrix::from_rows({{0.5}}))(0, 0) == doctest::Approx(3.0));
  }
  SUBCASE("zero maps to zero; d = 1 weights nonzero") {
    RngStream rng(6);
    const auto g = build_generator(rng, 1);
    CHECK(g.layer1_weight(0, 0) != 0.0);
    CHECK(g.layer2_weight(0, 0) != 0.0);
    const auto g5 = build_generator(rng, 5);
    CHECK(apply_generator(g5, Matrix(3, 5)) == Matrix(3, 5));
  }
  SUBCASE("layer conditioning and round trip across sizes") {
    for (std::size_t d : {2, 8, 16, 24, 50}) {
      RngStream rng(d);
      const auto g = build_generator(rng, d);
      CHECK(g.leaky_slope == kGeneratorSlope);
      CHECK(condition_number(g.layer1_weight) <= kGeneratorMaxCondition * (1 + 1e-9));
      CHECK(condition_number(g.layer2_weight) <= kGeneratorMaxCondition * (1 + 1e-9));
      const Matrix z = rng_normal(rng, 100, d, 0.0, 1.0);
      CHECK(max_abs_diff(invert_generator(g, apply_generator(g, z)), z) < 1e-6);
    }
  }
  SUBCASE("straight-line re-implementation") {
    RngStream rng(7);
    const auto g = build_generator(rng, 4);
    const Matrix z = rng_normal(rng, 10, 4, 0.0, 1.0);
    const Matrix x = apply_generator(g, z);
    for (std::size_t i = 0; i < 10; ++i) {
      double h[4];
      for (std::size_t a = 0; a < 4; ++a) {
        double s = 0;
        for (std::size_t b = 0; b < 4; ++b) s += g.layer1_weight(a, b) * z(i, b);
        h[a] = s >= 0 ? s : 0.2 * s;
      }
      for (std::size_t a = 0; a < 4; ++a) {
        double s = 0;
        for (std::size_t b = 0; b < 4; ++b) s += g.layer2_weight(a, b) * h[b];
        CHECK(x(i, a) == doctest::Approx(s >= 0 ? s : 0.2 * s).epsilon(1e-13));
      }
    }
  }
  SUBCASE("linear kind is two matrix products and two solves") {
    RngStream rng(8);
    const auto g = build_generator(rng, 6, GeneratorKind::linear);
    CHECK(g.leaky_slope == 1.0);
    const Matrix z = rng_normal(rng, 20, 6, 0.0, 1.0);
    const Matrix x = apply_generator(g, z);
    CHECK(max_abs_diff(x, matmul_nt(z, matmul(g.layer2_weight, g.layer1_weight))) < 1e-12);
    const Matrix back =
        solve_linear(g.layer1_weight, solve_linear(g.layer2_weight, x.transposed())).transposed();
    CHECK(max_abs_diff(invert_generator(g, x), back) < 1e-12);
  }
}

TEST_CASE("labels") {
  RngStream rng(9);
  SUBCASE("identity tasks without noise reproduce Z") {
    const Matrix z = sample_latents(rng, 50, 3);
    const TaskMatrix tm{Matrix::identity(3), 1.0};
    CHECK(gen_labels(rng, tm, z, TaskType::regression, 0.0) == z);
  }
  SUBCASE("regression noise has unit variance") {
    const Matrix z = sample_latents(rng, 10000, 4);
    const auto tm = sample_task_matrix(rng, 3, 4, TaskType::regression);
    const Matrix y = gen_labels(rng, tm, z, TaskType::regression, 1.0);
    const Matrix resid = y - matmul_nt(z, tm.gamma);
    const Matrix c = covariance(resid);
    for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(c(j, j) * 10000.0 / 9999.0 - 1.0) < 0.05);
  }
  SUBCASE("zero logits give fair coins") {
    const TaskMatrix tm{Matrix(1, 2), 10.0};
    const Matrix y = gen_labels(rng, tm, Matrix(10000, 2), TaskType::classification, 0.0);
    CHECK(std::abs(column_mean(y, 0) - 0.5) < 0.03);
  }
  SUBCASE("classification marginals follow the sigmoid") {
    const Matrix z = sample_latents(rng, 5000, 6);
    auto tm = sample_task_matrix(rng, 4, 6, TaskType::classification);
    // keep the logits in a range where the marginal is informative
    tm.gamma = 0.05 * tm.gamma;
    const Matrix y = gen_labels(rng, tm, z, TaskType::classification, 0.0);
    const Matrix logits = matmul_nt(z, tm.gamma);
    for (double v : y.storage()) CHECK((v == 0.0 || v == 1.0));
    for (std::size_t j = 0; j < 4; ++j) {
      double p = 0;
      for (std::size_t i = 0; i < 5000; ++i) p += sigmoid(logits(i, j));
      CHECK(std::abs(column_mean(y, j) - p / 5000.0) < 0.03);
    }
  }
}

TEST_CASE("dataset assembly") {
  DatasetConfig c;
  c.d = 16;
  c.k = 16;
  c.seed = 77;
  const Dataset a = make_dataset(c);
  const Dataset b = make_dataset(c);
  CHECK(a.train.x.rows() == 5000);
  CHECK(a.val.x.rows() == 1250);
  CHECK(a.test.x.rows() == 5000);
  CHECK(a.train.y.cols() == 16);
  CHECK(a.train.x == b.train.x);
  CHECK(a.test.y == b.test.y);
  CHECK(a.tasks.gamma == b.tasks.gamma);
  CHECK(max_abs_diff(apply_generator(a.generator, a.test.z), a.test.x) < 1e-6);

  // collisions between train and test rows at the binomial rate
  std::set<std::vector<double>> train_rows;
  for (std::size_t i = 0; i < 5000; ++i) train_rows.insert({a.train.z.row(i).begin(), a.train.z.row(i).end()});
  std::size_t hits = 0;
  for (std::size_t i = 0; i < 5000; ++i) hits += train_rows.count({a.test.z.row(i).begin(), a.test.z.row(i).end()});
  // expected about 5000 * 5000 / 65536 = 381 pairs, fewer distinct-row hits
  CHECK(hits < 500);

  c.task_type = TaskType::classification;
  c.k = 8;
  const Dataset cls = make_dataset(c);
  for (double v : cls.train.y.storage()) CHECK((v == 0.0 || v == 1.0));

  c.k = 20;
  CHECK_THROWS(make_dataset(c));
}

TEST_CASE("dataset save and load") {
  DatasetConfig c;
  c.d = 3;
  c.k = 2;
  c.seed = 5;
  c.n_train = 30;
  c.n_val = 10;
  c.n_test = 20;
  const Dataset a = make_dataset(c);
  const auto dir = std::filesystem::temp_directory_path() / "ermica_test_dataset";
  std::filesystem::remove_all(dir);
  save_dataset(a, dir);
  for (const char* f : {"meta.json", "gamma.csv", "gen_w1.csv", "gen_w2.csv", "train/X.csv", "val/Y.csv", "test/Z.csv"})
    CHECK(std::filesystem::exists(dir / f));
  const Dataset b = load_dataset(dir);
  CHECK(b.train.x == a.train.x);
  CHECK(b.test.y == a.test.y);
  CHECK(b.val.z == a.val.z);
  CHECK(b.tasks.gamma == a.tasks.gamma);
  CHECK(b.generator.layer2_weight == a.generator.layer2_weight);
  CHECK(b.config.seed == 5);
  CHECK(b.task_type() == TaskType::regression);
  std::filesystem::remove_all(dir);
}

TEST_CASE("enum parsing") {
  CHECK(parse_task_type("classification") == TaskType::classification);
  CHECK(parse_generator_kind("linear") == GeneratorKind::linear);
  CHECK(parse_latent_distribution("uniform") == LatentDistribution::uniform);
  CHECK_THROWS_AS(parse_task_type("ranking"), std::invalid_argument);
}
