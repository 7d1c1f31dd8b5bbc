#include "ermica/datagen.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "ermica/io.hpp"
#include "ermica/linalg.hpp"

namespace ermica {

std::string_view to_string(TaskType t) {
  return t == TaskType::regression ? "regression" : "classification";
}

std::string_view to_string(LatentDistribution l) {
  return l == LatentDistribution::binary ? "binary" : "uniform";
}

std::string_view to_string(GeneratorKind g) { return g == GeneratorKind::mlp ? "mlp" : "linear"; }

TaskType parse_task_type(std::string_view s) {
  if (s == "regression") return TaskType::regression;
  if (s == "classification") return TaskType::classification;
  throw std::invalid_argument("unknown task_type: " + std::string(s));
}

LatentDistribution parse_latent_distribution(std::string_view s) {
  if (s == "binary") return LatentDistribution::binary;
  if (s == "uniform") return LatentDistribution::uniform;
  throw std::invalid_argument("unknown latent distribution: " + std::string(s));
}

GeneratorKind parse_generator_kind(std::string_view s) {
  if (s == "mlp") return GeneratorKind::mlp;
  if (s == "linear") return GeneratorKind::linear;
  throw std::invalid_argument("unknown generator kind: " + std::string(s));
}

namespace {

double leaky(double v, double slope) { return v >= 0.0 ? v : slope * v; }
double leaky_inverse(double v, double slope) { return v >= 0.0 ? v : v / slope; }

// Raises singular values below max_sv / target_condition up to that floor:
// W' = W V diag(s'/s) V^T.
Matrix floor_singular_values(const Matrix& w, double target_condition) {
  const SymEig e = sym_eig(matmul_tn(w, w));
  const std::size_t n = w.rows();
  const double smax = std::sqrt(std::max(e.eigenvalues(0, 0), 0.0));
  const double floor = smax / target_condition;
  Matrix scaled = e.eigenvectors;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = std::sqrt(std::max(e.eigenvalues(i, 0), 0.0));
    if (s <= 0.0) throw std::runtime_error("build_generator: exactly singular draw");
    const double f = std::max(s, floor) / s;
    for (std::size_t r = 0; r < n; ++r) scaled(r, i) *= f;
  }
  return matmul(w, matmul_nt(scaled, e.eigenvectors));
}

Matrix sample_layer(RngStream& rng, std::size_t d) {
  const double std = 1.0 / std::sqrt(static_cast<double>(d));
  Matrix w;
  for (int attempt = 0; attempt < kResampleCap; ++attempt) {
    w = rng_normal(rng, d, d, 0.0, std);
    if (condition_number(w) <= kGeneratorMaxCondition) return w;
  }
  // Slightly inside the bound so the recomputed condition number stays <= 25.
  return floor_singular_values(w, kGeneratorMaxCondition * 0.98);
}

}  // namespace

Matrix sample_latents(RngStream& rng, std::size_t n, std::size_t d, LatentDistribution dist) {
  if (n == 0 || d == 0) throw std::invalid_argument("sample_latents: n and d must be positive");
  Matrix z(n, d);
  for (double& v : z.values())
    v = dist == LatentDistribution::binary ? (rng.bernoulli(0.5) ? 1.0 : 0.0) : rng.uniform();
  return z;
}

TaskMatrix sample_task_matrix(RngStream& rng, std::size_t k, std::size_t d, TaskType task_type) {
  if (k == 0 || k > d) throw std::invalid_argument("sample_task_matrix: need 1 <= k <= d");
  const double scale = task_type == TaskType::classification ? 10.0 : 1.0;
  for (int attempt = 0; attempt < kResampleCap; ++attempt) {
    Matrix gamma = rng_normal(rng, k, d, 0.0, scale);
    if (k != d || condition_number(gamma) <= kTaskMaxCondition) return {std::move(gamma), scale};
  }
  throw std::runtime_error("sample_task_matrix: no invertible draw after " +
                           std::to_string(kResampleCap) + " attempts");
}

Generator build_generator(RngStream& rng, std::size_t d, GeneratorKind kind) {
  if (d == 0) throw std::invalid_argument("build_generator: d must be positive");
  Generator g;
  g.layer1_weight = sample_layer(rng, d);
  g.layer2_weight = sample_layer(rng, d);
  g.leaky_slope = kind == GeneratorKind::linear ? 1.0 : kGeneratorSlope;
  return g;
}

Matrix apply_generator(const Generator& g, const Matrix& z) {
  if (z.cols() != g.dim()) throw std::invalid_argument("apply_generator: column count != d");
  Matrix h = matmul_nt(z, g.layer1_weight);
  for (double& v : h.values()) v = leaky(v, g.leaky_slope);
  Matrix x = matmul_nt(h, g.layer2_weight);
  for (double& v : x.values()) v = leaky(v, g.leaky_slope);
  return x;
}

Matrix invert_generator(const Generator& g, const Matrix& x) {
  if (x.cols() != g.dim()) throw std::invalid_argument("invert_generator: column count != d");
  Matrix a = x;
  for (double& v : a.values()) v = leaky_inverse(v, g.leaky_slope);
  Matrix h = LuFactor(g.layer2_weight).solve(a.transposed());  // d x n
  for (double& v : h.values()) v = leaky_inverse(v, g.leaky_slope);
  return LuFactor(g.layer1_weight).solve(h).transposed();
}

Matrix gen_labels(RngStream& rng, const TaskMatrix& tasks, const Matrix& z, TaskType task_type,
                  double noise_std) {
  if (z.cols() != tasks.gamma.cols()) throw std::invalid_argument("gen_labels: column count != d");
  Matrix y = matmul_nt(z, tasks.gamma);
  if (task_type == TaskType::regression) {
    for (double& v : y.values()) v += noise_std * rng.normal();
  } else {
    for (double& v : y.values()) v = rng.bernoulli(1.0 / (1.0 + std::exp(-v))) ? 1.0 : 0.0;
  }
  return y;
}

Dataset make_dataset(const DatasetConfig& config) {
  if (config.k == 0 || config.k > config.d)
    throw std::invalid_argument("make_dataset: need 1 <= k <= d");
  RngStream rng(config.seed);
  Dataset ds;
  ds.config = config;
  ds.tasks = sample_task_matrix(rng, config.k, config.d, config.task_type);
  ds.generator = build_generator(rng, config.d, config.generator);

  const std::size_t n = config.n_train + config.n_val + config.n_test;
  const Matrix z = sample_latents(rng, n, config.d, config.latent);
  const Matrix x = apply_generator(ds.generator, z);
  const Matrix y = gen_labels(rng, ds.tasks, z, config.task_type, config.noise_std);

  auto take = [&](std::size_t begin, std::size_t end) {
    return Split{x.slice_rows(begin, end), y.slice_rows(begin, end), z.slice_rows(begin, end)};
  };
  ds.train = take(0, config.n_train);
  ds.val = take(config.n_train, config.n_train + config.n_val);
  ds.test = take(config.n_train + config.n_val, n);
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& c = ds.config;
  nlohmann::json meta = {{"d", c.d},
                         {"k", c.k},
                         {"task_type", to_string(c.task_type)},
                         {"seed", c.seed},
                         {"noise_std", c.noise_std},
                         {"slope", ds.generator.leaky_slope},
                         {"latent", to_string(c.latent)},
                         {"generator", to_string(c.generator)},
                         {"gamma_scale", ds.tasks.scale},
                         {"n_train", c.n_train},
                         {"n_val", c.n_val},
                         {"n_test", c.n_test}};
  write_json(meta, dir / "meta.json");
  write_csv(ds.tasks.gamma, dir / "gamma.csv");
  write_csv(ds.generator.layer1_weight, dir / "gen_w1.csv");
  write_csv(ds.generator.layer2_weight, dir / "gen_w2.csv");
  for (const auto& [name, split] : {std::pair{"train", &ds.train}, std::pair{"val", &ds.val},
                                    std::pair{"test", &ds.test}}) {
    write_csv(split->x, dir / name / "X.csv");
    write_csv(split->y, dir / name / "Y.csv");
    write_csv(split->z, dir / name / "Z.csv");
  }
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto meta = read_json(dir / "meta.json");
  Dataset ds;
  auto& c = ds.config;
  c.d = meta.at("d").get<std::size_t>();
  c.k = meta.at("k").get<std::size_t>();
  c.task_type = parse_task_type(meta.at("task_type").get<std::string>());
  c.seed = meta.at("seed").get<std::uint64_t>();
  c.noise_std = meta.at("noise_std").get<double>();
  c.latent = parse_latent_distribution(meta.value("latent", std::string("binary")));
  c.generator = parse_generator_kind(meta.value("generator", std::string("mlp")));
  ds.tasks.gamma = read_csv(dir / "gamma.csv");
  ds.tasks.scale = meta.value("gamma_scale", 1.0);
  ds.generator.layer1_weight = read_csv(dir / "gen_w1.csv");
  ds.generator.layer2_weight = read_csv(dir / "gen_w2.csv");
  ds.generator.leaky_slope = meta.at("slope").get<double>();
  for (auto [name, split] :
       {std::pair{"train", &ds.train}, std::pair{"val", &ds.val}, std::pair{"test", &ds.test}}) {
    split->x = read_csv(dir / name / "X.csv");
    split->y = read_csv(dir / name / "Y.csv");
    split->z = read_csv(dir / name / "Z.csv");
  }
  c.n_train = ds.train.x.rows();
  c.n_val = ds.val.x.rows();
  c.n_test = ds.test.x.rows();
  if (ds.tasks.gamma.rows() != c.k || ds.tasks.gamma.cols() != c.d)
    throw std::runtime_error("load_dataset: gamma.csv shape disagrees with meta.json");
  return ds;
}

}  // namespace ermica
