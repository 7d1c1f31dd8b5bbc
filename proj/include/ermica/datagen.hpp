#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "ermica/matrix.hpp"
#include "ermica/rng.hpp"

namespace ermica {

enum class TaskType { regression, classification };
enum class LatentDistribution { binary, uniform };
enum class GeneratorKind { mlp, linear };

std::string_view to_string(TaskType t);
std::string_view to_string(LatentDistribution l);
std::string_view to_string(GeneratorKind g);
TaskType parse_task_type(std::string_view s);
LatentDistribution parse_latent_distribution(std::string_view s);
GeneratorKind parse_generator_kind(std::string_view s);

/// Two-layer bias-free leaky-ReLU map X = act(act(Z W1^T) W2^T).
struct Generator {
  Matrix layer1_weight;  // d x d
  Matrix layer2_weight;  // d x d
  double leaky_slope = 0.2;

  std::size_t dim() const { return layer1_weight.rows(); }
};

struct TaskMatrix {
  Matrix gamma;  // k x d
  double scale = 1.0;
};

struct Split {
  Matrix x;  // n x d observations
  Matrix y;  // n x k labels
  Matrix z;  // n x d latents
};

struct DatasetConfig {
  TaskType task_type = TaskType::regression;
  std::size_t d = 16;
  std::size_t k = 16;
  std::uint64_t seed = 0;
  double noise_std = 1.0;
  LatentDistribution latent = LatentDistribution::binary;
  GeneratorKind generator = GeneratorKind::mlp;
  std::size_t n_train = 5000;
  std::size_t n_val = 1250;
  std::size_t n_test = 5000;
};

struct Dataset {
  DatasetConfig config;
  Split train;
  Split val;
  Split test;
  Generator generator;
  TaskMatrix tasks;

  TaskType task_type() const { return config.task_type; }
  std::size_t d() const { return config.d; }
  std::size_t k() const { return config.k; }
};

inline constexpr double kGeneratorMaxCondition = 25.0;
inline constexpr double kTaskMaxCondition = 1e6;
inline constexpr int kResampleCap = 100;
inline constexpr double kGeneratorSlope = 0.2;

Matrix sample_latents(RngStream& rng, std::size_t n, std::size_t d,
                      LatentDistribution dist = LatentDistribution::binary);

/// Entries i.i.d. N(0, scale^2), scale 1 for regression and 10 for
/// classification. Square task matrices are resampled until their condition
/// number is at most 1e6; throws std::runtime_error after 100 attempts.
TaskMatrix sample_task_matrix(RngStream& rng, std::size_t k, std::size_t d, TaskType task_type);

/// Layer weights are N(0, 1/d) (std 1/sqrt(d)) and rejection-sampled to a
/// condition number of at most 25. When rejection keeps failing (large d,
/// where a Gaussian square matrix almost never meets the bound) the last
/// draw has its small singular values lifted to max_sv / 25, keeping its
/// singular vectors.
Generator build_generator(RngStream& rng, std::size_t d, GeneratorKind kind = GeneratorKind::mlp);

Matrix apply_generator(const Generator& g, const Matrix& z);
Matrix invert_generator(const Generator& g, const Matrix& x);

Matrix gen_labels(RngStream& rng, const TaskMatrix& tasks, const Matrix& z, TaskType task_type,
                  double noise_std);

Dataset make_dataset(const DatasetConfig& config);

/// Directory layout: meta.json, gamma.csv, gen_w1.csv, gen_w2.csv and
/// {train,val,test}/{X,Y,Z}.csv.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace ermica
