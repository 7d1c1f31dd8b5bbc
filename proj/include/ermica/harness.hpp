#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ermica/datagen.hpp"
#include "ermica/metrics.hpp"
#include "ermica/network.hpp"
#include "ermica/transform.hpp"

namespace ermica {

/// Partial overrides applied on top of TrainConfig::defaults_for(task).
struct TrainOverrides {
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> base_lr;
  std::optional<std::size_t> lr_halve_every;
  std::optional<double> momentum;
  std::optional<double> weight_decay;

  TrainConfig apply(TaskType task) const;
};

struct CellSettings {
  GeneratorKind generator = GeneratorKind::mlp;
  LatentDistribution latent = LatentDistribution::binary;
  double noise_std = 1.0;
  std::size_t n_train = 5000;
  std::size_t n_val = 1250;
  std::size_t n_test = 5000;
  TrainOverrides train;
  std::size_t ica_max_iter = 30000;
  double ica_tol = 1e-4;
  bool record_wall_time = false;
};

/// Seed for one grid cell; adding cells never changes another cell's seed.
std::uint64_t cell_seed(std::uint64_t seed, std::size_t d, std::size_t k, TaskType task);

/// Stream tags derived from the cell seed.
enum class CellStream : std::uint64_t { dataset = 1, init = 2, shuffle = 3, ica = 4 };

struct CellArtifacts {
  Dataset dataset;
  TrainResult training;
  LinearTransform pca;
  LinearTransform ica;
};

/// ERM, ERM-PCA and ERM-ICA on one trained model, in that order.
std::vector<EvalResult> run_cell(TaskType task, std::size_t d, std::size_t k, std::uint64_t seed,
                                 const CellSettings& settings, CellArtifacts* artifacts = nullptr);

/// Label score and MCC of an arbitrary representation transform for an
/// already trained model (the `eval` subcommand).
struct MethodScore {
  double label_score;
  double mcc;
};
MethodScore evaluate_method(const Dataset& ds, const PredictorModel& model,
                            const LinearTransform* transform);

struct ExperimentConfig {
  TaskType task_type = TaskType::regression;
  std::size_t d = 16;
  std::vector<std::size_t> k_list;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  CellSettings settings;
  std::filesystem::path output_dir = "results";
  std::size_t workers = 1;
};

/// Unknown keys are rejected with std::invalid_argument.
ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
nlohmann::json experiment_config_to_json(const ExperimentConfig& c);

struct Aggregate {
  Method method;
  TaskType task_type;
  std::size_t d;
  std::size_t k;
  std::size_t n_seeds;
  double label_mean, label_std;
  double mcc_mean, mcc_std;
};

struct ResultsTable {
  std::vector<EvalResult> rows;
  std::vector<std::string> failures;

  /// Grouped by (task_type, d, k, method) in first-appearance order; std is
  /// the sample standard deviation (0 for a single seed).
  std::vector<Aggregate> aggregates() const;
};

using ProgressFn = std::function<void(const std::string&)>;

/// Runs every (k, seed) cell. Finished cells are persisted under
/// <output_dir>/cells with a completion marker and are skipped on rerun.
ResultsTable run_sweep(const ExperimentConfig& config, const ProgressFn& progress = {});

nlohmann::json eval_result_to_json(const EvalResult& r, bool with_wall_time);
EvalResult eval_result_from_json(const nlohmann::json& j);

}  // namespace ermica
