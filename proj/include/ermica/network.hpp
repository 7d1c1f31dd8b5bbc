#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ermica/datagen.hpp"
#include "ermica/matrix.hpp"
#include "ermica/rng.hpp"

namespace ermica {

struct Dense {
  Matrix weight;             // out x in
  std::vector<double> bias;  // out
};

struct BatchNorm {
  std::vector<double> scale;
  std::vector<double> shift;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;
};

enum class Mode { train, eval };

/// Predictor head(rep(x)) where
///   rep = leaky(bn2(fc2(leaky(bn1(fc1(x))))))   with fc1: d -> 100, fc2: 100 -> d
///   head: d -> k.
struct PredictorModel {
  Dense fc1;
  BatchNorm bn1;
  Dense fc2;
  BatchNorm bn2;
  Dense head;
  double leaky_slope = 0.5;
  Mode mode = Mode::train;

  std::size_t input_dim() const { return fc1.weight.cols(); }
  std::size_t hidden_dim() const { return fc1.weight.rows(); }
  std::size_t num_tasks() const { return head.weight.rows(); }
  /// Trainable parameters only (running statistics excluded).
  std::size_t parameter_count() const;
};

inline constexpr std::size_t kHiddenWidth = 100;
inline constexpr double kPredictorSlope = 0.5;

/// Same layout as the trainable parameters of PredictorModel.
struct ModelGrads {
  Matrix fc1_weight;
  std::vector<double> fc1_bias;
  std::vector<double> bn1_scale, bn1_shift;
  Matrix fc2_weight;
  std::vector<double> fc2_bias;
  std::vector<double> bn2_scale, bn2_shift;
  Matrix head_weight;
  std::vector<double> head_bias;
};

struct ParamView {
  std::string name;
  std::span<double> values;
  bool decayed;  // affine weights only
};

struct ConstParamView {
  std::string name;
  std::span<const double> values;
  bool decayed;
};

/// Fixed order: fc1.weight, fc1.bias, bn1.scale, bn1.shift, fc2.weight,
/// fc2.bias, bn2.scale, bn2.shift, head.weight, head.bias.
std::vector<ParamView> parameter_views(PredictorModel& model);
std::vector<ConstParamView> parameter_views(const PredictorModel& model);
std::vector<ParamView> gradient_views(ModelGrads& grads);
std::vector<ConstParamView> gradient_views(const ModelGrads& grads);

PredictorModel init_model(RngStream& rng, std::size_t d, std::size_t k);

struct ForwardResult {
  Matrix representation;  // n x d
  Matrix output;          // n x k
};

/// Intermediates of a train-mode pass, consumed by backward().
struct ForwardCache {
  Matrix input;
  Matrix xhat1, pre1;  // normalised and scaled/shifted hidden layer
  Matrix act1;
  Matrix xhat2, pre2;
  std::vector<double> mean1, var1, inv_std1;
  std::vector<double> mean2, var2, inv_std2;
  Matrix representation;
  Matrix output;
};

/// Train mode: batch statistics, no state change. Requires n >= 2.
ForwardCache forward_train(const PredictorModel& model, const Matrix& x);
/// Eval mode: running statistics; row-wise and batch-size independent.
ForwardResult forward_eval(const PredictorModel& model, const Matrix& x);
/// Dispatches on model.mode; train mode also folds batch statistics into the
/// running estimates.
ForwardResult forward(PredictorModel& model, const Matrix& x);
void update_running_stats(PredictorModel& model, const ForwardCache& cache);

enum class LossKind { mse, bce };
std::string_view to_string(LossKind k);
LossKind parse_loss_kind(std::string_view s);

struct LossResult {
  double value;
  Matrix grad;  // d loss / d output
};

/// Mean over all n*k elements. bce takes logits and throws
/// std::invalid_argument if a label is not 0 or 1.
LossResult loss(const Matrix& output, const Matrix& y, LossKind kind);

ModelGrads backward(const PredictorModel& model, const ForwardCache& cache,
                    const Matrix& grad_output);

struct OptimizerState {
  std::vector<std::vector<double>> buffers;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;

  static OptimizerState for_model(const PredictorModel& model, double lr, double momentum,
                                  double weight_decay);
};

void sgd_step(PredictorModel& model, const ModelGrads& grads, OptimizerState& opt);

struct TrainConfig {
  std::size_t epochs = 1000;
  std::size_t batch_size = 512;
  double base_lr = 0.01;
  std::size_t lr_halve_every = 50;
  LossKind loss = LossKind::mse;
  std::uint64_t seed = 0;
  double momentum = 0.9;
  double weight_decay = 5e-4;

  static TrainConfig defaults_for(TaskType task);
  /// Learning rate for 1-based epoch index.
  double lr_at_epoch(std::size_t epoch) const;
};

struct EpochRecord {
  std::size_t epoch;  // 1-based
  double train_loss;
  double val_loss;
  double lr;
};

struct TrainResult {
  PredictorModel best_model;  // eval mode
  PredictorModel final_model;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
};

/// Throws std::runtime_error naming the epoch when a loss becomes non-finite.
TrainResult train(PredictorModel model, const Dataset& dataset, const TrainConfig& config);

Matrix extract_representation(const PredictorModel& model, const Matrix& x);
/// head(representation)
Matrix apply_head(const PredictorModel& model, const Matrix& representation);

nlohmann::json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);
void save_model(const PredictorModel& model, const TrainConfig& config,
                const std::filesystem::path& path);
PredictorModel load_model(const std::filesystem::path& path, TrainConfig* config = nullptr);

}  // namespace ermica
