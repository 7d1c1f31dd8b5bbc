#include "ermica/network.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ermica/io.hpp"

namespace ermica {

namespace {

double leaky(double v, double slope) { return v >= 0.0 ? v : slope * v; }

Dense init_dense(RngStream& rng, std::size_t in, std::size_t out) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Dense layer{Matrix(out, in), std::vector<double>(out, 0.0)};
  for (double& w : layer.weight.values()) w = bound * (2.0 * rng.uniform() - 1.0);
  return layer;
}

BatchNorm init_bn(std::size_t width) {
  return BatchNorm{std::vector<double>(width, 1.0), std::vector<double>(width, 0.0),
                   std::vector<double>(width, 0.0), std::vector<double>(width, 1.0)};
}

Matrix affine(const Dense& layer, const Matrix& x) {
  return add_row_bias(matmul_nt(x, layer.weight), layer.bias);
}

struct BnStats {
  std::vector<double> mean, var, inv_std;
};

BnStats batch_stats(const Matrix& h, double epsilon) {
  const std::size_t n = h.rows(), c = h.cols();
  BnStats s{std::vector<double>(c, 0.0), std::vector<double>(c, 0.0), std::vector<double>(c)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) s.mean[j] += h(i, j);
  for (double& m : s.mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const double dv = h(i, j) - s.mean[j];
      s.var[j] += dv * dv;
    }
  for (std::size_t j = 0; j < c; ++j) {
    s.var[j] /= static_cast<double>(n);
    s.inv_std[j] = 1.0 / std::sqrt(s.var[j] + epsilon);
  }
  return s;
}

// Returns (xhat, scale * xhat + shift).
std::pair<Matrix, Matrix> normalise(const Matrix& h, const BatchNorm& bn,
                                    std::span<const double> mean,
                                    std::span<const double> inv_std) {
  Matrix xhat(h.rows(), h.cols()), y(h.rows(), h.cols());
  for (std::size_t i = 0; i < h.rows(); ++i)
    for (std::size_t j = 0; j < h.cols(); ++j) {
      const double v = (h(i, j) - mean[j]) * inv_std[j];
      xhat(i, j) = v;
      y(i, j) = bn.scale[j] * v + bn.shift[j];
    }
  return {std::move(xhat), std::move(y)};
}

Matrix leaky_all(const Matrix& m, double slope) {
  Matrix out = m;
  for (double& v : out.values()) v = leaky(v, slope);
  return out;
}

// Gradient through leaky(pre) given upstream d/d(leaky(pre)); in place.
void leaky_backward(Matrix& grad, const Matrix& pre, double slope) {
  auto g = grad.values();
  auto p = pre.values();
  for (std::size_t i = 0; i < g.size(); ++i)
    if (p[i] < 0.0) g[i] *= slope;
}

// Backprop through y = scale * xhat + shift with batch statistics. Writes
// scale/shift grads and returns d/d(input).
Matrix bn_backward(const Matrix& dy, const Matrix& xhat, const BatchNorm& bn,
                   std::span<const double> inv_std, std::vector<double>& dscale,
                   std::vector<double>& dshift) {
  const std::size_t n = dy.rows(), c = dy.cols();
  dscale.assign(c, 0.0);
  dshift.assign(c, 0.0);
  std::vector<double> sum_dxhat(c, 0.0), sum_dxhat_xhat(c, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const double g = dy(i, j);
      dscale[j] += g * xhat(i, j);
      dshift[j] += g;
      const double dxh = g * bn.scale[j];
      sum_dxhat[j] += dxh;
      sum_dxhat_xhat[j] += dxh * xhat(i, j);
    }
  const double nn = static_cast<double>(n);
  Matrix dx(n, c);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const double dxh = dy(i, j) * bn.scale[j];
      dx(i, j) = inv_std[j] / nn * (nn * dxh - sum_dxhat[j] - xhat(i, j) * sum_dxhat_xhat[j]);
    }
  return dx;
}

std::vector<double> column_sums(const Matrix& m) {
  std::vector<double> s(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) s[j] += m(i, j);
  return s;
}

void fold_running(BatchNorm& bn, std::span<const double> mean, std::span<const double> var,
                  std::size_t n) {
  const double unbias = n > 1 ? static_cast<double>(n) / static_cast<double>(n - 1) : 1.0;
  for (std::size_t j = 0; j < mean.size(); ++j) {
    bn.running_mean[j] = (1.0 - bn.momentum) * bn.running_mean[j] + bn.momentum * mean[j];
    bn.running_var[j] = (1.0 - bn.momentum) * bn.running_var[j] + bn.momentum * var[j] * unbias;
  }
}

nlohmann::json dense_to_json(const Dense& d) {
  return {{"weight", matrix_to_json(d.weight)}, {"bias", d.bias}};
}

Dense dense_from_json(const nlohmann::json& j) {
  Dense d{matrix_from_json(j.at("weight")), j.at("bias").get<std::vector<double>>()};
  if (d.bias.size() != d.weight.rows()) throw std::runtime_error("model.json: bias size mismatch");
  return d;
}

nlohmann::json bn_to_json(const BatchNorm& b) {
  return {{"scale", b.scale},         {"shift", b.shift},       {"running_mean", b.running_mean},
          {"running_var", b.running_var}, {"momentum", b.momentum}, {"epsilon", b.epsilon}};
}

BatchNorm bn_from_json(const nlohmann::json& j) {
  BatchNorm b{j.at("scale").get<std::vector<double>>(), j.at("shift").get<std::vector<double>>(),
              j.at("running_mean").get<std::vector<double>>(),
              j.at("running_var").get<std::vector<double>>(), j.at("momentum").get<double>(),
              j.at("epsilon").get<double>()};
  for (double v : b.running_var)
    if (!(v > 0.0)) throw std::runtime_error("model.json: running_var must be positive");
  return b;
}

}  // namespace

std::size_t PredictorModel::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : parameter_views(*this)) total += p.values.size();
  return total;
}

std::vector<ParamView> parameter_views(PredictorModel& m) {
  return {{"fc1.weight", m.fc1.weight.values(), true}, {"fc1.bias", m.fc1.bias, false},
          {"bn1.scale", m.bn1.scale, false},           {"bn1.shift", m.bn1.shift, false},
          {"fc2.weight", m.fc2.weight.values(), true}, {"fc2.bias", m.fc2.bias, false},
          {"bn2.scale", m.bn2.scale, false},           {"bn2.shift", m.bn2.shift, false},
          {"head.weight", m.head.weight.values(), true}, {"head.bias", m.head.bias, false}};
}

std::vector<ConstParamView> parameter_views(const PredictorModel& m) {
  return {{"fc1.weight", m.fc1.weight.values(), true}, {"fc1.bias", m.fc1.bias, false},
          {"bn1.scale", m.bn1.scale, false},           {"bn1.shift", m.bn1.shift, false},
          {"fc2.weight", m.fc2.weight.values(), true}, {"fc2.bias", m.fc2.bias, false},
          {"bn2.scale", m.bn2.scale, false},           {"bn2.shift", m.bn2.shift, false},
          {"head.weight", m.head.weight.values(), true}, {"head.bias", m.head.bias, false}};
}

std::vector<ParamView> gradient_views(ModelGrads& g) {
  return {{"fc1.weight", g.fc1_weight.values(), true}, {"fc1.bias", g.fc1_bias, false},
          {"bn1.scale", g.bn1_scale, false},           {"bn1.shift", g.bn1_shift, false},
          {"fc2.weight", g.fc2_weight.values(), true}, {"fc2.bias", g.fc2_bias, false},
          {"bn2.scale", g.bn2_scale, false},           {"bn2.shift", g.bn2_shift, false},
          {"head.weight", g.head_weight.values(), true}, {"head.bias", g.head_bias, false}};
}

std::vector<ConstParamView> gradient_views(const ModelGrads& g) {
  return {{"fc1.weight", g.fc1_weight.values(), true}, {"fc1.bias", g.fc1_bias, false},
          {"bn1.scale", g.bn1_scale, false},           {"bn1.shift", g.bn1_shift, false},
          {"fc2.weight", g.fc2_weight.values(), true}, {"fc2.bias", g.fc2_bias, false},
          {"bn2.scale", g.bn2_scale, false},           {"bn2.shift", g.bn2_shift, false},
          {"head.weight", g.head_weight.values(), true}, {"head.bias", g.head_bias, false}};
}

PredictorModel init_model(RngStream& rng, std::size_t d, std::size_t k) {
  if (d == 0 || k == 0) throw std::invalid_argument("init_model: d and k must be positive");
  PredictorModel m;
  m.fc1 = init_dense(rng, d, kHiddenWidth);
  m.bn1 = init_bn(kHiddenWidth);
  m.fc2 = init_dense(rng, kHiddenWidth, d);
  m.bn2 = init_bn(d);
  m.head = init_dense(rng, d, k);
  m.leaky_slope = kPredictorSlope;
  return m;
}

ForwardCache forward_train(const PredictorModel& m, const Matrix& x) {
  if (x.rows() < 2) throw std::invalid_argument("forward: train mode needs at least 2 rows");
  if (x.cols() != m.input_dim()) throw std::invalid_argument("forward: column count != d");
  ForwardCache c;
  c.input = x;

  const Matrix h1 = affine(m.fc1, x);
  auto s1 = batch_stats(h1, m.bn1.epsilon);
  std::tie(c.xhat1, c.pre1) = normalise(h1, m.bn1, s1.mean, s1.inv_std);
  c.act1 = leaky_all(c.pre1, m.leaky_slope);

  const Matrix h2 = affine(m.fc2, c.act1);
  auto s2 = batch_stats(h2, m.bn2.epsilon);
  std::tie(c.xhat2, c.pre2) = normalise(h2, m.bn2, s2.mean, s2.inv_std);
  c.representation = leaky_all(c.pre2, m.leaky_slope);
  c.output = affine(m.head, c.representation);

  c.mean1 = std::move(s1.mean);
  c.var1 = std::move(s1.var);
  c.inv_std1 = std::move(s1.inv_std);
  c.mean2 = std::move(s2.mean);
  c.var2 = std::move(s2.var);
  c.inv_std2 = std::move(s2.inv_std);
  return c;
}

ForwardResult forward_eval(const PredictorModel& m, const Matrix& x) {
  if (x.cols() != m.input_dim()) throw std::invalid_argument("forward: column count != d");
  auto running_inv_std = [](const BatchNorm& bn) {
    std::vector<double> s(bn.running_var.size());
    for (std::size_t j = 0; j < s.size(); ++j) s[j] = 1.0 / std::sqrt(bn.running_var[j] + bn.epsilon);
    return s;
  };
  const auto inv1 = running_inv_std(m.bn1);
  const auto inv2 = running_inv_std(m.bn2);
  const Matrix a1 =
      leaky_all(normalise(affine(m.fc1, x), m.bn1, m.bn1.running_mean, inv1).second, m.leaky_slope);
  Matrix rep = leaky_all(normalise(affine(m.fc2, a1), m.bn2, m.bn2.running_mean, inv2).second,
                         m.leaky_slope);
  Matrix out = affine(m.head, rep);
  return {std::move(rep), std::move(out)};
}

void update_running_stats(PredictorModel& m, const ForwardCache& c) {
  fold_running(m.bn1, c.mean1, c.var1, c.input.rows());
  fold_running(m.bn2, c.mean2, c.var2, c.input.rows());
}

ForwardResult forward(PredictorModel& m, const Matrix& x) {
  if (m.mode == Mode::eval) return forward_eval(m, x);
  ForwardCache c = forward_train(m, x);
  update_running_stats(m, c);
  return {std::move(c.representation), std::move(c.output)};
}

std::string_view to_string(LossKind k) { return k == LossKind::mse ? "mse" : "bce"; }

LossKind parse_loss_kind(std::string_view s) {
  if (s == "mse") return LossKind::mse;
  if (s == "bce") return LossKind::bce;
  throw std::invalid_argument("unknown loss: " + std::string(s));
}

LossResult loss(const Matrix& output, const Matrix& y, LossKind kind) {
  if (output.rows() != y.rows() || output.cols() != y.cols())
    throw std::invalid_argument("loss: shape mismatch");
  const double count = static_cast<double>(output.size());
  LossResult r{0.0, Matrix(output.rows(), output.cols())};
  const auto o = output.values();
  const auto t = y.values();
  auto g = r.grad.values();
  for (std::size_t i = 0; i < o.size(); ++i) {
    if (kind == LossKind::mse) {
      const double diff = o[i] - t[i];
      r.value += diff * diff;
      g[i] = 2.0 * diff / count;
    } else {
      if (t[i] != 0.0 && t[i] != 1.0)
        throw std::invalid_argument("loss: bce labels must be 0 or 1");
      const double z = o[i];
      r.value += std::max(z, 0.0) - z * t[i] + std::log1p(std::exp(-std::abs(z)));
      const double p = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      g[i] = (p - t[i]) / count;
    }
  }
  r.value /= count;
  return r;
}

ModelGrads backward(const PredictorModel& m, const ForwardCache& c, const Matrix& grad_output) {
  if (grad_output.rows() != c.output.rows() || grad_output.cols() != c.output.cols())
    throw std::invalid_argument("backward: gradient shape mismatch");
  ModelGrads g;
  g.head_weight = matmul_tn(grad_output, c.representation);
  g.head_bias = column_sums(grad_output);

  Matrix d = matmul(grad_output, m.head.weight);  // d/d representation
  leaky_backward(d, c.pre2, m.leaky_slope);
  d = bn_backward(d, c.xhat2, m.bn2, c.inv_std2, g.bn2_scale, g.bn2_shift);
  g.fc2_weight = matmul_tn(d, c.act1);
  g.fc2_bias = column_sums(d);

  d = matmul(d, m.fc2.weight);  // d/d act1
  leaky_backward(d, c.pre1, m.leaky_slope);
  d = bn_backward(d, c.xhat1, m.bn1, c.inv_std1, g.bn1_scale, g.bn1_shift);
  g.fc1_weight = matmul_tn(d, c.input);
  g.fc1_bias = column_sums(d);
  return g;
}

OptimizerState OptimizerState::for_model(const PredictorModel& model, double lr, double momentum,
                                         double weight_decay) {
  OptimizerState s;
  for (const auto& p : parameter_views(model)) s.buffers.emplace_back(p.values.size(), 0.0);
  s.lr = lr;
  s.momentum = momentum;
  s.weight_decay = weight_decay;
  return s;
}

void sgd_step(PredictorModel& model, const ModelGrads& grads, OptimizerState& opt) {
  auto params = parameter_views(model);
  const auto gviews = gradient_views(grads);
  if (opt.buffers.size() != params.size()) throw std::invalid_argument("sgd_step: optimizer/model mismatch");
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto theta = params[p].values;
    const auto grad = gviews[p].values;
    auto& buf = opt.buffers[p];
    if (grad.size() != theta.size() || buf.size() != theta.size())
      throw std::invalid_argument("sgd_step: shape mismatch in " + params[p].name);
    const double wd = params[p].decayed ? opt.weight_decay : 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = grad[i] + wd * theta[i];
      buf[i] = opt.momentum * buf[i] + g;
      theta[i] -= opt.lr * buf[i];
    }
  }
}

TrainConfig TrainConfig::defaults_for(TaskType task) {
  TrainConfig c;
  if (task == TaskType::regression) {
    c.epochs = 1000;
    c.base_lr = 0.01;
    c.loss = LossKind::mse;
  } else {
    c.epochs = 200;
    c.base_lr = 0.05;
    c.loss = LossKind::bce;
  }
  return c;
}

double TrainConfig::lr_at_epoch(std::size_t epoch) const {
  const std::size_t halvings = lr_halve_every ? (epoch - 1) / lr_halve_every : 0;
  return std::ldexp(base_lr, -static_cast<int>(halvings));
}

TrainResult train(PredictorModel model, const Dataset& ds, const TrainConfig& config) {
  const Matrix& x = ds.train.x;
  const Matrix& y = ds.train.y;
  const std::size_t n = x.rows();
  if (n < 2 || ds.val.x.rows() == 0) throw std::invalid_argument("train: empty train or val split");
  if (config.batch_size < 2) throw std::invalid_argument("train: batch_size must be >= 2");

  RngStream rng(config.seed);
  OptimizerState opt =
      OptimizerState::for_model(model, config.base_lr, config.momentum, config.weight_decay);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  bool have_best = false;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    model.mode = Mode::train;
    opt.lr = config.lr_at_epoch(epoch);
    shuffle(rng, order);

    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < n;) {
      std::size_t end = std::min(n, begin + config.batch_size);
      // a trailing single row cannot be batch-normalised; fold it in
      if (n - end == 1) end = n;
      const std::span<const std::size_t> idx(order.data() + begin, end - begin);
      const Matrix xb = x.select_rows(idx);
      const Matrix yb = y.select_rows(idx);

      const ForwardCache cache = forward_train(model, xb);
      const LossResult l = loss(cache.output, yb, config.loss);
      if (!std::isfinite(l.value))
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch));
      const ModelGrads grads = backward(model, cache, l.grad);
      update_running_stats(model, cache);
      sgd_step(model, grads, opt);
      epoch_loss += l.value * static_cast<double>(end - begin);
      begin = end;
    }
    epoch_loss /= static_cast<double>(n);

    model.mode = Mode::eval;
    const double val_loss = loss(forward_eval(model, ds.val.x).output, ds.val.y, config.loss).value;
    if (!std::isfinite(val_loss))
      throw std::runtime_error("train: non-finite validation loss at epoch " + std::to_string(epoch));
    result.history.push_back({epoch, epoch_loss, val_loss, opt.lr});
    if (!have_best || val_loss < result.best_val_loss) {
      result.best_model = model;
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
      have_best = true;
    }
  }
  if (!have_best) {
    model.mode = Mode::eval;
    result.best_model = model;
    result.best_val_loss = loss(forward_eval(model, ds.val.x).output, ds.val.y, config.loss).value;
  }
  model.mode = Mode::eval;
  result.final_model = std::move(model);
  result.best_model.mode = Mode::eval;
  return result;
}

Matrix extract_representation(const PredictorModel& model, const Matrix& x) {
  return forward_eval(model, x).representation;
}

Matrix apply_head(const PredictorModel& model, const Matrix& representation) {
  return affine(model.head, representation);
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},       {"batch_size", c.batch_size},
          {"base_lr", c.base_lr},     {"lr_halve_every", c.lr_halve_every},
          {"loss", to_string(c.loss)}, {"seed", c.seed},
          {"momentum", c.momentum},   {"weight_decay", c.weight_decay}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& key = it.key();
    if (key == "epochs") c.epochs = it->get<std::size_t>();
    else if (key == "batch_size") c.batch_size = it->get<std::size_t>();
    else if (key == "base_lr") c.base_lr = it->get<double>();
    else if (key == "lr_halve_every") c.lr_halve_every = it->get<std::size_t>();
    else if (key == "loss") c.loss = parse_loss_kind(it->get<std::string>());
    else if (key == "seed") c.seed = it->get<std::uint64_t>();
    else if (key == "momentum") c.momentum = it->get<double>();
    else if (key == "weight_decay") c.weight_decay = it->get<double>();
    else throw std::invalid_argument("train config: unknown key '" + key + "'");
  }
  return c;
}

void save_model(const PredictorModel& m, const TrainConfig& config,
                const std::filesystem::path& path) {
  nlohmann::json j = {{"input_dim", m.input_dim()},
                      {"hidden_dim", m.hidden_dim()},
                      {"num_tasks", m.num_tasks()},
                      {"leaky_slope", m.leaky_slope},
                      {"fc1", dense_to_json(m.fc1)},
                      {"bn1", bn_to_json(m.bn1)},
                      {"fc2", dense_to_json(m.fc2)},
                      {"bn2", bn_to_json(m.bn2)},
                      {"head", dense_to_json(m.head)},
                      {"train_config", train_config_to_json(config)}};
  write_json(j, path);
}

PredictorModel load_model(const std::filesystem::path& path, TrainConfig* config) {
  const auto j = read_json(path);
  PredictorModel m;
  m.fc1 = dense_from_json(j.at("fc1"));
  m.bn1 = bn_from_json(j.at("bn1"));
  m.fc2 = dense_from_json(j.at("fc2"));
  m.bn2 = bn_from_json(j.at("bn2"));
  m.head = dense_from_json(j.at("head"));
  m.leaky_slope = j.at("leaky_slope").get<double>();
  m.mode = Mode::eval;
  const std::size_t d = m.input_dim(), h = m.hidden_dim();
  if (m.fc2.weight.rows() != d || m.fc2.weight.cols() != h || m.head.weight.cols() != d ||
      m.bn1.scale.size() != h || m.bn2.scale.size() != d)
    throw std::runtime_error(path.string() + ": inconsistent layer shapes");
  if (config && j.contains("train_config")) *config = train_config_from_json(j.at("train_config"));
  return m;
}

}  // namespace ermica
