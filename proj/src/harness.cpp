#include "ermica/harness.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <tuple>

#include "ermica/io.hpp"

namespace ermica {

TrainConfig TrainOverrides::apply(TaskType task) const {
  TrainConfig c = TrainConfig::defaults_for(task);
  if (epochs) c.epochs = *epochs;
  if (batch_size) c.batch_size = *batch_size;
  if (base_lr) c.base_lr = *base_lr;
  if (lr_halve_every) c.lr_halve_every = *lr_halve_every;
  if (momentum) c.momentum = *momentum;
  if (weight_decay) c.weight_decay = *weight_decay;
  return c;
}

std::uint64_t cell_seed(std::uint64_t seed, std::size_t d, std::size_t k, TaskType task) {
  std::uint64_t h = hash_combine(seed, d);
  h = hash_combine(h, k);
  return hash_combine(h, static_cast<std::uint64_t>(task));
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double label_score(TaskType task, const Matrix& y, const Matrix& output) {
  return task == TaskType::regression ? r2_avg(y, output)
                                      : accuracy_avg(y, threshold_logits(output));
}

std::uint64_t stream_seed(std::uint64_t cell, CellStream s) {
  return hash_combine(cell, static_cast<std::uint64_t>(s));
}

}  // namespace

MethodScore evaluate_method(const Dataset& ds, const PredictorModel& model,
                            const LinearTransform* transform) {
  const Matrix rep_test = extract_representation(model, ds.test.x);
  if (!transform) {
    return {label_score(ds.task_type(), ds.test.y, apply_head(model, rep_test)),
            mcc(ds.test.z, rep_test)};
  }
  const Matrix rep_train = extract_representation(model, ds.train.x);
  const Matrix t_train = apply_transform(*transform, rep_train);
  const Matrix t_test = apply_transform(*transform, rep_test);
  const Readout r = downstream_readout(t_train, ds.train.y, t_test, ds.test.y, ds.task_type());
  return {r.score, mcc(ds.test.z, t_test)};
}

std::vector<EvalResult> run_cell(TaskType task, std::size_t d, std::size_t k, std::uint64_t seed,
                                 const CellSettings& settings, CellArtifacts* artifacts) {
  const auto start = Clock::now();
  const std::uint64_t cs = cell_seed(seed, d, k, task);

  DatasetConfig dc;
  dc.task_type = task;
  dc.d = d;
  dc.k = k;
  dc.seed = stream_seed(cs, CellStream::dataset);
  dc.noise_std = settings.noise_std;
  dc.latent = settings.latent;
  dc.generator = settings.generator;
  dc.n_train = settings.n_train;
  dc.n_val = settings.n_val;
  dc.n_test = settings.n_test;
  Dataset ds = make_dataset(dc);

  RngStream init_rng(stream_seed(cs, CellStream::init));
  TrainConfig tc = settings.train.apply(task);
  tc.seed = stream_seed(cs, CellStream::shuffle);
  TrainResult trained = train(init_model(init_rng, d, k), ds, tc);
  const PredictorModel& model = trained.best_model;
  const double shared_time = seconds_since(start);

  auto base = [&](Method m) {
    EvalResult r;
    r.method = m;
    r.task_type = task;
    r.d = d;
    r.k = k;
    r.seed = seed;
    return r;
  };
  std::vector<EvalResult> out;

  auto t0 = Clock::now();
  EvalResult erm = base(Method::erm);
  const MethodScore s_erm = evaluate_method(ds, model, nullptr);
  erm.label_score = s_erm.label_score;
  erm.mcc = s_erm.mcc;
  erm.wall_time_s = shared_time + seconds_since(t0);
  out.push_back(erm);

  const Matrix rep_train = extract_representation(model, ds.train.x);

  t0 = Clock::now();
  EvalResult pca = base(Method::erm_pca);
  LinearTransform pca_t = fit_pca(rep_train);
  const MethodScore s_pca = evaluate_method(ds, model, &pca_t);
  pca.label_score = s_pca.label_score;
  pca.mcc = s_pca.mcc;
  pca.wall_time_s = shared_time + seconds_since(t0);
  out.push_back(pca);

  t0 = Clock::now();
  EvalResult ica = base(Method::erm_ica);
  IcaOptions io{settings.ica_max_iter, settings.ica_tol, stream_seed(cs, CellStream::ica)};
  LinearTransform ica_t = fit_ica(rep_train, io);
  const MethodScore s_ica = evaluate_method(ds, model, &ica_t);
  ica.label_score = s_ica.label_score;
  ica.mcc = s_ica.mcc;
  ica.ica_converged = ica_t.converged;
  ica.wall_time_s = shared_time + seconds_since(t0);
  out.push_back(ica);

  if (artifacts) {
    artifacts->dataset = std::move(ds);
    artifacts->training = std::move(trained);
    artifacts->pca = std::move(pca_t);
    artifacts->ica = std::move(ica_t);
  }
  return out;
}

// --- configuration --------------------------------------------------------

namespace {

void parse_train_overrides(const nlohmann::json& j, TrainOverrides& t) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& key = it.key();
    if (key == "epochs") t.epochs = it->get<std::size_t>();
    else if (key == "batch_size") t.batch_size = it->get<std::size_t>();
    else if (key == "base_lr") t.base_lr = it->get<double>();
    else if (key == "lr_halve_every") t.lr_halve_every = it->get<std::size_t>();
    else if (key == "momentum") t.momentum = it->get<double>();
    else if (key == "weight_decay") t.weight_decay = it->get<double>();
    else throw std::invalid_argument("config.train: unknown key '" + key + "'");
  }
}

void parse_ica(const nlohmann::json& j, CellSettings& s) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() == "max_iter") s.ica_max_iter = it->get<std::size_t>();
    else if (it.key() == "tol") s.ica_tol = it->get<double>();
    else throw std::invalid_argument("config.ica: unknown key '" + it.key() + "'");
  }
}

}  // namespace

ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
  ExperimentConfig c;
  bool have_k = false;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& key = it.key();
    const auto& v = *it;
    if (key == "task_type") c.task_type = parse_task_type(v.get<std::string>());
    else if (key == "d") c.d = v.get<std::size_t>();
    else if (key == "k_list") {
      c.k_list = v.get<std::vector<std::size_t>>();
      have_k = true;
    } else if (key == "seeds") c.seeds = v.get<std::vector<std::uint64_t>>();
    else if (key == "train") parse_train_overrides(v, c.settings.train);
    else if (key == "ica") parse_ica(v, c.settings);
    else if (key == "output_dir") c.output_dir = v.get<std::string>();
    else if (key == "workers") c.workers = v.get<std::size_t>();
    else if (key == "generator") c.settings.generator = parse_generator_kind(v.get<std::string>());
    else if (key == "latent") c.settings.latent = parse_latent_distribution(v.get<std::string>());
    else if (key == "noise_std") c.settings.noise_std = v.get<double>();
    else if (key == "n_train") c.settings.n_train = v.get<std::size_t>();
    else if (key == "n_val") c.settings.n_val = v.get<std::size_t>();
    else if (key == "n_test") c.settings.n_test = v.get<std::size_t>();
    else if (key == "record_wall_time") c.settings.record_wall_time = v.get<bool>();
    else throw std::invalid_argument("config: unknown key '" + key + "'");
  }
  if (!have_k) c.k_list = {c.d / 2, 3 * c.d / 4, c.d};
  if (c.d == 0) throw std::invalid_argument("config: d must be positive");
  for (std::size_t k : c.k_list)
    if (k == 0 || k > c.d) throw std::invalid_argument("config: every k must satisfy 1 <= k <= d");
  if (c.k_list.empty()) throw std::invalid_argument("config: k_list must be non-empty");
  if (c.seeds.empty()) throw std::invalid_argument("config: seeds must be non-empty");
  if (c.workers == 0) c.workers = 1;
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return parse_experiment_config(read_json(path));
}

nlohmann::json experiment_config_to_json(const ExperimentConfig& c) {
  nlohmann::json train = nlohmann::json::object();
  const auto& t = c.settings.train;
  if (t.epochs) train["epochs"] = *t.epochs;
  if (t.batch_size) train["batch_size"] = *t.batch_size;
  if (t.base_lr) train["base_lr"] = *t.base_lr;
  if (t.lr_halve_every) train["lr_halve_every"] = *t.lr_halve_every;
  if (t.momentum) train["momentum"] = *t.momentum;
  if (t.weight_decay) train["weight_decay"] = *t.weight_decay;
  return {{"task_type", to_string(c.task_type)},
          {"d", c.d},
          {"k_list", c.k_list},
          {"seeds", c.seeds},
          {"train", train},
          {"ica", {{"max_iter", c.settings.ica_max_iter}, {"tol", c.settings.ica_tol}}},
          {"output_dir", c.output_dir.string()},
          {"workers", c.workers},
          {"generator", to_string(c.settings.generator)},
          {"latent", to_string(c.settings.latent)},
          {"noise_std", c.settings.noise_std},
          {"n_train", c.settings.n_train},
          {"n_val", c.settings.n_val},
          {"n_test", c.settings.n_test},
          {"record_wall_time", c.settings.record_wall_time}};
}

// --- results ----------------------------------------------------------------

nlohmann::json eval_result_to_json(const EvalResult& r, bool with_wall_time) {
  nlohmann::json j = {{"method", to_string(r.method)}, {"task_type", to_string(r.task_type)},
                      {"d", r.d},                      {"k", r.k},
                      {"seed", r.seed},                {"label_score", r.label_score},
                      {"mcc", r.mcc}};
  j["ica_converged"] = r.ica_converged ? nlohmann::json(*r.ica_converged) : nlohmann::json();
  j["wall_time_s"] = with_wall_time ? nlohmann::json(r.wall_time_s) : nlohmann::json();
  return j;
}

EvalResult eval_result_from_json(const nlohmann::json& j) {
  EvalResult r;
  r.method = parse_method(j.at("method").get<std::string>());
  r.task_type = parse_task_type(j.at("task_type").get<std::string>());
  r.d = j.at("d").get<std::size_t>();
  r.k = j.at("k").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.label_score = j.at("label_score").get<double>();
  r.mcc = j.at("mcc").get<double>();
  if (j.contains("ica_converged") && !j["ica_converged"].is_null())
    r.ica_converged = j["ica_converged"].get<bool>();
  if (j.contains("wall_time_s") && !j["wall_time_s"].is_null())
    r.wall_time_s = j["wall_time_s"].get<double>();
  return r;
}

std::vector<Aggregate> ResultsTable::aggregates() const {
  using Key = std::tuple<int, std::size_t, std::size_t, int>;
  std::vector<Key> order;
  std::map<Key, std::vector<const EvalResult*>> groups;
  for (const auto& r : rows) {
    const Key key{static_cast<int>(r.task_type), r.d, r.k, static_cast<int>(r.method)};
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back(&r);
  }
  auto mean_std = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    return std::pair{m, sd};
  };
  std::vector<Aggregate> out;
  for (const auto& key : order) {
    const auto& g = groups.at(key);
    std::vector<double> label, m;
    for (const auto* r : g) {
      label.push_back(r->label_score);
      m.push_back(r->mcc);
    }
    const auto [lm, ls] = mean_std(label);
    const auto [mm, ms] = mean_std(m);
    out.push_back({g.front()->method, g.front()->task_type, g.front()->d, g.front()->k, g.size(), lm,
                   ls, mm, ms});
  }
  return out;
}

ResultsTable run_sweep(const ExperimentConfig& config, const ProgressFn& progress) {
  const auto cells_dir = config.output_dir / "cells";
  std::error_code ec;
  std::filesystem::create_directories(cells_dir, ec);
  {
    const auto probe = cells_dir / ".write_probe";
    std::ofstream out(probe);
    if (ec || !out) throw std::runtime_error("run_sweep: output directory not writable: " + config.output_dir.string());
    out.close();
    std::filesystem::remove(probe, ec);
  }

  struct Cell {
    std::size_t k;
    std::uint64_t seed;
    std::string id;
  };
  std::vector<Cell> cells;
  for (std::size_t k : config.k_list)
    for (std::uint64_t seed : config.seeds)
      cells.push_back({k, seed,
                       std::string(to_string(config.task_type)) + "_d" + std::to_string(config.d) +
                           "_k" + std::to_string(k) + "_s" + std::to_string(seed)});

  std::vector<std::vector<EvalResult>> results(cells.size());
  std::vector<std::string> errors(cells.size());
  std::mutex io_mutex;
  std::atomic<std::size_t> next{0};
  const bool timing = config.settings.record_wall_time;

  auto log = [&](const std::string& msg) {
    if (progress) progress(msg);
  };

  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      const Cell& cell = cells[i];
      const auto json_path = cells_dir / (cell.id + ".json");
      const auto marker = cells_dir / (cell.id + ".done");
      if (std::filesystem::exists(marker)) {
        try {
          const auto j = read_json(json_path);
          for (const auto& r : j.at("results")) results[i].push_back(eval_result_from_json(r));
          std::lock_guard lock(io_mutex);
          log("cell " + cell.id + ": reused");
          continue;
        } catch (const std::exception& e) {
          results[i].clear();
          std::lock_guard lock(io_mutex);
          log("cell " + cell.id + ": stale marker (" + e.what() + "), recomputing");
        }
      }
      try {
        auto rows = run_cell(config.task_type, config.d, cell.k, cell.seed, config.settings);
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& r : rows) arr.push_back(eval_result_to_json(r, timing));
        std::lock_guard lock(io_mutex);
        const auto tmp = cells_dir / (cell.id + ".json.tmp");
        write_json({{"cell", cell.id}, {"results", arr}}, tmp);
        std::filesystem::rename(tmp, json_path);
        write_text("", marker);
        results[i] = std::move(rows);
        log("cell " + cell.id + ": done");
      } catch (const std::exception& e) {
        std::lock_guard lock(io_mutex);
        errors[i] = cell.id + ": " + e.what();
        write_text(errors[i] + "\n", cells_dir / (cell.id + ".error"));
        log("cell " + errors[i] + " (failed)");
      }
    }
  };

  const std::size_t n_workers = std::max<std::size_t>(1, std::min(config.workers, cells.size()));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  ResultsTable table;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (auto& r : results[i]) {
      if (!timing) r.wall_time_s = 0.0;
      table.rows.push_back(r);
    }
    if (!errors[i].empty()) table.failures.push_back(errors[i]);
  }
  return table;
}

}  // namespace ermica
