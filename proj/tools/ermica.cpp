#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "ermica/datagen.hpp"
#include "ermica/harness.hpp"
#include "ermica/io.hpp"
#include "ermica/network.hpp"
#include "ermica/report.hpp"
#include "ermica/transform.hpp"

using namespace ermica;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
};

// Shared data-shape flags; unset ones fall back to the config file.
struct ShapeFlags {
  std::optional<std::string> task;
  std::optional<std::size_t> d, k;
  std::optional<std::string> generator, latent;
  std::optional<std::size_t> epochs;

  void add_to(CLI::App* cmd, bool with_k = true) {
    cmd->add_option("--task", task, "regression or classification");
    cmd->add_option("--d", d, "latent dimension");
    if (with_k) cmd->add_option("--k", k, "number of tasks");
    cmd->add_option("--generator", generator, "mlp or linear");
    cmd->add_option("--latent", latent, "binary or uniform");
    cmd->add_option("--epochs", epochs, "override the training epoch budget");
  }
};

ExperimentConfig base_config(const Globals& g) {
  ExperimentConfig c = g.config.empty() ? parse_experiment_config(nlohmann::json::object())
                                        : load_experiment_config(g.config);
  if (g.workers) c.workers = *g.workers;
  if (!g.out.empty()) c.output_dir = g.out;
  return c;
}

void apply_shape(ExperimentConfig& c, const ShapeFlags& f) {
  if (f.task) c.task_type = parse_task_type(*f.task);
  if (f.d) c.d = *f.d;
  if (f.k) c.k_list = {*f.k};
  if (f.generator) c.settings.generator = parse_generator_kind(*f.generator);
  if (f.latent) c.settings.latent = parse_latent_distribution(*f.latent);
  if (f.epochs) c.settings.train.epochs = *f.epochs;
}

fs::path require_out(const Globals& g) {
  if (g.out.empty()) throw std::invalid_argument("--out is required for this subcommand");
  return g.out;
}

void log_line(const std::string& msg) { std::cerr << msg << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ERM followed by linear ICA for latent recovery in multi-task learning"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "experiment config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "output directory");
  app.add_option("--seed", g.seed, "seed");
  app.add_option("--workers", g.workers, "parallel cells for sweep");

  // datagen
  auto* datagen = app.add_subcommand("datagen", "sample a dataset and write it to --out");
  ShapeFlags dg_shape;
  dg_shape.add_to(datagen);
  datagen->callback([&] {
    ExperimentConfig c = base_config(g);
    apply_shape(c, dg_shape);
    DatasetConfig dc;
    dc.task_type = c.task_type;
    dc.d = c.d;
    dc.k = c.k_list.back();
    dc.seed = g.seed.value_or(0);
    dc.noise_std = c.settings.noise_std;
    dc.latent = c.settings.latent;
    dc.generator = c.settings.generator;
    dc.n_train = c.settings.n_train;
    dc.n_val = c.settings.n_val;
    dc.n_test = c.settings.n_test;
    const auto out = require_out(g);
    save_dataset(make_dataset(dc), out);
    log_line("dataset written to " + out.string());
  });

  // train
  auto* train_cmd = app.add_subcommand("train", "train the predictor on a dataset directory");
  std::string train_data;
  std::optional<std::size_t> train_epochs;
  train_cmd->add_option("--data", train_data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--epochs", train_epochs, "override the epoch budget");
  train_cmd->callback([&] {
    ExperimentConfig c = base_config(g);
    const Dataset ds = load_dataset(train_data);
    if (train_epochs) c.settings.train.epochs = *train_epochs;
    TrainConfig tc = c.settings.train.apply(ds.task_type());
    const std::uint64_t seed = g.seed.value_or(0);
    tc.seed = hash_combine(seed, static_cast<std::uint64_t>(CellStream::shuffle));
    RngStream init(hash_combine(seed, static_cast<std::uint64_t>(CellStream::init)));
    const TrainResult res = train(init_model(init, ds.d(), ds.k()), ds, tc);
    const auto out = require_out(g);
    save_model(res.best_model, tc, out / "model.json");
    std::string history = "epoch,train_loss,val_loss,lr\n";
    for (const auto& h : res.history)
      history += std::to_string(h.epoch) + "," + format_double(h.train_loss) + "," +
                 format_double(h.val_loss) + "," + format_double(h.lr) + "\n";
    write_text(history, out / "history.csv");
    log_line("best epoch " + std::to_string(res.best_epoch) + ", val loss " + format_double(res.best_val_loss));
  });

  // transform
  auto* transform_cmd = app.add_subcommand("transform", "fit PCA or ICA on train-split representations");
  std::string tr_kind, tr_data, tr_model;
  transform_cmd->add_option("--kind", tr_kind, "pca or ica")->required()->check(CLI::IsMember({"pca", "ica"}));
  transform_cmd->add_option("--data", tr_data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  transform_cmd->add_option("--model", tr_model, "model.json")->required()->check(CLI::ExistingFile);
  transform_cmd->callback([&] {
    const ExperimentConfig c = base_config(g);
    const Dataset ds = load_dataset(tr_data);
    const PredictorModel model = load_model(tr_model);
    const Matrix rep = extract_representation(model, ds.train.x);
    LinearTransform t;
    if (tr_kind == "pca") {
      t = fit_pca(rep);
    } else {
      t = fit_ica(rep, {c.settings.ica_max_iter, c.settings.ica_tol,
                        hash_combine(g.seed.value_or(0), static_cast<std::uint64_t>(CellStream::ica))});
      if (!t.converged) log_line("warning: ICA did not converge in " + std::to_string(t.iterations) + " iterations");
    }
    save_transform(t, require_out(g) / "transform.json");
  });

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "score a model (optionally with a transform) on the test split");
  std::string ev_data, ev_model, ev_transform;
  eval_cmd->add_option("--data", ev_data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--model", ev_model, "model.json")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--transform", ev_transform, "transform.json")->check(CLI::ExistingFile);
  eval_cmd->callback([&] {
    const Dataset ds = load_dataset(ev_data);
    const PredictorModel model = load_model(ev_model);
    std::optional<LinearTransform> t;
    if (!ev_transform.empty()) t = load_transform(ev_transform);
    const MethodScore s = evaluate_method(ds, model, t ? &*t : nullptr);
    const Method method = !t ? Method::erm : t->kind == TransformKind::ica ? Method::erm_ica : Method::erm_pca;
    nlohmann::json j = {{"method", to_string(method)},
                        {"task_type", to_string(ds.task_type())},
                        {"d", ds.d()},
                        {"k", ds.k()},
                        {"label_score", s.label_score},
                        {"mcc", s.mcc}};
    if (t && t->kind == TransformKind::ica) j["ica_converged"] = t->converged;
    std::cout << dump_json(j);
    if (!g.out.empty()) write_json(j, fs::path(g.out) / "eval.json");
  });

  // cell
  auto* cell_cmd = app.add_subcommand("cell", "run ERM, ERM-PCA and ERM-ICA for one (d, k, seed)");
  ShapeFlags cell_shape;
  cell_shape.add_to(cell_cmd);
  cell_cmd->callback([&] {
    ExperimentConfig c = base_config(g);
    apply_shape(c, cell_shape);
    c.seeds = {g.seed.value_or(c.seeds.front())};
    c.k_list = {cell_shape.k.value_or(c.k_list.back())};
    ResultsTable table;
    table.rows = run_cell(c.task_type, c.d, c.k_list.front(), c.seeds.front(), c.settings);
    std::cout << results_csv(table, c.settings.record_wall_time);
    if (!g.out.empty()) emit_report(table, g.out, c.settings.record_wall_time);
  });

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "run every (k, seed) cell of a config and write the report");
  ShapeFlags sweep_shape;
  sweep_shape.add_to(sweep_cmd, false);
  sweep_cmd->callback([&] {
    ExperimentConfig c = base_config(g);
    apply_shape(c, sweep_shape);
    if (sweep_shape.d && g.config.empty()) c.k_list = {c.d / 2, 3 * c.d / 4, c.d};
    if (g.seed) c.seeds = {*g.seed};
    const ResultsTable table = run_sweep(c, log_line);
    for (const auto& f : table.failures) log_line("failed: " + f);
    if (table.rows.empty()) throw std::runtime_error("every cell failed");
    for (const auto& p : emit_report(table, c.output_dir, c.settings.record_wall_time)) log_line("wrote " + p.string());
  });

  // report
  auto* report_cmd = app.add_subcommand("report", "re-render results.csv and charts from a results.json");
  std::string rp_in;
  report_cmd->add_option("--in", rp_in, "results.json")->required()->check(CLI::ExistingFile);
  report_cmd->callback([&] {
    const ResultsTable table = results_from_json(read_json(rp_in));
    const bool timing = !table.rows.empty() && std::any_of(table.rows.begin(), table.rows.end(),
                                                           [](const EvalResult& r) { return r.wall_time_s != 0.0; });
    for (const auto& p : emit_report(table, require_out(g), timing)) log_line("wrote " + p.string());
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
