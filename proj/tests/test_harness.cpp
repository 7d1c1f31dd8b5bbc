#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "ermica/harness.hpp"
#include "ermica/io.hpp"
#include "ermica/report.hpp"

using namespace ermica;
namespace fs = std::filesystem;

namespace {

CellSettings tiny_settings() {
  CellSettings s;
  s.n_train = 200;
  s.n_val = 60;
  s.n_test = 200;
  s.train.epochs = 4;
  s.train.batch_size = 64;
  return s;
}

nlohmann::json tiny_config(const fs::path& out) {
  return {{"task_type", "regression"},
          {"d", 4},
          {"k_list", {2, 4}},
          {"seeds", {0, 1}},
          {"train", {{"epochs", 3}, {"batch_size", 64}}},
          {"n_train", 200},
          {"n_val", 60},
          {"n_test", 200},
          {"output_dir", out.string()}};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("cell seeds are independent of the grid") {
  CHECK(cell_seed(0, 16, 8, TaskType::regression) == cell_seed(0, 16, 8, TaskType::regression));
  CHECK(cell_seed(0, 16, 8, TaskType::regression) != cell_seed(0, 16, 12, TaskType::regression));
  CHECK(cell_seed(0, 16, 8, TaskType::regression) != cell_seed(0, 16, 8, TaskType::classification));
  CHECK(cell_seed(0, 16, 8, TaskType::regression) != cell_seed(1, 16, 8, TaskType::regression));
}

TEST_CASE("run_cell produces three deterministic rows") {
  const auto s = tiny_settings();
  CellArtifacts art;
  const auto a = run_cell(TaskType::regression, 4, 3, 7, s, &art);
  const auto b = run_cell(TaskType::regression, 4, 3, 7, s);
  REQUIRE(a.size() == 3);
  CHECK(a[0].method == Method::erm);
  CHECK(a[1].method == Method::erm_pca);
  CHECK(a[2].method == Method::erm_ica);
  CHECK(!a[0].ica_converged.has_value());
  CHECK(a[2].ica_converged.has_value());
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a[i].mcc == b[i].mcc);
    CHECK(a[i].label_score == b[i].label_score);
    CHECK(a[i].mcc >= 0.0);
    CHECK(a[i].mcc <= 1.0);
    CHECK(a[i].d == 4);
    CHECK(a[i].k == 3);
    CHECK(a[i].seed == 7);
  }
  CHECK(art.dataset.train.x.rows() == 200);
  CHECK(art.training.history.size() == 4);
  CHECK(art.pca.kind == TransformKind::pca);

  // evaluate_method reproduces the harness numbers
  const auto erm = evaluate_method(art.dataset, art.training.best_model, nullptr);
  CHECK(erm.mcc == a[0].mcc);
  const auto ica = evaluate_method(art.dataset, art.training.best_model, &art.ica);
  CHECK(ica.mcc == a[2].mcc);

  const auto cls = run_cell(TaskType::classification, 4, 2, 1, s);
  for (const auto& r : cls) {
    CHECK(r.label_score >= 0.0);
    CHECK(r.label_score <= 1.0);
  }
}

TEST_CASE("experiment config parsing") {
  const auto c = parse_experiment_config({{"task_type", "classification"}, {"d", 16}});
  CHECK(c.k_list == std::vector<std::size_t>{8, 12, 16});
  CHECK(c.seeds == std::vector<std::uint64_t>{0, 1, 2});
  CHECK(c.task_type == TaskType::classification);
  CHECK_THROWS_AS(parse_experiment_config({{"d", 16}, {"bogus", 1}}), std::invalid_argument);
  CHECK_THROWS_AS(parse_experiment_config({{"d", 4}, {"k_list", {5}}}), std::invalid_argument);
  CHECK_THROWS_AS(parse_experiment_config({{"d", 4}, {"seeds", nlohmann::json::array()}}), std::invalid_argument);
  CHECK_THROWS_AS(parse_experiment_config({{"d", 4}, {"train", {{"lr", 0.1}}}}), std::invalid_argument);
  CHECK_THROWS_AS(parse_experiment_config({{"d", 4}, {"ica", {{"fun", "cube"}}}}), std::invalid_argument);

  const auto full = parse_experiment_config(tiny_config("x"));
  const auto again = parse_experiment_config(experiment_config_to_json(full));
  CHECK(again.k_list == full.k_list);
  CHECK(again.settings.train.epochs == full.settings.train.epochs);
  CHECK(again.settings.n_train == 200);
  CHECK(again.output_dir == full.output_dir);
}

TEST_CASE("aggregates use the sample standard deviation") {
  ResultsTable t;
  for (std::uint64_t s = 0; s < 3; ++s) {
    EvalResult r;
    r.method = Method::erm_ica;
    r.d = 4;
    r.k = 2;
    r.seed = s;
    r.mcc = 0.5 + 0.1 * static_cast<double>(s);
    r.label_score = 0.7;
    t.rows.push_back(r);
  }
  auto aggs = t.aggregates();
  REQUIRE(aggs.size() == 1);
  CHECK(aggs[0].n_seeds == 3);
  CHECK(aggs[0].mcc_mean == doctest::Approx(0.6));
  CHECK(aggs[0].mcc_std == doctest::Approx(0.1));
  CHECK(aggs[0].label_std == doctest::Approx(0.0));

  t.rows.resize(1);
  CHECK(t.aggregates()[0].mcc_std == 0.0);
}

TEST_CASE("sweep: rows, resume, determinism, failures") {
  const auto root = fresh_dir("ermica_test_sweep");
  const auto cfg = parse_experiment_config(tiny_config(root / "a"));
  std::vector<std::string> log;
  const auto t1 = run_sweep(cfg, [&](const std::string& m) { log.push_back(m); });
  CHECK(t1.rows.size() == 12);
  CHECK(t1.failures.empty());
  CHECK(fs::exists(root / "a" / "cells" / "regression_d4_k2_s0.done"));
  CHECK(fs::exists(root / "a" / "cells" / "regression_d4_k4_s1.json"));

  // resume: all cells reused, identical table
  log.clear();
  const auto t2 = run_sweep(cfg, [&](const std::string& m) { log.push_back(m); });
  CHECK(log.size() == 4);
  for (const auto& m : log) CHECK(m.find("reused") != std::string::npos);
  CHECK(results_csv(t2, false) == results_csv(t1, false));

  // interrupted sweep: drop one marker, rerun recomputes just that cell
  fs::remove(root / "a" / "cells" / "regression_d4_k4_s0.done");
  log.clear();
  const auto t3 = run_sweep(cfg, [&](const std::string& m) { log.push_back(m); });
  CHECK(std::count_if(log.begin(), log.end(), [](const std::string& m) { return m.find("done") != std::string::npos; }) == 1);
  CHECK(results_csv(t3, false) == results_csv(t1, false));

  // parallel workers give the same table
  auto par = cfg;
  par.output_dir = root / "b";
  par.workers = 3;
  CHECK(results_csv(run_sweep(par), false) == results_csv(t1, false));

  // a failing cell is recorded and the others still run
  auto broken = cfg;
  broken.output_dir = root / "c";
  fs::create_directories(root / "c" / "cells" / "regression_d4_k2_s1.json.tmp" / "blocker");
  const auto t4 = run_sweep(broken);
  CHECK(t4.failures.size() == 1);
  CHECK(t4.rows.size() == 9);
  CHECK(fs::exists(root / "c" / "cells" / "regression_d4_k2_s1.error"));

  fs::remove_all(root);
}

TEST_CASE("sweep into an unwritable location fails") {
  const auto root = fresh_dir("ermica_test_unwritable");
  fs::create_directories(root);
  write_text("not a directory", root / "file");
  auto cfg = parse_experiment_config(tiny_config(root / "file" / "out"));
  CHECK_THROWS(run_sweep(cfg));
  fs::remove_all(root);
}

TEST_CASE("report files and chart fidelity") {
  ResultsTable t;
  const double mccs[3][2] = {{0.4, 0.5}, {0.35, 0.45}, {0.8, 0.9}};
  for (int m = 0; m < 3; ++m)
    for (std::size_t k : {2, 4})
      for (std::uint64_t s = 0; s < 2; ++s) {
        EvalResult r;
        r.method = static_cast<Method>(m);
        r.d = 4;
        r.k = k;
        r.seed = s;
        r.mcc = mccs[m][k == 4] + 0.02 * static_cast<double>(s);
        r.label_score = k == 4 ? -0.1 + 0.3 * static_cast<double>(s) : 0.6;
        if (m == 2) r.ica_converged = true;
        t.rows.push_back(r);
      }

  const auto dir = fresh_dir("ermica_test_report");
  const auto files = emit_report(t, dir);
  CHECK(files.size() == 3);
  CHECK(fs::exists(dir / "chart_regression_d4.svg"));

  const std::string csv = slurp(dir / "results.csv");
  CHECK(csv.rfind(std::string(kResultsCsvHeader) + "\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 13);
  const auto json = read_json(dir / "results.json");
  CHECK(json["rows"].size() == 12);
  CHECK(results_from_json(json).rows.size() == 12);

  // every bar's data attributes match the aggregates, and its drawn height
  // matches the panel's scale
  const std::string svg = slurp(dir / "chart_regression_d4.svg");
  const auto aggs = t.aggregates();
  std::map<std::string, std::array<double, 4>> panels;  // ymin, ymax, top, plot height
  const std::regex panel_re(
      R"re(data-panel="(\w+)" data-ymin="([^"]+)" data-ymax="([^"]+)" data-top="([^"]+)" data-plot-height="([^"]+)")re");
  for (std::sregex_iterator it(svg.begin(), svg.end(), panel_re), end; it != end; ++it)
    panels[(*it)[1]] = {std::stod((*it)[2]), std::stod((*it)[3]), std::stod((*it)[4]), std::stod((*it)[5])};
  REQUIRE(panels.size() == 2);
  CHECK(panels["label"][0] < 0.0);  // negative R2 extends the axis

  const std::regex bar_re(
      R"re(<rect class="bar" data-panel="(\w+)" data-method="(\w+)" data-k="(\d+)" data-mean="([^"]+)" data-std="([^"]+)" x="[^"]+" y="([^"]+)" width="[^"]+" height="([^"]+)")re");
  std::size_t bars = 0;
  for (std::sregex_iterator it(svg.begin(), svg.end(), bar_re), end; it != end; ++it, ++bars) {
    const std::string panel = (*it)[1];
    const Method m = parse_method((*it)[2].str());
    const std::size_t k = std::stoul((*it)[3]);
    const double mean = std::stod((*it)[4]), sd = std::stod((*it)[5]), height = std::stod((*it)[7]);
    const auto agg = std::find_if(aggs.begin(), aggs.end(), [&](const Aggregate& a) { return a.method == m && a.k == k; });
    REQUIRE(agg != aggs.end());
    CHECK(mean == (panel == "mcc" ? agg->mcc_mean : agg->label_mean));
    CHECK(sd == (panel == "mcc" ? agg->mcc_std : agg->label_std));
    const auto& p = panels[panel];
    CHECK(height == doctest::Approx(std::abs(mean) / (p[1] - p[0]) * p[3]).epsilon(1e-5));
  }
  CHECK(bars == 12);

  // a missing method is omitted without error
  ResultsTable partial;
  for (const auto& r : t.rows)
    if (r.method != Method::erm_pca) partial.rows.push_back(r);
  const std::string svg2 = render_chart_svg(partial.aggregates(), TaskType::regression, 4);
  CHECK(svg2.find("erm_pca") == std::string::npos);
  CHECK(svg2.find("data-method=\"erm_ica\"") != std::string::npos);

  CHECK_THROWS_AS(emit_report(ResultsTable{}, dir), std::invalid_argument);
  fs::remove_all(dir);
}

TEST_CASE("eval result json round trip") {
  EvalResult r;
  r.method = Method::erm_ica;
  r.task_type = TaskType::classification;
  r.d = 16;
  r.k = 12;
  r.seed = 123456789012345ULL;
  r.label_score = 0.1 + 0.2;
  r.mcc = 1.0 / 3.0;
  r.ica_converged = false;
  r.wall_time_s = 2.5;
  const auto back = eval_result_from_json(nlohmann::json::parse(dump_json(eval_result_to_json(r, true))));
  CHECK(back.mcc == r.mcc);
  CHECK(back.label_score == r.label_score);
  CHECK(back.seed == r.seed);
  CHECK(back.ica_converged == std::optional<bool>(false));
  CHECK(back.wall_time_s == 2.5);
  CHECK(eval_result_to_json(r, false)["wall_time_s"].is_null());
}
