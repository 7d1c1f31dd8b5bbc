#include "ermica/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

#include "ermica/io.hpp"

namespace ermica {

std::string results_csv(const ResultsTable& table, bool with_wall_time) {
  std::string out = std::string(kResultsCsvHeader) + "\n";
  for (const auto& r : table.rows) {
    out += std::string(to_string(r.method)) + "," + std::string(to_string(r.task_type)) + "," +
           std::to_string(r.d) + "," + std::to_string(r.k) + "," + std::to_string(r.seed) + "," +
           format_double(r.label_score) + "," + format_double(r.mcc) + ",";
    if (r.ica_converged) out += *r.ica_converged ? "true" : "false";
    out += ",";
    if (with_wall_time) out += format_double(r.wall_time_s);
    out += "\n";
  }
  return out;
}

nlohmann::json results_json(const ResultsTable& table, bool with_wall_time) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : table.rows) rows.push_back(eval_result_to_json(r, with_wall_time));
  nlohmann::json aggs = nlohmann::json::array();
  for (const auto& a : table.aggregates())
    aggs.push_back({{"method", to_string(a.method)},
                    {"task_type", to_string(a.task_type)},
                    {"d", a.d},
                    {"k", a.k},
                    {"n_seeds", a.n_seeds},
                    {"label_mean", a.label_mean},
                    {"label_std", a.label_std},
                    {"mcc_mean", a.mcc_mean},
                    {"mcc_std", a.mcc_std}});
  return {{"rows", rows}, {"aggregates", aggs}, {"failures", table.failures}};
}

ResultsTable results_from_json(const nlohmann::json& j) {
  ResultsTable t;
  for (const auto& r : j.at("rows")) t.rows.push_back(eval_result_from_json(r));
  if (j.contains("failures")) t.failures = j["failures"].get<std::vector<std::string>>();
  return t;
}

namespace {

constexpr double kWidth = 960, kHeight = 420;
constexpr double kPanelWidth = kWidth / 2;
constexpr double kMarginLeft = 64, kMarginRight = 24, kMarginTop = 56, kMarginBottom = 64;

const char* method_colour(Method m) {
  switch (m) {
    case Method::erm: return "#7f7f7f";
    case Method::erm_pca: return "#1f77b4";
    case Method::erm_ica: return "#d62728";
  }
  return "#000000";
}

const char* method_label(Method m) {
  switch (m) {
    case Method::erm: return "ERM";
    case Method::erm_pca: return "ERM-PCA";
    case Method::erm_ica: return "ERM-ICA";
  }
  return "?";
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Panel {
  std::string name;
  std::string title;
  double x0;
  double ymin, ymax;
  bool use_label;
};

void draw_panel(std::ostringstream& svg, const Panel& p, const std::vector<const Aggregate*>& aggs,
                const std::vector<std::size_t>& ks, const std::vector<Method>& methods) {
  const double left = p.x0 + kMarginLeft;
  const double plot_w = kPanelWidth - kMarginLeft - kMarginRight;
  const double top = kMarginTop;
  const double plot_h = kHeight - kMarginTop - kMarginBottom;
  auto y_of = [&](double v) {
    v = std::clamp(v, p.ymin, p.ymax);
    return top + (p.ymax - v) / (p.ymax - p.ymin) * plot_h;
  };
  const double baseline = y_of(0.0);

  svg << "<g class=\"panel\" data-panel=\"" << p.name << "\" data-ymin=\"" << format_double(p.ymin)
      << "\" data-ymax=\"" << format_double(p.ymax) << "\" data-top=\"" << num(top)
      << "\" data-plot-height=\"" << num(plot_h) << "\">\n";
  svg << "  <text x=\"" << num(left + plot_w / 2) << "\" y=\"" << num(top - 24)
      << "\" text-anchor=\"middle\" font-size=\"14\">" << escape(p.title) << "</text>\n";

  // y axis with ticks every 0.2
  svg << "  <line x1=\"" << num(left) << "\" y1=\"" << num(top) << "\" x2=\"" << num(left)
      << "\" y2=\"" << num(top + plot_h) << "\" stroke=\"#000\"/>\n";
  for (int t = static_cast<int>(std::ceil(p.ymin * 5 - 1e-9)); t <= static_cast<int>(std::floor(p.ymax * 5 + 1e-9)); ++t) {
    const double v = t / 5.0;
    const double y = y_of(v);
    svg << "  <line x1=\"" << num(left - 4) << "\" y1=\"" << num(y) << "\" x2=\"" << num(left + plot_w)
        << "\" y2=\"" << num(y) << "\" stroke=\"#ddd\"/>\n";
    char tick[16];
    std::snprintf(tick, sizeof tick, "%.1f", v);
    svg << "  <text x=\"" << num(left - 8) << "\" y=\"" << num(y + 4)
        << "\" text-anchor=\"end\" font-size=\"11\">" << tick << "</text>\n";
  }
  svg << "  <line x1=\"" << num(left) << "\" y1=\"" << num(baseline) << "\" x2=\"" << num(left + plot_w)
      << "\" y2=\"" << num(baseline) << "\" stroke=\"#000\"/>\n";

  const double group_w = plot_w / static_cast<double>(ks.size());
  const double bar_w = methods.empty() ? 0.0 : group_w * 0.8 / static_cast<double>(methods.size());
  for (std::size_t gi = 0; gi < ks.size(); ++gi) {
    const double gx = left + group_w * static_cast<double>(gi) + group_w * 0.1;
    svg << "  <text x=\"" << num(left + group_w * (static_cast<double>(gi) + 0.5)) << "\" y=\""
        << num(top + plot_h + 18) << "\" text-anchor=\"middle\" font-size=\"12\">k=" << ks[gi]
        << "</text>\n";
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
      const auto it = std::find_if(aggs.begin(), aggs.end(), [&](const Aggregate* a) {
        return a->k == ks[gi] && a->method == methods[mi];
      });
      if (it == aggs.end()) continue;
      const double mean = p.use_label ? (*it)->label_mean : (*it)->mcc_mean;
      const double sd = p.use_label ? (*it)->label_std : (*it)->mcc_std;
      const double x = gx + bar_w * static_cast<double>(mi);
      const double yv = y_of(mean);
      svg << "  <rect class=\"bar\" data-panel=\"" << p.name << "\" data-method=\""
          << to_string(methods[mi]) << "\" data-k=\"" << ks[gi] << "\" data-mean=\""
          << format_double(mean) << "\" data-std=\"" << format_double(sd) << "\" x=\"" << num(x)
          << "\" y=\"" << num(std::min(yv, baseline)) << "\" width=\"" << num(bar_w)
          << "\" height=\"" << num(std::abs(baseline - yv)) << "\" fill=\""
          << method_colour(methods[mi]) << "\"/>\n";
      const double cx = x + bar_w / 2;
      const double y_lo = y_of(mean - sd), y_hi = y_of(mean + sd);
      svg << "  <line class=\"errorbar\" x1=\"" << num(cx) << "\" y1=\"" << num(y_lo) << "\" x2=\""
          << num(cx) << "\" y2=\"" << num(y_hi) << "\" stroke=\"#000\"/>\n";
      for (double ye : {y_lo, y_hi})
        svg << "  <line x1=\"" << num(cx - bar_w / 4) << "\" y1=\"" << num(ye) << "\" x2=\""
            << num(cx + bar_w / 4) << "\" y2=\"" << num(ye) << "\" stroke=\"#000\"/>\n";
    }
  }
  svg << "</g>\n";
}

}  // namespace

std::string render_chart_svg(const std::vector<Aggregate>& all, TaskType task, std::size_t d) {
  std::vector<const Aggregate*> aggs;
  for (const auto& a : all)
    if (a.task_type == task && a.d == d) aggs.push_back(&a);
  std::set<std::size_t> kset;
  std::set<int> mset;
  for (const auto* a : aggs) {
    kset.insert(a->k);
    mset.insert(static_cast<int>(a->method));
  }
  const std::vector<std::size_t> ks(kset.begin(), kset.end());
  std::vector<Method> methods;
  for (int m : mset) methods.push_back(static_cast<Method>(m));

  double label_min = 0.0;
  for (const auto* a : aggs) label_min = std::min(label_min, a->label_mean - a->label_std);
  label_min = std::floor(label_min * 5.0) / 5.0;

  const bool regression = task == TaskType::regression;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\" font-family=\"sans-serif\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n";
  svg << "<text x=\"" << kWidth / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"15\">"
      << to_string(task) << ", d=" << d << "</text>\n";
  draw_panel(svg,
             {"label", regression ? "Label prediction (average R\xC2\xB2)" : "Label prediction (average accuracy)",
              0.0, label_min, 1.0, true},
             aggs, ks, methods);
  draw_panel(svg, {"mcc", "Latent recovery (MCC)", kPanelWidth, 0.0, 1.0, false}, aggs, ks, methods);

  // legend
  double lx = kWidth / 2 - 60.0 * static_cast<double>(methods.size());
  for (Method m : methods) {
    svg << "<rect x=\"" << num(lx) << "\" y=\"" << num(kHeight - 22) << "\" width=\"12\" height=\"12\" fill=\""
        << method_colour(m) << "\"/>\n";
    svg << "<text x=\"" << num(lx + 16) << "\" y=\"" << num(kHeight - 12) << "\" font-size=\"12\">"
        << method_label(m) << "</text>\n";
    lx += 120.0;
  }
  svg << "</svg>\n";
  return svg.str();
}

std::vector<std::filesystem::path> emit_report(const ResultsTable& table,
                                               const std::filesystem::path& outdir,
                                               bool with_wall_time) {
  if (table.rows.empty()) throw std::invalid_argument("emit_report: empty results table");
  std::filesystem::create_directories(outdir);
  std::vector<std::filesystem::path> written;
  write_text(results_csv(table, with_wall_time), outdir / "results.csv");
  written.push_back(outdir / "results.csv");
  write_json(results_json(table, with_wall_time), outdir / "results.json");
  written.push_back(outdir / "results.json");

  const auto aggs = table.aggregates();
  std::set<std::pair<int, std::size_t>> charts;
  for (const auto& a : aggs) charts.insert({static_cast<int>(a.task_type), a.d});
  for (const auto& [task, d] : charts) {
    const auto t = static_cast<TaskType>(task);
    const auto path = outdir / ("chart_" + std::string(to_string(t)) + "_d" + std::to_string(d) + ".svg");
    write_text(render_chart_svg(aggs, t, d), path);
    written.push_back(path);
  }
  return written;
}

}  // namespace ermica
