#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "edpack/analysis.hpp"
#include "edpack/error.hpp"

namespace edpack::analysis {

struct ReportOptions {
  bool svg = false;
  // Parameter count for tokens-per-parameter; falls back to the first run's.
  std::optional<double> params;
};

namespace detail {

inline std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

inline std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4e", v);
  return buf;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << content;
  out.close();
  if (!out) throw IoError("write failure on " + path.string());
}

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

inline std::string line_chart_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                                  const std::vector<Series>& series) {
  constexpr double W = 640, H = 400, L = 70, R = 150, T = 40, B = 50;
  double x0 = std::numeric_limits<double>::max(), x1 = std::numeric_limits<double>::lowest();
  double y0 = x0, y1 = x1;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (x0 > x1) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  const auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  const auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  static const char* colors[] = {"#1f77b4", "#2ca02c", "#ff7f0e", "#d62728", "#9467bd", "#8c564b"};

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title << "</text>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"12\">"
    << x_label << "</text>\n";
  o << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" font-size=\"12\" transform=\"rotate(-90 16 " << (T + H - B) / 2
    << ")\" text-anchor=\"middle\">" << y_label << "</text>\n";
  o << "<text x=\"" << L - 6 << "\" y=\"" << H - B << "\" text-anchor=\"end\" font-size=\"10\">" << fixed(y0, 3)
    << "</text>\n";
  o << "<text x=\"" << L - 6 << "\" y=\"" << T + 4 << "\" text-anchor=\"end\" font-size=\"10\">" << fixed(y1, 3)
    << "</text>\n";
  o << "<text x=\"" << L << "\" y=\"" << H - B + 14 << "\" font-size=\"10\">" << sci(x0) << "</text>\n";
  o << "<text x=\"" << W - R << "\" y=\"" << H - B + 14 << "\" text-anchor=\"end\" font-size=\"10\">" << sci(x1)
    << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = colors[i % std::size(colors)];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t k = 0; k < series[i].points.size(); ++k) {
      const auto& [x, y] = series[i].points[k];
      o << (k ? " " : "") << fixed(px(x), 2) << "," << fixed(py(y), 2);
    }
    o << "\"/>\n";
    const double ly = T + 16.0 * static_cast<double>(i);
    o << "<text x=\"" << W - R + 10 << "\" y=\"" << ly + 4 << "\" font-size=\"11\" fill=\"" << color << "\">"
      << series[i].name << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace detail

// Writes report.txt, table1.csv, efficiency.csv and (when curves are given)
// loss.csv, plus optional SVG charts. Output is a pure function of the inputs.
inline std::vector<std::filesystem::path> emit_report(const BenchmarkTable& table, const std::vector<LossCurve>& curves,
                                                      const std::vector<TrainRunSpec>& runs,
                                                      const std::filesystem::path& out_dir,
                                                      const ReportOptions& opts = {}) {
  using detail::fixed;
  table.validate();
  for (const auto& c : curves) c.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  std::vector<std::filesystem::path> written;
  const auto& base = table.base_row();
  std::optional<double> params = opts.params;
  if (!params && !runs.empty()) params = runs.front().params;

  // table1.csv
  std::ostringstream t1;
  t1 << "label,tokens";
  for (const auto& b : table.benchmarks) t1 << "," << b;
  t1 << ",avg";
  for (const auto& b : table.benchmarks) t1 << ",delta_pct_" << b;
  t1 << ",delta_pct_avg\n";
  for (const auto& r : table.rows) {
    t1 << r.label << "," << r.tokens;
    for (const auto& b : table.benchmarks) t1 << "," << fixed(r.scores.at(b), 4);
    t1 << "," << fixed(table_average(r), 4);
    for (const auto& b : table.benchmarks) t1 << "," << fixed(relative_delta(base.scores.at(b), r.scores.at(b)), 2);
    t1 << "," << fixed(relative_delta(table_average(base), table_average(r)), 2) << "\n";
  }
  written.push_back(out_dir / "table1.csv");
  detail::write_file(written.back(), t1.str());

  // efficiency.csv
  const auto rom = group_deltas(table, GroupMethod::RatioOfMeans);
  const auto mor = group_deltas(table, GroupMethod::MeanOfRatios);
  std::ostringstream eff;
  eff << "label,tokens,tokens_per_param";
  for (const auto& [g, members] : table.groups) eff << "," << g << "_ratio_of_means," << g << "_mean_of_ratios";
  eff << "\n";
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    eff << r.label << "," << r.tokens << ",";
    if (params) eff << fixed(tokens_per_parameter(static_cast<double>(r.tokens), *params), 2);
    for (std::size_t g = 0; g < table.groups.size(); ++g) {
      eff << "," << fixed(rom[i].deltas[g].second, 2) << "," << fixed(mor[i].deltas[g].second, 2);
    }
    eff << "\n";
  }
  written.push_back(out_dir / "efficiency.csv");
  detail::write_file(written.back(), eff.str());

  // loss.csv
  const bool have_curves = std::any_of(curves.begin(), curves.end(), [](const auto& c) { return !c.points.empty(); });
  if (have_curves) {
    std::ostringstream lc;
    lc << "label,step,loss\n";
    for (const auto& c : curves) {
      for (const auto& p : c.points) lc << c.label << "," << p.step << "," << fixed(p.loss, 6) << "\n";
    }
    written.push_back(out_dir / "loss.csv");
    detail::write_file(written.back(), lc.str());
  }

  if (!have_curves) {
    std::filesystem::remove(out_dir / "loss.csv", ec);
    std::filesystem::remove(out_dir / "loss.svg", ec);
  }

  // report.txt
  std::ostringstream rep;
  rep << "== Benchmark scores (base: " << table.base << ") ==\n";
  for (const auto& r : table.rows) {
    rep << r.label << " (" << r.tokens << " tokens): avg " << fixed(table_average(r), 4) << " ("
        << (r.label == base.label ? std::string("base") : fixed(relative_delta(table_average(base), table_average(r)), 2) + "%")
        << ")\n";
    if (r.label == base.label) continue;
    for (const auto& b : table.benchmarks) {
      rep << "  " << b << ": " << fixed(base.scores.at(b), 4) << " -> " << fixed(r.scores.at(b), 4) << " ("
          << fixed(relative_delta(base.scores.at(b), r.scores.at(b)), 2) << "%)\n";
    }
  }
  rep << "\n== Group deltas vs base (%) ==\n";
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    rep << r.label;
    if (params) rep << " [" << fixed(tokens_per_parameter(static_cast<double>(r.tokens), *params), 2) << " tokens/param]";
    rep << ":";
    for (std::size_t g = 0; g < table.groups.size(); ++g) {
      rep << " " << table.groups[g].first << " " << fixed(rom[i].deltas[g].second, 2) << " (ratio of means), "
          << fixed(mor[i].deltas[g].second, 2) << " (mean of ratios);";
    }
    rep << "\n";
  }
  rep << "\n== Loss curves ==\n";
  if (!have_curves) {
    rep << "no loss curves supplied\n";
  } else {
    for (const auto& c : curves) {
      if (c.points.empty()) continue;
      rep << c.label << ": " << c.points.size() << " points, first " << fixed(c.points.front().loss, 4) << ", final "
          << fixed(c.points.back().loss, 4) << "\n";
    }
    for (std::size_t i = 1; i < curves.size(); ++i) {
      if (curves[0].points.empty() || curves[i].points.empty()) continue;
      const auto gap = loss_gap(curves[0], curves[i]);
      rep << "final-loss gap: " << gap.lower_label << " " << fixed(gap.final_lower, 4) << " vs " << gap.higher_label
          << " " << fixed(gap.final_higher, 4) << " -> " << fixed(gap.relative_gap_percent, 2) << "% lower\n";
    }
  }
  rep << "\n== Training runs ==\n";
  if (runs.empty()) {
    rep << "no runs supplied\n";
  } else {
    for (const auto& run : runs) {
      const auto mem = estimate_memory(run);
      rep << run.label << ": " << run.world_size << " GPU(s), " << detail::sci(run.tokens) << " tokens, "
          << fixed(run.wall_hours, 2) << " h";
      if (run.wall_hours > 0) rep << ", " << detail::sci(tokens_per_gpu_hour(run)) << " tokens/GPU-hour";
      rep << "\n  model-state memory per GPU " << detail::sci(mem.gpu_bytes) << " B, host (offloaded, all ranks) "
          << detail::sci(mem.host_bytes_total) << " B\n";
    }
    for (std::size_t i = 1; i < runs.size(); ++i) {
      if (!(runs[0].wall_hours > 0 && runs[i].wall_hours > 0)) continue;
      const auto s = scaling_efficiency(runs[0], runs[i]);
      rep << "scaling efficiency " << runs[i].label << " vs " << runs[0].label << ": " << fixed(s.efficiency, 4)
          << " (wall time x" << fixed(runs[i].wall_hours / runs[0].wall_hours, 3) << ", tokens x"
          << fixed(runs[i].tokens / runs[0].tokens, 3) << ")\n";
    }
    rep << "memory estimates cover parameters, gradients and optimizer states only; activations excluded\n";
  }
  written.push_back(out_dir / "report.txt");
  detail::write_file(written.back(), rep.str());

  if (opts.svg) {
    std::vector<detail::Series> eff_series;
    for (std::size_t g = 0; g < table.groups.size(); ++g) {
      detail::Series s{table.groups[g].first + " (ratio of means)", {}};
      for (std::size_t i = 0; i < table.rows.size(); ++i) {
        s.points.emplace_back(static_cast<double>(table.rows[i].tokens), rom[i].deltas[g].second);
      }
      std::sort(s.points.begin(), s.points.end());
      eff_series.push_back(std::move(s));
    }
    written.push_back(out_dir / "efficiency.svg");
    detail::write_file(written.back(),
                       detail::line_chart_svg("Group delta vs token volume", "tokens", "delta (%)", eff_series));
    if (have_curves) {
      std::vector<detail::Series> loss_series;
      for (const auto& c : curves) {
        detail::Series s{c.label, {}};
        for (const auto& p : c.points) s.points.emplace_back(static_cast<double>(p.step), p.loss);
        loss_series.push_back(std::move(s));
      }
      written.push_back(out_dir / "loss.svg");
      detail::write_file(written.back(), detail::line_chart_svg("Training loss", "step", "loss", loss_series));
    }
  }
  return written;
}

}  // namespace edpack::analysis
