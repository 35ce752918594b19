#include "phasewalk/report.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace phasewalk {

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";
  return fmt::format("{:.9g}", v);
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

class CsvRow {
 public:
  explicit CsvRow(std::ostream& out) : out_(out) {}
  ~CsvRow() { out_ << "\r\n"; }

  CsvRow& operator<<(double v) { return text(format_number(v)); }
  CsvRow& operator<<(const Vec2& v) { return text(format_number(v.x())).text(format_number(v.y())); }
  CsvRow& operator<<(int v) { return text(std::to_string(v)); }
  CsvRow& operator<<(std::size_t v) { return text(std::to_string(v)); }
  CsvRow& operator<<(bool v) { return text(v ? "1" : "0"); }
  CsvRow& operator<<(const std::string& s) { return text(csv_field(s)); }
  CsvRow& operator<<(const char* s) { return text(csv_field(s)); }

 private:
  CsvRow& text(const std::string& s) {
    if (!first_) out_ << ',';
    first_ = false;
    out_ << s;
    return *this;
  }

  std::ostream& out_;
  bool first_ = true;
};

void header(std::ostream& out, std::initializer_list<const char*> cols) {
  out << kCsvSchemaLine << "\r\n";
  CsvRow row(out);
  for (const char* c : cols) row << c;
}

}  // namespace

void write_log_csv(std::ostream& out, const SimLog& log) {
  header(out, {"time",          "com_x",         "com_y",          "com_vx",         "com_vy",
               "dcm_x",         "dcm_y",         "dcm_ref_x",      "dcm_ref_y",      "dcm_err_x",
               "dcm_err_y",     "zmp_ref_x",     "zmp_ref_y",      "zmp_ff_x",       "zmp_ff_y",
               "zmp_ctrl_x",    "zmp_ctrl_y",    "zmp_des_x",      "zmp_des_y",      "phase_index",
               "phase_type",    "time_in_phase", "t_new",          "swing_target_x", "swing_target_y",
               "disturbance_active", "sqp_iterations", "nmpc_ok"});
  for (const SimLogRow& r : log.rows) {
    CsvRow row(out);
    row << r.time << r.com << r.com_vel << r.dcm << r.dcm_ref << r.dcm_err << r.zmp_ref << r.zmp_ff << r.zmp_ctrl
        << r.zmp_des << r.phase_index << to_string(r.phase_type) << r.time_in_phase << r.duration << r.swing_target
        << r.disturbance_active << r.sqp_iterations << r.nmpc_ok;
  }
}

void write_events_csv(std::ostream& out, const SimLog& log) {
  header(out, {"time", "kind", "phase_index", "value_x", "value_y"});
  for (const SimEvent& e : log.events) {
    CsvRow row(out);
    row << e.time << to_string(e.kind) << e.phase_index << e.value;
  }
}

void write_sweep_csv(std::ostream& out, SweepMode mode, const std::vector<SweepResult>& results) {
  header(out, {"mode", "method", "direction_deg", "timing", "push_time", "max_force", "max_impulse", "trials",
               "capped", "error"});
  for (const SweepResult& r : results) {
    CsvRow row(out);
    row << to_string(mode) << std::string(to_string(r.cell.method)) << r.cell.direction << r.cell.timing
        << r.cell.push_time << r.max_force << r.max_impulse << r.trials << r.capped << r.error;
  }
}

void write_ablation_csv(std::ostream& out, const std::vector<AblationRun>& runs) {
  out << kCsvSchemaLine << "\r\n";
  {
    CsvRow row(out);
    row << "time";
    for (const AblationRun& r : runs) row << "dcm_err_" + std::string(to_string(r.method));
  }
  std::size_t n = 0;
  for (const AblationRun& r : runs) n = std::max(n, r.log.rows.size());
  for (std::size_t i = 0; i < n; ++i) {
    CsvRow row(out);
    double t = 0.0;
    for (const AblationRun& r : runs) {
      if (i < r.log.rows.size()) t = r.log.rows[i].time;
    }
    row << t;
    for (const AblationRun& r : runs) {
      if (i < r.log.rows.size()) {
        row << r.log.rows[i].dcm_err.norm();
      } else {
        row << "";
      }
    }
  }
}

void write_ablation_summary_csv(std::ostream& out, const std::vector<AblationRun>& runs) {
  header(out, {"method", "verdict", "fall_time", "settle_time", "max_dcm_error"});
  for (const AblationRun& r : runs) {
    CsvRow row(out);
    row << std::string(to_string(r.method)) << (r.log.fell ? "fell" : "recovered");
    if (r.log.fell) {
      row << r.log.fall_time;
    } else {
      row << "";
    }
    if (std::isfinite(r.settle_time)) {
      row << r.settle_time;
    } else {
      row << "";
    }
    row << r.max_dcm_error;
  }
}

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string num(double v) { return fmt::format("{:.2f}", v); }
std::string tick(double v) { return fmt::format("{:.3g}", v); }

std::string escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '&': o += "&amp;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

std::string open_svg(double w, double h) {
  return fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\" "
      "font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      num(w), num(h), num(w), num(h));
}

std::string text(double x, double y, const std::string& s, const char* anchor = "start", int size = 11) {
  return fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"{}\" font-size=\"{}\">{}</text>\n", num(x), num(y), anchor,
                     size, escape(s));
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish(double margin = 0.0) {
    if (!(lo <= hi)) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-12) {
      const double pad = std::max(1e-6, std::abs(hi) * 0.05);
      lo -= pad;
      hi += pad;
    }
    const double pad = margin * (hi - lo);
    lo -= pad;
    hi += pad;
  }
};

}  // namespace

std::string svg_panels(const std::string& title, const std::vector<PlotPanel>& panels) {
  std::vector<PlotPanel> kept;
  for (const PlotPanel& p : panels) {
    PlotPanel q{p.title, {}};
    for (const PlotSeries& s : p.series) {
      if (!s.x.empty() && s.x.size() == s.y.size()) q.series.push_back(s);
    }
    if (!q.series.empty()) kept.push_back(std::move(q));
  }
  const double w = 720, left = 70, right = 130, top = 40, ph = 150, gap = 40;
  const double h = top + kept.size() * (ph + gap) + 20;
  std::string svg = open_svg(w, h);
  svg += text(w / 2, 22, title, "middle", 14);

  Range xr;
  for (const PlotPanel& p : kept) {
    for (const PlotSeries& s : p.series) {
      for (double x : s.x) xr.add(x);
    }
  }
  xr.finish();
  const double pw = w - left - right;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const PlotPanel& p = kept[i];
    const double y0 = top + i * (ph + gap);
    Range yr;
    for (const PlotSeries& s : p.series) {
      for (double y : s.y) yr.add(y);
    }
    yr.finish(0.05);
    auto px = [&](double x) { return left + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
    auto py = [&](double y) { return y0 + ph - (y - yr.lo) / (yr.hi - yr.lo) * ph; };
    svg += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>\n",
                       num(left), num(y0), num(pw), num(ph));
    svg += text(left, y0 - 6, p.title);
    svg += text(left - 4, y0 + 10, tick(yr.hi), "end", 9);
    svg += text(left - 4, y0 + ph, tick(yr.lo), "end", 9);
    if (yr.lo < 0 && yr.hi > 0) {
      svg += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#bbb\" stroke-dasharray=\"3,3\"/>\n",
                         num(left), num(py(0)), num(left + pw), num(py(0)));
    }
    for (std::size_t k = 0; k < p.series.size(); ++k) {
      const PlotSeries& s = p.series[k];
      const char* color = kPalette[k % std::size(kPalette)];
      std::string d;
      bool pen = false;
      for (std::size_t j = 0; j < s.x.size(); ++j) {
        if (!std::isfinite(s.x[j]) || !std::isfinite(s.y[j])) {
          pen = false;
          continue;
        }
        d += fmt::format("{}{} {} ", pen ? "L" : "M", num(px(s.x[j])), num(py(s.y[j])));
        pen = true;
      }
      svg += fmt::format("<path d=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.2\"/>\n", d, color);
      svg += text(left + pw + 10, y0 + 14 + 14 * k, s.name);
      svg += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"2\"/>\n",
                         num(left + pw + 80), num(y0 + 10 + 14 * k), num(left + pw + 120), num(y0 + 10 + 14 * k),
                         color);
    }
    if (i + 1 == kept.size()) {
      svg += text(left, y0 + ph + 14, tick(xr.lo), "middle", 9);
      svg += text(left + pw, y0 + ph + 14, tick(xr.hi), "middle", 9);
    }
  }
  return svg + "</svg>\n";
}

std::string svg_walk(const std::string& title, const SimLog& log) {
  PlotSeries ex{"x", {}, {}}, ey{"y", {}, {}}, zx{"x", {}, {}}, zy{"y", {}, {}}, ssp{"SSP", {}, {}}, dsp{"DSP", {}, {}};
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const SimLogRow& r : log.rows) {
    ex.x.push_back(r.time);
    ex.y.push_back(r.dcm_err.x());
    ey.x.push_back(r.time);
    ey.y.push_back(r.dcm_err.y());
    const Vec2 mod = r.zmp_des - r.zmp_ref;
    zx.x.push_back(r.time);
    zx.y.push_back(mod.x());
    zy.x.push_back(r.time);
    zy.y.push_back(mod.y());
    ssp.x.push_back(r.time);
    dsp.x.push_back(r.time);
    ssp.y.push_back(r.phase_type == PhaseType::SSP ? r.duration : nan);
    dsp.y.push_back(r.phase_type == PhaseType::DSP ? r.duration : nan);
  }
  return svg_panels(title, {{"DCM error [m]", {ex, ey}},
                            {"ZMP modulation z_des - z_ref [m]", {zx, zy}},
                            {"Optimized phase duration [s]", {ssp, dsp}}});
}

std::string svg_ablation(const std::string& title, const std::vector<AblationRun>& runs) {
  PlotPanel p{"|DCM error| [m]", {}};
  for (const AblationRun& r : runs) {
    PlotSeries s{std::string(to_string(r.method)) + (r.log.fell ? " (fell)" : ""), {}, {}};
    for (const SimLogRow& row : r.log.rows) {
      s.x.push_back(row.time);
      s.y.push_back(row.dcm_err.norm());
    }
    p.series.push_back(std::move(s));
  }
  return svg_panels(title, {p});
}

namespace {

std::map<AblationMethod, std::vector<const SweepResult*>> by_method(const std::vector<SweepResult>& results) {
  std::map<AblationMethod, std::vector<const SweepResult*>> groups;
  for (const SweepResult& r : results) groups[r.cell.method].push_back(&r);
  return groups;
}

}  // namespace

std::string svg_polar(const std::string& title, const std::vector<SweepResult>& results) {
  const double w = 560, h = 560, cx = 260, cy = 290, radius = 220;
  double peak = 0.0;
  for (const SweepResult& r : results) peak = std::max(peak, r.max_impulse);
  if (!(peak > 0)) peak = 1.0;
  std::string svg = open_svg(w, h);
  svg += text(w / 2, 22, title, "middle", 14);
  for (int ring = 1; ring <= 4; ++ring) {
    const double rr = radius * ring / 4.0;
    svg += fmt::format("<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"none\" stroke=\"#ccc\"/>\n", num(cx), num(cy),
                       num(rr));
    svg += text(cx + 3, cy - rr - 2, tick(peak * ring / 4.0) + " Ns", "start", 9);
  }
  // Screen up is the forward direction (90 deg); 0 deg points right.
  auto point = [&](double deg, double value) {
    const Vec2 d = push_direction(deg);
    const double s = value / peak * radius;
    return Vec2(cx - s * d.y(), cy - s * d.x());
  };
  for (int deg = 0; deg < 360; deg += 30) {
    const Vec2 p = point(deg, peak * 1.08);
    svg += text(p.x(), p.y() + 4, std::to_string(deg), "middle", 9);
  }
  int k = 0;
  for (const auto& [method, cells] : by_method(results)) {
    const char* color = kPalette[k % std::size(kPalette)];
    std::vector<const SweepResult*> sorted = cells;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const SweepResult* a, const SweepResult* b) { return a->cell.direction < b->cell.direction; });
    std::string d;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      const Vec2 p = point(sorted[i]->cell.direction, sorted[i]->max_impulse);
      d += fmt::format("{}{} {} ", i == 0 ? "M" : "L", num(p.x()), num(p.y()));
    }
    d += "Z";
    svg += fmt::format("<path d=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n", d, color);
    svg += text(w - 80, 50 + 14 * k, std::string(to_string(method)));
    svg += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"2\"/>\n",
                       num(w - 50), num(46 + 14 * k), num(w - 20), num(46 + 14 * k), color);
    ++k;
  }
  return svg + "</svg>\n";
}

std::string svg_timing(const std::string& title, const std::vector<SweepResult>& results) {
  PlotPanel p{"Max recoverable impulse [Ns] over push timing in the step cycle [s]", {}};
  for (const auto& [method, cells] : by_method(results)) {
    PlotSeries s{std::string(to_string(method)), {}, {}};
    std::vector<const SweepResult*> sorted = cells;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const SweepResult* a, const SweepResult* b) { return a->cell.timing < b->cell.timing; });
    for (const SweepResult* r : sorted) {
      s.x.push_back(r->cell.timing);
      s.y.push_back(r->max_impulse);
    }
    p.series.push_back(std::move(s));
  }
  return svg_panels(title, {p});
}

}  // namespace phasewalk
