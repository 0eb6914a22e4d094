#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "cropstress/analysis/analysis.hpp"
#include "cropstress/core/error.hpp"
#include "cropstress/core/util.hpp"

namespace cropstress::analysis {

using core::Error;
using core::ErrorKind;
using core::require;

namespace {

std::string fnum(double v) { return core::format_double(v); }

// Compact tick/annotation label; %.4g keeps axis text readable.
std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  std::string s = buf;
  if (s.find('.') != std::string::npos) {
    while (s.back() == '0') s.pop_back();
    if (s.back() == '.') s.pop_back();
  }
  return s;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

constexpr const char* kPalette[4] = {"#1b6ca8", "#d1495b", "#2e933c", "#8661c1"};

struct Panel {
  double x = 0.0, y = 0.0, w = 0.0, h = 0.0;  // outer box in pixels
};

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

void svg_text(std::string& out, double x, double y, const std::string& s,
              const char* anchor = "middle", const char* extra = "") {
  out += "<text x=\"" + px(x) + "\" y=\"" + px(y) + "\" text-anchor=\"" + anchor + "\"" + extra +
         ">" + xml_escape(s) + "</text>\n";
}

void svg_line(std::string& out, double x1, double y1, double x2, double y2, const char* color,
              double width = 1.0) {
  out += "<line x1=\"" + px(x1) + "\" y1=\"" + px(y1) + "\" x2=\"" + px(x2) + "\" y2=\"" +
         px(y2) + "\" stroke=\"" + color + "\" stroke-width=\"" + px(width) + "\"/>\n";
}

void svg_rect(std::string& out, double x, double y, double w, double h, const char* fill) {
  out += "<rect x=\"" + px(x) + "\" y=\"" + px(y) + "\" width=\"" + px(w) + "\" height=\"" +
         px(h) + "\" fill=\"" + std::string(fill) + "\"/>\n";
}

struct Range {
  double lo = 0.0;
  double hi = 1.0;
};

Range padded(double lo, double hi) {
  if (!(hi > lo)) {
    const double bump = std::max(1.0, std::abs(lo)) * 0.05;
    return {lo - bump, hi + bump};
  }
  const double pad = (hi - lo) * 0.05;
  return {lo - pad, hi + pad};
}

// Axes, ticks, polylines and a legend inside one panel.
void line_panel(std::string& out, const Panel& panel, const std::string& title,
                const std::vector<Series>& series) {
  const double left = panel.x + 52.0;
  const double right = panel.x + panel.w - 12.0;
  const double top = panel.y + 28.0;
  const double bottom = panel.y + panel.h - 32.0;

  double xlo = 0.0, xhi = 1.0, ylo = 0.0, yhi = 1.0;
  bool first = true;
  for (const Series& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (first) {
        xlo = xhi = s.x[i];
        ylo = yhi = s.y[i];
        first = false;
      }
      xlo = std::min(xlo, s.x[i]);
      xhi = std::max(xhi, s.x[i]);
      ylo = std::min(ylo, s.y[i]);
      yhi = std::max(yhi, s.y[i]);
    }
  }
  const Range xr = padded(xlo, xhi);
  const Range yr = padded(ylo, yhi);
  const auto sx = [&](double v) {
    return left + (v - xr.lo) / (xr.hi - xr.lo) * (right - left);
  };
  const auto sy = [&](double v) {
    return bottom - (v - yr.lo) / (yr.hi - yr.lo) * (bottom - top);
  };

  svg_text(out, (left + right) / 2.0, panel.y + 16.0, title, "middle",
           " font-weight=\"bold\"");
  svg_line(out, left, top, left, bottom, "#444444");
  svg_line(out, left, bottom, right, bottom, "#444444");
  for (int t = 0; t <= 4; ++t) {
    const double fy = yr.lo + (yr.hi - yr.lo) * t / 4.0;
    const double fx = xr.lo + (xr.hi - xr.lo) * t / 4.0;
    svg_line(out, left - 4.0, sy(fy), left, sy(fy), "#444444");
    svg_text(out, left - 7.0, sy(fy) + 4.0, tick(fy), "end");
    svg_line(out, sx(fx), bottom, sx(fx), bottom + 4.0, "#444444");
    svg_text(out, sx(fx), bottom + 16.0, tick(fx), "middle");
  }
  for (std::size_t k = 0; k < series.size(); ++k) {
    const Series& s = series[k];
    const char* color = kPalette[k % 4];
    std::string pts;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!pts.empty()) pts += ' ';
      pts += px(sx(s.x[i])) + "," + px(sy(s.y[i]));
    }
    out += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
           "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
    const double ly = top + 14.0 * static_cast<double>(k) + 4.0;
    svg_line(out, right - 58.0, ly, right - 42.0, ly, color, 2.0);
    svg_text(out, right - 38.0, ly + 4.0, s.label, "start");
  }
}

std::string svg_open(double w, double h) {
  std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + px(w) + "\" height=\"" + px(h) +
         "\" viewBox=\"0 0 " + px(w) + " " + px(h) +
         "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg_rect(out, 0, 0, w, h, "#ffffff");
  return out;
}

struct Bar {
  std::string label;
  double value = 0.0;
  bool defined = true;
};

std::string bar_chart(const std::string& title, const std::vector<Bar>& bars,
                      bool rotate_labels) {
  const double w = std::max(440.0, 90.0 + 20.0 * static_cast<double>(bars.size()));
  const double h = 360.0;
  const double left = 56.0;
  const double right = w - 16.0;
  const double top = 34.0;
  const double bottom = h - (rotate_labels ? 88.0 : 40.0);

  double lo = 0.0, hi = 0.0;
  for (const Bar& b : bars) {
    if (!b.defined) continue;
    lo = std::min(lo, b.value);
    hi = std::max(hi, b.value);
  }
  const Range yr = padded(lo, hi);
  const auto sy = [&](double v) {
    return bottom - (v - yr.lo) / (yr.hi - yr.lo) * (bottom - top);
  };

  std::string out = svg_open(w, h);
  svg_text(out, (left + right) / 2.0, 18.0, title, "middle", " font-weight=\"bold\"");
  svg_line(out, left, top, left, bottom, "#444444");
  svg_line(out, left, sy(0.0), right, sy(0.0), "#444444");
  for (int t = 0; t <= 4; ++t) {
    const double fy = yr.lo + (yr.hi - yr.lo) * t / 4.0;
    svg_line(out, left - 4.0, sy(fy), left, sy(fy), "#444444");
    svg_text(out, left - 7.0, sy(fy) + 4.0, tick(fy), "end");
  }
  const double slot = (right - left) / static_cast<double>(bars.size());
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const Bar& b = bars[i];
    const double cx = left + slot * (static_cast<double>(i) + 0.5);
    const double bw = slot * 0.6;
    if (b.defined) {
      const double y0 = sy(std::max(0.0, b.value));
      const double y1 = sy(std::min(0.0, b.value));
      svg_rect(out, cx - bw / 2.0, y0, bw, std::max(0.5, y1 - y0), kPalette[0]);
    } else {
      svg_text(out, cx, sy(0.0) - 6.0, "n/a", "middle", " fill=\"#888888\"");
    }
    if (rotate_labels) {
      const double ty = bottom + 10.0;
      out += "<text x=\"" + px(cx) + "\" y=\"" + px(ty) + "\" text-anchor=\"end\" transform=\"rotate(-55 " +
             px(cx) + " " + px(ty) + ")\">" + xml_escape(b.label) + "</text>\n";
    } else {
      svg_text(out, cx, bottom + 16.0, b.label, "middle");
      if (b.defined) svg_text(out, cx, sy(b.value) - 5.0, tick(b.value), "middle");
    }
  }
  out += "</svg>\n";
  return out;
}

std::string metrics_csv(const Report& report) {
  const MetricSet& m = report.metrics;
  std::string out = "metric,value\n";
  out += "accuracy," + fnum(m.accuracy) + "\n";
  out += "precision," + (m.precision ? fnum(*m.precision) : std::string()) + "\n";
  out += "recall," + (m.recall ? fnum(*m.recall) : std::string()) + "\n";
  out += "f1," + (m.f1 ? fnum(*m.f1) : std::string()) + "\n";
  out += "tp," + std::to_string(report.confusion.tp) + "\n";
  out += "fp," + std::to_string(report.confusion.fp) + "\n";
  out += "fn," + std::to_string(report.confusion.fn) + "\n";
  out += "tn," + std::to_string(report.confusion.tn) + "\n";
  return out;
}

std::string history_csv(const Report& report) {
  std::string out = "epoch,train_loss,train_accuracy,validation_loss,validation_accuracy\n";
  for (std::size_t e = 0; e < report.history.size(); ++e) {
    const lstm::EpochStats& s = report.history[e];
    out += std::to_string(e + 1) + "," + fnum(s.train_loss) + "," + fnum(s.train_accuracy) + ",";
    if (s.has_validation) {
      out += fnum(s.validation_loss) + "," + fnum(s.validation_accuracy);
    } else {
      out += ",";
    }
    out += "\n";
  }
  return out;
}

std::string importance_csv(const Report& report) {
  const ImportanceReport& imp = report.importance;
  std::string out = "rank,feature,mean_drop,std_drop\n";
  for (std::size_t r = 0; r < imp.ranking.size(); ++r) {
    const int f = imp.ranking[r];
    out += std::to_string(r + 1) + "," + csv_field(imp.features[f]) + "," +
           fnum(imp.mean_drop[f]) + "," + fnum(imp.std_drop[f]) + "\n";
  }
  return out;
}

std::string density_csv(const Report& report) {
  std::string out = "feature,class,value,density\n";
  for (const DensityCurve& c : report.densities) {
    for (std::size_t i = 0; i < c.value.size(); ++i) {
      out += csv_field(c.feature) + "," + csv_field(c.class_tag) + "," + fnum(c.value[i]) + "," +
             fnum(c.density[i]) + "\n";
    }
  }
  return out;
}

std::string metrics_svg(const Report& report) {
  const MetricSet& m = report.metrics;
  std::vector<Bar> bars = {
      {"accuracy", m.accuracy, true},
      {"precision", m.precision.value_or(0.0), m.precision.has_value()},
      {"recall", m.recall.value_or(0.0), m.recall.has_value()},
      {"f1", m.f1.value_or(0.0), m.f1.has_value()},
  };
  return bar_chart("Classification metrics", bars, false);
}

std::string history_svg(const Report& report) {
  bool any_val = false;
  for (const lstm::EpochStats& s : report.history) any_val = any_val || s.has_validation;
  Series train_loss{"train", {}, {}}, val_loss{"validation", {}, {}};
  Series train_acc{"train", {}, {}}, val_acc{"validation", {}, {}};
  for (std::size_t e = 0; e < report.history.size(); ++e) {
    const lstm::EpochStats& s = report.history[e];
    const double epoch = static_cast<double>(e + 1);
    train_loss.x.push_back(epoch);
    train_loss.y.push_back(s.train_loss);
    train_acc.x.push_back(epoch);
    train_acc.y.push_back(s.train_accuracy);
    if (s.has_validation) {
      val_loss.x.push_back(epoch);
      val_loss.y.push_back(s.validation_loss);
      val_acc.x.push_back(epoch);
      val_acc.y.push_back(s.validation_accuracy);
    }
  }
  std::vector<Series> losses = {train_loss};
  std::vector<Series> accs = {train_acc};
  if (any_val) {
    losses.push_back(val_loss);
    accs.push_back(val_acc);
  }
  std::string out = svg_open(880, 330);
  line_panel(out, Panel{0, 0, 440, 330}, "Loss by epoch", losses);
  line_panel(out, Panel{440, 0, 440, 330}, "Accuracy by epoch", accs);
  out += "</svg>\n";
  return out;
}

std::string importance_svg(const Report& report) {
  const ImportanceReport& imp = report.importance;
  std::vector<Bar> bars;
  bars.reserve(imp.ranking.size());
  for (const int f : imp.ranking) bars.push_back({imp.features[f], imp.mean_drop[f], true});
  return bar_chart("Permutation importance (accuracy drop)", bars, true);
}

std::string density_svg(const Report& report) {
  // one panel per feature, curves split by class
  std::vector<std::string> features;
  for (const DensityCurve& c : report.densities) {
    if (std::find(features.begin(), features.end(), c.feature) == features.end()) {
      features.push_back(c.feature);
    }
  }
  const int cols = features.empty() ? 1 : std::min<int>(2, static_cast<int>(features.size()));
  const int rows = features.empty() ? 1 : (static_cast<int>(features.size()) + cols - 1) / cols;
  const double pw = 440.0, ph = 300.0;
  std::string out = svg_open(pw * cols, ph * rows);
  for (std::size_t i = 0; i < features.size(); ++i) {
    std::vector<Series> series;
    for (const DensityCurve& c : report.densities) {
      if (c.feature != features[i]) continue;
      series.push_back(Series{c.class_tag, c.value, c.density});
    }
    const Panel panel{pw * static_cast<double>(i % cols), ph * static_cast<double>(i / cols), pw,
                      ph};
    line_panel(out, panel, features[i] + " density", series);
  }
  out += "</svg>\n";
  return out;
}

}  // namespace

std::vector<std::filesystem::path> emit_report(const Report& report,
                                               const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create " + out_dir.string() + ": " + ec.message());

  const std::vector<std::pair<const char*, std::string>> files = {
      {"metrics.csv", metrics_csv(report)},     {"history.csv", history_csv(report)},
      {"importance.csv", importance_csv(report)}, {"density.csv", density_csv(report)},
      {"metrics.svg", metrics_svg(report)},     {"history.svg", history_svg(report)},
      {"importance.svg", importance_svg(report)}, {"density.svg", density_svg(report)},
  };
  std::vector<std::filesystem::path> written;
  written.reserve(files.size());
  for (const auto& [name, contents] : files) {
    const std::filesystem::path path = out_dir / name;
    core::spit(path, contents);
    written.push_back(path);
  }
  return written;
}

MetricSet parse_metrics_csv(const std::filesystem::path& path) {
  const std::string text = core::slurp(path);
  std::vector<std::string> lines = core::split(text, '\n');
  require(!lines.empty() && core::trim(lines[0]) == "metric,value", ErrorKind::data,
          path.string() + ": not a metrics csv");
  MetricSet m;
  bool saw_accuracy = false;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string line = core::trim(lines[i]);
    if (line.empty()) continue;
    const std::vector<std::string> cells = core::split(line, ',');
    require(cells.size() == 2, ErrorKind::data, path.string() + ": malformed row " + line);
    const std::string& name = cells[0];
    const std::string& value = cells[1];
    if (name == "accuracy") {
      m.accuracy = core::parse_double(value);
      saw_accuracy = true;
    } else if (name == "precision") {
      if (!value.empty()) m.precision = core::parse_double(value);
    } else if (name == "recall") {
      if (!value.empty()) m.recall = core::parse_double(value);
    } else if (name == "f1") {
      if (!value.empty()) m.f1 = core::parse_double(value);
    }
  }
  require(saw_accuracy, ErrorKind::data, path.string() + ": missing accuracy row");
  return m;
}

}  // namespace cropstress::analysis
