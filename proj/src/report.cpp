#include "wsi/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "wsi/error.hpp"

namespace wsi {

namespace {

std::string num9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string px(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw Error(Errc::format, "unterminated quote on CSV line " + std::to_string(line_no));
  fields.push_back(std::move(cur));
  return fields;
}

double parse_real(const std::string& s, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(Errc::format, "bad number '" + s + "' on CSV line " + std::to_string(line_no));
  }
}

std::string xml_escape(std::string_view s) {
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

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

const char* palette(int i) {
  constexpr int n = int(sizeof kPalette / sizeof *kPalette);
  return kPalette[((i % n) + n) % n];
}

}  // namespace

std::string emit_records_csv(std::span<const EvaluationRecord> records) {
  std::vector<EvaluationRecord> sorted(records.begin(), records.end());
  sort_records(sorted);
  std::string out(kCsvHeader);
  out += "\n";
  for (const auto& r : sorted) {
    out += std::string(to_string(r.kind)) + "," + num9(r.alpha1) + "," +
           (r.alpha2 ? num9(*r.alpha2) : "") + "," + std::to_string(r.seed) + "," +
           csv_field(r.src_lang) + "," + csv_field(r.tgt_lang) + "," + csv_field(r.task) + "," +
           std::string(to_string(r.eval_side)) + "," + csv_field(r.metric) + "," + num9(r.value) +
           "," + (r.normalized ? num9(*r.normalized) : "") + "\n";
  }
  return out;
}

std::vector<EvaluationRecord> parse_records_csv(std::string_view text) {
  std::vector<EvaluationRecord> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header_seen = false;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != kCsvHeader) throw Error(Errc::format, "unexpected CSV header");
      header_seen = true;
      continue;
    }
    const auto f = split_csv_line(line, line_no);
    if (f.size() != 11)
      throw Error(Errc::format, "CSV line " + std::to_string(line_no) + " has " +
                                    std::to_string(f.size()) + " fields, expected 11");
    EvaluationRecord r;
    r.kind = parse_grid_kind(f[0]);
    r.alpha1 = parse_real(f[1], line_no);
    if (!f[2].empty()) r.alpha2 = parse_real(f[2], line_no);
    if ((r.kind == GridKind::two_d) != r.alpha2.has_value())
      throw Error(Errc::format, "alpha2 must be present exactly for 2d rows (line " +
                                    std::to_string(line_no) + ")");
    try {
      r.seed = std::stoll(f[3]);
    } catch (const std::exception&) {
      throw Error(Errc::format, "bad seed on CSV line " + std::to_string(line_no));
    }
    r.src_lang = f[4];
    r.tgt_lang = f[5];
    r.task = f[6];
    r.eval_side = parse_side(f[7]);
    r.metric = f[8];
    r.value = parse_real(f[9], line_no);
    if (!f[10].empty()) r.normalized = parse_real(f[10], line_no);
    out.push_back(std::move(r));
  }
  if (!header_seen) throw Error(Errc::format, "CSV is empty");
  return out;
}

std::string emit_line_plot(const LinePlotSpec& spec) {
  if (spec.series.empty()) throw Error(Errc::argument, "line plot needs at least one series");
  double x_lo = spec.x_ticks.empty() ? 0.0 : spec.x_ticks.front();
  double x_hi = spec.x_ticks.empty() ? 1.0 : spec.x_ticks.back();
  double y_lo = INFINITY, y_hi = -INFINITY;
  for (const auto& s : spec.series) {
    if (s.x.empty() || s.x.size() != s.mean.size() || s.x.size() != s.ci95.size())
      throw Error(Errc::argument, "series '" + s.label + "' has mismatched or empty columns");
    if (!std::is_sorted(s.x.begin(), s.x.end()))
      throw Error(Errc::argument, "series '" + s.label + "' x values are not ascending");
    x_lo = std::min(x_lo, s.x.front());
    x_hi = std::max(x_hi, s.x.back());
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      y_lo = std::min(y_lo, s.mean[i] - s.ci95[i]);
      y_hi = std::max(y_hi, s.mean[i] + s.ci95[i]);
    }
  }
  if (!std::isfinite(y_lo) || !std::isfinite(y_hi))
    throw Error(Errc::argument, "line plot values must be finite");
  if (y_hi - y_lo < 1e-9) {
    y_lo -= 0.5;
    y_hi += 0.5;
  }
  const double pad = 0.05 * (y_hi - y_lo);
  y_lo -= pad;
  y_hi += pad;
  if (x_hi <= x_lo) x_hi = x_lo + 1.0;

  constexpr double W = 640, H = 420, L = 70, R = 150, T = 40, B = 60;
  auto sx = [&](double x) { return L + (x - x_lo) / (x_hi - x_lo) * (W - L - R); };
  auto sy = [&](double y) { return H - B - (y - y_lo) / (y_hi - y_lo) * (H - T - B); };

  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << W << "\" height=\""
    << H << "\" viewBox=\"0 0 " << W << " " << H << "\">\n"
    << "<title>" << xml_escape(spec.title) << "</title>\n"
    << "<rect class=\"background\" x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H
    << "\" fill=\"white\"/>\n"
    << "<text x=\"" << px(W / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
    << xml_escape(spec.title) << "</text>\n";

  // axes
  o << "<g class=\"axes\" stroke=\"black\" stroke-width=\"1\">\n"
    << "<line x1=\"" << px(L) << "\" y1=\"" << px(H - B) << "\" x2=\"" << px(W - R) << "\" y2=\""
    << px(H - B) << "\"/>\n"
    << "<line x1=\"" << px(L) << "\" y1=\"" << px(T) << "\" x2=\"" << px(L) << "\" y2=\""
    << px(H - B) << "\"/>\n";
  for (double t : spec.x_ticks)
    o << "<line x1=\"" << px(sx(t)) << "\" y1=\"" << px(H - B) << "\" x2=\"" << px(sx(t))
      << "\" y2=\"" << px(H - B + 5) << "\"/>\n";
  const int y_ticks = 5;
  for (int i = 0; i <= y_ticks; ++i) {
    const double v = y_lo + (y_hi - y_lo) * i / y_ticks;
    o << "<line x1=\"" << px(L - 5) << "\" y1=\"" << px(sy(v)) << "\" x2=\"" << px(L)
      << "\" y2=\"" << px(sy(v)) << "\"/>\n";
  }
  o << "</g>\n<g class=\"tick-labels\" font-size=\"11\">\n";
  for (double t : spec.x_ticks)
    o << "<text x=\"" << px(sx(t)) << "\" y=\"" << px(H - B + 18)
      << "\" text-anchor=\"middle\">" << num9(t) << "</text>\n";
  for (int i = 0; i <= y_ticks; ++i) {
    const double v = y_lo + (y_hi - y_lo) * i / y_ticks;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    o << "<text x=\"" << px(L - 8) << "\" y=\"" << px(sy(v) + 4) << "\" text-anchor=\"end\">"
      << buf << "</text>\n";
  }
  o << "</g>\n"
    << "<text x=\"" << px((L + W - R) / 2) << "\" y=\"" << px(H - 16)
    << "\" text-anchor=\"middle\" font-size=\"13\">" << xml_escape(spec.x_label) << "</text>\n"
    << "<text x=\"18\" y=\"" << px((T + H - B) / 2) << "\" text-anchor=\"middle\" font-size=\"13\" "
    << "transform=\"rotate(-90 18 " << px((T + H - B) / 2) << ")\">" << xml_escape(spec.y_label)
    << "</text>\n";

  for (const auto& s : spec.series) {
    const char* color = palette(s.color);
    o << "<polygon class=\"band\" fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i)
      o << (i ? " " : "") << px(sx(s.x[i])) << "," << px(sy(s.mean[i] + s.ci95[i]));
    for (std::size_t i = s.x.size(); i-- > 0;)
      o << " " << px(sx(s.x[i])) << "," << px(sy(s.mean[i] - s.ci95[i]));
    o << "\"/>\n";
    o << "<polyline class=\"series\" fill=\"none\" stroke=\"" << color
      << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i)
      o << (i ? " " : "") << px(sx(s.x[i])) << "," << px(sy(s.mean[i]));
    o << "\"/>\n";
  }

  o << "<g class=\"legend\" font-size=\"12\">\n";
  for (std::size_t i = 0; i < spec.series.size(); ++i) {
    const double y = T + 10 + 20.0 * double(i);
    o << "<rect x=\"" << px(W - R + 15) << "\" y=\"" << px(y - 6) << "\" width=\"18\" height=\"4\" fill=\""
      << palette(spec.series[i].color) << "\"/>\n"
      << "<text x=\"" << px(W - R + 40) << "\" y=\"" << px(y) << "\">"
      << xml_escape(spec.series[i].label) << "</text>\n";
  }
  o << "</g>\n</svg>\n";
  return o.str();
}

LinePlotSpec line_plot_from_aggregates(std::span<const AggregateRecord> aggregates,
                                       std::string_view group, std::string title) {
  LinePlotSpec spec;
  spec.title = std::move(title);
  for (Side side : {Side::source, Side::target}) {
    std::vector<const AggregateRecord*> pts;
    for (const auto& a : aggregates)
      if (a.kind == GridKind::one_d && a.group == group && a.eval_side == side) pts.push_back(&a);
    if (pts.empty()) continue;
    std::sort(pts.begin(), pts.end(),
              [](const auto* a, const auto* b) { return a->alpha1 < b->alpha1; });
    LineSeries s;
    s.label = std::string(to_string(side));
    s.color = side == Side::source ? 0 : 1;
    for (const auto* p : pts) {
      s.x.push_back(p->alpha1);
      s.mean.push_back(p->mean);
      s.ci95.push_back(p->ci95);
    }
    spec.series.push_back(std::move(s));
  }
  if (spec.series.empty())
    throw Error(Errc::argument, "no 1d aggregates for group '" + std::string(group) + "'");
  return spec;
}

std::string ramp_color(double value, double lo, double hi) {
  double t = (value - lo) / (hi - lo);
  if (!(t > 0.0)) t = 0.0;
  if (t > 1.0) t = 1.0;
  char buf[8];
  int c[3];
  for (int i = 0; i < 3; ++i)
    c[i] = int(std::lround(kRampLo[i] + t * (kRampHi[i] - kRampLo[i])));
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c[0], c[1], c[2]);
  return buf;
}

std::string emit_heatmap(const HeatmapSpec& spec) {
  const Surface& s = spec.surface;
  const std::size_t nx = s.alpha1s.size(), ny = s.alpha2s.size();
  if (nx == 0 || ny == 0 || s.values.size() != nx * ny)
    throw Error(Errc::incomplete_grid, "heatmap values do not fill the grid");
  if (!std::isfinite(spec.lo) || !std::isfinite(spec.hi) || !(spec.lo < spec.hi))
    throw Error(Errc::argument, "heatmap color bounds must be finite with lo < hi");

  constexpr double W = 620, H = 560, L = 70, T = 50, plot = 420;
  const double cw = plot / double(nx), ch = plot / double(ny);
  // Cell (i, j) is centred on (alpha1s[i], alpha2s[j]); alpha2 grows upward.
  auto cx = [&](std::size_t i) { return L + cw * double(i); };
  auto cy = [&](std::size_t j) { return T + plot - ch * double(j + 1); };
  auto locate = [&](double a1, double a2) -> std::pair<double, double> {
    auto frac = [](const std::vector<double>& axis, double v) {
      if (axis.size() == 1) return 0.5;
      const double pos = (v - axis.front()) / (axis.back() - axis.front()) * double(axis.size() - 1);
      return pos + 0.5;
    };
    return {L + frac(s.alpha1s, a1) * cw, T + plot - frac(s.alpha2s, a2) * ch};
  };

  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << W << "\" height=\""
    << H << "\" viewBox=\"0 0 " << W << " " << H << "\">\n"
    << "<title>" << xml_escape(spec.title) << "</title>\n"
    << "<defs><linearGradient id=\"ramp\" x1=\"0\" y1=\"1\" x2=\"0\" y2=\"0\">"
    << "<stop offset=\"0\" stop-color=\"" << ramp_color(0, 0, 1) << "\"/>"
    << "<stop offset=\"1\" stop-color=\"" << ramp_color(1, 0, 1) << "\"/>"
    << "</linearGradient></defs>\n"
    << "<text x=\"" << px(L + plot / 2) << "\" y=\"28\" text-anchor=\"middle\" font-size=\"16\">"
    << xml_escape(spec.title) << "</text>\n<g class=\"cells\">\n";
  for (std::size_t i = 0; i < nx; ++i)
    for (std::size_t j = 0; j < ny; ++j)
      o << "<rect class=\"cell\" x=\"" << px(cx(i)) << "\" y=\"" << px(cy(j)) << "\" width=\""
        << px(cw) << "\" height=\"" << px(ch) << "\" fill=\""
        << ramp_color(s.at(i, j), spec.lo, spec.hi) << "\"><title>" << num9(s.alpha1s[i]) << ","
        << num9(s.alpha2s[j]) << ": " << num9(s.at(i, j)) << "</title></rect>\n";
  o << "</g>\n";

  o << "<g class=\"axes\" font-size=\"11\">\n";
  for (double t : {-0.5, 0.0, 0.5, 1.0, 1.5}) {
    if (t < s.alpha1s.front() - 1e-9 || t > s.alpha1s.back() + 1e-9) continue;
    const auto [x, _] = locate(t, s.alpha2s.front());
    o << "<text x=\"" << px(x) << "\" y=\"" << px(T + plot + 16) << "\" text-anchor=\"middle\">"
      << num9(t) << "</text>\n";
  }
  for (double t : {-0.5, 0.0, 0.5, 1.0, 1.5}) {
    if (t < s.alpha2s.front() - 1e-9 || t > s.alpha2s.back() + 1e-9) continue;
    const auto [_, y] = locate(s.alpha1s.front(), t);
    o << "<text x=\"" << px(L - 6) << "\" y=\"" << px(y + 4) << "\" text-anchor=\"end\">" << num9(t)
      << "</text>\n";
  }
  o << "<text x=\"" << px(L + plot / 2) << "\" y=\"" << px(T + plot + 40)
    << "\" text-anchor=\"middle\" font-size=\"13\">alpha1 (source direction)</text>\n"
    << "<text x=\"20\" y=\"" << px(T + plot / 2) << "\" text-anchor=\"middle\" font-size=\"13\" "
    << "transform=\"rotate(-90 20 " << px(T + plot / 2) << ")\">alpha2 (target direction)</text>\n"
    << "</g>\n";

  o << "<g class=\"models\" font-size=\"11\">\n";
  const std::pair<const char*, std::pair<double, double>> models[] = {
      {"bilingual", {0.0, 0.0}}, {"source", {1.0, 0.0}}, {"target", {0.0, 1.0}}};
  for (const auto& [label, at] : models) {
    const auto [x, y] = locate(at.first, at.second);
    o << "<circle cx=\"" << px(x) << "\" cy=\"" << px(y)
      << "\" r=\"4\" fill=\"white\" stroke=\"black\"/>\n"
      << "<text x=\"" << px(x + 6) << "\" y=\"" << px(y - 6) << "\" fill=\"white\">" << label
      << "</text>\n";
  }
  o << "</g>\n";

  const double bx = L + plot + 30;
  o << "<g class=\"colorbar\" font-size=\"11\">\n"
    << "<rect x=\"" << px(bx) << "\" y=\"" << px(T) << "\" width=\"20\" height=\"" << px(plot)
    << "\" fill=\"url(#ramp)\" stroke=\"black\"/>\n"
    << "<text x=\"" << px(bx + 26) << "\" y=\"" << px(T + 8) << "\">" << num9(spec.hi)
    << "</text>\n"
    << "<text x=\"" << px(bx + 26) << "\" y=\"" << px(T + plot) << "\">" << num9(spec.lo)
    << "</text>\n</g>\n</svg>\n";
  return o.str();
}

HeatmapSpec heatmap_from_aggregates(std::span<const AggregateRecord> aggregates, Side side,
                                    std::string_view group, std::string title) {
  HeatmapSpec spec;
  spec.title = std::move(title);
  std::vector<AggregateRecord> two_d;
  for (const auto& a : aggregates)
    if (a.kind == GridKind::two_d) two_d.push_back(a);
  spec.surface = surface_from_aggregates(two_d, side, group);
  const auto [mn, mx] = std::minmax_element(spec.surface.values.begin(), spec.surface.values.end());
  spec.lo = *mn;
  spec.hi = *mx;
  if (!(spec.lo < spec.hi)) {
    spec.lo -= 0.5;
    spec.hi += 0.5;
  }
  return spec;
}

}  // namespace wsi
