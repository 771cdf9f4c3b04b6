#pragma once

// Text artifacts: record CSV, SVG line plots with confidence bands, and SVG
// heatmaps of 2D surfaces. Output is a pure function of the input.

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wsi/aggregate.hpp"
#include "wsi/grid_eval.hpp"

namespace wsi {

inline constexpr std::string_view kCsvHeader =
    "kind,alpha1,alpha2,seed,src_lang,tgt_lang,task,eval_side,metric,value,normalized";

/// Header plus one row per record, sorted with record_less. Reals use 9
/// significant digits; absent alpha2/normalized leave the field empty.
std::string emit_records_csv(std::span<const EvaluationRecord> records);
std::vector<EvaluationRecord> parse_records_csv(std::string_view text);

struct LineSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> mean;
  std::vector<double> ci95;
  int color = 0;
};

struct LinePlotSpec {
  std::string title;
  std::string x_label = "alpha";
  std::string y_label = "normalized performance";
  std::vector<LineSeries> series;
  std::vector<double> x_ticks = {-0.5, 0.0, 0.5, 1.0, 1.5};
};

/// One polyline and one mean +/- ci95 band polygon per series.
std::string emit_line_plot(const LinePlotSpec& spec);

/// Source and target series for one aggregate group.
LinePlotSpec line_plot_from_aggregates(std::span<const AggregateRecord> aggregates,
                                       std::string_view group, std::string title);

struct HeatmapSpec {
  std::string title;
  Surface surface;
  double lo = 0.0;
  double hi = 1.0;
};

/// Fill color for `value` on the linear ramp from kRampLo (at lo) to kRampHi
/// (at hi), clamped to the ends. Returned as "#rrggbb".
std::string ramp_color(double value, double lo, double hi);
inline constexpr int kRampLo[3] = {68, 1, 84};
inline constexpr int kRampHi[3] = {253, 231, 37};

/// One rect per grid cell (alpha1 along x, alpha2 along y), a color bar and
/// markers for the bilingual (0,0), source (1,0) and target (0,1) models.
std::string emit_heatmap(const HeatmapSpec& spec);

/// Color bounds are the surface min and max (widened by 0.5 each way for a
/// constant surface).
HeatmapSpec heatmap_from_aggregates(std::span<const AggregateRecord> aggregates, Side side,
                                    std::string_view group, std::string title);

}  // namespace wsi
