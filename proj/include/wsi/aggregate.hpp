#pragma once

// Normalization by the matching bilingual run, seed/pair/task aggregation
// with Student-t confidence intervals, variance profiles and surface
// flatness.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wsi/grid_eval.hpp"

namespace wsi {

/// per_pair: one group per (language pair, task), samples are seeds.
/// per_task: one group per task, samples are seeds x pairs.
/// pooled:   a single group, samples are seeds x pairs x tasks.
enum class Scope { per_pair, per_task, pooled };

std::string_view to_string(Scope scope);
Scope parse_scope(std::string_view text);

struct AggregateRecord {
  GridKind kind = GridKind::one_d;
  double alpha1 = 0.0;
  std::optional<double> alpha2;
  Side eval_side = Side::source;
  std::string group;
  std::size_t n = 0;
  double mean = 0.0;
  double var = 0.0;
  double ci95 = 0.0;

  friend bool operator==(const AggregateRecord&, const AggregateRecord&) = default;
};

struct AggregateSet {
  GridKind kind = GridKind::one_d;
  Scope scope = Scope::pooled;
  std::vector<AggregateRecord> points;
};

/// Divides every value by the value of its reference record: same kind, pair,
/// task, seed, side and metric at alpha = 1 (1D) or (0, 0) (2D).
std::vector<EvaluationRecord> normalize_by_reference(std::vector<EvaluationRecord> records);

/// Two-sided Student-t quantile t(p, dof).
double student_t_quantile(double p, double dof);

struct SampleStats {
  std::size_t n = 0;
  double mean = 0.0;
  double var = 0.0;
  double ci95 = 0.0;
};

/// Mean, unbiased variance and t(0.975, n-1) * s / sqrt(n). Summation runs
/// over the sorted samples so the result does not depend on input order.
SampleStats sample_stats(std::vector<double> samples);

/// Groups normalized records by scope and coordinate. Every record must carry
/// a normalized value. Output is sorted by (group, kind, alpha1, alpha2, side).
std::vector<AggregateRecord> aggregate_records(std::span<const EvaluationRecord> normalized,
                                               Scope scope);

std::string group_tag(const EvaluationRecord& r, Scope scope);

struct VariancePoint {
  double alpha1 = 0.0;
  std::optional<double> alpha2;
  double var_source = 0.0;
  double var_target = 0.0;
};

/// Sample variance of the normalized metric per coordinate and side. The
/// caller selects the records (typically one pair, task and kind).
std::vector<VariancePoint> variance_profile(std::span<const EvaluationRecord> normalized);

/// Rectangular surface, row-major with alpha1 outer.
struct Surface {
  std::vector<double> alpha1s;
  std::vector<double> alpha2s;
  std::vector<double> values;

  double at(std::size_t i, std::size_t j) const { return values[i * alpha2s.size() + j]; }
};

Surface surface_from_aggregates(std::span<const AggregateRecord> aggregates, Side side,
                                std::string_view group);
/// Uses normalized values when present, raw values otherwise.
Surface surface_from_records(std::span<const EvaluationRecord> records, Side side);

/// The (2 * radius + 1)^2 window centred on the grid point nearest (alpha1,
/// alpha2), clipped at the grid border.
Surface neighborhood(const Surface& surface, double alpha1, double alpha2, std::size_t radius = 1);

/// Mean |difference| over horizontally and vertically adjacent cells.
double flatness_score(const Surface& surface);

/// Spearman rank correlation with average ranks for ties.
double spearman_correlation(std::span<const double> x, std::span<const double> y);

std::string aggregates_to_json(const AggregateSet& set);
std::string aggregates_to_json(std::span<const AggregateSet> sets);
/// Accepts a single aggregate object or an array of them.
std::vector<AggregateSet> aggregates_from_json(std::string_view text);

}  // namespace wsi
