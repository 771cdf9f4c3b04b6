#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "wsi/interp_core.hpp"
#include "wsi/tensor_store.hpp"

namespace wsi {

enum class GridKind { one_d, two_d };
enum class Side { source, target };

std::string_view to_string(GridKind kind);
std::string_view to_string(Side side);
GridKind parse_grid_kind(std::string_view text);
Side parse_side(std::string_view text);

/// The extra 1D coefficients added near both endpoints of the default sweep.
std::vector<double> default_extra_points();

struct GridSpec {
  GridKind kind = GridKind::one_d;
  double base_step = 0.1;
  double lo = -0.5;
  double hi = 1.5;
  std::vector<double> extra_points = default_extra_points();

  static GridSpec default_1d() { return {}; }
  static GridSpec default_2d() { return {GridKind::two_d, 0.1, -0.5, 1.5, {}}; }
};

void validate(const GridSpec& spec);

/// lo, lo+step, ..., hi. Each point is snapped to the nearest multiple of 1e-9
/// so that decimal grid values (0.5, 1.0, ...) come out as the exact doubles.
std::vector<double> base_points(const GridSpec& spec);
/// Base points plus extra points, sorted, duplicates (within 1e-9) removed.
std::vector<double> build_grid_1d(const GridSpec& spec);
/// Base points crossed with themselves, alpha1 outer.
std::vector<std::pair<double, double>> build_grid_2d(const GridSpec& spec);

struct EvaluationRecord {
  GridKind kind = GridKind::one_d;
  double alpha1 = 0.0;
  std::optional<double> alpha2;
  std::int64_t seed = 0;
  std::string src_lang;
  std::string tgt_lang;
  std::string task;
  Side eval_side = Side::source;
  std::string metric;
  double value = 0.0;
  std::optional<double> normalized;

  friend bool operator==(const EvaluationRecord&, const EvaluationRecord&) = default;
};

/// Sort order used for every emitted record list.
bool record_less(const EvaluationRecord& a, const EvaluationRecord& b);
void sort_records(std::vector<EvaluationRecord>& records);

struct EvaluatorBinding {
  /// Must be deterministic and safe to call concurrently.
  std::function<double(const ParameterSet&, const std::string& dataset)> evaluate;
  std::string source_dataset;
  std::string target_dataset;
  std::string metric;
};

struct RecordTags {
  std::string src_lang = "src";
  std::string tgt_lang = "tgt";
  std::string task = "toy";
  std::int64_t seed = 0;
};

/// Persistent map from evaluation keys to metric values. One JSON file per key
/// under `dir`; with no directory the cache lives in memory only.
class ResultCache {
 public:
  explicit ResultCache(std::optional<std::filesystem::path> dir = std::nullopt);

  std::optional<double> lookup(const std::string& key);
  void insert(const std::string& key, double value);

  std::size_t hits() const;
  std::size_t misses() const;

 private:
  std::filesystem::path file_for(const std::string& key) const;

  std::optional<std::filesystem::path> dir_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, double> memory_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

/// Exact key: coefficients are rendered as hex floats, so values differing in
/// the last bit give different keys.
std::string cache_key(std::span<const std::string> endpoint_ids, std::span<const double> coords,
                      Subset subset, std::string_view dataset_id);

struct EvalOptions {
  Subset subset = Subset::all;
  ResultCache* cache = nullptr;
  /// 0 picks std::thread::hardware_concurrency().
  unsigned threads = 0;
  /// Filter-wise direction normalization for the 2D plane.
  bool normalize_directions = false;
};

/// Two records (source and target side) per alpha on the line
/// alpha * theta1 + (1 - alpha) * theta0.
std::vector<EvaluationRecord> evaluate_grid_1d(const ParameterSet& theta0,
                                               const ParameterSet& theta1,
                                               std::span<const double> grid,
                                               const EvaluatorBinding& binding,
                                               const RecordTags& tags,
                                               const EvalOptions& options = {});

/// Two records per (alpha1, alpha2) on the plane
/// theta_bi + alpha1 * (theta_src - theta_bi) + alpha2 * (theta_tgt - theta_bi).
std::vector<EvaluationRecord> evaluate_grid_2d(const ParameterSet& theta_bi,
                                               const ParameterSet& theta_src,
                                               const ParameterSet& theta_tgt,
                                               std::span<const std::pair<double, double>> grid,
                                               const EvaluatorBinding& binding,
                                               const RecordTags& tags,
                                               const EvalOptions& options = {});

}  // namespace wsi
