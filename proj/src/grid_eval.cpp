#include "wsi/grid_eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>
#include <functional>
#include <tuple>

#include "json.hpp"
#include "wsi/error.hpp"

namespace wsi {

using json = nlohmann::json;

namespace {

constexpr double kSnap = 1e9;
constexpr double kDupTol = 1e-9;

std::string hex_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

std::string fnv_hex(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Runs task(i) for i in [0, n) on a small worker pool. If any task throws,
// the exception from the lowest index is rethrown.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& task) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  std::vector<std::exception_ptr> errors(n);
  auto run_range = [&](std::size_t worker) {
    for (std::size_t i = worker; i < n; i += threads) {
      try {
        task(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    run_range(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < threads; ++w) pool.emplace_back(run_range, w);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct PointTask {
  double alpha1;
  std::optional<double> alpha2;
};

std::vector<EvaluationRecord> run_points(
    GridKind kind, const std::vector<PointTask>& points,
    const std::function<ParameterSet(const PointTask&)>& build_model,
    const std::vector<std::string>& endpoint_ids, const EvaluatorBinding& binding,
    const RecordTags& tags, const EvalOptions& options) {
  if (points.empty()) throw Error(Errc::argument, "grid is empty");
  if (!binding.evaluate) throw Error(Errc::argument, "evaluator binding has no function");

  std::vector<EvaluationRecord> records(2 * points.size());
  parallel_for(points.size(), options.threads, [&](std::size_t i) {
    const PointTask& p = points[i];
    std::vector<double> coords{p.alpha1};
    if (p.alpha2) coords.push_back(*p.alpha2);
    std::optional<ParameterSet> model;
    for (Side side : {Side::source, Side::target}) {
      const std::string& dataset =
          side == Side::source ? binding.source_dataset : binding.target_dataset;
      std::optional<double> value;
      std::string key;
      if (options.cache) {
        key = cache_key(endpoint_ids, coords, options.subset, dataset);
        value = options.cache->lookup(key);
      }
      if (!value) {
        try {
          if (!model) model = build_model(p);
          value = binding.evaluate(*model, dataset);
        } catch (const std::exception& e) {
          std::ostringstream where;
          where.precision(17);
          where << "evaluator failed at alpha=" << p.alpha1;
          if (p.alpha2) where << ", alpha2=" << *p.alpha2;
          where << " on " << dataset << ": " << e.what();
          throw Error(Errc::evaluation, where.str());
        }
        if (!std::isfinite(*value)) {
          std::ostringstream where;
          where.precision(17);
          where << "evaluator returned a non-finite value at alpha=" << p.alpha1;
          if (p.alpha2) where << ", alpha2=" << *p.alpha2;
          throw Error(Errc::evaluation, where.str());
        }
        if (options.cache) options.cache->insert(key, *value);
      }
      EvaluationRecord& r = records[2 * i + (side == Side::source ? 0 : 1)];
      r.kind = kind;
      r.alpha1 = p.alpha1;
      r.alpha2 = p.alpha2;
      r.seed = tags.seed;
      r.src_lang = tags.src_lang;
      r.tgt_lang = tags.tgt_lang;
      r.task = tags.task;
      r.eval_side = side;
      r.metric = binding.metric;
      r.value = *value;
    }
  });
  sort_records(records);
  return records;
}

}  // namespace

std::string_view to_string(GridKind kind) { return kind == GridKind::one_d ? "1d" : "2d"; }

std::string_view to_string(Side side) { return side == Side::source ? "source" : "target"; }

GridKind parse_grid_kind(std::string_view text) {
  if (text == "1d") return GridKind::one_d;
  if (text == "2d") return GridKind::two_d;
  throw Error(Errc::format, "unknown grid kind '" + std::string(text) + "'");
}

Side parse_side(std::string_view text) {
  if (text == "source") return Side::source;
  if (text == "target") return Side::target;
  throw Error(Errc::format, "unknown evaluation side '" + std::string(text) + "'");
}

std::vector<double> default_extra_points() {
  return {0.025, 0.05, 0.075, 0.125, 0.15, 0.175, 0.825, 0.85, 0.875, 0.925, 0.95, 0.975};
}

void validate(const GridSpec& spec) {
  if (!std::isfinite(spec.lo) || !std::isfinite(spec.hi) || !(spec.lo < spec.hi))
    throw Error(Errc::argument, "grid requires finite lo < hi");
  if (!std::isfinite(spec.base_step) || !(spec.base_step > 0.0))
    throw Error(Errc::argument, "grid step must be positive");
  for (double x : spec.extra_points)
    if (!std::isfinite(x) || x < spec.lo - kDupTol || x > spec.hi + kDupTol)
      throw Error(Errc::argument, "extra grid point outside [lo, hi]");
}

std::vector<double> base_points(const GridSpec& spec) {
  validate(spec);
  const auto steps = static_cast<std::size_t>(std::floor((spec.hi - spec.lo) / spec.base_step + kDupTol));
  std::vector<double> out;
  out.reserve(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i) {
    const double raw = spec.lo + static_cast<double>(i) * spec.base_step;
    out.push_back(std::round(raw * kSnap) / kSnap);
  }
  return out;
}

std::vector<double> build_grid_1d(const GridSpec& spec) {
  std::vector<double> pts = base_points(spec);
  pts.insert(pts.end(), spec.extra_points.begin(), spec.extra_points.end());
  std::sort(pts.begin(), pts.end());
  std::vector<double> out;
  for (double x : pts)
    if (out.empty() || x - out.back() > kDupTol) out.push_back(x);
  return out;
}

std::vector<std::pair<double, double>> build_grid_2d(const GridSpec& spec) {
  const std::vector<double> axis = base_points(spec);
  std::vector<std::pair<double, double>> out;
  out.reserve(axis.size() * axis.size());
  for (double a1 : axis)
    for (double a2 : axis) out.emplace_back(a1, a2);
  return out;
}

bool record_less(const EvaluationRecord& a, const EvaluationRecord& b) {
  auto key = [](const EvaluationRecord& r) {
    return std::make_tuple(r.kind, r.alpha1, r.alpha2.has_value(), r.alpha2.value_or(0.0),
                           r.seed, r.eval_side, r.src_lang, r.tgt_lang,
                           r.task, r.metric);
  };
  return key(a) < key(b);
}

void sort_records(std::vector<EvaluationRecord>& records) {
  std::stable_sort(records.begin(), records.end(), record_less);
}

ResultCache::ResultCache(std::optional<std::filesystem::path> dir) : dir_(std::move(dir)) {
  if (dir_) std::filesystem::create_directories(*dir_);
}

std::filesystem::path ResultCache::file_for(const std::string& key) const {
  return *dir_ / (fnv_hex(key) + ".json");
}

std::optional<double> ResultCache::lookup(const std::string& key) {
  std::lock_guard lock(mu_);
  if (auto it = memory_.find(key); it != memory_.end()) {
    ++hits_;
    return it->second;
  }
  if (dir_) {
    const auto path = file_for(key);
    if (std::filesystem::exists(path)) {
      try {
        std::ifstream in(path);
        const json entry = json::parse(in);
        if (entry.at("key").get<std::string>() == key) {
          const double v = entry.at("value").get<double>();
          memory_.emplace(key, v);
          ++hits_;
          return v;
        }
      } catch (const std::exception& e) {
        std::cerr << "warning: ignoring corrupt cache entry " << path.string() << ": "
                  << e.what() << "\n";
      }
    }
  }
  ++misses_;
  return std::nullopt;
}

void ResultCache::insert(const std::string& key, double value) {
  std::lock_guard lock(mu_);
  memory_[key] = value;
  if (dir_) {
    std::ofstream out(file_for(key), std::ios::trunc);
    out << json{{"key", key}, {"value", value}}.dump() << "\n";
    if (!out) std::cerr << "warning: could not write cache entry for " << key << "\n";
  }
}

std::size_t ResultCache::hits() const {
  std::lock_guard lock(mu_);
  return hits_;
}

std::size_t ResultCache::misses() const {
  std::lock_guard lock(mu_);
  return misses_;
}

std::string cache_key(std::span<const std::string> endpoint_ids, std::span<const double> coords,
                      Subset subset, std::string_view dataset_id) {
  std::string key;
  for (const auto& id : endpoint_ids) key += id + "|";
  for (double c : coords) key += hex_double(c) + "|";
  key += std::string(to_string(subset)) + "|";
  key += dataset_id;
  return key;
}

std::vector<EvaluationRecord> evaluate_grid_1d(const ParameterSet& theta0,
                                               const ParameterSet& theta1,
                                               std::span<const double> grid,
                                               const EvaluatorBinding& binding,
                                               const RecordTags& tags,
                                               const EvalOptions& options) {
  validate_compatibility(theta0, theta1);
  std::vector<PointTask> points;
  for (double a : grid) points.push_back({a, std::nullopt});
  std::vector<std::string> ids;
  if (options.cache) ids = {"1d", content_hash(theta0), content_hash(theta1)};
  return run_points(
      GridKind::one_d, points,
      [&](const PointTask& p) { return lerp_pair(theta0, theta1, p.alpha1, options.subset); },
      ids, binding, tags, options);
}

std::vector<EvaluationRecord> evaluate_grid_2d(const ParameterSet& theta_bi,
                                               const ParameterSet& theta_src,
                                               const ParameterSet& theta_tgt,
                                               std::span<const std::pair<double, double>> grid,
                                               const EvaluatorBinding& binding,
                                               const RecordTags& tags,
                                               const EvalOptions& options) {
  validate_compatibility(theta_bi, theta_src);
  validate_compatibility(theta_bi, theta_tgt);
  Delta d_src = compute_delta(theta_src, theta_bi, options.subset);
  Delta d_tgt = compute_delta(theta_tgt, theta_bi, options.subset);
  if (options.normalize_directions) {
    d_src = normalize_filterwise(d_src, theta_bi);
    d_tgt = normalize_filterwise(d_tgt, theta_bi);
  }
  std::vector<PointTask> points;
  for (const auto& [a1, a2] : grid) points.push_back({a1, a2});
  std::vector<std::string> ids;
  if (options.cache)
    ids = {options.normalize_directions ? "2d-normalized" : "2d", content_hash(theta_bi),
           content_hash(theta_src), content_hash(theta_tgt)};
  return run_points(
      GridKind::two_d, points,
      [&](const PointTask& p) { return plane_point(theta_bi, d_src, d_tgt, p.alpha1, *p.alpha2); },
      ids, binding, tags, options);
}

}  // namespace wsi
