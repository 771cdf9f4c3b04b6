#include "wsi/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <tuple>

#include <boost/math/distributions/students_t.hpp>

#include "json.hpp"
#include "wsi/error.hpp"

namespace wsi {

using json = nlohmann::json;

namespace {

bool is_reference(const EvaluationRecord& r) {
  if (r.kind == GridKind::one_d) return r.alpha1 == 1.0;
  return r.alpha1 == 0.0 && r.alpha2.value_or(0.0) == 0.0;
}

using RunKey = std::tuple<GridKind, std::string, std::string, std::string, std::int64_t, Side,
                          std::string>;

RunKey run_key(const EvaluationRecord& r) {
  return {r.kind, r.src_lang, r.tgt_lang, r.task, r.seed, r.eval_side, r.metric};
}

std::string describe(const RunKey& k) {
  return std::string(to_string(std::get<0>(k))) + " " + std::get<1>(k) + "-" + std::get<2>(k) +
         " task=" + std::get<3>(k) + " seed=" + std::to_string(std::get<4>(k)) +
         " side=" + std::string(to_string(std::get<5>(k)));
}

std::vector<double> sorted_unique(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

Surface assemble(std::map<std::pair<double, double>, double> cells) {
  Surface s;
  std::vector<double> a1, a2;
  for (const auto& [k, _] : cells) {
    a1.push_back(k.first);
    a2.push_back(k.second);
  }
  s.alpha1s = sorted_unique(std::move(a1));
  s.alpha2s = sorted_unique(std::move(a2));
  if (s.alpha1s.empty() || cells.size() != s.alpha1s.size() * s.alpha2s.size())
    throw Error(Errc::incomplete_grid, "surface has " + std::to_string(cells.size()) +
                                           " cells for a " + std::to_string(s.alpha1s.size()) +
                                           " x " + std::to_string(s.alpha2s.size()) + " grid");
  for (double x : s.alpha1s)
    for (double y : s.alpha2s) s.values.push_back(cells.at({x, y}));
  return s;
}

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * double(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

json to_json(const AggregateSet& set) {
  json points = json::array();
  for (const auto& p : set.points) {
    json q = {{"group", p.group},
              {"alpha1", p.alpha1},
              {"alpha2", p.alpha2 ? json(*p.alpha2) : json(nullptr)},
              {"side", to_string(p.eval_side)},
              {"n", p.n},
              {"mean", p.mean},
              {"var", p.var},
              {"ci95", p.ci95}};
    points.push_back(std::move(q));
  }
  return {{"kind", to_string(set.kind)}, {"scope", to_string(set.scope)}, {"points", points}};
}

AggregateSet from_json(const json& j) {
  AggregateSet set;
  set.kind = parse_grid_kind(j.at("kind").get<std::string>());
  set.scope = parse_scope(j.at("scope").get<std::string>());
  for (const auto& q : j.at("points")) {
    AggregateRecord p;
    p.kind = set.kind;
    p.group = q.value("group", std::string(to_string(set.scope)));
    p.alpha1 = q.at("alpha1").get<double>();
    if (q.contains("alpha2") && !q["alpha2"].is_null()) p.alpha2 = q["alpha2"].get<double>();
    p.eval_side = parse_side(q.at("side").get<std::string>());
    p.n = q.at("n").get<std::size_t>();
    p.mean = q.at("mean").get<double>();
    p.var = q.at("var").get<double>();
    p.ci95 = q.at("ci95").get<double>();
    set.points.push_back(std::move(p));
  }
  return set;
}

}  // namespace

std::string_view to_string(Scope scope) {
  switch (scope) {
    case Scope::per_pair: return "per_pair";
    case Scope::per_task: return "per_task";
    case Scope::pooled: return "pooled";
  }
  return "pooled";
}

Scope parse_scope(std::string_view text) {
  if (text == "per_pair") return Scope::per_pair;
  if (text == "per_task") return Scope::per_task;
  if (text == "pooled") return Scope::pooled;
  throw Error(Errc::argument, "unknown scope '" + std::string(text) + "'");
}

std::vector<EvaluationRecord> normalize_by_reference(std::vector<EvaluationRecord> records) {
  std::map<RunKey, double> reference;
  for (const auto& r : records)
    if (is_reference(r)) reference.emplace(run_key(r), r.value);
  for (auto& r : records) {
    const RunKey key = run_key(r);
    auto it = reference.find(key);
    if (it == reference.end())
      throw Error(Errc::missing_reference, "no bilingual reference record for " + describe(key));
    if (!(it->second > 0.0))
      throw Error(Errc::degenerate_reference,
                  "reference value " + std::to_string(it->second) + " for " + describe(key));
    r.normalized = r.value / it->second;
  }
  return records;
}

double student_t_quantile(double p, double dof) {
  boost::math::students_t dist(dof);
  return boost::math::quantile(dist, p);
}

SampleStats sample_stats(std::vector<double> samples) {
  if (samples.empty()) throw Error(Errc::empty_group, "no samples");
  std::sort(samples.begin(), samples.end());
  SampleStats s;
  s.n = samples.size();
  double sum = 0.0;
  for (double v : samples) sum += v;
  s.mean = sum / double(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : samples) ss += (v - s.mean) * (v - s.mean);
    s.var = ss / double(s.n - 1);
    s.ci95 = student_t_quantile(0.975, double(s.n - 1)) * std::sqrt(s.var / double(s.n));
  }
  return s;
}

std::string group_tag(const EvaluationRecord& r, Scope scope) {
  switch (scope) {
    case Scope::per_pair: return r.src_lang + "-" + r.tgt_lang + "/" + r.task;
    case Scope::per_task: return r.task;
    case Scope::pooled: return "pooled";
  }
  return "pooled";
}

std::vector<AggregateRecord> aggregate_records(std::span<const EvaluationRecord> normalized,
                                               Scope scope) {
  if (normalized.empty()) throw Error(Errc::empty_group, "no records to aggregate");
  using Key = std::tuple<std::string, GridKind, double, bool, double, Side>;
  std::map<Key, std::vector<double>> groups;
  for (const auto& r : normalized) {
    if (!r.normalized)
      throw Error(Errc::argument, "record at alpha=" + std::to_string(r.alpha1) +
                                      " has no normalized value");
    groups[{group_tag(r, scope), r.kind, r.alpha1, r.alpha2.has_value(), r.alpha2.value_or(0.0),
            r.eval_side}]
        .push_back(*r.normalized);
  }
  std::vector<AggregateRecord> out;
  out.reserve(groups.size());
  for (auto& [key, values] : groups) {
    const SampleStats s = sample_stats(std::move(values));
    AggregateRecord a;
    a.group = std::get<0>(key);
    a.kind = std::get<1>(key);
    a.alpha1 = std::get<2>(key);
    if (std::get<3>(key)) a.alpha2 = std::get<4>(key);
    a.eval_side = std::get<5>(key);
    a.n = s.n;
    a.mean = s.mean;
    a.var = s.var;
    a.ci95 = s.ci95;
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<VariancePoint> variance_profile(std::span<const EvaluationRecord> normalized) {
  std::map<std::tuple<double, bool, double>, std::pair<std::vector<double>, std::vector<double>>>
      by_coord;
  for (const auto& r : normalized) {
    auto& slot = by_coord[{r.alpha1, r.alpha2.has_value(), r.alpha2.value_or(0.0)}];
    (r.eval_side == Side::source ? slot.first : slot.second)
        .push_back(r.normalized.value_or(r.value));
  }
  std::vector<VariancePoint> out;
  for (auto& [coord, sides] : by_coord) {
    if (sides.first.size() < 2 || sides.second.size() < 2)
      throw Error(Errc::insufficient_seeds,
                  "variance at alpha=" + std::to_string(std::get<0>(coord)) +
                      " needs at least two samples per side");
    VariancePoint p;
    p.alpha1 = std::get<0>(coord);
    if (std::get<1>(coord)) p.alpha2 = std::get<2>(coord);
    p.var_source = sample_stats(std::move(sides.first)).var;
    p.var_target = sample_stats(std::move(sides.second)).var;
    out.push_back(p);
  }
  return out;
}

Surface surface_from_aggregates(std::span<const AggregateRecord> aggregates, Side side,
                                std::string_view group) {
  std::map<std::pair<double, double>, double> cells;
  for (const auto& a : aggregates) {
    if (a.eval_side != side || a.group != group) continue;
    cells[{a.alpha1, a.alpha2.value_or(0.0)}] = a.mean;
  }
  return assemble(std::move(cells));
}

Surface surface_from_records(std::span<const EvaluationRecord> records, Side side) {
  std::map<std::pair<double, double>, double> cells;
  for (const auto& r : records) {
    if (r.eval_side != side) continue;
    auto [it, inserted] =
        cells.try_emplace({r.alpha1, r.alpha2.value_or(0.0)}, r.normalized.value_or(r.value));
    if (!inserted)
      throw Error(Errc::argument, "duplicate surface cell at alpha1=" + std::to_string(r.alpha1));
  }
  return assemble(std::move(cells));
}

Surface neighborhood(const Surface& surface, double alpha1, double alpha2, std::size_t radius) {
  auto nearest = [](const std::vector<double>& axis, double x) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < axis.size(); ++i)
      if (std::abs(axis[i] - x) < std::abs(axis[best] - x)) best = i;
    return best;
  };
  if (surface.values.empty()) throw Error(Errc::incomplete_grid, "empty surface");
  const std::size_t ci = nearest(surface.alpha1s, alpha1);
  const std::size_t cj = nearest(surface.alpha2s, alpha2);
  const std::size_t i0 = ci >= radius ? ci - radius : 0;
  const std::size_t j0 = cj >= radius ? cj - radius : 0;
  const std::size_t i1 = std::min(surface.alpha1s.size() - 1, ci + radius);
  const std::size_t j1 = std::min(surface.alpha2s.size() - 1, cj + radius);
  Surface out;
  for (std::size_t i = i0; i <= i1; ++i) out.alpha1s.push_back(surface.alpha1s[i]);
  for (std::size_t j = j0; j <= j1; ++j) out.alpha2s.push_back(surface.alpha2s[j]);
  for (std::size_t i = i0; i <= i1; ++i)
    for (std::size_t j = j0; j <= j1; ++j) out.values.push_back(surface.at(i, j));
  return out;
}

double flatness_score(const Surface& surface) {
  const std::size_t rows = surface.alpha1s.size();
  const std::size_t cols = surface.alpha2s.size();
  if (rows == 0 || cols == 0 || surface.values.size() != rows * cols)
    throw Error(Errc::incomplete_grid, "surface values do not fill the grid");
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      if (j + 1 < cols) {
        total += std::abs(surface.at(i, j + 1) - surface.at(i, j));
        ++pairs;
      }
      if (i + 1 < rows) {
        total += std::abs(surface.at(i + 1, j) - surface.at(i, j));
        ++pairs;
      }
    }
  return pairs == 0 ? 0.0 : total / double(pairs);
}

double spearman_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw Error(Errc::argument, "spearman needs two equal-length series of length >= 2");
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double n = double(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

std::string aggregates_to_json(const AggregateSet& set) { return to_json(set).dump(2) + "\n"; }

std::string aggregates_to_json(std::span<const AggregateSet> sets) {
  json arr = json::array();
  for (const auto& s : sets) arr.push_back(to_json(s));
  return arr.dump(2) + "\n";
}

std::vector<AggregateSet> aggregates_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    std::vector<AggregateSet> out;
    if (j.is_array()) {
      for (const auto& item : j) out.push_back(from_json(item));
    } else {
      out.push_back(from_json(j));
    }
    return out;
  } catch (const json::exception& e) {
    throw Error(Errc::format, std::string("aggregate JSON: ") + e.what());
  }
}

}  // namespace wsi
