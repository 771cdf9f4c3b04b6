#include <atomic>
#include <fstream>
#include <set>

#include "support.hpp"
#include "wsi/grid_eval.hpp"

using namespace wsi;
using wsi::testing::error_code_of;
using wsi::testing::vec;

namespace {

ParameterSet scalar_model(float w) {
  ParameterSet ps;
  ps.insert("encoder.w", vec({w}));
  ps.insert("head.w", vec({1.0f}));
  return ps;
}

// Score: source dataset reads encoder.w, target dataset reads 2 * encoder.w.
EvaluatorBinding linear_binding(std::atomic<int>* calls = nullptr) {
  EvaluatorBinding b;
  b.source_dataset = "dev-src";
  b.target_dataset = "dev-tgt";
  b.metric = "acc";
  b.evaluate = [calls](const ParameterSet& ps, const std::string& ds) {
    if (calls) ++*calls;
    const double w = ps.at("encoder.w").data[0];
    return ds == "dev-src" ? w : 2.0 * w;
  };
  return b;
}

}  // namespace

TEST_CASE("default 1D grid has 33 points with every extra") {
  const auto grid = build_grid_1d(GridSpec::default_1d());
  CHECK(grid.size() == 33);
  CHECK(std::is_sorted(grid.begin(), grid.end()));
  CHECK(grid.front() == -0.5);
  CHECK(grid.back() == 1.5);
  for (double x : {0.025, 0.05, 0.075, 0.125, 0.15, 0.175, 0.825, 0.85, 0.875, 0.925, 0.95, 0.975})
    CHECK(std::count(grid.begin(), grid.end(), x) == 1);
  for (double x : {0.0, 0.5, 1.0}) CHECK(std::count(grid.begin(), grid.end(), x) == 1);
}

TEST_CASE("arithmetic 1D grid and dedup") {
  GridSpec s;
  s.extra_points = {};
  s.lo = 0;
  s.hi = 1;
  s.base_step = 0.5;
  CHECK(build_grid_1d(s) == std::vector<double>{0.0, 0.5, 1.0});
  s.extra_points = {0.5, 0.25};
  CHECK(build_grid_1d(s) == std::vector<double>{0.0, 0.25, 0.5, 1.0});
}

TEST_CASE("invalid grid specs are argument errors") {
  GridSpec s;
  s.base_step = 0;
  CHECK(error_code_of([&] { build_grid_1d(s); }) == Errc::argument);
  s = GridSpec::default_2d();
  s.lo = 2;
  CHECK(error_code_of([&] { build_grid_2d(s); }) == Errc::argument);
}

TEST_CASE("default 2D grid has 441 points in row-major order") {
  const auto grid = build_grid_2d(GridSpec::default_2d());
  CHECK(grid.size() == 441);
  CHECK(grid.front() == std::pair{-0.5, -0.5});
  CHECK(grid[1] == std::pair{-0.5, -0.4});
  CHECK(grid.back() == std::pair{1.5, 1.5});
  GridSpec s = GridSpec::default_2d();
  s.lo = 0;
  s.hi = 1;
  s.base_step = 1;
  using P = std::pair<double, double>;
  CHECK(build_grid_2d(s) == std::vector<P>{{0, 0}, {0, 1}, {1, 0}, {1, 1}});
}

TEST_CASE("evaluate_grid_1d endpoint identity and record layout") {
  const ParameterSet a = scalar_model(0.25f), b = scalar_model(0.75f);
  const std::vector<double> grid{0.0, 1.0};
  RecordTags tags;
  tags.seed = 4;
  const auto recs = evaluate_grid_1d(a, b, grid, linear_binding(), tags);
  REQUIRE(recs.size() == 4);
  for (const auto& r : recs) {
    CHECK(r.kind == GridKind::one_d);
    CHECK_FALSE(r.alpha2.has_value());
    CHECK(r.seed == 4);
    CHECK(r.metric == "acc");
    const double w = r.alpha1 == 0.0 ? 0.25 : 0.75;
    CHECK(r.value == (r.eval_side == Side::source ? w : 2 * w));
  }
}

TEST_CASE("constant evaluator gives constant records") {
  EvaluatorBinding b = linear_binding();
  b.evaluate = [](const ParameterSet&, const std::string&) { return 0.5; };
  const auto grid = build_grid_1d(GridSpec::default_1d());
  const auto recs = evaluate_grid_1d(scalar_model(0), scalar_model(1), grid, b, {});
  CHECK(recs.size() == 66);
  for (const auto& r : recs) CHECK(r.value == 0.5);
}

TEST_CASE("evaluate_grid_2d corners and size") {
  const ParameterSet bi = scalar_model(0.5f), src = scalar_model(0.2f), tgt = scalar_model(0.9f);
  const auto grid = build_grid_2d(GridSpec::default_2d());
  const auto recs = evaluate_grid_2d(bi, src, tgt, grid, linear_binding(), {});
  CHECK(recs.size() == 882);
  auto value_at = [&](double a1, double a2, Side side) {
    for (const auto& r : recs)
      if (r.alpha1 == a1 && r.alpha2 == a2 && r.eval_side == side) return r.value;
    FAIL("point missing");
    return 0.0;
  };
  CHECK(value_at(0, 0, Side::source) == doctest::Approx(0.5));
  CHECK(value_at(1, 0, Side::source) == doctest::Approx(0.2));
  CHECK(value_at(0, 1, Side::target) == doctest::Approx(1.8));
}

TEST_CASE("records are sorted and independent of thread count") {
  const auto grid = build_grid_1d(GridSpec::default_1d());
  EvalOptions one, many;
  one.threads = 1;
  many.threads = 4;
  const auto r1 = evaluate_grid_1d(scalar_model(0), scalar_model(1), grid, linear_binding(), {}, one);
  const auto r4 = evaluate_grid_1d(scalar_model(0), scalar_model(1), grid, linear_binding(), {}, many);
  CHECK(r1 == r4);
  CHECK(std::is_sorted(r1.begin(), r1.end(), record_less));
}

TEST_CASE("cache avoids repeated evaluation") {
  ResultCache cache;
  EvalOptions opts;
  opts.cache = &cache;
  std::atomic<int> calls{0};
  const std::vector<double> grid{0.0, 0.5, 1.0};
  const auto first = evaluate_grid_1d(scalar_model(0), scalar_model(1), grid, linear_binding(&calls), {}, opts);
  CHECK(calls == 6);
  const auto second = evaluate_grid_1d(scalar_model(0), scalar_model(1), grid, linear_binding(&calls), {}, opts);
  CHECK(calls == 6);
  CHECK(first == second);
  CHECK(cache.hits() == 6);
}

TEST_CASE("cache keys are exact and subset-aware") {
  const std::vector<std::string> ids{"a", "b"};
  const std::vector<double> x{0.5}, y{0.5 + 1e-12};
  CHECK(cache_key(ids, x, Subset::all, "d") != cache_key(ids, y, Subset::all, "d"));
  CHECK(cache_key(ids, x, Subset::all, "d") != cache_key(ids, x, Subset::encoder, "d"));
  CHECK(cache_key(ids, x, Subset::all, "d") != cache_key(ids, x, Subset::all, "e"));
  CHECK(cache_key(ids, x, Subset::all, "d") == cache_key(ids, x, Subset::all, "d"));
}

TEST_CASE("persistent cache survives reopening and tolerates corruption") {
  const auto dir = wsi::testing::scratch_dir("cache");
  {
    ResultCache c(dir);
    c.insert("k1", 0.125);
    c.insert("k2", 0.5);
  }
  ResultCache reopened(dir);
  CHECK(reopened.lookup("k1") == 0.125);
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    std::ofstream out(entry.path(), std::ios::trunc);
    out << "{garbage";
  }
  ResultCache broken(dir);
  CHECK_FALSE(broken.lookup("k2").has_value());
  CHECK(broken.misses() == 1);
}

TEST_CASE("evaluator failure is an evaluation error") {
  EvaluatorBinding b = linear_binding();
  b.evaluate = [](const ParameterSet&, const std::string&) -> double {
    throw std::runtime_error("boom");
  };
  const std::vector<double> grid{0.0, 1.0};
  CHECK(error_code_of([&] { evaluate_grid_1d(scalar_model(0), scalar_model(1), grid, b, {}); }) ==
        Errc::evaluation);
  b.evaluate = [](const ParameterSet&, const std::string&) { return std::nan(""); };
  CHECK(error_code_of([&] { evaluate_grid_1d(scalar_model(0), scalar_model(1), grid, b, {}); }) ==
        Errc::evaluation);
}

TEST_CASE("enum names round-trip") {
  CHECK(parse_grid_kind(to_string(GridKind::two_d)) == GridKind::two_d);
  CHECK(parse_side(to_string(Side::target)) == Side::target);
  CHECK_THROWS_AS(parse_side("middle"), Error);
}
