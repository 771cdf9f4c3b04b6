#include "commands.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"
#include "wsi/error.hpp"
#include "wsi/interp_core.hpp"
#include "wsi/report.hpp"

namespace wsi::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Evaluation {
  toy::ToyTask task;
  EvaluatorBinding binding;
  RecordTags tags;
};

Evaluation make_evaluation(const EvalSource& src) {
  toy::ToyTaskConfig cfg = toy::load_config(src.config);
  const std::uint64_t seed = src.seed.value_or(cfg.seed);
  Evaluation ev{toy::generate_task(cfg, seed), {}, {}};
  std::ostringstream id;
  id << "toy-" << std::hash<std::string>{}(toy::config_to_json(cfg)) << "-seed" << seed;
  ev.binding = src.swap_domains
                   ? toy::make_accuracy_binding(ev.task, id.str(), toy::Domain::tgt, toy::Domain::src)
                   : toy::make_accuracy_binding(ev.task, id.str());
  ev.tags = {src.src_lang, src.tgt_lang, src.task, std::int64_t(seed)};
  return ev;
}

json diag_json(const DirectionDiagnostics& d) {
  return {{"norm_src", d.norm_a}, {"norm_tgt", d.norm_b}, {"norm_ratio", d.norm_ratio},
          {"angle_deg", d.angle_deg}};
}

}  // namespace

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  out.write(text.data(), std::streamsize(text.size()));
  if (!out) throw Error(Errc::io, "failed writing " + path.string());
}

GridSpec load_grid(const std::string& arg, GridKind kind) {
  GridSpec spec = kind == GridKind::one_d ? GridSpec::default_1d() : GridSpec::default_2d();
  if (arg == "default") return spec;
  try {
    const json j = json::parse(read_text(arg));
    spec.lo = j.value("lo", spec.lo);
    spec.hi = j.value("hi", spec.hi);
    spec.base_step = j.value("step", spec.base_step);
    if (j.contains("extra_points")) spec.extra_points = j["extra_points"].get<std::vector<double>>();
    if (kind == GridKind::two_d) spec.extra_points.clear();
  } catch (const json::exception& e) {
    throw Error(Errc::format, "grid file " + arg + ": " + e.what());
  }
  validate(spec);
  return spec;
}

int cmd_interp1d(const Interp1dArgs& args) {
  const ParameterSet a = load_checkpoint(args.a);
  const ParameterSet b = load_checkpoint(args.b);
  validate_compatibility(a, b);
  const auto grid = build_grid_1d(load_grid(args.grid, GridKind::one_d));
  const Evaluation ev = make_evaluation(args.eval);
  std::optional<ResultCache> cache;
  if (args.eval.cache_dir) cache.emplace(args.eval.cache_dir);
  EvalOptions opts;
  opts.subset = args.subset;
  opts.cache = cache ? &*cache : nullptr;
  const auto records = evaluate_grid_1d(a, b, grid, ev.binding, ev.tags, opts);
  write_text(args.out, emit_records_csv(records));
  return kExitOk;
}

int cmd_interp2d(const Interp2dArgs& args) {
  const ParameterSet bi = load_checkpoint(args.bi);
  const ParameterSet src = load_checkpoint(args.src);
  const ParameterSet tgt = load_checkpoint(args.tgt);
  validate_compatibility(bi, src);
  validate_compatibility(bi, tgt);
  const auto grid = build_grid_2d(load_grid(args.grid, GridKind::two_d));
  const Evaluation ev = make_evaluation(args.eval);
  std::optional<ResultCache> cache;
  if (args.eval.cache_dir) cache.emplace(args.eval.cache_dir);
  EvalOptions opts;
  opts.subset = args.subset;
  opts.cache = cache ? &*cache : nullptr;
  opts.normalize_directions = args.normalize_directions;
  const auto records = evaluate_grid_2d(bi, src, tgt, grid, ev.binding, ev.tags, opts);
  write_text(args.out, emit_records_csv(records));
  return kExitOk;
}

int cmd_diag(const DiagArgs& args, std::ostream& out) {
  const ParameterSet src = load_checkpoint(args.src);
  const ParameterSet tgt = load_checkpoint(args.tgt);
  const ParameterSet bi = load_checkpoint(args.bi);
  const Delta d_src = compute_delta(src, bi);
  const Delta d_tgt = compute_delta(tgt, bi);
  json result = json::object();
  std::vector<Subset> subsets = {Subset::all, Subset::encoder};
  if (args.subset && *args.subset == Subset::head) subsets.push_back(Subset::head);
  for (Subset s : subsets)
    result[std::string(to_string(s))] = diag_json(direction_diagnostics(d_src, d_tgt, s));
  out << result.dump(2) << "\n";
  return kExitOk;
}

int cmd_analogy(const AnalogyArgs& args) {
  const ParameterSet a = load_checkpoint(args.a);
  const ParameterSet b = load_checkpoint(args.b);
  const ParameterSet c = load_checkpoint(args.c);
  save_checkpoint(model_analogy(c, b, a), args.out);
  return kExitOk;
}

int cmd_toy_run(const ToyRunArgs& args, std::ostream& log) {
  const toy::ToyTaskConfig cfg = toy::load_config(args.config);
  if (args.seeds < 1) throw Error(Errc::argument, "--seeds must be >= 1");
  toy::TransferOptions opts;
  opts.subset = args.subset;
  const toy::TransferResult result = toy::run_transfer_experiment(cfg, args.seeds, opts);

  fs::create_directories(args.out);
  for (const auto& run : result.runs) {
    const fs::path dir = args.out / ("seed-" + std::to_string(run.seed));
    fs::create_directories(dir);
    save_checkpoint(run.theta_src, dir / "src.lscp");
    save_checkpoint(run.theta_tgt, dir / "tgt.lscp");
    save_checkpoint(run.theta_bi, dir / "bi.lscp");
    log << "seed " << run.seed << ": wrote " << dir.string() << "\n";
  }
  write_text(args.out / "records.csv", emit_records_csv(result.normalized));
  write_text(args.out / "aggregates.json", aggregates_to_json(result.aggregates));

  const AggregateSet& pooled = result.aggregates.front();
  write_text(args.out / "fig-1d.svg",
             emit_line_plot(line_plot_from_aggregates(
                 pooled.points, "pooled", "Normalized performance along the interpolation line")));
  if (result.aggregates.size() > 2) {
    const AggregateSet& plane = result.aggregates.back();
    for (Side side : {Side::source, Side::target}) {
      const std::string name = "fig-2d-" + std::string(to_string(side)) + ".svg";
      write_text(args.out / name,
                 emit_heatmap(heatmap_from_aggregates(
                     plane.points, side, "src-tgt/toy",
                     "Normalized " + std::string(to_string(side)) + " performance on the plane")));
    }
  }
  log << "wrote " << result.normalized.size() << " records to " << (args.out / "records.csv").string()
      << "\n";
  return kExitOk;
}

int cmd_aggregate(const AggregateArgs& args) {
  std::vector<EvaluationRecord> records = parse_records_csv(read_text(args.in));
  if (records.empty()) throw Error(Errc::empty_group, "no records in " + args.in.string());
  const bool all_normalized = std::all_of(records.begin(), records.end(),
                                          [](const auto& r) { return r.normalized.has_value(); });
  if (!all_normalized) records = normalize_by_reference(std::move(records));

  std::vector<AggregateSet> sets;
  for (GridKind kind : {GridKind::one_d, GridKind::two_d}) {
    std::vector<EvaluationRecord> part;
    for (const auto& r : records)
      if (r.kind == kind) part.push_back(r);
    if (!part.empty()) sets.push_back({kind, args.scope, aggregate_records(part, args.scope)});
  }
  write_text(args.out, sets.size() == 1 ? aggregates_to_json(sets.front()) : aggregates_to_json(sets));
  return kExitOk;
}

int cmd_plot(const PlotArgs& args) {
  const std::vector<AggregateSet> sets = aggregates_from_json(read_text(args.in));
  const GridKind want = args.kind == "line" ? GridKind::one_d : GridKind::two_d;
  const AggregateSet* chosen = nullptr;
  for (const auto& s : sets) {
    if (s.kind != want) continue;
    if (args.group && std::none_of(s.points.begin(), s.points.end(),
                                   [&](const auto& p) { return p.group == *args.group; }))
      continue;
    chosen = &s;
    break;
  }
  if (!chosen || chosen->points.empty())
    throw Error(Errc::argument, "no " + std::string(to_string(want)) + " aggregates in " +
                                    args.in.string() +
                                    (args.group ? " for group " + *args.group : std::string()));
  const std::string group = args.group.value_or(chosen->points.front().group);
  std::string svg;
  if (want == GridKind::one_d) {
    svg = emit_line_plot(line_plot_from_aggregates(
        chosen->points, group, args.title.empty() ? "Normalized performance (" + group + ")" : args.title));
  } else {
    svg = emit_heatmap(heatmap_from_aggregates(
        chosen->points, args.side, group,
        args.title.empty() ? "Normalized " + std::string(to_string(args.side)) + " performance (" + group + ")"
                           : args.title));
  }
  write_text(args.out, svg);
  return kExitOk;
}

int cmd_toy_flatness(const FlatnessArgs& args, std::ostream& out) {
  const toy::ToyTaskConfig cfg = toy::load_config(args.config);
  const toy::FlatnessComparison cmp = toy::compare_encoder_flatness(cfg, args.seeds);
  out << json{{"small_encoder", cmp.small_encoder}, {"large_encoder", cmp.large_encoder}}.dump(2)
      << "\n";
  return kExitOk;
}

}  // namespace wsi::cli
