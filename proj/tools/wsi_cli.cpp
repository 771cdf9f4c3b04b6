// wsi: weight-space interpolation toolkit.
//
// Exit status: 0 success, 1 usage error, 2 data or computation error.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "commands.hpp"
#include "wsi/error.hpp"

namespace {

using namespace wsi;
using namespace wsi::cli;

const std::vector<std::string> kSubsets = {"all", "encoder", "head"};
const std::vector<std::string> kScopes = {"per_pair", "per_task", "pooled"};
const std::vector<std::string> kSides = {"source", "target"};

void add_eval_options(CLI::App* cmd, EvalSource& eval) {
  cmd->add_option("--eval", eval.config, "toy config JSON whose dev sets score each model")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--eval-seed", eval.seed, "task seed (defaults to the config seed)");
  cmd->add_option("--src-lang", eval.src_lang, "source language tag")->capture_default_str();
  cmd->add_option("--tgt-lang", eval.tgt_lang, "target language tag")->capture_default_str();
  cmd->add_option("--task", eval.task, "task tag")->capture_default_str();
  cmd->add_flag("--swap-domains", eval.swap_domains,
                "score the source side on the target domain and vice versa");
  cmd->add_option("--cache", eval.cache_dir, "directory for cached evaluation results");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weight-space interpolation and generalization-surface toolkit", "wsi"};
  app.require_subcommand(1);
  std::string s_i1 = "all", s_i2 = "all", s_tr = "all", s_ag = "pooled", s_pl = "target";
  std::optional<std::string> s_dg;

  Interp1dArgs i1;
  auto* interp1d = app.add_subcommand("interp1d", "evaluate models on the line between two checkpoints");
  interp1d->add_option("--a", i1.a, "checkpoint at alpha = 0")->required()->check(CLI::ExistingFile);
  interp1d->add_option("--b", i1.b, "checkpoint at alpha = 1")->required()->check(CLI::ExistingFile);
  interp1d->add_option("--subset", s_i1, "parameters to interpolate")
      ->check(CLI::IsMember(kSubsets))
      ->capture_default_str();
  interp1d->add_option("--grid", i1.grid, "'default' or a grid JSON file")->capture_default_str();
  interp1d->add_option("--out", i1.out, "output CSV")->required();
  add_eval_options(interp1d, i1.eval);

  Interp2dArgs i2;
  auto* interp2d = app.add_subcommand("interp2d", "evaluate models on the plane through three checkpoints");
  interp2d->add_option("--bi", i2.bi, "bilingual checkpoint (origin)")->required()->check(CLI::ExistingFile);
  interp2d->add_option("--src", i2.src, "source checkpoint (alpha1 = 1)")->required()->check(CLI::ExistingFile);
  interp2d->add_option("--tgt", i2.tgt, "target checkpoint (alpha2 = 1)")->required()->check(CLI::ExistingFile);
  interp2d->add_option("--subset", s_i2, "parameters to move")
      ->check(CLI::IsMember(kSubsets))
      ->capture_default_str();
  interp2d->add_option("--grid", i2.grid, "'default' or a grid JSON file")->capture_default_str();
  interp2d->add_flag("--normalize-directions", i2.normalize_directions,
                     "rescale both directions filter-wise to the bilingual weights");
  interp2d->add_option("--out", i2.out, "output CSV")->required();
  add_eval_options(interp2d, i2.eval);

  DiagArgs dg;
  auto* diag = app.add_subcommand("diag", "norms and angle of the two plane directions");
  diag->add_option("--src", dg.src)->required()->check(CLI::ExistingFile);
  diag->add_option("--tgt", dg.tgt)->required()->check(CLI::ExistingFile);
  diag->add_option("--bi", dg.bi)->required()->check(CLI::ExistingFile);
  diag->add_option("--subset", s_dg, "also report this subset")
      ->check(CLI::IsMember(kSubsets));

  AnalogyArgs an;
  auto* analogy = app.add_subcommand("analogy", "write C + B - A on the encoder, C's head");
  analogy->add_option("--a", an.a)->required()->check(CLI::ExistingFile);
  analogy->add_option("--b", an.b)->required()->check(CLI::ExistingFile);
  analogy->add_option("--c", an.c)->required()->check(CLI::ExistingFile);
  analogy->add_option("--out", an.out)->required();

  ToyRunArgs tr;
  auto* toy_run = app.add_subcommand("toy-run", "train the toy lab and write checkpoints, records and figures");
  toy_run->add_option("--config", tr.config, "toy config JSON")->required()->check(CLI::ExistingFile);
  toy_run->add_option("--seeds", tr.seeds, "number of seeds")->capture_default_str()->check(CLI::PositiveNumber);
  toy_run->add_option("--subset", s_tr, "parameters to interpolate")
      ->check(CLI::IsMember(kSubsets))
      ->capture_default_str();
  toy_run->add_option("--out", tr.out, "output directory")->required();

  AggregateArgs ag;
  auto* aggregate = app.add_subcommand("aggregate", "normalize and aggregate a records CSV");
  aggregate->add_option("--in", ag.in)->required()->check(CLI::ExistingFile);
  aggregate->add_option("--scope", s_ag)
      ->check(CLI::IsMember(kScopes))
      ->capture_default_str();
  aggregate->add_option("--out", ag.out)->required();

  PlotArgs pl;
  auto* plot = app.add_subcommand("plot", "render aggregates as SVG");
  plot->add_option("kind", pl.kind, "line or heatmap")->required()->check(CLI::IsMember({"line", "heatmap"}));
  plot->add_option("--in", pl.in)->required()->check(CLI::ExistingFile);
  plot->add_option("--out", pl.out)->required();
  plot->add_option("--group", pl.group, "aggregate group to draw (default: first)");
  plot->add_option("--side", s_pl, "heatmap side")
      ->check(CLI::IsMember(kSides))
      ->capture_default_str();
  plot->add_option("--title", pl.title);

  FlatnessArgs fl;
  auto* flat = app.add_subcommand("toy-flatness", "compare target-surface flatness of a small and a large encoder");
  flat->add_option("--config", fl.config)->required()->check(CLI::ExistingFile);
  flat->add_option("--seeds", fl.seeds)->capture_default_str()->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    i1.subset = parse_subset(s_i1);
    i2.subset = parse_subset(s_i2);
    tr.subset = parse_subset(s_tr);
    if (s_dg) dg.subset = parse_subset(*s_dg);
    ag.scope = parse_scope(s_ag);
    pl.side = parse_side(s_pl);
    if (*interp1d) return cmd_interp1d(i1);
    if (*interp2d) return cmd_interp2d(i2);
    if (*diag) return cmd_diag(dg, std::cout);
    if (*analogy) return cmd_analogy(an);
    if (*toy_run) return cmd_toy_run(tr, std::cerr);
    if (*aggregate) return cmd_aggregate(ag);
    if (*plot) return cmd_plot(pl);
    if (*flat) return cmd_toy_flatness(fl, std::cout);
  } catch (const wsi::Error& e) {
    std::cerr << "wsi: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "wsi: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
