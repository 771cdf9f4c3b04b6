#pragma once

// Subcommand implementations behind the `wsi` binary. Each returns the process
// exit status; wsi::Error escapes to the caller, which maps it to status 2.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "wsi/aggregate.hpp"
#include "wsi/grid_eval.hpp"
#include "wsi/tensor_store.hpp"
#include "wsi/toy_lab.hpp"

namespace wsi::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

/// Grid override: "default" or a JSON file {"lo", "hi", "step", "extra_points"}.
GridSpec load_grid(const std::string& arg, GridKind kind);

struct EvalSource {
  std::filesystem::path config;          // toy config JSON
  std::optional<std::uint64_t> seed;     // overrides the config seed
  std::string src_lang = "src";
  std::string tgt_lang = "tgt";
  std::string task = "toy";
  bool swap_domains = false;             // target domain plays the source side
  std::optional<std::filesystem::path> cache_dir;
};

struct Interp1dArgs {
  std::filesystem::path a, b, out;
  Subset subset = Subset::all;
  std::string grid = "default";
  EvalSource eval;
};

struct Interp2dArgs {
  std::filesystem::path bi, src, tgt, out;
  Subset subset = Subset::all;
  std::string grid = "default";
  bool normalize_directions = false;
  EvalSource eval;
};

struct DiagArgs {
  std::filesystem::path src, tgt, bi;
  std::optional<Subset> subset;
};

struct AnalogyArgs {
  std::filesystem::path a, b, c, out;
};

struct ToyRunArgs {
  std::filesystem::path config, out;
  int seeds = 3;
  Subset subset = Subset::all;
};

struct AggregateArgs {
  std::filesystem::path in, out;
  Scope scope = Scope::pooled;
};

struct PlotArgs {
  std::string kind;  // "line" or "heatmap"
  std::filesystem::path in, out;
  std::optional<std::string> group;
  Side side = Side::target;
  std::string title;
};

struct FlatnessArgs {
  std::filesystem::path config;
  int seeds = 3;
};

int cmd_interp1d(const Interp1dArgs& args);
int cmd_interp2d(const Interp2dArgs& args);
int cmd_diag(const DiagArgs& args, std::ostream& out);
int cmd_analogy(const AnalogyArgs& args);
int cmd_toy_run(const ToyRunArgs& args, std::ostream& log);
int cmd_aggregate(const AggregateArgs& args);
int cmd_plot(const PlotArgs& args);
int cmd_toy_flatness(const FlatnessArgs& args, std::ostream& out);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace wsi::cli
