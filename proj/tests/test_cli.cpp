#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "json.hpp"
#include "support.hpp"
#include "wsi/interp_core.hpp"
#include "wsi/report.hpp"

using namespace wsi;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int status;
  std::string err;
  std::string out;
};

RunResult run_cli(const std::string& args, const fs::path& dir) {
  const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = std::string(WSI_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int raw = std::system(cmd.c_str());
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, cli::read_text(err), cli::read_text(out)};
}

const char* kSmallConfig = R"({
  "obs_dim": 12, "latent_dim": 4, "hidden_dim": 8,
  "n_unlabeled": 300, "n_train": 200, "n_dev": 100,
  "pretrain_epochs": 3, "finetune_epochs": 3
})";

// One small toy run shared by the tests below.
const fs::path& toy_dir() {
  static const fs::path dir = [] {
    const fs::path d = wsi::testing::scratch_dir("cli-toy");
    cli::write_text(d / "cfg.json", kSmallConfig);
    cli::ToyRunArgs args;
    args.config = d / "cfg.json";
    args.seeds = 1;
    args.out = d / "run";
    std::ostringstream log;
    REQUIRE(cli::cmd_toy_run(args, log) == 0);
    return d;
  }();
  return dir;
}

std::size_t line_count(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace

TEST_CASE("toy-run writes the documented layout") {
  const fs::path run = toy_dir() / "run";
  for (const char* f : {"seed-0/src.lscp", "seed-0/tgt.lscp", "seed-0/bi.lscp", "records.csv",
                        "aggregates.json", "fig-1d.svg", "fig-2d-source.svg", "fig-2d-target.svg"})
    CHECK(fs::exists(run / f));
  const auto recs = parse_records_csv(cli::read_text(run / "records.csv"));
  CHECK(recs.size() == 33 * 2 * 2 + 441 * 2);
}

TEST_CASE("interp1d over the default grid gives 66 rows") {
  const fs::path d = toy_dir();
  const auto r = run_cli("interp1d --a " + (d / "run/seed-0/src.lscp").string() + " --b " +
                             (d / "run/seed-0/bi.lscp").string() + " --eval " + (d / "cfg.json").string() +
                             " --out " + (d / "i1.csv").string(),
                         d);
  REQUIRE(r.status == 0);
  CHECK(line_count(cli::read_text(d / "i1.csv")) == 1 + 66);
}

TEST_CASE("interp1d with the same checkpoint twice is constant along alpha") {
  const fs::path d = toy_dir();
  const auto r = run_cli("interp1d --a " + (d / "run/seed-0/src.lscp").string() + " --b " +
                             (d / "run/seed-0/src.lscp").string() + " --eval " + (d / "cfg.json").string() +
                             " --out " + (d / "same.csv").string(),
                         d);
  REQUIRE(r.status == 0);
  const auto recs = parse_records_csv(cli::read_text(d / "same.csv"));
  for (const auto& rec : recs) {
    const auto& first = rec.eval_side == Side::source ? recs[0] : recs[1];
    CHECK(rec.value == first.value);
  }
}

TEST_CASE("interp2d corner equals the source checkpoint evaluation") {
  const fs::path d = toy_dir();
  cli::write_text(d / "grid.json", R"({"lo": 0, "hi": 1, "step": 0.5})");
  const auto r = run_cli("interp2d --bi " + (d / "run/seed-0/bi.lscp").string() + " --src " +
                             (d / "run/seed-0/src.lscp").string() + " --tgt " +
                             (d / "run/seed-0/tgt.lscp").string() + " --grid " + (d / "grid.json").string() +
                             " --eval " + (d / "cfg.json").string() + " --out " + (d / "i2.csv").string(),
                         d);
  REQUIRE(r.status == 0);
  const auto recs = parse_records_csv(cli::read_text(d / "i2.csv"));
  CHECK(recs.size() == 9 * 2);
  const toy::ToyTaskConfig cfg = toy::load_config(d / "cfg.json");
  const toy::ToyTask task = toy::generate_task(cfg, cfg.seed);
  const ParameterSet src = load_checkpoint(d / "run/seed-0/src.lscp");
  for (const auto& rec : recs)
    if (rec.alpha1 == 1.0 && rec.alpha2 == 0.0)
      CHECK(rec.value == toy::evaluate_accuracy(src, rec.eval_side == Side::source ? task.src_dev
                                                                                     : task.tgt_dev));
}

TEST_CASE("missing --b is a usage error") {
  const fs::path d = toy_dir();
  const auto r = run_cli("interp1d --a " + (d / "run/seed-0/src.lscp").string() + " --eval " +
                             (d / "cfg.json").string() + " --out x.csv",
                         d);
  CHECK(r.status == 1);
  CHECK(r.err.find("--b") != std::string::npos);
}

TEST_CASE("incompatible shapes exit 2 naming the tensor") {
  const fs::path d = toy_dir();
  const ParameterSet tgt = load_checkpoint(d / "run/seed-0/tgt.lscp");
  ParameterSet odd;
  for (const auto& [name, t] : tgt.tensors())
    odd.insert(name, name == "encoder.b1" ? Tensor::zeros({3}) : t);
  save_checkpoint(odd, d / "odd.lscp");
  const auto r = run_cli("interp2d --bi " + (d / "run/seed-0/bi.lscp").string() + " --src " +
                             (d / "run/seed-0/src.lscp").string() + " --tgt " + (d / "odd.lscp").string() +
                             " --eval " + (d / "cfg.json").string() + " --out " + (d / "bad.csv").string(),
                         d);
  CHECK(r.status == 2);
  CHECK(r.err.find("encoder.b1") != std::string::npos);
}

TEST_CASE("diag reports angles and rejects a zero direction") {
  const fs::path d = toy_dir();
  const std::string src = (d / "run/seed-0/src.lscp").string();
  const std::string bi = (d / "run/seed-0/bi.lscp").string();
  const auto same = run_cli("diag --src " + src + " --tgt " + src + " --bi " + bi, d);
  REQUIRE(same.status == 0);
  const auto j = nlohmann::json::parse(same.out);
  CHECK(j["all"]["angle_deg"].get<double>() == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(j.contains("encoder"));
  const auto degenerate = run_cli("diag --src " + bi + " --tgt " + src + " --bi " + bi, d);
  CHECK(degenerate.status == 2);
}

TEST_CASE("analogy command writes C + B - A") {
  const fs::path d = toy_dir();
  const std::string a = (d / "run/seed-0/src.lscp").string();
  const std::string b = (d / "run/seed-0/tgt.lscp").string();
  const std::string c = (d / "run/seed-0/bi.lscp").string();
  REQUIRE(run_cli("analogy --a " + a + " --b " + a + " --c " + c + " --out " + (d / "d0.lscp").string(), d)
              .status == 0);
  CHECK(same_tensors(load_checkpoint(d / "d0.lscp"), load_checkpoint(c)));
  REQUIRE(run_cli("analogy --a " + a + " --b " + b + " --c " + c + " --out " + (d / "d1.lscp").string(), d)
              .status == 0);
  const ParameterSet got = load_checkpoint(d / "d1.lscp");
  CHECK(same_tensors(got, model_analogy(load_checkpoint(c), load_checkpoint(b), load_checkpoint(a))));
}

TEST_CASE("aggregate and plot commands") {
  const fs::path d = toy_dir();
  const auto agg = run_cli("aggregate --in " + (d / "i1.csv").string() + " --scope per_pair --out " +
                               (d / "agg.json").string(),
                           d);
  REQUIRE(agg.status == 0);
  const auto sets = aggregates_from_json(cli::read_text(d / "agg.json"));
  REQUIRE(sets.size() == 1);
  CHECK(sets[0].points.size() == 66);
  CHECK(run_cli("plot line --in " + (d / "agg.json").string() + " --out " + (d / "line.svg").string(), d)
            .status == 0);
  CHECK(run_cli("plot heatmap --in " + (d / "run/aggregates.json").string() + " --side source --out " +
                    (d / "heat.svg").string(),
                d)
            .status == 0);
  CHECK(run_cli("plot heatmap --in " + (d / "agg.json").string() + " --out " + (d / "none.svg").string(), d)
            .status == 2);
  CHECK(run_cli("plot pie --in " + (d / "agg.json").string() + " --out x.svg", d).status == 1);
}

TEST_CASE("corrupt checkpoint exits 2") {
  const fs::path d = toy_dir();
  cli::write_text(d / "junk.lscp", "XXXXjunk");
  const std::string good = (d / "run/seed-0/src.lscp").string();
  CHECK(run_cli("diag --src " + (d / "junk.lscp").string() + " --tgt " + good + " --bi " + good, d).status ==
        2);
}

TEST_CASE("help exits 0") { CHECK(run_cli("--help", toy_dir()).status == 0); }
