// Training oracles on the default configuration.

#include "support.hpp"
#include "wsi/interp_core.hpp"
#include "wsi/toy_lab.hpp"

using namespace wsi;
using namespace wsi::toy;

namespace {

struct Trained {
  ToyTask task;
  ParameterSet src, tgt, bi;
};

const std::vector<Trained>& five_seeds() {
  static const std::vector<Trained> runs = [] {
    const ToyTaskConfig cfg;
    std::vector<Trained> out;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      ToyTask task = generate_task(cfg, seed);
      const ParameterSet pre = pretrain_autoencoder(init_autoencoder(cfg, seed), task, cfg, seed);
      ParameterSet src = finetune(pre, task, Role::src, cfg, seed);
      ParameterSet tgt = finetune(pre, task, Role::tgt, cfg, seed);
      ParameterSet bi = finetune(pre, task, Role::bilingual, cfg, seed);
      out.push_back({std::move(task), std::move(src), std::move(tgt), std::move(bi)});
    }
    return out;
  }();
  return runs;
}

}  // namespace

TEST_CASE("source-only models transfer imperfectly") {
  int lower = 0;
  for (const auto& r : five_seeds())
    lower += evaluate_accuracy(r.src, r.task.tgt_dev) < evaluate_accuracy(r.src, r.task.src_dev);
  CHECK(lower >= 4);
}

TEST_CASE("bilingual models beat source-only models on the target") {
  int wins = 0;
  for (const auto& r : five_seeds())
    wins += evaluate_accuracy(r.bi, r.task.tgt_dev) > evaluate_accuracy(r.src, r.task.tgt_dev);
  CHECK(wins >= 4);
}

TEST_CASE("source-only accuracy is far above chance and bilingual accuracy is high") {
  for (const auto& r : five_seeds()) {
    CHECK(evaluate_accuracy(r.src, r.task.src_dev) > 2.0 / 5.0);
    const double bi = evaluate_accuracy(r.bi, r.task.tgt_dev);
    CHECK(bi >= 0.5);
    CHECK(bi <= 1.0);
  }
}

TEST_CASE("pretraining on the default config lowers reconstruction error") {
  const ToyTaskConfig cfg;
  const auto& task = five_seeds().front().task;
  const ParameterSet init = init_autoencoder(cfg, 0);
  CHECK(reconstruction_mse(train_autoencoder(init, task, cfg, 0), task) < reconstruction_mse(init, task));
}

TEST_CASE("plane directions form an acute nonzero angle") {
  for (const auto& r : five_seeds()) {
    const auto d = direction_diagnostics(compute_delta(r.src, r.bi), compute_delta(r.tgt, r.bi));
    CHECK(d.angle_deg > 0.0);
    CHECK(d.angle_deg < 90.0);
  }
}
