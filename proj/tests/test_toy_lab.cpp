#include <cmath>

#include "support.hpp"
#include "wsi/toy_lab.hpp"

using namespace wsi;
using namespace wsi::toy;
using wsi::testing::error_code_of;

namespace {

ToyTaskConfig small_config() {
  ToyTaskConfig c;
  c.obs_dim = 12;
  c.latent_dim = 4;
  c.hidden_dim = 8;
  c.n_unlabeled = 300;
  c.n_train = 200;
  c.n_dev = 100;
  c.pretrain_epochs = 3;
  c.finetune_epochs = 3;
  return c;
}

// Random f64 model with D=4, h=3, K=2 (or D outputs for reconstruction).
FlatModel random_small_model(std::mt19937_64& rng, Objective objective) {
  ToyTaskConfig c;
  c.obs_dim = 4;
  c.latent_dim = 2;
  c.hidden_dim = 3;
  c.classes = 2;
  ParameterSet ps = init_autoencoder(c, rng());
  const ParameterSet head = init_head(c, rng());
  for (const auto& [name, t] : head.tensors()) ps.insert(name, t);
  FlatModel m = FlatModel::from(ps, objective);
  std::normal_distribution<double> n(0.0, 0.8);
  for (double& p : m.params) p = n(rng);
  return m;
}

double max_relative_gradient_error(const FlatModel& model, const Eigen::MatrixXd& x,
                                   const std::vector<int>& labels) {
  const std::vector<double> g = gradient(model, x, labels);
  double worst = 0.0;
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    FlatModel plus = model, minus = model;
    const double h = 1e-6;
    plus.params[i] += h;
    minus.params[i] -= h;
    const double fd = (loss(plus, x, labels) - loss(minus, x, labels)) / (2 * h);
    const double denom = std::max({std::abs(fd), std::abs(g[i]), 1e-8});
    worst = std::max(worst, std::abs(fd - g[i]) / denom);
  }
  return worst;
}

}  // namespace

TEST_CASE("config JSON round-trip and validation") {
  const ToyTaskConfig c = small_config();
  CHECK(config_from_json(config_to_json(c)) == c);
  CHECK(error_code_of([] { config_from_json(R"({"bogus": 1})"); }) == Errc::format);
  CHECK(error_code_of([] { config_from_json(R"({"classes": 1})"); }) == Errc::argument);
  CHECK(error_code_of([] { config_from_json("[1,2]"); }) == Errc::format);
}

TEST_CASE("orthonormalize yields orthonormal columns with nonnegative R diagonal") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  Eigen::MatrixXd m(6, 3);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  const Eigen::MatrixXd q = orthonormalize(m);
  CHECK((q.transpose() * q - Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-12);
  const Eigen::MatrixXd r = q.transpose() * m;
  for (int i = 0; i < 3; ++i) CHECK(r(i, i) >= 0.0);
}

TEST_CASE("generate_task is deterministic and balanced") {
  const ToyTaskConfig c = small_config();
  const ToyTask a = generate_task(c, 7), b = generate_task(c, 7);
  CHECK(a.src_train.inputs == b.src_train.inputs);
  CHECK(a.tgt_dev.labels == b.tgt_dev.labels);
  CHECK(a.src_dev.size() == 100);
  std::vector<int> counts(5, 0);
  for (int l : a.src_dev.labels) ++counts[std::size_t(l)];
  for (int k : counts) CHECK(k == 20);
  CHECK(a.src_dev.labels == a.tgt_dev.labels);
  const ToyTask other = generate_task(c, 8);
  CHECK(other.src_train.inputs != a.src_train.inputs);
}

TEST_CASE("zero shift makes both domains identical") {
  ToyTaskConfig c = small_config();
  c.shift_gamma = 0.0;
  const ToyTask t = generate_task(c, 3);
  CHECK(t.mix_src == t.mix_tgt);
  CHECK(t.src_dev.inputs == t.tgt_dev.inputs);
  const ParameterSet pre = pretrain_autoencoder(init_autoencoder(c, 3), t, c, 3);
  const ParameterSet src = finetune(pre, t, Role::src, c, 3);
  CHECK(std::abs(evaluate_accuracy(src, t.src_dev) - evaluate_accuracy(src, t.tgt_dev)) < 0.05);
}

TEST_CASE("positive shift changes the target mixing") {
  const ToyTask t = generate_task(small_config(), 3);
  CHECK((t.mix_src - t.mix_tgt).norm() > 0.01);
}

TEST_CASE("gradient check over 20 random small nets") {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 20; ++trial) {
    const Objective obj = trial % 2 == 0 ? Objective::cross_entropy : Objective::mse_reconstruction;
    const FlatModel m = random_small_model(rng, obj);
    Eigen::MatrixXd x(5, 4);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
    std::vector<int> labels;
    if (obj == Objective::cross_entropy)
      for (int i = 0; i < 5; ++i) labels.push_back(int(rng() % 2));
    CHECK(max_relative_gradient_error(m, x, labels) < 1e-4);
  }
}

TEST_CASE("duplicating batch rows leaves the gradient unchanged") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  const FlatModel m = random_small_model(rng, Objective::cross_entropy);
  Eigen::MatrixXd x(3, 4);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
  const std::vector<int> labels{0, 1, 1};
  Eigen::MatrixXd xx(6, 4);
  xx << x, x;
  const std::vector<int> ll{0, 1, 1, 0, 1, 1};
  const auto g1 = gradient(m, x, labels), g2 = gradient(m, xx, ll);
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == doctest::Approx(g2[i]).epsilon(1e-12));
}

TEST_CASE("zero-residual reconstruction has zero decoder gradient") {
  ToyTaskConfig c;
  c.obs_dim = 4;
  c.latent_dim = 2;
  c.hidden_dim = 3;
  ParameterSet ps = init_autoencoder(c, 1);
  for (const char* name : {"decoder.w", "decoder.b"})
    ps.replace(name, Tensor::zeros(ps.at(name).shape));
  const Eigen::MatrixXd x = Eigen::MatrixXd::Zero(4, 4);
  const ParameterSet g = backward(ps, x, {}, Objective::mse_reconstruction);
  for (float v : g.at("decoder.w").data) CHECK(v == 0.0f);
  for (float v : g.at("decoder.b").data) CHECK(v == 0.0f);
}

TEST_CASE("zero weights give uniform probabilities and rows sum to one") {
  ToyTaskConfig c = small_config();
  ParameterSet ps = init_autoencoder(c, 1);
  const ParameterSet head = init_head(c, 1);
  for (const auto& [name, t] : head.tensors()) ps.insert(name, t);
  ParameterSet zero;
  for (const auto& [name, t] : ps.tensors()) zero.insert(name, Tensor::zeros(t.shape));
  const ToyTask task = generate_task(c, 1);
  const Activations a = forward(zero, task.src_dev.inputs);
  for (Eigen::Index r = 0; r < a.output.rows(); ++r)
    for (Eigen::Index k = 0; k < a.output.cols(); ++k) CHECK(a.output(r, k) == doctest::Approx(0.2));
  const Activations b = forward(ps, task.src_dev.inputs);
  for (Eigen::Index r = 0; r < b.output.rows(); ++r) CHECK(std::abs(b.output.row(r).sum() - 1.0) < 1e-6);
}

TEST_CASE("forward rejects mismatched inputs") {
  ToyTaskConfig c = small_config();
  ParameterSet ps = init_autoencoder(c, 1);
  const ParameterSet head = init_head(c, 1);
  for (const auto& [name, t] : head.tensors()) ps.insert(name, t);
  CHECK(error_code_of([&] { forward(ps, Eigen::MatrixXd::Zero(2, 5)); }) == Errc::argument);
}

TEST_CASE("adam step examples") {
  std::vector<double> theta{0.0}, grad{1.0};
  AdamState st;
  adam_step(theta, grad, st, 1, {});
  CHECK(st.m[0] == doctest::Approx(0.1));
  CHECK(st.v[0] == doctest::Approx(0.001));
  CHECK(theta[0] == doctest::Approx(-0.001).epsilon(1e-9));

  std::vector<double> still{0.5}, zero{0.0};
  AdamState fresh;
  adam_step(still, zero, fresh, 1, {});
  CHECK(still[0] == 0.5);

  std::vector<double> pair{1.0, 1.0}, same{0.3, 0.3};
  AdamState twin;
  for (int t = 1; t <= 5; ++t) adam_step(pair, same, twin, t, {});
  CHECK(pair[0] == pair[1]);
  CHECK(error_code_of([&] { adam_step(pair, same, twin, 0, {}); }) == Errc::argument);
}

TEST_CASE("zero epochs leave weights untouched") {
  ToyTaskConfig c = small_config();
  c.pretrain_epochs = 0;
  c.finetune_epochs = 0;
  const ToyTask task = generate_task(c, 2);
  const ParameterSet init = init_autoencoder(c, 2);
  const ParameterSet pre = pretrain_autoencoder(init, task, c, 2);
  for (const auto& [name, t] : init.tensors())
    if (selects(Subset::encoder, name)) CHECK(bit_equal(t, pre.at(name)));
  const ParameterSet ft = finetune(pre, task, Role::src, c, 2);
  CHECK(same_tensors(pre, ft));
}

TEST_CASE("pretraining reduces reconstruction error and is deterministic") {
  const ToyTaskConfig c = small_config();
  const ToyTask task = generate_task(c, 4);
  const ParameterSet init = init_autoencoder(c, 4);
  const ParameterSet trained = train_autoencoder(init, task, c, 4);
  CHECK(reconstruction_mse(trained, task) < reconstruction_mse(init, task));
  const ParameterSet pre1 = pretrain_autoencoder(init, task, c, 4);
  const ParameterSet pre2 = pretrain_autoencoder(init, task, c, 4);
  CHECK(bit_equal(pre1, pre2));
  CHECK(pre1.meta().at("role") == "pretrained");
  CHECK_FALSE(pre1.contains("decoder.w"));
  for (const auto& [name, t] : pre1.tensors())
    if (selects(Subset::encoder, name)) CHECK(bit_equal(t, trained.at(name)));
}

TEST_CASE("fine-tuning needs data") {
  const ToyTaskConfig c = small_config();
  const ToyTask task = generate_task(c, 1);
  const ParameterSet pre = pretrain_autoencoder(init_autoencoder(c, 1), task, c, 1);
  std::vector<const ToyDataset*> none;
  CHECK(error_code_of([&] { finetune_on(pre, none, c, 1, 1); }) == Errc::argument);
  const ParameterSet src = finetune(pre, task, Role::src, c, 1);
  CHECK(src.meta().at("role") == "src");
}

TEST_CASE("accuracy of a constant predictor and self-consistency") {
  const ToyTaskConfig c = small_config();
  const ToyTask task = generate_task(c, 5);
  ParameterSet ps = init_autoencoder(c, 5);
  const ParameterSet head = init_head(c, 5);
  for (const auto& [name, t] : head.tensors()) ps.insert(name, t);
  ParameterSet zero_head = ps;
  zero_head.replace("head.w", Tensor::zeros(ps.at("head.w").shape));
  CHECK(evaluate_accuracy(zero_head, task.src_dev) == doctest::Approx(0.2));
  ToyDataset self = task.src_dev;
  self.labels = predict(ps, self.inputs);
  CHECK(evaluate_accuracy(ps, self) == 1.0);
  ToyDataset empty;
  CHECK(error_code_of([&] { evaluate_accuracy(ps, empty); }) == Errc::argument);
}

TEST_CASE("run_seed on a small config produces full record sets deterministically") {
  const ToyTaskConfig c = small_config();
  TransferOptions opts;
  const SeedRun a = run_seed(c, 1, opts);
  const SeedRun b = run_seed(c, 1, opts);
  CHECK(a.records_1d.size() == 33 * 2 * 2);
  CHECK(a.records_2d.size() == 441 * 2);
  CHECK(a.records_1d == b.records_1d);
  CHECK(a.records_2d == b.records_2d);
  CHECK(bit_equal(a.theta_bi, b.theta_bi));
  CHECK(a.theta_src.meta().at("init") == a.theta_tgt.meta().at("init"));
  CHECK(a.theta_src.meta().at("init") == a.theta_bi.meta().at("init"));
}
