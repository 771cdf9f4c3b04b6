#include "wsi/toy_lab.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "wsi/error.hpp"
#include "wsi/interp_core.hpp"

namespace wsi::toy {

using json = nlohmann::json;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

MatrixXd gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, 1.0);
  MatrixXd m(rows, cols);
  // Row-major fill order keeps the draw sequence independent of Eigen's layout.
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = scale * nd(rng);
  return m;
}

Tensor to_tensor(const MatrixXd& m) {
  Tensor t = Tensor::zeros({std::size_t(m.rows()), std::size_t(m.cols())});
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      t.data[std::size_t(r * m.cols() + c)] = static_cast<float>(m(r, c));
  return t;
}

ToyDataset make_split(const ToyTask& task, const MatrixXd& latent, const std::vector<int>& labels,
                      Domain domain, Split split) {
  ToyDataset ds;
  ds.labels = labels;
  ds.domain = domain;
  ds.split = split;
  const MatrixXd& mix = domain == Domain::src ? task.mix_src : task.mix_tgt;
  ds.inputs = latent * mix.transpose();
  return ds;
}

// Offsets of the six objective tensors inside FlatModel::params.
struct Layout {
  std::size_t w1, b1, w2, b2, out_w, out_b;
};

std::string out_prefix(Objective objective) {
  return objective == Objective::cross_entropy ? "head." : "decoder.";
}

Layout layout_of(const FlatModel& m) {
  Layout l{};
  std::size_t off = 0;
  const std::string out = out_prefix(m.objective);
  for (std::size_t i = 0; i < m.names.size(); ++i) {
    const std::string& n = m.names[i];
    if (n == "encoder.w1") l.w1 = off;
    else if (n == "encoder.b1") l.b1 = off;
    else if (n == "encoder.w2") l.w2 = off;
    else if (n == "encoder.b2") l.b2 = off;
    else if (n == out + "w") l.out_w = off;
    else if (n == out + "b") l.out_b = off;
    off += element_count(m.shapes[i]);
  }
  return l;
}

struct Views {
  Eigen::Map<const RowMat> w1, w2, out_w;
  Eigen::Map<const VectorXd> b1, b2, out_b;
};

Views views_of(const FlatModel& m, const double* p) {
  const Layout l = layout_of(m);
  const int D = m.in_dim, h = m.hidden_dim, k = m.out_dim;
  return Views{Eigen::Map<const RowMat>(p + l.w1, h, D),
               Eigen::Map<const RowMat>(p + l.w2, h, h),
               Eigen::Map<const RowMat>(p + l.out_w, k, h),
               Eigen::Map<const VectorXd>(p + l.b1, h),
               Eigen::Map<const VectorXd>(p + l.b2, h),
               Eigen::Map<const VectorXd>(p + l.out_b, k)};
}

void softmax_rows(MatrixXd& logits) {
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    logits.row(r) = (logits.row(r).array() - mx).exp().matrix();
    logits.row(r) /= logits.row(r).sum();
  }
}

Activations forward_flat(const FlatModel& m, const MatrixXd& x, bool probabilities = true) {
  if (x.cols() != m.in_dim)
    throw Error(Errc::argument, "input width " + std::to_string(x.cols()) + " != model width " +
                                    std::to_string(m.in_dim));
  const Views v = views_of(m, m.params.data());
  Activations a;
  a.hidden1 = ((x * v.w1.transpose()).rowwise() + v.b1.transpose()).array().tanh().matrix();
  a.hidden2 = ((a.hidden1 * v.w2.transpose()).rowwise() + v.b2.transpose()).array().tanh().matrix();
  a.output = (a.hidden2 * v.out_w.transpose()).rowwise() + v.out_b.transpose();
  if (m.objective == Objective::cross_entropy && probabilities) softmax_rows(a.output);
  return a;
}

void check_labels(const FlatModel& m, const MatrixXd& x, std::span<const int> labels) {
  if (m.objective != Objective::cross_entropy) return;
  if (labels.size() != std::size_t(x.rows()))
    throw Error(Errc::argument, "label count does not match batch size");
  for (int y : labels)
    if (y < 0 || y >= m.out_dim) throw Error(Errc::argument, "label out of range");
}

MatrixXd gather_rows(const MatrixXd& src, std::span<const std::size_t> rows) {
  MatrixXd out(Eigen::Index(rows.size()), src.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(Eigen::Index(i)) = src.row(Eigen::Index(rows[i]));
  return out;
}

// Minibatch Adam over the concatenation of `inputs`. Each epoch visits a fresh
// permutation drawn from `rng`; the final short batch is kept.
void train(FlatModel& model, const MatrixXd& inputs, const std::vector<int>& labels, int epochs,
           const ToyTaskConfig& cfg, std::mt19937_64& rng) {
  AdamState state;
  AdamHyper hyper;
  hyper.learning_rate = cfg.learning_rate;
  std::vector<std::size_t> order(static_cast<std::size_t>(inputs.rows()));
  std::iota(order.begin(), order.end(), 0);
  std::int64_t t = 0;
  std::vector<int> batch_labels;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += std::size_t(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + std::size_t(cfg.batch_size));
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const MatrixXd batch = gather_rows(inputs, idx);
      batch_labels.clear();
      if (!labels.empty())
        for (std::size_t i : idx) batch_labels.push_back(labels[i]);
      const std::vector<double> g = gradient(model, batch, batch_labels);
      adam_step(model.params, g, state, ++t, hyper);
    }
  }
}

ParameterSet merge(const ParameterSet& base, const ParameterSet& updated) {
  ParameterSet out = base;
  for (const auto& [name, t] : updated.tensors()) out.replace(name, t);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

void validate(const ToyTaskConfig& c) {
  auto fail = [](const std::string& why) { throw Error(Errc::argument, "toy config: " + why); };
  if (c.classes < 2) fail("classes must be >= 2");
  if (c.latent_dim < 1 || c.obs_dim < 1 || c.hidden_dim < 1) fail("dimensions must be positive");
  if (c.latent_dim > c.obs_dim) fail("latent_dim must not exceed obs_dim");
  if (!(c.shift_gamma >= 0.0) || !std::isfinite(c.shift_gamma)) fail("shift_gamma must be >= 0");
  if (!(c.noise_sigma > 0.0) || !std::isfinite(c.noise_sigma)) fail("noise_sigma must be > 0");
  if (c.n_unlabeled < 1 || c.n_train < 1 || c.n_dev < 1) fail("sample counts must be positive");
  if (c.pretrain_epochs < 0 || c.finetune_epochs < 0) fail("epoch counts must be >= 0");
  if (c.batch_size < 1) fail("batch_size must be positive");
  if (!(c.learning_rate > 0.0) || !std::isfinite(c.learning_rate)) fail("learning_rate must be > 0");
}

ToyTaskConfig config_from_json(std::string_view text) {
  ToyTaskConfig c;
  try {
    const json j = json::parse(text);
    if (!j.is_object()) throw Error(Errc::format, "toy config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
      if (key == "classes") c.classes = value.get<int>();
      else if (key == "latent_dim") c.latent_dim = value.get<int>();
      else if (key == "obs_dim") c.obs_dim = value.get<int>();
      else if (key == "hidden_dim") c.hidden_dim = value.get<int>();
      else if (key == "shift_gamma") c.shift_gamma = value.get<double>();
      else if (key == "noise_sigma") c.noise_sigma = value.get<double>();
      else if (key == "n_unlabeled") c.n_unlabeled = value.get<int>();
      else if (key == "n_train") c.n_train = value.get<int>();
      else if (key == "n_dev") c.n_dev = value.get<int>();
      else if (key == "pretrain_epochs") c.pretrain_epochs = value.get<int>();
      else if (key == "finetune_epochs") c.finetune_epochs = value.get<int>();
      else if (key == "batch_size") c.batch_size = value.get<int>();
      else if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else throw Error(Errc::format, "toy config: unknown field '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw Error(Errc::format, std::string("toy config: ") + e.what());
  }
  validate(c);
  return c;
}

std::string config_to_json(const ToyTaskConfig& c) {
  json j = {{"classes", c.classes},         {"latent_dim", c.latent_dim},
            {"obs_dim", c.obs_dim},         {"hidden_dim", c.hidden_dim},
            {"shift_gamma", c.shift_gamma}, {"noise_sigma", c.noise_sigma},
            {"n_unlabeled", c.n_unlabeled}, {"n_train", c.n_train},
            {"n_dev", c.n_dev},             {"pretrain_epochs", c.pretrain_epochs},
            {"finetune_epochs", c.finetune_epochs}, {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},     {"seed", c.seed}};
  return j.dump(2) + "\n";
}

ToyTaskConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open toy config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

std::mt19937_64 make_rng(std::uint64_t seed, Stream stream, std::uint64_t index) {
  std::uint64_t s = splitmix64(seed);
  s = splitmix64(s ^ static_cast<std::uint64_t>(stream));
  s = splitmix64(s ^ index);
  return std::mt19937_64(s);
}

// ---------------------------------------------------------------------------
// Task generation

const ToyDataset& ToyTask::get(Domain domain, Split split) const {
  const bool s = domain == Domain::src;
  switch (split) {
    case Split::unlabeled: return s ? src_unlabeled : tgt_unlabeled;
    case Split::train: return s ? src_train : tgt_train;
    case Split::dev: return s ? src_dev : tgt_dev;
  }
  return src_dev;
}

MatrixXd orthonormalize(const MatrixXd& m) {
  Eigen::HouseholderQR<MatrixXd> qr(m);
  MatrixXd q = qr.householderQ() * MatrixXd::Identity(m.rows(), m.cols());
  const MatrixXd& r = qr.matrixQR();
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  return q;
}

ToyTask generate_task(const ToyTaskConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  auto rng = make_rng(seed, Stream::data);
  ToyTask task;
  task.class_means = gaussian(rng, cfg.classes, cfg.latent_dim);
  task.mix_src = orthonormalize(gaussian(rng, cfg.obs_dim, cfg.latent_dim));
  const MatrixXd perturbation = gaussian(rng, cfg.obs_dim, cfg.latent_dim);
  task.mix_tgt = cfg.shift_gamma == 0.0
                     ? task.mix_src
                     : orthonormalize(task.mix_src + cfg.shift_gamma * perturbation);

  // Latents are shared by index between the two domains of a split.
  auto draw = [&](int n, Split split) {
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) labels[std::size_t(i)] = i % cfg.classes;
    std::shuffle(labels.begin(), labels.end(), rng);
    MatrixXd latent = gaussian(rng, n, cfg.latent_dim, cfg.noise_sigma);
    for (int i = 0; i < n; ++i) latent.row(i) += task.class_means.row(labels[std::size_t(i)]);
    return std::pair{make_split(task, latent, labels, Domain::src, split),
                     make_split(task, latent, labels, Domain::tgt, split)};
  };
  std::tie(task.src_unlabeled, task.tgt_unlabeled) = draw(cfg.n_unlabeled, Split::unlabeled);
  std::tie(task.src_train, task.tgt_train) = draw(cfg.n_train, Split::train);
  std::tie(task.src_dev, task.tgt_dev) = draw(cfg.n_dev, Split::dev);
  return task;
}

// ---------------------------------------------------------------------------
// Model

ParameterSet init_autoencoder(const ToyTaskConfig& cfg, std::uint64_t seed) {
  auto rng = make_rng(seed, Stream::init, 0);
  const int D = cfg.obs_dim, h = cfg.hidden_dim;
  ParameterSet ps;
  ps.insert("encoder.w1", to_tensor(gaussian(rng, h, D, 1.0 / std::sqrt(double(D)))));
  ps.insert("encoder.b1", Tensor::zeros({std::size_t(h)}));
  ps.insert("encoder.w2", to_tensor(gaussian(rng, h, h, 1.0 / std::sqrt(double(h)))));
  ps.insert("encoder.b2", Tensor::zeros({std::size_t(h)}));
  ps.insert("decoder.w", to_tensor(gaussian(rng, D, h, 1.0 / std::sqrt(double(h)))));
  ps.insert("decoder.b", Tensor::zeros({std::size_t(D)}));
  ps.meta()["arch"] = "mlp-tanh-" + std::to_string(D) + "-" + std::to_string(h);
  ps.meta()["seed"] = std::to_string(seed);
  return ps;
}

ParameterSet init_head(const ToyTaskConfig& cfg, std::uint64_t seed) {
  auto rng = make_rng(seed, Stream::init, 1);
  const int h = cfg.hidden_dim, k = cfg.classes;
  ParameterSet ps;
  ps.insert("head.w", to_tensor(gaussian(rng, k, h, 1.0 / std::sqrt(double(h)))));
  ps.insert("head.b", Tensor::zeros({std::size_t(k)}));
  return ps;
}

FlatModel FlatModel::from(const ParameterSet& weights, Objective objective) {
  FlatModel m;
  m.objective = objective;
  const std::string out = out_prefix(objective);
  for (const std::string name : {"encoder.w1", "encoder.b1", "encoder.w2", "encoder.b2"})
    if (!weights.contains(name))
      throw Error(Errc::argument, "model lacks tensor '" + name + "'");
  if (!weights.contains(out + "w") || !weights.contains(out + "b"))
    throw Error(Errc::argument, "model lacks " + out + "w/" + out + "b for this objective");

  const Shape& w1 = weights.at("encoder.w1").shape;
  const Shape& ow = weights.at(out + "w").shape;
  if (w1.size() != 2 || ow.size() != 2) throw Error(Errc::argument, "weight matrices must be 2-D");
  m.hidden_dim = int(w1[0]);
  m.in_dim = int(w1[1]);
  m.out_dim = int(ow[0]);
  const std::size_t h = w1[0];
  const std::map<std::string, Shape> expected = {
      {"encoder.b1", {h}},      {"encoder.w2", {h, h}},
      {"encoder.b2", {h}},      {out + "w", {ow[0], h}},
      {out + "b", {ow[0]}}};
  for (const auto& [name, shape] : expected)
    if (weights.at(name).shape != shape)
      throw Error(Errc::argument, "tensor '" + name + "' has shape " +
                                      shape_to_string(weights.at(name).shape) + ", expected " +
                                      shape_to_string(shape));

  for (const auto& [name, t] : weights.tensors()) {
    if (!name.starts_with(kEncoderPrefix) && !name.starts_with(out)) continue;
    m.names.push_back(name);
    m.shapes.push_back(t.shape);
    for (float f : t.data) m.params.push_back(double(f));
  }
  return m;
}

ParameterSet FlatModel::to_parameter_set() const {
  ParameterSet ps;
  std::size_t off = 0;
  for (std::size_t i = 0; i < names.size(); ++i) {
    Tensor t = Tensor::zeros(shapes[i]);
    for (float& f : t.data) f = static_cast<float>(params[off++]);
    ps.insert(names[i], std::move(t));
  }
  return ps;
}

double loss(const FlatModel& m, const MatrixXd& x, std::span<const int> labels) {
  check_labels(m, x, labels);
  const Activations a = forward_flat(m, x, false);
  const double n = double(x.rows());
  if (m.objective == Objective::mse_reconstruction)
    return (a.output - x).squaredNorm() / (n * double(x.cols()));
  double total = 0.0;
  for (Eigen::Index r = 0; r < a.output.rows(); ++r) {
    const double mx = a.output.row(r).maxCoeff();
    const double lse = mx + std::log((a.output.row(r).array() - mx).exp().sum());
    total += lse - a.output(r, labels[std::size_t(r)]);
  }
  return total / n;
}

std::vector<double> gradient(const FlatModel& m, const MatrixXd& x, std::span<const int> labels) {
  check_labels(m, x, labels);
  const Activations a = forward_flat(m, x);
  const Views v = views_of(m, m.params.data());
  const double n = double(x.rows());

  // d loss / d output-layer pre-activation
  MatrixXd g;
  if (m.objective == Objective::cross_entropy) {
    g = a.output;
    for (Eigen::Index r = 0; r < g.rows(); ++r) g(r, labels[std::size_t(r)]) -= 1.0;
    g /= n;
  } else {
    g = 2.0 * (a.output - x) / (n * double(x.cols()));
  }

  std::vector<double> out(m.params.size(), 0.0);
  const Layout l = layout_of(m);
  const int D = m.in_dim, h = m.hidden_dim, k = m.out_dim;
  Eigen::Map<RowMat>(out.data() + l.out_w, k, h) = g.transpose() * a.hidden2;
  Eigen::Map<VectorXd>(out.data() + l.out_b, k) = g.colwise().sum().transpose();

  const MatrixXd d2 = ((g * v.out_w).array() * (1.0 - a.hidden2.array().square())).matrix();
  Eigen::Map<RowMat>(out.data() + l.w2, h, h) = d2.transpose() * a.hidden1;
  Eigen::Map<VectorXd>(out.data() + l.b2, h) = d2.colwise().sum().transpose();

  const MatrixXd d1 = ((d2 * v.w2).array() * (1.0 - a.hidden1.array().square())).matrix();
  Eigen::Map<RowMat>(out.data() + l.w1, h, D) = d1.transpose() * x;
  Eigen::Map<VectorXd>(out.data() + l.b1, h) = d1.colwise().sum().transpose();
  return out;
}

Activations forward(const ParameterSet& weights, const MatrixXd& inputs, Objective objective) {
  return forward_flat(FlatModel::from(weights, objective), inputs);
}

double loss(const ParameterSet& weights, const MatrixXd& inputs, std::span<const int> labels,
            Objective objective) {
  return loss(FlatModel::from(weights, objective), inputs, labels);
}

ParameterSet backward(const ParameterSet& weights, const MatrixXd& inputs,
                      std::span<const int> labels, Objective objective) {
  FlatModel m = FlatModel::from(weights, objective);
  m.params = gradient(m, inputs, labels);
  ParameterSet grads;
  for (const auto& [name, t] : weights.tensors()) grads.insert(name, Tensor::zeros(t.shape));
  return merge(grads, m.to_parameter_set());
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               std::int64_t t, const AdamHyper& hp) {
  if (t < 1) throw Error(Errc::argument, "adam step index must be >= 1");
  if (grads.size() != params.size()) throw Error(Errc::argument, "gradient size mismatch");
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  const double c1 = 1.0 - std::pow(hp.beta1, double(t));
  const double c2 = 1.0 - std::pow(hp.beta2, double(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * grads[i];
    state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= hp.learning_rate * m_hat / (std::sqrt(v_hat) + hp.eps);
  }
}

void adam_step(ParameterSet& weights, const ParameterSet& grads, AdamState& state,
               std::int64_t t, const AdamHyper& hyper) {
  validate_compatibility(weights, grads);
  std::vector<double> p, g;
  for (float f : flatten(weights, Subset::all)) p.push_back(double(f));
  for (float f : flatten(grads, Subset::all)) g.push_back(double(f));
  adam_step(p, g, state, t, hyper);
  std::size_t off = 0;
  ParameterSet out;
  for (const auto& [name, tensor] : weights.tensors()) {
    Tensor u = Tensor::zeros(tensor.shape);
    for (float& f : u.data) f = static_cast<float>(p[off++]);
    out.insert(name, std::move(u));
  }
  out.meta() = weights.meta();
  weights = std::move(out);
}

// ---------------------------------------------------------------------------
// Training

ParameterSet train_autoencoder(const ParameterSet& init, const ToyTask& task,
                               const ToyTaskConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  FlatModel model = FlatModel::from(init, Objective::mse_reconstruction);
  MatrixXd corpus(task.src_unlabeled.inputs.rows() + task.tgt_unlabeled.inputs.rows(),
                  task.src_unlabeled.inputs.cols());
  corpus << task.src_unlabeled.inputs, task.tgt_unlabeled.inputs;
  auto rng = make_rng(seed, Stream::shuffle, 0);
  train(model, corpus, {}, cfg.pretrain_epochs, cfg, rng);
  ParameterSet trained = model.to_parameter_set();
  trained.meta() = init.meta();
  return trained;
}

ParameterSet pretrain_autoencoder(const ParameterSet& init, const ToyTask& task,
                                  const ToyTaskConfig& cfg, std::uint64_t seed) {
  const ParameterSet trained = train_autoencoder(init, task, cfg, seed);
  ParameterSet out;
  for (const auto& [name, t] : trained.tensors())
    if (name.starts_with(kEncoderPrefix)) out.insert(name, t);
  const ParameterSet head = init_head(cfg, seed);
  for (const auto& [name, t] : head.tensors()) out.insert(name, t);
  out.meta() = init.meta();
  out.meta()["role"] = "pretrained";
  return out;
}

double reconstruction_mse(const ParameterSet& autoencoder, const ToyTask& task) {
  MatrixXd corpus(task.src_unlabeled.inputs.rows() + task.tgt_unlabeled.inputs.rows(),
                  task.src_unlabeled.inputs.cols());
  corpus << task.src_unlabeled.inputs, task.tgt_unlabeled.inputs;
  return loss(autoencoder, corpus, {}, Objective::mse_reconstruction);
}

std::string_view to_string(Role role) {
  switch (role) {
    case Role::src: return "src";
    case Role::tgt: return "tgt";
    case Role::bilingual: return "bilingual";
  }
  return "other";
}

ParameterSet finetune_on(const ParameterSet& pretrained,
                         std::span<const ToyDataset* const> train_sets, const ToyTaskConfig& cfg,
                         std::uint64_t seed, std::uint64_t stream_index) {
  validate(cfg);
  Eigen::Index rows = 0;
  for (const ToyDataset* ds : train_sets) rows += ds->inputs.rows();
  if (train_sets.empty() || rows == 0) throw Error(Errc::argument, "empty training set");
  MatrixXd inputs(rows, train_sets.front()->inputs.cols());
  std::vector<int> labels;
  Eigen::Index at = 0;
  for (const ToyDataset* ds : train_sets) {
    inputs.middleRows(at, ds->inputs.rows()) = ds->inputs;
    at += ds->inputs.rows();
    labels.insert(labels.end(), ds->labels.begin(), ds->labels.end());
  }
  FlatModel model = FlatModel::from(pretrained, Objective::cross_entropy);
  auto rng = make_rng(seed, Stream::shuffle, stream_index);
  train(model, inputs, labels, cfg.finetune_epochs, cfg, rng);
  return merge(pretrained, model.to_parameter_set());
}

ParameterSet finetune(const ParameterSet& pretrained, const ToyTask& task, Role role,
                      const ToyTaskConfig& cfg, std::uint64_t seed) {
  std::vector<const ToyDataset*> sets;
  if (role != Role::tgt) sets.push_back(&task.src_train);
  if (role != Role::src) sets.push_back(&task.tgt_train);
  ParameterSet out = finetune_on(pretrained, sets, cfg, seed, 1 + std::uint64_t(role));
  out.meta()["role"] = std::string(to_string(role));
  return out;
}

std::vector<int> predict(const ParameterSet& weights, const MatrixXd& inputs) {
  const FlatModel m = FlatModel::from(weights, Objective::cross_entropy);
  const Activations a = forward_flat(m, inputs, false);
  std::vector<int> out(static_cast<std::size_t>(inputs.rows()));
  for (Eigen::Index r = 0; r < a.output.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < a.output.cols(); ++c)
      if (a.output(r, c) > a.output(r, best)) best = c;
    out[std::size_t(r)] = int(best);
  }
  return out;
}

double evaluate_accuracy(const ParameterSet& weights, const ToyDataset& dev) {
  if (dev.size() == 0) throw Error(Errc::argument, "empty evaluation set");
  const std::vector<int> pred = predict(weights, dev.inputs);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == dev.labels[i];
  return double(correct) / double(dev.size());
}

EvaluatorBinding make_accuracy_binding(const ToyTask& task, const std::string& task_id,
                                       Domain source, Domain target) {
  auto name = [&](Domain d) { return task_id + (d == Domain::src ? ":src-dev" : ":tgt-dev"); };
  auto sets = std::make_shared<std::map<std::string, ToyDataset>>();
  sets->emplace(name(Domain::src), task.src_dev);
  sets->emplace(name(Domain::tgt), task.tgt_dev);
  EvaluatorBinding b;
  b.source_dataset = name(source);
  b.target_dataset = name(target);
  b.metric = "acc";
  b.evaluate = [sets](const ParameterSet& w, const std::string& dataset) {
    auto it = sets->find(dataset);
    if (it == sets->end()) throw Error(Errc::argument, "unknown dataset " + dataset);
    return evaluate_accuracy(w, it->second);
  };
  return b;
}

// ---------------------------------------------------------------------------
// Experiment driver

SeedRun run_seed(const ToyTaskConfig& cfg, std::uint64_t seed, const TransferOptions& options) {
  const ToyTask task = generate_task(cfg, seed);
  const ParameterSet pretrained =
      pretrain_autoencoder(init_autoencoder(cfg, seed), task, cfg, seed);

  SeedRun run;
  run.seed = seed;
  const std::string init_hash = content_hash(pretrained);
  run.theta_src = finetune(pretrained, task, Role::src, cfg, seed);
  run.theta_tgt = finetune(pretrained, task, Role::tgt, cfg, seed);
  run.theta_bi = finetune(pretrained, task, Role::bilingual, cfg, seed);
  for (ParameterSet* ps : {&run.theta_src, &run.theta_tgt, &run.theta_bi})
    ps->meta()["init"] = init_hash;

  std::ostringstream id;
  id << "toy-" << content_hash(pretrained) << "-seed" << seed;
  EvalOptions eval;
  eval.subset = options.subset;
  eval.threads = options.threads;
  const auto grid_1d = build_grid_1d(options.grid_1d);

  RecordTags forward_tags{"src", "tgt", "toy", std::int64_t(seed)};
  run.records_1d = evaluate_grid_1d(run.theta_src, run.theta_bi, grid_1d,
                                    make_accuracy_binding(task, id.str()), forward_tags, eval);
  RecordTags swapped_tags{"tgt", "src", "toy", std::int64_t(seed)};
  auto swapped = evaluate_grid_1d(run.theta_tgt, run.theta_bi, grid_1d,
                                  make_accuracy_binding(task, id.str(), Domain::tgt, Domain::src),
                                  swapped_tags, eval);
  run.records_1d.insert(run.records_1d.end(), swapped.begin(), swapped.end());
  sort_records(run.records_1d);

  if (options.run_2d) {
    const auto grid_2d = build_grid_2d(options.grid_2d);
    run.records_2d = evaluate_grid_2d(run.theta_bi, run.theta_src, run.theta_tgt, grid_2d,
                                      make_accuracy_binding(task, id.str()), forward_tags, eval);
  }
  return run;
}

TransferResult run_transfer_experiment(const ToyTaskConfig& cfg, int n_seeds,
                                       const TransferOptions& options) {
  validate(cfg);
  if (n_seeds < 1) throw Error(Errc::argument, "need at least one seed");
  TransferResult result;
  result.runs.resize(std::size_t(n_seeds));
  {
    // Seeds share nothing; each worker owns its slot.
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const unsigned workers = std::min<unsigned>(hw, unsigned(n_seeds));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_seeds));
    TransferOptions inner = options;
    if (workers > 1) inner.threads = 1;
    auto work = [&](unsigned w) {
      for (std::size_t k = w; k < std::size_t(n_seeds); k += workers) {
        try {
          result.runs[k] = run_seed(cfg, cfg.seed + k, inner);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      }
    };
    if (workers <= 1) {
      work(0);
    } else {
      std::vector<std::jthread> pool;
      for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w);
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  std::vector<EvaluationRecord> all;
  for (const auto& run : result.runs) {
    all.insert(all.end(), run.records_1d.begin(), run.records_1d.end());
    all.insert(all.end(), run.records_2d.begin(), run.records_2d.end());
  }
  sort_records(all);
  result.normalized = normalize_by_reference(std::move(all));

  std::vector<EvaluationRecord> one_d, two_d;
  for (const auto& r : result.normalized)
    (r.kind == GridKind::one_d ? one_d : two_d).push_back(r);
  result.aggregates.push_back({GridKind::one_d, Scope::pooled, aggregate_records(one_d, Scope::pooled)});
  result.aggregates.push_back({GridKind::one_d, Scope::per_pair, aggregate_records(one_d, Scope::per_pair)});
  if (!two_d.empty())
    result.aggregates.push_back({GridKind::two_d, Scope::per_pair, aggregate_records(two_d, Scope::per_pair)});
  return result;
}

FlatnessComparison compare_encoder_flatness(const ToyTaskConfig& cfg, int n_seeds,
                                            const TransferOptions& options) {
  auto score = [&](int hidden, int epochs) {
    ToyTaskConfig variant = cfg;
    variant.hidden_dim = hidden;
    variant.pretrain_epochs = epochs;
    TransferOptions opts = options;
    opts.run_2d = true;
    const TransferResult r = run_transfer_experiment(variant, n_seeds, opts);
    const AggregateSet& surface = r.aggregates.back();
    return flatness_score(surface_from_aggregates(surface.points, Side::target, "src-tgt/toy"));
  };
  return {score(16, 10), score(64, 40)};
}

}  // namespace wsi::toy
