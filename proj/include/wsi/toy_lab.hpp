#pragma once

// Desk-scale transfer lab. Two "languages" are two linear views of the same
// latent class structure: x = A_domain * z, where the target mixing matrix is
// an orthonormalized perturbation of the source one. An MLP encoder is
// pretrained as an autoencoder on both domains, then fine-tuned on source
// labels, target labels, or both.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wsi/aggregate.hpp"
#include "wsi/grid_eval.hpp"
#include "wsi/tensor_store.hpp"

namespace wsi::toy {

struct ToyTaskConfig {
  int classes = 5;
  int latent_dim = 8;
  int obs_dim = 32;
  int hidden_dim = 32;
  double shift_gamma = 0.3;
  double noise_sigma = 0.5;
  int n_unlabeled = 4000;
  int n_train = 2000;
  int n_dev = 1000;
  int pretrain_epochs = 20;
  int finetune_epochs = 10;
  int batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;

  friend bool operator==(const ToyTaskConfig&, const ToyTaskConfig&) = default;
};

void validate(const ToyTaskConfig& cfg);
ToyTaskConfig config_from_json(std::string_view text);
std::string config_to_json(const ToyTaskConfig& cfg);
ToyTaskConfig load_config(const std::filesystem::path& path);

enum class Domain { src, tgt };
enum class Split { unlabeled, train, dev };

/// Independent generator streams. A stream depends only on (seed, purpose,
/// index), so adding seeds or roles never shifts another stream.
enum class Stream : std::uint64_t { data = 1, init = 2, shuffle = 3 };
std::mt19937_64 make_rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0);

struct ToyDataset {
  Eigen::MatrixXd inputs;  // n x D
  std::vector<int> labels;
  Domain domain = Domain::src;
  Split split = Split::dev;

  std::size_t size() const { return labels.size(); }
};

struct ToyTask {
  Eigen::MatrixXd class_means;  // K x d
  Eigen::MatrixXd mix_src;      // D x d, orthonormal columns
  Eigen::MatrixXd mix_tgt;
  ToyDataset src_unlabeled, src_train, src_dev;
  ToyDataset tgt_unlabeled, tgt_train, tgt_dev;

  const ToyDataset& get(Domain domain, Split split) const;
};

/// Q factor of a thin QR with the diagonal of R made nonnegative.
Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& m);

ToyTask generate_task(const ToyTaskConfig& cfg, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Model. Tensor names:
//   encoder.w1 [h, D]  encoder.b1 [h]  encoder.w2 [h, h]  encoder.b2 [h]
//   head.w     [K, h]  head.b     [K]
//   decoder.w  [D, h]  decoder.b  [D]   (pretraining only)
// Both encoder layers use tanh; the head is linear + softmax; the decoder is
// linear.

enum class Objective { mse_reconstruction, cross_entropy };

struct Activations {
  Eigen::MatrixXd hidden1;  // n x h
  Eigen::MatrixXd hidden2;  // n x h
  /// Class probabilities (cross_entropy) or reconstruction (mse).
  Eigen::MatrixXd output;
};

ParameterSet init_autoencoder(const ToyTaskConfig& cfg, std::uint64_t seed);
ParameterSet init_head(const ToyTaskConfig& cfg, std::uint64_t seed);

Activations forward(const ParameterSet& weights, const Eigen::MatrixXd& inputs,
                    Objective objective = Objective::cross_entropy);

/// Mean objective over the batch. MSE averages over all n * D entries.
double loss(const ParameterSet& weights, const Eigen::MatrixXd& inputs,
            std::span<const int> labels, Objective objective);

/// Exact gradient of `loss`, same names and shapes as the parameters the
/// objective touches (encoder plus head, or encoder plus decoder).
ParameterSet backward(const ParameterSet& weights, const Eigen::MatrixXd& inputs,
                      std::span<const int> labels, Objective objective);

/// Double-precision counterparts used by training and the gradient check.
/// Parameters are the flattened objective tensors in lexicographic name order.
struct FlatModel {
  int in_dim = 0;
  int hidden_dim = 0;
  int out_dim = 0;  // K for cross_entropy, D for mse_reconstruction
  Objective objective = Objective::cross_entropy;
  std::vector<std::string> names;
  std::vector<Shape> shapes;
  std::vector<double> params;

  static FlatModel from(const ParameterSet& weights, Objective objective);
  ParameterSet to_parameter_set() const;
};

double loss(const FlatModel& model, const Eigen::MatrixXd& inputs, std::span<const int> labels);
std::vector<double> gradient(const FlatModel& model, const Eigen::MatrixXd& inputs,
                             std::span<const int> labels);

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
};

/// Bias-corrected Adam update at step t >= 1. Grows the state on first use.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               std::int64_t t, const AdamHyper& hyper);
void adam_step(ParameterSet& weights, const ParameterSet& grads, AdamState& state,
               std::int64_t t, const AdamHyper& hyper);

/// Encoder and decoder after reconstruction training on the mixed unlabeled corpus.
ParameterSet train_autoencoder(const ParameterSet& init, const ToyTask& task,
                               const ToyTaskConfig& cfg, std::uint64_t seed);

/// Reconstruction training on the shuffled src+tgt unlabeled mixture. Returns
/// the encoder with a freshly initialized head; the decoder is dropped.
ParameterSet pretrain_autoencoder(const ParameterSet& init, const ToyTask& task,
                                  const ToyTaskConfig& cfg, std::uint64_t seed);

double reconstruction_mse(const ParameterSet& autoencoder, const ToyTask& task);

enum class Role { src, tgt, bilingual };
std::string_view to_string(Role role);

/// Cross-entropy training of encoder and head on the role's labeled data.
/// The bilingual role trains on the shuffled concatenation of both train sets.
ParameterSet finetune(const ParameterSet& pretrained, const ToyTask& task, Role role,
                      const ToyTaskConfig& cfg, std::uint64_t seed);
/// Same, on an explicit list of training sets.
ParameterSet finetune_on(const ParameterSet& pretrained,
                         std::span<const ToyDataset* const> train_sets,
                         const ToyTaskConfig& cfg, std::uint64_t seed, std::uint64_t stream_index);

/// Fraction of argmax-correct predictions; ties go to the lowest class index.
double evaluate_accuracy(const ParameterSet& weights, const ToyDataset& dev);
std::vector<int> predict(const ParameterSet& weights, const Eigen::MatrixXd& inputs);

/// Accuracy evaluator over the task's dev sets. `source` and `target` pick
/// which domain plays each side.
EvaluatorBinding make_accuracy_binding(const ToyTask& task, const std::string& task_id,
                                       Domain source = Domain::src, Domain target = Domain::tgt);

struct SeedRun {
  std::uint64_t seed = 0;
  ParameterSet theta_src;
  ParameterSet theta_tgt;
  ParameterSet theta_bi;
  std::vector<EvaluationRecord> records_1d;  // both line pairings
  std::vector<EvaluationRecord> records_2d;
};

struct TransferOptions {
  GridSpec grid_1d = GridSpec::default_1d();
  GridSpec grid_2d = GridSpec::default_2d();
  Subset subset = Subset::all;
  bool run_2d = true;
  unsigned threads = 0;
};

struct TransferResult {
  std::vector<SeedRun> runs;
  std::vector<EvaluationRecord> normalized;  // all records, normalized
  std::vector<AggregateSet> aggregates;
};

SeedRun run_seed(const ToyTaskConfig& cfg, std::uint64_t seed, const TransferOptions& options);

/// Seeds cfg.seed, cfg.seed + 1, ..., cfg.seed + n_seeds - 1.
TransferResult run_transfer_experiment(const ToyTaskConfig& cfg, int n_seeds,
                                       const TransferOptions& options = {});

struct FlatnessComparison {
  double small_encoder = 0.0;  // h = 16, 10 pretraining epochs
  double large_encoder = 0.0;  // h = 64, 40 pretraining epochs
};

/// Flatness of the seed-averaged normalized target surface for a small and a
/// large encoder. Exploratory; no ordering is guaranteed.
FlatnessComparison compare_encoder_flatness(const ToyTaskConfig& cfg, int n_seeds,
                                            const TransferOptions& options = {});

}  // namespace wsi::toy
