#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "prefconflict/corpus.hpp"

namespace prefconflict::reward {

// Hashed bag-of-tokens featurizer: a desk-scale stand-in for a transformer
// backbone behind the same scorer interface. feature_dim must be a power of
// two; buckets are mask-based. Prompt tokens land in the lower half of the
// bucket range and response tokens in the upper half, so the two namespaces
// never collide with each other.
struct Featurizer {
  int feature_dim = 1 << 14;
  std::uint64_t hash_seed = 0;

  void validate() const;  // feature_dim >= 2 and a power of two
  bool operator==(const Featurizer&) const = default;
};

// Sparse feature vector: (bucket, count) sorted by bucket, unique buckets.
// Counts are real-valued so difference vectors reuse the representation.
using SparseVec = std::vector<std::pair<std::uint32_t, double>>;

SparseVec featurize(const Featurizer& f, std::string_view prompt, std::string_view response);

// phi(prompt, chosen) - phi(prompt, rejected). Prompt features cancel, so the
// result only carries response-side buckets; exact zeros are dropped.
SparseVec diff_features(const Featurizer& f, const corpus::PreferencePair& pair);

// Linear scorer r(x,y) = w . phi(x,y) + b. The bias is carried for interface
// completeness but never trained: it cancels in every pairwise delta.
struct RewardModel {
  Featurizer featurizer;
  std::vector<double> weights;
  double bias = 0.0;
};

RewardModel make_model(Featurizer f);  // zero-initialized weights

inline RewardModel clone_model(const RewardModel& m) { return m; }  // value semantics

double score(const RewardModel& m, std::string_view prompt, std::string_view response);

// score(chosen) - score(rejected); the Bradley-Terry delta for one pair.
double pair_delta(const RewardModel& m, const corpus::PreferencePair& pair);

// Bradley-Terry negative log-likelihood of one pair as a function of the
// delta: -log sigmoid(delta), stabilized so |delta| up to 1e4 cannot
// overflow. Gradient with respect to delta is sigmoid(delta) - 1 in (-1, 0).
double bt_loss(double delta);
double bt_grad(double delta);

struct TrainConfig {
  double learning_rate = 0.1;
  int steps = 1000;
  int batch_size = 128;
  double l2 = 0.0;
  std::uint64_t seed = 0;
  int eval_every = 128;

  void validate() const;
};

using Batch = std::vector<const corpus::PreferencePair*>;

// Pulls the batch for one step. Receives the in-progress model so adaptive
// samplers can evaluate it mid-training. Pointers must stay valid for the
// whole train() call (they normally point into an immutable dataset).
using BatchStream = std::function<Batch(int step, const RewardModel& current)>;

// Plain minibatch gradient descent on the Bradley-Terry loss, optional L2
// (l2/2 * |w|^2). Runs exactly config.steps batches; deterministic given the
// stream; the input model is left untouched. Throws NumericalError naming the
// step if the mean batch loss goes non-finite.
RewardModel train(const RewardModel& model, const BatchStream& stream, const TrainConfig& config);

using PairRefs = std::vector<const corpus::PreferencePair*>;

// Mean Bradley-Terry loss over a fixed pair set plus the L2 term; the exact
// objective train() descends. Exposed for gradient checks.
double dataset_loss(const RewardModel& m, const PairRefs& pairs, double l2 = 0.0);

// Dense analytic gradient of dataset_loss with respect to the weights.
std::vector<double> dataset_gradient(const RewardModel& m, const PairRefs& pairs, double l2 = 0.0);

struct EvalVector {
  std::map<std::string, double> accuracy;  // fraction in [0,1]
  std::map<std::string, int> counts;       // pairs actually evaluated
};

struct EvalPlan {
  int cap_per_dim = 1000;  // evaluation subsample cap per dimension
  std::uint64_t seed = 0;  // subsample seed; only consulted when the cap binds
};

// Per-dimension accuracy under the strict rule: correct iff
// score(chosen) > score(rejected); ties count as incorrect. Partitions larger
// than the cap are subsampled deterministically per (seed, dimension).
EvalVector evaluate(const RewardModel& m, const std::map<std::string, PairRefs>& partitions,
                    const EvalPlan& plan);

// Checkpoints are versioned text: a header, hexfloat sparse weights, and a
// SHA-256 digest over everything above it. Hexfloats make the round trip
// bit-exact.
void save_checkpoint(const RewardModel& m, const std::filesystem::path& path);
RewardModel load_checkpoint(const std::filesystem::path& path);

// Load plus a compatibility gate: header featurizer must equal `expected`.
RewardModel load_checkpoint(const std::filesystem::path& path, const Featurizer& expected);

}  // namespace prefconflict::reward
