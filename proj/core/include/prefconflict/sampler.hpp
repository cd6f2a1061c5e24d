#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "prefconflict/corpus.hpp"
#include "prefconflict/reward_model.hpp"

namespace prefconflict::sampler {

// Adaptive sampling weights over the n dimension partitions. The invariants
// after every update: sum(lambdas) = 1 and every lambda >= epsilon_floor.
// adherence_threshold is carried verbatim from configuration into every
// artifact but no operation consumes it; its semantics are undefined upstream
// and the toolkit records rather than guesses them.
struct SamplerState {
  std::vector<double> lambdas;
  double eta = 1e-4;
  int update_interval = 128;
  double epsilon_floor = 1e-6;
  double adherence_threshold = 0.80;
};

SamplerState init_uniform(int n);  // lambda_i = 1/n; n >= 2

// lambda_i <- lambda_i + eta*(mean(u) - u_i), clamped at epsilon_floor, then
// renormalized to sum 1. `accuracies` uses the same index order as lambdas
// (fractions in [0,1]).
SamplerState update_weights(const SamplerState& state, const std::vector<double>& accuracies);

struct SamplingPlan {
  std::vector<int> counts;  // per dimension, sums to the requested batch size

  int batch_size() const;
};

// floor(batch_size * lambda_i) per dimension; the remainder is allocated by
// independent categorical draws (with replacement) over the fractional parts
// of batch_size * lambda, so E[counts_i] = batch_size * lambda_i exactly.
SamplingPlan allocate_batch(const SamplerState& state, int batch_size, std::uint64_t rng_seed);

// Baseline weight vectors reusing the same allocate/draw machinery.
std::vector<double> lambda_uniform_equal(int n);
std::vector<double> lambda_all_mixed(const std::vector<std::size_t>& partition_sizes);
std::vector<double> lambda_single(int n, int index);

// Resolved per-dimension pair lists in declared dimension order, restricted
// to one split side. Only nonempty partitions appear.
struct PartitionView {
  std::vector<std::string> names;
  std::vector<reward::PairRefs> pairs;  // parallel to names

  std::size_t size() const { return names.size(); }
  std::vector<std::size_t> sizes() const;
  int index_of(const std::string& name) const;  // -1 when absent
  std::map<std::string, reward::PairRefs> as_map() const;
};

PartitionView train_view(const corpus::PreferenceDataset& ds);
PartitionView test_view(const corpus::PreferenceDataset& ds);

// Deterministically moves a per-dimension validation slice out of `train`:
// round(fraction*K) pairs, at least 1 and at most min(cap, K-1) per
// dimension. A single-pair partition is shared between both sides (degenerate
// but survivable), which the caller can detect via the returned flag.
struct ValidationCarve {
  PartitionView train;
  PartitionView validation;
  bool overlapped = false;  // true iff some partition had to be shared
};

ValidationCarve carve_validation(const PartitionView& view, double fraction, int cap,
                                 std::uint64_t seed);

// Multi-epoch replay over the partitions: each dimension is consumed
// cursor-wise; on exhaustion the partition is reshuffled with a seed derived
// from (seed, dimension index, epoch) and replay continues. Within one
// partition epoch no pair repeats.
class ReplaySource {
 public:
  ReplaySource(PartitionView view, std::uint64_t seed);

  reward::Batch draw(const SamplingPlan& plan);

  const PartitionView& view() const { return view_; }
  const std::vector<std::int64_t>& consumed() const { return consumed_; }

 private:
  PartitionView view_;
  std::uint64_t seed_;
  struct Cursor {
    std::vector<std::size_t> order;
    std::size_t pos = 0;
    std::uint64_t epoch = 0;
  };
  std::vector<Cursor> cursors_;
  std::vector<std::int64_t> consumed_;

  void reshuffle(std::size_t dim);
};

// --- strategy-driven training -------------------------------------------------

enum class Strategy { hybrid, uniform_equal, all_mixed, single };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& name);

struct StrategyConfig {
  Strategy strategy = Strategy::hybrid;
  std::string single_dimension;  // required iff strategy == single
  double eta = 1e-4;
  int update_interval = 128;
  double epsilon_floor = 1e-6;
  double adherence_threshold = 0.80;  // recorded, never consumed (see SamplerState)
  // Hybrid weight updates are scored on a held-out slice carved from the
  // train side, not on training batches.
  double validation_fraction = 0.2;
  int validation_cap = 256;

  std::string label() const;  // unique-ish report key, e.g. "single:dim1"
  void validate() const;
};

struct TrajectoryPoint {
  int step = 0;
  std::vector<double> lambdas;
  std::vector<double> accuracy;  // validation accuracy per dimension, fractions
};

struct TrainRun {
  reward::RewardModel model;
  std::vector<std::string> dimensions;     // order for all vectors below
  std::vector<TrajectoryPoint> trajectory; // nonempty only for hybrid
  std::vector<std::int64_t> consumed;      // training pairs drawn per dimension
};

// One model trained for config.steps batches composed by the chosen strategy.
// All randomness (validation carve, replay shuffles, remainder draws) derives
// from train_config.seed.
TrainRun train_with_strategy(const corpus::PreferenceDataset& ds,
                             const reward::RewardModel& init,
                             const reward::TrainConfig& train_config,
                             const StrategyConfig& strategy);

// One update per line: step, lambdas, then validation accuracies.
std::string trajectory_csv(const TrainRun& run);

// Per-dimension consumed-pair counts, one dimension per line.
std::string consumed_csv(const TrainRun& run);

}  // namespace prefconflict::sampler
