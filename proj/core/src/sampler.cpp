#include "prefconflict/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <sstream>

#include "prefconflict/error.hpp"
#include "prefconflict/rng.hpp"
#include "prefconflict/text.hpp"

namespace prefconflict::sampler {

SamplerState init_uniform(int n) {
  if (n < 2) throw UsageError("sampler needs n >= 2 dimensions, got " + std::to_string(n));
  SamplerState s;
  s.lambdas.assign(static_cast<std::size_t>(n), 1.0 / static_cast<double>(n));
  return s;
}

SamplerState update_weights(const SamplerState& state, const std::vector<double>& accuracies) {
  const std::size_t n = state.lambdas.size();
  if (accuracies.size() != n) {
    throw InputError("update_weights: got " + std::to_string(accuracies.size()) +
                     " accuracies for " + std::to_string(n) + " dimensions");
  }
  const double mean =
      std::accumulate(accuracies.begin(), accuracies.end(), 0.0) / static_cast<double>(n);
  SamplerState out = state;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double v = state.lambdas[i] + state.eta * (mean - accuracies[i]);
    v = std::max(v, state.epsilon_floor);
    out.lambdas[i] = v;
    sum += v;
  }
  for (double& v : out.lambdas) v /= sum;
  return out;
}

int SamplingPlan::batch_size() const {
  return std::accumulate(counts.begin(), counts.end(), 0);
}

SamplingPlan allocate_batch(const SamplerState& state, int batch_size, std::uint64_t rng_seed) {
  if (batch_size < 1) throw UsageError("batch_size must be >= 1");
  const std::size_t n = state.lambdas.size();
  SamplingPlan plan;
  plan.counts.assign(n, 0);
  std::vector<double> frac(n, 0.0);
  int used = 0;
  for (std::size_t i = 0; i < n; ++i) {
    // The nudge absorbs representation error in batch*lambda (0.3*10 is
    // 2.9999... in binary); floors like (5,3,2) for (0.5,0.3,0.2) stay exact.
    const double want = static_cast<double>(batch_size) * state.lambdas[i] + 1e-9;
    const int c = static_cast<int>(std::floor(want));
    plan.counts[i] = c;
    frac[i] = std::max(want - static_cast<double>(c), 0.0);
    used += c;
  }
  while (used > batch_size) {  // only reachable through accumulated float error
    auto it = std::max_element(plan.counts.begin(), plan.counts.end());
    --*it;
    --used;
  }
  // Remainder seats go to the dimensions whose floor left demand unmet,
  // drawn with replacement proportional to the fractional parts. That makes
  // E[counts_i] = batch_size * lambda_i hold exactly for every lambda, not
  // just when batch*lambda is integral.
  double frac_total = 0.0;
  for (double f : frac) frac_total += f;
  Rng rng(rng_seed);
  for (; used < batch_size; ++used) {
    const std::span<const double> weights =
        frac_total > 0.0 ? std::span<const double>(frac) : std::span<const double>(state.lambdas);
    plan.counts[rng.categorical(weights)] += 1;
  }
  return plan;
}

std::vector<double> lambda_uniform_equal(int n) {
  return init_uniform(n).lambdas;
}

std::vector<double> lambda_all_mixed(const std::vector<std::size_t>& partition_sizes) {
  if (partition_sizes.size() < 2) throw UsageError("all_mixed needs >= 2 partitions");
  double total = 0.0;
  for (std::size_t k : partition_sizes) {
    if (k == 0) throw InputError("all_mixed: empty partition");
    total += static_cast<double>(k);
  }
  std::vector<double> lambdas;
  lambdas.reserve(partition_sizes.size());
  for (std::size_t k : partition_sizes) lambdas.push_back(static_cast<double>(k) / total);
  return lambdas;
}

std::vector<double> lambda_single(int n, int index) {
  if (n < 1) throw UsageError("lambda_single: n must be >= 1");
  if (index < 0 || index >= n) {
    throw UsageError("lambda_single: index " + std::to_string(index) + " out of range");
  }
  std::vector<double> lambdas(static_cast<std::size_t>(n), 0.0);
  lambdas[static_cast<std::size_t>(index)] = 1.0;
  return lambdas;
}

// --- partition views -----------------------------------------------------------

std::vector<std::size_t> PartitionView::sizes() const {
  std::vector<std::size_t> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(p.size());
  return out;
}

int PartitionView::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<int>(i);
  }
  return -1;
}

std::map<std::string, reward::PairRefs> PartitionView::as_map() const {
  std::map<std::string, reward::PairRefs> out;
  for (std::size_t i = 0; i < names.size(); ++i) out[names[i]] = pairs[i];
  return out;
}

namespace {

PartitionView side_view(const corpus::PreferenceDataset& ds, corpus::Split side) {
  PartitionView view;
  for (const auto& name : ds.dimensions.names) {
    if (ds.partitions.find(name) == ds.partitions.end()) continue;
    reward::PairRefs refs;
    for (const auto& id : ds.partition_ids(name, side)) {
      refs.push_back(&ds.pair_by_id(id));
    }
    if (refs.empty()) continue;
    view.names.push_back(name);
    view.pairs.push_back(std::move(refs));
  }
  return view;
}

}  // namespace

PartitionView train_view(const corpus::PreferenceDataset& ds) {
  return side_view(ds, corpus::Split::train);
}

PartitionView test_view(const corpus::PreferenceDataset& ds) {
  return side_view(ds, corpus::Split::test);
}

ValidationCarve carve_validation(const PartitionView& view, double fraction, int cap,
                                 std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw UsageError("validation fraction must be in (0, 1)");
  }
  if (cap < 1) throw UsageError("validation cap must be >= 1");
  ValidationCarve out;
  out.train.names = view.names;
  out.validation.names = view.names;
  for (std::size_t d = 0; d < view.names.size(); ++d) {
    const reward::PairRefs& all = view.pairs[d];
    if (all.size() < 2) {
      // Too small to hold anything out: the single pair serves both roles.
      out.train.pairs.push_back(all);
      out.validation.pairs.push_back(all);
      out.overlapped = true;
      continue;
    }
    std::vector<std::size_t> order(all.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, "validation:" + view.names[d]));
    rng.shuffle(order);
    std::size_t n_val = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(all.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, std::min<std::size_t>(
                                                static_cast<std::size_t>(cap), all.size() - 1));
    reward::PairRefs val, train;
    for (std::size_t i = 0; i < order.size(); ++i) {
      (i < n_val ? val : train).push_back(all[order[i]]);
    }
    out.validation.pairs.push_back(std::move(val));
    out.train.pairs.push_back(std::move(train));
  }
  return out;
}

// --- replay --------------------------------------------------------------------

ReplaySource::ReplaySource(PartitionView view, std::uint64_t seed)
    : view_(std::move(view)), seed_(seed) {
  cursors_.resize(view_.size());
  consumed_.assign(view_.size(), 0);
  for (std::size_t d = 0; d < view_.size(); ++d) reshuffle(d);
}

void ReplaySource::reshuffle(std::size_t dim) {
  Cursor& c = cursors_[dim];
  c.order.resize(view_.pairs[dim].size());
  std::iota(c.order.begin(), c.order.end(), 0);
  Rng rng(derive_seed(derive_seed(seed_, "replay", static_cast<std::uint64_t>(dim)), "epoch",
                      c.epoch));
  rng.shuffle(c.order);
  c.pos = 0;
}

reward::Batch ReplaySource::draw(const SamplingPlan& plan) {
  if (plan.counts.size() != view_.size()) {
    throw InputError("draw_batch: plan covers " + std::to_string(plan.counts.size()) +
                     " dimensions, view has " + std::to_string(view_.size()));
  }
  reward::Batch batch;
  batch.reserve(static_cast<std::size_t>(plan.batch_size()));
  for (std::size_t d = 0; d < view_.size(); ++d) {
    int need = plan.counts[d];
    if (need == 0) continue;
    if (view_.pairs[d].empty()) {
      throw InputError("draw_batch: dimension \"" + view_.names[d] + "\" has no pairs");
    }
    Cursor& c = cursors_[d];
    while (need > 0) {
      if (c.pos == c.order.size()) {
        ++c.epoch;
        reshuffle(d);
      }
      batch.push_back(view_.pairs[d][c.order[c.pos]]);
      ++c.pos;
      --need;
      ++consumed_[d];
    }
  }
  return batch;
}

// --- strategy-driven training ----------------------------------------------------

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::hybrid: return "hybrid";
    case Strategy::uniform_equal: return "uniform-equal";
    case Strategy::all_mixed: return "all-mixed";
    case Strategy::single: return "single";
  }
  return "?";
}

Strategy strategy_from_string(const std::string& name) {
  if (name == "hybrid") return Strategy::hybrid;
  if (name == "uniform-equal" || name == "uniform_equal") return Strategy::uniform_equal;
  if (name == "all-mixed" || name == "all_mixed") return Strategy::all_mixed;
  if (name == "single") return Strategy::single;
  throw UsageError("unknown sampling strategy \"" + name + "\"");
}

std::string StrategyConfig::label() const {
  return strategy == Strategy::single ? "single:" + single_dimension : to_string(strategy);
}

void StrategyConfig::validate() const {
  if (!(eta > 0.0)) throw UsageError("eta must be > 0");
  if (update_interval < 1) throw UsageError("update_interval must be >= 1");
  if (!(epsilon_floor > 0.0 && epsilon_floor < 1.0)) {
    throw UsageError("epsilon_floor must be in (0, 1)");
  }
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw UsageError("validation_fraction must be in (0, 1)");
  }
  if (validation_cap < 1) throw UsageError("validation_cap must be >= 1");
  if (strategy == Strategy::single && single_dimension.empty()) {
    throw UsageError("single strategy needs a dimension name");
  }
}

TrainRun train_with_strategy(const corpus::PreferenceDataset& ds,
                             const reward::RewardModel& init,
                             const reward::TrainConfig& train_config,
                             const StrategyConfig& strategy) {
  train_config.validate();
  strategy.validate();

  PartitionView full = train_view(ds);
  if (full.size() < 1) throw InputError("training: dataset has no labeled train pairs");
  if (full.size() < 2 && strategy.strategy != Strategy::single) {
    throw InputError("training: strategy \"" + strategy.label() +
                     "\" needs >= 2 nonempty dimensions");
  }

  const std::uint64_t seed = train_config.seed;
  PartitionView train = full;
  PartitionView validation;
  if (strategy.strategy == Strategy::hybrid) {
    ValidationCarve carve = carve_validation(full, strategy.validation_fraction,
                                             strategy.validation_cap,
                                             derive_seed(seed, "validation"));
    train = std::move(carve.train);
    validation = std::move(carve.validation);
  }

  const int n = static_cast<int>(train.size());
  SamplerState state;
  state.eta = strategy.eta;
  state.update_interval = strategy.update_interval;
  state.epsilon_floor = strategy.epsilon_floor;
  state.adherence_threshold = strategy.adherence_threshold;
  switch (strategy.strategy) {
    case Strategy::hybrid:
      state.lambdas = lambda_uniform_equal(n);
      break;
    case Strategy::uniform_equal:
      state.lambdas = lambda_uniform_equal(n);
      break;
    case Strategy::all_mixed:
      state.lambdas = lambda_all_mixed(train.sizes());
      break;
    case Strategy::single: {
      const int idx = train.index_of(strategy.single_dimension);
      if (idx < 0) {
        throw UsageError("single strategy: unknown or empty dimension \"" +
                         strategy.single_dimension + "\"");
      }
      state.lambdas = lambda_single(n, idx);
      break;
    }
  }

  ReplaySource replay(train, derive_seed(seed, "replay-source"));
  TrainRun run;
  run.dimensions = train.names;

  const auto validation_map = validation.names.empty()
                                  ? std::map<std::string, reward::PairRefs>{}
                                  : validation.as_map();
  auto eval_lambdas = [&](int step, const reward::RewardModel& current) {
    reward::EvalPlan plan;
    plan.cap_per_dim = strategy.validation_cap;
    plan.seed = derive_seed(seed, "validation-eval");
    const reward::EvalVector ev = reward::evaluate(current, validation_map, plan);
    std::vector<double> acc;
    acc.reserve(train.names.size());
    for (const auto& name : train.names) acc.push_back(ev.accuracy.at(name));
    if (step > 0) state = update_weights(state, acc);
    run.trajectory.push_back({step, state.lambdas, std::move(acc)});
  };

  reward::BatchStream stream = [&](int step, const reward::RewardModel& current) {
    if (strategy.strategy == Strategy::hybrid && step % state.update_interval == 0) {
      eval_lambdas(step, current);
    }
    const SamplingPlan plan =
        allocate_batch(state, train_config.batch_size,
                       derive_seed(seed, "allocate", static_cast<std::uint64_t>(step)));
    return replay.draw(plan);
  };

  run.model = reward::train(init, stream, train_config);
  run.consumed = replay.consumed();
  return run;
}

std::string trajectory_csv(const TrainRun& run) {
  std::ostringstream out;
  out << "step";
  for (const auto& d : run.dimensions) out << ",lambda:" << d;
  for (const auto& d : run.dimensions) out << ",accuracy:" << d;
  out << '\n';
  for (const auto& p : run.trajectory) {
    out << p.step;
    for (double v : p.lambdas) out << ',' << format_real6(v);
    for (double v : p.accuracy) out << ',' << format_real6(v);
    out << '\n';
  }
  return out.str();
}

std::string consumed_csv(const TrainRun& run) {
  std::ostringstream out;
  out << "dimension,pairs_drawn\n";
  for (std::size_t i = 0; i < run.dimensions.size(); ++i) {
    out << run.dimensions[i] << ',' << run.consumed[i] << '\n';
  }
  return out.str();
}

}  // namespace prefconflict::sampler
