#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prefconflict/corpus.hpp"
#include "prefconflict/reward_model.hpp"

namespace prefconflict::conflict {

// Protocol knobs for the deviation-matrix run. Accuracies everywhere in this
// module are percentage points in [0, 100].
struct AdcProtocolConfig {
  int base_steps = 1000;      // k0: mixed warm-up before the copies are made
  int finetune_steps = 4000;  // M: per-dimension further fine-tuning
  int eval_cap = 1000;        // per-dimension test subsample cap
  int batch_size = 128;
  double base_learning_rate = 0.1;
  double finetune_learning_rate = 0.1;
  double l2 = 0.0;
  reward::Featurizer featurizer;
  std::uint64_t seed = 0;
  int jobs = 1;

  void validate() const;
};

struct DeviationMatrix {
  std::vector<std::string> dimensions;
  std::vector<double> base_accuracy;           // U, percentage points
  std::vector<std::vector<double>> finetuned;  // row i = U-bar after tuning on dim i
  AdcProtocolConfig protocol;

  std::size_t size() const { return dimensions.size(); }
  // finetuned[i][s] - base_accuracy[s]
  double deviation(std::size_t i, std::size_t s) const;
};

// The models the protocol trains: a mixed-data base plus one per-dimension
// fine-tuned branch, in dimension order. Exposed so benchmark-style
// evaluations (ADC-B) can rescore the same models elsewhere.
struct ProtocolModels {
  std::vector<std::string> dimensions;
  reward::RewardModel base;
  std::vector<reward::RewardModel> finetuned;  // parallel to dimensions
};

ProtocolModels run_protocol_models(const corpus::PreferenceDataset& ds,
                                   const AdcProtocolConfig& cfg);

// Train a base model for base_steps on the full mixed dataset, evaluate it,
// then clone and fine-tune one copy per dimension on that dimension's train
// slice alone and evaluate each. The n fine-tunes are independent given the
// base model and may run on cfg.jobs threads; branch seeds derive from
// (seed, i), so the matrix is identical at any job count. The dataset must
// carry a train/test split.
DeviationMatrix run_adc_protocol(const corpus::PreferenceDataset& ds,
                                 const AdcProtocolConfig& cfg);

// Mean over rows of the negative-deviation second moment, own dimension
// excluded, normalized by n-1. Units: (percentage points)^2.
double compute_adc(const DeviationMatrix& dev);

// Benchmark variant: deviations of each fine-tuned model's benchmark vector
// against the shared baseline, all m benchmark dimensions included,
// normalized by m.
double compute_adc_b(const std::vector<double>& base,
                     const std::vector<std::vector<double>>& finetuned);

// Monte Carlo estimate of E[(min(x,0))^2] for x ~ N(0, sigma^2); converges to
// sigma^2/2. sigma = 0 returns exactly 0.
double normal_adc_estimate(double sigma, std::int64_t n_samples, std::uint64_t seed);

// External evaluator abstraction for ADC-B: m named ability dimensions, each
// scored in percentage points.
class BenchmarkEvaluator {
 public:
  virtual ~BenchmarkEvaluator() = default;
  virtual const std::vector<std::string>& dimensions() const = 0;
  virtual std::vector<double> evaluate(const reward::RewardModel& model) const = 0;
};

// Benchmark backed by a labeled dataset: per-dimension pairwise accuracy on
// the test slices (or whole partitions when the dataset carries no split).
// Holds a reference; the dataset must outlive the evaluator.
class DatasetEvaluator : public BenchmarkEvaluator {
 public:
  DatasetEvaluator(const corpus::PreferenceDataset& ds, int eval_cap, std::uint64_t seed);

  const std::vector<std::string>& dimensions() const override { return dimensions_; }
  std::vector<double> evaluate(const reward::RewardModel& model) const override;

 private:
  const corpus::PreferenceDataset& ds_;
  std::vector<std::string> dimensions_;
  std::map<std::string, reward::PairRefs> partitions_;
  int eval_cap_;
  std::uint64_t seed_;
};

struct AdcBResult {
  std::vector<std::string> benchmark_dimensions;  // m names
  std::vector<double> base;                       // V
  std::vector<std::vector<double>> finetuned;     // row i = V-bar_i
  double value = 0.0;
};

AdcBResult run_adc_b(const reward::RewardModel& base,
                     const std::vector<reward::RewardModel>& finetuned,
                     const BenchmarkEvaluator& evaluator);

// Report emitters: a human-readable table and comma-separated values, both
// carrying the config echo, U, the U-bar matrix, per-row negative-deviation
// breakdowns, and the ADC value.
std::string adc_report_text(const DeviationMatrix& dev);
std::string adc_report_csv(const DeviationMatrix& dev);
std::string adc_b_report_text(const AdcBResult& r);
std::string adc_b_report_csv(const AdcBResult& r);

}  // namespace prefconflict::conflict
