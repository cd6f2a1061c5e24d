#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "prefconflict/conflict.hpp"
#include "prefconflict/corpus.hpp"
#include "prefconflict/reward_model.hpp"
#include "prefconflict/sampler.hpp"

namespace prefconflict::experiments {

// A fully-resolved experiment description: dataset source, strategies to
// compare, shared train/eval budgets, and the seed list. Serializes to/from
// JSON; the serialized form is embedded verbatim in every report so results
// are self-describing.
struct ExperimentSpec {
  std::string name = "sampler-comparison";
  std::filesystem::path dataset_file;  // empty: generate synthetic data per seed
  corpus::SyntheticConfig synthetic;   // consulted when dataset_file is empty
  double test_fraction = 0.2;          // applied when the source carries no split
  reward::Featurizer featurizer;
  reward::TrainConfig train;           // per-run seed is overwritten by each run
  int eval_cap = 1000;
  std::vector<sampler::StrategyConfig> strategies;
  std::vector<std::uint64_t> seeds;
  int jobs = 1;

  void validate() const;
};

ExperimentSpec spec_from_json(const std::string& text);
std::string spec_to_json(const ExperimentSpec& spec);

// The imbalanced-ratio comparison the toolkit ships as its default: six
// dimensions at 10:10:10:10:1:1, four strategies, N=2000 steps, five seeds.
ExperimentSpec default_comparison_spec();

// Mean and sample standard deviation over seeds, with the raw per-seed values
// kept for majority-style checks.
struct SeedStat {
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> per_seed;
};

SeedStat seed_stat(std::vector<double> values);

struct ComparisonReport {
  std::vector<std::string> dimensions;       // evaluation order
  std::vector<std::string> strategies;       // strategy labels, spec order
  // label -> dimension -> accuracy stat (fractions in [0, 1])
  std::map<std::string, std::map<std::string, SeedStat>> accuracy;
  // label -> stat of min-over-dimensions accuracy (computed per seed first)
  std::map<std::string, SeedStat> min_accuracy;
  // label -> per-seed lambda/accuracy trajectory CSV (hybrid only)
  std::map<std::string, std::vector<std::string>> trajectories;
  std::string resolved_spec;  // spec_to_json of the ExperimentSpec that produced this
};

// One model per {strategy x seed} under identical step budgets; per-dimension
// test accuracy; runs execute in parallel on spec.jobs threads and reduce by
// key, so the report is identical at any job count.
ComparisonReport run_sampler_comparison(const ExperimentSpec& spec);

std::string comparison_report_text(const ComparisonReport& r);
std::string comparison_report_json(const ComparisonReport& r);
std::string comparison_csv(const ComparisonReport& r);  // plot data
std::string comparison_svg(const ComparisonReport& r);  // grouped bar chart

// --- conflict sweep ----------------------------------------------------------

struct SweepConfig {
  std::string name = "conflict-sweep";
  corpus::SyntheticConfig base;      // per-point seed/conflict are overwritten
  std::vector<double> conflicts;     // >= 1 value, each in [0, 1]
  conflict::AdcProtocolConfig protocol;
  double test_fraction = 0.2;
  std::vector<std::uint64_t> seeds;
  int jobs = 1;

  void validate() const;
};

SweepConfig sweep_from_json(const std::string& text);
std::string sweep_to_json(const SweepConfig& config);

struct SweepPoint {
  double conflict = 0.0;
  SeedStat adc;  // percentage points squared
};

struct SweepReport {
  std::vector<SweepPoint> points;  // ascending conflict order
  std::string resolved_spec;
};

// For each (conflict, seed): generate a synthetic dataset, split it, run the
// deviation-matrix protocol, record the ADC. Point/seed runs are independent
// and parallel.
SweepReport run_conflict_sweep(const SweepConfig& config);

std::string sweep_report_text(const SweepReport& r);
std::string sweep_report_json(const SweepReport& r);
std::string sweep_csv(const SweepReport& r);
std::string sweep_svg(const SweepReport& r);  // line chart with stddev band

}  // namespace prefconflict::experiments
