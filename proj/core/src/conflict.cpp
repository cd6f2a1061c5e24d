#include "prefconflict/conflict.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "prefconflict/error.hpp"
#include "prefconflict/pool.hpp"
#include "prefconflict/rng.hpp"
#include "prefconflict/sampler.hpp"
#include "prefconflict/text.hpp"

namespace prefconflict::conflict {

void AdcProtocolConfig::validate() const {
  if (base_steps < 0) throw UsageError("base_steps must be >= 0");
  if (finetune_steps < 0) throw UsageError("finetune_steps must be >= 0");
  if (eval_cap < 1) throw UsageError("eval_cap must be >= 1");
  if (batch_size < 1) throw UsageError("batch_size must be >= 1");
  if (!(base_learning_rate > 0.0)) throw UsageError("base_learning_rate must be > 0");
  if (!(finetune_learning_rate > 0.0)) throw UsageError("finetune_learning_rate must be > 0");
  if (!(l2 >= 0.0)) throw UsageError("l2 must be >= 0");
  if (jobs < 1) throw UsageError("jobs must be >= 1");
  featurizer.validate();
}

double DeviationMatrix::deviation(std::size_t i, std::size_t s) const {
  return finetuned[i][s] - base_accuracy[s];
}

namespace {

std::vector<double> to_pp(const std::vector<std::string>& order, const reward::EvalVector& ev) {
  std::vector<double> out;
  out.reserve(order.size());
  for (const auto& name : order) out.push_back(100.0 * ev.accuracy.at(name));
  return out;
}

}  // namespace

ProtocolModels run_protocol_models(const corpus::PreferenceDataset& ds,
                                   const AdcProtocolConfig& cfg) {
  cfg.validate();
  if (!ds.has_split()) {
    throw InputError("ADC protocol needs a dataset with a train/test split");
  }
  const sampler::PartitionView tests = sampler::test_view(ds);
  const sampler::PartitionView trains = sampler::train_view(ds);
  if (tests.size() < 2 || trains.size() != tests.size()) {
    throw InputError("ADC protocol needs >= 2 dimensions with both train and test pairs");
  }
  const std::size_t n = tests.size();

  reward::TrainConfig base_tc;
  base_tc.learning_rate = cfg.base_learning_rate;
  base_tc.steps = cfg.base_steps;
  base_tc.batch_size = cfg.batch_size;
  base_tc.l2 = cfg.l2;
  base_tc.seed = derive_seed(cfg.seed, "adc-base");

  sampler::StrategyConfig mixed;
  mixed.strategy = sampler::Strategy::all_mixed;

  ProtocolModels models;
  models.dimensions = tests.names;
  const reward::RewardModel init = reward::make_model(cfg.featurizer);
  models.base = sampler::train_with_strategy(ds, init, base_tc, mixed).model;
  models.finetuned.assign(n, {});

  parallel_for(n, cfg.jobs, [&](std::size_t i) {
    reward::TrainConfig tc;
    tc.learning_rate = cfg.finetune_learning_rate;
    tc.steps = cfg.finetune_steps;
    tc.batch_size = cfg.batch_size;
    tc.l2 = cfg.l2;
    tc.seed = derive_seed(cfg.seed, "adc-branch", static_cast<std::uint64_t>(i));

    sampler::StrategyConfig single;
    single.strategy = sampler::Strategy::single;
    single.single_dimension = tests.names[i];

    models.finetuned[i] = sampler::train_with_strategy(ds, models.base, tc, single).model;
  });
  return models;
}

DeviationMatrix run_adc_protocol(const corpus::PreferenceDataset& ds,
                                 const AdcProtocolConfig& cfg) {
  const ProtocolModels models = run_protocol_models(ds, cfg);
  const auto test_map = sampler::test_view(ds).as_map();

  reward::EvalPlan eval_plan;
  eval_plan.cap_per_dim = cfg.eval_cap;
  eval_plan.seed = derive_seed(cfg.seed, "adc-eval");

  DeviationMatrix dev;
  dev.dimensions = models.dimensions;
  dev.protocol = cfg;
  dev.base_accuracy =
      to_pp(models.dimensions, reward::evaluate(models.base, test_map, eval_plan));
  dev.finetuned.assign(models.finetuned.size(), {});
  parallel_for(models.finetuned.size(), cfg.jobs, [&](std::size_t i) {
    dev.finetuned[i] =
        to_pp(models.dimensions, reward::evaluate(models.finetuned[i], test_map, eval_plan));
  });
  return dev;
}

double compute_adc(const DeviationMatrix& dev) {
  const std::size_t n = dev.size();
  if (n < 2) throw UsageError("ADC needs n >= 2 dimensions");
  if (dev.base_accuracy.size() != n || dev.finetuned.size() != n) {
    throw InputError("deviation matrix shape mismatch");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (dev.finetuned[i].size() != n) throw InputError("deviation matrix row size mismatch");
    double row = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      if (s == i) continue;  // own dimension excluded
      const double d = std::min(dev.deviation(i, s), 0.0);
      row += d * d;
    }
    total += row / static_cast<double>(n - 1);
  }
  return total / static_cast<double>(n);
}

double compute_adc_b(const std::vector<double>& base,
                     const std::vector<std::vector<double>>& finetuned) {
  if (base.empty()) throw InputError("ADC-B needs m >= 1 benchmark dimensions");
  if (finetuned.empty()) throw InputError("ADC-B needs n >= 1 fine-tuned vectors");
  const std::size_t m = base.size();
  double total = 0.0;
  for (const auto& row : finetuned) {
    if (row.size() != m) {
      throw InputError("ADC-B vector length mismatch: got " + std::to_string(row.size()) +
                       ", baseline has " + std::to_string(m));
    }
    double acc = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double d = std::min(row[j] - base[j], 0.0);  // all m included here
      acc += d * d;
    }
    total += acc / static_cast<double>(m);
  }
  return total / static_cast<double>(finetuned.size());
}

double normal_adc_estimate(double sigma, std::int64_t n_samples, std::uint64_t seed) {
  if (sigma < 0.0) throw UsageError("sigma must be >= 0");
  if (n_samples < 1) throw UsageError("n_samples must be >= 1");
  if (sigma == 0.0) return 0.0;
  Rng rng(seed);
  double acc = 0.0;
  for (std::int64_t k = 0; k < n_samples; ++k) {
    const double x = sigma * rng.normal();
    const double neg = std::min(x, 0.0);
    acc += neg * neg;
  }
  return acc / static_cast<double>(n_samples);
}

// --- ADC-B over an external evaluator -------------------------------------------

DatasetEvaluator::DatasetEvaluator(const corpus::PreferenceDataset& ds, int eval_cap,
                                   std::uint64_t seed)
    : ds_(ds), eval_cap_(eval_cap), seed_(seed) {
  const sampler::PartitionView view =
      ds.has_split() ? sampler::test_view(ds) : sampler::train_view(ds);
  if (view.size() < 1) throw InputError("benchmark dataset has no evaluable partitions");
  dimensions_ = view.names;
  partitions_ = view.as_map();
}

std::vector<double> DatasetEvaluator::evaluate(const reward::RewardModel& model) const {
  reward::EvalPlan plan;
  plan.cap_per_dim = eval_cap_;
  plan.seed = seed_;
  const reward::EvalVector ev = reward::evaluate(model, partitions_, plan);
  std::vector<double> out;
  out.reserve(dimensions_.size());
  for (const auto& name : dimensions_) out.push_back(100.0 * ev.accuracy.at(name));
  return out;
}

AdcBResult run_adc_b(const reward::RewardModel& base,
                     const std::vector<reward::RewardModel>& finetuned,
                     const BenchmarkEvaluator& evaluator) {
  if (finetuned.empty()) throw InputError("ADC-B needs at least one fine-tuned model");
  AdcBResult r;
  r.benchmark_dimensions = evaluator.dimensions();
  r.base = evaluator.evaluate(base);
  for (const auto& m : finetuned) r.finetuned.push_back(evaluator.evaluate(m));
  r.value = compute_adc_b(r.base, r.finetuned);
  return r;
}

// --- reports ---------------------------------------------------------------------

namespace {

std::string fmt_pp(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%8.3f", v);
  return buf;
}

void emit_config(std::ostringstream& out, const AdcProtocolConfig& cfg, const char* prefix) {
  out << prefix << "base_steps=" << cfg.base_steps << " finetune_steps=" << cfg.finetune_steps
      << " eval_cap=" << cfg.eval_cap << " batch_size=" << cfg.batch_size
      << " base_lr=" << format_real6(cfg.base_learning_rate)
      << " finetune_lr=" << format_real6(cfg.finetune_learning_rate)
      << " l2=" << format_real6(cfg.l2) << " feature_dim=" << cfg.featurizer.feature_dim
      << " hash_seed=" << cfg.featurizer.hash_seed << " seed=" << cfg.seed << '\n';
}

}  // namespace

std::string adc_report_text(const DeviationMatrix& dev) {
  const std::size_t n = dev.size();
  std::ostringstream out;
  out << "ADC deviation report\n";
  emit_config(out, dev.protocol, "protocol: ");
  out << "\nbase accuracy U (pp):\n";
  for (std::size_t s = 0; s < n; ++s) {
    out << "  " << dev.dimensions[s] << ": " << fmt_pp(dev.base_accuracy[s]) << '\n';
  }
  out << "\ndeviation matrix (row = fine-tuned dimension; entries = U-bar - U, pp):\n";
  out << "  row\\col       ";
  for (const auto& d : dev.dimensions) out << ' ' << d;
  out << '\n';
  for (std::size_t i = 0; i < n; ++i) {
    out << "  " << dev.dimensions[i] << ":";
    for (std::size_t s = 0; s < n; ++s) {
      out << ' ' << fmt_pp(dev.deviation(i, s)) << (s == i ? "*" : " ");
    }
    out << '\n';
  }
  out << "  (* = own dimension, excluded from ADC)\n";
  out << "\nper-row negative deviation breakdown (pp^2, /(n-1)):\n";
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      if (s == i) continue;
      const double d = std::min(dev.deviation(i, s), 0.0);
      row += d * d;
    }
    row /= static_cast<double>(n - 1);
    out << "  " << dev.dimensions[i] << ": " << format_real6(row) << '\n';
  }
  out << "\nADC = " << format_real6(compute_adc(dev)) << " pp^2\n";
  return out.str();
}

std::string adc_report_csv(const DeviationMatrix& dev) {
  const std::size_t n = dev.size();
  std::ostringstream out;
  out << "record,dimension";
  for (const auto& d : dev.dimensions) out << ',' << d;
  out << '\n';
  out << "base,";
  for (std::size_t s = 0; s < n; ++s) out << ',' << format_real6(dev.base_accuracy[s]);
  out << '\n';
  for (std::size_t i = 0; i < n; ++i) {
    out << "finetuned," << dev.dimensions[i];
    for (std::size_t s = 0; s < n; ++s) out << ',' << format_real6(dev.finetuned[i][s]);
    out << '\n';
  }
  for (std::size_t i = 0; i < n; ++i) {
    out << "deviation," << dev.dimensions[i];
    for (std::size_t s = 0; s < n; ++s) out << ',' << format_real6(dev.deviation(i, s));
    out << '\n';
  }
  out << "adc,";
  out << ',' << format_real6(compute_adc(dev)) << '\n';
  return out.str();
}

std::string adc_b_report_text(const AdcBResult& r) {
  std::ostringstream out;
  out << "ADC-B report\n\nbaseline V (pp):\n";
  for (std::size_t j = 0; j < r.benchmark_dimensions.size(); ++j) {
    out << "  " << r.benchmark_dimensions[j] << ": " << fmt_pp(r.base[j]) << '\n';
  }
  out << "\nper-model benchmark vectors (pp):\n";
  for (std::size_t i = 0; i < r.finetuned.size(); ++i) {
    out << "  model " << i << ":";
    for (double v : r.finetuned[i]) out << ' ' << fmt_pp(v);
    out << '\n';
  }
  out << "\nADC-B = " << format_real6(r.value) << " pp^2\n";
  return out.str();
}

std::string adc_b_report_csv(const AdcBResult& r) {
  std::ostringstream out;
  out << "record,model";
  for (const auto& d : r.benchmark_dimensions) out << ',' << d;
  out << '\n';
  out << "base,";
  for (double v : r.base) out << ',' << format_real6(v);
  out << '\n';
  for (std::size_t i = 0; i < r.finetuned.size(); ++i) {
    out << "finetuned," << i;
    for (double v : r.finetuned[i]) out << ',' << format_real6(v);
    out << '\n';
  }
  out << "adc_b,";
  out << ',' << format_real6(r.value) << '\n';
  return out.str();
}

}  // namespace prefconflict::conflict
