#include "prefconflict/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "json.hpp"
#include "prefconflict/error.hpp"
#include "prefconflict/pool.hpp"
#include "prefconflict/rng.hpp"
#include "prefconflict/text.hpp"

namespace prefconflict::experiments {

using nlohmann::json;

// --- spec (de)serialization ---------------------------------------------------

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const char* where) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (known.find(key) == known.end()) {
      throw UsageError(std::string(where) + ": unknown field \"" + key + "\"");
    }
  }
}

json synthetic_to_json(const corpus::SyntheticConfig& c) {
  return {{"n_dims", c.n_dims},          {"pairs_per_dim", c.pairs_per_dim},
          {"conflict", c.conflict},      {"vocab_size", c.vocab_size},
          {"tokens_per_text", c.tokens_per_text}, {"seed", c.seed}};
}

corpus::SyntheticConfig synthetic_from_json(const json& j) {
  reject_unknown(j, {"n_dims", "pairs_per_dim", "conflict", "vocab_size", "tokens_per_text",
                     "seed"},
                 "synthetic");
  corpus::SyntheticConfig c;
  c.n_dims = j.value("n_dims", c.n_dims);
  if (j.contains("pairs_per_dim")) c.pairs_per_dim = j["pairs_per_dim"].get<std::vector<int>>();
  c.conflict = j.value("conflict", c.conflict);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.tokens_per_text = j.value("tokens_per_text", c.tokens_per_text);
  c.seed = j.value("seed", c.seed);
  return c;
}

json train_to_json(const reward::TrainConfig& t) {
  return {{"learning_rate", t.learning_rate},
          {"steps", t.steps},
          {"batch_size", t.batch_size},
          {"l2", t.l2},
          {"eval_every", t.eval_every}};
}

reward::TrainConfig train_from_json(const json& j) {
  reject_unknown(j, {"learning_rate", "steps", "batch_size", "l2", "eval_every"}, "train");
  reward::TrainConfig t;
  t.learning_rate = j.value("learning_rate", t.learning_rate);
  t.steps = j.value("steps", t.steps);
  t.batch_size = j.value("batch_size", t.batch_size);
  t.l2 = j.value("l2", t.l2);
  t.eval_every = j.value("eval_every", t.eval_every);
  return t;
}

json featurizer_to_json(const reward::Featurizer& f) {
  return {{"feature_dim", f.feature_dim}, {"hash_seed", f.hash_seed}};
}

reward::Featurizer featurizer_from_json(const json& j) {
  reject_unknown(j, {"feature_dim", "hash_seed"}, "featurizer");
  reward::Featurizer f;
  f.feature_dim = j.value("feature_dim", f.feature_dim);
  f.hash_seed = j.value("hash_seed", f.hash_seed);
  return f;
}

json strategy_to_json(const sampler::StrategyConfig& s) {
  json j = {{"strategy", sampler::to_string(s.strategy)},
            {"eta", s.eta},
            {"update_interval", s.update_interval},
            {"epsilon_floor", s.epsilon_floor},
            {"adherence_threshold", s.adherence_threshold},
            {"validation_fraction", s.validation_fraction},
            {"validation_cap", s.validation_cap}};
  if (!s.single_dimension.empty()) j["single_dimension"] = s.single_dimension;
  return j;
}

sampler::StrategyConfig strategy_from_json(const json& j) {
  reject_unknown(j,
                 {"strategy", "single_dimension", "eta", "update_interval", "epsilon_floor",
                  "adherence_threshold", "validation_fraction", "validation_cap"},
                 "strategy");
  sampler::StrategyConfig s;
  if (!j.contains("strategy")) throw UsageError("strategy: missing \"strategy\" field");
  s.strategy = sampler::strategy_from_string(j["strategy"].get<std::string>());
  s.single_dimension = j.value("single_dimension", std::string());
  s.eta = j.value("eta", s.eta);
  s.update_interval = j.value("update_interval", s.update_interval);
  s.epsilon_floor = j.value("epsilon_floor", s.epsilon_floor);
  s.adherence_threshold = j.value("adherence_threshold", s.adherence_threshold);
  s.validation_fraction = j.value("validation_fraction", s.validation_fraction);
  s.validation_cap = j.value("validation_cap", s.validation_cap);
  return s;
}

json parse_top(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw UsageError(std::string(what) + ": invalid JSON: " + e.what());
  }
}

double stddev_of(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

}  // namespace

void ExperimentSpec::validate() const {
  if (name.empty()) throw UsageError("experiment name must be nonempty");
  if (dataset_file.empty()) synthetic.validate();
  if (test_fraction <= 0.0 || test_fraction >= 1.0) {
    throw UsageError("test_fraction must be inside (0, 1)");
  }
  featurizer.validate();
  train.validate();
  if (eval_cap < 1) throw UsageError("eval_cap must be >= 1");
  if (strategies.empty()) throw UsageError("experiment needs at least one strategy");
  for (const auto& s : strategies) s.validate();
  {
    std::set<std::string> labels;
    for (const auto& s : strategies) {
      if (!labels.insert(s.label()).second) {
        throw UsageError("duplicate strategy \"" + s.label() + "\"");
      }
    }
  }
  if (seeds.empty()) throw UsageError("experiment needs at least one seed");
  if (jobs < 1) throw UsageError("jobs must be >= 1");
}

std::string spec_to_json(const ExperimentSpec& spec) {
  json strategies = json::array();
  for (const auto& s : spec.strategies) strategies.push_back(strategy_to_json(s));
  const json j = {{"name", spec.name},
                  {"dataset_file", spec.dataset_file.string()},
                  {"synthetic", synthetic_to_json(spec.synthetic)},
                  {"test_fraction", spec.test_fraction},
                  {"featurizer", featurizer_to_json(spec.featurizer)},
                  {"train", train_to_json(spec.train)},
                  {"eval_cap", spec.eval_cap},
                  {"strategies", strategies},
                  {"seeds", spec.seeds},
                  {"jobs", spec.jobs}};
  return j.dump(2) + "\n";
}

ExperimentSpec spec_from_json(const std::string& text) {
  const json j = parse_top(text, "experiment spec");
  reject_unknown(j,
                 {"name", "dataset_file", "synthetic", "test_fraction", "featurizer", "train",
                  "eval_cap", "strategies", "seeds", "jobs"},
                 "experiment spec");
  ExperimentSpec spec;
  spec.name = j.value("name", spec.name);
  spec.dataset_file = j.value("dataset_file", std::string());
  if (j.contains("synthetic")) spec.synthetic = synthetic_from_json(j["synthetic"]);
  spec.test_fraction = j.value("test_fraction", spec.test_fraction);
  if (j.contains("featurizer")) spec.featurizer = featurizer_from_json(j["featurizer"]);
  if (j.contains("train")) spec.train = train_from_json(j["train"]);
  spec.eval_cap = j.value("eval_cap", spec.eval_cap);
  if (j.contains("strategies")) {
    spec.strategies.clear();
    for (const auto& s : j["strategies"]) spec.strategies.push_back(strategy_from_json(s));
  }
  if (j.contains("seeds")) spec.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  spec.jobs = j.value("jobs", spec.jobs);
  spec.validate();
  return spec;
}

ExperimentSpec default_comparison_spec() {
  ExperimentSpec spec;
  spec.synthetic.n_dims = 6;
  spec.synthetic.pairs_per_dim = {500, 500, 500, 500, 50, 50};  // 10:10:10:10:1:1
  spec.synthetic.conflict = 0.2;
  spec.train.steps = 2000;
  spec.strategies.resize(3);
  spec.strategies[0].strategy = sampler::Strategy::hybrid;
  spec.strategies[1].strategy = sampler::Strategy::uniform_equal;
  spec.strategies[2].strategy = sampler::Strategy::all_mixed;
  spec.seeds = {1, 2, 3, 4, 5};
  return spec;
}

SeedStat seed_stat(std::vector<double> values) {
  SeedStat s;
  s.per_seed = std::move(values);
  if (s.per_seed.empty()) return s;
  double sum = 0.0;
  for (double v : s.per_seed) sum += v;
  s.mean = sum / static_cast<double>(s.per_seed.size());
  s.stddev = stddev_of(s.per_seed, s.mean);
  return s;
}

// --- sampler comparison ---------------------------------------------------------

namespace {

// The dataset one run trains on: a file source is loaded once and split per
// run seed when it carries no split; a synthetic source is regenerated with
// the run seed so paired strategies see identical data.
corpus::PreferenceDataset run_dataset(const ExperimentSpec& spec, std::uint64_t run_seed) {
  if (!spec.dataset_file.empty()) {
    auto ds = corpus::load_dataset(spec.dataset_file);
    if (ds.has_split()) return ds;
    return corpus::split_train_test(ds, spec.test_fraction, derive_seed(run_seed, "split"));
  }
  corpus::SyntheticConfig synth = spec.synthetic;
  synth.seed = run_seed;
  return corpus::split_train_test(corpus::generate_synthetic(synth), spec.test_fraction,
                                  derive_seed(run_seed, "split"));
}

}  // namespace

ComparisonReport run_sampler_comparison(const ExperimentSpec& spec) {
  spec.validate();
  const std::size_t n_strategies = spec.strategies.size();
  const std::size_t n_seeds = spec.seeds.size();

  struct RunOutput {
    std::map<std::string, double> accuracy;  // dimension -> test accuracy
    std::string trajectory;                  // nonempty for hybrid
  };
  std::vector<RunOutput> outputs(n_strategies * n_seeds);
  std::vector<std::string> dims_per_seed(n_seeds);  // evaluation order, seed-invariant

  parallel_for(n_strategies * n_seeds, spec.jobs, [&](std::size_t flat) {
    const std::size_t si = flat / n_seeds;
    const std::size_t ki = flat % n_seeds;
    const std::uint64_t run_seed = spec.seeds[ki];

    const auto ds = run_dataset(spec, run_seed);
    reward::TrainConfig tc = spec.train;
    tc.seed = run_seed;  // paired across strategies
    const auto init = reward::make_model(spec.featurizer);
    const auto run = sampler::train_with_strategy(ds, init, tc, spec.strategies[si]);

    const auto test = sampler::test_view(ds);
    const reward::EvalPlan plan{spec.eval_cap, derive_seed(run_seed, "experiment-eval")};
    const auto eval = reward::evaluate(run.model, test.as_map(), plan);

    auto& out = outputs[flat];
    out.accuracy = eval.accuracy;
    if (spec.strategies[si].strategy == sampler::Strategy::hybrid) {
      out.trajectory = sampler::trajectory_csv(run);
    }
    if (si == 0) {
      dims_per_seed[ki] = "";
      for (const auto& name : test.names) {
        dims_per_seed[ki] += dims_per_seed[ki].empty() ? name : "," + name;
      }
    }
  });

  ComparisonReport report;
  report.resolved_spec = spec_to_json(spec);
  {
    std::istringstream names(dims_per_seed[0]);
    std::string name;
    while (std::getline(names, name, ',')) report.dimensions.push_back(name);
  }
  for (const auto& s : spec.strategies) report.strategies.push_back(s.label());

  for (std::size_t si = 0; si < n_strategies; ++si) {
    const auto& label = report.strategies[si];
    std::vector<double> mins;
    std::map<std::string, std::vector<double>> per_dim;
    for (std::size_t ki = 0; ki < n_seeds; ++ki) {
      const auto& out = outputs[si * n_seeds + ki];
      double run_min = 1.0;
      for (const auto& dim : report.dimensions) {
        const auto it = out.accuracy.find(dim);
        if (it == out.accuracy.end()) {
          throw InputError("dimension \"" + dim + "\" missing from a run evaluation");
        }
        per_dim[dim].push_back(it->second);
        run_min = std::min(run_min, it->second);
      }
      mins.push_back(run_min);
      if (!out.trajectory.empty()) report.trajectories[label].push_back(out.trajectory);
    }
    for (auto& [dim, values] : per_dim) report.accuracy[label][dim] = seed_stat(values);
    report.min_accuracy[label] = seed_stat(mins);
  }
  return report;
}

// --- comparison emitters ----------------------------------------------------------

std::string comparison_report_text(const ComparisonReport& r) {
  std::ostringstream out;
  out << "sampler comparison (" << r.min_accuracy.begin()->second.per_seed.size()
      << " seed(s))\n\n";
  out << "  per-dimension test accuracy, mean +/- stddev over seeds\n";
  for (const auto& label : r.strategies) {
    out << "  " << label << "\n";
    for (const auto& dim : r.dimensions) {
      const auto& cell = r.accuracy.at(label).at(dim);
      out << "    " << dim << ": " << format_real6(cell.mean) << " +/- "
          << format_real6(cell.stddev) << "\n";
    }
    const auto& m = r.min_accuracy.at(label);
    out << "    min-dimension: " << format_real6(m.mean) << " +/- " << format_real6(m.stddev)
        << "\n";
  }
  return out.str();
}

std::string comparison_report_json(const ComparisonReport& r) {
  json acc = json::object();
  for (const auto& [label, dims] : r.accuracy) {
    for (const auto& [dim, cell] : dims) {
      acc[label][dim] = {{"mean", cell.mean},
                         {"stddev", cell.stddev},
                         {"per_seed", cell.per_seed}};
    }
    const auto& m = r.min_accuracy.at(label);
    acc[label]["__min__"] = {{"mean", m.mean}, {"stddev", m.stddev}, {"per_seed", m.per_seed}};
  }
  const json j = {{"dimensions", r.dimensions},
                  {"strategies", r.strategies},
                  {"accuracy", acc},
                  {"trajectories", r.trajectories},
                  {"spec", json::parse(r.resolved_spec)}};
  return j.dump(2) + "\n";
}

std::string comparison_csv(const ComparisonReport& r) {
  std::string out = "strategy,dimension,mean,stddev";
  const std::size_t n_seeds = r.min_accuracy.begin()->second.per_seed.size();
  for (std::size_t k = 0; k < n_seeds; ++k) out += ",seed" + std::to_string(k);
  out += "\n";
  auto row = [&](const std::string& label, const std::string& dim, const SeedStat& cell) {
    out += label + "," + dim + "," + format_real6(cell.mean) + "," + format_real6(cell.stddev);
    for (double v : cell.per_seed) out += "," + format_real6(v);
    out += "\n";
  };
  for (const auto& label : r.strategies) {
    for (const auto& dim : r.dimensions) row(label, dim, r.accuracy.at(label).at(dim));
    row(label, "min", r.min_accuracy.at(label));
  }
  return out;
}

namespace {

std::string svg_header(int width, int height) {
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
      << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  return out.str();
}

const char* const kSeriesColors[] = {"#4878d0", "#ee854a", "#6acc64", "#d65f5f",
                                     "#956cb4", "#8c613c"};

std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

std::string comparison_svg(const ComparisonReport& r) {
  const int width = 720, height = 360;
  const double left = 50, right = 20, top = 30, bottom = 60;
  const double plot_w = width - left - right, plot_h = height - top - bottom;
  const std::size_t n_dims = r.dimensions.size();
  const std::size_t n_strats = r.strategies.size();

  std::string svg = svg_header(width, height);
  // y axis: accuracy 0..1 with gridlines every 0.25
  for (int g = 0; g <= 4; ++g) {
    const double frac = g / 4.0;
    const double y = top + plot_h * (1.0 - frac);
    svg += "<line x1=\"" + svg_num(left) + "\" y1=\"" + svg_num(y) + "\" x2=\"" +
           svg_num(left + plot_w) + "\" y2=\"" + svg_num(y) +
           "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + svg_num(left - 8) + "\" y=\"" + svg_num(y + 4) +
           "\" font-size=\"11\" text-anchor=\"end\" font-family=\"sans-serif\">" +
           svg_num(frac) + "</text>\n";
  }
  const double group_w = plot_w / static_cast<double>(n_dims);
  const double bar_w = group_w * 0.8 / static_cast<double>(n_strats);
  for (std::size_t d = 0; d < n_dims; ++d) {
    const double gx = left + group_w * static_cast<double>(d) + group_w * 0.1;
    for (std::size_t s = 0; s < n_strats; ++s) {
      const auto& cell = r.accuracy.at(r.strategies[s]).at(r.dimensions[d]);
      const double h = plot_h * cell.mean;
      const double x = gx + bar_w * static_cast<double>(s);
      const double y = top + plot_h - h;
      svg += "<rect x=\"" + svg_num(x) + "\" y=\"" + svg_num(y) + "\" width=\"" +
             svg_num(bar_w * 0.9) + "\" height=\"" + svg_num(h) + "\" fill=\"" +
             kSeriesColors[s % 6] + "\"/>\n";
      // stddev whisker
      const double cx = x + bar_w * 0.45;
      const double y1 = top + plot_h * (1.0 - std::min(1.0, cell.mean + cell.stddev));
      const double y2 = top + plot_h * (1.0 - std::max(0.0, cell.mean - cell.stddev));
      svg += "<line x1=\"" + svg_num(cx) + "\" y1=\"" + svg_num(y1) + "\" x2=\"" + svg_num(cx) +
             "\" y2=\"" + svg_num(y2) + "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
    }
    svg += "<text x=\"" + svg_num(gx + group_w * 0.4) + "\" y=\"" +
           svg_num(top + plot_h + 16) +
           "\" font-size=\"11\" text-anchor=\"middle\" font-family=\"sans-serif\">" +
           r.dimensions[d] + "</text>\n";
  }
  // legend
  for (std::size_t s = 0; s < n_strats; ++s) {
    const double x = left + 120.0 * static_cast<double>(s);
    const double y = height - 24;
    svg += "<rect x=\"" + svg_num(x) + "\" y=\"" + svg_num(y) +
           "\" width=\"12\" height=\"12\" fill=\"" + kSeriesColors[s % 6] + "\"/>\n";
    svg += "<text x=\"" + svg_num(x + 16) + "\" y=\"" + svg_num(y + 10) +
           "\" font-size=\"11\" font-family=\"sans-serif\">" + r.strategies[s] + "</text>\n";
  }
  svg += "<text x=\"" + svg_num(width / 2.0) + "\" y=\"18\" font-size=\"13\" "
         "text-anchor=\"middle\" font-family=\"sans-serif\">per-dimension test accuracy"
         "</text>\n";
  svg += "</svg>\n";
  return svg;
}

// --- conflict sweep ----------------------------------------------------------------

void SweepConfig::validate() const {
  if (name.empty()) throw UsageError("sweep name must be nonempty");
  base.validate();
  if (conflicts.empty()) throw UsageError("sweep needs at least one conflict value");
  for (double c : conflicts) {
    if (!(c >= 0.0 && c <= 1.0)) throw UsageError("conflict values must be inside [0, 1]");
  }
  protocol.validate();
  if (test_fraction <= 0.0 || test_fraction >= 1.0) {
    throw UsageError("test_fraction must be inside (0, 1)");
  }
  if (seeds.empty()) throw UsageError("sweep needs at least one seed");
  if (jobs < 1) throw UsageError("jobs must be >= 1");
}

std::string sweep_to_json(const SweepConfig& c) {
  const json j = {{"name", c.name},
                  {"synthetic", synthetic_to_json(c.base)},
                  {"conflicts", c.conflicts},
                  {"protocol",
                   {{"base_steps", c.protocol.base_steps},
                    {"finetune_steps", c.protocol.finetune_steps},
                    {"eval_cap", c.protocol.eval_cap},
                    {"batch_size", c.protocol.batch_size},
                    {"base_learning_rate", c.protocol.base_learning_rate},
                    {"finetune_learning_rate", c.protocol.finetune_learning_rate},
                    {"l2", c.protocol.l2},
                    {"featurizer", featurizer_to_json(c.protocol.featurizer)}}},
                  {"test_fraction", c.test_fraction},
                  {"seeds", c.seeds},
                  {"jobs", c.jobs}};
  return j.dump(2) + "\n";
}

SweepConfig sweep_from_json(const std::string& text) {
  const json j = parse_top(text, "sweep config");
  reject_unknown(
      j, {"name", "synthetic", "conflicts", "protocol", "test_fraction", "seeds", "jobs"},
      "sweep config");
  SweepConfig c;
  c.name = j.value("name", c.name);
  if (j.contains("synthetic")) c.base = synthetic_from_json(j["synthetic"]);
  if (j.contains("conflicts")) c.conflicts = j["conflicts"].get<std::vector<double>>();
  if (j.contains("protocol")) {
    const auto& p = j["protocol"];
    reject_unknown(p,
                   {"base_steps", "finetune_steps", "eval_cap", "batch_size",
                    "base_learning_rate", "finetune_learning_rate", "l2", "featurizer"},
                   "protocol");
    c.protocol.base_steps = p.value("base_steps", c.protocol.base_steps);
    c.protocol.finetune_steps = p.value("finetune_steps", c.protocol.finetune_steps);
    c.protocol.eval_cap = p.value("eval_cap", c.protocol.eval_cap);
    c.protocol.batch_size = p.value("batch_size", c.protocol.batch_size);
    c.protocol.base_learning_rate = p.value("base_learning_rate", c.protocol.base_learning_rate);
    c.protocol.finetune_learning_rate =
        p.value("finetune_learning_rate", c.protocol.finetune_learning_rate);
    c.protocol.l2 = p.value("l2", c.protocol.l2);
    if (p.contains("featurizer")) c.protocol.featurizer = featurizer_from_json(p["featurizer"]);
  }
  c.test_fraction = j.value("test_fraction", c.test_fraction);
  if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  c.jobs = j.value("jobs", c.jobs);
  c.validate();
  return c;
}

SweepReport run_conflict_sweep(const SweepConfig& config) {
  config.validate();
  const std::size_t n_points = config.conflicts.size();
  const std::size_t n_seeds = config.seeds.size();

  std::vector<double> adc(n_points * n_seeds, 0.0);
  parallel_for(n_points * n_seeds, config.jobs, [&](std::size_t flat) {
    const std::size_t pi = flat / n_seeds;
    const std::size_t ki = flat % n_seeds;
    const std::uint64_t run_seed = config.seeds[ki];

    corpus::SyntheticConfig synth = config.base;
    synth.conflict = config.conflicts[pi];
    synth.seed = run_seed;
    const auto ds = corpus::split_train_test(corpus::generate_synthetic(synth),
                                             config.test_fraction,
                                             derive_seed(run_seed, "split"));
    conflict::AdcProtocolConfig protocol = config.protocol;
    protocol.seed = run_seed;
    protocol.jobs = 1;  // parallelism lives at the run level here
    adc[flat] = conflict::compute_adc(conflict::run_adc_protocol(ds, protocol));
  });

  SweepReport report;
  report.resolved_spec = sweep_to_json(config);
  std::vector<std::size_t> order(n_points);
  for (std::size_t i = 0; i < n_points; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return config.conflicts[a] < config.conflicts[b]; });
  for (std::size_t oi : order) {
    SweepPoint point;
    point.conflict = config.conflicts[oi];
    std::vector<double> values(adc.begin() + static_cast<std::ptrdiff_t>(oi * n_seeds),
                               adc.begin() + static_cast<std::ptrdiff_t>((oi + 1) * n_seeds));
    point.adc = seed_stat(std::move(values));
    report.points.push_back(std::move(point));
  }
  return report;
}

std::string sweep_report_text(const SweepReport& r) {
  std::ostringstream out;
  out << "conflict sweep (" << (r.points.empty() ? 0 : r.points.front().adc.per_seed.size())
      << " seed(s))\n";
  out << "  conflict -> ADC pp^2, mean +/- stddev\n";
  for (const auto& p : r.points) {
    out << "  " << format_real6(p.conflict) << " -> " << format_real6(p.adc.mean) << " +/- "
        << format_real6(p.adc.stddev) << "\n";
  }
  return out.str();
}

std::string sweep_report_json(const SweepReport& r) {
  json points = json::array();
  for (const auto& p : r.points) {
    points.push_back({{"conflict", p.conflict},
                      {"adc_mean", p.adc.mean},
                      {"adc_stddev", p.adc.stddev},
                      {"adc_per_seed", p.adc.per_seed}});
  }
  const json j = {{"points", points}, {"spec", json::parse(r.resolved_spec)}};
  return j.dump(2) + "\n";
}

std::string sweep_csv(const SweepReport& r) {
  std::string out = "conflict,adc_mean,adc_stddev";
  const std::size_t n_seeds = r.points.empty() ? 0 : r.points.front().adc.per_seed.size();
  for (std::size_t k = 0; k < n_seeds; ++k) out += ",seed" + std::to_string(k);
  out += "\n";
  for (const auto& p : r.points) {
    out += format_real6(p.conflict) + "," + format_real6(p.adc.mean) + "," +
           format_real6(p.adc.stddev);
    for (double v : p.adc.per_seed) out += "," + format_real6(v);
    out += "\n";
  }
  return out;
}

std::string sweep_svg(const SweepReport& r) {
  const int width = 560, height = 320;
  const double left = 60, right = 20, top = 30, bottom = 46;
  const double plot_w = width - left - right, plot_h = height - top - bottom;

  double max_y = 1e-9;
  for (const auto& p : r.points) max_y = std::max(max_y, p.adc.mean + p.adc.stddev);
  max_y *= 1.1;
  const double min_x = r.points.front().conflict;
  const double max_x = std::max(r.points.back().conflict, min_x + 1e-9);

  auto px = [&](double c) { return left + plot_w * (c - min_x) / (max_x - min_x); };
  auto py = [&](double a) { return top + plot_h * (1.0 - a / max_y); };

  std::string svg = svg_header(width, height);
  for (int g = 0; g <= 4; ++g) {
    const double frac = g / 4.0;
    const double y = top + plot_h * (1.0 - frac);
    svg += "<line x1=\"" + svg_num(left) + "\" y1=\"" + svg_num(y) + "\" x2=\"" +
           svg_num(left + plot_w) + "\" y2=\"" + svg_num(y) +
           "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + svg_num(left - 8) + "\" y=\"" + svg_num(y + 4) +
           "\" font-size=\"11\" text-anchor=\"end\" font-family=\"sans-serif\">" +
           svg_num(frac * max_y) + "</text>\n";
  }
  // stddev band then mean line over the points
  if (r.points.size() > 1) {
    std::string top_path, bottom_path;
    for (const auto& p : r.points) {
      top_path += (top_path.empty() ? "M" : "L") + svg_num(px(p.conflict)) + " " +
                  svg_num(py(std::min(max_y, p.adc.mean + p.adc.stddev))) + " ";
    }
    for (auto it = r.points.rbegin(); it != r.points.rend(); ++it) {
      bottom_path += "L" + svg_num(px(it->conflict)) + " " +
                     svg_num(py(std::max(0.0, it->adc.mean - it->adc.stddev))) + " ";
    }
    svg += "<path d=\"" + top_path + bottom_path + "Z\" fill=\"#4878d0\" opacity=\"0.2\"/>\n";
  }
  std::string line;
  for (const auto& p : r.points) {
    line += (line.empty() ? "M" : "L") + svg_num(px(p.conflict)) + " " + svg_num(py(p.adc.mean)) +
            " ";
  }
  svg += "<path d=\"" + line + "\" fill=\"none\" stroke=\"#4878d0\" stroke-width=\"2\"/>\n";
  for (const auto& p : r.points) {
    svg += "<circle cx=\"" + svg_num(px(p.conflict)) + "\" cy=\"" + svg_num(py(p.adc.mean)) +
           "\" r=\"3\" fill=\"#4878d0\"/>\n";
    svg += "<text x=\"" + svg_num(px(p.conflict)) + "\" y=\"" + svg_num(top + plot_h + 16) +
           "\" font-size=\"11\" text-anchor=\"middle\" font-family=\"sans-serif\">" +
           format_real6(p.conflict) + "</text>\n";
  }
  svg += "<text x=\"" + svg_num(width / 2.0) + "\" y=\"18\" font-size=\"13\" "
         "text-anchor=\"middle\" font-family=\"sans-serif\">ADC vs conflict</text>\n";
  svg += "</svg>\n";
  return svg;
}

}  // namespace prefconflict::experiments
