#include "cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "prefconflict/annotator.hpp"
#include "prefconflict/conflict.hpp"
#include "prefconflict/corpus.hpp"
#include "prefconflict/error.hpp"
#include "prefconflict/experiments.hpp"
#include "prefconflict/pipeline.hpp"
#include "prefconflict/reward_model.hpp"
#include "prefconflict/rng.hpp"
#include "prefconflict/safety_eval.hpp"
#include "prefconflict/sampler.hpp"
#include "prefconflict/text.hpp"

namespace prefconflict::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

const char* error_class_name(ErrorClass cls) {
  switch (cls) {
    case ErrorClass::usage: return "usage";
    case ErrorClass::input: return "input";
    case ErrorClass::external: return "external";
    case ErrorClass::numerical: return "numerical";
  }
  return "unknown";
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << content;
  if (!out.good()) throw InputError("cannot write " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw InputError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Every run directory records the exact parameters it ran with; the payload
// carries no timestamps, so reruns are byte-comparable.
void write_resolved_config(const fs::path& dir, const json& config) {
  write_file(dir / "resolved_config.json", config.dump(2) + "\n");
}

// Analyses need a split; a bare dataset gets a deterministic one.
corpus::PreferenceDataset ensure_split(corpus::PreferenceDataset ds, double test_fraction,
                                       std::uint64_t seed) {
  if (ds.has_split()) return ds;
  return corpus::split_train_test(ds, test_fraction, derive_seed(seed, "split"));
}

// --- gen-synthetic ------------------------------------------------------------

struct GenSyntheticOpts {
  corpus::SyntheticConfig config;
  double test_fraction = 0.2;  // 0 disables the split
  std::string output;
};

int run_gen_synthetic(const GenSyntheticOpts& opt) {
  auto ds = corpus::generate_synthetic(opt.config);
  if (opt.test_fraction > 0.0) {
    ds = corpus::split_train_test(ds, opt.test_fraction, derive_seed(opt.config.seed, "split"));
  }
  corpus::save_dataset(ds, opt.output);
  std::cout << "wrote " << ds.pairs.size() << " pairs to " << opt.output << "\n";
  return 0;
}

// --- gen-jailbreak ------------------------------------------------------------

int run_gen_jailbreak(const safety::JailbreakFixtureConfig& config, const std::string& output) {
  const auto pairs = safety::generate_jailbreak_fixture(config);
  safety::save_jailbreak_pairs(pairs, output);
  std::cout << "wrote " << pairs.size() << " jailbreak pairs to " << output << "\n";
  return 0;
}

// --- build-dataset --------------------------------------------------------------

struct BuildOpts {
  std::string input;
  std::string output_dir;
  pipeline::PipelineConfig config;
  std::string tie_policy = "random-assign";
  bool fine_grained = false;
  bool mock = false;
  int mock_fail_every = 0;
  bool no_cache = false;
};

int run_build_dataset(BuildOpts opt) {
  opt.config.tie_policy = pipeline::tie_policy_from_string(opt.tie_policy);
  const fs::path dir = opt.output_dir;
  fs::create_directories(dir);
  if (!opt.no_cache && opt.config.cache_dir.empty()) opt.config.cache_dir = dir / "cache";
  if (opt.no_cache) opt.config.cache_dir.clear();
  opt.config.validate();

  const auto source = corpus::load_dataset(opt.input);
  auto transport = opt.mock ? annotate::make_mock_transport(opt.mock_fail_every)
                            : annotate::make_http_transport();
  annotate::TemplateAnnotator client(std::move(transport), opt.config.client_config());

  const auto result = pipeline::run_build(source, client, opt.config, opt.fine_grained);

  corpus::save_dataset(result.standard, dir / "dataset.jsonl");
  if (result.fine_grained) {
    corpus::save_dataset(*result.fine_grained, dir / "fine_grained.jsonl");
  }
  write_file(dir / "build_report.json", pipeline::build_report_json(result.report));
  write_file(dir / "build_report.txt", pipeline::build_report_text(result.report));
  write_file(dir / "quarantine.jsonl", pipeline::quarantine_jsonl(result.report.quarantined));
  write_resolved_config(dir, {{"command", "build-dataset"},
                              {"input", opt.input},
                              {"annotation_sample_k", opt.config.annotation_sample_k},
                              {"tau1", opt.config.tau1},
                              {"tau2", opt.config.tau2},
                              {"tie_policy", pipeline::to_string(opt.config.tie_policy)},
                              {"tie_tolerance", opt.config.tie_tolerance},
                              {"seed", opt.config.seed},
                              {"max_parallel_requests", opt.config.max_parallel_requests},
                              {"cache", !opt.config.cache_dir.empty()},
                              {"max_retries", opt.config.max_retries},
                              {"backoff_base_ms", opt.config.backoff_base_ms},
                              {"backoff_cap_ms", opt.config.backoff_cap_ms},
                              {"fine_grained", opt.fine_grained},
                              {"mock", opt.mock},
                              {"mock_fail_every", opt.mock_fail_every}});
  std::cout << pipeline::build_report_text(result.report);
  return 0;
}

// --- train -----------------------------------------------------------------------

struct TrainOpts {
  std::string input;
  std::string output_dir;
  std::string strategy = "hybrid";
  std::string dimension;
  reward::Featurizer featurizer;
  reward::TrainConfig train;
  sampler::StrategyConfig strat;
  int eval_cap = 1000;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
};

int run_train(TrainOpts opt) {
  opt.strat.strategy = sampler::strategy_from_string(opt.strategy);
  opt.strat.single_dimension = opt.dimension;
  opt.train.seed = opt.seed;
  const fs::path dir = opt.output_dir;
  fs::create_directories(dir);

  const auto ds = ensure_split(corpus::load_dataset(opt.input), opt.test_fraction, opt.seed);
  const auto init = reward::make_model(opt.featurizer);
  const auto run = sampler::train_with_strategy(ds, init, opt.train, opt.strat);

  reward::save_checkpoint(run.model, dir / "checkpoint.txt");
  const auto test = sampler::test_view(ds);
  const reward::EvalPlan plan{opt.eval_cap, derive_seed(opt.seed, "final-eval")};
  const auto eval = reward::evaluate(run.model, test.as_map(), plan);

  json eval_json = {{"accuracy", eval.accuracy}, {"counts", eval.counts}};
  write_file(dir / "eval.json", eval_json.dump(2) + "\n");
  std::string eval_txt = "test accuracy per dimension\n";
  for (const auto& [dim, acc] : eval.accuracy) {
    eval_txt += "  " + dim + ": " + format_real6(acc) + " (" +
                std::to_string(eval.counts.at(dim)) + " pairs)\n";
  }
  write_file(dir / "eval.txt", eval_txt);
  if (!run.trajectory.empty()) {
    write_file(dir / "trajectory.csv", sampler::trajectory_csv(run));
  }
  write_file(dir / "consumed.csv", sampler::consumed_csv(run));
  write_resolved_config(dir, {{"command", "train"},
                              {"input", opt.input},
                              {"strategy", opt.strat.label()},
                              {"feature_dim", opt.featurizer.feature_dim},
                              {"hash_seed", opt.featurizer.hash_seed},
                              {"learning_rate", opt.train.learning_rate},
                              {"steps", opt.train.steps},
                              {"batch_size", opt.train.batch_size},
                              {"l2", opt.train.l2},
                              {"eta", opt.strat.eta},
                              {"update_interval", opt.strat.update_interval},
                              {"epsilon_floor", opt.strat.epsilon_floor},
                              {"adherence_threshold", opt.strat.adherence_threshold},
                              {"validation_fraction", opt.strat.validation_fraction},
                              {"validation_cap", opt.strat.validation_cap},
                              {"eval_cap", opt.eval_cap},
                              {"test_fraction", opt.test_fraction},
                              {"seed", opt.seed}});
  std::cout << eval_txt;
  return 0;
}

// --- adc / adc-b ------------------------------------------------------------------

struct AdcOpts {
  std::string input;
  std::string output_dir;
  std::string benchmark;  // adc-b only
  conflict::AdcProtocolConfig config;
  int benchmark_eval_cap = 1000;
  double test_fraction = 0.2;
};

int run_adc(const AdcOpts& opt) {
  const fs::path dir = opt.output_dir;
  fs::create_directories(dir);
  const auto ds =
      ensure_split(corpus::load_dataset(opt.input), opt.test_fraction, opt.config.seed);
  const auto dev = conflict::run_adc_protocol(ds, opt.config);
  const double adc = conflict::compute_adc(dev);

  write_file(dir / "adc_report.txt", conflict::adc_report_text(dev));
  write_file(dir / "adc_report.csv", conflict::adc_report_csv(dev));
  json matrix = json::array();
  for (std::size_t i = 0; i < dev.size(); ++i) matrix.push_back(dev.finetuned[i]);
  write_file(dir / "adc.json", json{{"adc_pp2", adc},
                                    {"dimensions", dev.dimensions},
                                    {"base_accuracy_pp", dev.base_accuracy},
                                    {"finetuned_accuracy_pp", matrix}}
                                   .dump(2) +
                                   "\n");
  write_resolved_config(dir, {{"command", "adc"},
                              {"input", opt.input},
                              {"base_steps", opt.config.base_steps},
                              {"finetune_steps", opt.config.finetune_steps},
                              {"eval_cap", opt.config.eval_cap},
                              {"batch_size", opt.config.batch_size},
                              {"base_learning_rate", opt.config.base_learning_rate},
                              {"finetune_learning_rate", opt.config.finetune_learning_rate},
                              {"l2", opt.config.l2},
                              {"feature_dim", opt.config.featurizer.feature_dim},
                              {"hash_seed", opt.config.featurizer.hash_seed},
                              {"test_fraction", opt.test_fraction},
                              {"seed", opt.config.seed},
                              {"jobs", opt.config.jobs}});
  std::cout << conflict::adc_report_text(dev);
  return 0;
}

int run_adc_b_cmd(const AdcOpts& opt) {
  const fs::path dir = opt.output_dir;
  fs::create_directories(dir);
  const auto ds =
      ensure_split(corpus::load_dataset(opt.input), opt.test_fraction, opt.config.seed);
  const auto bench_ds = corpus::load_dataset(opt.benchmark);

  const auto models = conflict::run_protocol_models(ds, opt.config);
  const conflict::DatasetEvaluator evaluator(bench_ds, opt.benchmark_eval_cap,
                                             derive_seed(opt.config.seed, "adc-b-eval"));
  const auto result = conflict::run_adc_b(models.base, models.finetuned, evaluator);

  write_file(dir / "adc_b_report.txt", conflict::adc_b_report_text(result));
  write_file(dir / "adc_b_report.csv", conflict::adc_b_report_csv(result));
  json matrix = json::array();
  for (const auto& row : result.finetuned) matrix.push_back(row);
  write_file(dir / "adc_b.json", json{{"adc_b_pp2", result.value},
                                      {"train_dimensions", models.dimensions},
                                      {"benchmark_dimensions", result.benchmark_dimensions},
                                      {"base_pp", result.base},
                                      {"finetuned_pp", matrix}}
                                     .dump(2) +
                                     "\n");
  write_resolved_config(dir, {{"command", "adc-b"},
                              {"input", opt.input},
                              {"benchmark", opt.benchmark},
                              {"base_steps", opt.config.base_steps},
                              {"finetune_steps", opt.config.finetune_steps},
                              {"eval_cap", opt.config.eval_cap},
                              {"benchmark_eval_cap", opt.benchmark_eval_cap},
                              {"batch_size", opt.config.batch_size},
                              {"base_learning_rate", opt.config.base_learning_rate},
                              {"finetune_learning_rate", opt.config.finetune_learning_rate},
                              {"l2", opt.config.l2},
                              {"feature_dim", opt.config.featurizer.feature_dim},
                              {"hash_seed", opt.config.featurizer.hash_seed},
                              {"test_fraction", opt.test_fraction},
                              {"seed", opt.config.seed},
                              {"jobs", opt.config.jobs}});
  std::cout << conflict::adc_b_report_text(result);
  return 0;
}

// --- jailbreak / harmfulness --------------------------------------------------------

struct JailbreakOpts {
  std::string checkpoint;
  std::string fixture;
  std::string output_dir;
  int jobs = 1;
  // probe mode: fine-tune on one dimension and report before/after
  std::string probe_input;
  std::string probe_dimension;
  reward::TrainConfig probe_train;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
};

int run_jailbreak(const JailbreakOpts& opt) {
  const auto model = reward::load_checkpoint(opt.checkpoint);
  const auto pairs = safety::load_jailbreak_pairs(opt.fixture);

  json out_json;
  std::string out_txt;
  if (opt.probe_input.empty()) {
    const double rate = safety::jailbreak_rate(model, pairs, opt.jobs);
    out_json = {{"jailbreak_rate", rate}, {"pairs", pairs.size()}};
    out_txt = "jailbreak rate: " + format_real6(rate) + " over " +
              std::to_string(pairs.size()) + " pairs\n";
  } else {
    if (opt.probe_dimension.empty()) {
      throw UsageError("--probe-dimension is required with --probe-input");
    }
    auto ds = ensure_split(corpus::load_dataset(opt.probe_input), opt.test_fraction, opt.seed);
    reward::TrainConfig tc = opt.probe_train;
    tc.seed = opt.seed;
    const auto probe =
        safety::finetune_and_probe(model, ds, opt.probe_dimension, tc, pairs, opt.jobs);
    out_json = {{"before", probe.before},
                {"after", probe.after},
                {"delta", probe.delta},
                {"dimension", opt.probe_dimension},
                {"finetune_steps", tc.steps},
                {"pairs", pairs.size()}};
    out_txt = "jailbreak rate before: " + format_real6(probe.before) + "\n" +
              "jailbreak rate after:  " + format_real6(probe.after) + " (fine-tuned " +
              std::to_string(tc.steps) + " steps on " + opt.probe_dimension + ")\n" +
              "delta:                 " + format_real6(probe.delta) + "\n";
  }
  if (!opt.output_dir.empty()) {
    const fs::path dir = opt.output_dir;
    fs::create_directories(dir);
    write_file(dir / "jailbreak.json", out_json.dump(2) + "\n");
    write_file(dir / "jailbreak.txt", out_txt);
    write_resolved_config(dir, {{"command", "jailbreak"},
                                {"checkpoint", opt.checkpoint},
                                {"fixture", opt.fixture},
                                {"probe_input", opt.probe_input},
                                {"probe_dimension", opt.probe_dimension},
                                {"probe_steps", opt.probe_train.steps},
                                {"test_fraction", opt.test_fraction},
                                {"seed", opt.seed},
                                {"jobs", opt.jobs}});
  }
  std::cout << out_txt;
  return 0;
}

int run_harmfulness(const std::string& scores_path, const std::string& output_dir) {
  const auto scores = safety::load_judge_scores(scores_path);
  const double rate = safety::harmfulness_rate(scores);
  const std::string txt = "harmfulness rate: " + format_real6(rate) + " over " +
                          std::to_string(scores.size()) + " scores\n";
  if (!output_dir.empty()) {
    const fs::path dir = output_dir;
    fs::create_directories(dir);
    write_file(dir / "harmfulness.json",
               json{{"harmfulness_rate", rate}, {"scores", scores.size()}}.dump(2) + "\n");
    write_file(dir / "harmfulness.txt", txt);
    write_resolved_config(dir, {{"command", "harmfulness"}, {"scores", scores_path}});
  }
  std::cout << txt;
  return 0;
}

// --- experiment / sweep ----------------------------------------------------------

std::string safe_label(std::string label) {
  for (auto& c : label) {
    if (c == ':' || c == '/' || c == ' ') c = '-';
  }
  return label;
}

int run_experiment(const std::string& config_path, const std::string& write_default,
                   const std::string& output_dir, int jobs_override) {
  if (!write_default.empty()) {
    write_file(write_default, experiments::spec_to_json(experiments::default_comparison_spec()));
    std::cout << "wrote default comparison spec to " << write_default << "\n";
    return 0;
  }
  if (output_dir.empty()) throw UsageError("--output-dir is required");
  auto spec = config_path.empty() ? experiments::default_comparison_spec()
                                  : experiments::spec_from_json(read_file(config_path));
  if (jobs_override > 0) spec.jobs = jobs_override;

  const auto report = experiments::run_sampler_comparison(spec);
  const fs::path dir = output_dir;
  fs::create_directories(dir);
  write_file(dir / "report.json", experiments::comparison_report_json(report));
  write_file(dir / "report.txt", experiments::comparison_report_text(report));
  write_file(dir / "report.csv", experiments::comparison_csv(report));
  write_file(dir / "report.svg", experiments::comparison_svg(report));
  for (const auto& [label, seeds] : report.trajectories) {
    for (std::size_t k = 0; k < seeds.size(); ++k) {
      write_file(dir / ("trajectory_" + safe_label(label) + "_seed" + std::to_string(k) +
                        ".csv"),
                 seeds[k]);
    }
  }
  write_resolved_config(dir, json::parse(report.resolved_spec));
  std::cout << experiments::comparison_report_text(report);
  return 0;
}

int run_sweep(const std::string& config_path, const std::string& write_default,
              const std::string& output_dir, int jobs_override) {
  if (!write_default.empty()) {
    experiments::SweepConfig def;
    def.base.n_dims = 2;
    def.base.pairs_per_dim = {200, 200};
    def.conflicts = {0.0, 0.5, 1.0};
    def.protocol.base_steps = 500;
    def.protocol.finetune_steps = 1000;
    def.protocol.eval_cap = 500;
    def.seeds = {1, 2, 3, 4, 5};
    write_file(write_default, experiments::sweep_to_json(def));
    std::cout << "wrote default sweep config to " << write_default << "\n";
    return 0;
  }
  if (config_path.empty()) throw UsageError("--config is required");
  if (output_dir.empty()) throw UsageError("--output-dir is required");
  auto config = experiments::sweep_from_json(read_file(config_path));
  if (jobs_override > 0) config.jobs = jobs_override;

  const auto report = experiments::run_conflict_sweep(config);
  const fs::path dir = output_dir;
  fs::create_directories(dir);
  write_file(dir / "sweep.json", experiments::sweep_report_json(report));
  write_file(dir / "sweep.txt", experiments::sweep_report_text(report));
  write_file(dir / "sweep.csv", experiments::sweep_csv(report));
  write_file(dir / "sweep.svg", experiments::sweep_svg(report));
  write_resolved_config(dir, json::parse(report.resolved_spec));
  std::cout << experiments::sweep_report_text(report);
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"preference-conflict toolkit: dataset construction, conflict measurement "
               "(ADC/ADC-B), adaptive-sampling reward-model training, and safety probes"};
  app.require_subcommand(1);

  // gen-synthetic
  GenSyntheticOpts gen;
  auto* cmd_gen = app.add_subcommand("gen-synthetic", "generate a synthetic preference corpus");
  cmd_gen->add_option("--dims", gen.config.n_dims, "number of dimensions")->default_val(2);
  cmd_gen->add_option("--pairs", gen.config.pairs_per_dim,
                      "pairs per dimension (comma separated)")
      ->delimiter(',')
      ->required();
  cmd_gen->add_option("--conflict", gen.config.conflict, "conflict level in [0,1]");
  cmd_gen->add_option("--vocab-size", gen.config.vocab_size, "token vocabulary size");
  cmd_gen->add_option("--tokens-per-text", gen.config.tokens_per_text, "tokens per text");
  cmd_gen->add_option("--seed", gen.config.seed, "master seed");
  cmd_gen->add_option("--test-fraction", gen.test_fraction,
                      "train/test split fraction (0 disables)");
  cmd_gen->add_option("--output", gen.output, "dataset path (JSONL)")->required();

  // gen-jailbreak
  safety::JailbreakFixtureConfig jb_gen;
  std::string jb_gen_output;
  auto* cmd_genjb =
      app.add_subcommand("gen-jailbreak", "generate a synthetic jailbreak fixture");
  cmd_genjb->add_option("--dims", jb_gen.source.n_dims, "source corpus dimensions")
      ->default_val(2);
  cmd_genjb->add_option("--pairs", jb_gen.source.pairs_per_dim,
                        "source pairs per dimension (fixes the vocabulary layout)")
      ->delimiter(',')
      ->required();
  cmd_genjb->add_option("--vocab-size", jb_gen.source.vocab_size, "token vocabulary size");
  cmd_genjb->add_option("--tokens-per-text", jb_gen.source.tokens_per_text, "tokens per text");
  cmd_genjb->add_option("--dimension-index", jb_gen.dimension_index,
                        "which dimension plays the safety role");
  cmd_genjb->add_option("--count", jb_gen.count, "number of probe pairs");
  cmd_genjb->add_option("--seed", jb_gen.seed, "master seed");
  cmd_genjb->add_option("--output", jb_gen_output, "fixture path (JSONL)")->required();

  // build-dataset
  BuildOpts build;
  auto* cmd_build = app.add_subcommand(
      "build-dataset", "run the annotate/refine/split pipeline over a source corpus");
  cmd_build->add_option("--input", build.input, "source dataset (JSONL)")->required();
  cmd_build->add_option("--output-dir", build.output_dir, "run directory")->required();
  cmd_build->add_option("--sample-k", build.config.annotation_sample_k,
                        "stage-a annotation sample size");
  cmd_build->add_option("--tau1", build.config.tau1, "source-score-gap prefilter threshold");
  cmd_build->add_option("--tau2", build.config.tau2, "fine-grained winning-gap threshold");
  cmd_build->add_option("--tie-policy", build.tie_policy, "random-assign or drop");
  cmd_build->add_option("--tie-tolerance", build.config.tie_tolerance, "max-|gap| tie width");
  cmd_build->add_option("--seed", build.config.seed, "master seed");
  cmd_build->add_option("--jobs", build.config.max_parallel_requests,
                        "parallel annotator requests");
  cmd_build->add_option("--cache-dir", build.config.cache_dir,
                        "response cache directory (default <output-dir>/cache)");
  cmd_build->add_flag("--no-cache", build.no_cache, "disable the response cache");
  cmd_build->add_option("--max-retries", build.config.max_retries, "retries per request");
  cmd_build->add_option("--backoff-base-ms", build.config.backoff_base_ms,
                        "initial retry backoff (0 disables sleeping)");
  cmd_build->add_option("--backoff-cap-ms", build.config.backoff_cap_ms, "max retry backoff");
  cmd_build->add_flag("--fine-grained", build.fine_grained,
                      "also emit the tie-dropping, tau2-filtered dataset");
  cmd_build->add_flag("--mock", build.mock, "use the offline deterministic annotator");
  cmd_build->add_option("--mock-fail-every", build.mock_fail_every,
                        "mock failure injection: every Nth call malformed");

  // train
  TrainOpts train;
  auto* cmd_train = app.add_subcommand("train", "train a reward model with a sampling strategy");
  cmd_train->add_option("--input", train.input, "labeled dataset (JSONL)")->required();
  cmd_train->add_option("--output-dir", train.output_dir, "run directory")->required();
  cmd_train->add_option("--strategy", train.strategy,
                        "hybrid, uniform-equal, all-mixed, or single");
  cmd_train->add_option("--dimension", train.dimension, "dimension for --strategy single");
  cmd_train->add_option("--steps", train.train.steps, "training steps");
  cmd_train->add_option("--batch-size", train.train.batch_size, "pairs per step");
  cmd_train->add_option("--learning-rate", train.train.learning_rate, "GD step size");
  cmd_train->add_option("--l2", train.train.l2, "L2 regularization strength");
  cmd_train->add_option("--feature-dim", train.featurizer.feature_dim,
                        "hashed feature dimension (power of two)");
  cmd_train->add_option("--hash-seed", train.featurizer.hash_seed, "featurizer hash seed");
  cmd_train->add_option("--eta", train.strat.eta, "sampler weight learning rate");
  cmd_train->add_option("--update-interval", train.strat.update_interval,
                        "steps between sampler weight updates");
  cmd_train->add_option("--epsilon-floor", train.strat.epsilon_floor, "sampler weight floor");
  cmd_train->add_option("--adherence-threshold", train.strat.adherence_threshold,
                        "recorded in artifacts; no operation consumes it");
  cmd_train->add_option("--validation-fraction", train.strat.validation_fraction,
                        "held-out fraction for hybrid weight updates");
  cmd_train->add_option("--validation-cap", train.strat.validation_cap,
                        "held-out pairs per dimension, at most");
  cmd_train->add_option("--eval-cap", train.eval_cap, "final evaluation subsample cap");
  cmd_train->add_option("--test-fraction", train.test_fraction,
                        "split fraction applied when the dataset has none");
  cmd_train->add_option("--seed", train.seed, "master seed");

  // adc / adc-b
  AdcOpts adc;
  auto* cmd_adc =
      app.add_subcommand("adc", "run the deviation-matrix protocol and report the ADC");
  auto add_adc_options = [&](CLI::App* cmd) {
    cmd->add_option("--input", adc.input, "labeled dataset (JSONL)")->required();
    cmd->add_option("--output-dir", adc.output_dir, "run directory")->required();
    cmd->add_option("--base-steps", adc.config.base_steps, "mixed warm-up steps (k0)");
    cmd->add_option("--finetune-steps", adc.config.finetune_steps,
                    "per-dimension fine-tune steps (M)");
    cmd->add_option("--eval-cap", adc.config.eval_cap, "test subsample cap per dimension");
    cmd->add_option("--batch-size", adc.config.batch_size, "pairs per step");
    cmd->add_option("--base-learning-rate", adc.config.base_learning_rate, "warm-up step size");
    cmd->add_option("--finetune-learning-rate", adc.config.finetune_learning_rate,
                    "fine-tune step size");
    cmd->add_option("--l2", adc.config.l2, "L2 regularization strength");
    cmd->add_option("--feature-dim", adc.config.featurizer.feature_dim,
                    "hashed feature dimension (power of two)");
    cmd->add_option("--hash-seed", adc.config.featurizer.hash_seed, "featurizer hash seed");
    cmd->add_option("--test-fraction", adc.test_fraction,
                    "split fraction applied when the dataset has none");
    cmd->add_option("--seed", adc.config.seed, "master seed");
    cmd->add_option("--jobs", adc.config.jobs, "parallel fine-tune branches");
  };
  add_adc_options(cmd_adc);
  auto* cmd_adcb = app.add_subcommand(
      "adc-b", "deviation-matrix protocol scored on an external benchmark dataset");
  add_adc_options(cmd_adcb);
  cmd_adcb->add_option("--benchmark", adc.benchmark, "labeled benchmark dataset (JSONL)")
      ->required();
  cmd_adcb->add_option("--benchmark-eval-cap", adc.benchmark_eval_cap,
                       "benchmark subsample cap per dimension");

  // jailbreak
  JailbreakOpts jb;
  auto* cmd_jb = app.add_subcommand("jailbreak", "jailbreak rate of a reward model checkpoint");
  cmd_jb->add_option("--checkpoint", jb.checkpoint, "reward model checkpoint")->required();
  cmd_jb->add_option("--fixture", jb.fixture, "jailbreak fixture (JSONL)")->required();
  cmd_jb->add_option("--output-dir", jb.output_dir, "optional run directory");
  cmd_jb->add_option("--jobs", jb.jobs, "parallel scoring threads");
  cmd_jb->add_option("--probe-input", jb.probe_input,
                     "labeled dataset: fine-tune a clone and report before/after");
  cmd_jb->add_option("--probe-dimension", jb.probe_dimension, "dimension to fine-tune on");
  cmd_jb->add_option("--probe-steps", jb.probe_train.steps, "fine-tune steps (M)");
  cmd_jb->add_option("--probe-learning-rate", jb.probe_train.learning_rate,
                     "fine-tune step size");
  cmd_jb->add_option("--probe-batch-size", jb.probe_train.batch_size, "pairs per step");
  cmd_jb->add_option("--test-fraction", jb.test_fraction,
                     "split fraction applied when the probe dataset has none");
  cmd_jb->add_option("--seed", jb.seed, "master seed");

  // harmfulness
  std::string harm_scores, harm_output;
  auto* cmd_harm =
      app.add_subcommand("harmfulness", "aggregate judge scores into a harmfulness rate");
  cmd_harm->add_option("--scores", harm_scores, "judge scores (JSONL)")->required();
  cmd_harm->add_option("--output-dir", harm_output, "optional run directory");

  // experiment / sweep
  std::string exp_config, exp_default, exp_output;
  int exp_jobs = 0;
  auto* cmd_exp = app.add_subcommand(
      "experiment", "sampler comparison over strategies and seeds (report + plot data)");
  cmd_exp->add_option("--config", exp_config, "experiment spec (JSON)");
  cmd_exp->add_option("--write-default-config", exp_default,
                      "write the default spec to this path and exit");
  cmd_exp->add_option("--output-dir", exp_output, "run directory");
  cmd_exp->add_option("--jobs", exp_jobs, "parallel runs (overrides the config file)");

  std::string sweep_config, sweep_default, sweep_output;
  int sweep_jobs = 0;
  auto* cmd_sweep =
      app.add_subcommand("sweep", "ADC across synthetic conflict levels (curve data)");
  cmd_sweep->add_option("--config", sweep_config, "sweep config (JSON)");
  cmd_sweep->add_option("--write-default-config", sweep_default,
                        "write the default config to this path and exit");
  cmd_sweep->add_option("--output-dir", sweep_output, "run directory");
  cmd_sweep->add_option("--jobs", sweep_jobs, "parallel runs (overrides the config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << json{{"error_class", "usage"}, {"message", e.what()}}.dump() << "\n";
    return static_cast<int>(ErrorClass::usage);
  }

  try {
    if (cmd_gen->parsed()) return run_gen_synthetic(gen);
    if (cmd_genjb->parsed()) return run_gen_jailbreak(jb_gen, jb_gen_output);
    if (cmd_build->parsed()) return run_build_dataset(build);
    if (cmd_train->parsed()) return run_train(train);
    if (cmd_adc->parsed()) return run_adc(adc);
    if (cmd_adcb->parsed()) return run_adc_b_cmd(adc);
    if (cmd_jb->parsed()) return run_jailbreak(jb);
    if (cmd_harm->parsed()) return run_harmfulness(harm_scores, harm_output);
    if (cmd_exp->parsed()) return run_experiment(exp_config, exp_default, exp_output, exp_jobs);
    if (cmd_sweep->parsed()) {
      return run_sweep(sweep_config, sweep_default, sweep_output, sweep_jobs);
    }
    throw UsageError("no subcommand given");
  } catch (const Error& e) {
    std::cerr << json{{"error_class", error_class_name(e.error_class())},
                      {"message", e.what()}}
                     .dump()
              << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << json{{"error_class", "internal"}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }
}

}  // namespace prefconflict::cli
