#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "prefconflict/error.hpp"
#include "prefconflict/experiments.hpp"

using namespace prefconflict;
using namespace prefconflict::experiments;

namespace {

ExperimentSpec tiny_spec() {
  ExperimentSpec spec;
  spec.name = "tiny";
  spec.synthetic.n_dims = 2;
  spec.synthetic.pairs_per_dim = {40, 40};
  spec.synthetic.conflict = 0.3;
  spec.featurizer.feature_dim = 1 << 9;
  spec.train.steps = 40;
  spec.train.batch_size = 16;
  spec.eval_cap = 64;

  sampler::StrategyConfig hybrid;
  hybrid.strategy = sampler::Strategy::hybrid;
  hybrid.update_interval = 16;
  sampler::StrategyConfig uniform;
  uniform.strategy = sampler::Strategy::uniform_equal;
  spec.strategies = {hybrid, uniform};
  spec.seeds = {1, 2};
  return spec;
}

SweepConfig tiny_sweep() {
  SweepConfig cfg;
  cfg.base.n_dims = 2;
  cfg.base.pairs_per_dim = {40, 40};
  cfg.conflicts = {0.8, 0.0};
  cfg.protocol.base_steps = 30;
  cfg.protocol.finetune_steps = 60;
  cfg.protocol.eval_cap = 32;
  cfg.protocol.batch_size = 16;
  cfg.protocol.featurizer.feature_dim = 1 << 9;
  cfg.seeds = {1};
  return cfg;
}

}  // namespace

TEST_CASE("seed_stat computes mean and sample deviation") {
  auto s = seed_stat({1.0, 2.0, 3.0});
  CHECK(s.mean == doctest::Approx(2.0));
  CHECK(s.stddev == doctest::Approx(1.0));
  CHECK(s.per_seed == std::vector<double>{1.0, 2.0, 3.0});

  auto single = seed_stat({4.0});
  CHECK(single.mean == 4.0);
  CHECK(single.stddev == 0.0);

  auto empty = seed_stat({});
  CHECK(empty.mean == 0.0);
  CHECK(empty.stddev == 0.0);
  CHECK(empty.per_seed.empty());
}

TEST_CASE("experiment specs round-trip through JSON") {
  auto spec = tiny_spec();
  const auto text = spec_to_json(spec);
  auto back = spec_from_json(text);
  CHECK(spec_to_json(back) == text);
  CHECK(back.name == "tiny");
  CHECK(back.synthetic.pairs_per_dim == std::vector<int>{40, 40});
  CHECK(back.strategies.size() == 2);
  CHECK(back.strategies[0].strategy == sampler::Strategy::hybrid);
  CHECK(back.strategies[0].update_interval == 16);
  CHECK(back.seeds == std::vector<std::uint64_t>{1, 2});

  // The default spec round-trips too and matches its documented shape.
  auto dflt = default_comparison_spec();
  CHECK(dflt.synthetic.n_dims == 6);
  CHECK(dflt.synthetic.pairs_per_dim == std::vector<int>{500, 500, 500, 500, 50, 50});
  CHECK(dflt.train.steps == 2000);
  CHECK(dflt.strategies.size() == 3);
  CHECK(dflt.seeds.size() == 5);
  CHECK(spec_to_json(spec_from_json(spec_to_json(dflt))) == spec_to_json(dflt));
}

TEST_CASE("spec parsing rejects unknown fields and bad shapes") {
  try {
    spec_from_json(R"({"name":"x","bogus":1})");
    FAIL("expected UsageError");
  } catch (const UsageError& e) {
    CHECK(std::string(e.what()).find("bogus") != std::string::npos);
  }
  CHECK_THROWS_AS(spec_from_json(R"({"train":{"speed":1}})"), UsageError);
  CHECK_THROWS_AS(spec_from_json("not json"), UsageError);
  CHECK_THROWS_AS(spec_from_json("[1,2]"), UsageError);

  // Validation: no strategies, duplicate labels, no seeds.
  auto spec = tiny_spec();
  spec.strategies.clear();
  CHECK_THROWS_AS(spec.validate(), UsageError);
  spec = tiny_spec();
  spec.strategies = {spec.strategies[1], spec.strategies[1]};
  CHECK_THROWS_AS(spec.validate(), UsageError);
  spec = tiny_spec();
  spec.seeds.clear();
  CHECK_THROWS_AS(spec.validate(), UsageError);
  spec = tiny_spec();
  spec.jobs = 0;
  CHECK_THROWS_AS(spec.validate(), UsageError);
}

TEST_CASE("run_sampler_comparison produces a deterministic keyed report") {
  auto spec = tiny_spec();
  auto report = run_sampler_comparison(spec);

  REQUIRE(report.dimensions.size() == 2);
  REQUIRE(report.strategies.size() == 2);
  CHECK(report.strategies[0] == "hybrid");
  CHECK(report.strategies[1] == "uniform-equal");

  for (const auto& label : report.strategies) {
    const auto& per_dim = report.accuracy.at(label);
    REQUIRE(per_dim.size() == 2);
    for (const auto& dim : report.dimensions) {
      const auto& stat = per_dim.at(dim);
      REQUIRE(stat.per_seed.size() == 2);
      for (double v : stat.per_seed) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
    }
    // The min statistic is a per-seed min, so it never exceeds any
    // per-dimension mean for the same seeds.
    const auto& min_stat = report.min_accuracy.at(label);
    REQUIRE(min_stat.per_seed.size() == 2);
    for (std::size_t k = 0; k < 2; ++k) {
      for (const auto& dim : report.dimensions) {
        CHECK(min_stat.per_seed[k] <= per_dim.at(dim).per_seed[k] + 1e-12);
      }
    }
  }

  // Only the adaptive strategy records trajectories.
  CHECK(report.trajectories.count("hybrid") == 1);
  CHECK(report.trajectories.at("hybrid").size() == 2);
  CHECK(report.trajectories.at("hybrid")[0].rfind("step,", 0) == 0);
  CHECK(report.trajectories.count("uniform-equal") == 0);

  CHECK(report.resolved_spec == spec_to_json(spec));

  // Identical at any job count, byte for byte.
  auto rerun = run_sampler_comparison(spec);
  CHECK(comparison_report_json(rerun) == comparison_report_json(report));
  auto wide = spec;
  wide.jobs = 4;
  auto parallel = run_sampler_comparison(wide);
  CHECK(nlohmann::json::parse(comparison_report_json(parallel))["accuracy"] ==
        nlohmann::json::parse(comparison_report_json(report))["accuracy"]);
}

TEST_CASE("comparison report emitters include labels, data, and markup") {
  auto report = run_sampler_comparison(tiny_spec());

  auto text = comparison_report_text(report);
  CHECK(text.find("hybrid") != std::string::npos);
  CHECK(text.find("uniform-equal") != std::string::npos);
  CHECK(text.find("min") != std::string::npos);

  auto parsed = nlohmann::json::parse(comparison_report_json(report));
  CHECK(parsed.contains("accuracy"));
  CHECK(parsed["accuracy"]["hybrid"].contains("__min__"));
  CHECK(parsed.contains("trajectories"));
  CHECK(parsed["spec"]["name"] == "tiny");

  auto csv = comparison_csv(report);
  CHECK(csv.rfind("strategy,dimension,mean,stddev", 0) == 0);
  CHECK(csv.find("hybrid,") != std::string::npos);

  auto svg = comparison_svg(report);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("hybrid") != std::string::npos);
}

TEST_CASE("sweep configs round-trip through JSON") {
  auto cfg = tiny_sweep();
  const auto text = sweep_to_json(cfg);
  auto back = sweep_from_json(text);
  CHECK(sweep_to_json(back) == text);
  CHECK(back.conflicts == std::vector<double>{0.8, 0.0});
  CHECK(back.protocol.base_steps == 30);

  try {
    sweep_from_json(R"({"name":"x","mystery":true})");
    FAIL("expected UsageError");
  } catch (const UsageError& e) {
    CHECK(std::string(e.what()).find("mystery") != std::string::npos);
  }

  auto bad = tiny_sweep();
  bad.conflicts = {};
  CHECK_THROWS_AS(bad.validate(), UsageError);
  bad = tiny_sweep();
  bad.conflicts = {1.5};
  CHECK_THROWS_AS(bad.validate(), UsageError);
  bad = tiny_sweep();
  bad.seeds = {};
  CHECK_THROWS_AS(bad.validate(), UsageError);
}

TEST_CASE("run_conflict_sweep orders points and repeats exactly") {
  auto cfg = tiny_sweep();
  auto report = run_conflict_sweep(cfg);

  REQUIRE(report.points.size() == 2);
  CHECK(report.points[0].conflict == 0.0);  // sorted ascending regardless of input order
  CHECK(report.points[1].conflict == 0.8);
  for (const auto& p : report.points) {
    REQUIRE(p.adc.per_seed.size() == 1);
    CHECK(p.adc.mean >= 0.0);
    CHECK(std::isfinite(p.adc.mean));
  }
  CHECK(report.resolved_spec == sweep_to_json(cfg));

  auto rerun = run_conflict_sweep(cfg);
  CHECK(sweep_report_json(rerun) == sweep_report_json(report));

  auto wide = cfg;
  wide.jobs = 2;
  auto parallel = run_conflict_sweep(wide);
  REQUIRE(parallel.points.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(parallel.points[i].adc.per_seed == report.points[i].adc.per_seed);
  }
}

TEST_CASE("sweep report emitters include points and markup") {
  auto report = run_conflict_sweep(tiny_sweep());

  auto text = sweep_report_text(report);
  CHECK(text.find("conflict") != std::string::npos);
  CHECK(text.find("ADC") != std::string::npos);

  auto parsed = nlohmann::json::parse(sweep_report_json(report));
  CHECK(parsed.contains("points"));
  CHECK(parsed["points"].size() == 2);

  auto csv = sweep_csv(report);
  CHECK(csv.rfind("conflict,", 0) == 0);

  auto svg = sweep_svg(report);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
}
