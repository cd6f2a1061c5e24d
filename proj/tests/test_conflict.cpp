#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "prefconflict/conflict.hpp"
#include "prefconflict/corpus.hpp"
#include "prefconflict/rng.hpp"
#include "prefconflict/error.hpp"

using namespace prefconflict;
using namespace prefconflict::conflict;

namespace {

// Builds a deviation matrix from a baseline row and absolute fine-tuned
// accuracies (row i = accuracies after tuning on dimension i).
DeviationMatrix make_matrix(std::vector<double> base, std::vector<std::vector<double>> rows) {
  DeviationMatrix dev;
  for (std::size_t i = 0; i < base.size(); ++i) dev.dimensions.push_back("d" + std::to_string(i));
  dev.base_accuracy = std::move(base);
  dev.finetuned = std::move(rows);
  return dev;
}

corpus::PreferenceDataset tiny_split_dataset(int per_dim, std::uint64_t seed) {
  corpus::SyntheticConfig synth;
  synth.n_dims = 2;
  synth.pairs_per_dim = {per_dim, per_dim};
  synth.conflict = 0.5;
  synth.seed = seed;
  auto ds = corpus::generate_synthetic(synth);
  return corpus::split_train_test(ds, 0.2, derive_seed(seed, "split"));
}

AdcProtocolConfig quick_config() {
  AdcProtocolConfig cfg;
  cfg.base_steps = 60;
  cfg.finetune_steps = 120;
  cfg.eval_cap = 64;
  cfg.batch_size = 16;
  cfg.featurizer.feature_dim = 1 << 10;
  cfg.seed = 7;
  return cfg;
}

bool same_doubles(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

// Fixed-script evaluator: returns the k-th vector on the k-th evaluate call.
class ScriptEvaluator : public BenchmarkEvaluator {
 public:
  ScriptEvaluator(std::vector<std::string> dims, std::vector<std::vector<double>> scores)
      : dims_(std::move(dims)), scores_(std::move(scores)) {}

  const std::vector<std::string>& dimensions() const override { return dims_; }
  std::vector<double> evaluate(const reward::RewardModel&) const override {
    return scores_.at(next_++);
  }

 private:
  std::vector<std::string> dims_;
  std::vector<std::vector<double>> scores_;
  mutable std::size_t next_ = 0;
};

}  // namespace

TEST_CASE("compute_adc matches hand-worked matrices") {
  // Worked n=2 case: tuning d0 costs d1 ten points; tuning d1 gains elsewhere.
  auto m1 = make_matrix({70, 70}, {{75, 60}, {75, 72}});
  CHECK(compute_adc(m1) == doctest::Approx(50.0).epsilon(1e-9));

  // Symbolic n=3 case: every off-diagonal deviation is -d, so ADC = d^2.
  for (double d : {1.0, 3.0, 7.5}) {
    auto rows = std::vector<std::vector<double>>(3, std::vector<double>(3, 50.0 - d));
    for (int i = 0; i < 3; ++i) rows[i][i] = 50.0 + 1.0;
    auto m = make_matrix({50, 50, 50}, rows);
    CHECK(compute_adc(m) == doctest::Approx(d * d).epsilon(1e-9));
  }

  // All non-negative deviations contribute nothing.
  auto m3 = make_matrix({40, 40}, {{41, 40}, {52, 63}});
  CHECK(compute_adc(m3) == doctest::Approx(0.0));

  // Per-row means averaged across rows: (1 + 4) / 2.
  auto m4 = make_matrix({50, 50}, {{50, 49}, {48, 50}});
  CHECK(compute_adc(m4) == doctest::Approx(2.5).epsilon(1e-9));

  // A single negative entry in one n=3 row: 36 / (n-1) / n.
  auto m5 = make_matrix({60, 60, 60}, {{60, 60, 54}, {60, 60, 60}, {60, 60, 60}});
  CHECK(compute_adc(m5) == doctest::Approx(6.0).epsilon(1e-9));

  // n=4, every off-diagonal -2: each row (3 * 4) / 3 = 4.
  {
    auto rows = std::vector<std::vector<double>>(4, std::vector<double>(4, 48.0));
    for (int i = 0; i < 4; ++i) rows[i][i] = 50.0;
    auto m = make_matrix(std::vector<double>(4, 50.0), rows);
    CHECK(compute_adc(m) == doctest::Approx(4.0).epsilon(1e-9));
  }

  // The diagonal (own dimension) never counts, however negative.
  auto m7 = make_matrix({90, 90}, {{10, 90}, {90, 10}});
  CHECK(compute_adc(m7) == doctest::Approx(0.0));

  // Fractional deviations: (0.25 + 0.0625) / 2.
  auto m8 = make_matrix({50, 50}, {{50, 49.5}, {49.75, 50}});
  CHECK(compute_adc(m8) == doctest::Approx(0.15625).epsilon(1e-9));

  // Asymmetric n=3 rows: (2.5 + 4.5 + 0) / 3.
  auto m9 = make_matrix({50, 50, 50},
                        {{50, 49, 48}, {47, 50, 54}, {50, 50, 50}});
  CHECK(compute_adc(m9) == doctest::Approx(7.0 / 3.0).epsilon(1e-9));

  // n=5 with a lone -10: 100 / 4 / 5 = 5.
  {
    auto rows = std::vector<std::vector<double>>(5, std::vector<double>(5, 50.0));
    rows[2][4] = 40.0;
    auto m = make_matrix(std::vector<double>(5, 50.0), rows);
    CHECK(compute_adc(m) == doctest::Approx(5.0).epsilon(1e-9));
  }
}

TEST_CASE("compute_adc validates shape") {
  auto one = make_matrix({50}, {{50}});
  CHECK_THROWS_AS(compute_adc(one), UsageError);

  auto bad_rows = make_matrix({50, 50}, {{50, 50}});
  CHECK_THROWS_AS(compute_adc(bad_rows), InputError);

  auto ragged = make_matrix({50, 50}, {{50, 50}, {50}});
  CHECK_THROWS_AS(compute_adc(ragged), InputError);
}

TEST_CASE("compute_adc_b matches hand-worked matrices") {
  // Worked n=1, m=2 case: deviations (-3, +4) -> 9 / 2.
  CHECK(compute_adc_b({50, 50}, {{47, 54}}) == doctest::Approx(4.5).epsilon(1e-9));

  // Two fine-tuned rows over m=3: (0 + 5/3) / 2.
  CHECK(compute_adc_b({10, 20, 30}, {{10, 20, 30}, {9, 18, 33}}) ==
        doctest::Approx(5.0 / 6.0).epsilon(1e-9));

  // Improvements everywhere score zero conflict.
  CHECK(compute_adc_b({10, 10}, {{12, 11}, {10, 10}}) == doctest::Approx(0.0));

  // Minimal m=1, n=1.
  CHECK(compute_adc_b({42}, {{40}}) == doctest::Approx(4.0).epsilon(1e-9));

  // Unlike ADC, every benchmark dimension counts; there is no excluded diagonal.
  CHECK(compute_adc_b({50, 50}, {{40, 50}, {50, 40}}) == doctest::Approx(50.0).epsilon(1e-9));

  CHECK_THROWS_AS(compute_adc_b({}, {{1.0}}), InputError);
  CHECK_THROWS_AS(compute_adc_b({1.0}, {}), InputError);
  CHECK_THROWS_AS(compute_adc_b({1.0, 2.0}, {{1.0}}), InputError);
}

TEST_CASE("normal_adc_estimate follows the sigma^2/2 law") {
  CHECK(normal_adc_estimate(0.0, 10, 1) == 0.0);
  CHECK_THROWS_AS(normal_adc_estimate(-1.0, 10, 1), UsageError);
  CHECK_THROWS_AS(normal_adc_estimate(1.0, 0, 1), UsageError);

  for (double sigma : {0.5, 1.0, 2.0}) {
    double est = normal_adc_estimate(sigma, 200000, 42);
    double want = sigma * sigma / 2.0;
    CHECK(est == doctest::Approx(want).epsilon(0.03));
  }

  CHECK(normal_adc_estimate(1.0, 5000, 9) == normal_adc_estimate(1.0, 5000, 9));
  CHECK(normal_adc_estimate(1.0, 5000, 9) != normal_adc_estimate(1.0, 5000, 10));
}

TEST_CASE("run_adc_protocol produces a full deterministic matrix") {
  auto ds = tiny_split_dataset(60, 11);
  auto cfg = quick_config();

  auto dev = run_adc_protocol(ds, cfg);
  REQUIRE(dev.size() == 2);
  REQUIRE(dev.base_accuracy.size() == 2);
  REQUIRE(dev.finetuned.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(dev.base_accuracy[i] >= 0.0);
    CHECK(dev.base_accuracy[i] <= 100.0);
    for (double v : dev.finetuned[i]) {
      CHECK(v >= 0.0);
      CHECK(v <= 100.0);
    }
  }
  CHECK(compute_adc(dev) >= 0.0);

  auto again = run_adc_protocol(ds, cfg);
  CHECK(same_doubles(dev.base_accuracy, again.base_accuracy));
  for (std::size_t i = 0; i < 2; ++i) CHECK(same_doubles(dev.finetuned[i], again.finetuned[i]));

  // The per-dimension branches are independent, so thread count cannot matter.
  auto threaded_cfg = cfg;
  threaded_cfg.jobs = 4;
  auto threaded = run_adc_protocol(ds, threaded_cfg);
  CHECK(same_doubles(dev.base_accuracy, threaded.base_accuracy));
  for (std::size_t i = 0; i < 2; ++i)
    CHECK(same_doubles(dev.finetuned[i], threaded.finetuned[i]));
}

TEST_CASE("run_adc_protocol with zero fine-tune steps reproduces the base row") {
  auto ds = tiny_split_dataset(40, 3);
  auto cfg = quick_config();
  cfg.finetune_steps = 0;

  auto dev = run_adc_protocol(ds, cfg);
  for (std::size_t i = 0; i < dev.size(); ++i)
    CHECK(same_doubles(dev.finetuned[i], dev.base_accuracy));
  CHECK(compute_adc(dev) == 0.0);
}

TEST_CASE("run_adc_protocol rejects unsplittable input") {
  corpus::SyntheticConfig synth;
  synth.n_dims = 2;
  synth.pairs_per_dim = {20, 20};
  synth.seed = 5;
  auto unsplit = corpus::generate_synthetic(synth);
  CHECK_THROWS_AS(run_adc_protocol(unsplit, quick_config()), InputError);

  // The generator refuses single-dimension corpora, so build one by hand.
  corpus::DimensionSet solo;
  solo.names = {"solo"};
  solo.definitions["solo"] = "the only quality";
  std::vector<corpus::PreferencePair> pairs;
  for (int i = 0; i < 10; ++i) {
    corpus::PreferencePair p;
    p.id = "s" + std::to_string(i);
    p.prompt = "prompt " + std::to_string(i);
    p.chosen = "good answer";
    p.rejected = "bad answer";
    p.dimension = "solo";
    pairs.push_back(std::move(p));
  }
  auto single = corpus::split_train_test(corpus::make_dataset(solo, pairs, {}), 0.2, 1);
  CHECK_THROWS_AS(run_adc_protocol(single, quick_config()), InputError);
}

TEST_CASE("run_protocol_models feeds ADC-B") {
  auto ds = tiny_split_dataset(40, 21);
  auto cfg = quick_config();
  cfg.finetune_steps = 0;

  auto models = run_protocol_models(ds, cfg);
  REQUIRE(models.dimensions.size() == 2);
  REQUIRE(models.finetuned.size() == 2);

  // With M=0 the branches carry the base weights, so every benchmark
  // deviation is identically zero.
  DatasetEvaluator bench(ds, 64, 99);
  auto r = run_adc_b(models.base, models.finetuned, bench);
  CHECK(r.benchmark_dimensions == bench.dimensions());
  REQUIRE(r.finetuned.size() == 2);
  CHECK(same_doubles(r.base, r.finetuned[0]));
  CHECK(same_doubles(r.base, r.finetuned[1]));
  CHECK(r.value == 0.0);
}

TEST_CASE("DatasetEvaluator scores per-dimension accuracy in pp") {
  auto ds = tiny_split_dataset(40, 31);
  DatasetEvaluator bench(ds, 64, 5);
  REQUIRE(bench.dimensions().size() == 2);

  // A zero model ties every pair; strict comparison scores them all wrong.
  reward::Featurizer fz;
  fz.feature_dim = 1 << 10;
  reward::RewardModel zero = reward::make_model(fz);
  auto scores = bench.evaluate(zero);
  REQUIRE(scores.size() == 2);
  CHECK(scores[0] == 0.0);
  CHECK(scores[1] == 0.0);

  auto again = bench.evaluate(zero);
  CHECK(same_doubles(scores, again));
}

TEST_CASE("run_adc_b consumes evaluator scores in protocol order") {
  reward::Featurizer fz;
  fz.feature_dim = 64;
  auto model = reward::make_model(fz);

  ScriptEvaluator ev({"helpfulness", "honesty"}, {{50, 50}, {47, 54}, {52, 50}});
  auto r = run_adc_b(model, {model, model}, ev);
  CHECK(r.base == std::vector<double>{50, 50});
  REQUIRE(r.finetuned.size() == 2);
  CHECK(r.finetuned[0] == std::vector<double>{47, 54});
  CHECK(r.finetuned[1] == std::vector<double>{52, 50});
  // Rows contribute 9/2 and 0, averaged over two rows.
  CHECK(r.value == doctest::Approx(2.25).epsilon(1e-9));

  ScriptEvaluator empty_ev({"x"}, {{1.0}});
  CHECK_THROWS_AS(run_adc_b(model, {}, empty_ev), InputError);
}

TEST_CASE("adc report emitters carry the config and the value") {
  auto dev = make_matrix({70, 70}, {{75, 60}, {75, 72}});
  dev.protocol = quick_config();

  auto text = adc_report_text(dev);
  CHECK(text.find("ADC") != std::string::npos);
  CHECK(text.find("d0") != std::string::npos);
  CHECK(text.find("d1") != std::string::npos);
  CHECK(text.find("base_steps=60") != std::string::npos);
  CHECK(text.find("50") != std::string::npos);

  auto csv = adc_report_csv(dev);
  CHECK(csv.find("dimension") != std::string::npos);
  CHECK(csv.find("d0") != std::string::npos);
  CHECK(csv.find("adc") != std::string::npos);

  AdcBResult r;
  r.benchmark_dimensions = {"helpfulness", "honesty"};
  r.base = {50, 50};
  r.finetuned = {{47, 54}};
  r.value = compute_adc_b(r.base, r.finetuned);
  auto btext = adc_b_report_text(r);
  CHECK(btext.find("ADC-B") != std::string::npos);
  CHECK(btext.find("helpfulness") != std::string::npos);
  auto bcsv = adc_b_report_csv(r);
  CHECK(bcsv.find("honesty") != std::string::npos);
}
