#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <unistd.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "prefconflict/annotator.hpp"
#include "prefconflict/corpus.hpp"
#include "prefconflict/error.hpp"
#include "prefconflict/pipeline.hpp"
#include "prefconflict/text.hpp"

using namespace prefconflict;
using namespace prefconflict::pipeline;

namespace {

std::filesystem::path temp_dir() {
  static int counter = 0;
  auto dir = std::filesystem::temp_directory_path() /
             ("prefconflict-pipe-" + std::to_string(::getpid()) + "-" +
              std::to_string(counter++));
  std::filesystem::create_directories(dir);
  return dir;
}

corpus::DimensionSet two_dims() {
  corpus::DimensionSet d;
  d.names = {"alpha", "beta"};
  d.definitions = {{"alpha", "the alpha-ness"}, {"beta", "the beta-ness"}};
  return d;
}

corpus::PreferencePair make_pair(std::string id, std::string prompt, std::string chosen,
                                 std::string rejected, double ssg = 5.0) {
  corpus::PreferencePair p;
  p.id = std::move(id);
  p.prompt = std::move(prompt);
  p.chosen = std::move(chosen);
  p.rejected = std::move(rejected);
  p.source_score_gap = ssg;
  return p;
}

// Scripted client keyed on pair prompts: reward_gap answers by content, so
// stage c's candidate-order randomization must be sign-corrected for the
// configured gaps to come back out.
class FakeClient : public annotate::AnnotatorClient {
 public:
  struct PairSpec {
    std::string chosen;                 // text the gap signs are relative to
    std::map<std::string, double> gaps;
  };

  std::map<std::string, PairSpec> specs;  // keyed by prompt
  corpus::DimensionSet refined;
  std::set<std::string> fail_prompts;

  annotate::AnnotationRecord annotate_preference(const corpus::PreferencePair& pair) override {
    annotate::AnnotationRecord rec;
    rec.pair_id = pair.id;
    rec.quality = "stub-quality";
    rec.reason = "response-1 is better because stub";
    rec.chosen = 0;
    return rec;
  }

  corpus::DimensionSet refine_dimensions(const std::vector<annotate::QualityEntry>&) override {
    return refined;
  }

  double reward_gap(const std::string& prompt, const std::string& first, const std::string&,
                    const std::string& dimension, const std::string&) override {
    calls_.fetch_add(1);
    if (fail_prompts.count(prompt)) throw ExternalError("injected failure");
    const auto& spec = specs.at(prompt);
    const double g = spec.gaps.at(dimension);
    return first == spec.chosen ? g : -g;
  }

  std::uint64_t transport_calls() const override { return calls_.load(); }

 private:
  std::atomic<std::uint64_t> calls_{0};
};

PipelineConfig quiet_config(std::uint64_t seed = 7) {
  PipelineConfig cfg;
  cfg.seed = seed;
  cfg.max_retries = 0;
  cfg.backoff_base_ms = 0;
  return cfg;
}

std::size_t position_of(const corpus::PreferenceDataset& ds, const std::string& id) {
  for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
    if (ds.pairs[i].id == id) return i;
  }
  FAIL("pair not found: ", id);
  return 0;
}

bool has_pair(const corpus::PreferenceDataset& ds, const std::string& id) {
  for (const auto& p : ds.pairs) {
    if (p.id == id) return true;
  }
  return false;
}

corpus::PreferenceDataset synthetic_source(int per_dim, std::uint64_t seed) {
  corpus::SyntheticConfig synth;
  synth.n_dims = 2;
  synth.pairs_per_dim = {per_dim, per_dim};
  synth.conflict = 0.3;
  synth.seed = seed;
  return corpus::generate_synthetic(synth);
}

}  // namespace

TEST_CASE("tie policy names round-trip") {
  CHECK(to_string(TiePolicy::random_assign) == "random-assign");
  CHECK(to_string(TiePolicy::drop) == "drop");
  CHECK(tie_policy_from_string("random-assign") == TiePolicy::random_assign);
  CHECK(tie_policy_from_string("random_assign") == TiePolicy::random_assign);
  CHECK(tie_policy_from_string("drop") == TiePolicy::drop);
  CHECK_THROWS_AS(tie_policy_from_string("coinflip"), UsageError);
}

TEST_CASE("pipeline config is validated") {
  auto cfg = quiet_config();
  CHECK_NOTHROW(cfg.validate());

  cfg.annotation_sample_k = 0;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg = quiet_config();
  cfg.tau1 = -0.1;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg = quiet_config();
  cfg.tie_tolerance = -1e-9;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg = quiet_config();
  cfg.max_parallel_requests = 0;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg = quiet_config();
  cfg.max_retries = -1;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
}

TEST_CASE("prefilter keeps the inclusive boundary") {
  std::vector<corpus::PreferencePair> pairs = {
      make_pair("a", "q1", "g1", "b1", 3.9),
      make_pair("b", "q2", "g2", "b2", 4.0),
      make_pair("c", "q3", "g3", "b3", 4.1),
  };
  auto source = corpus::make_dataset(corpus::DimensionSet{}, pairs);

  auto out = prefilter_source(source, 4.0);
  CHECK(out.input_count == 3);
  CHECK(out.kept_count == 2);
  CHECK(out.dropped_count == 1);
  REQUIRE(out.dataset.pairs.size() == 2);
  CHECK(out.dataset.pairs[0].id == "b");
  CHECK(out.dataset.pairs[1].id == "c");

  CHECK(prefilter_source(source, 0.0).kept_count == 3);
  CHECK_THROWS_AS(prefilter_source(source, -1.0), UsageError);

  pairs.push_back(make_pair("d", "q4", "g4", "b4"));
  pairs.back().source_score_gap.reset();
  auto gappy = corpus::make_dataset(corpus::DimensionSet{}, pairs);
  try {
    prefilter_source(gappy, 4.0);
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("d") != std::string::npos);
  }
}

TEST_CASE("stage a samples deterministically and quarantines failures") {
  auto ds = synthetic_source(20, 3);

  annotate::ClientConfig cc;
  cc.backoff_base_ms = 0;
  cc.max_retries = 0;
  annotate::TemplateAnnotator client(annotate::make_mock_transport(), cc);

  auto out = stage_a_annotate(ds, 10, client, 42);
  REQUIRE(out.records.size() == 10);
  CHECK(out.quarantined.empty());

  // Records come back in dataset order and reference real pairs.
  std::size_t last = 0;
  for (const auto& rec : out.records) {
    auto at = position_of(ds, rec.pair_id);
    CHECK(at >= last);
    last = at;
    CHECK(!rec.quality.empty());
  }

  annotate::TemplateAnnotator again(annotate::make_mock_transport(), cc);
  auto rerun = stage_a_annotate(ds, 10, again, 42);
  REQUIRE(rerun.records.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(rerun.records[i].pair_id == out.records[i].pair_id);
    CHECK(rerun.records[i].raw == out.records[i].raw);
  }

  CHECK_THROWS_AS(stage_a_annotate(ds, 0, client, 1), UsageError);
  try {
    stage_a_annotate(ds, 1000, client, 1);
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("1000") != std::string::npos);
  }

  // A failing transport with no retry budget quarantines instead of aborting.
  annotate::TemplateAnnotator flaky(annotate::make_mock_transport(3), cc);
  auto injured = stage_a_annotate(ds, 10, flaky, 42);
  CHECK(injured.records.size() + injured.quarantined.size() == 10);
  CHECK(!injured.quarantined.empty());
  for (const auto& q : injured.quarantined) {
    CHECK(q.stage == "stage-a");
    CHECK(!q.reason.empty());
  }
}

TEST_CASE("stage b bounds the refined dimension count") {
  std::vector<annotate::AnnotationRecord> records(3);
  records[0].quality = "accuracy";
  records[0].reason = "response-1 is better because right";
  records[1].quality = "brevity";
  records[1].reason = "response-2 is better because short";
  records[2].quality = "accuracy";
  records[2].reason = "response-1 is better because factual";

  FakeClient client;
  client.refined = two_dims();
  auto dims = stage_b_refine(records, client);
  CHECK(dims.names == std::vector<std::string>{"alpha", "beta"});

  // Three names from two distinct raw qualities is over-splitting.
  client.refined.names.push_back("gamma");
  client.refined.definitions["gamma"] = "the gamma-ness";
  try {
    stage_b_refine(records, client);
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("3 dimensions from only 2") != std::string::npos);
  }

  // Fewer than two refined dimensions is rejected by the set validator.
  client.refined = corpus::DimensionSet{};
  client.refined.names = {"alpha"};
  client.refined.definitions = {{"alpha", "a"}};
  CHECK_THROWS_AS(stage_b_refine(records, client), InputError);

  CHECK_THROWS_AS(stage_b_refine({}, client), InputError);

  // A single distinct input quality cannot support two output dimensions.
  records[1] = records[0];
  records[2] = records[0];
  client.refined = two_dims();
  CHECK_THROWS_AS(stage_b_refine(records, client), InputError);
}

TEST_CASE("stage c labels by argmax gap and corrects orientation") {
  std::vector<corpus::PreferencePair> pairs = {
      make_pair("p1", "q1", "good one", "bad one"),
      make_pair("p2", "q2", "good two", "bad two"),
      make_pair("p3", "q3", "good three", "bad three"),
      make_pair("p4", "q4", "good four", "bad four"),
  };
  auto ds = corpus::make_dataset(corpus::DimensionSet{}, pairs);

  FakeClient client;
  client.specs["q1"] = {"good one", {{"alpha", 3.0}, {"beta", 1.0}}};
  client.specs["q2"] = {"good two", {{"alpha", -2.0}, {"beta", 0.5}}};
  client.specs["q3"] = {"good three", {{"alpha", 1.5}, {"beta", -1.5}}};
  client.specs["q4"] = {"good four", {{"alpha", 0.0}, {"beta", 0.0}}};

  auto cfg = quiet_config();
  auto out = stage_c_split(ds, two_dims(), client, cfg);
  CHECK(client.transport_calls() == 8);  // one query per pair per dimension
  CHECK(out.quarantined.empty());
  CHECK(out.tie_count == 2);   // p3 (equal magnitudes) and p4 (all zero)
  CHECK(out.tie_dropped == 0);
  CHECK(out.orientation_swapped == 1);
  REQUIRE(out.dataset.pairs.size() == 4);

  const auto& p1 = out.dataset.pair_by_id("p1");
  CHECK(p1.dimension == std::optional<std::string>("alpha"));
  CHECK(p1.chosen == "good one");
  CHECK(p1.gaps.at("alpha") == 3.0);
  CHECK(p1.gaps.at("beta") == 1.0);

  // p2's winning gap was negative: texts swap and every gap negates.
  const auto& p2 = out.dataset.pair_by_id("p2");
  CHECK(p2.dimension == std::optional<std::string>("alpha"));
  CHECK(p2.chosen == "bad two");
  CHECK(p2.rejected == "good two");
  CHECK(p2.gaps.at("alpha") == 2.0);
  CHECK(p2.gaps.at("beta") == -0.5);

  const auto& p3 = out.dataset.pair_by_id("p3");
  REQUIRE(p3.dimension.has_value());
  CHECK((*p3.dimension == "alpha" || *p3.dimension == "beta"));

  // Tie assignment is a pure function of seed and pair id.
  FakeClient client2;
  client2.specs = client.specs;
  auto rerun = stage_c_split(ds, two_dims(), client2, cfg);
  CHECK(rerun.dataset.pair_by_id("p3").dimension == p3.dimension);
  CHECK(dataset_digest(rerun.dataset) == dataset_digest(out.dataset));

  // Dropping ties removes exactly the tied pairs.
  auto drop_cfg = cfg;
  drop_cfg.tie_policy = TiePolicy::drop;
  FakeClient client3;
  client3.specs = client.specs;
  auto strict = stage_c_split(ds, two_dims(), client3, drop_cfg);
  CHECK(strict.tie_count == 2);
  CHECK(strict.tie_dropped == 2);
  CHECK(strict.dataset.pairs.size() == 2);
  CHECK(has_pair(strict.dataset, "p1"));
  CHECK(has_pair(strict.dataset, "p2"));
}

TEST_CASE("stage c sign correction survives candidate order randomization") {
  // Same configured gaps for every pair: if any internal flip went
  // uncorrected, that pair would surface swapped or negated.
  std::vector<corpus::PreferencePair> pairs;
  FakeClient client;
  for (int i = 0; i < 12; ++i) {
    const std::string id = "s" + std::to_string(i);
    pairs.push_back(make_pair(id, "prompt " + id, "good " + id, "bad " + id));
    client.specs["prompt " + id] = {"good " + id, {{"alpha", 2.5}, {"beta", 1.0}}};
  }
  auto ds = corpus::make_dataset(corpus::DimensionSet{}, pairs);

  auto out = stage_c_split(ds, two_dims(), client, quiet_config(11));
  CHECK(out.orientation_swapped == 0);
  REQUIRE(out.dataset.pairs.size() == 12);
  for (const auto& p : out.dataset.pairs) {
    CHECK(p.dimension == std::optional<std::string>("alpha"));
    CHECK(p.gaps.at("alpha") == 2.5);
    CHECK(p.gaps.at("beta") == 1.0);
    CHECK(p.chosen.rfind("good ", 0) == 0);
  }
}

TEST_CASE("stage c quantizes gaps at assignment and quarantines failures") {
  std::vector<corpus::PreferencePair> pairs = {
      make_pair("p1", "q1", "good one", "bad one"),
      make_pair("p2", "q2", "good two", "bad two"),
  };
  auto ds = corpus::make_dataset(corpus::DimensionSet{}, pairs);

  FakeClient client;
  client.specs["q1"] = {"good one", {{"alpha", 0.12345678}, {"beta", 0.0001}}};
  client.specs["q2"] = {"good two", {{"alpha", 1.0}, {"beta", 0.0}}};
  client.fail_prompts.insert("q2");

  auto out = stage_c_split(ds, two_dims(), client, quiet_config());
  REQUIRE(out.dataset.pairs.size() == 1);
  const auto& p1 = out.dataset.pairs[0];
  CHECK(p1.gaps.at("alpha") == quantize_real6(0.12345678));
  CHECK(p1.gaps.at("alpha") != 0.12345678);
  CHECK(format_real6(p1.gaps.at("alpha")) == "0.123457");

  REQUIRE(out.quarantined.size() == 1);
  CHECK(out.quarantined[0].pair_id == "p2");
  CHECK(out.quarantined[0].stage == "stage-c");
  CHECK(out.quarantined[0].reason.find("injected failure") != std::string::npos);

  // Survivors plus drops plus quarantines account for every input pair.
  CHECK(out.dataset.pairs.size() + out.tie_dropped + out.quarantined.size() == ds.pairs.size());
}

TEST_CASE("fine-grained filter keeps the inclusive tau2 boundary") {
  auto dims = two_dims();
  std::vector<corpus::PreferencePair> pairs;
  const double gaps[3] = {0.4, 0.5, 0.6};
  for (int i = 0; i < 3; ++i) {
    auto p = make_pair("p" + std::to_string(i), "q" + std::to_string(i), "g", "b");
    p.dimension = "alpha";
    p.gaps = {{"alpha", gaps[i]}, {"beta", 0.1}};
    pairs.push_back(std::move(p));
  }
  auto labeled = corpus::make_dataset(dims, pairs);

  auto out = filter_fine_grained(labeled, 0.5);
  CHECK(out.input_count == 3);
  CHECK(out.kept_count == 2);
  CHECK(out.retention_ratio == 2.0 / 3.0);
  CHECK(has_pair(out.dataset, "p1"));
  CHECK(has_pair(out.dataset, "p2"));

  // The filter reads the winning |gap|, so negative gaps count by magnitude.
  pairs[0].gaps["alpha"] = -0.9;
  auto negative = filter_fine_grained(corpus::make_dataset(dims, pairs), 0.5);
  CHECK(negative.kept_count == 3);

  CHECK(filter_fine_grained(labeled, 0.0).kept_count == 3);
  CHECK_THROWS_AS(filter_fine_grained(labeled, -0.5), UsageError);

  auto empty = filter_fine_grained(corpus::make_dataset(dims, {}), 0.5);
  CHECK(empty.kept_count == 0);
  CHECK(empty.retention_ratio == 1.0);

  // Unlabeled pairs (or labels without a recorded gap) are a usage bug.
  auto bare = make_pair("u1", "q", "g", "b");
  try {
    filter_fine_grained(corpus::make_dataset(dims, {bare}), 0.5);
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("u1") != std::string::npos);
  }
}

TEST_CASE("run_build assembles both views from one measurement pass") {
  auto source = synthetic_source(60, 17);

  auto cfg = quiet_config(23);
  cfg.annotation_sample_k = 20;

  annotate::TemplateAnnotator client(annotate::make_mock_transport(), cfg.client_config());
  auto built = run_build(source, client, cfg, /*fine_grained=*/true);
  const auto& r = built.report;

  CHECK(r.source_pairs == 120);
  CHECK(r.prefilter_kept + r.prefilter_dropped == 120);
  REQUIRE(r.prefilter_kept >= 20);  // tau1=4 halves a U[0,8) gap distribution
  CHECK(r.annotated == 20);
  std::size_t histogram_total = 0;
  for (const auto& [name, count] : r.quality_histogram) {
    CHECK(!name.empty());
    histogram_total += count;
  }
  CHECK(histogram_total == 20);
  CHECK(r.dimensions.names == annotate::mock_refined_dimensions().names);
  CHECK(r.stage_c_input == r.prefilter_kept);

  // Standard view keeps ties; only quarantines reduce it.
  std::size_t stage_c_quarantined = 0;
  for (const auto& q : r.quarantined) stage_c_quarantined += q.stage == "stage-c";
  CHECK(r.survivors + stage_c_quarantined == r.stage_c_input);
  CHECK(built.standard.pairs.size() == r.survivors);
  for (const auto& p : built.standard.pairs) {
    REQUIRE(p.dimension.has_value());
    CHECK(p.gaps.size() == r.dimensions.size());
    CHECK(p.gaps.at(*p.dimension) >= 0.0);  // orientation normalized
  }

  // Fine-grained view: ties dropped, then the tau2 threshold.
  REQUIRE(built.fine_grained.has_value());
  CHECK(built.fine_grained->pairs.size() == r.fine_grained_kept);
  const std::size_t strict_input = r.stage_c_input - r.tie_dropped - stage_c_quarantined;
  if (strict_input > 0) {
    CHECK(r.fine_grained_retention ==
          static_cast<double>(r.fine_grained_kept) / static_cast<double>(strict_input));
  }
  for (const auto& p : built.fine_grained->pairs) {
    CHECK(std::abs(p.gaps.at(*p.dimension)) >= cfg.tau2);
  }

  // The annotator was consulted once per sampled pair, once for refinement,
  // and once per pair-dimension measurement; both views share that traffic.
  CHECK(r.transport_calls ==
        20 + 1 + r.stage_c_input * r.dimensions.size());

  // Byte-level reproducibility, including at higher parallelism.
  annotate::TemplateAnnotator rerun_client(annotate::make_mock_transport(), cfg.client_config());
  auto rerun = run_build(source, rerun_client, cfg, true);
  CHECK(corpus::dataset_digest(rerun.standard) == corpus::dataset_digest(built.standard));
  CHECK(corpus::dataset_digest(*rerun.fine_grained) ==
        corpus::dataset_digest(*built.fine_grained));
  CHECK(build_report_json(rerun.report) == build_report_json(r));

  auto wide_cfg = cfg;
  wide_cfg.max_parallel_requests = 4;
  annotate::TemplateAnnotator wide_client(annotate::make_mock_transport(), cfg.client_config());
  auto wide = run_build(source, wide_client, wide_cfg, true);
  CHECK(corpus::dataset_digest(wide.standard) == corpus::dataset_digest(built.standard));
  CHECK(corpus::dataset_digest(*wide.fine_grained) ==
        corpus::dataset_digest(*built.fine_grained));
}

TEST_CASE("run_build reuses a warm response cache without transport traffic") {
  auto source = synthetic_source(30, 29);
  auto cfg = quiet_config(31);
  cfg.annotation_sample_k = 10;
  cfg.cache_dir = temp_dir();

  annotate::TemplateAnnotator cold(annotate::make_mock_transport(), cfg.client_config());
  auto first = run_build(source, cold, cfg, true);
  CHECK(first.report.transport_calls > 0);

  annotate::TemplateAnnotator warm(annotate::make_mock_transport(), cfg.client_config());
  auto second = run_build(source, warm, cfg, true);
  CHECK(second.report.transport_calls == 0);
  CHECK(corpus::dataset_digest(second.standard) == corpus::dataset_digest(first.standard));
}

TEST_CASE("run_build rejects impossible inputs") {
  FakeClient client;
  auto cfg = quiet_config();
  CHECK_THROWS_AS(run_build(corpus::make_dataset(corpus::DimensionSet{}, {}), client, cfg, false),
                  InputError);

  // The sample size cannot exceed the prefiltered pool.
  auto source = synthetic_source(10, 5);
  cfg.annotation_sample_k = 1000;
  CHECK_THROWS_AS(run_build(source, client, cfg, false), InputError);
}

TEST_CASE("build reports and quarantine logs serialize cleanly") {
  BuildReport r;
  r.source_pairs = 10;
  r.prefilter_kept = 6;
  r.prefilter_dropped = 4;
  r.annotation_sample_k = 5;
  r.annotated = 4;
  r.quality_histogram = {{"accuracy", 3}, {"brevity", 1}};
  r.dimensions = two_dims();
  r.stage_c_input = 6;
  r.survivors = 5;
  r.tie_count = 1;
  r.tie_dropped = 1;
  r.orientation_swapped = 2;
  r.fine_grained_kept = 3;
  r.fine_grained_retention = 0.75;
  r.quarantined = {{"p9", "stage-c", "injected failure"}};
  r.transport_calls = 40;

  auto text = build_report_text(r);
  CHECK(text.find("dataset build report") != std::string::npos);
  CHECK(text.find("accuracy: 3") != std::string::npos);
  CHECK(text.find("alpha: the alpha-ness") != std::string::npos);
  CHECK(text.find("p9 [stage-c] injected failure") != std::string::npos);
  CHECK(text.find("transport calls:     40") != std::string::npos);

  auto parsed = nlohmann::json::parse(build_report_json(r));
  CHECK(parsed["source_pairs"] == 10);
  CHECK(parsed["quality_histogram"]["accuracy"] == 3);
  CHECK(parsed["dimensions"][0]["name"] == "alpha");
  CHECK(parsed["quarantined"][0]["pair_id"] == "p9");
  CHECK(parsed["fine_grained_retention"] == 0.75);

  auto lines = quarantine_jsonl(r.quarantined);
  auto entry = nlohmann::json::parse(lines.substr(0, lines.find('\n')));
  CHECK(entry["pair_id"] == "p9");
  CHECK(entry["stage"] == "stage-c");
  CHECK(quarantine_jsonl({}).empty());
}
