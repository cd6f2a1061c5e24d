#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "prefconflict/annotator.hpp"
#include "prefconflict/corpus.hpp"

namespace prefconflict::pipeline {

// How stage c resolves pairs whose largest |gap| is shared (within
// tie_tolerance) by several dimensions: assign one of the tied dimensions by
// seeded draw, or drop the pair. The standard build assigns; the fine-grained
// build drops.
enum class TiePolicy { random_assign, drop };

std::string to_string(TiePolicy policy);
TiePolicy tie_policy_from_string(const std::string& text);

struct PipelineConfig {
  int annotation_sample_k = 400;  // stage-a sample size
  double tau1 = 4.0;              // source-score-gap prefilter, inclusive
  double tau2 = 0.5;              // fine-grained winning-|gap| filter, inclusive
  TiePolicy tie_policy = TiePolicy::random_assign;
  double tie_tolerance = 1e-6;
  std::uint64_t seed = 0;
  int max_parallel_requests = 1;

  // Client plumbing, forwarded to annotate::ClientConfig.
  std::filesystem::path cache_dir;  // empty disables the response cache
  int max_retries = 3;
  int backoff_base_ms = 250;
  int backoff_cap_ms = 4000;

  annotate::ClientConfig client_config() const;
  void validate() const;
};

// A pair the pipeline could not process; quarantined pairs are reported, never
// silently dropped.
struct QuarantineEntry {
  std::string pair_id;
  std::string stage;   // "stage-a" or "stage-c"
  std::string reason;
};

// --- the three stages, exposed individually ---------------------------------

struct PrefilterResult {
  corpus::PreferenceDataset dataset;
  std::size_t input_count = 0;
  std::size_t kept_count = 0;
  std::size_t dropped_count = 0;
};

// Keeps pairs with source_score_gap >= tau1 (boundary inclusive). Every pair
// must carry a source score gap.
PrefilterResult prefilter_source(const corpus::PreferenceDataset& source, double tau1);

struct StageAResult {
  std::vector<annotate::AnnotationRecord> records;  // dataset order
  std::vector<QuarantineEntry> quarantined;
};

// Samples k pairs (deterministic per seed), asks the annotator which response
// is better and in which quality. Failures beyond the client's retry budget
// are quarantined.
StageAResult stage_a_annotate(const corpus::PreferenceDataset& dataset, int k,
                              annotate::AnnotatorClient& client, std::uint64_t seed,
                              int max_parallel_requests = 1);

// One refine_dimensions call over the stage-a {quality, reason} entries.
// The result must name between 2 and (distinct input qualities) dimensions.
corpus::DimensionSet stage_b_refine(const std::vector<annotate::AnnotationRecord>& records,
                                    annotate::AnnotatorClient& client);

struct StageCResult {
  corpus::PreferenceDataset dataset;           // labeled survivors
  std::vector<QuarantineEntry> quarantined;
  std::size_t tie_count = 0;          // pairs whose max |gap| was tied
  std::size_t tie_dropped = 0;        // ties removed under TiePolicy::drop
  std::size_t orientation_swapped = 0;  // pairs flipped by a negative winning gap
};

// For every pair, one independent reward_gap query per dimension (candidate
// order randomized per query and sign-corrected afterwards, so position bias
// cannot leak into the gap). Gaps are quantized to their serialized precision
// at assignment. dimension = argmax |gap|; a negative winning gap swaps
// chosen/rejected and negates every stored gap.
StageCResult stage_c_split(const corpus::PreferenceDataset& dataset,
                           const corpus::DimensionSet& dims, annotate::AnnotatorClient& client,
                           const PipelineConfig& config);

struct FilterResult {
  corpus::PreferenceDataset dataset;
  std::size_t input_count = 0;
  std::size_t kept_count = 0;
  double retention_ratio = 0.0;  // kept / input, exactly
};

// Keeps pairs whose winning |gap| >= tau2 (boundary inclusive). Pairs must be
// labeled and carry their winning gap.
FilterResult filter_fine_grained(const corpus::PreferenceDataset& labeled, double tau2);

// --- whole-pipeline orchestration --------------------------------------------

struct BuildReport {
  std::size_t source_pairs = 0;
  std::size_t prefilter_kept = 0;
  std::size_t prefilter_dropped = 0;
  std::size_t annotation_sample_k = 0;
  std::size_t annotated = 0;
  std::map<std::string, std::size_t> quality_histogram;  // raw stage-a names
  corpus::DimensionSet dimensions;
  std::size_t stage_c_input = 0;
  std::size_t survivors = 0;
  std::size_t tie_count = 0;
  std::size_t tie_dropped = 0;          // fine-grained view only
  std::size_t orientation_swapped = 0;
  std::size_t fine_grained_kept = 0;    // after tau2; 0 when not built
  double fine_grained_retention = 0.0;
  std::vector<QuarantineEntry> quarantined;
  std::uint64_t transport_calls = 0;
};

struct BuildResult {
  corpus::PreferenceDataset standard;
  std::optional<corpus::PreferenceDataset> fine_grained;
  BuildReport report;
};

// prefilter -> stage a -> stage b -> stage c over the whole prefiltered set.
// The standard dataset resolves ties by seeded assignment; when fine_grained
// is requested, a second view drops ties and applies the tau2 filter. Both
// views reuse the same per-pair gap measurements, so no extra annotator
// traffic is issued for the second view.
BuildResult run_build(const corpus::PreferenceDataset& source,
                      annotate::AnnotatorClient& client, const PipelineConfig& config,
                      bool fine_grained);

std::string build_report_text(const BuildReport& report);
std::string build_report_json(const BuildReport& report);
std::string quarantine_jsonl(const std::vector<QuarantineEntry>& entries);

}  // namespace prefconflict::pipeline
