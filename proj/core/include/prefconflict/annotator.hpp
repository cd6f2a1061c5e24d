#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "prefconflict/corpus.hpp"

namespace prefconflict::annotate {

// One completion request against whatever sits behind the annotator endpoint.
// Implementations must be callable from several threads at once.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::string complete(const std::string& prompt) = 0;
};

struct QualityEntry {
  std::string quality;
  std::string reason;
};

struct AnnotationRecord {
  std::string pair_id;
  std::string quality;
  std::string reason;
  int chosen = 0;    // 0: candidate-1 (the pair's stored chosen), 1: candidate-2
  std::string raw;   // verbatim response text
  int attempts = 1;  // transport calls made; 0 means served from cache
};

// Typed annotator operations consumed by the pipeline stages. reward_gap
// scores the two responses in the order given and returns
// reward(first) - reward(second); callers own any order randomization.
class AnnotatorClient {
 public:
  virtual ~AnnotatorClient() = default;

  virtual AnnotationRecord annotate_preference(const corpus::PreferencePair& pair) = 0;
  virtual corpus::DimensionSet refine_dimensions(const std::vector<QualityEntry>& entries) = 0;
  virtual double reward_gap(const std::string& prompt, const std::string& first,
                            const std::string& second, const std::string& dimension,
                            const std::string& definition) = 0;

  // Transport requests issued so far (cache hits don't count).
  virtual std::uint64_t transport_calls() const = 0;
};

struct ClientConfig {
  std::filesystem::path cache_dir;  // empty disables the on-disk cache
  int max_retries = 3;              // extra attempts after the first failure
  int backoff_base_ms = 250;        // doubled per retry; 0 disables sleeping
  int backoff_cap_ms = 4000;

  void validate() const;
};

// The production client: renders the wire templates, calls the transport,
// validates the response shape, retries with exponential backoff, and caches
// validated raw responses on disk keyed by sha256(template id + rendered
// prompt). Cache writes are atomic (write-temp-then-rename), so concurrent
// writers of the same key are benign.
class TemplateAnnotator : public AnnotatorClient {
 public:
  TemplateAnnotator(std::shared_ptr<Transport> transport, ClientConfig config);

  AnnotationRecord annotate_preference(const corpus::PreferencePair& pair) override;
  corpus::DimensionSet refine_dimensions(const std::vector<QualityEntry>& entries) override;
  double reward_gap(const std::string& prompt, const std::string& first,
                    const std::string& second, const std::string& dimension,
                    const std::string& definition) override;
  std::uint64_t transport_calls() const override { return calls_.load(); }

 private:
  std::shared_ptr<Transport> transport_;
  ClientConfig config_;
  std::atomic<std::uint64_t> calls_{0};

  // Runs the render->cache->call->validate->retry loop; returns the validated
  // raw response and the number of transport calls spent on it.
  std::pair<std::string, int> fetch(const std::string& template_id, const std::string& rendered,
                                    const std::function<void(const std::string&)>& validate);
};

// HTTP transport configured from ANNOTATOR_BASE_URL / ANNOTATOR_API_KEY;
// throws ExternalError at construction when the endpoint is not configured.
std::shared_ptr<Transport> make_http_transport();

// Fully offline deterministic transport: parses the rendered prompts it
// receives and answers with schema-conformant responses driven by fixed text
// heuristics (conciseness prefers the shorter response, accuracy rewards
// overlap with the prompt, and so on), so the whole pipeline runs without a
// network. fail_every_n > 0 makes every Nth call return malformed text
// (sequential use only; the counter is process-wide per transport).
std::shared_ptr<Transport> make_mock_transport(int fail_every_n = 0);

// --- wire templates ---------------------------------------------------------
//
// The three prompt templates live as files under templates/ and as embedded
// constants (kept in sync by a test). Slots use {{name}} markers; rendering
// is plain substitution.

extern const char* const kTemplateIdAnnotation;   // "preference_annotation"
extern const char* const kTemplateIdRefinement;   // "dimension_refinement"
extern const char* const kTemplateIdRewardGap;    // "reward_gap"

const std::string& template_text(const std::string& template_id);
std::vector<std::string> template_ids();

std::string render_annotation_prompt(const corpus::PreferencePair& pair);
std::string render_refinement_prompt(const std::vector<QualityEntry>& entries);
std::string render_reward_gap_prompt(const std::string& prompt, const std::string& first,
                                     const std::string& second, const std::string& dimension,
                                     const std::string& definition);

// Deterministic per-dimension response score in [0, 5] used by the mock
// transport on both sides of the protocol (quality pick and reward gaps).
double mock_dimension_score(const std::string& dimension, const std::string& prompt,
                            const std::string& response);

// The six refined dimensions the mock's refinement stage answers with,
// matching the definitions the reward-gap template embeds.
const corpus::DimensionSet& mock_refined_dimensions();

}  // namespace prefconflict::annotate
