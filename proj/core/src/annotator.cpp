#include "prefconflict/annotator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string_view>
#include <thread>

#include "json.hpp"
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"
#include "prefconflict/error.hpp"
#include "prefconflict/rng.hpp"
#include "prefconflict/sha256.hpp"
#include "prefconflict/text.hpp"

namespace prefconflict::annotate {

using nlohmann::json;

// --- wire templates -----------------------------------------------------------
//
// These constants mirror templates/*.txt byte for byte (a test enforces it).

const char* const kTemplateIdAnnotation = "preference_annotation";
const char* const kTemplateIdRefinement = "dimension_refinement";
const char* const kTemplateIdRewardGap = "reward_gap";

namespace {

const std::string kAnnotationTemplate =
    R"(Following is a pair-wise RM training data item with the structure {'prompt':[prompt], 'candidate-1':[candidate-1], 'candidate-2':[candidate-2]}.

The 'prompt' stands for a question/situation in which one agent is asked to answer; the 'candidate-1' and 'candidate-2' are two responses from agents. One response is better than the other.

Your task is to give a brief assessment about which response is better and in which quality it did so. Your output should have following json format: {'quality':[summarize the quality name],'reason':response-1(or response-2) is better because [reason],'chosen':[0 for response-1 better and 1 for response-2 better]}. Remind the 'reason' part should contain no more than 40 words.

Here is the item case:
{{item}}
)";

const std::string kRefinementTemplate =
    R"(You will receive a series of example entries formatted to:
{"quality": "aspect-name", "reason": "Response-1 (or Response-2) is better because [reason]"}.

Please understand the meaning of each entry in conjunction with the 'quality' and analyze the differences and connections between them.

Finally, summarize all the 'qualities' and refine them by only retaining the 'qualities' that are semantically independent and have as little feature overlap as possible, and provide the reasons for doing so. Your output should follow this format: {"single-quality": "aspect-name", "reason": "because [reason]"}.

Here is the list of example entries:
{{entries}}
)";

const std::string kRewardGapTemplate =
    R"(Following is a pair-wise RM training data item with the structure {'prompt':[prompt], 'chosen':[chosen output], 'rejected':[rejected output]}.

The 'prompt' stands for a question one agent is asked to answer and the 'chosen' and 'rejected' are two responses from the above agent. Your task is to assess both of them and give reward (float, 5.0 for best and 0.0 for worst) in the dimension of {{dimension}} with the definition "{{definition}}", for 'chosen' and 'rejected' responses(Each response one score). Then compute the gap between the two rewards ('chosen' reward - 'rejected' reward).
Finally only output the reward gap.

Here is the item case:
{{item}}
)";

std::string replace_slot(std::string text, const std::string& slot, const std::string& value) {
  const auto at = text.find(slot);
  if (at == std::string::npos) {
    throw InputError("template is missing slot " + slot);
  }
  text.replace(at, slot.size(), value);
  return text;
}

std::string jq(const std::string& s) { return json(s).dump(); }

}  // namespace

const std::string& template_text(const std::string& template_id) {
  if (template_id == kTemplateIdAnnotation) return kAnnotationTemplate;
  if (template_id == kTemplateIdRefinement) return kRefinementTemplate;
  if (template_id == kTemplateIdRewardGap) return kRewardGapTemplate;
  throw UsageError("unknown template id \"" + template_id + "\"");
}

std::vector<std::string> template_ids() {
  return {kTemplateIdAnnotation, kTemplateIdRefinement, kTemplateIdRewardGap};
}

std::string render_annotation_prompt(const corpus::PreferencePair& pair) {
  const std::string item = "{\"prompt\":" + jq(pair.prompt) +
                           ",\"candidate-1\":" + jq(pair.chosen) +
                           ",\"candidate-2\":" + jq(pair.rejected) + "}";
  return replace_slot(kAnnotationTemplate, "{{item}}", item);
}

std::string render_refinement_prompt(const std::vector<QualityEntry>& entries) {
  std::string list;
  for (const auto& e : entries) {
    list += "{\"quality\":" + jq(e.quality) + ",\"reason\":" + jq(e.reason) + "}\n";
  }
  if (!list.empty()) list.pop_back();  // the template supplies the final newline
  return replace_slot(kRefinementTemplate, "{{entries}}", list);
}

std::string render_reward_gap_prompt(const std::string& prompt, const std::string& first,
                                     const std::string& second, const std::string& dimension,
                                     const std::string& definition) {
  const std::string item = "{\"prompt\":" + jq(prompt) + ",\"chosen\":" + jq(first) +
                           ",\"rejected\":" + jq(second) + "}";
  std::string text = replace_slot(kRewardGapTemplate, "{{dimension}}", dimension);
  text = replace_slot(text, "{{definition}}", definition);
  return replace_slot(text, "{{item}}", item);
}

// --- response validation --------------------------------------------------------

namespace {

json parse_json(const std::string& raw, const char* what) {
  try {
    return json::parse(raw);
  } catch (const json::parse_error& e) {
    throw InputError(std::string(what) + ": response is not valid JSON: " + e.what());
  }
}

void validate_annotation(const std::string& raw) {
  const json j = parse_json(raw, "annotation");
  if (!j.is_object()) throw InputError("annotation: response is not a JSON object");
  if (!j.contains("quality") || !j["quality"].is_string() ||
      j["quality"].get<std::string>().empty()) {
    throw InputError("annotation: missing or empty \"quality\"");
  }
  if (!j.contains("reason") || !j["reason"].is_string()) {
    throw InputError("annotation: missing \"reason\"");
  }
  if (!j.contains("chosen") || !j["chosen"].is_number_integer()) {
    throw InputError("annotation: missing integer \"chosen\"");
  }
  const int c = j["chosen"].get<int>();
  if (c != 0 && c != 1) throw InputError("annotation: \"chosen\" must be 0 or 1");
}

void validate_refinement(const std::string& raw) {
  const json j = parse_json(raw, "refinement");
  if (!j.is_array() || j.empty()) throw InputError("refinement: expected a nonempty JSON array");
  std::set<std::string> seen;
  for (const auto& e : j) {
    if (!e.is_object() || !e.contains("single-quality") || !e["single-quality"].is_string() ||
        !e.contains("reason") || !e["reason"].is_string()) {
      throw InputError("refinement: entries must be {\"single-quality\", \"reason\"} objects");
    }
    const auto name = e["single-quality"].get<std::string>();
    if (name.empty()) throw InputError("refinement: empty quality name");
    if (!seen.insert(name).second) {
      throw InputError("refinement: duplicate quality name \"" + name + "\"");
    }
    if (e["reason"].get<std::string>().empty()) {
      throw InputError("refinement: empty reason for \"" + name + "\"");
    }
  }
}

double parse_gap(const std::string& raw) {
  std::string t = raw;
  const auto a = t.find_first_not_of(" \t\r\n");
  const auto b = t.find_last_not_of(" \t\r\n");
  if (a == std::string::npos) throw InputError("reward gap: empty response");
  t = t.substr(a, b - a + 1);
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || !std::isfinite(v)) {
    throw InputError("reward gap: response \"" + t + "\" is not a number");
  }
  if (std::abs(v) > 5.0) {
    throw InputError("reward gap: |" + t + "| exceeds the 5.0 score range");
  }
  return v;
}

void validate_gap(const std::string& raw) { parse_gap(raw); }

}  // namespace

// --- caching/retrying client ------------------------------------------------------

void ClientConfig::validate() const {
  if (max_retries < 0) throw UsageError("max_retries must be >= 0");
  if (backoff_base_ms < 0 || backoff_cap_ms < 0) throw UsageError("backoff must be >= 0 ms");
}

TemplateAnnotator::TemplateAnnotator(std::shared_ptr<Transport> transport, ClientConfig config)
    : transport_(std::move(transport)), config_(std::move(config)) {
  config_.validate();
  if (!transport_) throw UsageError("TemplateAnnotator needs a transport");
  if (!config_.cache_dir.empty()) std::filesystem::create_directories(config_.cache_dir);
}

std::pair<std::string, int> TemplateAnnotator::fetch(
    const std::string& template_id, const std::string& rendered,
    const std::function<void(const std::string&)>& validate) {
  const bool cached = !config_.cache_dir.empty();
  std::filesystem::path cache_path;
  if (cached) {
    cache_path = config_.cache_dir / (sha256_hex(template_id + "\n" + rendered) + ".txt");
    std::ifstream in(cache_path, std::ios::binary);
    if (in.good()) {
      std::ostringstream buf;
      buf << in.rdbuf();
      std::string raw = buf.str();
      try {
        validate(raw);
        return {std::move(raw), 0};
      } catch (const Error&) {
        // Corrupt or stale entry: fall through and refetch.
      }
    }
  }

  std::string last_error;
  for (int attempt = 1; attempt <= 1 + config_.max_retries; ++attempt) {
    try {
      calls_.fetch_add(1);
      std::string raw = transport_->complete(rendered);
      validate(raw);
      if (cached) {
        // Atomic publish; concurrent writers of one key write identical bytes.
        static std::atomic<std::uint64_t> tmp_counter{0};
        const std::filesystem::path tmp =
            cache_path.string() + ".tmp" + std::to_string(tmp_counter.fetch_add(1));
        {
          std::ofstream out(tmp, std::ios::binary);
          out << raw;
          if (!out.good()) throw InputError("cannot write cache file " + tmp.string());
        }
        std::filesystem::rename(tmp, cache_path);
      }
      return {std::move(raw), attempt};
    } catch (const Error& e) {
      last_error = e.what();
      if (attempt <= config_.max_retries && config_.backoff_base_ms > 0) {
        const int ms = std::min(config_.backoff_cap_ms,
                                config_.backoff_base_ms * (1 << (attempt - 1)));
        std::this_thread::sleep_for(std::chrono::milliseconds(ms));
      }
    }
  }
  throw ExternalError("annotator request (" + template_id + ") failed after " +
                      std::to_string(1 + config_.max_retries) + " attempt(s): " + last_error);
}

AnnotationRecord TemplateAnnotator::annotate_preference(const corpus::PreferencePair& pair) {
  const auto [raw, attempts] =
      fetch(kTemplateIdAnnotation, render_annotation_prompt(pair), validate_annotation);
  const json j = json::parse(raw);
  AnnotationRecord rec;
  rec.pair_id = pair.id;
  rec.quality = j["quality"].get<std::string>();
  rec.reason = j["reason"].get<std::string>();
  rec.chosen = j["chosen"].get<int>();
  rec.raw = raw;
  rec.attempts = attempts;
  return rec;
}

corpus::DimensionSet TemplateAnnotator::refine_dimensions(
    const std::vector<QualityEntry>& entries) {
  if (entries.empty()) throw InputError("refine_dimensions: no entries");
  const auto [raw, attempts] =
      fetch(kTemplateIdRefinement, render_refinement_prompt(entries), validate_refinement);
  (void)attempts;
  const json j = json::parse(raw);
  corpus::DimensionSet dims;
  for (const auto& e : j) {
    const auto name = e["single-quality"].get<std::string>();
    std::string def = e["reason"].get<std::string>();
    // The refinement format wraps the definition as "because [reason]"; strip
    // the connective so definitions read like the splitting template expects.
    if (def.rfind("because ", 0) == 0) def = def.substr(8);
    dims.names.push_back(name);
    dims.definitions[name] = def;
  }
  return dims;
}

double TemplateAnnotator::reward_gap(const std::string& prompt, const std::string& first,
                                     const std::string& second, const std::string& dimension,
                                     const std::string& definition) {
  const auto [raw, attempts] = fetch(
      kTemplateIdRewardGap, render_reward_gap_prompt(prompt, first, second, dimension, definition),
      validate_gap);
  (void)attempts;
  return parse_gap(raw);
}

// --- HTTP transport ---------------------------------------------------------------

namespace {

class HttpTransport : public Transport {
 public:
  HttpTransport(std::string base_url, std::string api_key)
      : base_url_(std::move(base_url)), api_key_(std::move(api_key)) {}

  std::string complete(const std::string& prompt) override {
    httplib::Client cli(base_url_);  // per-request client: trivially thread-safe
    cli.set_connection_timeout(10);
    cli.set_read_timeout(120);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    const std::string body = json{{"prompt", prompt}}.dump();
    auto res = cli.Post("/v1/complete", headers, body, "application/json");
    if (!res) {
      throw ExternalError("annotator unreachable at " + base_url_ + ": " +
                          httplib::to_string(res.error()));
    }
    if (res->status != 200) {
      throw ExternalError("annotator returned HTTP " + std::to_string(res->status));
    }
    const json j = parse_json(res->body, "annotator");
    if (!j.is_object() || !j.contains("text") || !j["text"].is_string()) {
      throw ExternalError("annotator response lacks a \"text\" field");
    }
    return j["text"].get<std::string>();
  }

 private:
  std::string base_url_;
  std::string api_key_;
};

}  // namespace

std::shared_ptr<Transport> make_http_transport() {
  const char* url = std::getenv("ANNOTATOR_BASE_URL");
  if (url == nullptr || *url == '\0') {
    throw ExternalError(
        "annotator endpoint not configured: set ANNOTATOR_BASE_URL (and optionally "
        "ANNOTATOR_API_KEY) or run with --mock");
  }
  const char* key = std::getenv("ANNOTATOR_API_KEY");
  return std::make_shared<HttpTransport>(url, key ? key : "");
}

// --- mock transport ---------------------------------------------------------------

const corpus::DimensionSet& mock_refined_dimensions() {
  static const corpus::DimensionSet dims = [] {
    corpus::DimensionSet d;
    d.names = {"accuracy", "conciseness", "depth", "empathy", "tone", "specificity"};
    d.definitions = {
        {"accuracy",
         "the adherence to factual correctness, ensuring that information is free from errors"},
        {"conciseness",
         "the ability to convey information with brevity, using a minimal number of words "
         "without sacrificing clarity"},
        {"depth",
         "the thoroughness of analysis or explanation, providing detailed insights into a "
         "subject"},
        {"empathy",
         "the capacity to understand and share the feelings of others, reflecting compassion in "
         "communication"},
        {"tone",
         "the author's attitude or mood conveyed through language, influencing the reader's "
         "perception"},
        {"specificity",
         "the provision of precise and detailed information, avoiding generalizations or "
         "vagueness"},
    };
    return d;
  }();
  return dims;
}

namespace {

double hash01(std::uint64_t h) { return static_cast<double>(splitmix64(h) >> 11) * 0x1.0p-53; }

}  // namespace

double mock_dimension_score(const std::string& dimension, const std::string& prompt,
                            const std::string& response) {
  const auto tokens = tokenize(response);
  if (tokens.empty()) return 0.0;
  const double len = static_cast<double>(tokens.size());
  if (dimension == "accuracy") {
    const auto prompt_tokens = tokenize(prompt);
    const std::set<std::string_view> key(prompt_tokens.begin(), prompt_tokens.end());
    std::size_t hit = 0;
    for (auto t : tokens) hit += key.count(t);
    return 5.0 * static_cast<double>(hit) / len;
  }
  if (dimension == "conciseness") {
    return 5.0 / (1.0 + len / 24.0);  // shorter response scores higher
  }
  if (dimension == "depth") {
    return 5.0 * std::min(1.0, len / 48.0);  // longer response scores higher
  }
  if (dimension == "specificity") {
    const std::set<std::string_view> distinct(tokens.begin(), tokens.end());
    return 5.0 * static_cast<double>(distinct.size()) / len;
  }
  // empathy, tone, and any unrecognized dimension: a stable pseudo-score.
  return 5.0 * hash01(fnv1a64(response) ^ fnv1a64(dimension));
}

namespace {

// Raw (pre-refinement) names the mock annotator reports, several per refined
// dimension, so stage-a histograms look like a many-to-few refinement input.
const std::map<std::string, std::vector<std::string>> kRawQualityPool = {
    {"accuracy", {"accuracy", "correctness", "factuality", "truthfulness", "precision"}},
    {"conciseness", {"conciseness", "brevity", "succinctness"}},
    {"depth", {"depth", "thoroughness", "detail", "comprehensiveness"}},
    {"empathy", {"empathy", "compassion", "warmth", "supportiveness"}},
    {"tone", {"tone", "politeness", "style", "respectfulness"}},
    {"specificity", {"specificity", "concreteness", "exactness"}},
};

class MockTransport : public Transport {
 public:
  explicit MockTransport(int fail_every_n) : fail_every_n_(fail_every_n) {}

  std::string complete(const std::string& prompt) override {
    if (fail_every_n_ > 0) {
      const std::uint64_t k = counter_.fetch_add(1) + 1;
      if (k % static_cast<std::uint64_t>(fail_every_n_) == 0) {
        return "MOCK-INJECTED-MALFORMED-RESPONSE " + std::to_string(k);
      }
    }
    if (prompt.find("'candidate-1':[candidate-1]") != std::string::npos) {
      return annotation_reply(prompt);
    }
    if (prompt.find("You will receive a series of example entries") != std::string::npos) {
      return refinement_reply();
    }
    if (prompt.find("give reward (float, 5.0 for best and 0.0 for worst)") != std::string::npos) {
      return gap_reply(prompt);
    }
    throw ExternalError("mock transport: unrecognized prompt shape");
  }

 private:
  int fail_every_n_;
  std::atomic<std::uint64_t> counter_{0};

  static json item_tail(const std::string& prompt, const char* marker) {
    const auto at = prompt.rfind(marker);
    if (at == std::string::npos) {
      throw ExternalError("mock transport: prompt lacks its item marker");
    }
    std::string tail = prompt.substr(at + std::strlen(marker));
    try {
      return json::parse(tail);
    } catch (const json::parse_error& e) {
      throw ExternalError(std::string("mock transport: malformed item: ") + e.what());
    }
  }

  static std::string annotation_reply(const std::string& prompt) {
    const json item = item_tail(prompt, "Here is the item case:\n");
    const auto p = item.at("prompt").get<std::string>();
    const auto c1 = item.at("candidate-1").get<std::string>();
    const auto c2 = item.at("candidate-2").get<std::string>();

    const auto& dims = mock_refined_dimensions().names;
    std::string best_dim = dims.front();
    double best_gap = 0.0;
    for (const auto& d : dims) {
      const double g = mock_dimension_score(d, p, c1) - mock_dimension_score(d, p, c2);
      if (std::abs(g) > std::abs(best_gap)) {
        best_gap = g;
        best_dim = d;
      }
    }
    const auto& pool = kRawQualityPool.at(best_dim);
    const std::size_t pick =
        splitmix64(fnv1a64(p) ^ fnv1a64(c1) ^ fnv1a64(c2)) % pool.size();
    const int chosen = best_gap >= 0.0 ? 0 : 1;
    json out;
    out["quality"] = pool[pick];
    out["reason"] = std::string("response-") + (chosen == 0 ? "1" : "2") +
                    " is better because it scores higher on " + best_dim + ".";
    out["chosen"] = chosen;
    return out.dump();
  }

  static std::string refinement_reply() {
    const auto& dims = mock_refined_dimensions();
    json out = json::array();
    for (const auto& name : dims.names) {
      out.push_back(
          {{"single-quality", name}, {"reason", "because " + dims.definitions.at(name)}});
    }
    return out.dump();
  }

  static std::string gap_reply(const std::string& prompt) {
    const auto dim_at = prompt.find("in the dimension of ");
    const auto def_at = prompt.find(" with the definition");
    if (dim_at == std::string::npos || def_at == std::string::npos || def_at <= dim_at) {
      throw ExternalError("mock transport: reward-gap prompt lacks its dimension");
    }
    const std::string dim = prompt.substr(dim_at + 20, def_at - (dim_at + 20));
    const json item = item_tail(prompt, "Here is the item case:\n");
    const auto p = item.at("prompt").get<std::string>();
    const double gap = mock_dimension_score(dim, p, item.at("chosen").get<std::string>()) -
                       mock_dimension_score(dim, p, item.at("rejected").get<std::string>());
    return format_real6(gap);
  }
};

}  // namespace

std::shared_ptr<Transport> make_mock_transport(int fail_every_n) {
  return std::make_shared<MockTransport>(fail_every_n);
}

}  // namespace prefconflict::annotate
