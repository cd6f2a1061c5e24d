#include "prefconflict/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "prefconflict/error.hpp"
#include "prefconflict/pool.hpp"
#include "prefconflict/rng.hpp"
#include "prefconflict/text.hpp"

namespace prefconflict::pipeline {

using nlohmann::json;

std::string to_string(TiePolicy policy) {
  return policy == TiePolicy::random_assign ? "random-assign" : "drop";
}

TiePolicy tie_policy_from_string(const std::string& text) {
  if (text == "random-assign" || text == "random_assign") return TiePolicy::random_assign;
  if (text == "drop") return TiePolicy::drop;
  throw UsageError("unknown tie policy \"" + text + "\" (random-assign or drop)");
}

annotate::ClientConfig PipelineConfig::client_config() const {
  annotate::ClientConfig cc;
  cc.cache_dir = cache_dir;
  cc.max_retries = max_retries;
  cc.backoff_base_ms = backoff_base_ms;
  cc.backoff_cap_ms = backoff_cap_ms;
  return cc;
}

void PipelineConfig::validate() const {
  if (annotation_sample_k < 1) throw UsageError("annotation_sample_k must be >= 1");
  if (tau1 < 0.0 || tau2 < 0.0) throw UsageError("tau1 and tau2 must be >= 0");
  if (tie_tolerance < 0.0) throw UsageError("tie_tolerance must be >= 0");
  if (max_parallel_requests < 1) throw UsageError("max_parallel_requests must be >= 1");
  client_config().validate();
}

// --- prefilter ---------------------------------------------------------------

PrefilterResult prefilter_source(const corpus::PreferenceDataset& source, double tau1) {
  if (tau1 < 0.0) throw UsageError("tau1 must be >= 0");
  std::vector<std::string> missing;
  for (const auto& p : source.pairs) {
    if (!p.source_score_gap) missing.push_back(p.id);
  }
  if (!missing.empty()) {
    std::string ids;
    for (std::size_t i = 0; i < std::min<std::size_t>(missing.size(), 10); ++i) {
      ids += (i ? ", " : "") + missing[i];
    }
    if (missing.size() > 10) ids += ", ...";
    throw InputError("prefilter needs source_score_gap on every pair; missing on " +
                     std::to_string(missing.size()) + ": " + ids);
  }

  PrefilterResult out;
  out.input_count = source.pairs.size();
  std::vector<corpus::PreferencePair> kept;
  for (const auto& p : source.pairs) {
    if (*p.source_score_gap >= tau1) kept.push_back(p);
  }
  out.kept_count = kept.size();
  out.dropped_count = out.input_count - out.kept_count;
  out.dataset = corpus::make_dataset(source.dimensions, std::move(kept));
  return out;
}

// --- stage a -----------------------------------------------------------------

StageAResult stage_a_annotate(const corpus::PreferenceDataset& dataset, int k,
                              annotate::AnnotatorClient& client, std::uint64_t seed,
                              int max_parallel_requests) {
  if (k < 1) throw UsageError("stage a needs a sample size k >= 1");
  if (dataset.pairs.size() < static_cast<std::size_t>(k)) {
    throw InputError("stage a needs at least " + std::to_string(k) + " pairs; dataset has " +
                     std::to_string(dataset.pairs.size()));
  }

  std::vector<std::size_t> indices(dataset.pairs.size());
  std::iota(indices.begin(), indices.end(), 0);
  Rng rng(derive_seed(seed, "stage-a-sample"));
  rng.shuffle(indices);
  indices.resize(static_cast<std::size_t>(k));
  std::sort(indices.begin(), indices.end());  // keep records in dataset order

  std::vector<std::optional<annotate::AnnotationRecord>> slots(indices.size());
  std::vector<std::optional<QuarantineEntry>> failures(indices.size());
  parallel_for(indices.size(), max_parallel_requests, [&](std::size_t i) {
    const auto& pair = dataset.pairs[indices[i]];
    try {
      slots[i] = client.annotate_preference(pair);
    } catch (const Error& e) {
      failures[i] = QuarantineEntry{pair.id, "stage-a", e.what()};
    }
  });

  StageAResult out;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i]) out.records.push_back(std::move(*slots[i]));
    if (failures[i]) out.quarantined.push_back(std::move(*failures[i]));
  }
  return out;
}

// --- stage b -----------------------------------------------------------------

corpus::DimensionSet stage_b_refine(const std::vector<annotate::AnnotationRecord>& records,
                                    annotate::AnnotatorClient& client) {
  if (records.empty()) throw InputError("stage b needs at least one annotation record");
  std::vector<annotate::QualityEntry> entries;
  entries.reserve(records.size());
  std::set<std::string> distinct;
  for (const auto& r : records) {
    entries.push_back({r.quality, r.reason});
    distinct.insert(r.quality);
  }

  corpus::DimensionSet dims = client.refine_dimensions(entries);
  dims.validate();  // n >= 2, names distinct, every name defined
  if (dims.size() > distinct.size()) {
    throw InputError("refinement returned " + std::to_string(dims.size()) +
                     " dimensions from only " + std::to_string(distinct.size()) +
                     " distinct raw qualities");
  }
  return dims;
}

// --- stage c -----------------------------------------------------------------

namespace {

// Per-pair measurement, independent of the tie policy so one pass can serve
// both the standard and the fine-grained view.
struct SplitOutcome {
  bool ok = false;
  std::map<std::string, double> gaps;   // original orientation, quantized
  std::vector<std::string> tied;        // argmax set in dimension order
  QuarantineEntry quarantine;
};

std::vector<SplitOutcome> measure_all(const corpus::PreferenceDataset& dataset,
                                      const corpus::DimensionSet& dims,
                                      annotate::AnnotatorClient& client,
                                      const PipelineConfig& config) {
  dims.validate();
  std::vector<SplitOutcome> outcomes(dataset.pairs.size());
  parallel_for(dataset.pairs.size(), config.max_parallel_requests, [&](std::size_t i) {
    const auto& pair = dataset.pairs[i];
    auto& out = outcomes[i];
    try {
      for (const auto& dim : dims.names) {
        // Randomize candidate order per query so position bias cannot reach
        // the gap; the sign is corrected back afterwards.
        Rng order(derive_seed(config.seed, "order:" + pair.id + ":" + dim));
        const bool flip = order.uniform01() < 0.5;
        const std::string& first = flip ? pair.rejected : pair.chosen;
        const std::string& second = flip ? pair.chosen : pair.rejected;
        double g = client.reward_gap(pair.prompt, first, second, dim,
                                     dims.definitions.at(dim));
        if (flip) g = -g;
        // Quantize at assignment: the in-memory gap equals its serialized
        // form, so threshold filters agree with reloaded files exactly.
        out.gaps[dim] = quantize_real6(g);
      }
      double best = 0.0;
      for (const auto& [d, g] : out.gaps) best = std::max(best, std::abs(g));
      for (const auto& d : dims.names) {
        if (best - std::abs(out.gaps.at(d)) <= config.tie_tolerance) out.tied.push_back(d);
      }
      out.ok = true;
    } catch (const Error& e) {
      out = SplitOutcome{};
      out.quarantine = QuarantineEntry{pair.id, "stage-c", e.what()};
    }
  });
  return outcomes;
}

struct AssembledView {
  std::vector<corpus::PreferencePair> survivors;
  std::size_t tie_count = 0;
  std::size_t tie_dropped = 0;
  std::size_t orientation_swapped = 0;
};

AssembledView assemble_view(const corpus::PreferenceDataset& dataset,
                            const std::vector<SplitOutcome>& outcomes, TiePolicy policy,
                            std::uint64_t seed) {
  AssembledView view;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto& out = outcomes[i];
    if (!out.ok) continue;
    const auto& base = dataset.pairs[i];
    std::string winner;
    if (out.tied.size() > 1) {
      ++view.tie_count;
      if (policy == TiePolicy::drop) {
        ++view.tie_dropped;
        continue;
      }
      Rng tie(derive_seed(seed, "tie:" + base.id));
      winner = out.tied[tie.below(out.tied.size())];
    } else {
      winner = out.tied.front();
    }

    corpus::PreferencePair p = base;
    p.dimension = winner;
    p.gaps = out.gaps;
    if (p.gaps.at(winner) < 0.0) {
      std::swap(p.chosen, p.rejected);
      for (auto& [d, g] : p.gaps) g = -g;  // sign flip preserves quantization
      ++view.orientation_swapped;
    }
    view.survivors.push_back(std::move(p));
  }
  return view;
}

}  // namespace

StageCResult stage_c_split(const corpus::PreferenceDataset& dataset,
                           const corpus::DimensionSet& dims, annotate::AnnotatorClient& client,
                           const PipelineConfig& config) {
  config.validate();
  const auto outcomes = measure_all(dataset, dims, client, config);
  auto view = assemble_view(dataset, outcomes, config.tie_policy, config.seed);

  StageCResult out;
  out.tie_count = view.tie_count;
  out.tie_dropped = view.tie_dropped;
  out.orientation_swapped = view.orientation_swapped;
  for (const auto& o : outcomes) {
    if (!o.ok) out.quarantined.push_back(o.quarantine);
  }
  out.dataset = corpus::make_dataset(dims, std::move(view.survivors));
  return out;
}

// --- fine-grained filter -------------------------------------------------------

FilterResult filter_fine_grained(const corpus::PreferenceDataset& labeled, double tau2) {
  if (tau2 < 0.0) throw UsageError("tau2 must be >= 0");
  std::vector<std::string> bad;
  for (const auto& p : labeled.pairs) {
    if (!p.dimension || p.gaps.find(*p.dimension) == p.gaps.end()) bad.push_back(p.id);
  }
  if (!bad.empty()) {
    std::string ids;
    for (std::size_t i = 0; i < std::min<std::size_t>(bad.size(), 10); ++i) {
      ids += (i ? ", " : "") + bad[i];
    }
    if (bad.size() > 10) ids += ", ...";
    throw InputError("fine-grained filter needs labeled pairs with winning gaps; bad: " + ids);
  }

  FilterResult out;
  out.input_count = labeled.pairs.size();
  std::vector<corpus::PreferencePair> kept;
  for (const auto& p : labeled.pairs) {
    if (std::abs(p.gaps.at(*p.dimension)) >= tau2) kept.push_back(p);
  }
  out.kept_count = kept.size();
  out.retention_ratio = out.input_count == 0
                            ? 1.0
                            : static_cast<double>(out.kept_count) /
                                  static_cast<double>(out.input_count);
  out.dataset = corpus::make_dataset(labeled.dimensions, std::move(kept));
  return out;
}

// --- orchestration ---------------------------------------------------------------

BuildResult run_build(const corpus::PreferenceDataset& source,
                      annotate::AnnotatorClient& client, const PipelineConfig& config,
                      bool fine_grained) {
  config.validate();
  if (source.pairs.empty()) throw InputError("build needs a nonempty source dataset");

  BuildResult result;
  auto& report = result.report;
  report.source_pairs = source.pairs.size();
  report.annotation_sample_k = static_cast<std::size_t>(config.annotation_sample_k);

  auto pre = prefilter_source(source, config.tau1);
  report.prefilter_kept = pre.kept_count;
  report.prefilter_dropped = pre.dropped_count;

  auto a = stage_a_annotate(pre.dataset, config.annotation_sample_k, client, config.seed,
                            config.max_parallel_requests);
  report.annotated = a.records.size();
  for (const auto& r : a.records) ++report.quality_histogram[r.quality];
  for (auto& q : a.quarantined) report.quarantined.push_back(std::move(q));

  report.dimensions = stage_b_refine(a.records, client);

  report.stage_c_input = pre.dataset.pairs.size();
  const auto outcomes = measure_all(pre.dataset, report.dimensions, client, config);
  for (const auto& o : outcomes) {
    if (!o.ok) report.quarantined.push_back(o.quarantine);
  }

  auto standard = assemble_view(pre.dataset, outcomes, TiePolicy::random_assign, config.seed);
  report.tie_count = standard.tie_count;
  report.orientation_swapped = standard.orientation_swapped;
  report.survivors = standard.survivors.size();
  result.standard = corpus::make_dataset(report.dimensions, std::move(standard.survivors));

  if (fine_grained) {
    auto strict = assemble_view(pre.dataset, outcomes, TiePolicy::drop, config.seed);
    report.tie_dropped = strict.tie_dropped;
    auto filtered = filter_fine_grained(
        corpus::make_dataset(report.dimensions, std::move(strict.survivors)), config.tau2);
    report.fine_grained_kept = filtered.kept_count;
    report.fine_grained_retention = filtered.retention_ratio;
    result.fine_grained = std::move(filtered.dataset);
  }

  report.transport_calls = client.transport_calls();
  return result;
}

// --- reports ----------------------------------------------------------------------

std::string build_report_text(const BuildReport& r) {
  std::ostringstream out;
  out << "dataset build report\n";
  out << "  source pairs:        " << r.source_pairs << "\n";
  out << "  prefilter kept:      " << r.prefilter_kept << " (dropped " << r.prefilter_dropped
      << ")\n";
  out << "  stage a annotated:   " << r.annotated << " of " << r.annotation_sample_k
      << " sampled\n";
  out << "  raw quality names:   " << r.quality_histogram.size() << "\n";
  for (const auto& [name, count] : r.quality_histogram) {
    out << "    " << name << ": " << count << "\n";
  }
  out << "  refined dimensions:  " << r.dimensions.size() << "\n";
  for (const auto& name : r.dimensions.names) {
    out << "    " << name << ": " << r.dimensions.definitions.at(name) << "\n";
  }
  out << "  stage c input:       " << r.stage_c_input << "\n";
  out << "  survivors:           " << r.survivors << "\n";
  out << "  max-gap ties:        " << r.tie_count << "\n";
  out << "  orientation swaps:   " << r.orientation_swapped << "\n";
  if (r.fine_grained_kept > 0 || r.tie_dropped > 0) {
    out << "  fine-grained kept:   " << r.fine_grained_kept << " (ties dropped " << r.tie_dropped
        << ", retention " << format_real6(r.fine_grained_retention) << ")\n";
  }
  out << "  quarantined:         " << r.quarantined.size() << "\n";
  for (const auto& q : r.quarantined) {
    out << "    " << q.pair_id << " [" << q.stage << "] " << q.reason << "\n";
  }
  out << "  transport calls:     " << r.transport_calls << "\n";
  return out.str();
}

std::string build_report_json(const BuildReport& r) {
  json dims = json::array();
  for (const auto& name : r.dimensions.names) {
    dims.push_back({{"name", name}, {"definition", r.dimensions.definitions.at(name)}});
  }
  json quarantined = json::array();
  for (const auto& q : r.quarantined) {
    quarantined.push_back({{"pair_id", q.pair_id}, {"stage", q.stage}, {"reason", q.reason}});
  }
  const json j = {
      {"source_pairs", r.source_pairs},
      {"prefilter_kept", r.prefilter_kept},
      {"prefilter_dropped", r.prefilter_dropped},
      {"annotation_sample_k", r.annotation_sample_k},
      {"annotated", r.annotated},
      {"quality_histogram", r.quality_histogram},
      {"dimensions", dims},
      {"stage_c_input", r.stage_c_input},
      {"survivors", r.survivors},
      {"tie_count", r.tie_count},
      {"tie_dropped", r.tie_dropped},
      {"orientation_swapped", r.orientation_swapped},
      {"fine_grained_kept", r.fine_grained_kept},
      {"fine_grained_retention", r.fine_grained_retention},
      {"quarantined", quarantined},
      {"transport_calls", r.transport_calls},
  };
  return j.dump(2) + "\n";
}

std::string quarantine_jsonl(const std::vector<QuarantineEntry>& entries) {
  std::string out;
  for (const auto& q : entries) {
    out += json{{"pair_id", q.pair_id}, {"stage", q.stage}, {"reason", q.reason}}.dump() + "\n";
  }
  return out;
}

}  // namespace prefconflict::pipeline
