#include "prefconflict/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>

#include "json.hpp"
#include "prefconflict/error.hpp"
#include "prefconflict/rng.hpp"
#include "prefconflict/sha256.hpp"
#include "prefconflict/text.hpp"

namespace prefconflict::corpus {

using nlohmann::json;

namespace {

constexpr const char* kManifestFormat = "prefconflict-dataset-manifest v1";

std::string quoted(const std::string& s) { return json(s).dump(); }

[[noreturn]] void fail_input(const std::string& msg) { throw InputError(msg); }

}  // namespace

void DimensionSet::validate() const {
  if (names.size() < 2) {
    fail_input("dimension set needs at least 2 dimensions, got " + std::to_string(names.size()));
  }
  std::set<std::string> seen;
  for (const auto& name : names) {
    if (name.empty()) fail_input("empty dimension name");
    if (!seen.insert(name).second) fail_input("duplicate dimension name \"" + name + "\"");
    if (definitions.find(name) == definitions.end()) {
      fail_input("dimension \"" + name + "\" has no definition");
    }
  }
}

const PreferencePair& PreferenceDataset::pair_by_id(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) fail_input("unknown pair id \"" + id + "\"");
  return pairs[it->second];
}

std::size_t PreferenceDataset::labeled_count() const {
  std::size_t n = 0;
  for (const auto& [dim, ids] : partitions) n += ids.size();
  return n;
}

std::vector<std::string> PreferenceDataset::partition_ids(const std::string& dim,
                                                          Split side) const {
  auto it = partitions.find(dim);
  if (it == partitions.end()) fail_input("unknown dimension \"" + dim + "\"");
  std::vector<std::string> out;
  for (const auto& id : it->second) {
    if (split.empty()) {
      if (side == Split::train) out.push_back(id);
      continue;
    }
    auto sit = split.find(id);
    if (sit != split.end() && sit->second == side) out.push_back(id);
  }
  return out;
}

PreferenceDataset make_dataset(DimensionSet dims, std::vector<PreferencePair> pairs,
                               std::map<std::string, Split> split) {
  // Structural checks on the dimension set (the n >= 2 floor is enforced by
  // the operations that need it, not here: an empty dataset is legal).
  {
    std::set<std::string> seen;
    for (const auto& name : dims.names) {
      if (name.empty()) fail_input("empty dimension name");
      if (!seen.insert(name).second) fail_input("duplicate dimension name \"" + name + "\"");
      if (dims.definitions.find(name) == dims.definitions.end()) {
        fail_input("dimension \"" + name + "\" has no definition");
      }
    }
  }

  PreferenceDataset ds;
  ds.dimensions = std::move(dims);
  ds.pairs = std::move(pairs);

  for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
    auto& p = ds.pairs[i];
    if (p.id.empty()) fail_input("pair at position " + std::to_string(i) + " has empty id");
    if (!ds.index_.emplace(p.id, i).second) fail_input("duplicate pair id \"" + p.id + "\"");
    if (p.prompt.empty()) fail_input("pair \"" + p.id + "\": empty prompt");
    if (p.chosen.empty()) fail_input("pair \"" + p.id + "\": empty chosen");
    if (p.rejected.empty()) fail_input("pair \"" + p.id + "\": empty rejected");
    if (p.chosen == p.rejected) fail_input("pair \"" + p.id + "\": chosen equals rejected");
    if (p.dimension && !ds.dimensions.contains(*p.dimension)) {
      fail_input("pair \"" + p.id + "\": undeclared dimension \"" + *p.dimension + "\"");
    }
    for (const auto& [k, v] : p.gaps) {
      if (!ds.dimensions.contains(k)) {
        fail_input("pair \"" + p.id + "\": gap key \"" + k + "\" is not a declared dimension");
      }
      if (!std::isfinite(v)) fail_input("pair \"" + p.id + "\": non-finite gap for \"" + k + "\"");
    }
    if (p.source_score_gap && !std::isfinite(*p.source_score_gap)) {
      fail_input("pair \"" + p.id + "\": non-finite source_score_gap");
    }
  }

  for (const auto& name : ds.dimensions.names) ds.partitions[name];  // keep declared order keys
  for (const auto& p : ds.pairs) {
    if (p.dimension) {
      ds.partitions[*p.dimension].push_back(p.id);
    } else {
      ds.unassigned.push_back(p.id);
    }
  }
  // Drop declared-but-empty partitions so partition sizes always sum to the
  // labeled-pair count and iteration touches only populated dimensions.
  for (auto it = ds.partitions.begin(); it != ds.partitions.end();) {
    it = it->second.empty() ? ds.partitions.erase(it) : std::next(it);
  }

  if (!split.empty()) {
    for (const auto& [id, side] : split) {
      (void)side;
      if (ds.index_.find(id) == ds.index_.end()) {
        fail_input("split references unknown pair id \"" + id + "\"");
      }
    }
    if (split.size() != ds.pairs.size()) {
      fail_input("split must cover every pair (got " + std::to_string(split.size()) + " of " +
                 std::to_string(ds.pairs.size()) + ")");
    }
    ds.split = std::move(split);
    for (const auto& [dim, ids] : ds.partitions) {
      const bool has_test = std::any_of(ids.begin(), ids.end(), [&](const std::string& id) {
        return ds.split.at(id) == Split::test;
      });
      if (!has_test) fail_input("partition \"" + dim + "\" has an empty test slice");
    }
  }
  return ds;
}

// --- canonical serialization -------------------------------------------------

std::string canonical_record(const PreferencePair& p) {
  std::string out = "{\"id\":" + quoted(p.id) + ",\"prompt\":" + quoted(p.prompt) +
                    ",\"chosen\":" + quoted(p.chosen) + ",\"rejected\":" + quoted(p.rejected);
  if (p.dimension) out += ",\"dimension\":" + quoted(*p.dimension);
  if (!p.gaps.empty()) {
    out += ",\"gaps\":{";
    bool first = true;
    for (const auto& [k, v] : p.gaps) {
      if (!first) out += ",";
      first = false;
      out += quoted(k) + ":" + format_real6(v);
    }
    out += "}";
  }
  if (p.source_score_gap) out += ",\"source_score_gap\":" + format_real6(*p.source_score_gap);
  out += "}";
  return out;
}

std::string dataset_digest(const PreferenceDataset& ds) {
  std::string blob;
  for (const auto& p : ds.pairs) {
    blob += canonical_record(p);
    blob += '\n';
  }
  return sha256_hex(blob);
}

std::filesystem::path manifest_path_for(const std::filesystem::path& dataset_path) {
  std::filesystem::path p = dataset_path;
  p.replace_extension();
  p += ".manifest.json";
  return p;
}

namespace {

PreferencePair parse_record(const json& j, const std::string& where) {
  static const std::set<std::string> kFields = {"id",        "prompt", "chosen",
                                               "rejected",  "dimension", "gaps",
                                               "source_score_gap"};
  if (!j.is_object()) fail_input(where + ": record is not an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (kFields.find(it.key()) == kFields.end()) {
      fail_input(where + ": unknown field \"" + it.key() + "\"");
    }
  }
  PreferencePair p;
  auto need_string = [&](const char* key) -> std::string {
    if (!j.contains(key) || !j[key].is_string()) {
      fail_input(where + ": missing or non-string field \"" + std::string(key) + "\"");
    }
    return j[key].get<std::string>();
  };
  p.id = need_string("id");
  p.prompt = need_string("prompt");
  p.chosen = need_string("chosen");
  p.rejected = need_string("rejected");
  if (j.contains("dimension")) {
    if (!j["dimension"].is_string()) fail_input(where + ": non-string dimension");
    p.dimension = j["dimension"].get<std::string>();
  }
  if (j.contains("gaps")) {
    if (!j["gaps"].is_object()) fail_input(where + ": gaps is not an object");
    for (auto it = j["gaps"].begin(); it != j["gaps"].end(); ++it) {
      if (!it.value().is_number()) fail_input(where + ": non-numeric gap \"" + it.key() + "\"");
      p.gaps[it.key()] = quantize_real6(it.value().get<double>());
    }
  }
  if (j.contains("source_score_gap")) {
    if (!j["source_score_gap"].is_number()) fail_input(where + ": non-numeric source_score_gap");
    p.source_score_gap = quantize_real6(j["source_score_gap"].get<double>());
  }
  return p;
}

}  // namespace

PreferenceDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in.good()) fail_input("cannot open dataset file " + path.string());

  std::vector<PreferencePair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      fail_input(where + ": parse error: " + e.what());
    }
    pairs.push_back(parse_record(j, where));
  }

  DimensionSet dims;
  std::map<std::string, Split> split;
  const auto mpath = manifest_path_for(path);
  if (std::filesystem::exists(mpath)) {
    std::ifstream min(mpath);
    json m;
    try {
      m = json::parse(min);
    } catch (const json::parse_error& e) {
      fail_input(mpath.string() + ": parse error: " + std::string(e.what()));
    }
    if (m.value("format", "") != kManifestFormat) {
      fail_input(mpath.string() + ": unsupported manifest format");
    }
    for (const auto& d : m.at("dimensions")) {
      const auto name = d.at("name").get<std::string>();
      dims.names.push_back(name);
      dims.definitions[name] = d.at("definition").get<std::string>();
    }
    if (m.contains("test_ids") && !m["test_ids"].is_null()) {
      std::set<std::string> test_ids;
      for (const auto& id : m["test_ids"]) test_ids.insert(id.get<std::string>());
      for (const auto& p : pairs) {
        split[p.id] = test_ids.count(p.id) ? Split::test : Split::train;
      }
    }
    auto ds = make_dataset(std::move(dims), std::move(pairs), std::move(split));
    const auto expected = m.value("digest_sha256", "");
    if (!expected.empty() && expected != dataset_digest(ds)) {
      fail_input(path.string() + ": content digest does not match manifest");
    }
    return ds;
  }

  // Bare file: declare dimensions from the labels (and gap keys) seen, in
  // first-appearance order, with placeholder definitions.
  std::set<std::string> declared;
  auto declare = [&](const std::string& name) {
    if (declared.insert(name).second) {
      dims.names.push_back(name);
      dims.definitions[name] = "(unspecified)";
    }
  };
  for (const auto& p : pairs) {
    if (p.dimension) declare(*p.dimension);
  }
  for (const auto& p : pairs) {
    for (const auto& [k, v] : p.gaps) {
      (void)v;
      declare(k);
    }
  }
  return make_dataset(std::move(dims), std::move(pairs));
}

void save_dataset(const PreferenceDataset& ds, const std::filesystem::path& path) {
  {
    std::ofstream out(path, std::ios::binary);
    if (!out.good()) fail_input("cannot write dataset file " + path.string());
    for (const auto& p : ds.pairs) {
      out << canonical_record(p) << '\n';
    }
    if (!out.good()) fail_input("I/O failure writing " + path.string());
  }

  json m;
  m["format"] = kManifestFormat;
  m["dimensions"] = json::array();
  for (const auto& name : ds.dimensions.names) {
    m["dimensions"].push_back({{"name", name}, {"definition", ds.dimensions.definitions.at(name)}});
  }
  json per_dim = json::object();
  for (const auto& [dim, ids] : ds.partitions) per_dim[dim] = ids.size();
  m["counts"] = {{"total", ds.pairs.size()},
                 {"labeled", ds.labeled_count()},
                 {"unassigned", ds.unassigned.size()},
                 {"per_dimension", per_dim}};
  if (ds.has_split()) {
    std::vector<std::string> test_ids;
    for (const auto& [id, side] : ds.split) {
      if (side == Split::test) test_ids.push_back(id);
    }
    m["test_ids"] = test_ids;  // std::map order: already sorted
  } else {
    m["test_ids"] = nullptr;
  }
  m["digest_sha256"] = dataset_digest(ds);

  std::ofstream mout(manifest_path_for(path), std::ios::binary);
  if (!mout.good()) fail_input("cannot write manifest for " + path.string());
  mout << m.dump(2) << '\n';
  if (!mout.good()) fail_input("I/O failure writing manifest for " + path.string());
}

// --- partitioning ------------------------------------------------------------

PreferenceDataset split_train_test(const PreferenceDataset& ds, double test_fraction,
                                   std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw UsageError("test_fraction must be in (0, 1), got " + std::to_string(test_fraction));
  }
  std::map<std::string, Split> split;
  auto assign_stratum = [&](const std::string& stratum, const std::vector<std::string>& ids) {
    if (ids.empty()) return;
    std::vector<std::string> shuffled = ids;
    Rng rng(derive_seed(seed, "split:" + stratum));
    rng.shuffle(shuffled);
    const std::size_t n_test = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(test_fraction * double(ids.size()))));
    for (std::size_t i = 0; i < shuffled.size(); ++i) {
      split[shuffled[i]] = i < n_test ? Split::test : Split::train;
    }
  };
  for (const auto& [dim, ids] : ds.partitions) assign_stratum(dim, ids);
  assign_stratum("(unassigned)", ds.unassigned);
  return make_dataset(ds.dimensions, ds.pairs, std::move(split));
}

std::map<std::string, PreferenceDataset> partition_by_dimension(const PreferenceDataset& ds) {
  if (!ds.unassigned.empty()) {
    std::string ids;
    for (std::size_t i = 0; i < ds.unassigned.size() && i < 10; ++i) {
      if (i) ids += ", ";
      ids += ds.unassigned[i];
    }
    if (ds.unassigned.size() > 10) ids += ", ...";
    fail_input("dataset has " + std::to_string(ds.unassigned.size()) +
               " unlabeled pair(s): " + ids);
  }
  std::map<std::string, PreferenceDataset> out;
  for (const auto& [dim, ids] : ds.partitions) {
    std::vector<PreferencePair> pairs;
    std::map<std::string, Split> split;
    pairs.reserve(ids.size());
    for (const auto& id : ids) {
      pairs.push_back(ds.pair_by_id(id));
      if (ds.has_split()) split[id] = ds.split.at(id);
    }
    out.emplace(dim, make_dataset(ds.dimensions, std::move(pairs), std::move(split)));
  }
  return out;
}

// --- synthetic corpora --------------------------------------------------------

void SyntheticConfig::validate() const {
  if (n_dims < 2) fail_input("synthetic config: n_dims must be >= 2");
  if (pairs_per_dim.size() != static_cast<std::size_t>(n_dims)) {
    fail_input("synthetic config: pairs_per_dim must have n_dims entries");
  }
  for (int k : pairs_per_dim) {
    if (k < 1) fail_input("synthetic config: pairs_per_dim entries must be >= 1");
  }
  if (!(conflict >= 0.0 && conflict <= 1.0)) {
    fail_input("synthetic config: conflict must be in [0, 1]");
  }
  if (tokens_per_text < 4) fail_input("synthetic config: tokens_per_text must be >= 4");
  synthetic_vocab(*this);  // throws if vocab_size cannot fit the clusters
}

SyntheticVocab synthetic_vocab(const SyntheticConfig& config) {
  const int v = config.vocab_size;
  const int n = config.n_dims;
  const int prompt = v / 4;
  const int noise = v / 4;
  const int content = v - prompt - noise;
  const int cluster = content / (2 * n);
  if (cluster < 2) {
    fail_input("synthetic config: vocab_size " + std::to_string(v) + " too small for " +
               std::to_string(n) + " dimensions");
  }
  SyntheticVocab layout;
  layout.prompt_begin = 0;
  layout.prompt_end = prompt;
  layout.noise_begin = prompt;
  layout.noise_end = prompt + noise;
  int cursor = prompt + noise;
  for (int i = 0; i < n; ++i) {
    layout.preferred.emplace_back(cursor, cursor + cluster);
    cursor += cluster;
    layout.dispreferred.emplace_back(cursor, cursor + cluster);
    cursor += cluster;
  }
  return layout;
}

namespace {

constexpr double kSyntheticNoiseRate = 0.25;

std::string draw_text(Rng& rng, int length,
                      const std::function<int(Rng&)>& content_token,
                      const SyntheticVocab& vocab) {
  std::string out;
  for (int t = 0; t < length; ++t) {
    int tok;
    if (rng.uniform01() < kSyntheticNoiseRate) {
      tok = vocab.noise_begin +
            static_cast<int>(rng.below(std::uint64_t(vocab.noise_end - vocab.noise_begin)));
    } else {
      tok = content_token(rng);
    }
    if (t) out += ' ';
    out += 't' + std::to_string(tok);
  }
  return out;
}

int draw_from(Rng& rng, std::pair<int, int> range) {
  return range.first + static_cast<int>(rng.below(std::uint64_t(range.second - range.first)));
}

}  // namespace

PreferenceDataset generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  const auto vocab = synthetic_vocab(config);
  const int n = config.n_dims;

  DimensionSet dims;
  for (int i = 0; i < n; ++i) {
    const std::string name = "dim" + std::to_string(i + 1);
    dims.names.push_back(name);
    char def[160];
    std::snprintf(def, sizeof(def),
                  "synthetic dimension preferring tokens t%d..t%d over its rejected mix",
                  vocab.preferred[i].first, vocab.preferred[i].second - 1);
    dims.definitions[name] = def;
  }

  std::vector<PreferencePair> pairs;
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(config.seed, "synthetic", std::uint64_t(i)));
    const auto own_pos = vocab.preferred[i];
    const auto own_neg = vocab.dispreferred[i];
    const auto rival_pos = vocab.preferred[(i + 1) % n];
    for (int k = 0; k < config.pairs_per_dim[i]; ++k) {
      PreferencePair p;
      char id[64];
      std::snprintf(id, sizeof(id), "dim%d-%06d", i + 1, k);
      p.id = id;
      p.prompt = draw_text(
          rng, config.tokens_per_text,
          [&](Rng& r) { return draw_from(r, {vocab.prompt_begin, vocab.prompt_end}); }, vocab);
      p.chosen = draw_text(
          rng, config.tokens_per_text, [&](Rng& r) { return draw_from(r, own_pos); }, vocab);
      p.rejected = draw_text(
          rng, config.tokens_per_text,
          [&](Rng& r) {
            return r.uniform01() < config.conflict ? draw_from(r, rival_pos)
                                                   : draw_from(r, own_neg);
          },
          vocab);
      p.dimension = dims.names[i];
      p.source_score_gap = quantize_real6(rng.uniform01() * 8.0);
      pairs.push_back(std::move(p));
    }
  }
  return make_dataset(std::move(dims), std::move(pairs));
}

}  // namespace prefconflict::corpus
