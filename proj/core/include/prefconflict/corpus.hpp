#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace prefconflict::corpus {

// One (prompt, chosen, rejected) record. `dimension` is the alignment
// dimension label, absent until the construction pipeline assigns one.
// `gaps` holds per-dimension annotator reward gaps, chosen minus rejected.
// `source_score_gap` is the summed score gap inherited from the source corpus.
struct PreferencePair {
  std::string id;
  std::string prompt;
  std::string chosen;
  std::string rejected;
  std::optional<std::string> dimension;
  std::map<std::string, double> gaps;  // empty map == absent
  std::optional<double> source_score_gap;
};

struct DimensionSet {
  std::vector<std::string> names;  // ordered
  std::map<std::string, std::string> definitions;

  std::size_t size() const { return names.size(); }
  bool contains(const std::string& name) const { return definitions.count(name) != 0; }

  // n >= 2, names distinct, every name defined. Throws InputError.
  void validate() const;
};

enum class Split { train, test };

// Immutable after construction/validation; concurrent reads are safe.
// Mutation happens only by building new datasets.
struct PreferenceDataset {
  DimensionSet dimensions;
  std::vector<PreferencePair> pairs;
  // dimension name -> pair ids, disjoint, covering exactly the labeled pairs.
  std::map<std::string, std::vector<std::string>> partitions;
  std::vector<std::string> unassigned;       // ids of unlabeled pairs
  std::map<std::string, Split> split;        // pair id -> train/test; may be empty

  const PreferencePair& pair_by_id(const std::string& id) const;
  std::size_t labeled_count() const;
  bool has_split() const { return !split.empty(); }

  // Ids of a partition restricted to one side of the split. With no split
  // assigned, the train side is the whole partition and the test side empty.
  std::vector<std::string> partition_ids(const std::string& dim, Split side) const;

 private:
  std::map<std::string, std::size_t> index_;  // id -> position, built by make_dataset

  friend PreferenceDataset make_dataset(DimensionSet, std::vector<PreferencePair>,
                                        std::map<std::string, Split>);
};

// Validates invariants and rebuilds partitions/unassigned from the pairs'
// dimension labels. Every loaded or constructed dataset passes through here.
PreferenceDataset make_dataset(DimensionSet dims, std::vector<PreferencePair> pairs,
                               std::map<std::string, Split> split = {});

// --- persistence -----------------------------------------------------------
//
// Dataset files are line-delimited JSON records with exactly the fields
//   id, prompt, chosen, rejected, dimension, gaps, source_score_gap
// (optional fields omitted when absent). Reals are decimal text with 6
// significant digits; values are quantized to that precision on load so that
// load(save(d)) == d field for field.
//
// A manifest `<stem>.manifest.json` sits next to the dataset recording the
// dimension definitions, counts, the split's test ids, and a SHA-256 digest
// over the canonicalized records.

std::string canonical_record(const PreferencePair& pair);
std::string dataset_digest(const PreferenceDataset& ds);

PreferenceDataset load_dataset(const std::filesystem::path& path);
void save_dataset(const PreferenceDataset& ds, const std::filesystem::path& path);

std::filesystem::path manifest_path_for(const std::filesystem::path& dataset_path);

// --- partitioning ----------------------------------------------------------

// Per-partition stratified split, deterministic per seed. Every nonempty
// partition (and the unassigned pool) keeps at least one test pair.
PreferenceDataset split_train_test(const PreferenceDataset& ds, double test_fraction,
                                   std::uint64_t seed);

// One sub-dataset per dimension; sizes match the partition sizes. Errors on
// any unlabeled pair, listing the offending ids.
std::map<std::string, PreferenceDataset> partition_by_dimension(const PreferenceDataset& ds);

// --- synthetic corpora -----------------------------------------------------

// Texts are space-separated integer-named tokens ("t42"), so synthetic data
// exercises the same featurizer path as real data. Each dimension i prefers
// its own signature token cluster; the conflict knob controls how much of
// dimension i's rejected text is drawn from dimension (i+1 mod n)'s preferred
// cluster. At conflict=0 all clusters are disjoint; at conflict=1 each
// dimension's preferred tokens are exactly the previous dimension's
// dispreferred tokens.
struct SyntheticConfig {
  int n_dims = 2;
  std::vector<int> pairs_per_dim;  // size n_dims, all >= 1
  double conflict = 0.0;           // in [0, 1]
  int vocab_size = 512;
  int tokens_per_text = 24;
  std::uint64_t seed = 0;

  void validate() const;
};

PreferenceDataset generate_synthetic(const SyntheticConfig& config);

// Token cluster layout used by generate_synthetic; exposed so fixtures (e.g.
// the synthetic jailbreak generator) can sample from the same vocabulary.
struct SyntheticVocab {
  int prompt_begin, prompt_end;            // prompt tokens
  int noise_begin, noise_end;              // shared background noise
  std::vector<std::pair<int, int>> preferred;     // per-dim signature cluster
  std::vector<std::pair<int, int>> dispreferred;  // per-dim own negative cluster
};

SyntheticVocab synthetic_vocab(const SyntheticConfig& config);

}  // namespace prefconflict::corpus
