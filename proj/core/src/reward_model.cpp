#include "prefconflict/reward_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "prefconflict/error.hpp"
#include "prefconflict/rng.hpp"
#include "prefconflict/sha256.hpp"
#include "prefconflict/text.hpp"

namespace prefconflict::reward {

namespace {

constexpr std::uint64_t kPromptNs = fnv1a64("prompt-namespace");
constexpr std::uint64_t kResponseNs = fnv1a64("response-namespace");

std::uint32_t bucket(const Featurizer& f, std::string_view token, std::uint64_t ns) {
  const std::uint64_t h = splitmix64(fnv1a64(token) ^ f.hash_seed ^ ns);
  const std::uint32_t half = static_cast<std::uint32_t>(f.feature_dim) / 2;
  const std::uint32_t idx = static_cast<std::uint32_t>(h) & (half - 1);
  return ns == kResponseNs ? half + idx : idx;
}

void accumulate(std::vector<std::uint32_t>& raw, const Featurizer& f, std::string_view text,
                std::uint64_t ns) {
  for (auto token : tokenize(text)) raw.push_back(bucket(f, token, ns));
}

SparseVec counts_from(std::vector<std::uint32_t>& raw) {
  std::sort(raw.begin(), raw.end());
  SparseVec out;
  for (std::size_t i = 0; i < raw.size();) {
    std::size_t j = i;
    while (j < raw.size() && raw[j] == raw[i]) ++j;
    out.emplace_back(raw[i], static_cast<double>(j - i));
    i = j;
  }
  return out;
}

// a - b over sorted sparse vectors, dropping exact zeros.
SparseVec sparse_sub(const SparseVec& a, const SparseVec& b) {
  SparseVec out;
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    if (j == b.size() || (i < a.size() && a[i].first < b[j].first)) {
      out.push_back(a[i++]);
    } else if (i == a.size() || b[j].first < a[i].first) {
      out.emplace_back(b[j].first, -b[j].second);
      ++j;
    } else {
      const double v = a[i].second - b[j].second;
      if (v != 0.0) out.emplace_back(a[i].first, v);
      ++i, ++j;
    }
  }
  return out;
}

double sparse_dot(const std::vector<double>& w, const SparseVec& v) {
  double acc = 0.0;
  for (const auto& [idx, x] : v) acc += w[idx] * x;
  return acc;
}

}  // namespace

void Featurizer::validate() const {
  if (feature_dim < 2 || (feature_dim & (feature_dim - 1)) != 0) {
    throw UsageError("feature_dim must be a power of two >= 2, got " +
                     std::to_string(feature_dim));
  }
}

SparseVec featurize(const Featurizer& f, std::string_view prompt, std::string_view response) {
  f.validate();
  std::vector<std::uint32_t> raw;
  accumulate(raw, f, prompt, kPromptNs);
  accumulate(raw, f, response, kResponseNs);
  return counts_from(raw);
}

SparseVec diff_features(const Featurizer& f, const corpus::PreferencePair& pair) {
  f.validate();
  std::vector<std::uint32_t> c, r;
  accumulate(c, f, pair.chosen, kResponseNs);
  accumulate(r, f, pair.rejected, kResponseNs);
  return sparse_sub(counts_from(c), counts_from(r));
}

RewardModel make_model(Featurizer f) {
  f.validate();
  RewardModel m;
  m.featurizer = f;
  m.weights.assign(static_cast<std::size_t>(f.feature_dim), 0.0);
  return m;
}

double score(const RewardModel& m, std::string_view prompt, std::string_view response) {
  return sparse_dot(m.weights, featurize(m.featurizer, prompt, response)) + m.bias;
}

double pair_delta(const RewardModel& m, const corpus::PreferencePair& pair) {
  return sparse_dot(m.weights, diff_features(m.featurizer, pair));
}

double bt_loss(double delta) {
  // -log sigmoid(delta), branch keeps the exp argument non-positive.
  return delta >= 0.0 ? std::log1p(std::exp(-delta)) : -delta + std::log1p(std::exp(delta));
}

double bt_grad(double delta) {
  // sigmoid(delta) - 1 == -sigmoid(-delta), same stabilization.
  return delta >= 0.0 ? -std::exp(-delta) / (1.0 + std::exp(-delta))
                      : -1.0 / (1.0 + std::exp(delta));
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw UsageError("learning_rate must be > 0");
  if (steps < 0) throw UsageError("steps must be >= 0");
  if (batch_size < 1) throw UsageError("batch_size must be >= 1");
  if (!(l2 >= 0.0)) throw UsageError("l2 must be >= 0");
  if (eval_every < 1) throw UsageError("eval_every must be >= 1");
}

RewardModel train(const RewardModel& model, const BatchStream& stream, const TrainConfig& config) {
  config.validate();
  RewardModel m = model;
  const std::size_t dim = m.weights.size();

  // Per-pair feature diffs are cached across steps (multi-epoch replay visits
  // the same pairs thousands of times). Keys are dataset pointers, which are
  // stable for the duration of the call per the BatchStream contract.
  std::unordered_map<const corpus::PreferencePair*, SparseVec> diff_cache;
  std::vector<double> grad(dim, 0.0);
  std::vector<std::uint32_t> touched;

  for (int step = 0; step < config.steps; ++step) {
    const Batch batch = stream(step, m);
    if (batch.empty()) {
      throw InputError("step " + std::to_string(step) + ": empty batch");
    }
    double loss_sum = 0.0;
    touched.clear();
    for (const corpus::PreferencePair* pair : batch) {
      auto it = diff_cache.find(pair);
      if (it == diff_cache.end()) {
        it = diff_cache.emplace(pair, diff_features(m.featurizer, *pair)).first;
      }
      const SparseVec& diff = it->second;
      const double delta = sparse_dot(m.weights, diff);
      loss_sum += bt_loss(delta);
      const double g = bt_grad(delta);
      for (const auto& [idx, v] : diff) {
        grad[idx] += g * v;
        touched.push_back(idx);
      }
    }
    const double mean_loss = loss_sum / static_cast<double>(batch.size());
    if (!std::isfinite(mean_loss)) {
      throw NumericalError("step " + std::to_string(step) + ": non-finite training loss");
    }
    if (config.l2 > 0.0) {
      const double shrink = 1.0 - config.learning_rate * config.l2;
      for (double& w : m.weights) w *= shrink;
    }
    const double scale = config.learning_rate / static_cast<double>(batch.size());
    std::sort(touched.begin(), touched.end());
    touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
    for (std::uint32_t idx : touched) {
      m.weights[idx] -= scale * grad[idx];
      grad[idx] = 0.0;
    }
  }
  return m;
}

double dataset_loss(const RewardModel& m, const PairRefs& pairs, double l2) {
  if (pairs.empty()) throw InputError("dataset_loss: empty pair set");
  double sum = 0.0;
  for (const corpus::PreferencePair* p : pairs) sum += bt_loss(pair_delta(m, *p));
  double reg = 0.0;
  if (l2 > 0.0) {
    for (double w : m.weights) reg += w * w;
    reg *= 0.5 * l2;
  }
  return sum / static_cast<double>(pairs.size()) + reg;
}

std::vector<double> dataset_gradient(const RewardModel& m, const PairRefs& pairs, double l2) {
  if (pairs.empty()) throw InputError("dataset_gradient: empty pair set");
  std::vector<double> grad(m.weights.size(), 0.0);
  const double scale = 1.0 / static_cast<double>(pairs.size());
  for (const corpus::PreferencePair* p : pairs) {
    const SparseVec diff = diff_features(m.featurizer, *p);
    const double g = bt_grad(sparse_dot(m.weights, diff)) * scale;
    for (const auto& [idx, v] : diff) grad[idx] += g * v;
  }
  if (l2 > 0.0) {
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += l2 * m.weights[i];
  }
  return grad;
}

EvalVector evaluate(const RewardModel& m, const std::map<std::string, PairRefs>& partitions,
                    const EvalPlan& plan) {
  if (plan.cap_per_dim < 1) throw UsageError("eval cap must be >= 1");
  EvalVector out;
  for (const auto& [dim, pairs] : partitions) {
    if (pairs.empty()) throw InputError("evaluate: empty partition \"" + dim + "\"");
    PairRefs sample;
    if (pairs.size() > static_cast<std::size_t>(plan.cap_per_dim)) {
      std::vector<std::size_t> order(pairs.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      Rng rng(derive_seed(plan.seed, "eval:" + dim));
      rng.shuffle(order);
      sample.reserve(static_cast<std::size_t>(plan.cap_per_dim));
      for (int i = 0; i < plan.cap_per_dim; ++i) sample.push_back(pairs[order[i]]);
    } else {
      sample = pairs;
    }
    int correct = 0;
    for (const corpus::PreferencePair* p : sample) {
      if (pair_delta(m, *p) > 0.0) ++correct;  // strict: ties are incorrect
    }
    out.accuracy[dim] = static_cast<double>(correct) / static_cast<double>(sample.size());
    out.counts[dim] = static_cast<int>(sample.size());
  }
  return out;
}

// --- checkpoints --------------------------------------------------------------

namespace {

constexpr const char* kCheckpointMagic = "prefconflict-checkpoint v1";

std::string hexfloat(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

[[noreturn]] void fail_at(const std::string& where, const std::string& msg) {
  throw InputError(where + ": " + msg);
}

}  // namespace

void save_checkpoint(const RewardModel& m, const std::filesystem::path& path) {
  std::ostringstream body;
  body << kCheckpointMagic << '\n';
  body << "feature_dim " << m.featurizer.feature_dim << '\n';
  body << "hash_seed " << m.featurizer.hash_seed << '\n';
  body << "bias " << hexfloat(m.bias) << '\n';
  std::size_t nnz = 0;
  for (double w : m.weights) nnz += w != 0.0;
  body << "nnz " << nnz << '\n';
  for (std::size_t i = 0; i < m.weights.size(); ++i) {
    if (m.weights[i] != 0.0) body << i << ' ' << hexfloat(m.weights[i]) << '\n';
  }
  const std::string payload = body.str();
  std::ofstream out(path, std::ios::binary);
  if (!out.good()) throw InputError("cannot write checkpoint " + path.string());
  out << payload << "digest " << sha256_hex(payload) << '\n';
  if (!out.good()) throw InputError("I/O failure writing checkpoint " + path.string());
}

RewardModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw InputError("cannot open checkpoint " + path.string());

  const std::string where = path.filename().string();
  auto fail = [&](const std::string& msg) { fail_at(where, msg); };

  std::string payload;
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic) {
    fail("not a recognized checkpoint (bad or missing version line)");
  }
  payload += line + '\n';

  auto read_kv = [&](const std::string& key) -> std::string {
    if (!std::getline(in, line)) fail("truncated header (missing " + key + ")");
    payload += line + '\n';
    const auto sep = line.find(' ');
    if (sep == std::string::npos || line.substr(0, sep) != key) {
      fail("malformed header line, expected \"" + key + " ...\"");
    }
    return line.substr(sep + 1);
  };

  Featurizer f;
  try {
    f.feature_dim = std::stoi(read_kv("feature_dim"));
    f.hash_seed = std::stoull(read_kv("hash_seed"));
  } catch (const std::exception&) {
    fail("non-numeric header field");
  }
  try {
    f.validate();
  } catch (const Error& e) {
    fail(std::string("invalid featurizer: ") + e.what());
  }
  RewardModel m = make_model(f);

  const std::string bias_text = read_kv("bias");
  char* end = nullptr;
  m.bias = std::strtod(bias_text.c_str(), &end);
  if (end == bias_text.c_str() || !std::isfinite(m.bias)) fail("malformed bias");

  std::size_t nnz = 0;
  try {
    nnz = std::stoull(read_kv("nnz"));
  } catch (const std::exception&) {
    fail("malformed nnz");
  }

  long long prev = -1;
  for (std::size_t k = 0; k < nnz; ++k) {
    if (!std::getline(in, line)) fail("truncated weights (expected " + std::to_string(nnz) + ")");
    payload += line + '\n';
    std::size_t idx = 0;
    double value = 0.0;
    const auto sep = line.find(' ');
    if (sep == std::string::npos) fail("malformed weight line \"" + line + "\"");
    try {
      idx = std::stoull(line.substr(0, sep));
    } catch (const std::exception&) {
      fail("malformed weight index in \"" + line + "\"");
    }
    const std::string vtext = line.substr(sep + 1);
    end = nullptr;
    value = std::strtod(vtext.c_str(), &end);
    if (end == vtext.c_str() || !std::isfinite(value)) {
      fail("malformed weight value in \"" + line + "\"");
    }
    if (static_cast<long long>(idx) <= prev) fail("weight indices not strictly increasing");
    if (idx >= m.weights.size()) {
      fail("weight index " + std::to_string(idx) + " out of range for feature_dim " +
           std::to_string(f.feature_dim));
    }
    prev = static_cast<long long>(idx);
    m.weights[idx] = value;
  }

  if (!std::getline(in, line)) fail("missing digest line");
  if (line.rfind("digest ", 0) != 0) fail("malformed digest line");
  if (line.substr(7) != sha256_hex(payload)) fail("digest mismatch (corrupt checkpoint)");
  return m;
}

RewardModel load_checkpoint(const std::filesystem::path& path, const Featurizer& expected) {
  RewardModel m = load_checkpoint(path);
  if (!(m.featurizer == expected)) {
    throw InputError(path.filename().string() + ": featurizer mismatch (checkpoint " +
                     std::to_string(m.featurizer.feature_dim) + "/" +
                     std::to_string(m.featurizer.hash_seed) + ", expected " +
                     std::to_string(expected.feature_dim) + "/" +
                     std::to_string(expected.hash_seed) + ")");
  }
  return m;
}

}  // namespace prefconflict::reward
