#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "exdial/autodiff.hpp"
#include "exdial/common.hpp"
#include "exdial/corpus.hpp"
#include "exdial/metrics.hpp"
#include "exdial/text.hpp"
#include "exdial/training.hpp"

namespace exdial {

// ---------------------------------------------------------------------------
// TF-IDF vector space over the training split's user utterances.
// idf = ln((1+N)/(1+df)) + 1; BM25 idf kept alongside for the reranker.
// ---------------------------------------------------------------------------

struct IdfTable {
  std::vector<std::string> tokens;  // by dimension, sorted
  std::vector<std::int64_t> df;     // by dimension
  std::int64_t doc_count = 0;
  double avg_doc_len = 0.0;
  // derived
  std::unordered_map<std::string, int> dim_of;
  std::vector<double> idf, bm25_idf;

  void finalize() {
    dim_of.clear();
    idf.resize(tokens.size());
    bm25_idf.resize(tokens.size());
    double n = static_cast<double>(doc_count);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      dim_of[tokens[i]] = static_cast<int>(i);
      double d = static_cast<double>(df[i]);
      idf[i] = std::log((1.0 + n) / (1.0 + d)) + 1.0;
      bm25_idf[i] = std::log(1.0 + (n - d + 0.5) / (d + 0.5));
    }
  }

  static IdfTable build(const std::vector<std::vector<std::string>>& docs) {
    if (docs.empty()) throw DataError("idf: empty document set");
    std::unordered_map<std::string, std::int64_t> counts;
    std::int64_t total_len = 0;
    for (const auto& doc : docs) {
      total_len += static_cast<std::int64_t>(doc.size());
      std::unordered_set<std::string> uniq(doc.begin(), doc.end());
      for (const std::string& t : uniq) ++counts[t];
    }
    IdfTable tab;
    tab.doc_count = static_cast<std::int64_t>(docs.size());
    tab.avg_doc_len =
        static_cast<double>(total_len) / static_cast<double>(docs.size());
    tab.tokens.reserve(counts.size());
    for (const auto& [tok, c] : counts) tab.tokens.push_back(tok);
    std::sort(tab.tokens.begin(), tab.tokens.end());
    tab.df.reserve(tab.tokens.size());
    for (const std::string& t : tab.tokens) tab.df.push_back(counts[t]);
    tab.finalize();
    return tab;
  }
};

// L2-normalized sparse vector; indices strictly increasing.
struct SparseVector {
  std::vector<std::pair<int, double>> entries;
  double norm = 0.0;  // of the stored entries: 1.0, or 0.0 for empty

  bool zero() const { return entries.empty(); }
};

inline SparseVector vectorize(const std::vector<std::string>& tokens,
                              const IdfTable& idf) {
  std::unordered_map<int, double> tf;
  for (const std::string& t : tokens) {
    auto it = idf.dim_of.find(t);
    if (it != idf.dim_of.end()) tf[it->second] += 1.0;
  }
  SparseVector v;
  v.entries.reserve(tf.size());
  for (const auto& [dim, count] : tf)
    v.entries.emplace_back(dim, count * idf.idf[static_cast<std::size_t>(dim)]);
  std::sort(v.entries.begin(), v.entries.end());
  double sq = 0.0;
  for (const auto& [dim, w] : v.entries) sq += w * w;
  if (sq > 0.0) {
    double inv = 1.0 / std::sqrt(sq);
    for (auto& [dim, w] : v.entries) w *= inv;
    v.norm = 1.0;
  }
  return v;
}

inline double sparse_dot(const SparseVector& a, const SparseVector& b) {
  double dot = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.entries.size() && j < b.entries.size()) {
    if (a.entries[i].first < b.entries[j].first)
      ++i;
    else if (a.entries[i].first > b.entries[j].first)
      ++j;
    else {
      dot += a.entries[i].second * b.entries[j].second;
      ++i;
      ++j;
    }
  }
  return dot;
}

// Cosine distance of normalized vectors. Entry-identical vectors are exactly
// distance 0 so "query equals an indexed record" ranks with a clean zero.
inline double sparse_distance(const SparseVector& a, const SparseVector& b) {
  if (a.entries == b.entries) return a.zero() ? 1.0 : 0.0;
  return 1.0 - sparse_dot(a, b);
}

// ---------------------------------------------------------------------------
// Index
// ---------------------------------------------------------------------------

struct ExemplarRecord {
  int record_id = 0;
  std::vector<std::string> user_tokens;
  std::vector<std::string> response_tokens;
  std::string dialogue_id;
  int turn_index = 0;
};

struct Candidate {
  int record_id = 0;
  double distance = 0.0;
  double rerank_score = 0.0;
};

struct CandidateSet {
  std::vector<std::string> query_tokens;
  std::string query_dialogue_id;
  std::vector<Candidate> items;  // ascending by (distance, record_id)
};

enum class IndexMode { Exact, Approximate };

struct LshConfig {
  int tables = 16;
  int bits = 12;  // <= 32
  int probe_radius = 1;

  void validate() const {
    if (tables <= 0 || bits <= 0 || bits > 32)
      throw ConfigError("lsh needs 1..32 bits and at least one table");
    if (probe_radius < 0 || probe_radius > 1)
      throw ConfigError("lsh probe radius must be 0 or 1");
  }
};

inline constexpr char kIndexMagic[] = "EXDLIDX1";

class AnnIndex {
 public:
  static AnnIndex build(const std::vector<ContextTriple>& triples,
                        IndexMode mode, const LshConfig& lsh,
                        std::uint64_t seed) {
    if (triples.empty()) throw DataError("cannot build index from zero triples");
    lsh.validate();
    AnnIndex ix;
    ix.mode_ = mode;
    ix.lsh_ = lsh;
    ix.seed_ = seed;

    std::vector<std::vector<std::string>> docs;
    docs.reserve(triples.size());
    for (const ContextTriple& t : triples) docs.push_back(t.u.tokens);
    ix.idf_ = IdfTable::build(docs);

    ix.records_.reserve(triples.size());
    ix.vectors_.reserve(triples.size());
    for (std::size_t i = 0; i < triples.size(); ++i) {
      const ContextTriple& t = triples[i];
      ExemplarRecord r;
      r.record_id = static_cast<int>(i);
      r.user_tokens = t.u.tokens;
      r.response_tokens = t.s2.tokens;
      r.dialogue_id = t.dialogue_id;
      r.turn_index = t.turn_index;
      ix.records_.push_back(std::move(r));
      ix.vectors_.push_back(vectorize(t.u.tokens, ix.idf_));
    }

    if (mode == IndexMode::Approximate) {
      ix.regenerate_planes();
      ix.signatures_.resize(ix.records_.size());
      for (std::size_t i = 0; i < ix.records_.size(); ++i)
        ix.signatures_[i] = ix.signature(ix.vectors_[i]);
      ix.rebuild_buckets();
    }
    return ix;
  }

  const std::vector<ExemplarRecord>& records() const { return records_; }
  const IdfTable& idf() const { return idf_; }
  IndexMode mode() const { return mode_; }
  std::uint64_t seed() const { return seed_; }
  const LshConfig& lsh() const { return lsh_; }

  CandidateSet query(const std::vector<std::string>& query_tokens,
                     const std::string& exclude_dialogue_id, int k) const {
    if (k < 1) throw ConfigError("query_knn needs k >= 1");
    CandidateSet out;
    out.query_tokens = query_tokens;
    out.query_dialogue_id = exclude_dialogue_id;
    SparseVector q = vectorize(query_tokens, idf_);

    std::vector<int> pool;
    if (mode_ == IndexMode::Approximate) {
      pool = probe_candidates(q);
      if (pool.empty()) {  // degenerate probe; fall back to a full scan
        pool.resize(records_.size());
        for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<int>(i);
      }
    } else {
      pool.resize(records_.size());
      for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<int>(i);
    }

    std::vector<Candidate> cands;
    cands.reserve(pool.size());
    for (int id : pool) {
      const ExemplarRecord& r = records_[static_cast<std::size_t>(id)];
      if (r.dialogue_id == exclude_dialogue_id) continue;
      cands.push_back(Candidate{
          id, sparse_distance(q, vectors_[static_cast<std::size_t>(id)]), 0.0});
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      if (a.distance != b.distance) return a.distance < b.distance;
      return a.record_id < b.record_id;
    });
    if (static_cast<int>(cands.size()) > k) cands.resize(static_cast<std::size_t>(k));
    out.items = std::move(cands);
    return out;
  }

  // ---- persistence: versioned little-endian binary container -------------

  void save(const std::string& path) const {
    ByteWriter w;
    for (const char* p = kIndexMagic; *p; ++p)
      w.put_u8(static_cast<std::uint8_t>(*p));
    w.put_u32(1);  // version
    w.put_u8(mode_ == IndexMode::Approximate ? 1 : 0);
    w.put_i32(lsh_.tables);
    w.put_i32(lsh_.bits);
    w.put_i32(lsh_.probe_radius);
    w.put_u64(seed_);

    w.put_u32(static_cast<std::uint32_t>(idf_.tokens.size()));
    for (std::size_t i = 0; i < idf_.tokens.size(); ++i) {
      w.put_str(idf_.tokens[i]);
      w.put_u64(static_cast<std::uint64_t>(idf_.df[i]));
    }
    w.put_u64(static_cast<std::uint64_t>(idf_.doc_count));
    w.put_f64(idf_.avg_doc_len);

    w.put_u32(static_cast<std::uint32_t>(records_.size()));
    for (const ExemplarRecord& r : records_) {
      w.put_str(r.dialogue_id);
      w.put_i32(r.turn_index);
      w.put_str(detokenize(r.user_tokens));
      w.put_str(detokenize(r.response_tokens));
    }
    if (mode_ == IndexMode::Approximate)
      for (const auto& sig : signatures_)
        for (std::uint32_t s : sig) w.put_u32(s);
    write_file_atomic(path, w.str());
  }

  static AnnIndex load(const std::string& path) {
    ByteReader r(read_file(path));
    for (const char* p = kIndexMagic; *p; ++p)
      if (r.get_u8() != static_cast<std::uint8_t>(*p))
        throw DataError("not an index file: " + path);
    std::uint32_t version = r.get_u32();
    if (version != 1)
      throw DataError("unsupported index version " + std::to_string(version));

    AnnIndex ix;
    ix.mode_ = r.get_u8() ? IndexMode::Approximate : IndexMode::Exact;
    ix.lsh_.tables = r.get_i32();
    ix.lsh_.bits = r.get_i32();
    ix.lsh_.probe_radius = r.get_i32();
    ix.seed_ = r.get_u64();

    std::uint32_t dims = r.get_u32();
    ix.idf_.tokens.resize(dims);
    ix.idf_.df.resize(dims);
    for (std::uint32_t i = 0; i < dims; ++i) {
      ix.idf_.tokens[i] = r.get_str();
      ix.idf_.df[i] = static_cast<std::int64_t>(r.get_u64());
    }
    ix.idf_.doc_count = static_cast<std::int64_t>(r.get_u64());
    ix.idf_.avg_doc_len = r.get_f64();
    ix.idf_.finalize();

    std::uint32_t count = r.get_u32();
    ix.records_.resize(count);
    ix.vectors_.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
      ExemplarRecord& rec = ix.records_[i];
      rec.record_id = static_cast<int>(i);
      rec.dialogue_id = r.get_str();
      rec.turn_index = r.get_i32();
      rec.user_tokens = tokenize(r.get_str());
      rec.response_tokens = tokenize(r.get_str());
      ix.vectors_.push_back(vectorize(rec.user_tokens, ix.idf_));
    }
    if (ix.mode_ == IndexMode::Approximate) {
      ix.signatures_.resize(count);
      for (std::uint32_t i = 0; i < count; ++i) {
        ix.signatures_[i].resize(static_cast<std::size_t>(ix.lsh_.tables));
        for (int t = 0; t < ix.lsh_.tables; ++t)
          ix.signatures_[i][static_cast<std::size_t>(t)] = r.get_u32();
      }
      ix.regenerate_planes();
      ix.rebuild_buckets();
    }
    if (!r.at_end()) throw DataError("trailing bytes in index " + path);
    return ix;
  }

 private:
  // One gaussian hyperplane per (table, bit), regenerated from the seed in a
  // fixed order, so planes never need to be stored.
  void regenerate_planes() {
    int dims = static_cast<int>(idf_.tokens.size());
    planes_.assign(static_cast<std::size_t>(lsh_.tables * lsh_.bits),
                   std::vector<double>(static_cast<std::size_t>(dims)));
    Rng rng(derive_seed(seed_, 0x6c7368ULL));
    for (auto& plane : planes_)
      for (double& x : plane) x = gaussian(rng);
  }

  std::vector<std::uint32_t> signature(const SparseVector& v) const {
    std::vector<std::uint32_t> sig(static_cast<std::size_t>(lsh_.tables), 0);
    for (int t = 0; t < lsh_.tables; ++t) {
      std::uint32_t s = 0;
      for (int b = 0; b < lsh_.bits; ++b) {
        const std::vector<double>& plane =
            planes_[static_cast<std::size_t>(t * lsh_.bits + b)];
        double dot = 0.0;
        for (const auto& [dim, w] : v.entries)
          dot += w * plane[static_cast<std::size_t>(dim)];
        if (dot >= 0.0) s |= (1u << b);
      }
      sig[static_cast<std::size_t>(t)] = s;
    }
    return sig;
  }

  void rebuild_buckets() {
    buckets_.assign(static_cast<std::size_t>(lsh_.tables), {});
    for (std::size_t i = 0; i < signatures_.size(); ++i)
      for (int t = 0; t < lsh_.tables; ++t)
        buckets_[static_cast<std::size_t>(t)][signatures_[i][static_cast<std::size_t>(t)]]
            .push_back(static_cast<int>(i));
  }

  // Union of the query's bucket per table, plus every bucket at Hamming
  // distance 1 when probe_radius is 1.
  std::vector<int> probe_candidates(const SparseVector& q) const {
    std::vector<std::uint32_t> sig = signature(q);
    std::vector<char> seen(records_.size(), 0);
    std::vector<int> pool;
    auto visit = [&](int table, std::uint32_t key) {
      auto it = buckets_[static_cast<std::size_t>(table)].find(key);
      if (it == buckets_[static_cast<std::size_t>(table)].end()) return;
      for (int id : it->second)
        if (!seen[static_cast<std::size_t>(id)]) {
          seen[static_cast<std::size_t>(id)] = 1;
          pool.push_back(id);
        }
    };
    for (int t = 0; t < lsh_.tables; ++t) {
      visit(t, sig[static_cast<std::size_t>(t)]);
      if (lsh_.probe_radius >= 1)
        for (int b = 0; b < lsh_.bits; ++b)
          visit(t, sig[static_cast<std::size_t>(t)] ^ (1u << b));
    }
    return pool;
  }

  IndexMode mode_ = IndexMode::Approximate;
  LshConfig lsh_;
  std::uint64_t seed_ = 0;
  IdfTable idf_;
  std::vector<ExemplarRecord> records_;
  std::vector<SparseVector> vectors_;
  std::vector<std::vector<std::uint32_t>> signatures_;
  std::vector<std::vector<double>> planes_;
  std::vector<std::unordered_map<std::uint32_t, std::vector<int>>> buckets_;
};

// ---------------------------------------------------------------------------
// Reranker features: [tfidf_cosine, token_jaccard, bm25(query->candidate),
// length_ratio(min/max), avg_embedding_cosine], in this order.
// ---------------------------------------------------------------------------

inline constexpr int kFeatureCount = 5;
inline constexpr std::array<const char*, kFeatureCount> kFeatureNames = {
    "tfidf_cosine", "token_jaccard", "bm25", "length_ratio",
    "avg_embedding_cosine"};

struct RerankResources {
  const IdfTable* idf = nullptr;
  const EmbeddingTable* emb = nullptr;
  const Vocabulary* vocab = nullptr;
};

inline double bm25_score(const std::vector<std::string>& query,
                         const std::vector<std::string>& doc,
                         const IdfTable& idf, double k1 = 1.5,
                         double b = 0.75) {
  std::unordered_map<std::string, double> tf;
  for (const std::string& t : doc) tf[t] += 1.0;
  double dl = static_cast<double>(doc.size());
  double norm = k1 * (1.0 - b + b * dl / (idf.avg_doc_len > 0 ? idf.avg_doc_len : 1.0));
  std::unordered_set<std::string> uniq(query.begin(), query.end());
  double score = 0.0;
  for (const std::string& t : uniq) {
    auto dim = idf.dim_of.find(t);
    if (dim == idf.dim_of.end()) continue;
    auto f = tf.find(t);
    if (f == tf.end()) continue;
    score += idf.bm25_idf[static_cast<std::size_t>(dim->second)] * f->second *
             (k1 + 1.0) / (f->second + norm);
  }
  return score;
}

inline std::array<double, kFeatureCount> feature_vector(
    const std::vector<std::string>& query_tokens,
    const ExemplarRecord& candidate, const RerankResources& res) {
  std::array<double, kFeatureCount> f{};
  const std::vector<std::string>& cand = candidate.user_tokens;

  f[0] = 1.0 - sparse_distance(vectorize(query_tokens, *res.idf),
                               vectorize(cand, *res.idf));

  std::unordered_set<std::string> qs(query_tokens.begin(), query_tokens.end());
  std::unordered_set<std::string> cs(cand.begin(), cand.end());
  std::size_t inter = 0;
  for (const std::string& t : qs) inter += cs.count(t);
  std::size_t uni = qs.size() + cs.size() - inter;
  f[1] = uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);

  f[2] = bm25_score(query_tokens, cand, *res.idf);

  double lq = static_cast<double>(query_tokens.size());
  double lc = static_cast<double>(cand.size());
  f[3] = std::max(lq, lc) == 0.0 ? 1.0 : std::min(lq, lc) / std::max(lq, lc);

  if (query_tokens.empty() || cand.empty()) {
    f[4] = 0.0;
  } else {
    TokenVectors qv = collect_vectors(query_tokens, *res.emb, *res.vocab);
    TokenVectors cv = collect_vectors(cand, *res.emb, *res.vocab);
    f[4] = cosine(mean_vector(qv.all), mean_vector(cv.all));
  }
  return f;
}

// ---------------------------------------------------------------------------
// Reranker model: heuristic fixed weights on the raw features, or a 1-hidden-
// layer tanh MLP over standardized features.
// ---------------------------------------------------------------------------

struct RerankerModel {
  bool is_mlp = false;
  std::vector<double> weights{0.4, 0.2, 0.2, 0.1, 0.1};  // heuristic mode
  // MLP mode
  int hidden = 16;
  std::vector<double> feat_mean, feat_std;  // per-feature standardization
  std::vector<double> W1;                   // hidden x kFeatureCount, row-major
  std::vector<double> b1;                   // hidden
  std::vector<double> w2;                   // hidden
  double b2 = 0.0;

  double score(const std::array<double, kFeatureCount>& f) const {
    if (!is_mlp) {
      if (weights.size() != kFeatureCount)
        throw ConfigError("reranker weight count must match feature count");
      double s = 0.0;
      for (int i = 0; i < kFeatureCount; ++i)
        s += weights[static_cast<std::size_t>(i)] * f[static_cast<std::size_t>(i)];
      return s;
    }
    double out = b2;
    for (int h = 0; h < hidden; ++h) {
      double acc = b1[static_cast<std::size_t>(h)];
      for (int i = 0; i < kFeatureCount; ++i) {
        double z = (f[static_cast<std::size_t>(i)] - feat_mean[static_cast<std::size_t>(i)]) /
                   feat_std[static_cast<std::size_t>(i)];
        acc += W1[static_cast<std::size_t>(h * kFeatureCount + i)] * z;
      }
      out += w2[static_cast<std::size_t>(h)] * std::tanh(acc);
    }
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"type", is_mlp ? "mlp" : "heuristic"},
                     {"features", std::vector<std::string>(kFeatureNames.begin(),
                                                           kFeatureNames.end())}};
    if (is_mlp) {
      j["hidden"] = hidden;
      j["feat_mean"] = feat_mean;
      j["feat_std"] = feat_std;
      j["W1"] = W1;
      j["b1"] = b1;
      j["w2"] = w2;
      j["b2"] = b2;
    } else {
      j["weights"] = weights;
    }
    return j;
  }

  static RerankerModel from_json(const nlohmann::json& j) {
    RerankerModel m;
    std::string type = j.at("type").get<std::string>();
    if (type == "heuristic") {
      m.is_mlp = false;
      m.weights = j.at("weights").get<std::vector<double>>();
      if (m.weights.size() != kFeatureCount)
        throw DataError("reranker weight count mismatch");
    } else if (type == "mlp") {
      m.is_mlp = true;
      m.hidden = j.at("hidden").get<int>();
      m.feat_mean = j.at("feat_mean").get<std::vector<double>>();
      m.feat_std = j.at("feat_std").get<std::vector<double>>();
      m.W1 = j.at("W1").get<std::vector<double>>();
      m.b1 = j.at("b1").get<std::vector<double>>();
      m.w2 = j.at("w2").get<std::vector<double>>();
      m.b2 = j.at("b2").get<double>();
      if (m.feat_mean.size() != kFeatureCount || m.feat_std.size() != kFeatureCount ||
          m.W1.size() != static_cast<std::size_t>(m.hidden) * kFeatureCount ||
          m.b1.size() != static_cast<std::size_t>(m.hidden) ||
          m.w2.size() != static_cast<std::size_t>(m.hidden))
        throw DataError("reranker mlp shape mismatch");
    } else {
      throw DataError("unknown reranker type: " + type);
    }
    return m;
  }

  void save(const std::string& path) const {
    write_file_atomic(path, to_json().dump(2) + "\n");
  }

  static RerankerModel load(const std::string& path) {
    try {
      return from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError("parse error in " + path + ": " + e.what());
    }
  }
};

// Reorders candidates by descending model score; ties keep the original
// distance order. Pure permutation: nothing added or dropped.
inline CandidateSet rerank(const CandidateSet& candidates,
                           const RerankerModel& model, const AnnIndex& index,
                           const RerankResources& res) {
  CandidateSet out = candidates;
  for (Candidate& c : out.items) {
    const ExemplarRecord& rec = index.records()[static_cast<std::size_t>(c.record_id)];
    c.rerank_score = model.score(feature_vector(out.query_tokens, rec, res));
  }
  std::sort(out.items.begin(), out.items.end(),
            [](const Candidate& a, const Candidate& b) {
              if (a.rerank_score != b.rerank_score)
                return a.rerank_score > b.rerank_score;
              if (a.distance != b.distance) return a.distance < b.distance;
              return a.record_id < b.record_id;
            });
  return out;
}

// ---------------------------------------------------------------------------
// Weakly supervised reranker training. For each training query, among its
// k candidates the one whose response scores highest BLEU-2 against the
// query's gold response is the positive, the lowest the negative; the MLP
// learns a pairwise hinge margin between the two.
// ---------------------------------------------------------------------------

struct RerankerTrainConfig {
  int k = 10;
  int max_queries = 2000;   // queries sampled for weak labeling
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 0.001;
  int hidden = 16;
  int min_pairs = 10;
  double holdout_fraction = 0.2;
  std::uint64_t seed = 0;
};

struct RerankerTrainReport {
  int pair_count = 0;
  int held_out_pairs = 0;
  double held_out_accuracy = 0.0;  // score(pos) > score(neg)
  std::vector<double> epoch_losses;
};

inline double response_bleu2(const std::vector<std::string>& hyp,
                             const std::vector<std::string>& gold) {
  std::vector<EvalPair> one(1);
  one[0].ref = gold;
  one[0].hyp = hyp;
  return bleu(one, 2);
}

inline RerankerModel train_reranker(const std::vector<ContextTriple>& train_triples,
                                    const AnnIndex& index,
                                    const RerankResources& res,
                                    const RerankerTrainConfig& cfg,
                                    RerankerTrainReport* report = nullptr) {
  // Collect weakly labeled feature pairs.
  std::vector<std::size_t> order(train_triples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(cfg.seed, 0x7272ULL));
  shuffle_in_place(order, rng);
  if (static_cast<int>(order.size()) > cfg.max_queries)
    order.resize(static_cast<std::size_t>(cfg.max_queries));

  using Feat = std::array<double, kFeatureCount>;
  std::vector<std::pair<Feat, Feat>> pairs;  // (positive, negative)
  for (std::size_t qi : order) {
    const ContextTriple& t = train_triples[qi];
    CandidateSet cs = index.query(t.u.tokens, t.dialogue_id, cfg.k);
    if (cs.items.size() < 2) continue;
    int best = -1, worst = -1;
    double best_b = -1.0, worst_b = 2.0;
    for (std::size_t c = 0; c < cs.items.size(); ++c) {
      const ExemplarRecord& rec =
          index.records()[static_cast<std::size_t>(cs.items[c].record_id)];
      double b = response_bleu2(rec.response_tokens, t.s2.tokens);
      if (b > best_b) {
        best_b = b;
        best = static_cast<int>(c);
      }
      if (b < worst_b) {
        worst_b = b;
        worst = static_cast<int>(c);
      }
    }
    if (best == worst || best_b <= worst_b) continue;
    const ExemplarRecord& pos =
        index.records()[static_cast<std::size_t>(cs.items[static_cast<std::size_t>(best)].record_id)];
    const ExemplarRecord& neg =
        index.records()[static_cast<std::size_t>(cs.items[static_cast<std::size_t>(worst)].record_id)];
    pairs.emplace_back(feature_vector(t.u.tokens, pos, res),
                       feature_vector(t.u.tokens, neg, res));
  }
  if (static_cast<int>(pairs.size()) < cfg.min_pairs)
    throw DataError("reranker training found only " +
                    std::to_string(pairs.size()) + " labeled pairs (need " +
                    std::to_string(cfg.min_pairs) + ")");

  shuffle_in_place(pairs, rng);
  std::size_t held = static_cast<std::size_t>(
      cfg.holdout_fraction * static_cast<double>(pairs.size()));
  std::vector<std::pair<Feat, Feat>> dev(pairs.end() - static_cast<std::ptrdiff_t>(held),
                                         pairs.end());
  pairs.resize(pairs.size() - held);
  if (pairs.empty()) throw DataError("reranker training set empty after holdout");

  // Standardization over the training pair features.
  RerankerModel model;
  model.is_mlp = true;
  model.hidden = cfg.hidden;
  model.feat_mean.assign(kFeatureCount, 0.0);
  model.feat_std.assign(kFeatureCount, 0.0);
  double n = static_cast<double>(pairs.size() * 2);
  for (const auto& [p, q] : pairs)
    for (int i = 0; i < kFeatureCount; ++i)
      model.feat_mean[static_cast<std::size_t>(i)] +=
          p[static_cast<std::size_t>(i)] + q[static_cast<std::size_t>(i)];
  for (double& m : model.feat_mean) m /= n;
  for (const auto& [p, q] : pairs)
    for (int i = 0; i < kFeatureCount; ++i) {
      double dp = p[static_cast<std::size_t>(i)] - model.feat_mean[static_cast<std::size_t>(i)];
      double dq = q[static_cast<std::size_t>(i)] - model.feat_mean[static_cast<std::size_t>(i)];
      model.feat_std[static_cast<std::size_t>(i)] += dp * dp + dq * dq;
    }
  for (double& s : model.feat_std) {
    s = std::sqrt(s / n);
    if (s < 1e-12) s = 1.0;
  }

  auto standardize = [&](const Feat& f) {
    std::vector<double> z(kFeatureCount);
    for (int i = 0; i < kFeatureCount; ++i)
      z[static_cast<std::size_t>(i)] =
          (f[static_cast<std::size_t>(i)] - model.feat_mean[static_cast<std::size_t>(i)]) /
          model.feat_std[static_cast<std::size_t>(i)];
    return z;
  };

  // MLP parameters as autodiff tensors.
  Rng init_rng(derive_seed(cfg.seed, 0x6d6c70ULL));
  Tensor W1 = make_tensor({cfg.hidden, kFeatureCount}, true);
  fill_uniform(W1, init_rng, -0.3, 0.3);
  Tensor b1 = make_tensor({cfg.hidden}, true);
  Tensor w2 = make_tensor({1, cfg.hidden}, true);
  fill_uniform(w2, init_rng, -0.3, 0.3);
  Tensor b2 = make_tensor({1}, true);
  std::vector<Tensor> tensors{W1, b1, w2, b2};

  auto mlp_score = [&](Tape& tape, const std::vector<double>& z) {
    Tensor x = make_vector(z);
    Tensor h = tape.tanh(tape.add(tape.matmul(W1, x), b1));
    return tape.add(tape.matmul(w2, h), b2);  // shape {1}
  };

  TrainConfig opt;
  opt.learning_rate = cfg.learning_rate;
  AdamState state = AdamState::init(tensors);
  Tensor one = make_vector({1.0});

  RerankerTrainReport rep;
  rep.pair_count = static_cast<int>(pairs.size());
  rep.held_out_pairs = static_cast<int>(dev.size());

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng erng(derive_seed(cfg.seed, 0x65706f63ULL, static_cast<std::uint64_t>(epoch)));
    shuffle_in_place(pairs, erng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < pairs.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t end = std::min(pairs.size(),
                                 start + static_cast<std::size_t>(cfg.batch_size));
      Tape tape;
      for (const Tensor& t : tensors) zero_grad(t);
      std::vector<Tensor> losses;
      for (std::size_t i = start; i < end; ++i) {
        Tensor sp = mlp_score(tape, standardize(pairs[i].first));
        Tensor sn = mlp_score(tape, standardize(pairs[i].second));
        // hinge: max(0, 1 - (sp - sn))
        losses.push_back(tape.relu(tape.sub(one, tape.sub(sp, sn))));
      }
      Tensor batch = tape.mean_of(losses);
      tape.backward(batch);
      adam_step(tensors, state, opt);
      loss_sum += batch->value[0] * static_cast<double>(end - start);
    }
    rep.epoch_losses.push_back(loss_sum / static_cast<double>(pairs.size()));
  }

  model.W1 = W1->value;
  model.b1 = b1->value;
  model.w2 = w2->value;
  model.b2 = b2->value[0];

  if (!dev.empty()) {
    int correct = 0;
    for (const auto& [p, q] : dev)
      if (model.score(p) > model.score(q)) ++correct;
    rep.held_out_accuracy = static_cast<double>(correct) / static_cast<double>(dev.size());
  }
  if (report) *report = rep;
  return model;
}

// ---------------------------------------------------------------------------
// Top-level retrieval: query k=10, rerank, take the winner.
// ---------------------------------------------------------------------------

struct ExemplarChoice {
  ExemplarRecord record;
  double distance = 0.0;
  double rerank_score = 0.0;
};

inline ExemplarChoice exemplar_for(const std::vector<std::string>& user_tokens,
                                   const std::string& query_dialogue_id,
                                   const AnnIndex& index,
                                   const RerankerModel& model,
                                   const RerankResources& res, int k = 10) {
  CandidateSet cs = index.query(user_tokens, query_dialogue_id, k);
  if (cs.items.empty())
    throw DataError("retrieval found no candidates (index empty?)");
  CandidateSet ranked = rerank(cs, model, index, res);
  const Candidate& top = ranked.items.front();
  ExemplarChoice out;
  out.record = index.records()[static_cast<std::size_t>(top.record_id)];
  out.distance = top.distance;
  out.rerank_score = top.rerank_score;
  return out;
}

}  // namespace exdial
