#pragma once

#include <cmath>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "exdial/common.hpp"
#include "exdial/corpus.hpp"
#include "exdial/text.hpp"

namespace exdial {

struct EvalPair {
  std::vector<std::string> ref, hyp;
  std::string dialogue_id;
  int turn_index = 0;
};

// ---------------------------------------------------------------------------
// Corpus BLEU. Modified n-gram precision with clipping against the single
// reference, geometric mean over n=1..4, brevity penalty exp(1-r/c) for
// c < r. Smoothing: add-one on numerator and denominator for n >= 2, so
// short responses with no higher-order matches keep a nonzero score;
// unigram precision is unsmoothed.
// ---------------------------------------------------------------------------

inline std::map<std::vector<std::string>, int> ngram_counts(
    const std::vector<std::string>& toks, int n) {
  std::map<std::vector<std::string>, int> counts;
  if (static_cast<int>(toks.size()) < n) return counts;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= toks.size(); ++i)
    ++counts[std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                      toks.begin() + static_cast<std::ptrdiff_t>(i) + n)];
  return counts;
}

inline double bleu(const std::vector<EvalPair>& pairs, int max_n = 4) {
  if (pairs.empty()) throw DataError("bleu: no evaluation pairs");
  std::vector<long long> match(static_cast<std::size_t>(max_n), 0);
  std::vector<long long> total(static_cast<std::size_t>(max_n), 0);
  long long ref_len = 0, hyp_len = 0;
  for (const EvalPair& p : pairs) {
    if (p.ref.empty()) throw DataError("bleu: empty reference");
    ref_len += static_cast<long long>(p.ref.size());
    hyp_len += static_cast<long long>(p.hyp.size());
    for (int n = 1; n <= max_n; ++n) {
      auto hc = ngram_counts(p.hyp, n);
      if (hc.empty()) continue;
      auto rc = ngram_counts(p.ref, n);
      for (const auto& [gram, count] : hc) {
        total[static_cast<std::size_t>(n - 1)] += count;
        auto it = rc.find(gram);
        if (it != rc.end())
          match[static_cast<std::size_t>(n - 1)] += std::min(count, it->second);
      }
    }
  }
  if (hyp_len == 0) return 0.0;

  double log_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    double num = static_cast<double>(match[static_cast<std::size_t>(n - 1)]);
    double den = static_cast<double>(total[static_cast<std::size_t>(n - 1)]);
    if (n >= 2) {
      num += 1.0;
      den += 1.0;
    }
    if (num == 0.0 || den == 0.0) return 0.0;  // unigram precision zero
    log_sum += std::log(num / den);
  }
  double bp = hyp_len < ref_len
                  ? std::exp(1.0 - static_cast<double>(ref_len) /
                                       static_cast<double>(hyp_len))
                  : 1.0;
  return bp * std::exp(log_sum / static_cast<double>(max_n));
}

// ---------------------------------------------------------------------------
// Embedding-based similarities. Tokens map to vectors through the vocabulary
// and the loaded table; a token missing from the table carries the table's
// mean vector and counts as unmatched. The average-embedding metric uses all
// tokens (unmatched ones contribute the mean vector); extrema and greedy
// matching use matched tokens only. A pair where either side has no matched
// token is skipped and counted.
// ---------------------------------------------------------------------------

// Bitwise-identical inputs short-circuit to exactly 1.0, so identical
// sentences score 1.0 with no rounding residue.
inline double cosine(const std::vector<double>& a,
                     const std::vector<double>& b) {
  if (a == b) return 1.0;
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

struct TokenVectors {
  std::vector<std::vector<double>> all;      // every token, OOV -> mean vector
  std::vector<std::vector<double>> matched;  // in-table tokens only
};

inline TokenVectors collect_vectors(const std::vector<std::string>& tokens,
                                    const EmbeddingTable& emb,
                                    const Vocabulary& vocab) {
  TokenVectors tv;
  for (const std::string& tok : tokens) {
    int id = vocab.id_of(tok);
    tv.all.push_back(emb.vector_of(id));
    if (emb.matched(id)) tv.matched.push_back(emb.vector_of(id));
  }
  return tv;
}

inline std::vector<double> mean_vector(
    const std::vector<std::vector<double>>& vs) {
  std::vector<double> m(vs[0].size(), 0.0);
  for (const auto& v : vs)
    for (std::size_t i = 0; i < m.size(); ++i) m[i] += v[i];
  for (double& x : m) x /= static_cast<double>(vs.size());
  return m;
}

struct PairSimilarities {
  double avg_embedding = 0.0;
  double extrema = 0.0;
  double greedy = 0.0;
  bool skipped = false;
};

inline std::vector<double> extrema_vector(
    const std::vector<std::vector<double>>& vs) {
  std::vector<double> e(vs[0].size(), 0.0);
  for (const auto& v : vs)
    for (std::size_t i = 0; i < e.size(); ++i)
      if (std::fabs(v[i]) > std::fabs(e[i])) e[i] = v[i];
  return e;
}

// g(s, s_hat): mean over tokens of s of the best cosine against tokens of
// s_hat; the metric symmetrizes the two directions.
inline double greedy_direction(const std::vector<std::vector<double>>& from,
                               const std::vector<std::vector<double>>& to) {
  double acc = 0.0;
  for (const auto& v : from) {
    double best = -1.0;
    for (const auto& w : to) best = std::max(best, cosine(v, w));
    acc += best;
  }
  return acc / static_cast<double>(from.size());
}

inline PairSimilarities pair_similarities(const EvalPair& p,
                                          const EmbeddingTable& emb,
                                          const Vocabulary& vocab) {
  if (p.ref.empty()) throw DataError("similarity: empty reference");
  PairSimilarities out;
  TokenVectors r = collect_vectors(p.ref, emb, vocab);
  TokenVectors h = collect_vectors(p.hyp, emb, vocab);
  if (r.matched.empty() || h.matched.empty() || h.all.empty()) {
    out.skipped = true;
    return out;
  }
  out.avg_embedding = cosine(mean_vector(r.all), mean_vector(h.all));
  out.extrema = cosine(extrema_vector(r.matched), extrema_vector(h.matched));
  out.greedy = 0.5 * (greedy_direction(r.matched, h.matched) +
                      greedy_direction(h.matched, r.matched));
  return out;
}

// ---------------------------------------------------------------------------
// Inform / Request
// ---------------------------------------------------------------------------

inline bool contains_subsequence(const std::vector<std::string>& hay,
                                 const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() > hay.size()) return false;
  for (std::size_t i = 0; i + needle.size() <= hay.size(); ++i) {
    bool ok = true;
    for (std::size_t j = 0; j < needle.size(); ++j)
      if (hay[i + j] != needle[j]) {
        ok = false;
        break;
      }
    if (ok) return true;
  }
  return false;
}

inline bool any_response_mentions(
    const std::vector<std::vector<std::string>>& responses,
    const std::vector<std::string>& phrase_tokens) {
  for (const auto& r : responses)
    if (contains_subsequence(r, phrase_tokens)) return true;
  return false;
}

struct InformRequestResult {
  double inform_pct = 0.0;
  double request_pct = 0.0;
  int dialogues_scored = 0;
  int dialogues_skipped = 0;  // no goal constraints anywhere
  int informed_dialogues = 0;
  int requests_total = 0;
  int requests_hit = 0;
};

// One entry per evaluated dialogue: its tokenized generated system
// responses, in turn order.
using GeneratedResponses =
    std::unordered_map<std::string, std::vector<std::vector<std::string>>>;

inline bool record_satisfies(const DbEntity& rec,
                             const std::map<std::string, std::string>& constraints) {
  for (const auto& [slot, value] : constraints) {
    auto it = rec.find(slot);
    if (it == rec.end()) return false;
    if (to_lower(trim(it->second)) != to_lower(trim(value))) return false;
  }
  return true;
}

// Inform: a dialogue counts when, for every goal domain with constraints,
// some response names a database entity satisfying all of them — by its
// name, by its id value, or by the domain's delexicalized id placeholder
// (which can only promise that a satisfying entity exists).
// Request: fraction of requested slots whose placeholder or a known value
// of the slot (ontology or database) appears in some response.
inline InformRequestResult inform_request(const std::vector<Dialogue>& dialogues,
                                          const GeneratedResponses& responses,
                                          const Database& db,
                                          const Ontology& ont) {
  InformRequestResult res;
  static const std::vector<std::vector<std::string>> kNoResponses;

  for (const Dialogue& d : dialogues) {
    if (!d.has_goal_constraints()) {
      ++res.dialogues_skipped;
      continue;
    }
    ++res.dialogues_scored;
    auto rit = responses.find(d.id);
    const auto& resp = rit == responses.end() ? kNoResponses : rit->second;

    bool informed = true;
    for (const auto& [domain, goal] : d.goal) {
      if (goal.constraints.empty()) continue;
      auto dit = db.find(domain);
      bool domain_ok = false;
      bool any_satisfying = false;
      if (dit != db.end()) {
        for (const DbEntity& rec : dit->second) {
          if (!record_satisfies(rec, goal.constraints)) continue;
          any_satisfying = true;
          auto nit = rec.find("name");
          if (nit != rec.end() &&
              any_response_mentions(resp, tokenize(nit->second))) {
            domain_ok = true;
            break;
          }
          auto iit = rec.find("trainid");
          if (iit != rec.end() &&
              any_response_mentions(resp, tokenize(iit->second))) {
            domain_ok = true;
            break;
          }
        }
        if (!domain_ok && any_satisfying &&
            any_response_mentions(resp, {domain + "-trainid"}))
          domain_ok = true;
      }
      if (!domain_ok) {
        informed = false;
        break;
      }
    }
    if (informed) ++res.informed_dialogues;

    for (const auto& [domain, goal] : d.goal) {
      for (const std::string& slot : goal.requested) {
        ++res.requests_total;
        std::string key = domain + "-" + slot;
        bool hit = any_response_mentions(resp, {key});
        if (!hit) {
          auto oit = ont.find(key);
          if (oit != ont.end())
            for (const std::string& v : oit->second) {
              if (any_response_mentions(resp, tokenize(v))) {
                hit = true;
                break;
              }
            }
        }
        if (!hit) {
          auto dit = db.find(domain);
          if (dit != db.end())
            for (const DbEntity& rec : dit->second) {
              auto sit = rec.find(slot);
              if (sit != rec.end() &&
                  any_response_mentions(resp, tokenize(sit->second))) {
                hit = true;
                break;
              }
            }
        }
        if (hit) ++res.requests_hit;
      }
    }
  }

  res.inform_pct = res.dialogues_scored == 0
                       ? 0.0
                       : 100.0 * res.informed_dialogues / res.dialogues_scored;
  res.request_pct = res.requests_total == 0
                        ? 0.0
                        : 100.0 * res.requests_hit / res.requests_total;
  return res;
}

// ---------------------------------------------------------------------------
// Aggregate report
// ---------------------------------------------------------------------------

struct EvalReport {
  double bleu = 0.0;           // [0, 1]
  double avg_embedding = 0.0;  // [-1, 1]
  double extrema = 0.0;
  double greedy = 0.0;
  double inform_pct = 0.0;  // [0, 100]
  double request_pct = 0.0;
  int pair_count = 0;
  int skipped_pairs = 0;
  int dialogues_scored = 0;
  int goalless_dialogues = 0;
  std::string fingerprint;

  nlohmann::json to_json() const {
    return nlohmann::json{{"bleu", bleu},
                          {"avg_embedding", avg_embedding},
                          {"extrema", extrema},
                          {"greedy", greedy},
                          {"inform_pct", inform_pct},
                          {"request_pct", request_pct},
                          {"pair_count", pair_count},
                          {"skipped_pairs", skipped_pairs},
                          {"dialogues_scored", dialogues_scored},
                          {"goalless_dialogues", goalless_dialogues},
                          {"fingerprint", fingerprint}};
  }

  static EvalReport from_json(const nlohmann::json& j) {
    EvalReport r;
    r.bleu = j.at("bleu").get<double>();
    r.avg_embedding = j.at("avg_embedding").get<double>();
    r.extrema = j.at("extrema").get<double>();
    r.greedy = j.at("greedy").get<double>();
    r.inform_pct = j.at("inform_pct").get<double>();
    r.request_pct = j.at("request_pct").get<double>();
    r.pair_count = j.at("pair_count").get<int>();
    r.skipped_pairs = j.at("skipped_pairs").get<int>();
    r.dialogues_scored = j.at("dialogues_scored").get<int>();
    r.goalless_dialogues = j.at("goalless_dialogues").get<int>();
    r.fingerprint = j.at("fingerprint").get<std::string>();
    return r;
  }
};

inline constexpr const char* kMetricsFingerprint =
    "metrics-v1: bleu4 add-one n>=2; extrema abs-max signed; oov=mean-vector; "
    "skip side w/o matched tokens; informreq value-match v1";

// Computes the four text metrics over the pairs and merges in an
// inform/request result. Fails when more than 1% of pairs lack embedding
// coverage, so silent skips cannot bias the means.
inline EvalReport evaluate_pairs(const std::vector<EvalPair>& pairs,
                                 const EmbeddingTable& emb,
                                 const Vocabulary& vocab,
                                 const InformRequestResult& ir) {
  EvalReport rep;
  rep.fingerprint = kMetricsFingerprint;
  rep.bleu = bleu(pairs);
  rep.pair_count = static_cast<int>(pairs.size());

  double sa = 0.0, se = 0.0, sg = 0.0;
  int used = 0;
  for (const EvalPair& p : pairs) {
    PairSimilarities s = pair_similarities(p, emb, vocab);
    if (s.skipped) {
      ++rep.skipped_pairs;
      continue;
    }
    sa += s.avg_embedding;
    se += s.extrema;
    sg += s.greedy;
    ++used;
  }
  if (rep.skipped_pairs * 100 > rep.pair_count)
    throw DataError("more than 1% of evaluation pairs lack embedding coverage (" +
                    std::to_string(rep.skipped_pairs) + " of " +
                    std::to_string(rep.pair_count) + ")");
  if (used > 0) {
    rep.avg_embedding = sa / used;
    rep.extrema = se / used;
    rep.greedy = sg / used;
  }
  rep.inform_pct = ir.inform_pct;
  rep.request_pct = ir.request_pct;
  rep.dialogues_scored = ir.dialogues_scored;
  rep.goalless_dialogues = ir.dialogues_skipped;
  return rep;
}

}  // namespace exdial
