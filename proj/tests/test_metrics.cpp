#include "helpers.hpp"

using namespace exdial;
using testutil::toks;

namespace {

// --- independent n-gram counting over joined strings --------------------

std::unordered_map<std::string, int> brute_grams(
    const std::vector<std::string>& toks, int n) {
  std::unordered_map<std::string, int> m;
  if (static_cast<int>(toks.size()) < n) return m;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= toks.size(); ++i) {
    std::string g;
    for (int j = 0; j < n; ++j) {
      g += toks[i + static_cast<std::size_t>(j)];
      g += '\x01';
    }
    ++m[g];
  }
  return m;
}

double brute_bleu(const std::vector<EvalPair>& pairs, int max_n = 4) {
  std::vector<long long> match(static_cast<std::size_t>(max_n), 0);
  std::vector<long long> total(static_cast<std::size_t>(max_n), 0);
  long long rl = 0, hl = 0;
  for (const EvalPair& p : pairs) {
    rl += static_cast<long long>(p.ref.size());
    hl += static_cast<long long>(p.hyp.size());
    for (int n = 1; n <= max_n; ++n) {
      auto hc = brute_grams(p.hyp, n);
      auto rc = brute_grams(p.ref, n);
      for (const auto& [g, c] : hc) {
        total[static_cast<std::size_t>(n - 1)] += c;
        auto it = rc.find(g);
        if (it != rc.end())
          match[static_cast<std::size_t>(n - 1)] += std::min(c, it->second);
      }
    }
  }
  if (hl == 0) return 0.0;
  double ls = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    double num = static_cast<double>(match[static_cast<std::size_t>(n - 1)]);
    double den = static_cast<double>(total[static_cast<std::size_t>(n - 1)]);
    if (n >= 2) {
      num += 1.0;
      den += 1.0;
    }
    if (num == 0.0 || den == 0.0) return 0.0;
    ls += std::log(num / den);
  }
  double bp = hl < rl ? std::exp(1.0 - static_cast<double>(rl) /
                                           static_cast<double>(hl))
                      : 1.0;
  return bp * std::exp(ls / static_cast<double>(max_n));
}

// --- independent similarity computations ---------------------------------

double brute_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

struct BruteVectors {
  std::vector<std::vector<double>> all, matched;
};

BruteVectors brute_collect(const std::vector<std::string>& toks,
                           const EmbeddingTable& emb, const Vocabulary& vocab) {
  BruteVectors out;
  for (const std::string& t : toks) {
    int id = vocab.id_of(t);
    out.all.push_back(emb.vector_of(id));
    if (emb.matched(id)) out.matched.push_back(emb.vector_of(id));
  }
  return out;
}

std::vector<double> brute_mean(const std::vector<std::vector<double>>& vs) {
  std::vector<double> m(vs[0].size(), 0.0);
  for (const auto& v : vs)
    for (std::size_t i = 0; i < m.size(); ++i) m[i] += v[i];
  for (double& x : m) x /= static_cast<double>(vs.size());
  return m;
}

std::vector<double> brute_extrema(const std::vector<std::vector<double>>& vs) {
  std::vector<double> e(vs[0].size(), 0.0);
  for (const auto& v : vs)
    for (std::size_t i = 0; i < e.size(); ++i)
      if (std::fabs(v[i]) > std::fabs(e[i])) e[i] = v[i];
  return e;
}

double brute_greedy(const std::vector<std::vector<double>>& a,
                    const std::vector<std::vector<double>>& b) {
  auto dir = [](const std::vector<std::vector<double>>& from,
                const std::vector<std::vector<double>>& to) {
    double acc = 0.0;
    for (const auto& v : from) {
      double best = -1.0;
      for (const auto& w : to) best = std::max(best, brute_cosine(v, w));
      acc += best;
    }
    return acc / static_cast<double>(from.size());
  };
  return 0.5 * (dir(a, b) + dir(b, a));
}

// Ten matched words, two vocabulary words missing from the table.
struct EmbFixture {
  testutil::TempDir tmp;
  Vocabulary vocab;
  EmbeddingTable emb;
  std::vector<std::string> matched_words;

  EmbFixture() {
    matched_words = {"alpha", "bravo", "china", "delta", "echo",
                     "fox",   "golf",  "hotel", "indigo", "jazz"};
    std::vector<std::string> all_words = matched_words;
    all_words.push_back("kilo");
    all_words.push_back("lima");
    vocab = Vocabulary::build({all_words}, 1, 100);
    std::string path = tmp.file("emb.txt");
    write_file_atomic(path, testutil::embedding_file_text(matched_words, 6));
    emb = EmbeddingTable::load(path, vocab);
  }

  std::vector<std::string> random_sentence(Rng& rng, std::size_t min_len,
                                           std::size_t max_len) const {
    std::size_t len = min_len + bounded_uint(rng, max_len - min_len + 1);
    std::vector<std::string> s;
    for (std::size_t i = 0; i < len; ++i)
      s.push_back(matched_words[bounded_uint(rng, matched_words.size())]);
    return s;
  }
};

// --- inform/request fixture ----------------------------------------------

Dialogue goal_dialogue(const std::string& id,
                       const std::map<std::string, GoalDomain>& goal) {
  Dialogue d;
  d.id = id;
  d.goal = goal;
  return d;
}

}  // namespace

TEST_CASE("bleu agrees with a brute-force oracle on random pairs") {
  EmbFixture fx;
  Rng rng(2024);
  std::vector<EvalPair> corpus;
  for (int i = 0; i < 20; ++i) {
    EvalPair p;
    p.ref = fx.random_sentence(rng, 1, 10);
    p.hyp = fx.random_sentence(rng, 0, 10);
    corpus.push_back(p);
    INFO("pair " << i << ": " << join(p.ref, " ") << " || " << join(p.hyp, " "));
    REQUIRE(bleu({p}) == Catch::Approx(brute_bleu({p})).margin(1e-12));
  }
  REQUIRE(bleu(corpus) == Catch::Approx(brute_bleu(corpus)).margin(1e-12));
}

TEST_CASE("bleu hand values and edge cases") {
  EvalPair p;
  p.ref = toks("a b c d e");
  p.hyp = toks("a b c d");
  REQUIRE(bleu({p}) == Catch::Approx(0.7788).margin(1e-4));
  REQUIRE(bleu({p}) == Catch::Approx(std::exp(-0.25)).margin(1e-12));

  EvalPair zero;
  zero.ref = toks("x y");
  zero.hyp = toks("a b");
  REQUIRE(bleu({zero}) == 0.0);  // unigram precision zero

  EvalPair empty_hyp;
  empty_hyp.ref = toks("x y");
  REQUIRE(bleu({empty_hyp}) == 0.0);

  EvalPair ident;
  ident.ref = toks("the cat sat on the mat");
  ident.hyp = ident.ref;
  REQUIRE(bleu({ident}) == 1.0);  // exactly

  REQUIRE_THROWS_AS(bleu({}), DataError);
  EvalPair bad;
  bad.hyp = toks("a");
  REQUIRE_THROWS_AS(bleu({bad}), DataError);
}

TEST_CASE("similarity metrics agree with brute-force oracles") {
  EmbFixture fx;
  Rng rng(77);
  for (int i = 0; i < 20; ++i) {
    EvalPair p;
    p.ref = fx.random_sentence(rng, 1, 8);
    p.hyp = fx.random_sentence(rng, 1, 8);
    if (i % 4 == 0) p.hyp.push_back("kilo");  // unmatched vocab word
    if (i % 5 == 0) p.ref.push_back("zzz");   // OOV -> <unk>, unmatched

    PairSimilarities s = pair_similarities(p, fx.emb, fx.vocab);
    REQUIRE(!s.skipped);
    BruteVectors r = brute_collect(p.ref, fx.emb, fx.vocab);
    BruteVectors h = brute_collect(p.hyp, fx.emb, fx.vocab);
    INFO("pair " << i);
    REQUIRE(s.avg_embedding ==
            Catch::Approx(brute_cosine(brute_mean(r.all), brute_mean(h.all)))
                .margin(1e-9));
    REQUIRE(s.extrema ==
            Catch::Approx(brute_cosine(brute_extrema(r.matched),
                                       brute_extrema(h.matched)))
                .margin(1e-9));
    REQUIRE(s.greedy ==
            Catch::Approx(brute_greedy(r.matched, h.matched)).margin(1e-9));
  }
}

TEST_CASE("identical sentences score exactly one on all similarities") {
  EmbFixture fx;
  EvalPair p;
  p.ref = toks("alpha bravo china delta");
  p.hyp = p.ref;
  PairSimilarities s = pair_similarities(p, fx.emb, fx.vocab);
  REQUIRE(s.avg_embedding == 1.0);
  REQUIRE(s.extrema == 1.0);
  REQUIRE(s.greedy == 1.0);

  REQUIRE(cosine({1.5, -2.5, 0.25}, {1.5, -2.5, 0.25}) == 1.0);
  REQUIRE(cosine({0.0, 0.0}, {1.0, 2.0}) == 0.0);
}

TEST_CASE("pairs without matched tokens are skipped, with a one percent cap") {
  EmbFixture fx;

  EvalPair skipped;  // hypothesis entirely out of the table
  skipped.ref = toks("alpha bravo");
  skipped.hyp = {"kilo", "lima"};
  REQUIRE(pair_similarities(skipped, fx.emb, fx.vocab).skipped);

  EvalPair skipped_ref;
  skipped_ref.ref = {"kilo"};
  skipped_ref.hyp = toks("alpha");
  REQUIRE(pair_similarities(skipped_ref, fx.emb, fx.vocab).skipped);

  EvalPair empty_hyp;
  empty_hyp.ref = toks("alpha");
  REQUIRE(pair_similarities(empty_hyp, fx.emb, fx.vocab).skipped);

  auto make_pairs = [&](int good, int bad) {
    std::vector<EvalPair> ps;
    Rng rng(5);
    for (int i = 0; i < good; ++i) {
      EvalPair p;
      p.ref = fx.random_sentence(rng, 2, 6);
      p.hyp = fx.random_sentence(rng, 2, 6);
      ps.push_back(p);
    }
    for (int i = 0; i < bad; ++i) {
      EvalPair p;
      p.ref = fx.random_sentence(rng, 2, 6);
      p.hyp = {"kilo"};
      ps.push_back(p);
    }
    return ps;
  };
  InformRequestResult ir;

  // 2 of 200 is exactly 1%: allowed
  EvalReport ok = evaluate_pairs(make_pairs(198, 2), fx.emb, fx.vocab, ir);
  REQUIRE(ok.skipped_pairs == 2);
  REQUIRE(ok.pair_count == 200);

  // 3 of 200 crosses the threshold
  REQUIRE_THROWS_AS(evaluate_pairs(make_pairs(197, 3), fx.emb, fx.vocab, ir),
                    DataError);
  // and so does 1 of 50
  REQUIRE_THROWS_AS(evaluate_pairs(make_pairs(49, 1), fx.emb, fx.vocab, ir),
                    DataError);
}

TEST_CASE("token subsequence matching") {
  auto hay = toks("the golden dragon is in the north");
  REQUIRE(contains_subsequence(hay, toks("golden dragon")));
  REQUIRE(contains_subsequence(hay, toks("north")));
  REQUIRE(!contains_subsequence(hay, toks("dragon golden")));
  REQUIRE(!contains_subsequence(hay, {}));
  REQUIRE(!contains_subsequence(toks("a"), toks("a b")));
}

TEST_CASE("inform and request on a hand-checked fixture") {
  Database db;
  db["restaurant"] = {
      DbEntity{{"name", "golden dragon"}, {"area", "north"}, {"phone", "01223 111222"}},
      DbEntity{{"name", "silver spoon"}, {"area", "south"}, {"phone", "01223 333444"}},
  };
  db["train"] = {
      DbEntity{{"trainid", "tr1234"}, {"day", "monday"},
               {"price", "10.10 pounds"}, {"duration", "50 minutes"}},
      DbEntity{{"trainid", "tr9999"}, {"day", "friday"},
               {"price", "22.20 pounds"}, {"duration", "80 minutes"}},
  };
  Ontology ont;
  ont["restaurant-phone"] = {"01223 111222", "01223 333444"};
  ont["restaurant-area"] = {"north", "south"};
  ont["train-price"] = {"10.10 pounds", "22.20 pounds"};
  ont["train-duration"] = {"50 minutes", "80 minutes"};

  // d1: names the right entity, answers phone via placeholder -> both hit
  Dialogue d1 = goal_dialogue(
      "d1", {{"restaurant",
              GoalDomain{{{"area", "North"}}, {"phone"}}}});  // case-insensitive
  // d2: names an entity that fails the constraints, never gives a phone
  Dialogue d2 = goal_dialogue(
      "d2", {{"restaurant", GoalDomain{{{"area", "south"}}, {"phone"}}}});
  // d3: delexicalized train id placeholder + a raw price value; duration missed
  Dialogue d3 = goal_dialogue(
      "d3", {{"train", GoalDomain{{{"day", "monday"}}, {"price", "duration"}}}});
  // d4: no constraints anywhere -> not scored
  Dialogue d4 = goal_dialogue("d4", {});

  GeneratedResponses resp;
  resp["d1"] = {toks("the golden dragon is in the north"),
                toks("their number is restaurant-phone")};
  resp["d2"] = {toks("the golden dragon is in the north")};
  resp["d3"] = {toks("train-trainid leaves monday and costs 10.10 pounds")};
  resp["d4"] = {toks("hello there")};

  InformRequestResult r = inform_request({d1, d2, d3, d4}, resp, db, ont);
  REQUIRE(r.dialogues_scored == 3);
  REQUIRE(r.dialogues_skipped == 1);
  REQUIRE(r.informed_dialogues == 2);  // d1 by name, d3 by placeholder
  REQUIRE(r.inform_pct == Catch::Approx(100.0 * 2.0 / 3.0).margin(1e-9));
  // d1 phone (hit), d2 phone (miss), d3 price (hit) + duration (miss)
  REQUIRE(r.requests_total == 4);
  REQUIRE(r.requests_hit == 2);
  REQUIRE(r.request_pct == Catch::Approx(50.0).margin(1e-9));
}

TEST_CASE("inform requires every constrained domain to be satisfied") {
  Database db;
  db["restaurant"] = {DbEntity{{"name", "golden dragon"}, {"area", "north"}}};
  db["hotel"] = {DbEntity{{"name", "river lodge"}, {"area", "west"}}};
  Ontology ont;

  Dialogue both = goal_dialogue(
      "b1", {{"restaurant", GoalDomain{{{"area", "north"}}, {}}},
             {"hotel", GoalDomain{{{"area", "west"}}, {}}}});
  GeneratedResponses only_one;
  only_one["b1"] = {toks("try the golden dragon")};
  InformRequestResult r = inform_request({both}, only_one, db, ont);
  REQUIRE(r.informed_dialogues == 0);

  GeneratedResponses both_named;
  both_named["b1"] = {toks("try the golden dragon"), toks("stay at river lodge")};
  r = inform_request({both}, both_named, db, ont);
  REQUIRE(r.informed_dialogues == 1);

  // no responses recorded for the dialogue: scored but not informed
  r = inform_request({both}, {}, db, ont);
  REQUIRE(r.dialogues_scored == 1);
  REQUIRE(r.informed_dialogues == 0);

  // constraints that no record satisfies: placeholder does not count
  Dialogue impossible = goal_dialogue(
      "b2", {{"restaurant", GoalDomain{{{"area", "moon"}}, {}}}});
  GeneratedResponses ph;
  ph["b2"] = {toks("restaurant-trainid")};
  r = inform_request({impossible}, ph, db, ont);
  REQUIRE(r.informed_dialogues == 0);
}

TEST_CASE("evaluate_pairs merges text metrics with inform and request") {
  EmbFixture fx;
  std::vector<EvalPair> pairs;
  EvalPair p;
  p.ref = toks("alpha bravo china");
  p.hyp = toks("alpha bravo china");
  pairs.push_back(p);
  p.hyp = toks("alpha delta");
  pairs.push_back(p);

  InformRequestResult ir;
  ir.inform_pct = 75.0;
  ir.request_pct = 40.0;
  ir.dialogues_scored = 8;
  ir.dialogues_skipped = 2;

  EvalReport rep = evaluate_pairs(pairs, fx.emb, fx.vocab, ir);
  REQUIRE(rep.pair_count == 2);
  REQUIRE(rep.skipped_pairs == 0);
  REQUIRE(rep.bleu == Catch::Approx(brute_bleu(pairs)).margin(1e-12));
  REQUIRE(rep.inform_pct == 75.0);
  REQUIRE(rep.request_pct == 40.0);
  REQUIRE(rep.dialogues_scored == 8);
  REQUIRE(rep.goalless_dialogues == 2);
  REQUIRE(rep.fingerprint == std::string(kMetricsFingerprint));
  REQUIRE(rep.avg_embedding > 0.0);
  REQUIRE(rep.avg_embedding <= 1.0);

  EvalReport back = EvalReport::from_json(rep.to_json());
  REQUIRE(back.bleu == rep.bleu);
  REQUIRE(back.greedy == rep.greedy);
  REQUIRE(back.fingerprint == rep.fingerprint);
  REQUIRE(back.pair_count == rep.pair_count);
}
