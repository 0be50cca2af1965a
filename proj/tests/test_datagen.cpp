#include "helpers.hpp"

using namespace exdial;

TEST_CASE("corpus generation is deterministic in the config") {
  SynthConfig cfg;
  cfg.num_dialogues = 40;
  SynthCorpus a = generate_corpus(cfg);
  SynthCorpus b = generate_corpus(cfg);
  REQUIRE(a.dialogues.dump() == b.dialogues.dump());
  REQUIRE(a.embeddings_text == b.embeddings_text);
  REQUIRE(nlohmann::json(a.ontology).dump() == nlohmann::json(b.ontology).dump());
  REQUIRE(nlohmann::json(a.database).dump() == nlohmann::json(b.database).dump());

  cfg.seed = 8;
  SynthCorpus c = generate_corpus(cfg);
  REQUIRE(a.dialogues.dump() != c.dialogues.dump());

  SynthConfig tiny;
  tiny.num_dialogues = 3;
  REQUIRE_THROWS_AS(generate_corpus(tiny), ConfigError);
}

TEST_CASE("written corpus loads through the standard loaders") {
  SynthConfig cfg;
  cfg.num_dialogues = 60;
  SynthCorpus corpus = generate_corpus(cfg);

  testutil::TempDir tmp;
  std::string dir = tmp.file("data");
  write_corpus(corpus, dir);

  std::vector<Dialogue> dialogues = load_dialogues(dir + "/dialogues.json");
  Ontology ont = load_ontology(dir + "/ontology.json");
  Database db = load_database(dir + "/database.json");
  REQUIRE(dialogues.size() == 60);
  REQUIRE_NOTHROW(validate_goals(dialogues, ont));

  REQUIRE(db.count("restaurant") == 1);
  REQUIRE(db.count("hotel") == 1);
  REQUIRE(db.count("attraction") == 1);
  REQUIRE(db.count("train") == 1);
  REQUIRE(db["train"].size() == 60);
  REQUIRE(ont.count("restaurant-phone") == 1);
  REQUIRE(ont.count("train-reference") == 1);

  // rewriting the same corpus is byte-identical
  std::string dir2 = tmp.file("data2");
  write_corpus(generate_corpus(cfg), dir2);
  for (const char* f :
       {"/dialogues.json", "/ontology.json", "/database.json", "/embeddings.txt"})
    REQUIRE(read_file(dir + f) == read_file(dir2 + f));
}

TEST_CASE("default rates cover the structural branches") {
  SynthConfig cfg;
  cfg.num_dialogues = 300;
  SynthCorpus corpus = generate_corpus(cfg);

  testutil::TempDir tmp;
  std::string dir = tmp.file("data");
  write_corpus(corpus, dir);
  std::vector<Dialogue> dialogues = load_dialogues(dir + "/dialogues.json");

  int goalless = 0, two_domain = 0, same_speaker_pairs = 0;
  for (const Dialogue& d : dialogues) {
    if (!d.has_goal_constraints()) ++goalless;
    if (d.goal.size() == 2) ++two_domain;
    for (std::size_t i = 1; i < d.turns.size(); ++i)
      if (d.turns[i].speaker == d.turns[i - 1].speaker) ++same_speaker_pairs;
  }
  REQUIRE(goalless >= 1);
  REQUIRE(two_domain >= 1);
  REQUIRE(same_speaker_pairs >= 1);
  REQUIRE(goalless < 30);  // rare, not dominant

  for (const Dialogue& d : dialogues) {
    REQUIRE(d.turns.size() >= 4);
    REQUIRE(d.turns.front().speaker == Speaker::User);
    for (const auto& [domain, g] : d.goal) {
      REQUIRE(!g.constraints.empty());
      REQUIRE(!g.requested.empty());
    }
  }
}

TEST_CASE("delexicalization hits the id-like families and stays idempotent") {
  SynthConfig cfg;
  cfg.num_dialogues = 50;
  SynthCorpus corpus = generate_corpus(cfg);

  testutil::TempDir tmp;
  std::string dir = tmp.file("data");
  write_corpus(corpus, dir);
  std::vector<Dialogue> dialogues = load_dialogues(dir + "/dialogues.json");
  Ontology ont = load_ontology(dir + "/ontology.json");
  Delexicalizer delex(ont);

  int placeholders = 0;
  for (const Dialogue& d : dialogues)
    for (const Utterance& u : d.turns) {
      std::string once = delex.apply(u.raw_text);
      REQUIRE(delex.apply(once) == once);  // idempotent
      for (const std::string& tok : tokenize(once)) {
        if (tok.find("-phone") != std::string::npos ||
            tok.find("-reference") != std::string::npos ||
            tok.find("-trainid") != std::string::npos)
          ++placeholders;
        REQUIRE(tok.find("01223") == std::string::npos);  // no raw phones left
      }
    }
  REQUIRE(placeholders > 20);
}

TEST_CASE("gold responses ace the inform and request evaluator") {
  SynthConfig cfg;
  cfg.num_dialogues = 80;
  SynthCorpus corpus = generate_corpus(cfg);

  testutil::TempDir tmp;
  std::string dir = tmp.file("data");
  write_corpus(corpus, dir);
  std::vector<Dialogue> dialogues = load_dialogues(dir + "/dialogues.json");
  Ontology ont = load_ontology(dir + "/ontology.json");
  Database db = load_database(dir + "/database.json");
  validate_goals(dialogues, ont);

  Delexicalizer delex(ont);
  for (Dialogue& d : dialogues) normalize_dialogue(d, &delex);

  GeneratedResponses responses;
  for (const ContextTriple& t : make_triples(dialogues))
    responses[t.dialogue_id].push_back(t.s2.tokens);

  InformRequestResult r = inform_request(dialogues, responses, db, ont);
  REQUIRE(r.dialogues_scored + r.dialogues_skipped ==
          static_cast<int>(dialogues.size()));
  REQUIRE(r.dialogues_scored > 0);
  REQUIRE(r.inform_pct >= 95.0);
  REQUIRE(r.request_pct >= 95.0);
}

TEST_CASE("embedding file covers the full delexicalized vocabulary") {
  SynthConfig cfg;
  cfg.num_dialogues = 40;
  cfg.embedding_dim = 16;
  SynthCorpus corpus = generate_corpus(cfg);

  // header is "count dim"
  std::istringstream in(corpus.embeddings_text);
  std::size_t count = 0, dim = 0;
  in >> count >> dim;
  REQUIRE(dim == 16);
  REQUIRE(count > 100);

  testutil::TempDir tmp;
  std::string dir = tmp.file("data");
  write_corpus(corpus, dir);
  std::vector<Dialogue> dialogues = load_dialogues(dir + "/dialogues.json");
  Ontology ont = load_ontology(dir + "/ontology.json");
  Delexicalizer delex(ont);

  std::vector<std::vector<std::string>> texts;
  for (Dialogue& d : dialogues) {
    normalize_dialogue(d, &delex);
    for (const Utterance& u : d.turns) texts.push_back(u.tokens);
  }
  Vocabulary vocab = Vocabulary::build(texts, 1, 100000);
  EmbeddingTable emb = EmbeddingTable::load(dir + "/embeddings.txt", vocab);
  REQUIRE(emb.dim() == 16);
  REQUIRE(emb.matched_count() == vocab.size());  // reserved tokens included

  // rows are unit length
  const std::vector<double>& v = emb.vector_of(5);
  double sq = 0.0;
  for (double x : v) sq += x * x;
  REQUIRE(sq == Catch::Approx(1.0).margin(1e-9));
}
