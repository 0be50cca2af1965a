#include "helpers.hpp"

using namespace exdial;
using testutil::TempDir;

TEST_CASE("tokenize lowercases and splits on whitespace") {
  REQUIRE(tokenize("Hello   WORLD") ==
          std::vector<std::string>{"hello", "world"});
  REQUIRE(tokenize("  \t\n ") == std::vector<std::string>{});
}

TEST_CASE("tokenize splits punctuation off unless between alphanumerics") {
  REQUIRE(tokenize("leaves at 12:30 .") ==
          std::vector<std::string>{"leaves", "at", "12:30", "."});
  REQUIRE(tokenize("don't stop") == std::vector<std::string>{"don't", "stop"});
  REQUIRE(tokenize("Hello, world!") ==
          std::vector<std::string>{"hello", ",", "world", "!"});
  REQUIRE(tokenize("end.") == std::vector<std::string>{"end", "."});
  REQUIRE(tokenize("?!") == std::vector<std::string>{"?", "!"});
  REQUIRE(tokenize("a.b.c") == std::vector<std::string>{"a.b.c"});
  REQUIRE(tokenize("( parens )") ==
          std::vector<std::string>{"(", "parens", ")"});
}

TEST_CASE("tokenize treats hyphen as a word character") {
  REQUIRE(tokenize("restaurant-phone is here") ==
          std::vector<std::string>{"restaurant-phone", "is", "here"});
}

TEST_CASE("detokenize round trip is stable") {
  for (const char* s :
       {"i Need a train to ely at 08:15 , please .", "what is the phone number ?",
        "tr1234 leaves at 09:00"}) {
    std::vector<std::string> t1 = tokenize(s);
    std::vector<std::string> t2 = tokenize(detokenize(t1));
    REQUIRE(t1 == t2);
  }
}

TEST_CASE("vocabulary reserves special ids") {
  Vocabulary v;
  REQUIRE(v.size() == 4);
  REQUIRE(v.token_of(Vocabulary::kPad) == "<pad>");
  REQUIRE(v.token_of(Vocabulary::kSos) == "<sos>");
  REQUIRE(v.token_of(Vocabulary::kEos) == "<eos>");
  REQUIRE(v.token_of(Vocabulary::kUnk) == "<unk>");
  REQUIRE(v.id_of("anything") == Vocabulary::kUnk);
  REQUIRE_THROWS_AS(v.token_of(99), DataError);
  REQUIRE_THROWS_AS(v.token_of(-1), DataError);
}

TEST_CASE("vocabulary build orders by count desc then token asc") {
  std::vector<std::vector<std::string>> texts = {
      {"b", "b", "b", "a", "a", "a"}, {"c", "c", "c", "z"}};
  Vocabulary v = Vocabulary::build(texts, 1, 20000);
  // a,b,c all count 3 -> alphabetical; z count 1 last
  REQUIRE(v.token_of(4) == "a");
  REQUIRE(v.token_of(5) == "b");
  REQUIRE(v.token_of(6) == "c");
  REQUIRE(v.token_of(7) == "z");
}

TEST_CASE("vocabulary build honors min_count and max_size") {
  std::vector<std::vector<std::string>> texts = {
      {"x", "x", "x", "y", "y", "q"}};
  Vocabulary v = Vocabulary::build(texts, 2, 20000);
  REQUIRE(v.contains("x"));
  REQUIRE(v.contains("y"));
  REQUIRE_FALSE(v.contains("q"));

  Vocabulary capped = Vocabulary::build(texts, 1, 5);
  REQUIRE(capped.size() == 5);  // 4 reserved + highest-count token
  REQUIRE(capped.contains("x"));
  REQUIRE_FALSE(capped.contains("y"));
}

TEST_CASE("encode appends eos and maps oov to unk") {
  Vocabulary v = Vocabulary::build({{"hi", "hi", "hi"}}, 1, 100);
  std::vector<int> ids = v.encode({"hi", "stranger"});
  REQUIRE(ids.size() == 3);
  REQUIRE(ids[0] == v.id_of("hi"));
  REQUIRE(ids[1] == Vocabulary::kUnk);
  REQUIRE(ids[2] == Vocabulary::kEos);
  REQUIRE(v.decode(ids) == std::vector<std::string>{"hi", "<unk>"});
}

TEST_CASE("decode stops at first eos") {
  Vocabulary v = Vocabulary::build({{"a", "a", "b", "b"}}, 1, 100);
  std::vector<int> ids{v.id_of("a"), Vocabulary::kEos, v.id_of("b")};
  REQUIRE(v.decode(ids) == std::vector<std::string>{"a"});
}

TEST_CASE("vocabulary hash is order sensitive and json round trips") {
  Vocabulary a = Vocabulary::build({{"x", "x", "y", "y"}}, 1, 100);
  Vocabulary b = Vocabulary::build({{"x", "x", "y", "y", "z"}}, 1, 100);
  REQUIRE(a.hash() != b.hash());

  Vocabulary back = Vocabulary::from_json(a.to_json());
  REQUIRE(back.hash() == a.hash());
  REQUIRE(back.tokens() == a.tokens());

  nlohmann::json bad{{"tokens", {"<pad>", "oops"}}};
  REQUIRE_THROWS_AS(Vocabulary::from_json(bad), DataError);
}

TEST_CASE("embedding table loads with and without header") {
  TempDir tmp;
  Vocabulary v = Vocabulary::build({{"cat", "cat", "dog", "dog"}}, 1, 100);

  std::string with_header = "2 3\ncat 1 0 0\ndog 0 1 0\n";
  write_file_atomic(tmp.file("a.txt"), with_header);
  EmbeddingTable ta = EmbeddingTable::load(tmp.file("a.txt"), v);
  REQUIRE(ta.dim() == 3);
  REQUIRE(ta.matched(v.id_of("cat")));
  REQUIRE(ta.vector_of(v.id_of("cat"))[0] == 1.0);

  std::string no_header = "cat 1 0 0\ndog 0 1 0\n";
  write_file_atomic(tmp.file("b.txt"), no_header);
  EmbeddingTable tb = EmbeddingTable::load(tmp.file("b.txt"), v);
  REQUIRE(tb.dim() == 3);
  REQUIRE(tb.matched_count() == ta.matched_count());
}

TEST_CASE("embedding table fills missing tokens with the matched mean") {
  TempDir tmp;
  Vocabulary v = Vocabulary::build({{"cat", "cat", "dog", "dog"}}, 1, 100);
  write_file_atomic(tmp.file("e.txt"), "cat 2 0\ndog 0 4\n");
  EmbeddingTable t = EmbeddingTable::load(tmp.file("e.txt"), v);
  REQUIRE_FALSE(t.matched(Vocabulary::kUnk));
  std::vector<double> mean = t.vector_of(Vocabulary::kUnk);
  REQUIRE(mean[0] == Catch::Approx(1.0));
  REQUIRE(mean[1] == Catch::Approx(2.0));
}

TEST_CASE("embedding table rejects bad files") {
  TempDir tmp;
  Vocabulary v = Vocabulary::build({{"cat", "cat"}}, 1, 100);
  write_file_atomic(tmp.file("dim.txt"), "cat 1 0\ndog 0 1 7\n");
  REQUIRE_THROWS_AS(EmbeddingTable::load(tmp.file("dim.txt"), v), DataError);
  write_file_atomic(tmp.file("nan.txt"), "cat nan 0\n");
  REQUIRE_THROWS_AS(EmbeddingTable::load(tmp.file("nan.txt"), v), DataError);
  write_file_atomic(tmp.file("empty.txt"), "");
  REQUIRE_THROWS_AS(EmbeddingTable::load(tmp.file("empty.txt"), v), DataError);
}
