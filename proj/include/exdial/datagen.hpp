#pragma once

// Synthetic goal-oriented dialogue corpus: templated multi-domain dialogues
// with goals, an ontology, an entity database and a matching embedding file.
// Gold responses always name the chosen entity and answer every requested
// slot, so evaluator sanity checks have a known-good ceiling.

#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "exdial/common.hpp"
#include "exdial/corpus.hpp"
#include "exdial/text.hpp"

namespace exdial {

struct SynthConfig {
  int num_dialogues = 500;
  std::uint64_t seed = 7;
  int embedding_dim = 32;
  double goalless_rate = 0.03;
  double split_turn_rate = 0.02;  // consecutive same-speaker turn cases
  double two_domain_rate = 0.15;
};

struct SynthCorpus {
  nlohmann::json dialogues;  // array, documented dialogue format
  Ontology ontology;
  Database database;
  std::string embeddings_text;
};

namespace synth_detail {

inline const std::vector<std::string>& adjectives() {
  static const std::vector<std::string> v{
      "golden", "silver",   "copper", "jade",    "amber",  "crimson",
      "azure",  "ivory",    "emerald", "scarlet", "cobalt", "coral",
      "indigo", "maroon",   "olive",  "pearl",   "ruby",   "sapphire",
      "topaz",  "violet",   "bronze", "garnet",  "hazel",  "lilac",
      "magenta", "ochre",   "plum",   "sienna",  "teal",   "umber"};
  return v;
}

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& v) {
  return v[static_cast<std::size_t>(bounded_uint(rng, v.size()))];
}

inline std::string two_digits(std::uint64_t n) {
  std::string s = std::to_string(n);
  return s.size() < 2 ? "0" + s : s;
}

struct Pools {
  std::vector<std::string> areas{"north", "south", "east", "west", "centre"};
  std::vector<std::string> priceranges{"cheap", "moderate", "expensive"};
  std::vector<std::string> cuisines{"italian", "chinese", "indian", "thai",
                                    "french", "mexican", "japanese", "korean",
                                    "spanish", "greek"};
  std::vector<std::string> stations{"cambridge", "london", "norwich",
                                    "ely", "peterborough", "stansted"};
  std::vector<std::string> days{"monday", "tuesday", "wednesday", "thursday",
                                "friday", "saturday", "sunday"};
  std::vector<std::string> attraction_types{"museum", "park", "cinema",
                                            "theatre", "college"};
  std::vector<std::string> streets{"mill", "regent", "bridge", "station",
                                   "market", "castle", "church", "victoria",
                                   "trinity", "magdalene", "newnham", "histon",
                                   "chesterton", "norfolk", "tenison", "devonshire",
                                   "gwydir", "hobson", "panton", "sidney"};
  std::vector<std::string> street_kinds{"street", "road", "lane"};
  std::vector<std::string> times, prices, durations, fees;

  explicit Pools(Rng& rng) {
    std::set<std::string> seen;
    while (times.size() < 48) {
      std::string t = two_digits(5 + bounded_uint(rng, 18)) + ":" +
                      two_digits(bounded_uint(rng, 12) * 5);
      if (seen.insert(t).second) times.push_back(t);
    }
    seen.clear();
    while (prices.size() < 40) {
      std::string p = std::to_string(8 + bounded_uint(rng, 60)) + "." +
                      two_digits(bounded_uint(rng, 100)) + " pounds";
      if (seen.insert(p).second) prices.push_back(p);
    }
    for (int i = 0; i < 20; ++i)
      durations.push_back(std::to_string(17 + 5 * i) + " minutes");
    fees = {"free"};
    seen.clear();
    while (fees.size() < 10) {
      std::string f = std::to_string(1 + bounded_uint(rng, 9)) + "." +
                      two_digits(bounded_uint(rng, 100)) + " pounds";
      if (seen.insert(f).second) fees.push_back(f);
    }
  }

  std::string address(Rng& rng) {
    return std::to_string(1 + bounded_uint(rng, 40)) + " " + pick(rng, streets) +
           " " + pick(rng, street_kinds);
  }
};

struct NameMaker {
  std::set<std::pair<std::string, std::string>> used;

  std::string fresh(Rng& rng, const std::vector<std::string>& nouns) {
    for (;;) {
      std::string a = pick(rng, adjectives());
      std::string n = pick(rng, nouns);
      if (used.insert({a, n}).second) return a + " " + n;
    }
  }
};

struct UniqueStrings {
  std::unordered_set<std::string> used;

  std::string phone(Rng& rng) {
    for (;;) {
      std::string d;
      for (int i = 0; i < 6; ++i)
        d += static_cast<char>('0' + bounded_uint(rng, 10));
      std::string p = "01223 " + d;
      if (used.insert(p).second) return p;
    }
  }

  std::string reference(Rng& rng) {
    static const std::string letters = "abcdefghjkmnpqrstuvwxyz";
    static const std::string rest = "abcdefghjkmnpqrstuvwxyz23456789";
    for (;;) {
      std::string r(1, letters[static_cast<std::size_t>(bounded_uint(rng, letters.size()))]);
      for (int i = 0; i < 5; ++i)
        r += rest[static_cast<std::size_t>(bounded_uint(rng, rest.size()))];
      if (used.insert(r).second) return r;
    }
  }

  std::string trainid(Rng& rng) {
    for (;;) {
      std::string t = "tr";
      for (int i = 0; i < 4; ++i)
        t += static_cast<char>('0' + bounded_uint(rng, 10));
      if (used.insert(t).second) return t;
    }
  }
};

struct World {
  Pools pools;
  Database db;
  Ontology ont;
  std::map<std::string, std::vector<std::string>> references;  // per domain

  explicit World(Rng& rng) : pools(rng) {
    NameMaker names;
    UniqueStrings uniq;

    auto add_ont = [&](const std::string& key, const std::string& value) {
      auto& vs = ont[key];
      if (std::find(vs.begin(), vs.end(), value) == vs.end()) vs.push_back(value);
    };

    std::vector<std::string> rest_nouns{"kitchen", "bistro", "eatery", "diner", "grill"};
    for (int i = 0; i < 40; ++i) {
      DbEntity e;
      e["name"] = names.fresh(rng, rest_nouns);
      e["food"] = pick(rng, pools.cuisines);
      e["area"] = pick(rng, pools.areas);
      e["pricerange"] = pick(rng, pools.priceranges);
      e["phone"] = uniq.phone(rng);
      e["address"] = pools.address(rng);
      for (const char* s : {"food", "area", "pricerange", "phone", "address", "name"})
        add_ont(std::string("restaurant-") + s, e[s]);
      db["restaurant"].push_back(std::move(e));
    }

    std::vector<std::string> hotel_nouns{"lodge", "inn", "manor", "villa", "suites"};
    for (int i = 0; i < 40; ++i) {
      DbEntity e;
      e["name"] = names.fresh(rng, hotel_nouns);
      e["area"] = pick(rng, pools.areas);
      e["pricerange"] = pick(rng, pools.priceranges);
      e["stars"] = std::to_string(1 + bounded_uint(rng, 5));
      e["parking"] = bounded_uint(rng, 2) ? "yes" : "no";
      e["phone"] = uniq.phone(rng);
      e["address"] = pools.address(rng);
      for (const char* s : {"area", "pricerange", "stars", "parking", "phone", "address", "name"})
        add_ont(std::string("hotel-") + s, e[s]);
      db["hotel"].push_back(std::move(e));
    }

    std::vector<std::string> attr_nouns{"gallery", "museum", "gardens", "pavilion", "arena"};
    for (int i = 0; i < 40; ++i) {
      DbEntity e;
      e["name"] = names.fresh(rng, attr_nouns);
      e["area"] = pick(rng, pools.areas);
      e["type"] = pick(rng, pools.attraction_types);
      e["phone"] = uniq.phone(rng);
      e["address"] = pools.address(rng);
      e["entrancefee"] = pick(rng, pools.fees);
      for (const char* s : {"area", "type", "phone", "address", "entrancefee", "name"})
        add_ont(std::string("attraction-") + s, e[s]);
      db["attraction"].push_back(std::move(e));
    }

    for (int i = 0; i < 60; ++i) {
      DbEntity e;
      e["trainid"] = uniq.trainid(rng);
      std::string dep = pick(rng, pools.stations);
      std::string dest = dep;
      while (dest == dep) dest = pick(rng, pools.stations);
      e["departure"] = dep;
      e["destination"] = dest;
      e["day"] = pick(rng, pools.days);
      e["leaveat"] = pick(rng, pools.times);
      e["arriveby"] = pick(rng, pools.times);
      e["price"] = pick(rng, pools.prices);
      e["duration"] = pick(rng, pools.durations);
      for (const char* s : {"trainid", "departure", "destination", "day",
                            "leaveat", "arriveby", "price", "duration"})
        add_ont(std::string("train-") + s, e[s]);
      db["train"].push_back(std::move(e));
    }

    for (const char* dom : {"restaurant", "hotel", "train"}) {
      for (int i = 0; i < 30; ++i) {
        std::string r = uniq.reference(rng);
        references[dom].push_back(r);
        ont[std::string(dom) + "-reference"].push_back(r);
      }
    }
  }
};

struct Block {
  std::vector<std::pair<std::string, std::string>> turns;  // speaker, text
  std::string domain;
  std::map<std::string, std::string> constraints;
  std::vector<std::string> requested;
};

inline void say(Block& b, const char* who, const std::string& text) {
  b.turns.emplace_back(who, text);
}

inline Block restaurant_block(Rng& rng, World& w) {
  Block b;
  b.domain = "restaurant";
  const DbEntity& e = pick(rng, w.db["restaurant"]);
  bool with_price = bounded_uint(rng, 2) == 0;
  b.constraints["food"] = e.at("food");
  b.constraints["area"] = e.at("area");
  if (with_price) b.constraints["pricerange"] = e.at("pricerange");

  switch (bounded_uint(rng, 3)) {
    case 0:
      say(b, "user", "i am looking for a " +
                         (with_price ? e.at("pricerange") + " " : "") +
                         e.at("food") + " restaurant in the " + e.at("area") + " .");
      break;
    case 1:
      say(b, "user", "can you find me a " +
                         (with_price ? e.at("pricerange") + " " : "") +
                         "restaurant in the " + e.at("area") + " serving " +
                         e.at("food") + " food ?");
      break;
    default:
      say(b, "user", "hello , i need a place to eat in the " + e.at("area") +
                         " that serves " + e.at("food") + " food" +
                         (with_price ? " and is " + e.at("pricerange") : "") + " .");
  }
  if (bounded_uint(rng, 2) == 0)
    say(b, "system", e.at("name") + " is a " + e.at("pricerange") + " " +
                         e.at("food") + " restaurant in the " + e.at("area") +
                         " . would you like to know more ?");
  else
    say(b, "system", "i recommend " + e.at("name") + " , a " + e.at("pricerange") +
                         " " + e.at("food") + " place in the " + e.at("area") + " .");

  bool want_phone = bounded_uint(rng, 2) == 0;
  bool want_addr = bounded_uint(rng, 2) == 0;
  if (want_phone && want_addr) {
    b.requested = {"phone", "address"};
    say(b, "user", "can i get the phone number and the address ?");
    say(b, "system", "sure , the phone number is " + e.at("phone") +
                         " and the address is " + e.at("address") + " .");
  } else if (want_phone) {
    b.requested = {"phone"};
    say(b, "user", "what is the phone number ?");
    say(b, "system", "the phone number of " + e.at("name") + " is " + e.at("phone") + " .");
  } else if (want_addr) {
    b.requested = {"address"};
    say(b, "user", "could you give me the address ?");
    say(b, "system", e.at("name") + " is located at " + e.at("address") + " .");
  }

  b.requested.push_back("reference");
  std::string n = std::to_string(1 + bounded_uint(rng, 8));
  say(b, "user", "please book a table for " + n + " people .");
  say(b, "system", "booking was successful . the reference number is : " +
                       pick(rng, w.references["restaurant"]) + " .");
  return b;
}

inline Block hotel_block(Rng& rng, World& w) {
  Block b;
  b.domain = "hotel";
  const DbEntity& e = pick(rng, w.db["hotel"]);
  bool with_stars = bounded_uint(rng, 2) == 0;
  b.constraints["area"] = e.at("area");
  b.constraints["pricerange"] = e.at("pricerange");
  if (with_stars) b.constraints["stars"] = e.at("stars");

  if (bounded_uint(rng, 2) == 0)
    say(b, "user", "i need a " + e.at("pricerange") + " hotel in the " +
                       e.at("area") +
                       (with_stars ? " with " + e.at("stars") + " stars" : "") + " .");
  else
    say(b, "user", "are there any " + e.at("pricerange") + " places to stay in the " +
                       e.at("area") +
                       (with_stars ? " rated " + e.at("stars") + " stars" : "") + " ?");
  say(b, "system", e.at("name") + " is a " + e.at("stars") + " star " +
                       e.at("pricerange") + " hotel in the " + e.at("area") +
                       " with parking : " + e.at("parking") + " .");

  if (bounded_uint(rng, 2) == 0) {
    b.requested = {"phone"};
    say(b, "user", "what is their phone number ?");
    say(b, "system", "you can reach " + e.at("name") + " at " + e.at("phone") + " .");
  } else {
    b.requested = {"address"};
    say(b, "user", "where is it located ?");
    say(b, "system", "the address is " + e.at("address") + " .");
  }

  b.requested.push_back("reference");
  std::string n = std::to_string(1 + bounded_uint(rng, 7));
  say(b, "user", "please book it for " + n + " nights .");
  say(b, "system", "all set . your reference number is : " +
                       pick(rng, w.references["hotel"]) + " .");
  return b;
}

inline Block attraction_block(Rng& rng, World& w) {
  Block b;
  b.domain = "attraction";
  const DbEntity& e = pick(rng, w.db["attraction"]);
  b.constraints["area"] = e.at("area");
  b.constraints["type"] = e.at("type");

  if (bounded_uint(rng, 2) == 0)
    say(b, "user", "i am looking for a " + e.at("type") + " in the " +
                       e.at("area") + " .");
  else
    say(b, "user", "what " + e.at("type") + " can i visit in the " +
                       e.at("area") + " part of town ?");
  say(b, "system", "you could try " + e.at("name") + " , a popular " +
                       e.at("type") + " in the " + e.at("area") + " .");

  switch (bounded_uint(rng, 3)) {
    case 0:
      b.requested = {"entrancefee"};
      say(b, "user", "how much is the entrance fee ?");
      say(b, "system", "the entrance fee of " + e.at("name") + " is " +
                           e.at("entrancefee") + " .");
      break;
    case 1:
      b.requested = {"phone"};
      say(b, "user", "can i have the phone number ?");
      say(b, "system", "of course , the phone number is " + e.at("phone") + " .");
      break;
    default:
      b.requested = {"address", "entrancefee"};
      say(b, "user", "what is the address and the entrance fee ?");
      say(b, "system", e.at("name") + " is at " + e.at("address") +
                           " and the entrance fee is " + e.at("entrancefee") + " .");
  }
  return b;
}

inline Block train_block(Rng& rng, World& w) {
  Block b;
  b.domain = "train";
  const DbEntity& e = pick(rng, w.db["train"]);
  b.constraints["departure"] = e.at("departure");
  b.constraints["destination"] = e.at("destination");
  b.constraints["day"] = e.at("day");

  if (bounded_uint(rng, 2) == 0)
    say(b, "user", "i need a train from " + e.at("departure") + " to " +
                       e.at("destination") + " on " + e.at("day") + " .");
  else
    say(b, "user", "are there trains going to " + e.at("destination") +
                       " from " + e.at("departure") + " on " + e.at("day") + " ?");
  say(b, "system", e.at("trainid") + " leaves " + e.at("departure") + " at " +
                       e.at("leaveat") + " and arrives in " + e.at("destination") +
                       " by " + e.at("arriveby") + " . shall i book it for you ?");

  if (bounded_uint(rng, 2) == 0) {
    b.requested = {"price", "duration"};
    say(b, "user", "how much does it cost and how long does it take ?");
    say(b, "system", "the price is " + e.at("price") + " and the trip takes " +
                         e.at("duration") + " .");
  } else {
    b.requested = {"price"};
    say(b, "user", "what is the price of the ticket ?");
    say(b, "system", "a ticket costs " + e.at("price") + " .");
  }

  b.requested.push_back("reference");
  std::string n = std::to_string(1 + bounded_uint(rng, 6));
  say(b, "user", "yes , please book " + n + " tickets .");
  say(b, "system", "done ! your reference number is : " +
                       pick(rng, w.references["train"]) + " .");
  return b;
}

inline Block domain_block(Rng& rng, World& w, const std::string& domain) {
  if (domain == "restaurant") return restaurant_block(rng, w);
  if (domain == "hotel") return hotel_block(rng, w);
  if (domain == "attraction") return attraction_block(rng, w);
  return train_block(rng, w);
}

}  // namespace synth_detail

inline SynthCorpus generate_corpus(const SynthConfig& cfg) {
  using namespace synth_detail;
  if (cfg.num_dialogues < 4) throw ConfigError("need at least 4 dialogues");
  Rng rng(cfg.seed);
  World world(rng);

  const std::vector<std::string> domains{"restaurant", "hotel", "attraction", "train"};
  nlohmann::json dialogues = nlohmann::json::array();

  for (int i = 0; i < cfg.num_dialogues; ++i) {
    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "syn%05d", i);
    nlohmann::json d{{"dialogue_id", std::string(idbuf)}};
    std::vector<std::pair<std::string, std::string>> turns;

    if (uniform01(rng) < cfg.goalless_rate) {
      turns = {{"user", "hello there , how are you today ?"},
               {"system", "i am doing well , thank you . how can i help ?"},
               {"user", "nothing really , just saying hi ."},
               {"system", "alright , have a lovely day !"}};
    } else {
      std::vector<Block> blocks;
      std::string first = pick(rng, domains);
      blocks.push_back(domain_block(rng, world, first));
      if (uniform01(rng) < cfg.two_domain_rate) {
        std::string second = first;
        while (second == first) second = pick(rng, domains);
        blocks.push_back(domain_block(rng, world, second));
      }
      nlohmann::json goal;
      for (const Block& b : blocks) {
        for (const auto& t : b.turns) turns.push_back(t);
        nlohmann::json g{{"constraints", nlohmann::json::object()},
                         {"requested", b.requested}};
        for (const auto& [slot, value] : b.constraints)
          g["constraints"][slot] = value;
        goal[b.domain] = g;
      }
      turns.emplace_back("user", "thank you so much , goodbye .");
      turns.emplace_back("system", "you are welcome . goodbye !");
      d["goal"] = goal;
    }

    // Occasionally split a turn at a sentence boundary to produce
    // consecutive same-speaker turns (exercises merge-on-load).
    if (uniform01(rng) < cfg.split_turn_rate) {
      for (std::size_t t = 0; t < turns.size(); ++t) {
        std::size_t dot = turns[t].second.find(" . ");
        if (dot == std::string::npos) continue;
        std::string head = turns[t].second.substr(0, dot + 2);
        std::string tail = turns[t].second.substr(dot + 3);
        if (trim(tail).empty()) continue;
        turns.insert(turns.begin() + static_cast<std::ptrdiff_t>(t) + 1,
                     {turns[t].first, tail});
        turns[t].second = head;
        break;
      }
    }

    nlohmann::json jturns = nlohmann::json::array();
    for (const auto& [speaker, text] : turns)
      jturns.push_back({{"speaker", speaker}, {"text", text}});
    d["turns"] = jturns;
    dialogues.push_back(d);
  }

  SynthCorpus out;
  out.dialogues = dialogues;
  out.ontology = world.ont;
  out.database = world.db;

  // Embedding file over the delexicalized token inventory: deterministic
  // per-token unit vectors, seeded from the token text.
  Delexicalizer delex(world.ont);
  std::set<std::string> token_set{"<pad>", "<sos>", "<eos>", "<unk>",
                                  kEmptySystemToken};
  for (const nlohmann::json& d : dialogues)
    for (const nlohmann::json& t : d["turns"])
      for (const std::string& tok :
           tokenize(delex.apply(t["text"].get<std::string>())))
        token_set.insert(tok);

  std::string emb = std::to_string(token_set.size()) + " " +
                    std::to_string(cfg.embedding_dim) + "\n";
  for (const std::string& tok : token_set) {
    Rng trng(fnv1a64(tok) ^ cfg.seed);
    std::vector<double> v(static_cast<std::size_t>(cfg.embedding_dim));
    double sq = 0.0;
    for (double& x : v) {
      x = gaussian(trng);
      sq += x * x;
    }
    double inv = 1.0 / std::sqrt(sq);
    emb += tok;
    char buf[32];
    for (double x : v) {
      std::snprintf(buf, sizeof(buf), " %.12g", x * inv);
      emb += buf;
    }
    emb += '\n';
  }
  out.embeddings_text = std::move(emb);
  return out;
}

inline void write_corpus(const SynthCorpus& corpus, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_file_atomic(dir + "/dialogues.json", corpus.dialogues.dump(1) + "\n");
  nlohmann::json ont(corpus.ontology);
  write_file_atomic(dir + "/ontology.json", ont.dump(1) + "\n");
  nlohmann::json db(corpus.database);
  write_file_atomic(dir + "/database.json", db.dump(1) + "\n");
  write_file_atomic(dir + "/embeddings.txt", corpus.embeddings_text);
}

}  // namespace exdial
