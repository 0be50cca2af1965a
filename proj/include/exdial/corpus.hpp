#pragma once

#include <array>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "exdial/common.hpp"
#include "exdial/text.hpp"

namespace exdial {

enum class Speaker { User, System };

inline Speaker parse_speaker(const std::string& s) {
  std::string t = to_lower(trim(s));
  if (t == "user") return Speaker::User;
  if (t == "system") return Speaker::System;
  throw DataError("unknown speaker: \"" + s + "\"");
}

inline const char* speaker_name(Speaker s) {
  return s == Speaker::User ? "user" : "system";
}

struct Utterance {
  Speaker speaker = Speaker::System;
  std::string raw_text;
  std::vector<std::string> tokens;  // populated by normalize_dialogue
};

struct GoalDomain {
  std::map<std::string, std::string> constraints;
  std::vector<std::string> requested;
};

struct Dialogue {
  std::string id;
  std::vector<Utterance> turns;
  std::map<std::string, GoalDomain> goal;  // empty map when no goal block

  bool has_goal_constraints() const {
    for (const auto& [dom, g] : goal)
      if (!g.constraints.empty()) return true;
    return false;
  }
};

// "domain-slot" -> surface values.
using Ontology = std::map<std::string, std::vector<std::string>>;
// domain -> entity records (slot -> value).
using DbEntity = std::map<std::string, std::string>;
using Database = std::map<std::string, std::vector<DbEntity>>;

// Dialogue-initial user turns get this as their preceding system utterance.
// Single token by construction ('-' is a word character for the tokenizer).
inline constexpr const char* kEmptySystemToken = "empty-system-turn";

// ---------------------------------------------------------------------------
// Loaders
// ---------------------------------------------------------------------------

inline std::string json_scalar_to_string(const nlohmann::json& v,
                                         const std::string& where) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number_float()) {
    nlohmann::json tmp = v;
    return tmp.dump();
  }
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  throw DataError(where + ": expected a scalar value");
}

inline std::vector<Dialogue> load_dialogues(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("parse error in " + path + ": " + e.what());
  }
  if (!j.is_array())
    throw DataError(path + ": expected a JSON array of dialogues");

  std::vector<Dialogue> out;
  std::unordered_set<std::string> seen_ids;
  for (std::size_t idx = 0; idx < j.size(); ++idx) {
    const nlohmann::json& rec = j[idx];
    std::string where = path + ": dialogue #" + std::to_string(idx);
    if (!rec.is_object()) throw DataError(where + ": not an object");
    if (!rec.contains("dialogue_id") || !rec["dialogue_id"].is_string())
      throw DataError(where + ": missing field dialogue_id");

    Dialogue d;
    d.id = rec["dialogue_id"].get<std::string>();
    if (d.id.empty()) throw DataError(where + ": empty dialogue_id");
    if (!seen_ids.insert(d.id).second)
      throw DataError(where + ": duplicate dialogue_id " + d.id);
    where += " (" + d.id + ")";

    if (!rec.contains("turns") || !rec["turns"].is_array())
      throw DataError(where + ": missing field turns");
    for (const nlohmann::json& t : rec["turns"]) {
      if (!t.is_object() || !t.contains("speaker") || !t.contains("text"))
        throw DataError(where + ": turn missing speaker or text");
      Utterance u;
      u.speaker = parse_speaker(t["speaker"].get<std::string>());
      u.raw_text = trim(t["text"].get<std::string>());
      if (u.raw_text.empty()) throw DataError(where + ": empty turn text");
      d.turns.push_back(std::move(u));
    }
    if (d.turns.size() < 2)
      throw DataError(where + ": dialogue has fewer than 2 turns");

    if (rec.contains("goal")) {
      if (!rec["goal"].is_object())
        throw DataError(where + ": goal is not an object");
      for (const auto& [domain, spec] : rec["goal"].items()) {
        GoalDomain g;
        if (spec.contains("constraints")) {
          if (!spec["constraints"].is_object())
            throw DataError(where + ": goal constraints not an object");
          for (const auto& [slot, val] : spec["constraints"].items())
            g.constraints[slot] =
                json_scalar_to_string(val, where + " goal " + domain + "." + slot);
        }
        if (spec.contains("requested")) {
          if (!spec["requested"].is_array())
            throw DataError(where + ": goal requested not an array");
          for (const nlohmann::json& s : spec["requested"])
            g.requested.push_back(s.get<std::string>());
        }
        d.goal[domain] = std::move(g);
      }
    }
    out.push_back(std::move(d));
  }
  return out;
}

inline Ontology load_ontology(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("parse error in " + path + ": " + e.what());
  }
  if (!j.is_object()) throw DataError(path + ": expected a JSON object");
  Ontology ont;
  for (const auto& [key, values] : j.items()) {
    if (!values.is_array())
      throw DataError(path + ": ontology entry " + key + " is not an array");
    std::string slot = to_lower(trim(key));
    std::vector<std::string> vs;
    for (const nlohmann::json& v : values) {
      std::string s = trim(json_scalar_to_string(v, path + ": " + key));
      if (!s.empty()) vs.push_back(s);
    }
    if (vs.empty())
      throw DataError(path + ": ontology entry " + key + " has no values");
    ont[slot] = std::move(vs);
  }
  return ont;
}

inline Database load_database(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("parse error in " + path + ": " + e.what());
  }
  if (!j.is_object()) throw DataError(path + ": expected a JSON object");
  Database db;
  for (const auto& [domain, records] : j.items()) {
    if (!records.is_array())
      throw DataError(path + ": database domain " + domain + " is not an array");
    std::vector<DbEntity> ents;
    for (const nlohmann::json& rec : records) {
      if (!rec.is_object())
        throw DataError(path + ": database record in " + domain + " not an object");
      DbEntity e;
      for (const auto& [slot, val] : rec.items())
        e[to_lower(slot)] = json_scalar_to_string(val, path + ": " + domain);
      ents.push_back(std::move(e));
    }
    db[to_lower(domain)] = std::move(ents);
  }
  return db;
}

// Goal slots must exist in the ontology as "domain-slot" keys.
inline void validate_goals(const std::vector<Dialogue>& dialogues,
                           const Ontology& ont) {
  for (const Dialogue& d : dialogues) {
    for (const auto& [domain, g] : d.goal) {
      for (const auto& [slot, value] : g.constraints) {
        (void)value;
        if (!ont.count(domain + "-" + slot))
          throw DataError("dialogue " + d.id + ": goal slot " + domain + "-" +
                          slot + " not in ontology");
      }
      for (const std::string& slot : g.requested)
        if (!ont.count(domain + "-" + slot))
          throw DataError("dialogue " + d.id + ": requested slot " + domain +
                          "-" + slot + " not in ontology");
    }
  }
}

// ---------------------------------------------------------------------------
// Delexicalization. Only three slot families are replaced: phone, reference,
// trainid. The replacement token is the ontology key itself ("hotel-phone",
// "train-trainid", ...). Matching is case-insensitive on the literal surface
// values, longest value first, and only at word boundaries, where word
// characters are alphanumerics plus '-'. Because '-' is a word character the
// emitted placeholders are single words and a second pass leaves the text
// unchanged.
// ---------------------------------------------------------------------------

class Delexicalizer {
 public:
  explicit Delexicalizer(const Ontology& ont) {
    for (const auto& [key, values] : ont) {
      if (!delexicalized_slot(key)) continue;
      for (const std::string& v : values) {
        std::string lv = to_lower(trim(v));
        if (lv.empty()) continue;
        entries_.push_back(Entry{lv, key});
      }
    }
    std::sort(entries_.begin(), entries_.end(),
              [](const Entry& a, const Entry& b) {
                if (a.value.size() != b.value.size())
                  return a.value.size() > b.value.size();
                if (a.value != b.value) return a.value < b.value;
                return a.placeholder < b.placeholder;
              });
    for (std::size_t i = 0; i < entries_.size(); ++i)
      buckets_[static_cast<unsigned char>(entries_[i].value[0])].push_back(i);
  }

  static bool delexicalized_slot(const std::string& key) {
    std::size_t dash = key.find('-');
    if (dash == std::string::npos) return false;
    std::string slot = key.substr(dash + 1);
    return slot == "phone" || slot == "reference" || slot == "trainid";
  }

  std::string apply(const std::string& text) const {
    std::string lower = to_lower(text);
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
      bool boundary_before = i == 0 || !is_word_char(text[i - 1]);
      if (boundary_before) {
        const auto& bucket = buckets_[static_cast<unsigned char>(lower[i])];
        const Entry* hit = nullptr;
        for (std::size_t idx : bucket) {
          const Entry& e = entries_[idx];
          if (lower.compare(i, e.value.size(), e.value) != 0) continue;
          std::size_t end = i + e.value.size();
          if (end < lower.size() && is_word_char(lower[end])) continue;
          hit = &e;
          break;  // entries are longest-first
        }
        if (hit) {
          out += hit->placeholder;
          i += hit->value.size();
          continue;
        }
      }
      out += text[i];
      ++i;
    }
    return out;
  }

  std::size_t value_count() const { return entries_.size(); }

 private:
  struct Entry {
    std::string value;        // lowercase surface form
    std::string placeholder;  // ontology key
  };
  std::vector<Entry> entries_;
  std::array<std::vector<std::size_t>, 256> buckets_;
};

// ---------------------------------------------------------------------------
// Windowing
// ---------------------------------------------------------------------------

inline std::vector<Utterance> merge_consecutive_turns(
    const std::vector<Utterance>& turns) {
  std::vector<Utterance> out;
  for (const Utterance& t : turns) {
    if (!out.empty() && out.back().speaker == t.speaker)
      out.back().raw_text += " " + t.raw_text;
    else
      out.push_back(t);
  }
  return out;
}

// Merge same-speaker runs, delexicalize (when a delexicalizer is given) and
// tokenize every turn, in place.
inline void normalize_dialogue(Dialogue& d, const Delexicalizer* delex) {
  d.turns = merge_consecutive_turns(d.turns);
  for (Utterance& t : d.turns) {
    if (delex) t.raw_text = delex->apply(t.raw_text);
    t.tokens = tokenize(t.raw_text);
  }
}

struct ContextTriple {
  std::string dialogue_id;
  int turn_index = 0;  // index of s2 within the normalized turn sequence
  Utterance s1, u, s2;
};

inline Utterance sentinel_system_turn() {
  Utterance u;
  u.speaker = Speaker::System;
  u.raw_text = kEmptySystemToken;
  u.tokens = {kEmptySystemToken};
  return u;
}

// One triple per user turn that is answered by a system turn. s1 is the
// preceding system turn, or the sentinel when the user turn opens the
// dialogue. Expects a normalized (merged + tokenized) dialogue.
inline std::vector<ContextTriple> make_triples(const Dialogue& d) {
  std::vector<ContextTriple> out;
  const std::vector<Utterance>& T = d.turns;
  for (std::size_t i = 0; i + 1 < T.size(); ++i) {
    if (T[i].speaker != Speaker::User || T[i + 1].speaker != Speaker::System)
      continue;
    ContextTriple tr;
    tr.dialogue_id = d.id;
    tr.turn_index = static_cast<int>(i) + 1;
    tr.s1 = (i > 0 && T[i - 1].speaker == Speaker::System)
                ? T[i - 1]
                : sentinel_system_turn();
    tr.u = T[i];
    tr.s2 = T[i + 1];
    out.push_back(std::move(tr));
  }
  return out;
}

inline std::vector<ContextTriple> make_triples(
    const std::vector<Dialogue>& dialogues) {
  std::vector<ContextTriple> out;
  for (const Dialogue& d : dialogues) {
    std::vector<ContextTriple> ts = make_triples(d);
    out.insert(out.end(), ts.begin(), ts.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Triple JSONL round trip. Text fields hold space-joined tokens, so reading
// them back through tokenize() reproduces the token lists exactly.
// ---------------------------------------------------------------------------

inline std::string triples_to_jsonl(const std::vector<ContextTriple>& triples) {
  std::string out;
  for (const ContextTriple& t : triples) {
    nlohmann::json j{{"dialogue_id", t.dialogue_id},
                     {"turn_index", t.turn_index},
                     {"s1", detokenize(t.s1.tokens)},
                     {"u", detokenize(t.u.tokens)},
                     {"s2", detokenize(t.s2.tokens)}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

inline std::vector<ContextTriple> triples_from_jsonl(const std::string& text) {
  std::vector<ContextTriple> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError("triple jsonl line " + std::to_string(lineno) + ": " +
                      e.what());
    }
    ContextTriple t;
    t.dialogue_id = j.at("dialogue_id").get<std::string>();
    t.turn_index = j.at("turn_index").get<int>();
    auto fill = [&](Utterance& u, const char* key, Speaker sp) {
      u.speaker = sp;
      u.raw_text = j.at(key).get<std::string>();
      u.tokens = tokenize(u.raw_text);
    };
    fill(t.s1, "s1", Speaker::System);
    fill(t.u, "u", Speaker::User);
    fill(t.s2, "s2", Speaker::System);
    out.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Corpus split
// ---------------------------------------------------------------------------

struct SplitSpec {
  bool has_manifest = false;
  std::vector<std::string> dev_ids, test_ids;  // manifest mode
  std::uint64_t seed = 0;                      // seeded mode
  int dev_size = 1000, test_size = 1000;

  static SplitSpec from_json(const nlohmann::json& j) {
    SplitSpec s;
    if (j.contains("dev") || j.contains("test")) {
      if (!j.contains("dev") || !j.contains("test"))
        throw DataError("split manifest needs both dev and test id lists");
      s.has_manifest = true;
      s.dev_ids = j["dev"].get<std::vector<std::string>>();
      s.test_ids = j["test"].get<std::vector<std::string>>();
    }
    if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("dev_size")) s.dev_size = j["dev_size"].get<int>();
    if (j.contains("test_size")) s.test_size = j["test_size"].get<int>();
    return s;
  }

  static SplitSpec load(const std::string& path) {
    try {
      return from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError("parse error in " + path + ": " + e.what());
    }
  }
};

struct CorpusSplit {
  std::vector<Dialogue> train, dev, test;

  // The realized manifest: feeding this back reproduces the split exactly.
  nlohmann::json manifest_json() const {
    auto ids = [](const std::vector<Dialogue>& v) {
      std::vector<std::string> out;
      out.reserve(v.size());
      for (const Dialogue& d : v) out.push_back(d.id);
      return out;
    };
    return nlohmann::json{{"train", ids(train)}, {"dev", ids(dev)},
                          {"test", ids(test)}};
  }
};

inline CorpusSplit split_corpus(const std::vector<Dialogue>& dialogues,
                                const SplitSpec& spec) {
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < dialogues.size(); ++i)
    by_id[dialogues[i].id] = i;

  CorpusSplit out;
  if (spec.has_manifest) {
    std::unordered_set<std::string> held_out;
    auto pick = [&](const std::vector<std::string>& ids,
                    std::vector<Dialogue>& dst, const char* name) {
      for (const std::string& id : ids) {
        auto it = by_id.find(id);
        if (it == by_id.end())
          throw DataError(std::string("split manifest ") + name + " id not in corpus: " + id);
        if (!held_out.insert(id).second)
          throw DataError("split manifest lists id twice: " + id);
        dst.push_back(dialogues[it->second]);
      }
    };
    pick(spec.dev_ids, out.dev, "dev");
    pick(spec.test_ids, out.test, "test");
    for (const Dialogue& d : dialogues)
      if (!held_out.count(d.id)) out.train.push_back(d);
    return out;
  }

  int n = static_cast<int>(dialogues.size());
  if (spec.dev_size < 0 || spec.test_size < 0 ||
      spec.dev_size + spec.test_size >= n)
    throw DataError("split sizes leave no training dialogues (corpus " +
                    std::to_string(n) + ", dev " + std::to_string(spec.dev_size) +
                    ", test " + std::to_string(spec.test_size) + ")");

  std::vector<std::string> ids;
  ids.reserve(dialogues.size());
  for (const Dialogue& d : dialogues) ids.push_back(d.id);
  std::sort(ids.begin(), ids.end());
  Rng rng(spec.seed);
  shuffle_in_place(ids, rng);

  std::unordered_set<std::string> dev_set(ids.begin(), ids.begin() + spec.dev_size);
  std::unordered_set<std::string> test_set(ids.begin() + spec.dev_size,
                                           ids.begin() + spec.dev_size + spec.test_size);
  // Members of each split keep corpus-id order so artifacts are stable.
  std::vector<std::string> sorted_ids = ids;
  std::sort(sorted_ids.begin(), sorted_ids.end());
  for (const std::string& id : sorted_ids) {
    const Dialogue& d = dialogues[by_id[id]];
    if (dev_set.count(id))
      out.dev.push_back(d);
    else if (test_set.count(id))
      out.test.push_back(d);
    else
      out.train.push_back(d);
  }
  return out;
}

}  // namespace exdial
