#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "exdial/common.hpp"

namespace exdial {

// ---------------------------------------------------------------------------
// Tokenization. Lowercase, split on whitespace, then split off punctuation:
// a non-alphanumeric character stays inside a token only when it sits between
// two alphanumerics ("15:08", "12.50", "don't"); otherwise it becomes its own
// token. '-' counts as a word character so placeholder tokens like
// "hotel-phone" survive intact. detokenize is a plain space join, so
// tokenize(detokenize(toks)) == toks.
// ---------------------------------------------------------------------------

inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string lowered = to_lower(text);
  for (const std::string& chunk : split_ws(lowered)) {
    std::string cur;
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      char c = chunk[i];
      if (is_word_char(c)) {
        cur += c;
        continue;
      }
      bool interior = i > 0 && i + 1 < chunk.size() &&
                      std::isalnum(static_cast<unsigned char>(chunk[i - 1])) != 0 &&
                      std::isalnum(static_cast<unsigned char>(chunk[i + 1])) != 0;
      if (interior) {
        cur += c;
      } else {
        if (!cur.empty()) out.push_back(cur);
        cur.clear();
        out.push_back(std::string(1, c));
      }
    }
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

inline std::string detokenize(const std::vector<std::string>& tokens) {
  return join(tokens, " ");
}

// ---------------------------------------------------------------------------
// Vocabulary. Ids 0..3 are reserved: <pad>, <sos>, <eos>, <unk>. Built from
// token counts ordered by (count desc, token asc); min_count filters rare
// tokens and max_size caps total size including the reserved entries.
// ---------------------------------------------------------------------------

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kSos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  Vocabulary() {
    for (const char* t : {"<pad>", "<sos>", "<eos>", "<unk>"}) add_token(t);
  }

  static Vocabulary build(const std::vector<std::vector<std::string>>& texts,
                          int min_count = 3, int max_size = 20000) {
    std::unordered_map<std::string, std::int64_t> counts;
    for (const auto& toks : texts)
      for (const auto& t : toks) ++counts[t];

    std::vector<std::pair<std::string, std::int64_t>> items(counts.begin(),
                                                            counts.end());
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });

    Vocabulary v;
    for (const auto& [tok, cnt] : items) {
      if (cnt < min_count) break;
      if (static_cast<int>(v.size()) >= max_size) break;
      v.add_token(tok);
    }
    return v;
  }

  int id_of(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
  }

  const std::string& token_of(int id) const {
    if (id < 0 || id >= static_cast<int>(tokens_.size()))
      throw DataError("token id out of range: " + std::to_string(id));
    return tokens_[static_cast<std::size_t>(id)];
  }

  bool contains(const std::string& token) const {
    return index_.count(token) != 0;
  }

  std::size_t size() const { return tokens_.size(); }

  // Maps tokens to ids (OOV -> <unk>) and appends <eos>.
  std::vector<int> encode(const std::vector<std::string>& tokens) const {
    std::vector<int> ids;
    ids.reserve(tokens.size() + 1);
    for (const auto& t : tokens) ids.push_back(id_of(t));
    ids.push_back(kEos);
    return ids;
  }

  // Inverse of encode: stops at the first <eos>, skips nothing else.
  std::vector<std::string> decode(const std::vector<int>& ids) const {
    std::vector<std::string> out;
    for (int id : ids) {
      if (id == kEos) break;
      out.push_back(token_of(id));
    }
    return out;
  }

  // Order-sensitive content hash used to pair checkpoints with the exact
  // vocabulary they were trained against.
  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& t : tokens_) {
      h = fnv1a64(t, h);
      h = fnv1a64("\x1f", h);
    }
    return h;
  }

  nlohmann::json to_json() const {
    return nlohmann::json{{"tokens", tokens_}};
  }

  static Vocabulary from_json(const nlohmann::json& j) {
    if (!j.contains("tokens") || !j["tokens"].is_array())
      throw DataError("vocabulary json missing tokens array");
    std::vector<std::string> toks = j["tokens"].get<std::vector<std::string>>();
    static const std::vector<std::string> reserved = {"<pad>", "<sos>",
                                                      "<eos>", "<unk>"};
    if (toks.size() < reserved.size() ||
        !std::equal(reserved.begin(), reserved.end(), toks.begin()))
      throw DataError("vocabulary json missing reserved token prefix");
    Vocabulary v;
    for (std::size_t i = reserved.size(); i < toks.size(); ++i)
      v.add_token(toks[i]);
    return v;
  }

  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  void add_token(const std::string& t) {
    if (index_.count(t)) throw DataError("duplicate vocabulary token: " + t);
    index_[t] = static_cast<int>(tokens_.size());
    tokens_.push_back(t);
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// ---------------------------------------------------------------------------
// Pre-trained word vectors in the classic text format: optional "count dim"
// header (auto-detected), then one "token v1 .. vd" line per word. Rows are
// aligned to a vocabulary; tokens missing from the file get the mean of the
// matched rows.
// ---------------------------------------------------------------------------

class EmbeddingTable {
 public:
  int dim() const { return dim_; }
  std::size_t rows() const { return vecs_.size(); }
  std::size_t matched_count() const { return matched_count_; }

  const std::vector<double>& vector_of(int id) const {
    if (id < 0 || id >= static_cast<int>(vecs_.size()))
      throw DataError("embedding id out of range");
    return vecs_[static_cast<std::size_t>(id)];
  }

  bool matched(int id) const {
    return matched_.at(static_cast<std::size_t>(id));
  }

  static EmbeddingTable load(const std::string& path, const Vocabulary& vocab) {
    std::istringstream in(read_file(path));
    std::string line;
    EmbeddingTable table;
    table.matched_.assign(vocab.size(), false);

    bool first = true;
    std::unordered_map<std::string, std::vector<double>> found;
    while (std::getline(in, line)) {
      line = trim(line);
      if (line.empty()) continue;
      std::vector<std::string> parts = split_ws(line);
      if (first) {
        first = false;
        // Header form: exactly two numeric fields.
        if (parts.size() == 2 && is_number(parts[0]) && is_number(parts[1]))
          continue;
      }
      if (parts.size() < 2) throw DataError("malformed embedding line: " + line);
      int d = static_cast<int>(parts.size()) - 1;
      if (table.dim_ == 0)
        table.dim_ = d;
      else if (d != table.dim_)
        throw DataError("inconsistent embedding dimension at token " + parts[0]);
      if (!vocab.contains(parts[0])) continue;
      std::vector<double> v(static_cast<std::size_t>(d));
      for (int i = 0; i < d; ++i) {
        v[static_cast<std::size_t>(i)] = parse_double(parts[static_cast<std::size_t>(i) + 1]);
        if (!std::isfinite(v[static_cast<std::size_t>(i)]))
          throw DataError("non-finite embedding value for token " + parts[0]);
      }
      found[parts[0]] = std::move(v);
    }
    if (table.dim_ == 0) throw DataError("no embedding rows read from " + path);

    std::vector<double> mean(static_cast<std::size_t>(table.dim_), 0.0);
    for (const auto& [tok, v] : found)
      for (int i = 0; i < table.dim_; ++i) mean[static_cast<std::size_t>(i)] += v[static_cast<std::size_t>(i)];
    if (!found.empty())
      for (double& x : mean) x /= static_cast<double>(found.size());

    table.vecs_.assign(vocab.size(), mean);
    for (std::size_t id = 0; id < vocab.size(); ++id) {
      auto it = found.find(vocab.token_of(static_cast<int>(id)));
      if (it != found.end()) {
        table.vecs_[id] = it->second;
        table.matched_[id] = true;
        ++table.matched_count_;
      }
    }
    return table;
  }

 private:
  static bool is_number(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s)
      if (std::isdigit(static_cast<unsigned char>(c)) == 0) return false;
    return true;
  }

  static double parse_double(const std::string& s) {
    try {
      std::size_t pos = 0;
      double v = std::stod(s, &pos);
      if (pos != s.size()) throw DataError("bad float: " + s);
      return v;
    } catch (const std::invalid_argument&) {
      throw DataError("bad float: " + s);
    } catch (const std::out_of_range&) {
      throw DataError("float out of range: " + s);
    }
  }

  int dim_ = 0;
  std::vector<std::vector<double>> vecs_;
  std::vector<bool> matched_;
  std::size_t matched_count_ = 0;
};

}  // namespace exdial
