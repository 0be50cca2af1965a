#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "exdial/exdial.hpp"

namespace testutil {

// Unique scratch directory, removed on destruction.
struct TempDir {
  std::filesystem::path path;

  TempDir() {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("exdial_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

inline std::vector<std::string> toks(const std::string& text) {
  return exdial::tokenize(text);
}

// Deterministic unit-vector embedding file covering `tokens`.
inline std::string embedding_file_text(const std::vector<std::string>& tokens,
                                       int dim, std::uint64_t seed = 11) {
  std::string out =
      std::to_string(tokens.size()) + " " + std::to_string(dim) + "\n";
  for (const std::string& t : tokens) {
    exdial::Rng rng(exdial::fnv1a64(t) ^ seed);
    std::vector<double> v(static_cast<std::size_t>(dim));
    double sq = 0.0;
    for (double& x : v) {
      x = exdial::gaussian(rng);
      sq += x * x;
    }
    out += t;
    char buf[32];
    for (double x : v) {
      std::snprintf(buf, sizeof(buf), " %.12g", x / std::sqrt(sq));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

// Minimal well-formed dialogue object for corpus fixtures.
inline nlohmann::json dialogue_json(
    const std::string& id,
    const std::vector<std::pair<std::string, std::string>>& turns,
    const nlohmann::json& goal = nlohmann::json()) {
  nlohmann::json d{{"dialogue_id", id}};
  nlohmann::json jt = nlohmann::json::array();
  for (const auto& [spk, text] : turns)
    jt.push_back({{"speaker", spk}, {"text", text}});
  d["turns"] = jt;
  if (!goal.is_null()) d["goal"] = goal;
  return d;
}

}  // namespace testutil
