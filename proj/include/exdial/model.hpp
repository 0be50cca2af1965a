#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "exdial/autodiff.hpp"
#include "exdial/common.hpp"
#include "exdial/corpus.hpp"
#include "exdial/text.hpp"

namespace exdial {

enum class Arch { Hred, ExemplarHred };

inline const char* arch_name(Arch a) {
  return a == Arch::Hred ? "hred" : "exemplar";
}

inline Arch parse_arch(const std::string& s) {
  if (s == "hred") return Arch::Hred;
  if (s == "exemplar" || s == "exemplar-hred") return Arch::ExemplarHred;
  throw ConfigError("unknown architecture: " + s);
}

struct ModelConfig {
  int embedding_dim = 256;
  int hidden_dim = 512;
  double dropout = 0.3;
  int max_decode_len = 50;
  Arch arch = Arch::Hred;
  bool share_encoders = true;  // utterance and exemplar encoders share params
  std::uint64_t seed = 0;

  void validate() const {
    if (embedding_dim <= 0 || hidden_dim <= 0)
      throw ConfigError("embedding_dim and hidden_dim must be positive");
    if (dropout < 0.0 || dropout >= 1.0)
      throw ConfigError("dropout must be in [0,1)");
    if (max_decode_len <= 0) throw ConfigError("max_decode_len must be positive");
  }
};

struct GruParams {
  Tensor Wz, Wr, Wh;  // H x In
  Tensor Uz, Ur, Uh;  // H x H
  Tensor bz, br, bh;  // H
  int input_size = 0, hidden_size = 0;
};

inline void fill_uniform(const Tensor& t, Rng& rng, double lo, double hi) {
  for (double& v : t->value) v = uniform_range(rng, lo, hi);
}

inline GruParams make_gru_params(int input_size, int hidden_size, Rng& rng) {
  GruParams p;
  p.input_size = input_size;
  p.hidden_size = hidden_size;
  auto mk = [&](int r, int c) {
    Tensor t = make_tensor({r, c}, true);
    fill_uniform(t, rng, -0.08, 0.08);
    return t;
  };
  auto mkv = [&](int n) {
    Tensor t = make_tensor({n}, true);
    fill_uniform(t, rng, -0.08, 0.08);
    return t;
  };
  p.Wz = mk(hidden_size, input_size);
  p.Wr = mk(hidden_size, input_size);
  p.Wh = mk(hidden_size, input_size);
  p.Uz = mk(hidden_size, hidden_size);
  p.Ur = mk(hidden_size, hidden_size);
  p.Uh = mk(hidden_size, hidden_size);
  p.bz = mkv(hidden_size);
  p.br = mkv(hidden_size);
  p.bh = mkv(hidden_size);
  return p;
}

// All trainable tensors for one model. When encoders are shared (the
// default), `exemplar_encoder` aliases `encoder` and is not listed twice.
struct ParamSet {
  ModelConfig config;
  int vocab_size = 0;
  Tensor embedding;  // V x E, shared by encoders and decoder input
  GruParams encoder;
  GruParams exemplar_encoder;
  GruParams context;  // H -> H
  GruParams decoder;  // E -> H
  Tensor W_out, b_out;    // V x H, V
  Tensor W_init, b_init;  // H x H, H

  bool has_separate_exemplar_encoder() const {
    return config.arch == Arch::ExemplarHred && !config.share_encoders;
  }

  std::vector<std::pair<std::string, Tensor>> named() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("embedding", embedding);
    auto add_gru = [&](const std::string& prefix, const GruParams& g) {
      out.emplace_back(prefix + ".Wz", g.Wz);
      out.emplace_back(prefix + ".Wr", g.Wr);
      out.emplace_back(prefix + ".Wh", g.Wh);
      out.emplace_back(prefix + ".Uz", g.Uz);
      out.emplace_back(prefix + ".Ur", g.Ur);
      out.emplace_back(prefix + ".Uh", g.Uh);
      out.emplace_back(prefix + ".bz", g.bz);
      out.emplace_back(prefix + ".br", g.br);
      out.emplace_back(prefix + ".bh", g.bh);
    };
    add_gru("encoder", encoder);
    if (has_separate_exemplar_encoder()) add_gru("exemplar_encoder", exemplar_encoder);
    add_gru("context", context);
    add_gru("decoder", decoder);
    out.emplace_back("W_out", W_out);
    out.emplace_back("b_out", b_out);
    out.emplace_back("W_init", W_init);
    out.emplace_back("b_init", b_init);
    return out;
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : named()) n += t->numel();
    return n;
  }
};

inline ParamSet init_params(const ModelConfig& cfg, int vocab_size) {
  cfg.validate();
  if (vocab_size <= 4) throw ConfigError("vocabulary too small for a model");
  Rng rng(cfg.seed);
  ParamSet p;
  p.config = cfg;
  p.vocab_size = vocab_size;
  int E = cfg.embedding_dim, H = cfg.hidden_dim, V = vocab_size;

  p.embedding = make_tensor({V, E}, true);
  fill_uniform(p.embedding, rng, -0.08, 0.08);
  p.encoder = make_gru_params(E, H, rng);
  p.exemplar_encoder =
      p.has_separate_exemplar_encoder() ? make_gru_params(E, H, rng) : p.encoder;
  p.context = make_gru_params(H, H, rng);
  p.decoder = make_gru_params(E, H, rng);
  p.W_out = make_tensor({V, H}, true);
  fill_uniform(p.W_out, rng, -0.08, 0.08);
  p.b_out = make_tensor({V}, true);
  fill_uniform(p.b_out, rng, -0.08, 0.08);
  p.W_init = make_tensor({H, H}, true);
  fill_uniform(p.W_init, rng, -0.08, 0.08);
  p.b_init = make_tensor({H}, true);
  fill_uniform(p.b_init, rng, -0.08, 0.08);
  return p;
}

// ---------------------------------------------------------------------------
// Forward graph pieces
// ---------------------------------------------------------------------------

// z = sigma(Wz x + Uz h + bz); r = sigma(Wr x + Ur h + br);
// hc = tanh(Wh x + Uh (r.h) + bh); h' = (1-z).h + z.hc
inline Tensor gru_step(Tape& tape, const Tensor& x, const Tensor& h,
                       const GruParams& p) {
  Tensor z = tape.sigmoid(
      tape.add(tape.add(tape.matmul(p.Wz, x), tape.matmul(p.Uz, h)), p.bz));
  Tensor r = tape.sigmoid(
      tape.add(tape.add(tape.matmul(p.Wr, x), tape.matmul(p.Ur, h)), p.br));
  Tensor hc = tape.tanh(tape.add(
      tape.add(tape.matmul(p.Wh, x), tape.matmul(p.Uh, tape.mul(r, h))), p.bh));
  // (1-z).h + z.hc, written as h + z.(hc-h)
  return tape.add(h, tape.mul(z, tape.sub(hc, h)));
}

// Runs a GRU over embedded token ids from a zero state; returns final state.
inline Tensor encode_utterance(Tape& tape, const std::vector<int>& ids,
                               const ParamSet& params, const GruParams& gru) {
  if (ids.empty()) throw NumericError("encode_utterance: empty sequence");
  Tensor h = make_tensor({gru.hidden_size});
  for (int id : ids) {
    Tensor x = tape.embedding_row(params.embedding, id);
    h = gru_step(tape, x, h, gru);
  }
  return h;
}

// Runs the context GRU over an ordered list of utterance vectors.
inline Tensor encode_context(Tape& tape, const std::vector<Tensor>& vectors,
                             const ParamSet& params) {
  if (vectors.empty()) throw NumericError("encode_context: empty sequence");
  Tensor h = make_tensor({params.context.hidden_size});
  for (const Tensor& v : vectors) h = gru_step(tape, v, h, params.context);
  return h;
}

struct EncodedTriple {
  std::string dialogue_id;
  int turn_index = 0;
  std::vector<int> s1, u, s2;  // vocab ids, each ending in <eos>
};

inline EncodedTriple encode_triple(const ContextTriple& t,
                                   const Vocabulary& vocab) {
  EncodedTriple e;
  e.dialogue_id = t.dialogue_id;
  e.turn_index = t.turn_index;
  e.s1 = vocab.encode(t.s1.tokens);
  e.u = vocab.encode(t.u.tokens);
  e.s2 = vocab.encode(t.s2.tokens);
  return e;
}

// Builds the context vector for a triple. The exemplar encoding, when
// present, extends the context sequence as a third timestep.
inline Tensor context_vector(Tape& tape, const EncodedTriple& t,
                             const std::optional<std::vector<int>>& exemplar,
                             const ParamSet& params, Rng& rng, bool training) {
  const ModelConfig& cfg = params.config;
  if (cfg.arch == Arch::ExemplarHred && !exemplar.has_value())
    throw ConfigError("exemplar architecture needs an exemplar sequence");
  if (cfg.arch == Arch::Hred && exemplar.has_value())
    throw ConfigError("baseline architecture takes no exemplar");

  auto enc = [&](const std::vector<int>& ids, const GruParams& gru) {
    Tensor v = encode_utterance(tape, ids, params, gru);
    return tape.dropout(v, cfg.dropout, rng, training);
  };
  std::vector<Tensor> seq;
  seq.push_back(enc(t.s1, params.encoder));
  seq.push_back(enc(t.u, params.encoder));
  if (exemplar.has_value())
    seq.push_back(enc(*exemplar, params.exemplar_encoder));
  return encode_context(tape, seq, params);
}

inline Tensor decoder_initial_state(Tape& tape, const Tensor& ctx,
                                    const ParamSet& params) {
  return tape.tanh(
      tape.add(tape.matmul(params.W_init, ctx), params.b_init));
}

// Teacher-forced mean token cross-entropy over s2.
inline Tensor forward_loss(Tape& tape, const EncodedTriple& t,
                           const std::optional<std::vector<int>>& exemplar,
                           const ParamSet& params, Rng& rng, bool training) {
  if (t.s2.empty()) throw NumericError("forward_loss: empty target");
  Tensor ctx = context_vector(tape, t, exemplar, params, rng, training);
  Tensor h = decoder_initial_state(tape, ctx, params);

  std::vector<Tensor> losses;
  int prev = Vocabulary::kSos;
  for (int target : t.s2) {
    Tensor x = tape.embedding_row(params.embedding, prev);
    x = tape.dropout(x, params.config.dropout, rng, training);
    h = gru_step(tape, x, h, params.decoder);
    Tensor logits = tape.add(tape.matmul(params.W_out, h), params.b_out);
    losses.push_back(tape.softmax_cross_entropy(logits, target));
    prev = target;
  }
  return tape.mean_of(losses);
}

// Greedy decode: first max wins on ties, stop at <eos> or the length cap.
// Returned ids exclude <sos> and <eos>.
inline std::vector<int> decode_greedy(Tape& tape, const Tensor& ctx,
                                      const ParamSet& params) {
  Tensor h = decoder_initial_state(tape, ctx, params);
  std::vector<int> out;
  int prev = Vocabulary::kSos;
  for (int step = 0; step < params.config.max_decode_len; ++step) {
    Tensor x = tape.embedding_row(params.embedding, prev);
    h = gru_step(tape, x, h, params.decoder);
    Tensor logits = tape.add(tape.matmul(params.W_out, h), params.b_out);
    int best = 0;
    for (int i = 1; i < params.vocab_size; ++i)
      if (logits->value[static_cast<std::size_t>(i)] >
          logits->value[static_cast<std::size_t>(best)])
        best = i;
    if (best == Vocabulary::kEos) break;
    out.push_back(best);
    prev = best;
  }
  return out;
}

// Inference-mode response generation (no recording, no dropout).
inline std::vector<int> generate_response(
    const EncodedTriple& t, const std::optional<std::vector<int>>& exemplar,
    const ParamSet& params) {
  Tape tape(false);
  Rng rng(0);  // dropout is off; never drawn from
  Tensor ctx = context_vector(tape, t, exemplar, params, rng, false);
  return decode_greedy(tape, ctx, params);
}

}  // namespace exdial
