#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "exdial/common.hpp"
#include "exdial/model.hpp"

namespace exdial {

struct TrainConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int max_epochs = 50;
  int patience = 10;
  int batch_size = 32;
  double clip_norm = 5.0;
  std::uint64_t seed = 0;
  bool restore_best = true;  // load the best-dev weights back before returning

  void validate() const {
    if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
    if (max_epochs <= 0) throw ConfigError("max_epochs must be positive");
    if (patience <= 0 || patience >= max_epochs)
      throw ConfigError("patience must be in [1, max_epochs)");
    if (batch_size <= 0) throw ConfigError("batch_size must be positive");
    if (clip_norm <= 0.0) throw ConfigError("clip_norm must be positive");
  }
};

struct AdamState {
  std::vector<std::vector<double>> m, v;  // parallel to the tensor list
  std::uint64_t t = 0;

  static AdamState init(const std::vector<Tensor>& tensors) {
    AdamState s;
    for (const Tensor& t : tensors) {
      s.m.emplace_back(t->numel(), 0.0);
      s.v.emplace_back(t->numel(), 0.0);
    }
    return s;
  }

  static AdamState init(const ParamSet& params) {
    return init(tensors_of(params));
  }

  static std::vector<Tensor> tensors_of(const ParamSet& params) {
    std::vector<Tensor> out;
    for (const auto& [name, t] : params.named()) out.push_back(t);
    return out;
  }
};

// Scales all gradients so the global L2 norm is at most clip_norm.
// Returns the pre-clip norm. Non-finite gradients abort the step.
inline double clip_gradients(const ParamSet& params, double clip_norm) {
  auto named = params.named();
  double sq = 0.0;
  for (const auto& [name, t] : named)
    for (double g : t->grad) {
      if (!std::isfinite(g))
        throw NumericError("non-finite gradient in " + name);
      sq += g * g;
    }
  double norm = std::sqrt(sq);
  if (norm > clip_norm) {
    double s = clip_norm / norm;
    for (const auto& [name, t] : named)
      for (double& g : t->grad) g *= s;
    // Post-condition, checked explicitly so it also holds in release builds.
    double check = 0.0;
    for (const auto& [name, t] : named)
      for (double g : t->grad) check += g * g;
    if (std::sqrt(check) > clip_norm * (1.0 + 1e-9))
      throw NumericError("gradient clipping failed to bound the norm");
  }
  return norm;
}

// Standard bias-corrected Adam update; reads and consumes current gradients.
inline void adam_step(const std::vector<Tensor>& tensors, AdamState& state,
                      const TrainConfig& cfg) {
  if (state.m.size() != tensors.size())
    throw NumericError("adam state does not match parameter set");
  state.t += 1;
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t p = 0; p < tensors.size(); ++p) {
    Node& t = *tensors[p];
    std::vector<double>& m = state.m[p];
    std::vector<double>& v = state.v[p];
    if (m.size() != t.numel())
      throw NumericError("adam buffer shape mismatch");
    for (std::size_t i = 0; i < t.numel(); ++i) {
      double g = t.grad[i];
      if (!std::isfinite(g)) throw NumericError("non-finite gradient");
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      double mh = m[i] / bc1;
      double vh = v[i] / bc2;
      t.value[i] -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.eps);
    }
  }
}

inline void adam_step(const ParamSet& params, AdamState& state,
                      const TrainConfig& cfg) {
  adam_step(AdamState::tensors_of(params), state, cfg);
}

inline void zero_gradients(const ParamSet& params) {
  for (const auto& [name, t] : params.named()) zero_grad(t);
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double dev_loss = 0.0;
  double dev_ppl = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;
  double best_dev_loss = std::numeric_limits<double>::infinity();
  std::string stop_reason;  // "early_stopping" or "max_epochs"

  nlohmann::json to_json() const {
    nlohmann::json eps = nlohmann::json::array();
    for (const EpochStats& e : epochs)
      eps.push_back({{"epoch", e.epoch},
                     {"train_loss", e.train_loss},
                     {"dev_loss", e.dev_loss},
                     {"dev_ppl", e.dev_ppl}});
    return nlohmann::json{{"epochs", eps},
                          {"best_epoch", best_epoch},
                          {"best_dev_loss", best_dev_loss},
                          {"stop_reason", stop_reason}};
  }
};

// Precomputed exemplar token ids, parallel to the triple lists handed to
// train_model. Retrieval is frozen before epoch 1.
struct ExemplarCache {
  std::vector<std::vector<int>> train_ex, dev_ex;
};

// Token-weighted dev NLL and its perplexity, dropout off.
inline std::pair<double, double> evaluate_dev(
    const ParamSet& params, const std::vector<EncodedTriple>& dev,
    const ExemplarCache* cache) {
  double nll = 0.0;
  std::size_t tokens = 0;
  Rng rng(0);  // dropout off; unused
  for (std::size_t i = 0; i < dev.size(); ++i) {
    Tape tape(false);
    std::optional<std::vector<int>> ex;
    if (params.config.arch == Arch::ExemplarHred) ex = cache->dev_ex[i];
    Tensor loss = forward_loss(tape, dev[i], ex, params, rng, false);
    nll += loss->value[0] * static_cast<double>(dev[i].s2.size());
    tokens += dev[i].s2.size();
  }
  double mean = nll / static_cast<double>(tokens);
  return {mean, std::exp(mean)};
}

// Mini-batch Adam with per-epoch seeded shuffling, dev-loss early stopping
// and best-checkpoint restoration. `first_epoch` and an existing AdamState
// let a saved run continue with the exact RNG streams it would have used,
// so a resumed curve matches an uninterrupted one.
inline TrainHistory train_model(
    ParamSet& params, const std::vector<EncodedTriple>& train_data,
    const std::vector<EncodedTriple>& dev_data, const ExemplarCache* cache,
    const TrainConfig& cfg, AdamState* external_state = nullptr,
    int first_epoch = 1,
    const std::function<void(const EpochStats&)>& on_epoch = {}) {
  cfg.validate();
  if (train_data.empty() || dev_data.empty())
    throw DataError("training needs non-empty train and dev sets");
  if (params.config.arch == Arch::ExemplarHred) {
    if (!cache || cache->train_ex.size() != train_data.size() ||
        cache->dev_ex.size() != dev_data.size())
      throw DataError("exemplar cache missing or misaligned with data");
  }
  for (const auto& [name, t] : params.named())
    for (double v : t->value)
      if (!std::isfinite(v))
        throw NumericError("non-finite parameter in " + name);

  AdamState local_state = AdamState::init(params);
  AdamState& state = external_state ? *external_state : local_state;

  TrainHistory hist;
  std::vector<std::vector<double>> best_values;
  auto snapshot = [&]() {
    best_values.clear();
    for (const auto& [name, t] : params.named()) best_values.push_back(t->value);
  };
  auto restore = [&]() {
    auto named = params.named();
    for (std::size_t i = 0; i < named.size(); ++i)
      named[i].second->value = best_values[i];
  };

  int bad_epochs = 0;
  hist.stop_reason = "max_epochs";
  for (int epoch = first_epoch; epoch <= cfg.max_epochs; ++epoch) {
    // One RNG stream per epoch, derived from (seed, epoch): batching and
    // dropout draws depend only on the epoch number, not on prior epochs.
    Rng erng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch), 0x7261696eULL));
    std::vector<std::size_t> order(train_data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_in_place(order, erng);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t end = std::min(order.size(),
                                 start + static_cast<std::size_t>(cfg.batch_size));
      Tape tape;
      zero_gradients(params);
      std::vector<Tensor> losses;
      for (std::size_t k = start; k < end; ++k) {
        std::size_t i = order[k];
        std::optional<std::vector<int>> ex;
        if (params.config.arch == Arch::ExemplarHred) ex = cache->train_ex[i];
        losses.push_back(forward_loss(tape, train_data[i], ex, params, erng, true));
      }
      Tensor batch_loss = tape.mean_of(losses);
      if (!std::isfinite(batch_loss->value[0]))
        throw NumericError("non-finite training loss at epoch " +
                           std::to_string(epoch));
      tape.backward(batch_loss);
      clip_gradients(params, cfg.clip_norm);
      adam_step(params, state, cfg);
      loss_sum += batch_loss->value[0] * static_cast<double>(end - start);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(train_data.size());
    auto [dev_loss, dev_ppl] = evaluate_dev(params, dev_data, cache);
    stats.dev_loss = dev_loss;
    stats.dev_ppl = dev_ppl;
    hist.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);

    if (dev_loss < hist.best_dev_loss) {
      hist.best_dev_loss = dev_loss;
      hist.best_epoch = epoch;
      snapshot();
      bad_epochs = 0;
    } else {
      ++bad_epochs;
      if (bad_epochs >= cfg.patience) {
        hist.stop_reason = "early_stopping";
        break;
      }
    }
  }

  if (cfg.restore_best && !best_values.empty()) restore();
  return hist;
}

// ---------------------------------------------------------------------------
// Checkpoints: versioned binary container, little-endian 64-bit floats.
// Layout: magic, version, model config, vocab size + hash, epoch, named
// parameter tensors in declared order, then optional Adam state.
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[] = "EXDLCKP1";

struct Checkpoint {
  ParamSet params;
  AdamState adam;
  bool has_adam = false;
  int epoch = 0;
  std::uint64_t vocab_hash = 0;
};

inline void save_checkpoint(const std::string& path, const ParamSet& params,
                            std::uint64_t vocab_hash, int epoch,
                            const AdamState* adam = nullptr) {
  ByteWriter w;
  for (const char* p = kCheckpointMagic; *p; ++p)
    w.put_u8(static_cast<std::uint8_t>(*p));
  w.put_u32(1);  // version
  const ModelConfig& c = params.config;
  w.put_u8(c.arch == Arch::ExemplarHred ? 1 : 0);
  w.put_u8(c.share_encoders ? 1 : 0);
  w.put_i32(c.embedding_dim);
  w.put_i32(c.hidden_dim);
  w.put_f64(c.dropout);
  w.put_i32(c.max_decode_len);
  w.put_u64(c.seed);
  w.put_i32(params.vocab_size);
  w.put_u64(vocab_hash);
  w.put_i32(epoch);

  auto named = params.named();
  w.put_u32(static_cast<std::uint32_t>(named.size()));
  for (const auto& [name, t] : named) {
    w.put_str(name);
    w.put_u8(static_cast<std::uint8_t>(t->shape.size()));
    for (int d : t->shape) w.put_i32(d);
    w.put_f64s(t->value);
  }
  w.put_u8(adam ? 1 : 0);
  if (adam) {
    w.put_u64(adam->t);
    for (std::size_t i = 0; i < named.size(); ++i) {
      w.put_f64s(adam->m[i]);
      w.put_f64s(adam->v[i]);
    }
  }
  write_file_atomic(path, w.str());
}

inline Checkpoint load_checkpoint(
    const std::string& path,
    std::optional<std::uint64_t> expected_vocab_hash = std::nullopt) {
  ByteReader r(read_file(path));
  for (const char* p = kCheckpointMagic; *p; ++p)
    if (r.get_u8() != static_cast<std::uint8_t>(*p))
      throw DataError("not a checkpoint file: " + path);
  std::uint32_t version = r.get_u32();
  if (version != 1)
    throw DataError("unsupported checkpoint version " + std::to_string(version));

  ModelConfig cfg;
  cfg.arch = r.get_u8() ? Arch::ExemplarHred : Arch::Hred;
  cfg.share_encoders = r.get_u8() != 0;
  cfg.embedding_dim = r.get_i32();
  cfg.hidden_dim = r.get_i32();
  cfg.dropout = r.get_f64();
  cfg.max_decode_len = r.get_i32();
  cfg.seed = r.get_u64();
  int vocab_size = r.get_i32();

  Checkpoint ck;
  ck.vocab_hash = r.get_u64();
  if (expected_vocab_hash && *expected_vocab_hash != ck.vocab_hash)
    throw DataError("checkpoint was trained with a different vocabulary: " + path);
  ck.epoch = r.get_i32();

  ck.params = init_params(cfg, vocab_size);
  auto named = ck.params.named();
  std::uint32_t count = r.get_u32();
  if (count != named.size())
    throw DataError("checkpoint parameter count mismatch in " + path);
  for (auto& [name, t] : named) {
    std::string stored = r.get_str();
    if (stored != name)
      throw DataError("checkpoint parameter order mismatch: expected " + name +
                      ", found " + stored);
    std::uint8_t rank = r.get_u8();
    std::vector<int> shape(rank);
    for (std::uint8_t i = 0; i < rank; ++i) shape[i] = r.get_i32();
    if (shape != t->shape)
      throw DataError("checkpoint shape mismatch at " + name);
    t->value = r.get_f64s(t->numel());
  }
  ck.has_adam = r.get_u8() != 0;
  if (ck.has_adam) {
    ck.adam = AdamState::init(ck.params);
    ck.adam.t = r.get_u64();
    for (std::size_t i = 0; i < named.size(); ++i) {
      ck.adam.m[i] = r.get_f64s(named[i].second->numel());
      ck.adam.v[i] = r.get_f64s(named[i].second->numel());
    }
  }
  if (!r.at_end()) throw DataError("trailing bytes in checkpoint " + path);
  return ck;
}

}  // namespace exdial
