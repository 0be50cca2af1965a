#include "helpers.hpp"

using namespace exdial;

namespace {

ModelConfig tiny_config(Arch arch, std::uint64_t seed = 5) {
  ModelConfig cfg;
  cfg.embedding_dim = 4;
  cfg.hidden_dim = 6;
  cfg.dropout = 0.0;
  cfg.max_decode_len = 10;
  cfg.arch = arch;
  cfg.seed = seed;
  return cfg;
}

std::vector<EncodedTriple> tiny_data(int n, std::uint64_t seed, int vocab_size) {
  Rng rng(seed);
  std::vector<EncodedTriple> out;
  for (int i = 0; i < n; ++i) {
    EncodedTriple t;
    t.dialogue_id = "d" + std::to_string(i);
    t.turn_index = 1;
    auto seq = [&](std::size_t len) {
      std::vector<int> ids;
      for (std::size_t k = 0; k < len; ++k)
        ids.push_back(4 + static_cast<int>(bounded_uint(
                              rng, static_cast<std::uint64_t>(vocab_size - 4))));
      ids.push_back(Vocabulary::kEos);
      return ids;
    };
    t.s1 = seq(2);
    t.u = seq(3);
    t.s2 = seq(3);
    out.push_back(t);
  }
  return out;
}

TrainConfig fast_train(int max_epochs, int patience, std::uint64_t seed = 9) {
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.max_epochs = max_epochs;
  cfg.patience = patience;
  cfg.batch_size = 2;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.patience = cfg.max_epochs;  // must be strictly less
  REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.learning_rate = 0.0;
  REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
  REQUIRE_NOTHROW(TrainConfig{}.validate());
}

TEST_CASE("gradient clipping bounds the global norm") {
  ParamSet params = init_params(tiny_config(Arch::Hred), 8);
  for (const auto& [name, t] : params.named())
    std::fill(t->grad.begin(), t->grad.end(), 0.0);

  SECTION("norm under the cap is untouched") {
    params.embedding->grad[0] = 3.0;
    params.embedding->grad[1] = 4.0;  // norm 5 == cap
    double norm = clip_gradients(params, 5.0);
    REQUIRE(norm == 5.0);
    REQUIRE(params.embedding->grad[0] == 3.0);
    REQUIRE(params.embedding->grad[1] == 4.0);
  }

  SECTION("norm over the cap is scaled down to it") {
    params.embedding->grad[0] = 6.0;
    params.decoder.bz->grad[0] = 8.0;  // norm 10
    double norm = clip_gradients(params, 5.0);
    REQUIRE(norm == Catch::Approx(10.0).margin(1e-12));
    REQUIRE(params.embedding->grad[0] == Catch::Approx(3.0).margin(1e-12));
    REQUIRE(params.decoder.bz->grad[0] == Catch::Approx(4.0).margin(1e-12));
    double sq = 0.0;
    for (const auto& [name, t] : params.named())
      for (double g : t->grad) sq += g * g;
    REQUIRE(std::sqrt(sq) <= 5.0 * (1.0 + 1e-9));
  }

  SECTION("non-finite gradients abort") {
    params.embedding->grad[0] = std::numeric_limits<double>::quiet_NaN();
    REQUIRE_THROWS_AS(clip_gradients(params, 5.0), NumericError);
  }
}

TEST_CASE("adam matches two hand-computed steps on a scalar") {
  Tensor p = make_tensor({1}, true);
  p->value[0] = 1.0;
  std::vector<Tensor> tensors{p};
  AdamState state = AdamState::init(tensors);
  TrainConfig cfg;
  cfg.learning_rate = 0.1;

  double m = 0.0, v = 0.0, x = 1.0;
  auto expect_step = [&](double g, int t) {
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    double mh = m / (1.0 - std::pow(0.9, t));
    double vh = v / (1.0 - std::pow(0.999, t));
    x -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
  };

  p->grad[0] = 0.5;
  adam_step(tensors, state, cfg);
  expect_step(0.5, 1);
  REQUIRE(p->value[0] == Catch::Approx(x).margin(1e-15));
  REQUIRE(state.t == 1);

  p->grad[0] = -0.25;
  adam_step(tensors, state, cfg);
  expect_step(-0.25, 2);
  REQUIRE(p->value[0] == Catch::Approx(x).margin(1e-15));
  REQUIRE(state.t == 2);

  AdamState wrong;  // empty buffers
  REQUIRE_THROWS_AS(adam_step(tensors, wrong, cfg), NumericError);
}

TEST_CASE("evaluate_dev is the token-weighted mean of per-triple losses") {
  ParamSet params = init_params(tiny_config(Arch::Hred), 12);
  std::vector<EncodedTriple> dev = tiny_data(5, 31, 12);

  double weighted = 0.0;
  std::size_t tokens = 0;
  Rng rng(0);
  for (const EncodedTriple& t : dev) {
    Tape tape(false);
    weighted += forward_loss(tape, t, std::nullopt, params, rng, false)->value[0] *
                static_cast<double>(t.s2.size());
    tokens += t.s2.size();
  }
  auto [nll, ppl] = evaluate_dev(params, dev, nullptr);
  REQUIRE(nll == Catch::Approx(weighted / static_cast<double>(tokens))
                     .margin(1e-12));
  REQUIRE(ppl == Catch::Approx(std::exp(nll)).margin(1e-12));
}

TEST_CASE("train_model input validation") {
  ParamSet params = init_params(tiny_config(Arch::Hred), 12);
  std::vector<EncodedTriple> data = tiny_data(4, 1, 12);
  REQUIRE_THROWS_AS(train_model(params, {}, data, nullptr, fast_train(4, 2)),
                    DataError);
  REQUIRE_THROWS_AS(train_model(params, data, {}, nullptr, fast_train(4, 2)),
                    DataError);

  ParamSet ex = init_params(tiny_config(Arch::ExemplarHred), 12);
  ExemplarCache misaligned;  // empty caches for non-empty data
  REQUIRE_THROWS_AS(train_model(ex, data, data, &misaligned, fast_train(4, 2)),
                    DataError);
}

TEST_CASE("training reduces loss and records a consistent history") {
  ParamSet params = init_params(tiny_config(Arch::Hred), 12);
  std::vector<EncodedTriple> data = tiny_data(4, 17, 12);

  int callbacks = 0;
  TrainHistory hist =
      train_model(params, data, data, nullptr, fast_train(20, 19),
                  nullptr, 1, [&](const EpochStats&) { ++callbacks; });

  REQUIRE(!hist.epochs.empty());
  REQUIRE(callbacks == static_cast<int>(hist.epochs.size()));
  for (std::size_t i = 0; i < hist.epochs.size(); ++i)
    REQUIRE(hist.epochs[i].epoch == static_cast<int>(i) + 1);
  REQUIRE(hist.epochs.back().train_loss < hist.epochs.front().train_loss);

  double best = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  for (const EpochStats& e : hist.epochs)
    if (e.dev_loss < best) {
      best = e.dev_loss;
      best_epoch = e.epoch;
    }
  REQUIRE(hist.best_epoch == best_epoch);
  REQUIRE(hist.best_dev_loss == best);
  REQUIRE((hist.stop_reason == "early_stopping" ||
           hist.stop_reason == "max_epochs"));

  // restore_best left the weights at the snapshot with the best dev loss
  auto [nll, ppl] = evaluate_dev(params, data, nullptr);
  REQUIRE(nll == Catch::Approx(hist.best_dev_loss).margin(1e-12));

  nlohmann::json j = hist.to_json();
  REQUIRE(j["epochs"].size() == hist.epochs.size());
  REQUIRE(j["best_epoch"] == hist.best_epoch);
}

TEST_CASE("exemplar training consumes the cache") {
  ParamSet params = init_params(tiny_config(Arch::ExemplarHred), 12);
  std::vector<EncodedTriple> data = tiny_data(4, 23, 12);
  ExemplarCache cache;
  for (const EncodedTriple& t : data) {
    cache.train_ex.push_back(t.s2);
    cache.dev_ex.push_back(t.s2);
  }
  TrainHistory hist = train_model(params, data, data, &cache, fast_train(3, 2));
  REQUIRE(!hist.epochs.empty());
  REQUIRE(std::isfinite(hist.best_dev_loss));
}

TEST_CASE("a resumed run reproduces an uninterrupted one bit for bit") {
  std::vector<EncodedTriple> data = tiny_data(6, 41, 12);

  TrainConfig full = fast_train(6, 5);
  full.restore_best = false;
  ParamSet straight = init_params(tiny_config(Arch::Hred), 12);
  TrainHistory hist_full = train_model(straight, data, data, nullptr, full);
  REQUIRE(hist_full.epochs.size() == 6);  // no early stop in this setup

  ParamSet resumed = init_params(tiny_config(Arch::Hred), 12);
  AdamState state = AdamState::init(resumed);
  TrainConfig part1 = fast_train(3, 2);
  part1.restore_best = false;
  TrainHistory h1 = train_model(resumed, data, data, nullptr, part1, &state);
  REQUIRE(h1.epochs.size() == 3);

  TrainConfig part2 = fast_train(6, 5);
  part2.restore_best = false;
  TrainHistory h2 =
      train_model(resumed, data, data, nullptr, part2, &state, 4);
  REQUIRE(h2.epochs.size() == 3);
  REQUIRE(h2.epochs.front().epoch == 4);

  auto a = straight.named();
  auto b = resumed.named();
  for (std::size_t i = 0; i < a.size(); ++i) {
    INFO(a[i].first);
    REQUIRE(a[i].second->value == b[i].second->value);  // exact doubles
  }
  for (int e = 0; e < 3; ++e) {
    REQUIRE(h2.epochs[static_cast<std::size_t>(e)].train_loss ==
            hist_full.epochs[static_cast<std::size_t>(e + 3)].train_loss);
    REQUIRE(h2.epochs[static_cast<std::size_t>(e)].dev_loss ==
            hist_full.epochs[static_cast<std::size_t>(e + 3)].dev_loss);
  }
}

TEST_CASE("non-finite parameters surface as a numeric error") {
  ParamSet params = init_params(tiny_config(Arch::Hred), 12);
  params.embedding->value[0] = std::numeric_limits<double>::quiet_NaN();
  std::vector<EncodedTriple> data = tiny_data(2, 3, 12);
  REQUIRE_THROWS_AS(train_model(params, data, data, nullptr, fast_train(2, 1)),
                    NumericError);
}

TEST_CASE("checkpoints round-trip parameters, config and adam state") {
  testutil::TempDir tmp;
  std::string path = tmp.file("model.bin");

  ModelConfig cfg = tiny_config(Arch::ExemplarHred, 77);
  cfg.share_encoders = false;
  cfg.dropout = 0.25;
  ParamSet params = init_params(cfg, 15);
  AdamState adam = AdamState::init(params);
  adam.t = 42;
  adam.m[0][0] = 0.125;
  adam.v[2][1] = -3.5;

  save_checkpoint(path, params, 0xabcdefULL, 7, &adam);
  Checkpoint ck = load_checkpoint(path, 0xabcdefULL);

  REQUIRE(ck.epoch == 7);
  REQUIRE(ck.vocab_hash == 0xabcdefULL);
  REQUIRE(ck.params.config.arch == Arch::ExemplarHred);
  REQUIRE(ck.params.config.share_encoders == false);
  REQUIRE(ck.params.config.embedding_dim == cfg.embedding_dim);
  REQUIRE(ck.params.config.dropout == 0.25);
  REQUIRE(ck.params.vocab_size == 15);
  auto orig = params.named();
  auto loaded = ck.params.named();
  REQUIRE(orig.size() == loaded.size());
  for (std::size_t i = 0; i < orig.size(); ++i) {
    REQUIRE(orig[i].first == loaded[i].first);
    REQUIRE(orig[i].second->value == loaded[i].second->value);
  }
  REQUIRE(ck.has_adam);
  REQUIRE(ck.adam.t == 42);
  REQUIRE(ck.adam.m[0][0] == 0.125);
  REQUIRE(ck.adam.v[2][1] == -3.5);

  // saving the loaded model reproduces the file byte for byte
  std::string again = tmp.file("model2.bin");
  save_checkpoint(again, ck.params, ck.vocab_hash, ck.epoch, &ck.adam);
  REQUIRE(read_file(path) == read_file(again));
}

TEST_CASE("checkpoint integrity checks") {
  testutil::TempDir tmp;
  std::string path = tmp.file("model.bin");
  ParamSet params = init_params(tiny_config(Arch::Hred), 10);
  save_checkpoint(path, params, 111, 3);

  SECTION("vocabulary hash mismatch is rejected") {
    REQUIRE_THROWS_AS(load_checkpoint(path, 222), DataError);
    REQUIRE_NOTHROW(load_checkpoint(path, 111));
    Checkpoint ck = load_checkpoint(path);  // hash check optional
    REQUIRE(!ck.has_adam);
  }

  SECTION("wrong magic is rejected") {
    write_file_atomic(path, "NOTACKPT" + std::string(64, '\0'));
    REQUIRE_THROWS_AS(load_checkpoint(path), DataError);
  }

  SECTION("trailing bytes are rejected") {
    std::string bytes = read_file(path);
    write_file_atomic(path, bytes + "x");
    REQUIRE_THROWS_AS(load_checkpoint(path), DataError);
  }

  SECTION("missing file is reported") {
    REQUIRE_THROWS_AS(load_checkpoint(tmp.file("absent.bin")), DataError);
  }
}
