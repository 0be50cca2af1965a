#pragma once

// Pipeline driver behind the CLI: prepare → index → train → generate →
// evaluate → report over one work directory, every stage seeded from one
// config. Commands load earlier stages' artifacts from disk, fail fast with
// a hint when a stage is missing, and write their outputs atomically.

#include <cstdio>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "exdial/common.hpp"
#include "exdial/corpus.hpp"
#include "exdial/metrics.hpp"
#include "exdial/model.hpp"
#include "exdial/retrieval.hpp"
#include "exdial/text.hpp"
#include "exdial/training.hpp"

namespace exdial {

// Published full-data results; printed next to measured values in reports as
// reference targets (not reproducible on small subsets).
struct ReferenceTargets {
  double bleu_hred = 23.6, bleu_exemplar = 24.1;          // x100 scale
  double average_hred = 0.93, average_exemplar = 0.95;
  double extrema_hred = 0.59, extrema_exemplar = 0.65;
  double greedy_hred = 23.1, greedy_exemplar = 23.9;      // x100 scale
  double inform_hred = 60.4, inform_exemplar = 77.6;
  double request_hred = 44.5, request_exemplar = 70.1;
};

namespace cfg_detail {

inline const nlohmann::json* find(const nlohmann::json& j, const char* key) {
  if (!j.is_object()) return nullptr;
  auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  const nlohmann::json* v = find(j, key);
  if (!v) return fallback;
  try {
    return v->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has wrong type");
  }
}

inline nlohmann::json section(const nlohmann::json& j, const char* key) {
  const nlohmann::json* v = find(j, key);
  if (!v) return nlohmann::json::object();
  if (!v->is_object())
    throw ConfigError(std::string("config section '") + key +
                      "' must be an object");
  return *v;
}

}  // namespace cfg_detail

struct PipelineConfig {
  std::string data_path, ontology_path, database_path, embeddings_path;
  std::string work_dir;

  bool delexicalize = true;
  int min_count = 3;
  int max_vocab = 20000;
  std::string split_manifest;  // empty -> seeded split
  int dev_size = 1000, test_size = 1000;

  ModelConfig model;
  TrainConfig train;

  IndexMode index_mode = IndexMode::Approximate;
  LshConfig lsh;
  int retrieval_k = 10;
  std::string reranker_kind = "heuristic";  // or "mlp"
  RerankerTrainConfig reranker_train;

  std::uint64_t seed = 0;
  bool deterministic = false;

  // Pushes the top-level seed into every seeded component.
  void apply_seed() {
    model.seed = seed;
    train.seed = seed;
    reranker_train.seed = seed;
  }

  static PipelineConfig from_json(const nlohmann::json& j) {
    using namespace cfg_detail;
    if (!j.is_object()) throw ConfigError("config root must be a json object");
    PipelineConfig c;

    nlohmann::json paths = section(j, "paths");
    c.data_path = get_or<std::string>(paths, "data", "");
    c.ontology_path = get_or<std::string>(paths, "ontology", "");
    c.database_path = get_or<std::string>(paths, "database", "");
    c.embeddings_path = get_or<std::string>(paths, "embeddings", "");
    c.work_dir = get_or<std::string>(paths, "work_dir", "");

    nlohmann::json corpus = section(j, "corpus");
    c.delexicalize = get_or<bool>(corpus, "delexicalize", true);
    c.min_count = get_or<int>(corpus, "min_count", 3);
    c.max_vocab = get_or<int>(corpus, "max_vocab", 20000);
    nlohmann::json split = section(corpus, "split");
    c.split_manifest = get_or<std::string>(split, "manifest", "");
    c.dev_size = get_or<int>(split, "dev_size", 1000);
    c.test_size = get_or<int>(split, "test_size", 1000);

    nlohmann::json model = section(j, "model");
    c.model.embedding_dim = get_or<int>(model, "embedding_dim", 256);
    c.model.hidden_dim = get_or<int>(model, "hidden_dim", 512);
    c.model.dropout = get_or<double>(model, "dropout", 0.3);
    c.model.max_decode_len = get_or<int>(model, "max_decode_len", 50);
    c.model.share_encoders = get_or<bool>(model, "share_encoders", true);
    c.model.arch = parse_arch(get_or<std::string>(model, "arch", "hred"));

    nlohmann::json train = section(j, "train");
    c.train.learning_rate = get_or<double>(train, "learning_rate", 0.001);
    c.train.beta1 = get_or<double>(train, "beta1", 0.9);
    c.train.beta2 = get_or<double>(train, "beta2", 0.999);
    c.train.eps = get_or<double>(train, "eps", 1e-8);
    c.train.max_epochs = get_or<int>(train, "max_epochs", 50);
    c.train.patience = get_or<int>(train, "patience", 10);
    c.train.batch_size = get_or<int>(train, "batch_size", 32);
    c.train.clip_norm = get_or<double>(train, "clip_norm", 5.0);
    c.train.restore_best = get_or<bool>(train, "restore_best", true);

    nlohmann::json retr = section(j, "retrieval");
    std::string mode = get_or<std::string>(retr, "mode", "approximate");
    if (mode == "exact")
      c.index_mode = IndexMode::Exact;
    else if (mode == "approximate")
      c.index_mode = IndexMode::Approximate;
    else
      throw ConfigError("retrieval.mode must be exact or approximate, got '" +
                        mode + "'");
    c.lsh.tables = get_or<int>(retr, "tables", 16);
    c.lsh.bits = get_or<int>(retr, "bits", 12);
    c.lsh.probe_radius = get_or<int>(retr, "probe_radius", 1);
    c.retrieval_k = get_or<int>(retr, "k", 10);
    c.reranker_kind = get_or<std::string>(retr, "reranker", "heuristic");
    if (c.reranker_kind != "heuristic" && c.reranker_kind != "mlp")
      throw ConfigError("retrieval.reranker must be heuristic or mlp, got '" +
                        c.reranker_kind + "'");
    nlohmann::json rt = section(retr, "reranker_train");
    c.reranker_train.k = get_or<int>(rt, "k", 10);
    c.reranker_train.max_queries = get_or<int>(rt, "max_queries", 2000);
    c.reranker_train.epochs = get_or<int>(rt, "epochs", 30);
    c.reranker_train.batch_size = get_or<int>(rt, "batch_size", 32);
    c.reranker_train.learning_rate = get_or<double>(rt, "learning_rate", 0.001);
    c.reranker_train.hidden = get_or<int>(rt, "hidden", 16);
    c.reranker_train.min_pairs = get_or<int>(rt, "min_pairs", 10);
    c.reranker_train.holdout_fraction =
        get_or<double>(rt, "holdout_fraction", 0.2);

    c.seed = get_or<std::uint64_t>(j, "seed", 0);
    c.deterministic = get_or<bool>(j, "deterministic", false);
    c.apply_seed();
    return c;
  }

  static PipelineConfig load_file(const std::string& path) {
    if (!file_exists(path)) throw ConfigError("config file not found: " + path);
    try {
      return from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("config parse error in " + path + ": " + e.what());
    }
  }

  nlohmann::json to_json() const {
    return nlohmann::json{
        {"paths",
         {{"data", data_path},
          {"ontology", ontology_path},
          {"database", database_path},
          {"embeddings", embeddings_path},
          {"work_dir", work_dir}}},
        {"corpus",
         {{"delexicalize", delexicalize},
          {"min_count", min_count},
          {"max_vocab", max_vocab},
          {"split",
           {{"manifest", split_manifest},
            {"dev_size", dev_size},
            {"test_size", test_size}}}}},
        {"model",
         {{"embedding_dim", model.embedding_dim},
          {"hidden_dim", model.hidden_dim},
          {"dropout", model.dropout},
          {"max_decode_len", model.max_decode_len},
          {"share_encoders", model.share_encoders},
          {"arch", arch_name(model.arch)}}},
        {"train",
         {{"learning_rate", train.learning_rate},
          {"beta1", train.beta1},
          {"beta2", train.beta2},
          {"eps", train.eps},
          {"max_epochs", train.max_epochs},
          {"patience", train.patience},
          {"batch_size", train.batch_size},
          {"clip_norm", train.clip_norm},
          {"restore_best", train.restore_best}}},
        {"retrieval",
         {{"mode", index_mode == IndexMode::Exact ? "exact" : "approximate"},
          {"tables", lsh.tables},
          {"bits", lsh.bits},
          {"probe_radius", lsh.probe_radius},
          {"k", retrieval_k},
          {"reranker", reranker_kind},
          {"reranker_train",
           {{"k", reranker_train.k},
            {"max_queries", reranker_train.max_queries},
            {"epochs", reranker_train.epochs},
            {"batch_size", reranker_train.batch_size},
            {"learning_rate", reranker_train.learning_rate},
            {"hidden", reranker_train.hidden},
            {"min_pairs", reranker_train.min_pairs},
            {"holdout_fraction", reranker_train.holdout_fraction}}}}},
        {"seed", seed},
        {"deterministic", deterministic}};
  }
};

struct WorkPaths {
  std::string root;

  explicit WorkPaths(const std::string& work_dir) : root(work_dir) {
    if (root.empty())
      throw ConfigError(
          "work directory not set (paths.work_dir, --work-dir, or "
          "EXEMPLAR_DIALOG_WORKDIR)");
  }

  std::string prepared_dir() const { return root + "/prepared"; }
  std::string triples(const std::string& split) const {
    return prepared_dir() + "/triples." + split + ".jsonl";
  }
  std::string vocab() const { return prepared_dir() + "/vocab.json"; }
  std::string split_file() const { return prepared_dir() + "/split.json"; }
  std::string summary() const { return prepared_dir() + "/summary.json"; }
  std::string index() const { return root + "/index.bin"; }
  std::string reranker() const { return root + "/reranker.json"; }
  std::string run_dir(Arch a) const {
    return root + "/runs/" + arch_name(a);
  }
  std::string checkpoint(Arch a) const {
    return run_dir(a) + "/checkpoint.bin";
  }
  std::string history(Arch a) const { return run_dir(a) + "/history.json"; }
  std::string generations(Arch a, const std::string& split) const {
    return run_dir(a) + "/generations." + split + ".jsonl";
  }
  std::string eval(Arch a, const std::string& split) const {
    return run_dir(a) + "/eval." + split + ".json";
  }
  std::string report_txt() const { return root + "/report.txt"; }
  std::string report_json() const { return root + "/report.json"; }
  std::string resolved_config() const { return root + "/config.resolved.json"; }
};

inline void require_input(const std::string& path, const std::string& what) {
  if (path.empty())
    throw ConfigError("config does not set a path for " + what);
  if (!file_exists(path)) throw ConfigError(what + " not found: " + path);
}

inline void require_stage(const std::string& path, const std::string& hint) {
  if (!file_exists(path))
    throw ConfigError("missing " + path + "; run `" + hint + "` first");
}

inline void check_split_name(const std::string& split) {
  if (split != "dev" && split != "test")
    throw ConfigError("unknown split '" + split + "' (expected dev or test)");
}

inline nlohmann::json parse_json_file(const std::string& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("parse error in " + path + ": " + e.what());
  }
}

inline void write_resolved_config(const PipelineConfig& cfg) {
  WorkPaths wp(cfg.work_dir);
  write_file_atomic(wp.resolved_config(), cfg.to_json().dump(1) + "\n");
}

// ---------------------------------------------------------------------------
// prepare: load + validate raw corpus, merge/delexicalize/tokenize, split,
// build vocabulary from the training split, write all dataset artifacts.
// ---------------------------------------------------------------------------

struct PrepareSummary {
  int dialogue_count = 0;
  int train_dialogues = 0, dev_dialogues = 0, test_dialogues = 0;
  int train_triples = 0, dev_triples = 0, test_triples = 0;
  int vocab_size = 0;
  std::uint64_t vocab_hash = 0;
  int delex_values = 0;

  nlohmann::json to_json() const {
    return nlohmann::json{{"dialogue_count", dialogue_count},
                          {"train_dialogues", train_dialogues},
                          {"dev_dialogues", dev_dialogues},
                          {"test_dialogues", test_dialogues},
                          {"train_triples", train_triples},
                          {"dev_triples", dev_triples},
                          {"test_triples", test_triples},
                          {"vocab_size", vocab_size},
                          {"vocab_hash", vocab_hash},
                          {"delex_values", delex_values}};
  }
};

inline PrepareSummary cmd_prepare(const PipelineConfig& cfg) {
  require_input(cfg.data_path, "dialogue data");
  require_input(cfg.ontology_path, "ontology");
  require_input(cfg.database_path, "database");
  if (!cfg.split_manifest.empty())
    require_input(cfg.split_manifest, "split manifest");

  std::vector<Dialogue> dialogues = load_dialogues(cfg.data_path);
  Ontology ont = load_ontology(cfg.ontology_path);
  load_database(cfg.database_path);  // validate early; used again at evaluate
  validate_goals(dialogues, ont);

  std::optional<Delexicalizer> delex;
  if (cfg.delexicalize) delex.emplace(ont);
  for (Dialogue& d : dialogues)
    normalize_dialogue(d, delex ? &*delex : nullptr);

  SplitSpec spec;
  if (!cfg.split_manifest.empty()) {
    spec = SplitSpec::load(cfg.split_manifest);
  } else {
    spec.has_manifest = false;
    spec.seed = cfg.seed;
    spec.dev_size = cfg.dev_size;
    spec.test_size = cfg.test_size;
  }
  CorpusSplit split = split_corpus(dialogues, spec);

  std::vector<ContextTriple> train_triples = make_triples(split.train);
  std::vector<ContextTriple> dev_triples = make_triples(split.dev);
  std::vector<ContextTriple> test_triples = make_triples(split.test);
  if (train_triples.empty())
    throw DataError("training split produced zero context triples");

  std::vector<std::vector<std::string>> texts;
  for (const Dialogue& d : split.train)
    for (const Utterance& t : d.turns) texts.push_back(t.tokens);
  Vocabulary vocab = Vocabulary::build(texts, cfg.min_count, cfg.max_vocab);

  PrepareSummary s;
  s.dialogue_count = static_cast<int>(dialogues.size());
  s.train_dialogues = static_cast<int>(split.train.size());
  s.dev_dialogues = static_cast<int>(split.dev.size());
  s.test_dialogues = static_cast<int>(split.test.size());
  s.train_triples = static_cast<int>(train_triples.size());
  s.dev_triples = static_cast<int>(dev_triples.size());
  s.test_triples = static_cast<int>(test_triples.size());
  s.vocab_size = static_cast<int>(vocab.size());
  s.vocab_hash = vocab.hash();
  s.delex_values = delex ? static_cast<int>(delex->value_count()) : 0;

  WorkPaths wp(cfg.work_dir);
  write_resolved_config(cfg);
  write_file_atomic(wp.triples("train"), triples_to_jsonl(train_triples));
  write_file_atomic(wp.triples("dev"), triples_to_jsonl(dev_triples));
  write_file_atomic(wp.triples("test"), triples_to_jsonl(test_triples));
  write_file_atomic(wp.vocab(), vocab.to_json().dump(1) + "\n");
  write_file_atomic(wp.split_file(), split.manifest_json().dump(1) + "\n");
  write_file_atomic(wp.summary(), s.to_json().dump(1) + "\n");

  std::cout << "prepared " << s.dialogue_count << " dialogues -> "
            << s.train_dialogues << "/" << s.dev_dialogues << "/"
            << s.test_dialogues << " train/dev/test\n"
            << "triples: " << s.train_triples << "/" << s.dev_triples << "/"
            << s.test_triples << ", vocab " << s.vocab_size << " tokens, "
            << s.delex_values << " delexicalizable values\n";
  return s;
}

// ---------------------------------------------------------------------------
// index: nearest-neighbor index over training user utterances + reranker.
// ---------------------------------------------------------------------------

inline nlohmann::json cmd_index(const PipelineConfig& cfg) {
  WorkPaths wp(cfg.work_dir);
  require_stage(wp.triples("train"), "prepare");

  std::vector<ContextTriple> train_triples =
      triples_from_jsonl(read_file(wp.triples("train")));
  AnnIndex index =
      AnnIndex::build(train_triples, cfg.index_mode, cfg.lsh, cfg.seed);

  RerankerModel reranker;  // heuristic defaults
  nlohmann::json info{{"records", static_cast<int>(index.records().size())},
                      {"reranker", cfg.reranker_kind}};
  if (cfg.reranker_kind == "mlp") {
    require_stage(wp.vocab(), "prepare");
    require_input(cfg.embeddings_path, "embeddings");
    Vocabulary vocab =
        Vocabulary::from_json(parse_json_file(wp.vocab()));
    EmbeddingTable emb = EmbeddingTable::load(cfg.embeddings_path, vocab);
    RerankResources res{&index.idf(), &emb, &vocab};
    RerankerTrainReport rep;
    reranker = train_reranker(train_triples, index, res, cfg.reranker_train,
                              &rep);
    info["reranker_pairs"] = rep.pair_count;
    info["reranker_holdout_accuracy"] = rep.held_out_accuracy;
    std::cout << "reranker trained on " << rep.pair_count
              << " pairs, holdout accuracy " << rep.held_out_accuracy << "\n";
  }

  write_resolved_config(cfg);
  index.save(wp.index());
  reranker.save(wp.reranker());
  std::cout << "indexed " << index.records().size()
            << " training utterances ("
            << (cfg.index_mode == IndexMode::Exact ? "exact" : "approximate")
            << ")\n";
  return info;
}

// ---------------------------------------------------------------------------
// train: encode triples, optionally retrieve exemplars, fit, checkpoint.
// ---------------------------------------------------------------------------

namespace pipe_detail {

struct ExemplarSetup {
  AnnIndex index;
  RerankerModel reranker;
  EmbeddingTable emb;
  Vocabulary vocab;  // owned copy for RerankResources lifetime
};

inline ExemplarSetup load_exemplar_setup(const PipelineConfig& cfg,
                                         const Vocabulary& vocab) {
  WorkPaths wp(cfg.work_dir);
  require_stage(wp.index(), "index");
  require_stage(wp.reranker(), "index");
  require_input(cfg.embeddings_path, "embeddings");
  ExemplarSetup s{AnnIndex::load(wp.index()), RerankerModel::load(wp.reranker()),
                  EmbeddingTable::load(cfg.embeddings_path, vocab), vocab};
  return s;
}

inline std::vector<std::vector<int>> retrieve_exemplars(
    const std::vector<ContextTriple>& triples, const ExemplarSetup& setup,
    const Vocabulary& vocab, int k) {
  RerankResources res{&setup.index.idf(), &setup.emb, &setup.vocab};
  std::vector<std::vector<int>> out;
  out.reserve(triples.size());
  for (const ContextTriple& t : triples) {
    ExemplarChoice choice =
        exemplar_for(t.u.tokens, t.dialogue_id, setup.index, setup.reranker,
                     res, k);
    out.push_back(vocab.encode(choice.record.response_tokens));
  }
  return out;
}

}  // namespace pipe_detail

inline TrainHistory cmd_train(const PipelineConfig& cfg, Arch arch) {
  WorkPaths wp(cfg.work_dir);
  require_stage(wp.triples("train"), "prepare");
  require_stage(wp.vocab(), "prepare");

  Vocabulary vocab = Vocabulary::from_json(parse_json_file(wp.vocab()));
  std::vector<ContextTriple> train_raw =
      triples_from_jsonl(read_file(wp.triples("train")));
  std::vector<ContextTriple> dev_raw =
      triples_from_jsonl(read_file(wp.triples("dev")));

  std::vector<EncodedTriple> train_data, dev_data;
  train_data.reserve(train_raw.size());
  for (const ContextTriple& t : train_raw)
    train_data.push_back(encode_triple(t, vocab));
  dev_data.reserve(dev_raw.size());
  for (const ContextTriple& t : dev_raw)
    dev_data.push_back(encode_triple(t, vocab));

  ExemplarCache cache;
  const ExemplarCache* cache_ptr = nullptr;
  if (arch == Arch::ExemplarHred) {
    pipe_detail::ExemplarSetup setup =
        pipe_detail::load_exemplar_setup(cfg, vocab);
    cache.train_ex = pipe_detail::retrieve_exemplars(train_raw, setup, vocab,
                                                     cfg.retrieval_k);
    cache.dev_ex = pipe_detail::retrieve_exemplars(dev_raw, setup, vocab,
                                                   cfg.retrieval_k);
    cache_ptr = &cache;
    std::cout << "retrieved exemplars for " << cache.train_ex.size()
              << " train + " << cache.dev_ex.size() << " dev triples\n";
  }

  ModelConfig mc = cfg.model;
  mc.arch = arch;
  ParamSet params = init_params(mc, static_cast<int>(vocab.size()));
  std::cout << "training " << arch_name(arch) << ": "
            << params.param_count() << " parameters, "
            << train_data.size() << " triples\n";

  AdamState adam = AdamState::init(params);
  TrainHistory history = train_model(
      params, train_data, dev_data, cache_ptr, cfg.train, &adam, 1,
      [](const EpochStats& e) {
        std::printf("epoch %d: train %.4f dev %.4f ppl %.2f\n", e.epoch,
                    e.train_loss, e.dev_loss, e.dev_ppl);
        std::fflush(stdout);
      });

  write_resolved_config(cfg);
  save_checkpoint(wp.checkpoint(arch), params, vocab.hash(),
                  history.best_epoch, &adam);
  write_file_atomic(wp.history(arch), history.to_json().dump(1) + "\n");
  std::cout << "best epoch " << history.best_epoch << " (dev loss "
            << history.best_dev_loss << "), stopped by "
            << history.stop_reason << "\n";
  return history;
}

// ---------------------------------------------------------------------------
// generate: greedy decoding over a split, one json line per triple.
// ---------------------------------------------------------------------------

inline int cmd_generate(const PipelineConfig& cfg, Arch arch,
                        const std::string& split) {
  check_split_name(split);
  WorkPaths wp(cfg.work_dir);
  require_stage(wp.vocab(), "prepare");
  require_stage(wp.triples(split), "prepare");
  require_stage(wp.checkpoint(arch), "train --arch " + std::string(arch_name(arch)));

  Vocabulary vocab = Vocabulary::from_json(parse_json_file(wp.vocab()));
  Checkpoint ckpt = load_checkpoint(wp.checkpoint(arch), vocab.hash());
  if (ckpt.params.config.arch != arch)
    throw DataError("checkpoint architecture mismatch in " +
                    wp.checkpoint(arch));

  std::vector<ContextTriple> triples =
      triples_from_jsonl(read_file(wp.triples(split)));

  std::optional<pipe_detail::ExemplarSetup> setup;
  if (arch == Arch::ExemplarHred)
    setup.emplace(pipe_detail::load_exemplar_setup(cfg, vocab));

  std::string out;
  for (const ContextTriple& t : triples) {
    EncodedTriple enc = encode_triple(t, vocab);
    std::optional<std::vector<int>> exemplar;
    nlohmann::json line{{"dialogue_id", t.dialogue_id},
                        {"turn_index", t.turn_index},
                        {"context",
                         {{"s1", detokenize(t.s1.tokens)},
                          {"u", detokenize(t.u.tokens)}}},
                        {"gold", detokenize(t.s2.tokens)}};
    if (setup) {
      RerankResources res{&setup->index.idf(), &setup->emb, &setup->vocab};
      ExemplarChoice choice =
          exemplar_for(t.u.tokens, t.dialogue_id, setup->index,
                       setup->reranker, res, cfg.retrieval_k);
      exemplar = vocab.encode(choice.record.response_tokens);
      line["exemplar"] = {
          {"user", detokenize(choice.record.user_tokens)},
          {"response", detokenize(choice.record.response_tokens)},
          {"distance", choice.distance},
          {"rerank_score", choice.rerank_score}};
    }
    std::vector<int> ids = generate_response(enc, exemplar, ckpt.params);
    std::vector<std::string> toks;
    toks.reserve(ids.size());
    for (int id : ids) toks.push_back(vocab.token_of(id));
    line["hypothesis"] = detokenize(toks);
    out += line.dump();
    out += '\n';
  }

  write_resolved_config(cfg);
  write_file_atomic(wp.generations(arch, split), out);
  std::cout << "generated " << triples.size() << " responses for " << split
            << " (" << arch_name(arch) << ")\n";
  return static_cast<int>(triples.size());
}

// ---------------------------------------------------------------------------
// evaluate: score a generations file with all six metrics.
// ---------------------------------------------------------------------------

inline EvalReport cmd_evaluate(const PipelineConfig& cfg, Arch arch,
                               const std::string& split) {
  check_split_name(split);
  WorkPaths wp(cfg.work_dir);
  require_stage(wp.vocab(), "prepare");
  require_stage(wp.split_file(), "prepare");
  require_stage(wp.generations(arch, split),
                "generate --arch " + std::string(arch_name(arch)) +
                    " --split " + split);
  require_input(cfg.embeddings_path, "embeddings");
  require_input(cfg.data_path, "dialogue data");
  require_input(cfg.ontology_path, "ontology");
  require_input(cfg.database_path, "database");

  Vocabulary vocab = Vocabulary::from_json(parse_json_file(wp.vocab()));
  EmbeddingTable emb = EmbeddingTable::load(cfg.embeddings_path, vocab);

  std::vector<EvalPair> pairs;
  GeneratedResponses responses;
  {
    std::string text = read_file(wp.generations(arch, split));
    std::size_t start = 0;
    while (start < text.size()) {
      std::size_t end = text.find('\n', start);
      if (end == std::string::npos) end = text.size();
      std::string linestr = text.substr(start, end - start);
      start = end + 1;
      if (trim(linestr).empty()) continue;
      nlohmann::json line;
      try {
        line = nlohmann::json::parse(linestr);
      } catch (const nlohmann::json::parse_error& e) {
        throw DataError("bad generations line: " + std::string(e.what()));
      }
      EvalPair p;
      p.dialogue_id = line.at("dialogue_id").get<std::string>();
      p.turn_index = line.at("turn_index").get<int>();
      p.ref = tokenize(line.at("gold").get<std::string>());
      p.hyp = tokenize(line.at("hypothesis").get<std::string>());
      responses[p.dialogue_id].push_back(p.hyp);
      pairs.push_back(std::move(p));
    }
  }
  if (pairs.empty()) throw DataError("generations file has no entries");

  nlohmann::json split_manifest = parse_json_file(wp.split_file());
  if (!split_manifest.contains(split))
    throw DataError("split manifest lacks '" + split + "' id list");
  std::set<std::string> split_ids;
  for (const nlohmann::json& id : split_manifest[split])
    split_ids.insert(id.get<std::string>());

  std::vector<Dialogue> all_dialogues = load_dialogues(cfg.data_path);
  std::vector<Dialogue> split_dialogues;
  for (Dialogue& d : all_dialogues)
    if (split_ids.count(d.id)) split_dialogues.push_back(std::move(d));

  Database db = load_database(cfg.database_path);
  Ontology ont = load_ontology(cfg.ontology_path);
  InformRequestResult ir = inform_request(split_dialogues, responses, db, ont);
  EvalReport rep = evaluate_pairs(pairs, emb, vocab, ir);

  nlohmann::json out = rep.to_json();
  out["arch"] = arch_name(arch);
  out["split"] = split;
  write_resolved_config(cfg);
  write_file_atomic(wp.eval(arch, split), out.dump(1) + "\n");

  std::printf(
      "%s %s: bleu %.2f, average %.4f, extrema %.4f, greedy %.2f, "
      "inform %.1f, request %.1f (%d pairs, %d skipped)\n",
      arch_name(arch), split.c_str(), rep.bleu * 100.0, rep.avg_embedding,
      rep.extrema, rep.greedy * 100.0, rep.inform_pct, rep.request_pct,
      rep.pair_count, rep.skipped_pairs);
  std::fflush(stdout);
  return rep;
}

// ---------------------------------------------------------------------------
// report: side-by-side table of evaluated runs plus reference targets.
// ---------------------------------------------------------------------------

inline std::string cmd_report(const PipelineConfig& cfg) {
  WorkPaths wp(cfg.work_dir);
  const Arch archs[2] = {Arch::Hred, Arch::ExemplarHred};

  std::string split = "test";
  bool any = false;
  for (Arch a : archs) any = any || file_exists(wp.eval(a, "test"));
  if (!any) {
    for (Arch a : archs) any = any || file_exists(wp.eval(a, "dev"));
    split = "dev";
  }
  if (!any)
    throw ConfigError("no evaluation results under " + wp.root +
                      "/runs; run `evaluate` first");

  std::optional<EvalReport> reports[2];
  for (int i = 0; i < 2; ++i)
    if (file_exists(wp.eval(archs[i], split)))
      reports[i] = EvalReport::from_json(parse_json_file(wp.eval(archs[i], split)));

  std::optional<double> dev_ppl[2];
  for (int i = 0; i < 2; ++i) {
    if (!file_exists(wp.history(archs[i]))) continue;
    nlohmann::json h = parse_json_file(wp.history(archs[i]));
    if (h.contains("best_dev_loss") && h["best_dev_loss"].is_number())
      dev_ppl[i] = std::exp(h["best_dev_loss"].get<double>());
  }

  ReferenceTargets ref;
  struct Row {
    const char* name;
    double scale;
    double EvalReport::*field;
    double ref_hred, ref_exemplar;
  };
  const Row rows[] = {
      {"bleu", 100.0, &EvalReport::bleu, ref.bleu_hred, ref.bleu_exemplar},
      {"average", 1.0, &EvalReport::avg_embedding, ref.average_hred,
       ref.average_exemplar},
      {"extrema", 1.0, &EvalReport::extrema, ref.extrema_hred,
       ref.extrema_exemplar},
      {"greedy", 100.0, &EvalReport::greedy, ref.greedy_hred,
       ref.greedy_exemplar},
      {"inform%", 1.0, &EvalReport::inform_pct, ref.inform_hred,
       ref.inform_exemplar},
      {"request%", 1.0, &EvalReport::request_pct, ref.request_hred,
       ref.request_exemplar}};

  char buf[160];
  std::string text = "model comparison (split: " + split + ")\n\n";
  std::snprintf(buf, sizeof(buf), "%-10s %12s %12s %12s %12s\n", "metric",
                "hred", "exemplar", "ref(hred)", "ref(exemplar)");
  text += buf;
  auto cell = [](const std::optional<EvalReport>& r, const Row& row) {
    if (!r) return std::string("-");
    char b[32];
    std::snprintf(b, sizeof(b), "%.2f", (*r).*(row.field) * row.scale);
    return std::string(b);
  };
  for (const Row& row : rows) {
    std::snprintf(buf, sizeof(buf), "%-10s %12s %12s %12.2f %12.2f\n",
                  row.name, cell(reports[0], row).c_str(),
                  cell(reports[1], row).c_str(), row.ref_hred,
                  row.ref_exemplar);
    text += buf;
  }
  text +=
      "\nref columns are published full-data results; they are reference "
      "targets,\nnot expected to be reproducible on small subsets.\n";

  nlohmann::json jdev = nlohmann::json::object();
  if (dev_ppl[0] && dev_ppl[1]) {
    bool not_worse = *dev_ppl[1] <= *dev_ppl[0];
    std::snprintf(buf, sizeof(buf),
                  "dev perplexity: hred %.2f, exemplar %.2f -> exemplar not "
                  "worse: %s (informational)\n",
                  *dev_ppl[0], *dev_ppl[1], not_worse ? "yes" : "no");
    text += buf;
    jdev = {{"hred", *dev_ppl[0]},
            {"exemplar", *dev_ppl[1]},
            {"exemplar_not_worse", not_worse}};
  } else {
    text += "dev perplexity check skipped (need both trained runs)\n";
  }

  nlohmann::json jruns = nlohmann::json::object();
  for (int i = 0; i < 2; ++i)
    if (reports[i]) jruns[arch_name(archs[i])] = reports[i]->to_json();
  nlohmann::json jref{
      {"bleu", {{"hred", ref.bleu_hred}, {"exemplar", ref.bleu_exemplar}}},
      {"average",
       {{"hred", ref.average_hred}, {"exemplar", ref.average_exemplar}}},
      {"extrema",
       {{"hred", ref.extrema_hred}, {"exemplar", ref.extrema_exemplar}}},
      {"greedy", {{"hred", ref.greedy_hred}, {"exemplar", ref.greedy_exemplar}}},
      {"inform", {{"hred", ref.inform_hred}, {"exemplar", ref.inform_exemplar}}},
      {"request",
       {{"hred", ref.request_hred}, {"exemplar", ref.request_exemplar}}}};

  write_resolved_config(cfg);
  write_file_atomic(wp.report_txt(), text);
  write_file_atomic(wp.report_json(),
                    nlohmann::json{{"split", split},
                                   {"runs", jruns},
                                   {"reference_targets", jref},
                                   {"dev_perplexity", jdev}}
                            .dump(1) +
                        "\n");
  std::cout << text;
  return text;
}

}  // namespace exdial
