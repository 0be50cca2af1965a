// Command-line front end: synth | prepare | index | train | generate |
// evaluate | report. Exit codes: 0 ok, 2 usage/config, 3 data, 4 numeric.

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "exdial/exdial.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::string work_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool deterministic = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config, "pipeline config file (json)");
    cmd->add_option("--work-dir", work_dir,
                    "work directory (overrides config)");
    cmd->add_option("--seed", seed, "seed override for every seeded component")
        ->each([this](const std::string&) { seed_set = true; });
    cmd->add_flag("--deterministic", deterministic,
                  "record deterministic mode in the resolved config");
  }

  exdial::PipelineConfig load() const {
    if (config.empty())
      throw exdial::ConfigError("--config is required for this command");
    exdial::PipelineConfig c = exdial::PipelineConfig::load_file(config);
    if (!work_dir.empty()) c.work_dir = work_dir;
    if (c.work_dir.empty()) {
      const char* env = std::getenv("EXEMPLAR_DIALOG_WORKDIR");
      if (env && *env) c.work_dir = env;
    }
    if (seed_set) {
      c.seed = seed;
      c.apply_seed();
    }
    if (deterministic) c.deterministic = true;
    return c;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"exemplar-conditioned hierarchical dialogue generation"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "write a synthetic corpus");
  std::string synth_out;
  exdial::SynthConfig synth_cfg;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--dialogues", synth_cfg.num_dialogues, "dialogue count");
  synth->add_option("--seed", synth_cfg.seed, "generator seed");
  synth->add_option("--embedding-dim", synth_cfg.embedding_dim,
                    "embedding dimension");

  CommonFlags prep_f, index_f, train_f, gen_f, eval_f, report_f;
  auto* prepare = app.add_subcommand("prepare", "build dataset artifacts");
  prep_f.attach(prepare);
  auto* index = app.add_subcommand("index", "build the retrieval index");
  index_f.attach(index);

  auto* train = app.add_subcommand("train", "train a model");
  train_f.attach(train);
  std::string train_arch = "";
  bool no_share = false;
  train->add_option("--arch", train_arch, "hred or exemplar");
  train->add_flag("--no-share", no_share,
                  "use a separate exemplar encoder (exemplar arch)");

  auto* generate = app.add_subcommand("generate", "greedy-decode a split");
  gen_f.attach(generate);
  std::string gen_arch = "", gen_split = "test";
  generate->add_option("--arch", gen_arch, "hred or exemplar");
  generate->add_option("--split", gen_split, "dev or test");

  auto* evaluate = app.add_subcommand("evaluate", "score a generations file");
  eval_f.attach(evaluate);
  std::string eval_arch = "", eval_split = "test";
  evaluate->add_option("--arch", eval_arch, "hred or exemplar");
  evaluate->add_option("--split", eval_split, "dev or test");

  auto* report = app.add_subcommand("report", "side-by-side comparison table");
  report_f.attach(report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) {
      exdial::SynthCorpus corpus = exdial::generate_corpus(synth_cfg);
      exdial::write_corpus(corpus, synth_out);
      std::cout << "wrote " << corpus.dialogues.size() << " dialogues to "
                << synth_out
                << " (dialogues.json, ontology.json, database.json, "
                   "embeddings.txt)\n";
    } else if (prepare->parsed()) {
      exdial::cmd_prepare(prep_f.load());
    } else if (index->parsed()) {
      exdial::cmd_index(index_f.load());
    } else if (train->parsed()) {
      exdial::PipelineConfig cfg = train_f.load();
      if (no_share) cfg.model.share_encoders = false;
      exdial::Arch arch = train_arch.empty() ? cfg.model.arch
                                             : exdial::parse_arch(train_arch);
      exdial::cmd_train(cfg, arch);
    } else if (generate->parsed()) {
      exdial::PipelineConfig cfg = gen_f.load();
      exdial::Arch arch =
          gen_arch.empty() ? cfg.model.arch : exdial::parse_arch(gen_arch);
      exdial::cmd_generate(cfg, arch, gen_split);
    } else if (evaluate->parsed()) {
      exdial::PipelineConfig cfg = eval_f.load();
      exdial::Arch arch =
          eval_arch.empty() ? cfg.model.arch : exdial::parse_arch(eval_arch);
      exdial::cmd_evaluate(cfg, arch, eval_split);
    } else if (report->parsed()) {
      exdial::cmd_report(report_f.load());
    }
  } catch (const exdial::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const exdial::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const exdial::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
