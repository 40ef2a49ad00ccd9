// exner: command-line entry point. Exit codes: 0 success, 1 runtime failure,
// 2 usage error.

#include <iostream>

#include "CLI11.hpp"
#include "commands.h"
#include "exner/errors.h"
#include "exner/log.h"

namespace {

using namespace exner;
using namespace exner::cli;

void add_scoring_flags(CLI::App* cmd, ScoringConfig& cfg, std::string& algorithm) {
  cmd->add_option("--algorithm", algorithm,
                  "hard-attention, soft-attention, topk-soft-attention or voting")
      ->capture_default_str();
  cmd->add_option("--k", cfg.k, "supports summed per position")->capture_default_str();
  cmd->add_option("--temperature", cfg.temperature, "attention temperature")
      ->capture_default_str();
  cmd->add_option("--top-n", cfg.top_n, "spans per support when voting")->capture_default_str();
  cmd->add_option_function<std::size_t>(
      "--max-span-length", [&cfg](std::size_t n) { cfg.max_span_length = n; },
      "longest span considered (default unlimited)");
}

void add_encoder_flags(CLI::App* cmd, EncoderConfig& cfg) {
  cmd->add_option("--dim", cfg.dim, "vector size")->capture_default_str();
  cmd->add_option("--layers", cfg.layers, "transformer blocks")->capture_default_str();
  cmd->add_option("--heads", cfg.heads, "attention heads")->capture_default_str();
  cmd->add_option("--vocab-buckets", cfg.vocab_hash_buckets, "hashed embedding rows")
      ->capture_default_str();
  cmd->add_option("--context-window", cfg.context_window, "static-hash context width")
      ->capture_default_str();
  cmd->add_option("--max-sequence-length", cfg.max_sequence_length, "token limit")
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Example-based few-shot named entity recognition"};
  app.set_config("--config", "", "TOML file of flag values; command-line flags win");
  app.require_subcommand(1);
  int verbosity = 0;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbosity, "more logging (repeatable)");
  app.add_flag("-q,--quiet", quiet, "errors only");

  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic source/target corpus");
  synth_cmd->add_option("--out", synth.out, "output directory")->required();
  synth_cmd->add_option("--seed", synth.seed)->capture_default_str();
  synth_cmd->add_option("--train-size", synth.train_size, "source sentences");
  synth_cmd->add_option("--test-size", synth.test_size, "target query sentences");
  synth_cmd->add_option("--pool-size", synth.pool_size, "target support sentences");

  InitOptions init;
  auto* init_cmd = app.add_subcommand("init", "write an untrained encoder checkpoint");
  init_cmd->add_option("--out", init.out, "checkpoint path")->required();
  init_cmd->add_option("--encoder", init.encoder_kind,
                       "toy-transformer, static-hash or precomputed")
      ->capture_default_str();
  init_cmd->add_option("--vectors", init.vectors, "vector file for precomputed encoders")
      ->check(CLI::ExistingFile);
  init_cmd->add_option("--seed", init.encoder.seed)->capture_default_str();
  add_encoder_flags(init_cmd, init.encoder);

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "episodic training of the toy encoder");
  train_cmd->add_option("--corpus", train.corpus, "BIO training corpus")
      ->required()
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--pool", train.pool, "support JSON (default: corpus mentions)")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train.out, "checkpoint path")->required();
  train_cmd->add_option("--loss-csv", train.loss_csv, "per-epoch loss (default <out>.loss.csv)");
  train_cmd->add_option("--init", train.init, "starting checkpoint")->check(CLI::ExistingFile);
  train_cmd->add_option_function<std::uint64_t>(
      "--seed",
      [&train](std::uint64_t s) {
        train.training.seed = s;
        train.encoder.seed = s;
      },
      "seed for initialization and episode sampling");
  train_cmd->add_option("--epochs", train.training.epochs)->capture_default_str();
  train_cmd->add_option("--lr", train.training.learning_rate)->capture_default_str();
  train_cmd->add_option("--weight-decay", train.training.weight_decay)->capture_default_str();
  train_cmd->add_option("--batch-size", train.training.batch_size)->capture_default_str();
  train_cmd->add_option("--k", train.training.k, "supports per episode")->capture_default_str();
  train_cmd->add_option("--temperature", train.training.temperature)->capture_default_str();
  train_cmd->add_option("--neg-pos-ratio", train.training.neg_pos_ratio)->capture_default_str();
  train_cmd->add_option("--squash", train.squash, "sigmoid or position-softmax")
      ->capture_default_str();
  train_cmd->add_option("--dim", train.encoder.dim)->capture_default_str();
  train_cmd->add_option("--layers", train.encoder.layers)->capture_default_str();
  train_cmd->add_option("--heads", train.encoder.heads)->capture_default_str();
  train_cmd->add_option("--vocab-buckets", train.encoder.vocab_hash_buckets)
      ->capture_default_str();
  train_cmd->add_option("--max-sequence-length", train.training.max_sequence_length)
      ->capture_default_str();

  EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "train-free few-shot evaluation");
  eval_cmd->add_option("--checkpoint", eval.checkpoint)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--test", eval.test, "BIO query corpus")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--pool", eval.pool, "support JSON pool")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--budgets", eval.budgets, "comma-separated support budgets")
      ->delimiter(',');
  eval_cmd->add_option("--trials", eval.trials)->capture_default_str();
  eval_cmd->add_option("--seed", eval.seed)->capture_default_str();
  eval_cmd->add_option("--out-csv", eval.out_csv)->required();
  eval_cmd->add_option("--out-json", eval.out_json)->required();
  add_scoring_flags(eval_cmd, eval.scoring, eval.algorithm);

  PredictOptions pred;
  auto* pred_cmd = app.add_subcommand("predict", "print the prediction JSON for one query");
  pred_cmd->add_option("--checkpoint", pred.checkpoint)->required()->check(CLI::ExistingFile);
  pred_cmd->add_option("--supports", pred.supports, "support JSON")
      ->required()
      ->check(CLI::ExistingFile);
  auto* tokens_opt = pred_cmd->add_option("--tokens", pred.tokens, "query tokens");
  pred_cmd->add_option("--text", pred.text, "whitespace-separated query")->excludes(tokens_opt);
  add_scoring_flags(pred_cmd, pred.scoring, pred.algorithm);

  ServeOptions serve;
  auto* serve_cmd = app.add_subcommand("serve", "run the HTTP API until SIGINT/SIGTERM");
  serve_cmd->add_option("--checkpoint", serve.checkpoint)->required()->check(CLI::ExistingFile);
  serve_cmd->add_option("--host", serve.host)->capture_default_str();
  serve_cmd->add_option("--port", serve.port, "0 picks a free port")->capture_default_str();
  serve_cmd->add_option("--journal-dir", serve.journal_dir, "persist workspaces here");
  serve_cmd->add_option("--snapshot-every", serve.snapshot_every)->capture_default_str();
  add_scoring_flags(serve_cmd, serve.scoring, serve.algorithm);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  if (quiet) {
    set_log_level(LogLevel::kQuiet);
  } else if (verbosity > 0) {
    set_log_level(verbosity > 1 ? LogLevel::kDebug : LogLevel::kInfo);
  }

  try {
    if (*synth_cmd) return cmd_synth(synth);
    if (*init_cmd) return cmd_init(init);
    if (*train_cmd) return cmd_train(train);
    if (*eval_cmd) return cmd_eval(eval);
    if (*pred_cmd) return cmd_predict(pred);
    if (*serve_cmd) return cmd_serve(serve);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
