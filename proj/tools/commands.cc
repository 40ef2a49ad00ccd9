#include "commands.h"

#include <pthread.h>
#include <signal.h>

#include <atomic>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <thread>

#include "exner/checkpoint.h"
#include "exner/corpus.h"
#include "exner/errors.h"
#include "exner/evalharness.h"
#include "exner/log.h"
#include "exner/server.h"
#include "exner/synthgen.h"
#include "exner/toy_transformer.h"

namespace exner::cli {

namespace {

ScoringConfig checked_scoring(ScoringConfig cfg, const std::string& algorithm) {
  try {
    cfg.algorithm = parse_scoring_algorithm(algorithm);
    cfg.validate();
  } catch (const InputError& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

std::unique_ptr<Encoder> load_encoder(const std::filesystem::path& path) {
  return make_encoder(load_checkpoint(path));
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& losses) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,mean_loss\n";
  char buf[64];
  for (std::size_t e = 0; e < losses.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%.17g", losses[e]);
    out << e << ',' << buf << '\n';
  }
}

}  // namespace

int cmd_synth(const SynthOptions& opt) {
  SynthSpec spec = default_synth_spec(opt.seed);
  if (opt.train_size) spec.train_size = opt.train_size;
  if (opt.test_size) spec.test_size = opt.test_size;
  if (opt.pool_size) spec.pool_size = opt.pool_size;
  const SynthCorpus corpus = generate(spec);
  write_synth_corpus(corpus, opt.out);
  info("wrote ", corpus.train.size(), " train and ", corpus.test.size(),
       " test sentences to ", opt.out.string());
  return 0;
}

int cmd_init(InitOptions opt) {
  try {
    opt.encoder.kind = parse_encoder_kind(opt.encoder_kind);
    opt.encoder.validate();
  } catch (const InputError& e) {
    throw UsageError(e.what());
  }
  std::unique_ptr<Encoder> encoder;
  if (opt.encoder.kind == EncoderKind::kPrecomputed) {
    if (opt.vectors.empty()) throw UsageError("--vectors is required for precomputed encoders");
    encoder = load_precomputed(opt.vectors, opt.encoder);
  } else {
    encoder = make_encoder(opt.encoder);
  }
  save_checkpoint(opt.out, checkpoint_for(*encoder));
  return 0;
}

int cmd_train(TrainOptions opt) {
  try {
    opt.training.squash = parse_squash(opt.squash);
    opt.training.validate();
    opt.encoder.kind = EncoderKind::kToyTransformer;
    opt.encoder.max_sequence_length = opt.training.max_sequence_length;
    opt.encoder.validate();
  } catch (const InputError& e) {
    throw UsageError(e.what());
  }
  const auto corpus = read_bio_corpus(opt.corpus);
  SupportSet pool;
  if (opt.pool.empty()) {
    for (const auto& ls : corpus) {
      for (auto& ex : explode_to_support_examples(ls)) pool.add(std::move(ex));
    }
  } else {
    pool = build_support_set(read_support_json(opt.pool));
  }

  std::unique_ptr<ToyTransformer> model;
  if (opt.init.empty()) {
    model = std::make_unique<ToyTransformer>(opt.encoder);
  } else {
    Checkpoint start = load_checkpoint(opt.init);
    if (start.encoder.kind != EncoderKind::kToyTransformer) {
      throw UsageError("only toy-transformer checkpoints can be trained");
    }
    model = std::make_unique<ToyTransformer>(start.encoder, std::move(*start.params));
  }

  TrainResult result = train(corpus, pool, *model, opt.training, [](int epoch, double loss) {
    info("epoch ", epoch, " mean loss ", loss);
  });

  Checkpoint ck = checkpoint_for(*model);
  ck.optimizer = std::move(result.optimizer);
  ck.training = opt.training;
  ck.loss_curve = result.epoch_loss;
  save_checkpoint(opt.out, ck);
  const auto loss_path =
      opt.loss_csv.empty() ? std::filesystem::path(opt.out.string() + ".loss.csv") : opt.loss_csv;
  write_loss_csv(loss_path, result.epoch_loss);
  return 0;
}

int cmd_eval(EvalOptions opt) {
  opt.scoring = checked_scoring(opt.scoring, opt.algorithm);
  EvalProtocol protocol;
  protocol.budgets = opt.budgets;
  protocol.trials = opt.trials;
  protocol.seed = opt.seed;
  try {
    protocol.validate();
  } catch (const InputError& e) {
    throw UsageError(e.what());
  }
  const auto encoder = load_encoder(opt.checkpoint);
  const auto test = read_bio_corpus(opt.test);
  const SupportSet pool = build_support_set(read_support_json(opt.pool));
  const EvalReport report = run_protocol(test, pool, *encoder, opt.scoring, protocol);
  write_report(report, opt.out_csv, opt.out_json);
  for (const auto& s : report.summary) {
    info("budget ", s.budget, " F1 ", s.f1.mean, " +- ", s.f1.std);
  }
  return 0;
}

int cmd_predict(PredictOptions opt) {
  opt.scoring = checked_scoring(opt.scoring, opt.algorithm);
  std::vector<std::string> tokens = opt.tokens;
  if (tokens.empty() && opt.text.find_first_not_of(" \t\r\n") != std::string::npos) {
    tokens = query_from_json(nlohmann::json{{"text", opt.text}});
  }
  if (tokens.empty()) throw UsageError("the query is empty");
  const auto encoder = load_encoder(opt.checkpoint);
  const SupportSet supports = build_support_set(read_support_json(opt.supports));
  const Prediction p = predict(tokens, supports, *encoder, opt.scoring);
  std::cout << prediction_to_json(p).dump(2) << '\n';
  return 0;
}

int cmd_serve(ServeOptions opt) {
  opt.scoring = checked_scoring(opt.scoring, opt.algorithm);
  if (opt.port < 0 || opt.port > 65535) throw UsageError("port out of range");
  std::shared_ptr<const Encoder> encoder = load_encoder(opt.checkpoint);

  // Handled synchronously below; every thread started from here inherits the mask.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  ServerConfig cfg;
  cfg.host = opt.host;
  cfg.port = opt.port;
  if (!opt.journal_dir.empty()) cfg.journal_dir = opt.journal_dir;
  cfg.snapshot_every = opt.snapshot_every;
  cfg.scoring = opt.scoring;
  cfg.checkpoint_ref = opt.checkpoint.filename().string();
  Server server(cfg, encoder);

  std::atomic<bool> done{false};
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    if (!done) info("signal ", sig, ", shutting down");
    server.stop();
  });
  auto finish = [&] {
    done = true;
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
  };
  try {
    server.run([](int port) { std::cout << "listening on port " << port << std::endl; });
  } catch (...) {
    finish();
    throw;
  }
  // run() only returns after the waiter called stop().
  done = true;
  waiter.join();
  server.flush();
  return 0;
}

}  // namespace exner::cli
