#ifndef EXNER_TOOLS_COMMANDS_H_
#define EXNER_TOOLS_COMMANDS_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "exner/encoder.h"
#include "exner/scorer.h"
#include "exner/trainer.h"

namespace exner::cli {

// Bad flag values or unusable inputs detected before any work: exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SynthOptions {
  std::filesystem::path out;
  std::uint64_t seed = 1;
  std::size_t train_size = 0;  // 0 keeps the default spec's size
  std::size_t test_size = 0;
  std::size_t pool_size = 0;
};

struct InitOptions {
  std::filesystem::path out;
  EncoderConfig encoder;
  std::string encoder_kind = "toy-transformer";
  std::filesystem::path vectors;  // precomputed encoders only
};

struct TrainOptions {
  std::filesystem::path corpus;
  std::filesystem::path pool;  // defaults to the corpus's own mentions
  std::filesystem::path out;
  std::filesystem::path loss_csv;  // defaults to <out>.loss.csv
  std::filesystem::path init;      // optional starting checkpoint
  EncoderConfig encoder;
  TrainingConfig training;
  std::string squash = "sigmoid";
};

struct EvalOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path test;
  std::filesystem::path pool;
  std::filesystem::path out_csv;
  std::filesystem::path out_json;
  std::vector<int> budgets;
  int trials = 10;
  std::uint64_t seed = 0;
  ScoringConfig scoring;
  std::string algorithm = "hard-attention";
};

struct PredictOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path supports;
  std::vector<std::string> tokens;
  std::string text;
  ScoringConfig scoring;
  std::string algorithm = "hard-attention";
};

struct ServeOptions {
  std::filesystem::path checkpoint;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path journal_dir;
  std::uint64_t snapshot_every = 64;
  ScoringConfig scoring;
  std::string algorithm = "hard-attention";
};

int cmd_synth(const SynthOptions& opt);
int cmd_init(InitOptions opt);
int cmd_train(TrainOptions opt);
int cmd_eval(EvalOptions opt);
int cmd_predict(PredictOptions opt);
int cmd_serve(ServeOptions opt);

}  // namespace exner::cli

#endif  // EXNER_TOOLS_COMMANDS_H_
