#ifndef EXNER_TRAINER_H_
#define EXNER_TRAINER_H_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "exner/corpus.h"
#include "exner/encoder.h"
#include "exner/simcore.h"
#include "exner/toy_transformer.h"

namespace exner {

// Maps raw attention-weighted scores into probabilities for the loss.
enum class Squash { kSigmoid, kPositionSoftmax };

std::string to_string(Squash squash);
Squash parse_squash(const std::string& name);

struct TrainingConfig {
  int k = 5;                  // supports per episode
  double temperature = 1.0;
  double learning_rate = 5e-5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double weight_decay = 0.0;
  std::size_t max_sequence_length = 384;
  double neg_pos_ratio = 1.0;
  int batch_size = 8;
  int epochs = 3;
  std::uint64_t seed = 0;
  Squash squash = Squash::kSigmoid;

  void validate() const;
};

// Start/end scores over the query positions, sentinel first.
struct BoundaryScores {
  Vector p_start;
  Vector p_end;
  std::string entity_type;
};

struct TrainingLabels {
  Vector y_start;
  Vector y_end;
};

struct LossBreakdown {
  double l_start = 0.0;
  double l_end = 0.0;
  double total = 0.0;
};

enum class Polarity { kPositive, kNegative };

struct TrainingEpisode {
  Sentence query;
  std::string entity_type;
  std::vector<EntitySpan> gold_spans;  // empty for negatives
  std::vector<SupportExample> supports;
  Polarity polarity = Polarity::kPositive;
};

// Attention-weighted sums of per-support boundary dot products, before any
// squash. `weights`, when given, receives the sentence attention.
BoundaryScores raw_episode_scores(const EncodedSequence& query,
                                  std::span<const SupportEncoding* const> supports,
                                  double temperature,
                                  AttentionWeights* weights = nullptr);

BoundaryScores squash_scores(BoundaryScores raw, Squash squash);

// raw_episode_scores followed by the training squash; values in (0, 1).
BoundaryScores episode_scores(const EncodedSequence& query,
                              std::span<const SupportEncoding* const> supports,
                              double temperature, Squash squash = Squash::kSigmoid);

// 1 at gold starts/ends for positives; 1 at the sentinel only for negatives.
TrainingLabels make_labels(std::size_t query_tokens, const TrainingEpisode& episode);

inline constexpr double kProbabilityClamp = 1e-7;

// Binary cross-entropy summed over positions, per boundary; total is their
// mean. Probabilities are clamped to [1e-7, 1 - 1e-7].
LossBreakdown episode_loss(const BoundaryScores& scores,
                           const TrainingLabels& labels);

// One positive episode per (query, gold type) and ceil(neg_pos_ratio)
// negatives whose supports come from types absent in the query. Supports are
// drawn without replacement when enough exist (excluding examples cut from
// the query itself), with replacement otherwise.
std::vector<TrainingEpisode> build_episodes(
    const std::vector<LabeledSentence>& corpus, const SupportSet& pool,
    const TrainingConfig& cfg, std::uint64_t seed);

// Loss of one episode under `model`; when `grads` is non-null the gradient
// with respect to every parameter is added into it.
LossBreakdown episode_objective(const ToyTransformer& model,
                                const TrainingEpisode& episode,
                                const TrainingConfig& cfg,
                                ToyParams* grads);

// Adam moments with decoupled weight decay.
struct AdamState {
  ToyParams first_moment;
  ToyParams second_moment;
  std::int64_t step = 0;

  static AdamState zeros_for(const ToyParams& params);
  void apply(ToyParams& params, const ToyParams& grads, const TrainingConfig& cfg);
};

struct TrainResult {
  std::vector<double> epoch_loss;  // mean episode loss per epoch
  AdamState optimizer;
};

// Called after each epoch with (epoch index, mean loss).
using EpochCallback = std::function<void(int, double)>;

// Episodic fine-tuning. Deterministic given cfg.seed. Throws
// std::runtime_error if the loss becomes NaN.
TrainResult train(const std::vector<LabeledSentence>& corpus,
                  const SupportSet& support_pool, ToyTransformer& model,
                  const TrainingConfig& cfg, const EpochCallback& on_epoch = {});

}  // namespace exner

#endif  // EXNER_TRAINER_H_
