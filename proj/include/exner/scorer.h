#ifndef EXNER_SCORER_H_
#define EXNER_SCORER_H_

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "exner/corpus.h"
#include "exner/encoder.h"
#include "exner/simcore.h"
#include "exner/trainer.h"
#include "json.hpp"

namespace exner {

enum class ScoringAlgorithm {
  kHardAttention,
  kSoftAttention,
  kTopKSoftAttention,
  kVoting,
};

std::string to_string(ScoringAlgorithm algorithm);
ScoringAlgorithm parse_scoring_algorithm(const std::string& name);

struct ScoringConfig {
  ScoringAlgorithm algorithm = ScoringAlgorithm::kHardAttention;
  int k = 5;
  double temperature = 1.0;
  int top_n = 5;  // spans kept per support when voting
  std::optional<std::size_t> max_span_length;

  void validate() const;
};

// One support example's share in a predicted span.
struct TraceEntry {
  std::string support_id;
  double start_dot = 0.0;
  double end_dot = 0.0;
  double attention_weight = 0.0;
};

// Inclusive query token range. start == end == kNoSpan marks the sentinel
// (no entity of this type).
struct ScoredSpan {
  static constexpr std::size_t kNoSpan = std::numeric_limits<std::size_t>::max();

  std::size_t start = kNoSpan;
  std::size_t end = kNoSpan;
  double p_start = 0.0;
  double p_end = 0.0;
  double span_score = 0.0;
  std::string entity_type;
  std::vector<TraceEntry> trace;

  bool is_no_span() const { return start == kNoSpan; }
  bool overlaps(const ScoredSpan& o) const {
    return !is_no_span() && !o.is_no_span() && start <= o.end && o.start <= end;
  }
};

struct Prediction {
  std::vector<std::string> query_tokens;
  std::vector<ScoredSpan> spans;  // sorted by descending span_score
  bool truncated = false;
  std::vector<std::string> warnings;
};

// A support example encoded once and reused across queries.
struct EncodedSupport {
  std::string id;
  std::string entity_type;
  SupportEncoding encoding;
};

struct TypeSupports {
  std::string entity_type;
  std::vector<const EncodedSupport*> supports;
};

using SupportRefs = std::span<const SupportEncoding* const>;

// Per position, the sum of the K largest boundary dot products over supports.
BoundaryScores hard_attention_scores(const EncodedSequence& query,
                                     SupportRefs supports, int k);

// Softmax(T * cos)-weighted sum over all supports.
BoundaryScores soft_attention_scores(const EncodedSequence& query,
                                     SupportRefs supports, double temperature);

// As soft_attention_scores restricted to the K supports with the largest
// attention weights; the kept weights are not renormalized.
BoundaryScores topk_soft_attention_scores(const EncodedSequence& query,
                                          SupportRefs supports, int k,
                                          double temperature);

// Best (start, end) with start <= end (within max_span_length) or the
// sentinel pair, by p_start + p_end. Scores are indexed by position with the
// sentinel at 0; the returned span uses token indices.
ScoredSpan top_span(const BoundaryScores& scores,
                    std::optional<std::size_t> max_span_length = std::nullopt);

// Spans built from the n best start and n best end positions (sentinel
// excluded), best first, at most n of them.
std::vector<ScoredSpan> top_n_spans(const Vector& start_scores,
                                    const Vector& end_scores, int n,
                                    std::optional<std::size_t> max_span_length =
                                        std::nullopt);

// Sorts by descending score (ties: lower start, then type name) and greedily
// keeps spans that do not overlap an already kept one.
std::vector<ScoredSpan> remove_overlaps(std::vector<ScoredSpan> spans);

// Encodes every support of `set` once.
std::vector<EncodedSupport> encode_support_set(const Encoder& encoder,
                                               const SupportSet& set);

// Groups encoded supports by type (name order, insertion order within type).
std::vector<TypeSupports> group_by_type(std::span<const EncodedSupport> supports);

// Per-type best span with the configured attention scorer, then cross-type
// overlap removal. Voting is dispatched to vote_predict_encoded.
Prediction predict_encoded(const EncodedSequence& query,
                           std::span<const TypeSupports> groups,
                           const ScoringConfig& cfg);

// Each support votes for the best of its top-n spans; each type takes its
// most-voted span. Types are not reconciled, so outputs may overlap.
Prediction vote_predict_encoded(const EncodedSequence& query,
                                std::span<const TypeSupports> groups,
                                const ScoringConfig& cfg);

Prediction predict(const std::vector<std::string>& query_tokens,
                   const SupportSet& support_set, const Encoder& encoder,
                   const ScoringConfig& cfg);
Prediction vote_predict(const std::vector<std::string>& query_tokens,
                        const SupportSet& support_set, const Encoder& encoder,
                        const ScoringConfig& cfg);

// {query_tokens, spans: [{start, end, entity_type, span_score, p_start, p_end,
//  trace: [{support_id, start_dot, end_dot, attention_weight}]}]}
nlohmann::json prediction_to_json(const Prediction& prediction);

}  // namespace exner

#endif  // EXNER_SCORER_H_
