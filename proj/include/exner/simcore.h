#ifndef EXNER_SIMCORE_H_
#define EXNER_SIMCORE_H_

#include <span>
#include <vector>

#include "exner/encoder.h"

namespace exner {

// Per-position dot products of query rows with a support's boundary vectors.
// Both vectors have query.num_tokens() + 1 entries (sentinel first).
struct PairSimilarity {
  Vector start_sim;
  Vector end_sim;
};

struct AttentionWeights {
  std::vector<double> weights;
  double temperature = 1.0;
};

// Throws InputError when the dimensions differ.
PairSimilarity token_boundary_similarity(const EncodedSequence& query,
                                         const SupportEncoding& support);

// Cosine similarity; 0 when either vector has zero norm.
double cosine(const Vector& a, const Vector& b);

// softmax_j(temperature * cos(query_rep, support_reps[j])), max-subtracted.
// Throws InputError on an empty support list or non-positive temperature.
AttentionWeights sentence_attention(const Vector& query_rep,
                                    std::span<const Vector* const> support_reps,
                                    double temperature);

// Max-subtracted softmax over `logits`.
std::vector<double> softmax(std::span<const double> logits);

}  // namespace exner

#endif  // EXNER_SIMCORE_H_
