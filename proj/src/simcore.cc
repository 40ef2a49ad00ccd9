#include "exner/simcore.h"

#include <algorithm>
#include <cmath>

#include "exner/errors.h"
#include "exner/log.h"

namespace exner {

PairSimilarity token_boundary_similarity(const EncodedSequence& query,
                                         const SupportEncoding& support) {
  if (query.vectors.cols() != support.boundary_start.size() ||
      query.vectors.cols() != support.boundary_end.size()) {
    throw InputError("query dimension " + std::to_string(query.vectors.cols()) +
                     " does not match support dimension " +
                     std::to_string(support.boundary_start.size()));
  }
  return {query.vectors * support.boundary_start,
          query.vectors * support.boundary_end};
}

double cosine(const Vector& a, const Vector& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) {
    warn("zero-norm sentence representation; cosine taken as 0");
    return 0.0;
  }
  return a.dot(b) / (na * nb);
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.begin(), logits.end());
  if (out.empty()) return out;
  const double mx = *std::max_element(out.begin(), out.end());
  double total = 0.0;
  for (double& v : out) {
    v = std::exp(v - mx);
    total += v;
  }
  for (double& v : out) v /= total;
  return out;
}

AttentionWeights sentence_attention(const Vector& query_rep,
                                    std::span<const Vector* const> support_reps,
                                    double temperature) {
  if (support_reps.empty()) throw InputError("attention over zero supports");
  if (!(temperature > 0.0)) throw InputError("temperature must be positive");
  std::vector<double> logits;
  logits.reserve(support_reps.size());
  for (const Vector* rep : support_reps) {
    if (rep->size() != query_rep.size()) {
      throw InputError("sentence representation dimensions differ");
    }
    logits.push_back(temperature * cosine(query_rep, *rep));
  }
  return {softmax(logits), temperature};
}

}  // namespace exner
