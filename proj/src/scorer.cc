#include "exner/scorer.h"

#include <algorithm>
#include <map>
#include <numeric>
#include <tuple>

#include "exner/errors.h"
#include "exner/log.h"

namespace exner {

using json = nlohmann::json;

std::string to_string(ScoringAlgorithm algorithm) {
  switch (algorithm) {
    case ScoringAlgorithm::kHardAttention: return "hard-attention";
    case ScoringAlgorithm::kSoftAttention: return "soft-attention";
    case ScoringAlgorithm::kTopKSoftAttention: return "topk-soft-attention";
    case ScoringAlgorithm::kVoting: return "voting";
  }
  return "unknown";
}

ScoringAlgorithm parse_scoring_algorithm(const std::string& name) {
  if (name == "hard-attention" || name == "hard") return ScoringAlgorithm::kHardAttention;
  if (name == "soft-attention" || name == "soft") return ScoringAlgorithm::kSoftAttention;
  if (name == "topk-soft-attention" || name == "topk-soft") {
    return ScoringAlgorithm::kTopKSoftAttention;
  }
  if (name == "voting") return ScoringAlgorithm::kVoting;
  throw InputError("unknown scoring algorithm '" + name + "'");
}

void ScoringConfig::validate() const {
  if (k < 1) throw InputError("K must be >= 1");
  if (top_n < 1) throw InputError("top_n must be >= 1");
  if (!(temperature > 0)) throw InputError("temperature must be positive");
  if (max_span_length && *max_span_length < 1) {
    throw InputError("max_span_length must be >= 1");
  }
}

namespace {

// Indices of the k largest values, largest first; ties keep lower index.
std::vector<std::size_t> top_indices(const std::vector<double>& values, std::size_t k) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      return values[a] > values[b] || (values[a] == values[b] && a < b);
                    });
  idx.resize(k);
  return idx;
}

std::vector<PairSimilarity> all_similarities(const EncodedSequence& query,
                                             SupportRefs supports) {
  std::vector<PairSimilarity> out;
  out.reserve(supports.size());
  for (const auto* s : supports) out.push_back(token_boundary_similarity(query, *s));
  return out;
}

AttentionWeights attention_for(const EncodedSequence& query, SupportRefs supports,
                               double temperature) {
  std::vector<const Vector*> reps;
  reps.reserve(supports.size());
  for (const auto* s : supports) reps.push_back(&s->base.sentence_rep);
  return sentence_attention(query.sentence_rep, reps, temperature);
}

bool span_fits(std::size_t start, std::size_t end,
               std::optional<std::size_t> max_len) {
  return start <= end && (!max_len || end - start + 1 <= *max_len);
}

bool ranks_before(const ScoredSpan& a, const ScoredSpan& b) {
  if (a.span_score != b.span_score) return a.span_score > b.span_score;
  if (a.start != b.start) return a.start < b.start;
  if (a.end != b.end) return a.end < b.end;
  return a.entity_type < b.entity_type;
}

std::vector<const SupportEncoding*> encodings_of(const TypeSupports& group) {
  std::vector<const SupportEncoding*> out;
  out.reserve(group.supports.size());
  for (const auto* s : group.supports) out.push_back(&s->encoding);
  return out;
}

double row_dot(const EncodedSequence& q, std::size_t pos, const Vector& v) {
  return q.vectors.row(static_cast<Eigen::Index>(pos)).dot(v);
}

void sort_trace(std::vector<TraceEntry>& trace) {
  std::stable_sort(trace.begin(), trace.end(), [](const TraceEntry& a, const TraceEntry& b) {
    return a.attention_weight * (a.start_dot + a.end_dot) >
           b.attention_weight * (b.start_dot + b.end_dot);
  });
}

// Which supports produced the winning span's scores.
std::vector<TraceEntry> attention_trace(const EncodedSequence& query,
                                        const TypeSupports& group,
                                        const ScoredSpan& span,
                                        const ScoringConfig& cfg) {
  const std::size_t sp = span.start + 1;
  const std::size_t ep = span.end + 1;
  const std::size_t m = group.supports.size();
  std::vector<double> start_dots(m), end_dots(m);
  for (std::size_t j = 0; j < m; ++j) {
    start_dots[j] = row_dot(query, sp, group.supports[j]->encoding.boundary_start);
    end_dots[j] = row_dot(query, ep, group.supports[j]->encoding.boundary_end);
  }
  std::vector<double> weight(m, 0.0);
  const auto k = static_cast<std::size_t>(cfg.k);
  if (cfg.algorithm == ScoringAlgorithm::kHardAttention) {
    for (std::size_t j : top_indices(start_dots, k)) weight[j] = 1.0;
    for (std::size_t j : top_indices(end_dots, k)) weight[j] = 1.0;
  } else {
    const auto encs = encodings_of(group);
    const AttentionWeights att = attention_for(query, encs, cfg.temperature);
    if (cfg.algorithm == ScoringAlgorithm::kSoftAttention) {
      weight = att.weights;
    } else {
      for (std::size_t j : top_indices(att.weights, k)) weight[j] = att.weights[j];
    }
  }
  std::vector<TraceEntry> trace;
  for (std::size_t j = 0; j < m; ++j) {
    if (weight[j] == 0.0) continue;
    trace.push_back({group.supports[j]->id, start_dots[j], end_dots[j], weight[j]});
  }
  sort_trace(trace);
  return trace;
}

}  // namespace

BoundaryScores hard_attention_scores(const EncodedSequence& query,
                                     SupportRefs supports, int k) {
  if (supports.empty()) throw InputError("hard attention over zero supports");
  const auto sims = all_similarities(query, supports);
  const Eigen::Index n = query.vectors.rows();
  BoundaryScores out{Vector::Zero(n), Vector::Zero(n), {}};
  const std::size_t keep = std::min(static_cast<std::size_t>(k), supports.size());
  std::vector<double> starts(supports.size()), ends(supports.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < sims.size(); ++j) {
      starts[j] = sims[j].start_sim[i];
      ends[j] = sims[j].end_sim[i];
    }
    std::nth_element(starts.begin(), starts.begin() + static_cast<std::ptrdiff_t>(keep - 1),
                     starts.end(), std::greater<>());
    std::nth_element(ends.begin(), ends.begin() + static_cast<std::ptrdiff_t>(keep - 1),
                     ends.end(), std::greater<>());
    std::sort(starts.begin(), starts.begin() + static_cast<std::ptrdiff_t>(keep), std::greater<>());
    std::sort(ends.begin(), ends.begin() + static_cast<std::ptrdiff_t>(keep), std::greater<>());
    double s = 0.0, e = 0.0;
    for (std::size_t r = 0; r < keep; ++r) {
      s += starts[r];
      e += ends[r];
    }
    out.p_start[i] = s;
    out.p_end[i] = e;
  }
  return out;
}

BoundaryScores soft_attention_scores(const EncodedSequence& query,
                                     SupportRefs supports, double temperature) {
  return raw_episode_scores(query, supports, temperature);
}

BoundaryScores topk_soft_attention_scores(const EncodedSequence& query,
                                          SupportRefs supports, int k,
                                          double temperature) {
  if (supports.empty()) throw InputError("attention over zero supports");
  const AttentionWeights att = attention_for(query, supports, temperature);
  const Eigen::Index n = query.vectors.rows();
  BoundaryScores out{Vector::Zero(n), Vector::Zero(n), {}};
  for (std::size_t j : top_indices(att.weights, static_cast<std::size_t>(k))) {
    const PairSimilarity sim = token_boundary_similarity(query, *supports[j]);
    out.p_start += att.weights[j] * sim.start_sim;
    out.p_end += att.weights[j] * sim.end_sim;
  }
  return out;
}

ScoredSpan top_span(const BoundaryScores& scores,
                    std::optional<std::size_t> max_span_length) {
  if (scores.p_start.size() == 0 || scores.p_start.size() != scores.p_end.size()) {
    throw InputError("boundary scores must be non-empty and aligned");
  }
  ScoredSpan best;
  best.entity_type = scores.entity_type;
  best.p_start = scores.p_start[0];
  best.p_end = scores.p_end[0];
  best.span_score = best.p_start + best.p_end;
  const auto n = static_cast<std::size_t>(scores.p_start.size());
  for (std::size_t s = 1; s < n; ++s) {
    for (std::size_t e = s; e < n; ++e) {
      if (!span_fits(s, e, max_span_length)) break;
      const double total = scores.p_start[static_cast<Eigen::Index>(s)] +
                           scores.p_end[static_cast<Eigen::Index>(e)];
      if (total > best.span_score) {
        best.start = s - 1;
        best.end = e - 1;
        best.p_start = scores.p_start[static_cast<Eigen::Index>(s)];
        best.p_end = scores.p_end[static_cast<Eigen::Index>(e)];
        best.span_score = total;
      }
    }
  }
  return best;
}

std::vector<ScoredSpan> top_n_spans(const Vector& start_scores,
                                    const Vector& end_scores, int n,
                                    std::optional<std::size_t> max_span_length) {
  const auto len = static_cast<std::size_t>(start_scores.size());
  std::vector<double> starts, ends;
  for (std::size_t i = 1; i < len; ++i) {
    starts.push_back(start_scores[static_cast<Eigen::Index>(i)]);
    ends.push_back(end_scores[static_cast<Eigen::Index>(i)]);
  }
  const auto top_s = top_indices(starts, static_cast<std::size_t>(n));
  const auto top_e = top_indices(ends, static_cast<std::size_t>(n));
  std::vector<ScoredSpan> out;
  for (std::size_t s : top_s) {
    for (std::size_t e : top_e) {
      if (!span_fits(s, e, max_span_length)) continue;
      ScoredSpan span;
      span.start = s;
      span.end = e;
      span.p_start = starts[s];
      span.p_end = ends[e];
      span.span_score = span.p_start + span.p_end;
      out.push_back(std::move(span));
    }
  }
  std::sort(out.begin(), out.end(), ranks_before);
  if (out.size() > static_cast<std::size_t>(n)) out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<ScoredSpan> remove_overlaps(std::vector<ScoredSpan> spans) {
  std::sort(spans.begin(), spans.end(), ranks_before);
  std::vector<ScoredSpan> kept;
  for (auto& span : spans) {
    if (span.is_no_span()) continue;
    const bool clash = std::any_of(kept.begin(), kept.end(),
                                   [&](const ScoredSpan& k) { return k.overlaps(span); });
    if (!clash) kept.push_back(std::move(span));
  }
  return kept;
}

std::vector<EncodedSupport> encode_support_set(const Encoder& encoder,
                                               const SupportSet& set) {
  std::vector<EncodedSupport> out;
  out.reserve(set.total());
  for (const auto& [type, list] : set.entries()) {
    for (const auto& ex : list) {
      out.push_back({ex.id, type, encode_support(encoder, ex)});
    }
  }
  return out;
}

std::vector<TypeSupports> group_by_type(std::span<const EncodedSupport> supports) {
  std::map<std::string, std::vector<const EncodedSupport*>> by_type;
  for (const auto& s : supports) by_type[s.entity_type].push_back(&s);
  std::vector<TypeSupports> out;
  for (auto& [type, list] : by_type) out.push_back({type, std::move(list)});
  return out;
}

Prediction predict_encoded(const EncodedSequence& query,
                           std::span<const TypeSupports> groups,
                           const ScoringConfig& cfg) {
  cfg.validate();
  if (cfg.algorithm == ScoringAlgorithm::kVoting) {
    return vote_predict_encoded(query, groups, cfg);
  }
  Prediction out;
  out.truncated = query.truncated;
  std::vector<ScoredSpan> candidates;
  for (const auto& group : groups) {
    if (group.supports.empty()) {
      warn("entity type ", group.entity_type, " has no support examples; skipped");
      out.warnings.push_back("entity type '" + group.entity_type +
                             "' has no support examples");
      continue;
    }
    const auto encs = encodings_of(group);
    BoundaryScores scores;
    switch (cfg.algorithm) {
      case ScoringAlgorithm::kHardAttention:
        scores = hard_attention_scores(query, encs, cfg.k);
        break;
      case ScoringAlgorithm::kSoftAttention:
        scores = soft_attention_scores(query, encs, cfg.temperature);
        break;
      default:
        scores = topk_soft_attention_scores(query, encs, cfg.k, cfg.temperature);
        break;
    }
    scores.entity_type = group.entity_type;
    ScoredSpan best = top_span(scores, cfg.max_span_length);
    if (best.is_no_span()) continue;
    best.trace = attention_trace(query, group, best, cfg);
    candidates.push_back(std::move(best));
  }
  out.spans = remove_overlaps(std::move(candidates));
  return out;
}

Prediction vote_predict_encoded(const EncodedSequence& query,
                                std::span<const TypeSupports> groups,
                                const ScoringConfig& cfg) {
  cfg.validate();
  Prediction out;
  out.truncated = query.truncated;
  for (const auto& group : groups) {
    if (group.supports.empty()) {
      warn("entity type ", group.entity_type, " has no support examples; skipped");
      out.warnings.push_back("entity type '" + group.entity_type +
                             "' has no support examples");
      continue;
    }
    struct Tally {
      int votes = 0;
      double score_sum = 0.0;
      double start_sum = 0.0;
      double end_sum = 0.0;
      std::vector<TraceEntry> voters;
    };
    std::map<std::pair<std::size_t, std::size_t>, Tally> tallies;
    for (const auto* support : group.supports) {
      const PairSimilarity sim = token_boundary_similarity(query, support->encoding);
      const auto spans = top_n_spans(sim.start_sim, sim.end_sim, cfg.top_n,
                                     cfg.max_span_length);
      if (spans.empty()) continue;
      const ScoredSpan& vote = spans.front();
      Tally& t = tallies[{vote.start, vote.end}];
      ++t.votes;
      t.score_sum += vote.span_score;
      t.start_sum += vote.p_start;
      t.end_sum += vote.p_end;
      t.voters.push_back({support->id, vote.p_start, vote.p_end, 1.0});
    }
    if (tallies.empty()) continue;
    auto winner = tallies.begin();
    for (auto it = std::next(tallies.begin()); it != tallies.end(); ++it) {
      const Tally& a = it->second;
      const Tally& b = winner->second;
      // Map order already puts lower (start, end) first.
      if (a.votes > b.votes || (a.votes == b.votes && a.score_sum > b.score_sum)) {
        winner = it;
      }
    }
    const Tally& w = winner->second;
    ScoredSpan span;
    span.start = winner->first.first;
    span.end = winner->first.second;
    span.p_start = w.start_sum / w.votes;
    span.p_end = w.end_sum / w.votes;
    span.span_score = span.p_start + span.p_end;
    span.entity_type = group.entity_type;
    span.trace = w.voters;
    sort_trace(span.trace);
    out.spans.push_back(std::move(span));
  }
  std::sort(out.spans.begin(), out.spans.end(), ranks_before);
  return out;
}

namespace {

Prediction run_offline(const std::vector<std::string>& query_tokens,
                       const SupportSet& support_set, const Encoder& encoder,
                       const ScoringConfig& cfg, bool voting) {
  if (query_tokens.empty()) throw InputError("empty query");
  if (support_set.empty()) throw ConflictError("support set is empty");
  const std::vector<EncodedSupport> encoded = encode_support_set(encoder, support_set);
  const std::vector<TypeSupports> groups = group_by_type(encoded);
  const EncodedSequence query = encoder.encode(query_tokens);
  Prediction p = voting ? vote_predict_encoded(query, groups, cfg)
                        : predict_encoded(query, groups, cfg);
  p.query_tokens.assign(query_tokens.begin(),
                        query_tokens.begin() +
                            static_cast<std::ptrdiff_t>(query.num_tokens()));
  if (p.truncated) p.warnings.push_back("query truncated to max sequence length");
  return p;
}

}  // namespace

Prediction predict(const std::vector<std::string>& query_tokens,
                   const SupportSet& support_set, const Encoder& encoder,
                   const ScoringConfig& cfg) {
  return run_offline(query_tokens, support_set, encoder, cfg,
                     cfg.algorithm == ScoringAlgorithm::kVoting);
}

Prediction vote_predict(const std::vector<std::string>& query_tokens,
                        const SupportSet& support_set, const Encoder& encoder,
                        const ScoringConfig& cfg) {
  return run_offline(query_tokens, support_set, encoder, cfg, true);
}

json prediction_to_json(const Prediction& prediction) {
  json spans = json::array();
  for (const auto& s : prediction.spans) {
    json trace = json::array();
    for (const auto& t : s.trace) {
      trace.push_back({{"support_id", t.support_id},
                       {"start_dot", t.start_dot},
                       {"end_dot", t.end_dot},
                       {"attention_weight", t.attention_weight}});
    }
    spans.push_back({{"start", s.start},
                     {"end", s.end},
                     {"entity_type", s.entity_type},
                     {"span_score", s.span_score},
                     {"p_start", s.p_start},
                     {"p_end", s.p_end},
                     {"trace", std::move(trace)}});
  }
  json out;
  out["query_tokens"] = prediction.query_tokens;
  out["spans"] = std::move(spans);
  out["truncated"] = prediction.truncated;
  if (!prediction.warnings.empty()) out["warnings"] = prediction.warnings;
  return out;
}

}  // namespace exner
