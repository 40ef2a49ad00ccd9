#include "exner/trainer.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include "exner/errors.h"
#include "exner/log.h"

namespace exner {

std::string to_string(Squash squash) {
  return squash == Squash::kSigmoid ? "sigmoid" : "position-softmax";
}

Squash parse_squash(const std::string& name) {
  if (name == "sigmoid") return Squash::kSigmoid;
  if (name == "position-softmax") return Squash::kPositionSoftmax;
  throw InputError("unknown squash '" + name + "'");
}

void TrainingConfig::validate() const {
  if (k < 1) throw InputError("K must be >= 1");
  if (!(temperature > 0)) throw InputError("temperature must be positive");
  if (learning_rate < 0) throw InputError("learning rate must be >= 0");
  if (!(adam_epsilon > 0)) throw InputError("adam epsilon must be positive");
  if (weight_decay < 0) throw InputError("weight decay must be >= 0");
  if (max_sequence_length < 1) throw InputError("max_sequence_length must be >= 1");
  if (neg_pos_ratio < 0) throw InputError("neg_pos_ratio must be >= 0");
  if (batch_size < 1 || epochs < 1) throw InputError("batch size and epochs must be >= 1");
}

BoundaryScores raw_episode_scores(const EncodedSequence& query,
                                  std::span<const SupportEncoding* const> supports,
                                  double temperature, AttentionWeights* weights) {
  std::vector<const Vector*> reps;
  reps.reserve(supports.size());
  for (const auto* s : supports) reps.push_back(&s->base.sentence_rep);
  AttentionWeights att = sentence_attention(query.sentence_rep, reps, temperature);
  const Eigen::Index n = query.vectors.rows();
  BoundaryScores out{Vector::Zero(n), Vector::Zero(n), {}};
  for (std::size_t j = 0; j < supports.size(); ++j) {
    const PairSimilarity sim = token_boundary_similarity(query, *supports[j]);
    out.p_start += att.weights[j] * sim.start_sim;
    out.p_end += att.weights[j] * sim.end_sim;
  }
  if (weights) *weights = std::move(att);
  return out;
}

namespace {

Vector sigmoid(const Vector& x) {
  return x.unaryExpr([](double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
}

Vector position_softmax(const Vector& x) {
  Vector e = (x.array() - x.maxCoeff()).exp();
  return e / e.sum();
}

double bce(const Vector& p, const Vector& y) {
  double loss = 0.0;
  for (Eigen::Index t = 0; t < p.size(); ++t) {
    const double pc = std::clamp(p[t], kProbabilityClamp, 1.0 - kProbabilityClamp);
    loss -= y[t] * std::log(pc) + (1.0 - y[t]) * std::log(1.0 - pc);
  }
  return loss;
}

// d(bce)/d(raw) through the squash.
Vector bce_grad_raw(const Vector& p, const Vector& y, Squash squash) {
  Vector dp(p.size());
  for (Eigen::Index t = 0; t < p.size(); ++t) {
    if (p[t] < kProbabilityClamp || p[t] > 1.0 - kProbabilityClamp) {
      dp[t] = 0.0;
    } else {
      dp[t] = -y[t] / p[t] + (1.0 - y[t]) / (1.0 - p[t]);
    }
  }
  if (squash == Squash::kSigmoid) {
    return dp.array() * p.array() * (1.0 - p.array());
  }
  const double inner = dp.dot(p);
  return p.array() * (dp.array() - inner);
}

std::vector<std::string> fitted_query(const Sentence& s, std::size_t limit) {
  if (s.size() <= limit) return s.tokens;
  warn("query ", s.source_id, " truncated to ", limit, " tokens");
  return {s.tokens.begin(), s.tokens.begin() + static_cast<std::ptrdiff_t>(limit)};
}

}  // namespace

BoundaryScores squash_scores(BoundaryScores raw, Squash squash) {
  if (squash == Squash::kSigmoid) {
    raw.p_start = sigmoid(raw.p_start);
    raw.p_end = sigmoid(raw.p_end);
  } else {
    raw.p_start = position_softmax(raw.p_start);
    raw.p_end = position_softmax(raw.p_end);
  }
  return raw;
}

BoundaryScores episode_scores(const EncodedSequence& query,
                              std::span<const SupportEncoding* const> supports,
                              double temperature, Squash squash) {
  return squash_scores(raw_episode_scores(query, supports, temperature), squash);
}

TrainingLabels make_labels(std::size_t query_tokens, const TrainingEpisode& episode) {
  const auto n = static_cast<Eigen::Index>(query_tokens + 1);
  TrainingLabels labels{Vector::Zero(n), Vector::Zero(n)};
  bool any = false;
  if (episode.polarity == Polarity::kPositive) {
    for (const auto& span : episode.gold_spans) {
      if (span.end >= query_tokens) continue;
      labels.y_start[static_cast<Eigen::Index>(span.start) + 1] = 1.0;
      labels.y_end[static_cast<Eigen::Index>(span.end) + 1] = 1.0;
      any = true;
    }
  }
  if (!any) {
    labels.y_start[0] = 1.0;
    labels.y_end[0] = 1.0;
  }
  return labels;
}

LossBreakdown episode_loss(const BoundaryScores& scores,
                           const TrainingLabels& labels) {
  if (scores.p_start.size() != labels.y_start.size() ||
      scores.p_end.size() != labels.y_end.size()) {
    throw InputError("score and label lengths differ");
  }
  LossBreakdown out;
  out.l_start = bce(scores.p_start, labels.y_start);
  out.l_end = bce(scores.p_end, labels.y_end);
  out.total = 0.5 * (out.l_start + out.l_end);
  return out;
}

std::vector<TrainingEpisode> build_episodes(
    const std::vector<LabeledSentence>& corpus, const SupportSet& pool,
    const TrainingConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  const std::vector<std::string> all_types = pool.types();
  const auto k = static_cast<std::size_t>(cfg.k);
  const int negatives_per_positive = static_cast<int>(std::ceil(cfg.neg_pos_ratio));

  auto sample = [&](const std::string& type, const std::string& exclude_source) {
    const auto& list = pool.examples(type);
    std::vector<const SupportExample*> candidates;
    for (const auto& ex : list) {
      if (exclude_source.empty() || ex.source_id != exclude_source) {
        candidates.push_back(&ex);
      }
    }
    if (candidates.empty()) {
      for (const auto& ex : list) candidates.push_back(&ex);
    }
    std::vector<SupportExample> picked;
    picked.reserve(k);
    if (candidates.size() >= k) {
      std::shuffle(candidates.begin(), candidates.end(), rng);
      for (std::size_t i = 0; i < k; ++i) picked.push_back(*candidates[i]);
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
      for (std::size_t i = 0; i < k; ++i) picked.push_back(*candidates[pick(rng)]);
    }
    return picked;
  };

  std::vector<TrainingEpisode> out;
  std::set<std::string> warned;
  for (const auto& ls : corpus) {
    std::vector<std::string> present;
    for (const auto& span : ls.spans) {
      if (std::find(present.begin(), present.end(), span.entity_type) == present.end()) {
        present.push_back(span.entity_type);
      }
    }
    std::vector<std::string> absent;
    for (const auto& t : all_types) {
      if (std::find(present.begin(), present.end(), t) == present.end()) {
        absent.push_back(t);
      }
    }
    for (const auto& type : present) {
      if (pool.count(type) == 0) {
        if (warned.insert(type).second) {
          warn("entity type ", type, " has no support examples; skipping");
        }
        continue;
      }
      TrainingEpisode pos;
      pos.query = ls.sentence;
      pos.entity_type = type;
      for (const auto& span : ls.spans) {
        if (span.entity_type == type) pos.gold_spans.push_back(span);
      }
      pos.supports = sample(type, ls.sentence.source_id);
      pos.polarity = Polarity::kPositive;
      out.push_back(std::move(pos));

      for (int r = 0; r < negatives_per_positive; ++r) {
        if (absent.empty()) {
          warn("query ", ls.sentence.source_id, " covers every type; no negative");
          break;
        }
        std::uniform_int_distribution<std::size_t> pick(0, absent.size() - 1);
        const std::string& neg_type = absent[pick(rng)];
        TrainingEpisode neg;
        neg.query = ls.sentence;
        neg.entity_type = neg_type;
        neg.supports = sample(neg_type, ls.sentence.source_id);
        neg.polarity = Polarity::kNegative;
        out.push_back(std::move(neg));
      }
    }
  }
  return out;
}

LossBreakdown episode_objective(const ToyTransformer& model,
                                const TrainingEpisode& episode,
                                const TrainingConfig& cfg, ToyParams* grads) {
  const std::size_t limit =
      std::min(cfg.max_sequence_length, model.config().max_sequence_length);
  const std::vector<std::string> q_tokens = fitted_query(episode.query, limit);
  const std::size_t m = episode.supports.size();
  if (m == 0) throw InputError("episode has no supports");

  ToyTransformer::Tape q_tape;
  EncodedSequence query;
  query.vectors = model.forward(q_tokens, q_tape);
  finalize_sentence_rep(query);

  std::vector<ToyTransformer::Tape> s_tapes(m);
  std::vector<SupportEncoding> supports(m);
  std::vector<SupportExample> fitted(m);
  for (std::size_t j = 0; j < m; ++j) {
    fitted[j] = fit_support_example(episode.supports[j], limit);
    supports[j].base.vectors = model.forward(fitted[j].tokens, s_tapes[j]);
    finalize_sentence_rep(supports[j].base);
    supports[j].boundary_start =
        supports[j].base.vectors.row(fitted[j].start_marker_pos + 1).transpose();
    supports[j].boundary_end =
        supports[j].base.vectors.row(fitted[j].end_marker_pos + 1).transpose();
  }
  std::vector<const SupportEncoding*> ptrs;
  for (const auto& s : supports) ptrs.push_back(&s);

  AttentionWeights att;
  const BoundaryScores raw = raw_episode_scores(query, ptrs, cfg.temperature, &att);
  const BoundaryScores probs = squash_scores(raw, cfg.squash);
  const TrainingLabels labels = make_labels(q_tokens.size(), episode);
  const LossBreakdown loss = episode_loss(probs, labels);
  if (!grads) return loss;

  const Vector g_start = 0.5 * bce_grad_raw(probs.p_start, labels.y_start, cfg.squash);
  const Vector g_end = 0.5 * bce_grad_raw(probs.p_end, labels.y_end, cfg.squash);

  const Matrix& q = query.vectors;
  Matrix d_query = Matrix::Zero(q.rows(), q.cols());
  std::vector<double> contribution(m);
  std::vector<Matrix> d_support(m);
  for (std::size_t j = 0; j < m; ++j) {
    const SupportEncoding& s = supports[j];
    const double w = att.weights[j];
    d_query += w * (g_start * s.boundary_start.transpose() +
                    g_end * s.boundary_end.transpose());
    d_support[j] = Matrix::Zero(s.base.vectors.rows(), s.base.vectors.cols());
    d_support[j].row(fitted[j].start_marker_pos + 1) += w * (q.transpose() * g_start).transpose();
    d_support[j].row(fitted[j].end_marker_pos + 1) += w * (q.transpose() * g_end).transpose();
    contribution[j] = g_start.dot(q * s.boundary_start) + g_end.dot(q * s.boundary_end);
  }

  // Softmax over T * cos(q_rep, s_rep_j).
  double mean_contribution = 0.0;
  for (std::size_t j = 0; j < m; ++j) mean_contribution += att.weights[j] * contribution[j];
  const Vector& q_rep = query.sentence_rep;
  const double q_norm = q_rep.norm();
  Vector d_q_rep = Vector::Zero(q_rep.size());
  for (std::size_t j = 0; j < m; ++j) {
    const double d_cos = cfg.temperature * att.weights[j] *
                         (contribution[j] - mean_contribution);
    const Vector& s_rep = supports[j].base.sentence_rep;
    const double s_norm = s_rep.norm();
    if (q_norm == 0.0 || s_norm == 0.0) continue;
    const double cos = q_rep.dot(s_rep) / (q_norm * s_norm);
    d_q_rep += d_cos * (s_rep / (q_norm * s_norm) - cos * q_rep / (q_norm * q_norm));
    const Vector d_s_rep =
        d_cos * (q_rep / (q_norm * s_norm) - cos * s_rep / (s_norm * s_norm));
    d_support[j].rowwise() += d_s_rep.transpose();
  }
  d_query.rowwise() += d_q_rep.transpose();

  model.backward(q_tape, d_query, *grads);
  for (std::size_t j = 0; j < m; ++j) model.backward(s_tapes[j], d_support[j], *grads);
  return loss;
}

AdamState AdamState::zeros_for(const ToyParams& params) {
  AdamState s;
  s.first_moment = params.zeros_like();
  s.second_moment = params.zeros_like();
  return s;
}

void AdamState::apply(ToyParams& params, const ToyParams& grads,
                      const TrainingConfig& cfg) {
  ++step;
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
  std::vector<Matrix*> p_list, m_list, v_list;
  std::vector<const Matrix*> g_list;
  params.for_each([&](const std::string&, Matrix& t) { p_list.push_back(&t); });
  first_moment.for_each([&](const std::string&, Matrix& t) { m_list.push_back(&t); });
  second_moment.for_each([&](const std::string&, Matrix& t) { v_list.push_back(&t); });
  grads.for_each([&](const std::string&, const Matrix& t) { g_list.push_back(&t); });
  for (std::size_t i = 0; i < p_list.size(); ++i) {
    Matrix& p = *p_list[i];
    Matrix& mm = *m_list[i];
    Matrix& vv = *v_list[i];
    const Matrix& g = *g_list[i];
    mm = b1 * mm + (1.0 - b1) * g;
    vv = b2 * vv + (1.0 - b2) * g.cwiseProduct(g);
    const Matrix update =
        ((mm / c1).array() / ((vv / c2).array().sqrt() + cfg.adam_epsilon)).matrix() +
        cfg.weight_decay * p;
    p -= cfg.learning_rate * update;
  }
}

TrainResult train(const std::vector<LabeledSentence>& corpus,
                  const SupportSet& support_pool, ToyTransformer& model,
                  const TrainingConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  TrainResult result;
  result.optimizer = AdamState::zeros_for(model.params());
  ToyParams grads = model.params().zeros_like();
  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x5DEECE66DULL);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<TrainingEpisode> episodes = build_episodes(
        corpus, support_pool, cfg, cfg.seed * 1000003ULL + static_cast<std::uint64_t>(epoch));
    if (episodes.empty()) throw InputError("no training episodes could be built");
    std::shuffle(episodes.begin(), episodes.end(), shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < episodes.size();
         begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end =
          std::min(episodes.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      grads.set_zero();
      for (std::size_t e = begin; e < end; ++e) {
        const LossBreakdown loss = episode_objective(model, episodes[e], cfg, &grads);
        if (std::isnan(loss.total)) {
          throw std::runtime_error("NaN loss at epoch " + std::to_string(epoch) +
                                   ", episode " + std::to_string(e) + " (query " +
                                   episodes[e].query.source_id + ", type " +
                                   episodes[e].entity_type + ")");
        }
        loss_sum += loss.total;
      }
      ToyParams scaled = grads;
      scaled.for_each([&](const std::string&, Matrix& m) {
        m /= static_cast<double>(end - begin);
      });
      result.optimizer.apply(model.params(), scaled, cfg);
    }
    const double mean = loss_sum / static_cast<double>(episodes.size());
    result.epoch_loss.push_back(mean);
    info("epoch ", epoch + 1, "/", cfg.epochs, " mean loss ", mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  return result;
}

}  // namespace exner
