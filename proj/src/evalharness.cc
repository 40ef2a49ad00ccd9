#include "exner/evalharness.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>
#include <tuple>

#include "exner/errors.h"
#include "exner/log.h"

namespace exner {

using json = nlohmann::json;

void EvalProtocol::validate() const {
  if (budgets.empty()) throw InputError("budget list is empty");
  for (std::size_t i = 0; i < budgets.size(); ++i) {
    if (budgets[i] < 1) throw InputError("budgets must be positive");
    if (i > 0 && budgets[i] <= budgets[i - 1]) {
      throw InputError("budgets must be strictly ascending");
    }
  }
  if (trials < 1) throw InputError("trials must be >= 1");
}

Prf prf_from_counts(const MatchCounts& c) {
  Prf out;
  out.counts = c;
  out.precision = c.tp + c.fp > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
  out.recall = c.tp + c.fn > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
  out.f1 = out.precision + out.recall > 0
               ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
               : 0.0;
  return out;
}

namespace {

using SpanKey = std::tuple<std::size_t, std::size_t, std::string>;

void count_sentence(const LabeledSentence& gold, const Prediction& pred,
                    std::map<std::string, MatchCounts>& by_type) {
  std::set<SpanKey> gold_keys;
  for (const auto& s : gold.spans) gold_keys.emplace(s.start, s.end, s.entity_type);
  std::set<SpanKey> seen;
  for (const auto& s : pred.spans) {
    if (s.is_no_span()) continue;
    SpanKey key{s.start, s.end, s.entity_type};
    if (!seen.insert(key).second) {
      throw std::logic_error("duplicate predicted span in one sentence");
    }
    if (gold_keys.count(key)) {
      ++by_type[s.entity_type].tp;
    } else {
      ++by_type[s.entity_type].fp;
    }
  }
  for (const auto& key : gold_keys) {
    if (!seen.count(key)) ++by_type[std::get<2>(key)].fn;
  }
}

}  // namespace

std::map<std::string, MatchCounts> per_type_counts(
    const std::vector<LabeledSentence>& gold,
    const std::vector<Prediction>& predictions) {
  if (gold.size() != predictions.size()) {
    throw InputError("gold and prediction lists differ in length (" +
                     std::to_string(gold.size()) + " vs " +
                     std::to_string(predictions.size()) + ")");
  }
  std::map<std::string, MatchCounts> by_type;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    count_sentence(gold[i], predictions[i], by_type);
  }
  return by_type;
}

Prf exact_match_prf(const std::vector<LabeledSentence>& gold,
                    const std::vector<Prediction>& predictions) {
  MatchCounts total;
  for (const auto& [type, c] : per_type_counts(gold, predictions)) total += c;
  return prf_from_counts(total);
}

namespace {

// Indices into pool.examples(type) chosen for one trial, per type.
std::map<std::string, std::vector<std::size_t>> sample_indices(
    const SupportSet& pool, int budget, std::mt19937_64& rng) {
  if (budget < 1) throw InputError("budget must be >= 1");
  std::map<std::string, std::vector<std::size_t>> out;
  for (const auto& [type, list] : pool.entries()) {
    std::vector<std::size_t> idx(list.size());
    std::iota(idx.begin(), idx.end(), 0);
    const std::size_t take = std::min(static_cast<std::size_t>(budget), idx.size());
    if (take < idx.size()) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(take);
      std::sort(idx.begin(), idx.end());
    }
    out.emplace(type, std::move(idx));
  }
  return out;
}

}  // namespace

SupportSet sample_support(const SupportSet& pool, int budget, std::mt19937_64& rng) {
  SupportSet out;
  for (const auto& [type, idx] : sample_indices(pool, budget, rng)) {
    const auto& list = pool.examples(type);
    for (std::size_t i : idx) out.add(list[i]);
  }
  return out;
}

std::uint64_t trial_seed(std::uint64_t seed, int budget, int trial) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(budget) * 1000003ULL +
                                                     static_cast<std::uint64_t>(trial) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd out;
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(sq / static_cast<double>(values.size()));
  return out;
}

const BudgetSummary& EvalReport::at_budget(int budget) const {
  for (const auto& s : summary) {
    if (s.budget == budget) return s;
  }
  throw NotFoundError("no summary for budget " + std::to_string(budget));
}

std::vector<BudgetSummary> summarize(const std::vector<TrialResult>& trials) {
  std::vector<int> order;
  std::map<int, std::vector<const TrialResult*>> by_budget;
  for (const auto& t : trials) {
    if (!by_budget.count(t.budget)) order.push_back(t.budget);
    by_budget[t.budget].push_back(&t);
  }
  std::vector<BudgetSummary> out;
  for (int b : order) {
    std::vector<double> p, r, f;
    for (const auto* t : by_budget[b]) {
      p.push_back(t->micro.precision);
      r.push_back(t->micro.recall);
      f.push_back(t->micro.f1);
    }
    out.push_back({b, mean_std(p), mean_std(r), mean_std(f)});
  }
  return out;
}

EvalReport run_protocol(const std::vector<LabeledSentence>& test_corpus,
                        const SupportSet& pool, const Encoder& encoder,
                        const ScoringConfig& scoring, const EvalProtocol& protocol) {
  protocol.validate();
  scoring.validate();
  if (pool.empty()) throw InputError("support pool is empty");

  // Encodings do not depend on the sample, so each is computed once.
  std::map<std::string, std::vector<EncodedSupport>> pool_enc;
  for (const auto& [type, list] : pool.entries()) {
    auto& encs = pool_enc[type];
    for (const auto& ex : list) encs.push_back({ex.id, type, encode_support(encoder, ex)});
  }
  std::vector<EncodedSequence> queries;
  queries.reserve(test_corpus.size());
  for (const auto& ls : test_corpus) queries.push_back(encoder.encode(ls.sentence.tokens));

  EvalReport report;
  report.algorithm = to_string(scoring.algorithm);
  for (int budget : protocol.budgets) {
    for (int trial = 0; trial < protocol.trials; ++trial) {
      std::mt19937_64 rng(trial_seed(protocol.seed, budget, trial));
      std::vector<TypeSupports> groups;
      for (const auto& [type, idx] : sample_indices(pool, budget, rng)) {
        TypeSupports g{type, {}};
        for (std::size_t i : idx) g.supports.push_back(&pool_enc[type][i]);
        groups.push_back(std::move(g));
      }
      std::vector<Prediction> preds;
      preds.reserve(queries.size());
      for (const auto& q : queries) preds.push_back(predict_encoded(q, groups, scoring));

      TrialResult tr;
      tr.budget = budget;
      tr.trial = trial;
      MatchCounts total;
      double macro = 0.0;
      const auto counts = per_type_counts(test_corpus, preds);
      for (const auto& [type, c] : counts) {
        total += c;
        tr.per_type[type] = prf_from_counts(c);
        macro += tr.per_type[type].f1;
      }
      tr.micro = prf_from_counts(total);
      tr.macro_f1 = counts.empty() ? 0.0 : macro / static_cast<double>(counts.size());
      info("budget ", budget, " trial ", trial, ": P=", tr.micro.precision,
           " R=", tr.micro.recall, " F1=", tr.micro.f1);
      report.trials.push_back(std::move(tr));
    }
  }
  report.summary = summarize(report.trials);
  return report;
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string report_csv(const EvalReport& report) {
  std::string out = "row,budget,trial,precision,recall,f1,precision_std,recall_std,f1_std\n";
  for (const auto& t : report.trials) {
    out += "trial," + std::to_string(t.budget) + "," + std::to_string(t.trial) + "," +
           num(t.micro.precision) + "," + num(t.micro.recall) + "," + num(t.micro.f1) +
           ",,,\n";
  }
  for (const auto& s : report.summary) {
    out += "summary," + std::to_string(s.budget) + ",," + num(s.precision.mean) + "," +
           num(s.recall.mean) + "," + num(s.f1.mean) + "," + num(s.precision.std) + "," +
           num(s.recall.std) + "," + num(s.f1.std) + "\n";
  }
  return out;
}

json report_json(const EvalReport& report) {
  json trials = json::array();
  for (const auto& t : report.trials) {
    json per_type = json::object();
    for (const auto& [type, prf] : t.per_type) {
      per_type[type] = {{"precision", prf.precision}, {"recall", prf.recall},
                        {"f1", prf.f1}, {"tp", prf.counts.tp},
                        {"fp", prf.counts.fp}, {"fn", prf.counts.fn}};
    }
    trials.push_back({{"budget", t.budget},
                      {"trial", t.trial},
                      {"precision", t.micro.precision},
                      {"recall", t.micro.recall},
                      {"f1", t.micro.f1},
                      {"tp", t.micro.counts.tp},
                      {"fp", t.micro.counts.fp},
                      {"fn", t.micro.counts.fn},
                      {"macro_f1", t.macro_f1},
                      {"per_type", std::move(per_type)}});
  }
  json summary = json::array();
  for (const auto& s : report.summary) {
    summary.push_back({{"budget", s.budget},
                       {"precision_mean", s.precision.mean},
                       {"precision_std", s.precision.std},
                       {"recall_mean", s.recall.mean},
                       {"recall_std", s.recall.std},
                       {"f1_mean", s.f1.mean},
                       {"f1_std", s.f1.std}});
  }
  return {{"algorithm", report.algorithm},
          {"std", "population"},
          {"trials", std::move(trials)},
          {"summary", std::move(summary)}};
}

void write_report(const EvalReport& report, const std::filesystem::path& csv_path,
                  const std::filesystem::path& json_path) {
  std::ofstream csv(csv_path);
  if (!csv) throw InputError("cannot write '" + csv_path.string() + "'");
  csv << report_csv(report);
  std::ofstream js(json_path);
  if (!js) throw InputError("cannot write '" + json_path.string() + "'");
  js << report_json(report).dump(2) << '\n';
}

}  // namespace exner
