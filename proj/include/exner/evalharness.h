#ifndef EXNER_EVALHARNESS_H_
#define EXNER_EVALHARNESS_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "exner/corpus.h"
#include "exner/encoder.h"
#include "exner/scorer.h"
#include "json.hpp"

namespace exner {

struct EvalProtocol {
  std::vector<int> budgets{10, 20, 50, 100, 200, 500};
  int trials = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

struct MatchCounts {
  long tp = 0;
  long fp = 0;
  long fn = 0;

  MatchCounts& operator+=(const MatchCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
};

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  MatchCounts counts;
};

// P = TP/(TP+FP), R = TP/(TP+FN), F1 = 2PR/(P+R); each 0 on a zero
// denominator.
Prf prf_from_counts(const MatchCounts& counts);

// Micro-averaged exact match over (start, end, entity_type). Throws
// InputError when the lists differ in length.
Prf exact_match_prf(const std::vector<LabeledSentence>& gold,
                    const std::vector<Prediction>& predictions);

// Exact-match counts split by entity type.
std::map<std::string, MatchCounts> per_type_counts(
    const std::vector<LabeledSentence>& gold,
    const std::vector<Prediction>& predictions);

// Per type, min(budget, m_E) examples drawn without replacement; selected
// examples keep their pool order.
SupportSet sample_support(const SupportSet& pool, int budget, std::mt19937_64& rng);

// Seed for one (budget, trial) cell, independent of evaluation order.
std::uint64_t trial_seed(std::uint64_t seed, int budget, int trial);

struct TrialResult {
  int budget = 0;
  int trial = 0;
  Prf micro;
  std::map<std::string, Prf> per_type;
  double macro_f1 = 0.0;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population (divide by N)
};

// Mean and population standard deviation, summed in input order.
MeanStd mean_std(const std::vector<double>& values);

struct BudgetSummary {
  int budget = 0;
  MeanStd precision, recall, f1;
};

struct EvalReport {
  std::string algorithm;
  std::vector<TrialResult> trials;  // budget-major, trial-minor
  std::vector<BudgetSummary> summary;

  const BudgetSummary& at_budget(int budget) const;
};

// Rebuilds the per-budget summary from trial rows.
std::vector<BudgetSummary> summarize(const std::vector<TrialResult>& trials);

// For each budget, `trials` independent support samples; every test sentence
// is predicted against each sample. Deterministic given protocol.seed.
EvalReport run_protocol(const std::vector<LabeledSentence>& test_corpus,
                        const SupportSet& pool, const Encoder& encoder,
                        const ScoringConfig& scoring, const EvalProtocol& protocol);

// CSV columns: row,budget,trial,precision,recall,f1,precision_std,recall_std,f1_std
// with one "trial" row per trial and one "summary" row per budget. Values
// are printed with 17 significant digits.
std::string report_csv(const EvalReport& report);
nlohmann::json report_json(const EvalReport& report);
void write_report(const EvalReport& report, const std::filesystem::path& csv_path,
                  const std::filesystem::path& json_path);

}  // namespace exner

#endif  // EXNER_EVALHARNESS_H_
