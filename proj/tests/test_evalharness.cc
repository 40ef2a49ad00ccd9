#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "doctest.h"
#include "exner/encoder.h"
#include "exner/errors.h"
#include "exner/evalharness.h"
#include "exner/synthgen.h"
#include "test_util.h"

using namespace exner;

namespace {

LabeledSentence gold(std::vector<std::string> tokens, std::vector<EntitySpan> spans) {
  LabeledSentence ls;
  ls.sentence.tokens = std::move(tokens);
  ls.spans = std::move(spans);
  return ls;
}

Prediction pred(std::vector<EntitySpan> spans) {
  Prediction p;
  for (const auto& s : spans) {
    ScoredSpan out;
    out.start = s.start;
    out.end = s.end;
    out.entity_type = s.entity_type;
    p.spans.push_back(out);
  }
  return p;
}

SupportSet pool_with(std::map<std::string, int> sizes) {
  SupportSet pool;
  for (const auto& [type, n] : sizes) {
    for (int i = 0; i < n; ++i) {
      pool.add(make_support_example({"w" + std::to_string(i), "x"}, 0, 0, type,
                                    type + std::to_string(i)));
    }
  }
  return pool;
}

std::vector<std::string> ids(const SupportSet& set) {
  std::vector<std::string> out;
  for (const auto& ex : set.flatten()) out.push_back(ex.id);
  return out;
}

// Small synthetic task shared by the run_protocol tests.
struct Task {
  SynthCorpus corpus;
  std::unique_ptr<Encoder> encoder;
};

const Task& task() {
  static const Task t = [] {
    SynthSpec spec = default_synth_spec(5);
    spec.train_size = 10;
    spec.test_size = 12;
    spec.pool_size = 20;
    EncoderConfig ec;
    ec.kind = EncoderKind::kStaticHash;
    ec.dim = 16;
    return Task{generate(spec), std::make_unique<StaticHashEncoder>(ec)};
  }();
  return t;
}

}  // namespace

TEST_CASE("prf: definition examples") {
  const auto p = prf_from_counts({1, 1, 0});
  CHECK(p.precision == 0.5);
  CHECK(p.recall == 1.0);
  CHECK(p.f1 == doctest::Approx(2.0 / 3));
  const auto z = prf_from_counts({0, 0, 3});
  CHECK(z.precision == 0.0);
  CHECK(z.recall == 0.0);
  CHECK(z.f1 == 0.0);
  CHECK(prf_from_counts({0, 0, 0}).f1 == 0.0);
}

TEST_CASE("exact match: empty predictions against nonempty gold") {
  const auto r = exact_match_prf({gold({"a", "b"}, {{0, 0, "X"}})}, {pred({})});
  CHECK(r.precision == 0.0);
  CHECK(r.recall == 0.0);
  CHECK(r.f1 == 0.0);
  CHECK(r.counts.fn == 1);
}

TEST_CASE("exact match: counting on a three-sentence fixture") {
  const std::vector<LabeledSentence> g{
      gold({"a", "b", "c"}, {{0, 1, "X"}}),
      gold({"a", "b", "c"}, {{2, 2, "Y"}}),
      gold({"a", "b"}, {}),
  };
  const std::vector<Prediction> p{
      pred({{0, 1, "X"}}),               // TP
      pred({{2, 2, "X"}}),               // right span, wrong type: FP + FN
      pred({{0, 0, "Y"}}),               // FP
  };
  // Counting oracle: a set difference per sentence.
  MatchCounts want;
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (const auto& ps : p[i].spans) {
      const bool hit = std::any_of(g[i].spans.begin(), g[i].spans.end(), [&](const EntitySpan& gs) {
        return gs.start == ps.start && gs.end == ps.end && gs.entity_type == ps.entity_type;
      });
      (hit ? want.tp : want.fp) += 1;
    }
    want.fn += static_cast<long>(g[i].spans.size());
  }
  want.fn -= want.tp;
  const auto r = exact_match_prf(g, p);
  CHECK(r.counts.tp == want.tp);
  CHECK(r.counts.fp == want.fp);
  CHECK(r.counts.fn == want.fn);
  CHECK(r.counts.tp == 1);
  CHECK(r.counts.fp == 2);
  CHECK(r.counts.fn == 1);

  const auto by_type = per_type_counts(g, p);
  CHECK(by_type.at("X").tp == 1);
  CHECK(by_type.at("X").fp == 1);
  CHECK(by_type.at("Y").fn == 1);
  CHECK(by_type.at("Y").fp == 1);
}

TEST_CASE("exact match: misaligned lists and duplicate predictions") {
  CHECK_THROWS_AS(exact_match_prf({gold({"a"}, {})}, {}), InputError);
  CHECK_THROWS_AS(exact_match_prf({gold({"a"}, {{0, 0, "X"}})}, {pred({{0, 0, "X"}, {0, 0, "X"}})}),
                  std::logic_error);
}

TEST_CASE("exact match is invariant to sentence order") {
  std::mt19937_64 rng(2);
  std::vector<LabeledSentence> g;
  std::vector<Prediction> p;
  for (int i = 0; i < 30; ++i) {
    const std::size_t s = rng() % 4;
    g.push_back(gold({"a", "b", "c", "d"}, {{s, s, rng() % 2 ? "X" : "Y"}}));
    p.push_back(pred({{rng() % 4, 3, rng() % 2 ? "X" : "Y"}}));
  }
  const auto before = exact_match_prf(g, p);
  std::vector<std::size_t> order(g.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<LabeledSentence> g2;
  std::vector<Prediction> p2;
  for (auto i : order) {
    g2.push_back(g[i]);
    p2.push_back(p[i]);
  }
  CHECK(exact_match_prf(g2, p2).f1 == before.f1);
}

TEST_CASE("sample_support uses every example when the budget exceeds the pool") {
  const auto pool = pool_with({{"A", 30}, {"B", 7}});
  std::mt19937_64 rng(1);
  const auto s = sample_support(pool, 100, rng);
  CHECK(s.count("A") == 30);
  CHECK(s.count("B") == 7);
  CHECK(ids(s) == ids(pool));
}

TEST_CASE("sample_support draws min(budget, m) distinct examples per type") {
  const auto pool = pool_with({{"A", 30}, {"B", 7}});
  std::mt19937_64 rng(1);
  const auto s = sample_support(pool, 10, rng);
  CHECK(s.count("A") == 10);
  CHECK(s.count("B") == 7);
  auto got = ids(s);
  std::sort(got.begin(), got.end());
  CHECK(std::unique(got.begin(), got.end()) == got.end());

  std::mt19937_64 a(42), b(42);
  CHECK(ids(sample_support(pool, 5, a)) == ids(sample_support(pool, 5, b)));
  CHECK_THROWS_AS(sample_support(pool, 0, a), InputError);
}

TEST_CASE("protocol validation") {
  EvalProtocol p;
  p.budgets = {};
  CHECK_THROWS_AS(p.validate(), InputError);
  p.budgets = {5, 5};
  CHECK_THROWS_AS(p.validate(), InputError);
  p.budgets = {0, 1};
  CHECK_THROWS_AS(p.validate(), InputError);
  p.budgets = {1, 2};
  p.trials = 0;
  CHECK_THROWS_AS(p.validate(), InputError);
}

TEST_CASE("mean and population std") {
  const auto m = mean_std({1.0, 2.0, 3.0, 4.0});
  CHECK(m.mean == 2.5);
  CHECK(m.std == doctest::Approx(std::sqrt(1.25)));
  CHECK(mean_std({0.7}).std == 0.0);
}

TEST_CASE("run_protocol: shape, determinism and trial seeds") {
  const auto& t = task();
  EvalProtocol proto;
  proto.budgets = {1, 3};
  proto.trials = 3;
  proto.seed = 11;
  const auto a = run_protocol(t.corpus.test, t.corpus.target_pool, *t.encoder, ScoringConfig{}, proto);
  const auto b = run_protocol(t.corpus.test, t.corpus.target_pool, *t.encoder, ScoringConfig{}, proto);
  REQUIRE(a.trials.size() == 6);
  CHECK(a.summary.size() == 2);
  CHECK(a.trials[0].budget == 1);
  CHECK(a.trials[3].budget == 3);
  CHECK(a.trials[4].trial == 1);
  CHECK(report_csv(a) == report_csv(b));
  for (const auto& tr : a.trials) {
    CHECK(tr.micro.f1 >= 0.0);
    CHECK(tr.micro.f1 <= 1.0);
  }
  CHECK(trial_seed(11, 1, 0) != trial_seed(11, 1, 1));
  CHECK(trial_seed(11, 1, 0) != trial_seed(11, 3, 0));
  CHECK(trial_seed(11, 3, 2) == trial_seed(11, 3, 2));
}

TEST_CASE("run_protocol: one trial or an exhaustive budget gives std 0") {
  const auto& t = task();
  EvalProtocol one;
  one.budgets = {2};
  one.trials = 1;
  const auto r1 = run_protocol(t.corpus.test, t.corpus.target_pool, *t.encoder, ScoringConfig{}, one);
  CHECK(r1.summary[0].f1.std == 0.0);

  EvalProtocol all;
  all.budgets = {10000};
  all.trials = 4;
  const auto r2 = run_protocol(t.corpus.test, t.corpus.target_pool, *t.encoder, ScoringConfig{}, all);
  CHECK(r2.summary[0].f1.std == 0.0);
  CHECK(r2.summary[0].precision.std == 0.0);
}

TEST_CASE("run_protocol: summary replays bit-for-bit from the trial rows") {
  const auto& t = task();
  EvalProtocol proto;
  proto.budgets = {1, 2, 4};
  proto.trials = 5;
  proto.seed = 3;
  const auto r = run_protocol(t.corpus.test, t.corpus.target_pool, *t.encoder, ScoringConfig{}, proto);

  // Independent replay from the CSV trial rows.
  std::istringstream csv(report_csv(r));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "row,budget,trial,precision,recall,f1,precision_std,recall_std,f1_std");
  std::map<int, std::vector<double>> f1s;
  std::map<int, double> reported_mean, reported_std;
  int trial_rows = 0, summary_rows = 0;
  while (std::getline(csv, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    REQUIRE(cells.size() == 9);
    const int budget = std::stoi(cells[1]);
    if (cells[0] == "trial") {
      ++trial_rows;
      f1s[budget].push_back(std::stod(cells[5]));
    } else {
      ++summary_rows;
      reported_mean[budget] = std::stod(cells[5]);
      reported_std[budget] = std::stod(cells[8]);
    }
  }
  CHECK(trial_rows == 15);
  CHECK(summary_rows == 3);
  for (const auto& [budget, values] : f1s) {
    double sum = 0.0;
    for (double v : values) sum += v;
    const double mean = sum / static_cast<double>(values.size());
    double sq = 0.0;
    for (double v : values) sq += (v - mean) * (v - mean);
    CHECK(mean == reported_mean[budget]);
    CHECK(std::sqrt(sq / static_cast<double>(values.size())) == reported_std[budget]);
  }
  // Summary rebuilt from the in-memory trials is identical too.
  const auto again = summarize(r.trials);
  for (std::size_t i = 0; i < again.size(); ++i) {
    CHECK(again[i].f1.mean == r.summary[i].f1.mean);
    CHECK(again[i].f1.std == r.summary[i].f1.std);
  }
}

TEST_CASE("reports are written as CSV and JSON") {
  const auto& t = task();
  EvalProtocol proto;
  proto.budgets = {1};
  proto.trials = 2;
  const auto r = run_protocol(t.corpus.test, t.corpus.target_pool, *t.encoder, ScoringConfig{}, proto);
  testutil::TempDir dir("eval");
  write_report(r, dir / "r.csv", dir / "r.json");
  std::ifstream in(dir / "r.json");
  const auto j = nlohmann::json::parse(in);
  CHECK(j.at("trials").size() == 2);
  CHECK(j.at("summary").size() == 1);
  CHECK(r.at_budget(1).budget == 1);
  CHECK_THROWS_AS(r.at_budget(7), NotFoundError);
}
