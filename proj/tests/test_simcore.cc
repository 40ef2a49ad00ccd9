#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "exner/errors.h"
#include "exner/log.h"
#include "exner/simcore.h"
#include "oracles.h"

using namespace exner;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Vector random_vec(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Vector v(d);
  for (int i = 0; i < d; ++i) v[i] = nd(rng);
  return v;
}

AttentionWeights attend(const Vector& q, const std::vector<Vector>& reps, double t) {
  std::vector<const Vector*> ptrs;
  for (const auto& r : reps) ptrs.push_back(&r);
  return sentence_attention(q, ptrs, t);
}

double sum(const std::vector<double>& w) { return std::accumulate(w.begin(), w.end(), 0.0); }

}  // namespace

TEST_CASE("boundary similarity arithmetic") {
  EncodedSequence q;
  q.vectors.resize(2, 3);
  q.vectors << 0, 0, 0, 1, 0, 2;
  finalize_sentence_rep(q);
  SupportEncoding s;
  s.boundary_start = vec({2, 1, 0});
  s.boundary_end = vec({1, 1, 1});
  const auto sim = token_boundary_similarity(q, s);
  CHECK(sim.start_sim.size() == 2);
  CHECK(sim.start_sim[1] == 2.0);
  CHECK(sim.end_sim[1] == 3.0);
  // Zero query row.
  CHECK(sim.start_sim[0] == 0.0);
  CHECK(sim.end_sim[0] == 0.0);
}

TEST_CASE("boundary similarity matches a scalar loop and is bilinear") {
  std::mt19937_64 rng(1);
  for (int round = 0; round < 100; ++round) {
    const auto rows = oracle::random_mat(5, 8, rng);
    const auto q = oracle::to_encoded(rows);
    SupportEncoding s;
    s.boundary_start = random_vec(8, rng);
    s.boundary_end = random_vec(8, rng);
    const auto sim = token_boundary_similarity(q, s);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const oracle::Vec bs(s.boundary_start.data(), s.boundary_start.data() + 8);
      const oracle::Vec be(s.boundary_end.data(), s.boundary_end.data() + 8);
      CHECK(std::abs(sim.start_sim[static_cast<Eigen::Index>(i)] - oracle::dot(rows[i], bs)) < 1e-12);
      CHECK(std::abs(sim.end_sim[static_cast<Eigen::Index>(i)] - oracle::dot(rows[i], be)) < 1e-12);
    }
    // Linear in the support argument.
    SupportEncoding s2 = s;
    s2.boundary_start = 3.0 * s.boundary_start;
    CHECK(token_boundary_similarity(q, s2).start_sim.isApprox(3.0 * sim.start_sim, 1e-12));
  }
}

TEST_CASE("boundary similarity rejects a dimension mismatch") {
  EncodedSequence q;
  q.vectors = Matrix::Ones(2, 4);
  finalize_sentence_rep(q);
  SupportEncoding s;
  s.boundary_start = Vector::Ones(3);
  s.boundary_end = Vector::Ones(3);
  CHECK_THROWS_AS(token_boundary_similarity(q, s), InputError);
}

TEST_CASE("attention: singleton and symmetric cases") {
  const Vector q = vec({1, 2, 3});
  CHECK(attend(q, {vec({3, 1, 0})}, 1.0).weights == std::vector<double>{1.0});
  const auto w = attend(q, {vec({0, 1, 1}), vec({0, 1, 1})}, 1.0).weights;
  CHECK(w[0] == doctest::Approx(0.5));
  CHECK(w[1] == doctest::Approx(0.5));
}

TEST_CASE("attention: cosines (1, 0) at T = 1") {
  const auto w = attend(vec({1, 0}), {vec({2, 0}), vec({0, 5})}, 1.0).weights;
  // Oracle: direct exp / sum.
  const double e1 = std::exp(1.0), e0 = std::exp(0.0);
  CHECK(std::abs(w[0] - e1 / (e1 + e0)) < 1e-12);
  CHECK(std::abs(w[0] - 0.73106) < 1e-5);
  CHECK(std::abs(w[1] - 0.26894) < 1e-5);
}

TEST_CASE("attention sums to one on fuzzed inputs, zero norms included") {
  std::mt19937_64 rng(9);
  set_log_level(LogLevel::kQuiet);
  for (int round = 0; round < 500; ++round) {
    const int m = 1 + static_cast<int>(rng() % 32);
    const int d = 1 + static_cast<int>(rng() % 16);
    std::vector<Vector> reps;
    for (int j = 0; j < m; ++j) {
      reps.push_back(rng() % 5 == 0 ? Vector::Zero(d) : random_vec(d, rng));
    }
    const Vector q = rng() % 7 == 0 ? Vector::Zero(d) : random_vec(d, rng);
    const double t = std::exp(std::uniform_real_distribution<double>(-5, 5)(rng));
    const auto w = attend(q, reps, t).weights;
    CHECK(std::abs(sum(w) - 1.0) <= 1e-9);
    for (double x : w) {
      CHECK(x > 0.0);
      CHECK(x <= 1.0);
    }
  }
  set_log_level(LogLevel::kWarning);
}

TEST_CASE("attention is invariant to a common positive scale of the supports") {
  std::mt19937_64 rng(2);
  for (int round = 0; round < 50; ++round) {
    const Vector q = random_vec(6, rng);
    std::vector<Vector> reps, scaled;
    for (int j = 0; j < 5; ++j) {
      reps.push_back(random_vec(6, rng));
      scaled.push_back(7.5 * reps.back());
    }
    const auto a = attend(q, reps, 2.0).weights;
    const auto b = attend(q, scaled, 2.0).weights;
    for (std::size_t j = 0; j < a.size(); ++j) CHECK(std::abs(a[j] - b[j]) < 1e-12);
  }
}

TEST_CASE("attention temperature limits") {
  std::mt19937_64 rng(4);
  const Vector q = random_vec(6, rng);
  std::vector<Vector> reps;
  for (int j = 0; j < 6; ++j) reps.push_back(random_vec(6, rng));
  std::size_t best = 0;
  for (std::size_t j = 1; j < reps.size(); ++j) {
    if (cosine(q, reps[j]) > cosine(q, reps[best])) best = j;
  }
  const auto cold = attend(q, reps, 100.0).weights;
  CHECK(cold[best] > 0.9);
  const auto warm = attend(q, reps, 0.01).weights;
  for (double x : warm) CHECK(std::abs(x - 1.0 / 6) < 0.01);
}

TEST_CASE("attention argument errors") {
  CHECK_THROWS_AS(attend(vec({1}), {}, 1.0), InputError);
  CHECK_THROWS_AS(attend(vec({1}), {vec({1})}, 0.0), InputError);
}

TEST_CASE("cosine of a zero vector is zero") {
  set_log_level(LogLevel::kQuiet);
  CHECK(cosine(Vector::Zero(3), vec({1, 2, 3})) == 0.0);
  set_log_level(LogLevel::kWarning);
  CHECK(cosine(vec({1, 0}), vec({0, 1})) == 0.0);
  CHECK(cosine(vec({1, 1}), vec({2, 2})) == doctest::Approx(1.0));
}

TEST_CASE("softmax is stable for large logits") {
  const std::vector<double> logits{1000.0, 1000.0};
  const auto p = softmax(logits);
  CHECK(p[0] == doctest::Approx(0.5));
  CHECK(p[1] == doctest::Approx(0.5));
}
