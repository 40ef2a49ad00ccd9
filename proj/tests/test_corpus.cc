#include <algorithm>
#include <random>
#include <sstream>

#include "doctest.h"
#include "exner/corpus.h"
#include "exner/errors.h"
#include "exner/log.h"
#include "test_util.h"

using namespace exner;

namespace {

std::vector<LabeledSentence> parse(const std::string& text) {
  std::istringstream in(text);
  return parse_bio(in, "t");
}

// Random well-formed sentence: tokens "w<i>", spans non-overlapping and sorted.
LabeledSentence random_sentence(std::mt19937_64& rng, int idx) {
  std::uniform_int_distribution<std::size_t> len_dist(1, 12);
  const std::size_t n = len_dist(rng);
  LabeledSentence ls;
  ls.sentence.source_id = "t:" + std::to_string(idx);
  for (std::size_t i = 0; i < n; ++i) ls.sentence.tokens.push_back("w" + std::to_string(rng() % 50));
  static const char* kTypes[] = {"A", "B", "C"};
  std::size_t i = 0;
  while (i < n) {
    if (rng() % 3 == 0) {
      const std::size_t end = std::min(n - 1, i + rng() % 3);
      // Adjacent same-type spans are indistinguishable in BIO only when the
      // second starts with I-; B- keeps them apart, so any type is fine.
      ls.spans.push_back({i, end, kTypes[rng() % 3]});
      i = end + 1;
    } else {
      ++i;
    }
  }
  return ls;
}

}  // namespace

TEST_CASE("bio: two-token location is one span") {
  const auto c = parse("New B-LOC\nYork I-LOC\nis O\n");
  REQUIRE(c.size() == 1);
  CHECK(c[0].sentence.tokens == std::vector<std::string>{"New", "York", "is"});
  REQUIRE(c[0].spans.size() == 1);
  CHECK(c[0].spans[0] == EntitySpan{0, 1, "LOC"});
}

TEST_CASE("bio: all-O sentence has no spans") {
  const auto c = parse("it O\nrains O\n");
  REQUIRE(c.size() == 1);
  CHECK(c[0].spans.empty());
}

TEST_CASE("bio: fixture file traced by hand") {
  const auto c = read_bio_corpus(std::filesystem::path(EXNER_FIXTURE_DIR) / "small.bio");
  REQUIRE(c.size() == 3);
  CHECK(c[0].spans == std::vector<EntitySpan>{{0, 1, "LOC"}});
  CHECK(c[1].spans.empty());
  // B-X then B-Y: the automaton closes X at token 0 and opens Y at token 1.
  CHECK(c[2].spans == std::vector<EntitySpan>{{0, 0, "X"}, {1, 1, "Y"}});
  CHECK(c[2].sentence.source_id == "small.bio:2");
}

TEST_CASE("bio: stray I- tags are promoted to B-") {
  set_log_level(LogLevel::kQuiet);
  const auto c = parse("a I-X\nb I-X\nc O\nd I-Y\ne I-X\n");
  set_log_level(LogLevel::kWarning);
  REQUIRE(c.size() == 1);
  CHECK(c[0].spans == std::vector<EntitySpan>{{0, 1, "X"}, {3, 3, "Y"}, {4, 4, "X"}});
}

TEST_CASE("bio: tab or space separated, CRLF tolerated, malformed tags rejected") {
  const auto c = parse("a\tB-X\r\nb O\r\n\r\n");
  REQUIRE(c.size() == 1);
  CHECK(c[0].spans == std::vector<EntitySpan>{{0, 0, "X"}});
  CHECK_THROWS_AS(parse("a Q-X\n"), InputError);
  CHECK_THROWS_AS(parse("lonely\n"), InputError);
  CHECK_THROWS_AS(parse(std::string(kStartMarker) + " O\n"), InputError);
}

TEST_CASE("bio: empty file is an input error") {
  testutil::TempDir dir("corpus");
  std::ofstream(dir / "empty.bio").close();
  CHECK_THROWS_AS(read_bio_corpus(dir / "empty.bio"), InputError);
  CHECK_THROWS_AS(read_bio_corpus(dir / "missing.bio"), InputError);
}

TEST_CASE("bio: round trip on random corpora") {
  std::mt19937_64 rng(11);
  for (int round = 0; round < 50; ++round) {
    std::vector<LabeledSentence> corpus;
    for (int i = 0; i < 8; ++i) corpus.push_back(random_sentence(rng, i));
    std::ostringstream out;
    write_bio(out, corpus);
    std::istringstream in(out.str());
    CHECK(parse_bio(in, "t") == corpus);
  }
}

TEST_CASE("explode: one example per span") {
  LabeledSentence ls{{{"fly", "to", "Paris", "on", "Monday"}, "s:0"},
                     {{2, 2, "CITY"}, {4, 4, "DATE"}}};
  const auto ex = explode_to_support_examples(ls);
  REQUIRE(ex.size() == 2);
  CHECK(ex[0].entity_type == "CITY");
  CHECK(ex[1].entity_type == "DATE");
  CHECK(ex[0].tokens == std::vector<std::string>{"fly", "to", kStartMarker, "Paris",
                                                 kEndMarker, "on", "Monday"});
  CHECK(ex[0].source_id == "s:0");
  CHECK(ex[0].id != ex[1].id);
}

TEST_CASE("explode: markers hug a single span") {
  LabeledSentence ls{{{"a", "b", "c", "d"}, "s:1"}, {{1, 2, "X"}}};
  const auto ex = explode_to_support_examples(ls);
  REQUIRE(ex.size() == 1);
  CHECK(ex[0].tokens[ex[0].start_marker_pos] == kStartMarker);
  CHECK(ex[0].tokens[ex[0].start_marker_pos + 1] == "b");
  CHECK(ex[0].tokens[ex[0].end_marker_pos - 1] == "c");
  CHECK(ex[0].tokens[ex[0].end_marker_pos] == kEndMarker);
}

TEST_CASE("explode: whole-sentence span puts markers at 0 and len+1") {
  LabeledSentence ls{{{"x", "y", "z"}, "s:2"}, {{0, 2, "T"}}};
  const auto ex = explode_to_support_examples(ls).at(0);
  CHECK(ex.start_marker_pos == 0);
  CHECK(ex.end_marker_pos == 4);
  // Stripping the markers by hand recovers the sentence.
  std::vector<std::string> stripped;
  for (const auto& t : ex.tokens) {
    if (t != kStartMarker && t != kEndMarker) stripped.push_back(t);
  }
  CHECK(stripped == ls.sentence.tokens);
  CHECK(ex.plain_tokens() == ls.sentence.tokens);
}

TEST_CASE("explode: every example on random corpora has exactly one marked entity") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 300; ++i) {
    const auto ls = random_sentence(rng, i);
    const auto examples = explode_to_support_examples(ls);
    REQUIRE(examples.size() == ls.spans.size());
    for (std::size_t k = 0; k < examples.size(); ++k) {
      const auto& ex = examples[k];
      CHECK_NOTHROW(validate_support_example(ex));
      CHECK(std::count(ex.tokens.begin(), ex.tokens.end(), std::string(kStartMarker)) == 1);
      CHECK(std::count(ex.tokens.begin(), ex.tokens.end(), std::string(kEndMarker)) == 1);
      CHECK(ex.entity_start() == ls.spans[k].start);
      CHECK(ex.entity_end() == ls.spans[k].end);
      CHECK(ex.plain_tokens() == ls.sentence.tokens);
    }
  }
}

TEST_CASE("support example validation") {
  CHECK_THROWS_AS(make_support_example({"a", "b"}, 1, 0, "X"), InputError);
  CHECK_THROWS_AS(make_support_example({"a", "b"}, 0, 2, "X"), InputError);
  CHECK_THROWS_AS(make_support_example({"a", kEndMarker}, 0, 0, "X"), InputError);
  auto ex = make_support_example({"a", "b"}, 0, 0, "X");
  ex.tokens.push_back(kStartMarker);
  CHECK_THROWS_AS(validate_support_example(ex), InputError);
}

TEST_CASE("fit drops right context before left context") {
  const auto ex = make_support_example({"l1", "l2", "e", "r1", "r2"}, 2, 2, "X");
  const auto a = fit_support_example(ex, 5);
  CHECK(a.tokens == std::vector<std::string>{"l1", "l2", kStartMarker, "e", kEndMarker});
  const auto b = fit_support_example(ex, 4);
  CHECK(b.tokens == std::vector<std::string>{"l2", kStartMarker, "e", kEndMarker});
  CHECK_NOTHROW(validate_support_example(b));
  CHECK_THROWS_AS(fit_support_example(ex, 2), InputError);
}

TEST_CASE("support set counting") {
  CHECK(build_support_set({}).num_types() == 0);
  CHECK(build_support_set({}).empty());
  std::vector<SupportExample> ex;
  for (int i = 0; i < 3; ++i) ex.push_back(make_support_example({"a"}, 0, 0, "A"));
  for (int i = 0; i < 2; ++i) ex.push_back(make_support_example({"b"}, 0, 0, "B"));
  const auto set = build_support_set(ex);
  CHECK(set.num_types() == 2);
  CHECK(set.count("A") == 3);
  CHECK(set.count("B") == 2);
  CHECK(set.count("C") == 0);
  CHECK(set.total() == 5);
  // Identical examples are all kept.
  CHECK(set.examples("A")[0] == set.examples("A")[2]);
  CHECK_THROWS_AS(set.examples("C"), NotFoundError);
}

TEST_CASE("support JSON round trip and defaults") {
  const auto ex = parse_support_json(
      R"([{"entity_type":"X","tokens":["a","b","c"],"entity_start":1,"entity_end":2},
          {"id":"keep","entity_type":"Y","tokens":["d"],"entity_start":0,"entity_end":0}])");
  REQUIRE(ex.size() == 2);
  CHECK(ex[0].id == "s1");
  CHECK(ex[1].id == "keep");
  CHECK(ex[0].tokens == std::vector<std::string>{"a", kStartMarker, "b", "c", kEndMarker});
  CHECK(parse_support_json(support_json(ex)) == ex);
  CHECK_THROWS_AS(parse_support_json("{}"), InputError);
  CHECK_THROWS_AS(parse_support_json("[{\"tokens\":[\"a\"]}]"), InputError);
  CHECK_THROWS_AS(parse_support_json("not json"), InputError);
}

TEST_CASE("labeled sentence validation") {
  LabeledSentence ok{{{"a", "b", "c"}, "s"}, {{0, 0, "X"}, {1, 2, "Y"}}};
  CHECK_NOTHROW(validate_labeled_sentence(ok));
  LabeledSentence overlap{{{"a", "b", "c"}, "s"}, {{0, 1, "X"}, {1, 2, "Y"}}};
  CHECK_THROWS_AS(validate_labeled_sentence(overlap), InputError);
  LabeledSentence out_of_range{{{"a"}, "s"}, {{0, 1, "X"}}};
  CHECK_THROWS_AS(validate_labeled_sentence(out_of_range), InputError);
}
