#include <set>
#include <sstream>

#include "doctest.h"
#include "exner/corpus.h"
#include "exner/errors.h"
#include "exner/synthgen.h"
#include "test_util.h"

using namespace exner;

namespace {

std::vector<std::string> words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

std::string surface(const LabeledSentence& ls, const EntitySpan& sp) {
  std::string out;
  for (std::size_t i = sp.start; i <= sp.end; ++i) {
    out += (i > sp.start ? " " : "") + ls.sentence.tokens[i];
  }
  return out;
}

// Replay oracle: does some template, with each slot filled by one of its
// type's values, reproduce the sentence tokens and gold spans exactly?
bool replays(const LabeledSentence& ls, const std::vector<std::string>& templates,
             const std::vector<SynthType>& types) {
  std::map<std::string, std::vector<std::vector<std::string>>> values;
  for (const auto& t : types) {
    for (const auto& v : t.values) values[t.name].push_back(words(v));
  }
  for (const auto& tmpl : templates) {
    std::vector<EntitySpan> spans;
    std::size_t pos = 0;
    bool ok = true;
    for (const auto& tok : words(tmpl)) {
      if (!ok) break;
      if (tok.size() > 2 && tok.front() == '{' && tok.back() == '}') {
        const std::string type = tok.substr(1, tok.size() - 2);
        // Values are pairwise disjoint in words, so at most one matches.
        bool matched = false;
        for (const auto& v : values[type]) {
          if (pos + v.size() > ls.sentence.tokens.size()) continue;
          if (std::equal(v.begin(), v.end(), ls.sentence.tokens.begin() + static_cast<long>(pos))) {
            spans.push_back({pos, pos + v.size() - 1, type});
            pos += v.size();
            matched = true;
            break;
          }
        }
        ok = matched;
      } else {
        ok = pos < ls.sentence.tokens.size() && ls.sentence.tokens[pos++] == tok;
      }
    }
    if (ok && pos == ls.sentence.tokens.size() && spans == ls.spans) return true;
  }
  return false;
}

SynthSpec small_spec() {
  SynthSpec spec = default_synth_spec(3);
  spec.train_size = 60;
  spec.test_size = 30;
  spec.pool_size = 30;
  return spec;
}

std::set<std::string> names(const std::vector<SynthType>& types) {
  std::set<std::string> out;
  for (const auto& t : types) out.insert(t.name);
  return out;
}

}  // namespace

TEST_CASE("synthgen: default spec shape") {
  const auto spec = default_synth_spec(1);
  CHECK(spec.source_types.size() == 4);
  CHECK(spec.target_types.size() == 2);
  CHECK(spec.train_size == 400);
  CHECK(spec.test_size == 100);
  for (const auto& t : spec.target_types) CHECK(t.values.size() == 30);
  CHECK_NOTHROW(spec.validate());
}

TEST_CASE("synthgen: splits use disjoint types and surface forms") {
  const auto spec = small_spec();
  const auto c = generate(spec);
  const auto src = names(spec.source_types);
  const auto tgt = names(spec.target_types);
  std::set<std::string> train_forms, test_forms;
  for (const auto& ls : c.train) {
    for (const auto& sp : ls.spans) {
      CHECK(src.count(sp.entity_type));
      train_forms.insert(surface(ls, sp));
    }
  }
  for (const auto& ls : c.test) {
    for (const auto& sp : ls.spans) {
      CHECK(tgt.count(sp.entity_type));
      test_forms.insert(surface(ls, sp));
    }
  }
  for (const auto& f : test_forms) CHECK_FALSE(train_forms.count(f));
  for (const auto& type : c.target_pool.types()) CHECK(tgt.count(type));
  CHECK(c.train.size() == 60);
  CHECK(c.test.size() == 30);
  CHECK_FALSE(c.target_pool.empty());
}

TEST_CASE("synthgen: same seed gives identical corpora") {
  const auto a = generate(small_spec());
  const auto b = generate(small_spec());
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  CHECK(a.target_pool.flatten() == b.target_pool.flatten());
  auto other = small_spec();
  other.seed = 99;
  CHECK(generate(other).train != a.train);
}

TEST_CASE("synthgen: gold spans replay from the templates") {
  const auto spec = small_spec();
  const auto c = generate(spec);
  for (const auto& ls : c.train) {
    CHECK(replays(ls, spec.source_templates, spec.source_types));
    CHECK_NOTHROW(validate_labeled_sentence(ls));
  }
  for (const auto& ls : c.test) {
    CHECK(replays(ls, spec.target_templates, spec.target_types));
    CHECK_NOTHROW(validate_labeled_sentence(ls));
  }
}

TEST_CASE("synthgen: invalid specs are rejected") {
  auto spec = small_spec();
  spec.target_types[0].name = spec.source_types[0].name;
  CHECK_THROWS_AS(spec.validate(), InputError);

  spec = small_spec();
  spec.target_types[0].values.push_back(spec.source_types[0].values[0]);
  CHECK_THROWS_AS(spec.validate(), InputError);

  spec = small_spec();
  spec.source_types[0].values.push_back("the");  // a template word
  CHECK_THROWS_AS(spec.validate(), InputError);

  spec = small_spec();
  spec.source_types[0].values = {"onlyone"};
  CHECK_THROWS_AS(spec.validate(), InputError);

  spec = small_spec();
  spec.target_templates.push_back("play {CITY} now");  // a source type
  CHECK_THROWS_AS(spec.validate(), InputError);

  spec = small_spec();
  spec.test_size = 0;
  CHECK_THROWS_AS(generate(spec), InputError);
}

TEST_CASE("synthgen: files round trip through the corpus readers") {
  const auto c = generate(small_spec());
  testutil::TempDir dir("synth");
  write_synth_corpus(c, dir.path());
  // Source ids are reassigned by the reader; tokens and spans survive.
  auto same = [](const std::vector<LabeledSentence>& a, const std::vector<LabeledSentence>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i].sentence.tokens != b[i].sentence.tokens || a[i].spans != b[i].spans) return false;
    }
    return true;
  };
  CHECK(same(read_bio_corpus(dir / "train.bio"), c.train));
  CHECK(same(read_bio_corpus(dir / "test.bio"), c.test));
  auto pool = c.target_pool.flatten();
  for (auto& ex : pool) ex.source_id.clear();  // not serialized
  CHECK(read_support_json(dir / "target_pool.json") == pool);
  CHECK_FALSE(read_support_json(dir / "source_pool.json").empty());
}
