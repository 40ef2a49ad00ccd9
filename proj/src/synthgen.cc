#include "exner/synthgen.h"

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "exner/errors.h"

namespace exner {

namespace {

std::vector<std::string> split(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

bool is_slot(const std::string& tok) {
  return tok.size() > 2 && tok.front() == '{' && tok.back() == '}';
}

std::string slot_name(const std::string& tok) { return tok.substr(1, tok.size() - 2); }

std::set<std::string> template_words(const std::vector<std::string>& templates) {
  std::set<std::string> out;
  for (const auto& t : templates) {
    for (const auto& tok : split(t)) {
      if (!is_slot(tok)) out.insert(tok);
    }
  }
  return out;
}

void check_templates(const std::vector<std::string>& templates,
                     const std::vector<SynthType>& types, const char* side) {
  std::set<std::string> names;
  for (const auto& t : types) names.insert(t.name);
  for (const auto& tmpl : templates) {
    if (split(tmpl).empty()) throw InputError("empty template");
    for (const auto& tok : split(tmpl)) {
      if (is_slot(tok) && !names.count(slot_name(tok))) {
        throw InputError(std::string(side) + " template '" + tmpl +
                         "' names unknown type " + slot_name(tok));
      }
    }
  }
}

LabeledSentence fill(const std::string& tmpl, const std::map<std::string, const SynthType*>& types,
                     std::mt19937_64& rng, const std::string& source_id) {
  LabeledSentence ls;
  ls.sentence.source_id = source_id;
  for (const auto& tok : split(tmpl)) {
    if (!is_slot(tok)) {
      ls.sentence.tokens.push_back(tok);
      continue;
    }
    const SynthType* type = types.at(slot_name(tok));
    std::uniform_int_distribution<std::size_t> pick(0, type->values.size() - 1);
    const auto words = split(type->values[pick(rng)]);
    const std::size_t start = ls.sentence.tokens.size();
    ls.sentence.tokens.insert(ls.sentence.tokens.end(), words.begin(), words.end());
    ls.spans.push_back({start, ls.sentence.tokens.size() - 1, type->name});
  }
  return ls;
}

std::vector<LabeledSentence> fill_many(const std::vector<std::string>& templates,
                                       const std::vector<SynthType>& types,
                                       std::size_t count, std::mt19937_64& rng,
                                       const std::string& prefix) {
  std::map<std::string, const SynthType*> by_name;
  for (const auto& t : types) by_name[t.name] = &t;
  std::vector<LabeledSentence> out;
  out.reserve(count);
  std::uniform_int_distribution<std::size_t> pick(0, templates.size() - 1);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(fill(templates[pick(rng)], by_name, rng, prefix + std::to_string(i)));
  }
  return out;
}

// Pronounceable pseudo-words; `banned` grows with every word returned.
std::string pseudo_word(std::mt19937_64& rng, std::set<std::string>& banned) {
  static const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r",
                                  "s", "t", "v", "z", "br", "dr", "kr", "st", "tr", "sh"};
  static const char* kVowels[] = {"a", "e", "i", "o", "u", "ai", "ou", "ei"};
  static const char* kCodas[] = {"", "", "n", "r", "s", "l", "x", "nd"};
  for (;;) {
    std::uniform_int_distribution<int> syl(2, 3);
    std::string w;
    const int n = syl(rng);
    for (int s = 0; s < n; ++s) {
      w += kOnsets[std::uniform_int_distribution<int>(0, 19)(rng)];
      w += kVowels[std::uniform_int_distribution<int>(0, 7)(rng)];
    }
    w += kCodas[std::uniform_int_distribution<int>(0, 7)(rng)];
    if (banned.insert(w).second) return w;
  }
}

}  // namespace

void SynthSpec::validate() const {
  if (source_types.empty() || target_types.empty()) {
    throw InputError("synthetic spec needs source and target types");
  }
  if (source_templates.empty() || target_templates.empty()) {
    throw InputError("synthetic spec needs templates on both sides");
  }
  std::set<std::string> names;
  std::set<std::string> words;
  const std::set<std::string> fixed = [&] {
    auto s = template_words(source_templates);
    auto t = template_words(target_templates);
    s.insert(t.begin(), t.end());
    return s;
  }();
  for (const auto* side : {&source_types, &target_types}) {
    for (const auto& type : *side) {
      if (!names.insert(type.name).second) {
        throw InputError("entity type " + type.name + " is both source and target");
      }
      std::set<std::string> distinct(type.values.begin(), type.values.end());
      if (distinct.size() < kMinValuesPerType) {
        throw InputError("vocabulary of " + type.name + " has " +
                         std::to_string(distinct.size()) + " distinct values; at least " +
                         std::to_string(kMinValuesPerType) +
                         " are needed to vary surface forms");
      }
      std::set<std::string> own;
      for (const auto& v : distinct) {
        const auto toks = split(v);
        if (toks.empty()) throw InputError("empty value in " + type.name);
        for (const auto& tok : toks) {
          if (fixed.count(tok)) {
            throw InputError("value word '" + tok + "' of " + type.name +
                             " also appears in a template");
          }
          if (is_reserved_token(tok)) throw InputError("reserved token in vocabulary");
          own.insert(tok);
        }
      }
      for (const auto& tok : own) {
        if (!words.insert(tok).second) {
          throw InputError("value word '" + tok + "' is shared between types");
        }
      }
    }
  }
  check_templates(source_templates, source_types, "source");
  check_templates(target_templates, target_types, "target");
  if (train_size == 0 || test_size == 0 || pool_size == 0) {
    throw InputError("corpus sizes must be positive");
  }
}

SynthSpec default_synth_spec(std::uint64_t seed) {
  SynthSpec spec;
  spec.seed = seed;
  spec.source_templates = {
      "i am flying to {CITY} next week",
      "the weather in {CITY} is lovely today",
      "she grew up near {CITY} with her family",
      "how far is {CITY} from here",
      "we booked a hotel in downtown {CITY}",
      "trains to {CITY} leave every hour",
      "please call {PERSON} tomorrow morning",
      "{PERSON} wrote the report yesterday",
      "i met {PERSON} at the conference",
      "the award went to {PERSON} this year",
      "ask {PERSON} about the budget",
      "my neighbor {PERSON} fixed the fence",
      "shares of {COMPANY} rose sharply",
      "she works as an engineer at {COMPANY}",
      "{COMPANY} announced record profits",
      "the merger between {COMPANY} and its rival failed",
      "i applied for a job at {COMPANY}",
      "analysts downgraded {COMPANY} again",
      "i bought a new {PRODUCT} online",
      "the {PRODUCT} battery lasts all day",
      "reviews of the {PRODUCT} are mixed",
      "return the {PRODUCT} within thirty days",
      "my {PRODUCT} stopped working",
      "is the {PRODUCT} on sale",
      "{PERSON} moved to {CITY} last year",
      "{PERSON} joined {COMPANY} as director",
      "{COMPANY} opened an office in {CITY}",
      "{PERSON} reviewed the {PRODUCT} on video",
      "{COMPANY} recalled the {PRODUCT} yesterday",
      "the meeting ran long again",
      "thanks for the quick reply",
      "it might rain later this afternoon",
  };
  // Target types fill the frames of CITY and PRODUCT under new labels and
  // with new values: what can transfer is the encoder's reading of slot
  // context, never a type name or a surface form.
  spec.target_templates = {
      "i am flying to {SONG} next week",
      "the weather in {SONG} is lovely today",
      "she grew up near {SONG} with her family",
      "how far is {SONG} from here",
      "we booked a hotel in downtown {SONG}",
      "trains to {SONG} leave every hour",
      "i bought a new {DISH} online",
      "the {DISH} battery lasts all day",
      "reviews of the {DISH} are mixed",
      "return the {DISH} within thirty days",
      "my {DISH} stopped working",
      "is the {DISH} on sale",
      "the meeting ran long again",
      "thanks for the quick reply",
      "it might rain later this afternoon",
      "turn off the music",
      "what is on the menu tonight",
      "set an alarm for seven",
  };

  std::mt19937_64 rng(seed ^ 0xC0FFEEULL);
  std::set<std::string> banned = template_words(spec.source_templates);
  const auto target_words = template_words(spec.target_templates);
  banned.insert(target_words.begin(), target_words.end());
  auto make_type = [&](const std::string& name) {
    SynthType t{name, {}};
    for (int i = 0; i < 30; ++i) {
      std::string v = pseudo_word(rng, banned);
      if (std::uniform_int_distribution<int>(0, 9)(rng) < 3) {
        v += " " + pseudo_word(rng, banned);
      }
      t.values.push_back(std::move(v));
    }
    return t;
  };
  for (const char* name : {"CITY", "PERSON", "COMPANY", "PRODUCT"}) {
    spec.source_types.push_back(make_type(name));
  }
  for (const char* name : {"SONG", "DISH"}) spec.target_types.push_back(make_type(name));
  return spec;
}

SynthCorpus generate(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  SynthCorpus out;
  out.train = fill_many(spec.source_templates, spec.source_types, spec.train_size, rng,
                        "train:");
  out.test = fill_many(spec.target_templates, spec.target_types, spec.test_size, rng,
                       "test:");
  std::vector<std::string> pool_templates;
  for (const auto& t : spec.target_templates) {
    const auto toks = split(t);
    if (std::any_of(toks.begin(), toks.end(), is_slot)) pool_templates.push_back(t);
  }
  const auto pool_sentences =
      fill_many(pool_templates, spec.target_types, spec.pool_size, rng, "pool:");
  for (const auto& ls : pool_sentences) {
    for (auto& ex : explode_to_support_examples(ls)) out.target_pool.add(std::move(ex));
  }
  return out;
}

void write_synth_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_bio_file(dir / "train.bio", corpus.train);
  write_bio_file(dir / "test.bio", corpus.test);
  write_support_json(dir / "target_pool.json", corpus.target_pool.flatten());
  std::vector<SupportExample> source;
  for (const auto& ls : corpus.train) {
    for (auto& ex : explode_to_support_examples(ls)) source.push_back(std::move(ex));
  }
  write_support_json(dir / "source_pool.json", source);
}

}  // namespace exner
