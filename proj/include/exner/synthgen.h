#ifndef EXNER_SYNTHGEN_H_
#define EXNER_SYNTHGEN_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "exner/corpus.h"

namespace exner {

// An entity type with its surface forms (space-separated tokens).
struct SynthType {
  std::string name;
  std::vector<std::string> values;
};

// Templates are whitespace-tokenized sentences; a token "{NAME}" is a slot
// filled with a value of type NAME. Templates without slots produce
// entity-free sentences.
struct SynthSpec {
  std::vector<SynthType> source_types;
  std::vector<SynthType> target_types;
  std::vector<std::string> source_templates;
  std::vector<std::string> target_templates;
  std::size_t train_size = 400;
  std::size_t test_size = 100;
  std::size_t pool_size = 120;  // target sentences exploded into supports
  std::uint64_t seed = 0;

  // Throws InputError when type sets or vocabularies overlap, a template
  // names a type from the wrong side, or a type has too few values.
  void validate() const;
};

inline constexpr std::size_t kMinValuesPerType = 2;

// Four source types and two unseen target types, 30 pseudo-word values each
// (about 30% two words long). SONG and DISH reuse the sentence frames of CITY
// and PRODUCT; their labels and values never occur in training.
SynthSpec default_synth_spec(std::uint64_t seed = 0);

struct SynthCorpus {
  std::vector<LabeledSentence> train;  // source types only
  std::vector<LabeledSentence> test;   // target types only
  SupportSet target_pool;              // target types only
};

SynthCorpus generate(const SynthSpec& spec);

// train.bio, test.bio, target_pool.json and source_pool.json under `dir`.
void write_synth_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir);

}  // namespace exner

#endif  // EXNER_SYNTHGEN_H_
