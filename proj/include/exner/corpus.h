#ifndef EXNER_CORPUS_H_
#define EXNER_CORPUS_H_

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace exner {

// Reserved surface forms for the entity boundary markers and the sequence
// start sentinel. None of them may appear in corpus text.
inline constexpr const char* kStartMarker = "\xE2\x9F\xA8" "e" "\xE2\x9F\xA9";     // ⟨e⟩
inline constexpr const char* kEndMarker = "\xE2\x9F\xA8" "/e" "\xE2\x9F\xA9";      // ⟨/e⟩
inline constexpr const char* kSentinelToken = "\xE2\x9F\xA8" "s" "\xE2\x9F\xA9";   // ⟨s⟩

bool is_reserved_token(const std::string& token);

// A pre-tokenized sentence. Token i is tokens[i].
struct Sentence {
  std::vector<std::string> tokens;
  std::string source_id;

  std::size_t size() const { return tokens.size(); }
  bool operator==(const Sentence&) const = default;
};

// Inclusive token range [start, end] labeled with an entity type.
struct EntitySpan {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string entity_type;

  bool overlaps(const EntitySpan& other) const {
    return start <= other.end && other.start <= end;
  }
  auto operator<=>(const EntitySpan&) const = default;
};

struct LabeledSentence {
  Sentence sentence;
  std::vector<EntitySpan> spans;  // non-overlapping, sorted by start

  bool operator==(const LabeledSentence&) const = default;
};

// A sentence with exactly one entity wrapped in boundary markers.
struct SupportExample {
  std::string id;
  std::string entity_type;
  // Sentence the example was cut from, when known.
  std::string source_id;
  std::vector<std::string> tokens;  // includes both markers
  std::size_t start_marker_pos = 0;
  std::size_t end_marker_pos = 0;

  // First and last entity token in the unmarked sentence.
  std::size_t entity_start() const { return start_marker_pos; }
  std::size_t entity_end() const { return end_marker_pos - 2; }
  // The sentence with markers removed.
  std::vector<std::string> plain_tokens() const;

  bool operator==(const SupportExample&) const = default;
};

// Builds a marked example around [entity_start, entity_end] of `tokens`.
// Throws InputError on an invalid range or reserved tokens in the input.
SupportExample make_support_example(std::vector<std::string> tokens,
                                    std::size_t entity_start,
                                    std::size_t entity_end,
                                    std::string entity_type,
                                    std::string id = {});

// Throws InputError unless the exactly-one-entity invariant holds.
void validate_support_example(const SupportExample& ex);

// Drops tokens outside the markers until the example fits in `max_length`,
// right side first. Throws InputError if the marked entity alone is too long.
SupportExample fit_support_example(const SupportExample& ex,
                                   std::size_t max_length);

// Examples grouped by entity type. Types are kept in name order; examples
// keep insertion order within a type.
class SupportSet {
 public:
  SupportSet() = default;

  void add(SupportExample ex);
  // Number of entity types (M).
  std::size_t num_types() const { return entries_.size(); }
  // Number of examples of `type` (m_E); 0 when absent.
  std::size_t count(const std::string& type) const;
  std::size_t total() const;
  bool empty() const { return entries_.empty(); }
  std::vector<std::string> types() const;
  const std::vector<SupportExample>& examples(const std::string& type) const;
  const std::map<std::string, std::vector<SupportExample>>& entries() const {
    return entries_;
  }
  // All examples, type by type.
  std::vector<SupportExample> flatten() const;

 private:
  std::map<std::string, std::vector<SupportExample>> entries_;
};

SupportSet build_support_set(const std::vector<SupportExample>& examples);

// One support example per gold span, each marking only that span.
std::vector<SupportExample> explode_to_support_examples(
    const LabeledSentence& ls);

// BIO (CoNLL-style) reading and writing. Each non-blank line is
// "token<TAB or SPACE>tag"; blank lines separate sentences.
std::vector<LabeledSentence> parse_bio(std::istream& in,
                                       const std::string& source_name);
std::vector<LabeledSentence> read_bio_corpus(const std::filesystem::path& path);
void write_bio(std::ostream& out, const std::vector<LabeledSentence>& corpus);
void write_bio_file(const std::filesystem::path& path,
                    const std::vector<LabeledSentence>& corpus);

// Support JSON: an array of
// {"entity_type", "tokens", "entity_start", "entity_end"} records, with an
// optional "id". Records without an id get "s<k>" (1-based file position).
std::vector<SupportExample> parse_support_json(const std::string& text);
std::vector<SupportExample> read_support_json(const std::filesystem::path& path);
std::string support_json(const std::vector<SupportExample>& examples);
void write_support_json(const std::filesystem::path& path,
                        const std::vector<SupportExample>& examples);

// Throws InputError unless spans are in range, sorted and non-overlapping.
void validate_labeled_sentence(const LabeledSentence& ls);

}  // namespace exner

#endif  // EXNER_CORPUS_H_
