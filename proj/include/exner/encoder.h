#ifndef EXNER_ENCODER_H_
#define EXNER_ENCODER_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "exner/corpus.h"

namespace exner {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class EncoderKind { kToyTransformer, kStaticHash, kPrecomputed };

std::string to_string(EncoderKind kind);
EncoderKind parse_encoder_kind(const std::string& name);

struct EncoderConfig {
  EncoderKind kind = EncoderKind::kToyTransformer;
  int dim = 64;
  int layers = 2;
  int heads = 4;
  int vocab_hash_buckets = 8192;
  std::uint64_t seed = 0;
  // Neighbors on each side mixed into a static-hash vector.
  int context_window = 1;
  std::size_t max_sequence_length = 384;

  // Throws InputError on non-positive sizes or dim % heads != 0.
  void validate() const;
};

// Contextual vectors for one token sequence. Row 0 is the sequence-start
// sentinel; row i + 1 is token i.
struct EncodedSequence {
  Matrix vectors;
  Vector sentence_rep;  // sum of all rows
  bool truncated = false;

  std::size_t num_tokens() const {
    return static_cast<std::size_t>(vectors.rows()) - 1;
  }
};

struct SupportEncoding {
  EncodedSequence base;
  Vector boundary_start;  // row of the opening marker
  Vector boundary_end;    // row of the closing marker
};

// Sets sentence_rep to the column-wise sum of `seq.vectors`.
void finalize_sentence_rep(EncodedSequence& seq);

// Stable 64-bit FNV-1a hash; bucket assignment must not depend on the
// standard library's std::hash.
std::uint64_t stable_hash(std::string_view text, std::uint64_t salt = 0);

class Encoder {
 public:
  virtual ~Encoder() = default;

  virtual const EncoderConfig& config() const = 0;
  int dim() const { return config().dim; }

  // Sequences longer than config().max_sequence_length are truncated from the
  // right, with a warning and `truncated` set.
  EncodedSequence encode(std::span<const std::string> tokens) const;

 protected:
  // `tokens` already fits the length budget and is non-empty.
  virtual Matrix encode_rows(std::span<const std::string> tokens) const = 0;
};

SupportEncoding encode_support(const Encoder& encoder, const SupportExample& ex);

// Non-trainable encoder: each row is a fixed pseudo-random vector of its token,
// plus geometrically decayed vectors of the tokens within `context_window`.
class StaticHashEncoder : public Encoder {
 public:
  explicit StaticHashEncoder(EncoderConfig config);
  const EncoderConfig& config() const override { return config_; }

 protected:
  Matrix encode_rows(std::span<const std::string> tokens) const override;

 private:
  Vector token_vector(const std::string& token, int offset) const;

  EncoderConfig config_;
};

// Serves vectors computed elsewhere. Sequences are keyed by their tokens
// joined with single spaces (the sentinel is not part of the key); each
// stored matrix has one row per token plus the sentinel row.
class PrecomputedEncoder : public Encoder {
 public:
  PrecomputedEncoder(EncoderConfig config, std::map<std::string, Matrix> table);

  const EncoderConfig& config() const override { return config_; }
  const std::map<std::string, Matrix>& table() const { return table_; }

  static std::string key_for(std::span<const std::string> tokens);

 protected:
  Matrix encode_rows(std::span<const std::string> tokens) const override;

 private:
  EncoderConfig config_;
  std::map<std::string, Matrix> table_;
};

// Vector file: {"format": "exner-vectors", "dim": d,
//               "sequences": [{"key": "...", "rows": [[...], ...]}, ...]}
std::unique_ptr<PrecomputedEncoder> load_precomputed(
    const std::filesystem::path& path, const EncoderConfig& config);
void save_precomputed(const std::filesystem::path& path, int dim,
                      const std::map<std::string, Matrix>& table);

}  // namespace exner

#endif  // EXNER_ENCODER_H_
