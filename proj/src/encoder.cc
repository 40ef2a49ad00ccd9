#include "exner/encoder.h"

#include <cmath>
#include <fstream>
#include <sstream>

#include "exner/errors.h"
#include "exner/log.h"
#include "json.hpp"

namespace exner {

using json = nlohmann::json;

std::string to_string(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::kToyTransformer: return "toy-transformer";
    case EncoderKind::kStaticHash: return "static-hash";
    case EncoderKind::kPrecomputed: return "precomputed";
  }
  return "unknown";
}

EncoderKind parse_encoder_kind(const std::string& name) {
  if (name == "toy-transformer") return EncoderKind::kToyTransformer;
  if (name == "static-hash") return EncoderKind::kStaticHash;
  if (name == "precomputed") return EncoderKind::kPrecomputed;
  throw InputError("unknown encoder kind '" + name + "'");
}

void EncoderConfig::validate() const {
  if (dim <= 0 || layers <= 0 || heads <= 0 || vocab_hash_buckets <= 0) {
    throw InputError("encoder sizes must be positive");
  }
  if (dim % heads != 0) throw InputError("dim must be divisible by heads");
  if (context_window < 0) throw InputError("context_window must be >= 0");
  if (max_sequence_length < 1) throw InputError("max_sequence_length must be >= 1");
}

void finalize_sentence_rep(EncodedSequence& seq) {
  seq.sentence_rep = seq.vectors.colwise().sum().transpose();
}

std::uint64_t stable_hash(std::string_view text, std::uint64_t salt) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ (salt * 0x9E3779B97F4A7C15ULL);
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

EncodedSequence Encoder::encode(std::span<const std::string> tokens) const {
  if (tokens.empty()) throw InputError("cannot encode an empty sequence");
  EncodedSequence out;
  const std::size_t limit = config().max_sequence_length;
  if (tokens.size() > limit) {
    warn("sequence of ", tokens.size(), " tokens truncated to ", limit);
    tokens = tokens.first(limit);
    out.truncated = true;
  }
  out.vectors = encode_rows(tokens);
  finalize_sentence_rep(out);
  return out;
}

SupportEncoding encode_support(const Encoder& encoder, const SupportExample& ex) {
  validate_support_example(ex);
  const SupportExample fitted =
      fit_support_example(ex, encoder.config().max_sequence_length);
  SupportEncoding out;
  out.base = encoder.encode(fitted.tokens);
  out.boundary_start = out.base.vectors.row(fitted.start_marker_pos + 1).transpose();
  out.boundary_end = out.base.vectors.row(fitted.end_marker_pos + 1).transpose();
  return out;
}

StaticHashEncoder::StaticHashEncoder(EncoderConfig config)
    : config_(std::move(config)) {
  config_.kind = EncoderKind::kStaticHash;
  config_.validate();
}

Vector StaticHashEncoder::token_vector(const std::string& token,
                                       int offset) const {
  // splitmix64 stream seeded by (token, offset, seed), mapped to [-1, 1).
  std::uint64_t state = stable_hash(token, static_cast<std::uint64_t>(offset + 1024)) ^
                        (config_.seed * 0xD1B54A32D192ED03ULL);
  Vector v(config_.dim);
  for (int k = 0; k < config_.dim; ++k) {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z ^= z >> 31;
    v[k] = static_cast<double>(z >> 11) * 0x1.0p-52 - 1.0;
  }
  return v / std::sqrt(static_cast<double>(config_.dim) / 3.0);
}

Matrix StaticHashEncoder::encode_rows(std::span<const std::string> tokens) const {
  std::vector<std::string> seq;
  seq.reserve(tokens.size() + 1);
  seq.emplace_back(kSentinelToken);
  seq.insert(seq.end(), tokens.begin(), tokens.end());
  const int n = static_cast<int>(seq.size());
  const int w = config_.context_window;
  Matrix out = Matrix::Zero(n, config_.dim);
  for (int i = 0; i < n; ++i) {
    for (int o = -w; o <= w; ++o) {
      const int j = i + o;
      if (j < 0 || j >= n) continue;
      out.row(i) += std::pow(0.5, std::abs(o)) * token_vector(seq[j], o).transpose();
    }
  }
  return out;
}

PrecomputedEncoder::PrecomputedEncoder(EncoderConfig config,
                                       std::map<std::string, Matrix> table)
    : config_(std::move(config)), table_(std::move(table)) {
  config_.kind = EncoderKind::kPrecomputed;
  if (config_.dim <= 0) throw InputError("dim must be positive");
  for (const auto& [key, m] : table_) {
    if (m.cols() != config_.dim) {
      throw InputError("precomputed sequence '" + key + "' has dimension " +
                       std::to_string(m.cols()) + ", expected " +
                       std::to_string(config_.dim));
    }
  }
}

std::string PrecomputedEncoder::key_for(std::span<const std::string> tokens) {
  std::string key;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) key += ' ';
    key += tokens[i];
  }
  return key;
}

Matrix PrecomputedEncoder::encode_rows(std::span<const std::string> tokens) const {
  const std::string key = key_for(tokens);
  auto it = table_.find(key);
  if (it == table_.end()) {
    throw NotFoundError("no precomputed vectors for sequence '" + key + "'");
  }
  if (static_cast<std::size_t>(it->second.rows()) != tokens.size() + 1) {
    throw InputError("precomputed sequence '" + key + "' has " +
                     std::to_string(it->second.rows()) + " rows, expected " +
                     std::to_string(tokens.size() + 1));
  }
  return it->second;
}

std::unique_ptr<PrecomputedEncoder> load_precomputed(
    const std::filesystem::path& path, const EncoderConfig& config) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open vector file '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("vector file: ") + e.what());
  }
  if (doc.value("format", "") != "exner-vectors") {
    throw InputError("'" + path.string() + "' is not an exner vector file");
  }
  const int dim = doc.at("dim").get<int>();
  if (dim != config.dim) {
    throw InputError("vector file dimension " + std::to_string(dim) +
                     " does not match configured dimension " +
                     std::to_string(config.dim));
  }
  std::map<std::string, Matrix> table;
  for (const auto& rec : doc.at("sequences")) {
    const auto& rows = rec.at("rows");
    Matrix m(static_cast<Eigen::Index>(rows.size()), dim);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != static_cast<std::size_t>(dim)) {
        throw InputError("vector file row width differs from dim");
      }
      for (int c = 0; c < dim; ++c) m(static_cast<Eigen::Index>(r), c) = rows[r][c].get<double>();
    }
    table.emplace(rec.at("key").get<std::string>(), std::move(m));
  }
  EncoderConfig cfg = config;
  cfg.kind = EncoderKind::kPrecomputed;
  return std::make_unique<PrecomputedEncoder>(cfg, std::move(table));
}

void save_precomputed(const std::filesystem::path& path, int dim,
                      const std::map<std::string, Matrix>& table) {
  json doc;
  doc["format"] = "exner-vectors";
  doc["dim"] = dim;
  doc["sequences"] = json::array();
  for (const auto& [key, m] : table) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
      rows.push_back(std::move(row));
    }
    doc["sequences"].push_back({{"key", key}, {"rows", std::move(rows)}});
  }
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << doc.dump() << '\n';
}

}  // namespace exner
