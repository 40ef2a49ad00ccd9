#include "exner/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>

#include "exner/errors.h"

namespace exner {

using json = nlohmann::json;

namespace {

constexpr char kMagic[8] = {'E', 'X', 'N', 'E', 'R', 'C', 'K', '1'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_matrix(std::ostream& out, const Matrix& m) {
  // Row-major on disk.
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  }
}

void read_matrix(std::istream& in, Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      double v;
      if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) {
        throw InputError("checkpoint is truncated");
      }
      m(r, c) = v;
    }
  }
}

ToyParams params_from_shapes(const json& shapes, const EncoderConfig& cfg) {
  // Build the skeleton from the config, then verify names and shapes.
  ToyTransformer skeleton(cfg);
  ToyParams p = skeleton.params().zeros_like();
  std::size_t k = 0;
  p.for_each([&](const std::string& name, Matrix& m) {
    if (k >= shapes.size() || shapes[k].at("name").get<std::string>() != name ||
        shapes[k].at("rows").get<Eigen::Index>() != m.rows() ||
        shapes[k].at("cols").get<Eigen::Index>() != m.cols()) {
      throw InputError("checkpoint tensor layout does not match its config");
    }
    ++k;
  });
  if (k != shapes.size()) throw InputError("checkpoint has extra tensors");
  return p;
}

}  // namespace

json encoder_config_to_json(const EncoderConfig& cfg) {
  return {{"kind", to_string(cfg.kind)},
          {"dim", cfg.dim},
          {"layers", cfg.layers},
          {"heads", cfg.heads},
          {"vocab_hash_buckets", cfg.vocab_hash_buckets},
          {"seed", cfg.seed},
          {"context_window", cfg.context_window},
          {"max_sequence_length", cfg.max_sequence_length}};
}

EncoderConfig encoder_config_from_json(const json& j) {
  EncoderConfig cfg;
  cfg.kind = parse_encoder_kind(j.at("kind").get<std::string>());
  cfg.dim = j.at("dim").get<int>();
  cfg.layers = j.at("layers").get<int>();
  cfg.heads = j.at("heads").get<int>();
  cfg.vocab_hash_buckets = j.at("vocab_hash_buckets").get<int>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.context_window = j.at("context_window").get<int>();
  cfg.max_sequence_length = j.at("max_sequence_length").get<std::size_t>();
  return cfg;
}

json training_config_to_json(const TrainingConfig& cfg) {
  return {{"k", cfg.k},
          {"temperature", cfg.temperature},
          {"learning_rate", cfg.learning_rate},
          {"adam_beta1", cfg.adam_beta1},
          {"adam_beta2", cfg.adam_beta2},
          {"adam_epsilon", cfg.adam_epsilon},
          {"weight_decay", cfg.weight_decay},
          {"max_sequence_length", cfg.max_sequence_length},
          {"neg_pos_ratio", cfg.neg_pos_ratio},
          {"batch_size", cfg.batch_size},
          {"epochs", cfg.epochs},
          {"seed", cfg.seed},
          {"squash", to_string(cfg.squash)}};
}

TrainingConfig training_config_from_json(const json& j) {
  TrainingConfig cfg;
  cfg.k = j.at("k").get<int>();
  cfg.temperature = j.at("temperature").get<double>();
  cfg.learning_rate = j.at("learning_rate").get<double>();
  cfg.adam_beta1 = j.at("adam_beta1").get<double>();
  cfg.adam_beta2 = j.at("adam_beta2").get<double>();
  cfg.adam_epsilon = j.at("adam_epsilon").get<double>();
  cfg.weight_decay = j.at("weight_decay").get<double>();
  cfg.max_sequence_length = j.at("max_sequence_length").get<std::size_t>();
  cfg.neg_pos_ratio = j.at("neg_pos_ratio").get<double>();
  cfg.batch_size = j.at("batch_size").get<int>();
  cfg.epochs = j.at("epochs").get<int>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.squash = parse_squash(j.at("squash").get<std::string>());
  return cfg;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  json header;
  header["encoder"] = encoder_config_to_json(ck.encoder);
  if (ck.training) header["training"] = training_config_to_json(*ck.training);
  header["loss_curve"] = ck.loss_curve;
  if (ck.params) {
    json shapes = json::array();
    ck.params->for_each([&](const std::string& name, const Matrix& m) {
      shapes.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
    });
    header["tensors"] = std::move(shapes);
  }
  header["optimizer_step"] = ck.optimizer ? ck.optimizer->step : -1;
  json table = json::array();
  for (const auto& [key, m] : ck.precomputed) {
    table.push_back({{"key", key}, {"rows", m.rows()}, {"cols", m.cols()}});
  }
  header["precomputed"] = std::move(table);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write checkpoint '" + path.string() + "'");
  const std::string text = header.dump();
  out.write(kMagic, sizeof(kMagic));
  write_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  auto dump_params = [&](const ToyParams& p) {
    p.for_each([&](const std::string&, const Matrix& m) { write_matrix(out, m); });
  };
  if (ck.params) dump_params(*ck.params);
  if (ck.params && ck.optimizer) {
    dump_params(ck.optimizer->first_moment);
    dump_params(ck.optimizer->second_moment);
  }
  for (const auto& [key, m] : ck.precomputed) write_matrix(out, m);
  if (!out) throw InputError("failed writing checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint '" + path.string() + "'");
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw InputError("'" + path.string() + "' is not an exner checkpoint");
  }
  std::uint64_t len = 0;
  if (!in.read(reinterpret_cast<char*>(&len), sizeof(len)) || len > (1ULL << 32)) {
    throw InputError("checkpoint header is corrupt");
  }
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) {
    throw InputError("checkpoint is truncated");
  }
  Checkpoint ck;
  try {
    const json header = json::parse(text);
    ck.encoder = encoder_config_from_json(header.at("encoder"));
    ck.encoder.validate();
    if (header.contains("training")) {
      ck.training = training_config_from_json(header.at("training"));
    }
    ck.loss_curve = header.value("loss_curve", std::vector<double>{});
    if (header.contains("tensors")) {
      ck.params = params_from_shapes(header.at("tensors"), ck.encoder);
      ck.params->for_each([&](const std::string&, Matrix& m) { read_matrix(in, m); });
      const auto step = header.value("optimizer_step", std::int64_t{-1});
      if (step >= 0) {
        AdamState st = AdamState::zeros_for(*ck.params);
        st.step = step;
        st.first_moment.for_each([&](const std::string&, Matrix& m) { read_matrix(in, m); });
        st.second_moment.for_each([&](const std::string&, Matrix& m) { read_matrix(in, m); });
        ck.optimizer = std::move(st);
      }
    }
    for (const auto& rec : header.at("precomputed")) {
      Matrix m(rec.at("rows").get<Eigen::Index>(), rec.at("cols").get<Eigen::Index>());
      read_matrix(in, m);
      ck.precomputed.emplace(rec.at("key").get<std::string>(), std::move(m));
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("checkpoint header: ") + e.what());
  }
  if (ck.encoder.kind == EncoderKind::kToyTransformer && !ck.params) {
    throw InputError("toy transformer checkpoint has no parameters");
  }
  return ck;
}

Checkpoint checkpoint_for(const Encoder& encoder) {
  Checkpoint ck;
  ck.encoder = encoder.config();
  if (const auto* toy = dynamic_cast<const ToyTransformer*>(&encoder)) {
    ck.params = toy->params();
  } else if (const auto* pre = dynamic_cast<const PrecomputedEncoder*>(&encoder)) {
    ck.precomputed = pre->table();
  }
  return ck;
}

std::unique_ptr<Encoder> make_encoder(const Checkpoint& ck) {
  switch (ck.encoder.kind) {
    case EncoderKind::kToyTransformer:
      return std::make_unique<ToyTransformer>(ck.encoder, *ck.params);
    case EncoderKind::kStaticHash:
      return std::make_unique<StaticHashEncoder>(ck.encoder);
    case EncoderKind::kPrecomputed:
      return std::make_unique<PrecomputedEncoder>(ck.encoder, ck.precomputed);
  }
  throw InputError("unknown encoder kind");
}

std::unique_ptr<Encoder> make_encoder(const EncoderConfig& cfg) {
  switch (cfg.kind) {
    case EncoderKind::kToyTransformer: return std::make_unique<ToyTransformer>(cfg);
    case EncoderKind::kStaticHash: return std::make_unique<StaticHashEncoder>(cfg);
    case EncoderKind::kPrecomputed:
      throw InputError("precomputed encoders are loaded from a vector file");
  }
  throw InputError("unknown encoder kind");
}

}  // namespace exner
