#ifndef EXNER_CHECKPOINT_H_
#define EXNER_CHECKPOINT_H_

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "exner/encoder.h"
#include "exner/toy_transformer.h"
#include "exner/trainer.h"
#include "json.hpp"

namespace exner {

// Everything needed to rebuild an encoder and resume training.
//
// File layout: the 8 bytes "EXNERCK1", a little-endian uint64 header length,
// the JSON header, then float64 little-endian tensor data. Toy transformer
// tensors are written in ToyParams::visit order (parameters, then Adam first
// and second moments when present); precomputed tables follow in key order.
struct Checkpoint {
  EncoderConfig encoder;
  std::optional<ToyParams> params;
  std::optional<AdamState> optimizer;
  std::map<std::string, Matrix> precomputed;
  std::optional<TrainingConfig> training;
  std::vector<double> loss_curve;
};

nlohmann::json encoder_config_to_json(const EncoderConfig& cfg);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);
nlohmann::json training_config_to_json(const TrainingConfig& cfg);
TrainingConfig training_config_from_json(const nlohmann::json& j);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
// Throws InputError on a missing, truncated or malformed file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Checkpoint for a freshly built encoder of any kind.
Checkpoint checkpoint_for(const Encoder& encoder);
std::unique_ptr<Encoder> make_encoder(const Checkpoint& ck);

// A new, untrained encoder (random toy transformer or static hash).
std::unique_ptr<Encoder> make_encoder(const EncoderConfig& cfg);

}  // namespace exner

#endif  // EXNER_CHECKPOINT_H_
