#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "psss/model.hpp"

namespace psss {

inline constexpr int kCheckpointFormat = 1;

/// Metadata stored next to the tensors. Serialized as one JSON string entry "meta".
struct CheckpointMeta {
  int format_version = kCheckpointFormat;
  ModelSpec model;
  Normalizer normalizer;
  int epoch = 0;
  long step = 0;
  double val_miou = -1.0;
  bool has_teacher = false;
  bool has_optimizer = false;
  std::map<std::string, std::array<std::uint64_t, 4>> rng_states;
  std::string config_json = "{}";
};

std::string meta_to_json(const CheckpointMeta& meta);
CheckpointMeta meta_from_json(const std::string& text);

/// Writes a torch archive holding "meta", "model/*", optionally "teacher/*" and
/// "optimizer/*". The file is written to a temporary name and renamed into place.
void save_checkpoint(const std::filesystem::path& path, const CheckpointMeta& meta, SegmentationModel& model,
                     SegmentationModel* teacher = nullptr, torch::optim::Optimizer* optimizer = nullptr);

struct LoadedCheckpoint {
  CheckpointMeta meta;
  ModelPtr model;
  ModelPtr teacher;  // null unless stored
};

/// Throws kIo for missing/unreadable files and kParse for unknown format versions.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Restores optimizer state saved with the checkpoint into an optimizer built over the
/// loaded model's parameters.
void load_optimizer_state(const std::filesystem::path& path, torch::optim::Optimizer& optimizer);

}  // namespace psss
