#pragma once

#include <filesystem>
#include <string>

#include "otmf/nn.hpp"

namespace otmf::nn {

/// Everything needed to resume training or run inference. Stored as JSON;
/// doubles are written with round-trip precision.
struct Checkpoint {
  MlpParams params;
  MlpParams ema;
  AdamState adam;
  long step = 0;
  FlowMode mode = FlowMode::meanflow;
  std::string config_text;  // run config snapshot (key = value lines)
};

inline constexpr int kCheckpointVersion = 1;

std::string to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const std::string& text);

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
/// Throws std::runtime_error naming the path on unreadable or corrupt files.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace otmf::nn
