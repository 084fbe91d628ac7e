#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "morphogen/model.hpp"

namespace morphogen {

inline constexpr int kCheckpointFormatVersion = 1;

/// One model inside a checkpoint: the tag it inflects and, for
/// LM-interpolated models, the learned interpolation weight.
struct ModelEntry {
  std::string tag;
  ModelParams model;
  std::optional<double> lambda;
};

/// JSON checkpoint holding any number of models over one vocabulary and
/// configuration. Encoders shared between entries are written once and
/// shared again on load. Numbers round-trip exactly.
void write_model_set(std::ostream& out, std::span<const ModelEntry> entries);
std::vector<ModelEntry> read_model_set(std::istream& in);

void save_model_set(const std::filesystem::path& path, std::span<const ModelEntry> entries);
std::vector<ModelEntry> load_model_set(const std::filesystem::path& path);

/// Single-model convenience wrappers.
void save_checkpoint(const ModelParams& model, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace morphogen
