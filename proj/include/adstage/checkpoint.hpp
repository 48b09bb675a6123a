#pragma once

#include "adstage/architectures.hpp"
#include "adstage/trainer.hpp"

#include <json.hpp>

#include <filesystem>

namespace adstage {

/// Model parameters (including batch-norm moving statistics), Adam moments,
/// schedule state and history in one WeightArchive file. Parameters are
/// stored as "param/<key>", moments as "adam/m/<key>" and "adam/v/<key>".
/// `extra` is merged into the archive metadata.
void save_checkpoint(const std::filesystem::path& path, const ModelGraph& graph, const TrainingState& state,
                     const nlohmann::json& extra = nlohmann::json::object());

/// Restores into `graph` and `state`. Either both are fully replaced or, on
/// any error, neither is touched. Throws CheckpointError.
void load_checkpoint(const std::filesystem::path& path, ModelGraph& graph, TrainingState& state);

/// Metadata only (model name, scale, epoch, ...). Throws CheckpointError.
nlohmann::json read_checkpoint_metadata(const std::filesystem::path& path);

} // namespace adstage
