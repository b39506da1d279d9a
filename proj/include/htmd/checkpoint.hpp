#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include <json.hpp>

#include "htmd/adam.hpp"
#include "htmd/separator.hpp"

namespace htmd::train {

inline constexpr const char* kCheckpointMagic = "HTMD-CHECKPOINT";
inline constexpr int kCheckpointVersion = 1;

// FNV-1a over the canonical JSON dump of the architecture.
std::string config_hash(const model::ModelConfig& cfg);

// File layout:
//   "HTMD-CHECKPOINT v1\n" <header byte count> "\n" <JSON header> <float32 LE blobs>
// The header holds the model config and its hash, a tensor manifest
// (name, shape, byte offset, kind), optimizer scalars and free-form metadata.
void save_checkpoint(const std::filesystem::path& path, const model::Separator<float>& model,
                     const Adam<float>* optimizer = nullptr, const nlohmann::json& meta = nlohmann::json::object());

struct LoadedCheckpoint {
    std::unique_ptr<model::Separator<float>> model;
    Adam<float> optimizer;
    bool has_optimizer = false;
    nlohmann::json meta;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// Loads weights into an existing model; the stored config hash must match the model's.
void load_checkpoint_into(const std::filesystem::path& path, model::Separator<float>& model,
                          Adam<float>* optimizer = nullptr, nlohmann::json* meta = nullptr);

// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace htmd::train
