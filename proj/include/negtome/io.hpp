#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "negtome/harness.hpp"
#include "negtome/tensor.hpp"

namespace negtome {

// Binary tensor file, little-endian:
//   offset 0: magic "NTF1"
//   offset 4: dtype u8 (0 = f32)
//   offset 5: rank u8 (2 or 3)
//   offset 6: rank x u64 extents
//   then    : f32 payload, row-major
std::vector<uint8_t> serialize_tensor(const Tensor& t);
Tensor parse_tensor(const std::vector<uint8_t>& bytes);

Tensor read_tensor(const std::filesystem::path& path);
void write_tensor(const std::filesystem::path& path, const Tensor& t);

// JSON mirror of a full experiment: model dims, run template, seed list,
// optional asset store and output directory. Unknown keys are rejected.
struct ExperimentConfig {
    ToyDims dims;
    uint64_t model_seed = 0;
    std::vector<uint64_t> seeds;
    RunConfig run; // run.seed is filled per seed at execution time
    std::optional<std::string> assets_path;
    std::optional<std::string> output_dir;
};

ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// Fully resolved echo of the config; field order is stable, so dumps are
// byte-reproducible.
nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg);

// Asset store directory: manifest.json listing {"tokens": file, "mask":
// file (optional), "label": string (optional)} entries, paths relative to
// the directory. Masks are H x W grids, resized at load to each asset's
// token count.
AssetStore load_asset_store(const std::filesystem::path& dir);

} // namespace negtome
