#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "multitrans/eval.hpp"
#include "multitrans/model.hpp"
#include "multitrans/synthetic.hpp"
#include "multitrans/train.hpp"

namespace multitrans {

/// Everything a run needs. Sections missing from a config file keep their defaults.
struct RunConfig {
    GenConfig generator = GenConfig::desk_default();
    ModelConfig model;
    TrainConfig training;
};

std::string run_config_to_json(const RunConfig& cfg);
/// Throws ContractError on unknown keys or ill-typed values.
RunConfig run_config_from_json(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& cfg);

inline constexpr const char* kCheckpointSchema = "multitrans-ckpt-v1";
inline constexpr const char* kDatasetSchema = "multitrans-dataset-v1";

/// JSON document with the schema tag, model kind, config and every parameter
/// as {shape, data}. Doubles round-trip exactly.
std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const std::string& text);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Writes manifest.json plus one little-endian float64 feature file per clip.
void save_dataset(const std::filesystem::path& dir, const Dataset& data, const GenConfig& cfg);
Dataset load_dataset(const std::filesystem::path& dir);

/// Shortest decimal with 6 significant digits, as used in every CSV.
std::string format_sig6(double v);

std::string metrics_csv(const EvalReport& report);
std::string loss_csv(std::span<const EpochRecord> history);
std::string attention_csv(std::span<const AttentionRow> rows);
std::string ablation_csv(std::span<const AblationRow> rows);
std::string report_to_json(const EvalReport& report);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace multitrans
