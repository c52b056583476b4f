#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "multitrans/clip.hpp"
#include "multitrans/model.hpp"
#include "multitrans/synthetic.hpp"
#include "multitrans/train.hpp"

namespace multitrans {

enum class ModelKind { Network, OracleStub };

std::string_view to_string(ModelKind k);
ModelKind model_kind_from_string(std::string_view name);

/// A scorable model. The oracle stub ignores features and scores each frame
/// with its strong label; it exists to exercise the evaluation path.
struct Checkpoint {
    ModelKind kind = ModelKind::Network;
    ModelConfig config;
    ModelParams params;

    /// Content hash of kind, config and parameter values, as 16 hex digits.
    std::string id() const;
    static Checkpoint oracle_stub(const ModelConfig& cfg);
};

/// Frame scores of one clip, frames x classes, row-major.
std::vector<double> frame_scores(const Checkpoint& model, const FeatureClip& clip);

struct EvalReport {
    /// nullopt for classes without positive test frames.
    std::vector<std::optional<double>> per_class_ap;
    std::vector<std::size_t> excluded_classes;
    double map = 0.0;
    ModelConfig config;
    std::string checkpoint_id;
    std::size_t num_frames = 0;
};

/// Pooled frame-level AP per class over every frame of every clip. Clips are
/// pooled in clip_id order, so the report does not depend on input order.
EvalReport evaluate(const Checkpoint& model, std::span<const FeatureClip> test);

struct AttentionRow {
    std::string clip_id;
    std::size_t frame = 0;
    std::size_t layer = 0;
    std::size_t head = 0;
    std::size_t query_sensor = 0;
    std::size_t key_sensor = 0;
    double weight = 0.0;
    /// weight * S, so 1.0 means equal attention over sensors.
    double weight_normalized = 0.0;
};

/// Every attention weight of every layer, head and frame of one clip.
std::vector<AttentionRow> dump_attention(const Checkpoint& model, const FeatureClip& clip);

/// Fusion variant and head of a named ablation row: A-1..A-3 are the
/// baseline with Sum, Max, Concat; C-1..C-3 the same with MultiTrans.
struct AblationVariant {
    std::string name;
    Variant variant;
    Fusion fusion;
};

AblationVariant ablation_variant(std::string_view name);
std::vector<std::string> ablation_names();

struct AblationRow {
    std::string name;
    EvalReport report;
};

/// Trains and evaluates each named variant on the same data and seed.
std::vector<AblationRow> run_ablation(const Dataset& data, const ModelConfig& base, const TrainConfig& train_cfg,
                                      std::span<const std::string> names);

}  // namespace multitrans
