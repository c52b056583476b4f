#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "multitrans/clip.hpp"
#include "multitrans/tensor.hpp"

namespace multitrans {

enum class Fusion { Sum, Max, Concat };
enum class Variant { Baseline, MultiTrans };

std::string_view to_string(Fusion f);
std::string_view to_string(Variant v);
Fusion fusion_from_string(std::string_view name);
Variant variant_from_string(std::string_view name);

struct ModelConfig {
    std::size_t num_sensors = 6;
    std::size_t input_dim = 8;
    std::size_t embed_dim = 10;
    std::size_t num_heads = 4;
    std::size_t num_blocks = 2;
    std::size_t num_classes = 4;
    Fusion fusion = Fusion::Concat;
    /// 0 selects 4 * d_model.
    std::size_t ffn_dim = 0;
    double threshold = 0.5;
    Variant variant = Variant::MultiTrans;
    /// Append the one-hot sensor identity to each embedding. When off, the
    /// one-hot block is zero so parameter shapes are unchanged.
    bool sensor_encoding = true;

    std::size_t d_model() const { return embed_dim + num_sensors; }
    std::size_t head_dim() const { return d_model() / num_heads; }
    std::size_t ffn_width() const { return ffn_dim ? ffn_dim : 4 * d_model(); }
    /// Classifier input width: S * d_model for Concat, d_model otherwise.
    std::size_t fused_width() const { return fusion == Fusion::Concat ? num_sensors * d_model() : d_model(); }

    /// Throws ContractError on an invalid configuration.
    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

/// Named tree of learnable tensors; every leaf requires grad.
class ModelParams {
public:
    static ModelParams initialize(const ModelConfig& cfg, std::uint64_t seed);
    /// Number of scalars a model with this config holds.
    static std::size_t expected_count(const ModelConfig& cfg);

    const Tensor& at(const std::string& name) const;
    Tensor& at(const std::string& name);
    bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
    void insert(std::string name, Tensor t);

    const std::map<std::string, Tensor>& tensors() const { return tensors_; }
    std::size_t scalar_count() const;
    void zero_grad();
    /// Deep copy that shares no storage with this tree.
    ModelParams clone() const;

private:
    std::map<std::string, Tensor> tensors_;
};

struct AttentionParams {
    std::vector<Tensor> query;  // per head, d_model x d_k
    std::vector<Tensor> key;
    std::vector<Tensor> value;
    Tensor out;  // d_model x d_model
};

struct BlockParams {
    AttentionParams attention;
    Tensor norm1_gain, norm1_bias;
    Tensor ffn_in_weight, ffn_in_bias;
    Tensor ffn_out_weight, ffn_out_bias;
    Tensor norm2_gain, norm2_bias;
};

AttentionParams attention_params(const ModelParams& params, std::size_t block, std::size_t heads);
BlockParams block_params(const ModelParams& params, std::size_t block, std::size_t heads);

struct AttentionOutput {
    Tensor output;
    /// Per head: attention weights, [S x S] for rank-2 input or [N x S x S].
    std::vector<Tensor> weights;
};

/// Multi-head self-attention with queries, keys and values all taken from x.
/// x is [S x d_model] or a batch of frames [N x S x d_model].
AttentionOutput mhsa(const Tensor& x, const AttentionParams& p);

/// Post-norm residual block: LN(x + MHSA(x)), then LN(. + FFN(.)) with a GELU FFN.
struct BlockOutput {
    Tensor output;
    std::vector<Tensor> attention;
};
BlockOutput transformer_block(const Tensor& x, const BlockParams& p);

/// concat(phi, onehot_S(sensor)), sensor in [0, S).
Tensor sensor_encode(const Tensor& phi, std::size_t sensor, std::size_t num_sensors);

struct AttentionRecord {
    std::size_t layer = 0;
    std::size_t head = 0;
    std::size_t frame = 0;
    std::size_t sensors = 0;
    /// sensors x sensors, row = query sensor, row-stochastic.
    std::vector<double> weights;

    double at(std::size_t query, std::size_t key) const { return weights[query * sensors + key]; }
};

struct FrameBatchOutput {
    /// Per-sensor rows before fusion, [N x S x d_model].
    Tensor rows;
    Tensor logits;  // [N x C]
    Tensor probs;   // [N x C]
    /// [layer][head] -> [N x S x S]; empty for the Baseline variant.
    std::vector<std::vector<Tensor>> attention;
};

/// Runs the network on N independent frames: features is [N x S x input_dim].
FrameBatchOutput forward_frames(const Tensor& features, std::span<const Modality> modality,
                                const ModelParams& params, const ModelConfig& cfg);

struct FrameOutput {
    Tensor probs;  // [C]
    std::vector<AttentionRecord> attention;
};

/// One time step: psi is [S x input_dim].
FrameOutput forward_frame(const Tensor& psi, std::span<const Modality> modality, const ModelParams& params,
                          const ModelConfig& cfg);

struct ClipOutput {
    Tensor probs;  // [T x C]
    std::vector<AttentionRecord> attention;
};

/// Frame-wise forward over a clip; frames share parameters and do not interact.
ClipOutput forward_clip(const FeatureClip& clip, const ModelParams& params, const ModelConfig& cfg,
                        bool keep_attention = false);

/// Stacks several clips of equal length into one [B*T x C] forward pass.
Tensor forward_clips(std::span<const FeatureClip* const> clips, const ModelParams& params, const ModelConfig& cfg);

/// a = 1 iff prob > theta (strict).
EventMatrix threshold_activity(const Tensor& probs, double theta);

}  // namespace multitrans
