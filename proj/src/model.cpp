#include "multitrans/model.hpp"

#include <algorithm>
#include <cmath>

#include "multitrans/errors.hpp"
#include "multitrans/ops.hpp"
#include "multitrans/random.hpp"

namespace multitrans {

std::string_view to_string(Fusion f) {
    switch (f) {
        case Fusion::Sum: return "sum";
        case Fusion::Max: return "max";
        case Fusion::Concat: return "concat";
    }
    return "?";
}

std::string_view to_string(Variant v) { return v == Variant::Baseline ? "baseline" : "multitrans"; }

Fusion fusion_from_string(std::string_view name) {
    if (name == "sum") return Fusion::Sum;
    if (name == "max") return Fusion::Max;
    if (name == "concat") return Fusion::Concat;
    throw ContractError("unknown fusion head '" + std::string(name) + "' (expected sum, max or concat)");
}

Variant variant_from_string(std::string_view name) {
    if (name == "baseline") return Variant::Baseline;
    if (name == "multitrans") return Variant::MultiTrans;
    throw ContractError("unknown variant '" + std::string(name) + "' (expected baseline or multitrans)");
}

void ModelConfig::validate() const {
    if (num_sensors < 2) throw ContractError("model config: num_sensors must be >= 2");
    if (num_classes < 1) throw ContractError("model config: num_classes must be >= 1");
    if (input_dim < 1 || embed_dim < 1) throw ContractError("model config: input_dim and embed_dim must be >= 1");
    if (num_heads < 1) throw ContractError("model config: num_heads must be >= 1");
    if (variant == Variant::MultiTrans && num_blocks < 1) {
        throw ContractError("model config: num_blocks must be >= 1");
    }
    if (d_model() % num_heads != 0) {
        throw ContractError("model config: d_model = embed_dim + num_sensors = " + std::to_string(d_model()) +
                            " is not divisible by num_heads = " + std::to_string(num_heads));
    }
    if (!(threshold > 0.0 && threshold < 1.0)) throw ContractError("model config: threshold must lie in (0, 1)");
}

// Parameter tree

namespace {

std::string block_prefix(std::size_t block) { return "blocks." + std::to_string(block) + "."; }

}  // namespace

ModelParams ModelParams::initialize(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    ModelParams p;
    auto weight = [&](std::string name, std::size_t fan_in, std::size_t fan_out) {
        const double std = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
        std::vector<double> v(fan_in * fan_out);
        for (auto& x : v) x = rng.normal(0.0, std);
        p.insert(std::move(name), Tensor({fan_in, fan_out}, std::move(v), true));
    };
    auto constant = [&](std::string name, std::size_t n, double value) {
        p.insert(std::move(name), Tensor::full({n}, value, true));
    };
    const std::size_t d = cfg.d_model();
    const std::size_t dk = cfg.head_dim();
    for (auto m : {Modality::Audio, Modality::Video}) {
        const std::string prefix = "embed." + std::string(to_string(m)) + ".";
        weight(prefix + "weight", cfg.input_dim, cfg.embed_dim);
        constant(prefix + "bias", cfg.embed_dim, 0.0);
    }
    if (cfg.variant == Variant::MultiTrans) {
        for (std::size_t b = 0; b < cfg.num_blocks; ++b) {
            const std::string pre = block_prefix(b);
            for (std::size_t h = 0; h < cfg.num_heads; ++h) {
                weight(pre + "attn.query." + std::to_string(h), d, dk);
                weight(pre + "attn.key." + std::to_string(h), d, dk);
                weight(pre + "attn.value." + std::to_string(h), d, dk);
            }
            weight(pre + "attn.out", d, d);
            constant(pre + "norm1.gain", d, 1.0);
            constant(pre + "norm1.bias", d, 0.0);
            weight(pre + "ffn.in.weight", d, cfg.ffn_width());
            constant(pre + "ffn.in.bias", cfg.ffn_width(), 0.0);
            weight(pre + "ffn.out.weight", cfg.ffn_width(), d);
            constant(pre + "ffn.out.bias", d, 0.0);
            constant(pre + "norm2.gain", d, 1.0);
            constant(pre + "norm2.bias", d, 0.0);
        }
    }
    weight("classifier.weight", cfg.fused_width(), cfg.num_classes);
    constant("classifier.bias", cfg.num_classes, 0.0);
    return p;
}

std::size_t ModelParams::expected_count(const ModelConfig& cfg) {
    const std::size_t d = cfg.d_model();
    const std::size_t f = cfg.ffn_width();
    std::size_t n = 2 * (cfg.input_dim * cfg.embed_dim + cfg.embed_dim);
    if (cfg.variant == Variant::MultiTrans) {
        const std::size_t per_block = 3 * d * d  // H heads of d x d/H for Q, K, V
                                      + d * d    // output projection
                                      + 4 * d    // two norms
                                      + d * f + f + f * d + d;
        n += cfg.num_blocks * per_block;
    }
    return n + cfg.fused_width() * cfg.num_classes + cfg.num_classes;
}

const Tensor& ModelParams::at(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw ContractError("no parameter named '" + name + "'");
    return it->second;
}

Tensor& ModelParams::at(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw ContractError("no parameter named '" + name + "'");
    return it->second;
}

void ModelParams::insert(std::string name, Tensor t) { tensors_[std::move(name)] = std::move(t); }

std::size_t ModelParams::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : tensors_) n += t.numel();
    return n;
}

void ModelParams::zero_grad() {
    for (auto& [_, t] : tensors_) t.zero_grad();
}

ModelParams ModelParams::clone() const {
    ModelParams out;
    for (const auto& [name, t] : tensors_) {
        out.insert(name, Tensor(t.shape(), std::vector<double>(t.data().begin(), t.data().end()), t.requires_grad()));
    }
    return out;
}

AttentionParams attention_params(const ModelParams& params, std::size_t block, std::size_t heads) {
    const std::string pre = block_prefix(block) + "attn.";
    AttentionParams a;
    for (std::size_t h = 0; h < heads; ++h) {
        a.query.push_back(params.at(pre + "query." + std::to_string(h)));
        a.key.push_back(params.at(pre + "key." + std::to_string(h)));
        a.value.push_back(params.at(pre + "value." + std::to_string(h)));
    }
    a.out = params.at(pre + "out");
    return a;
}

BlockParams block_params(const ModelParams& params, std::size_t block, std::size_t heads) {
    const std::string pre = block_prefix(block);
    return BlockParams{
        attention_params(params, block, heads),
        params.at(pre + "norm1.gain"),
        params.at(pre + "norm1.bias"),
        params.at(pre + "ffn.in.weight"),
        params.at(pre + "ffn.in.bias"),
        params.at(pre + "ffn.out.weight"),
        params.at(pre + "ffn.out.bias"),
        params.at(pre + "norm2.gain"),
        params.at(pre + "norm2.bias"),
    };
}

// Network pieces

AttentionOutput mhsa(const Tensor& x, const AttentionParams& p) {
    if (x.rank() != 2 && x.rank() != 3) throw ShapeError("mhsa: expected [S x d] or [N x S x d], got " + shape_str(x.shape()));
    const bool single = x.rank() == 2;
    const std::size_t n = single ? 1 : x.dim(0);
    const std::size_t s = x.dim(single ? 0 : 1);
    const std::size_t d = x.shape().back();
    const std::size_t heads = p.query.size();
    if (heads == 0 || p.key.size() != heads || p.value.size() != heads) {
        throw ShapeError("mhsa: query/key/value projections must exist for every head");
    }
    if (d % heads != 0) throw ShapeError("mhsa: d_model " + std::to_string(d) + " not divisible by heads");
    const std::size_t dk = d / heads;
    for (std::size_t h = 0; h < heads; ++h) {
        for (const Tensor* w : {&p.query[h], &p.key[h], &p.value[h]}) {
            if (w->shape() != Shape{d, dk}) {
                throw ShapeError("mhsa: head projection " + shape_str(w->shape()) + " should be " +
                                 shape_str({d, dk}));
            }
        }
    }
    if (p.out.shape() != Shape{d, d}) throw ShapeError("mhsa: output projection should be " + shape_str({d, d}));

    const Tensor flat = ops::reshape(x, {n * s, d});
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
    AttentionOutput result;
    std::vector<Tensor> heads_out;
    for (std::size_t h = 0; h < heads; ++h) {
        const Tensor q = ops::reshape(ops::matmul(flat, p.query[h]), {n, s, dk});
        const Tensor k = ops::reshape(ops::matmul(flat, p.key[h]), {n, s, dk});
        const Tensor v = ops::reshape(ops::matmul(flat, p.value[h]), {n, s, dk});
        const Tensor weights = ops::softmax(ops::scale(ops::bmm(q, k, true), inv_sqrt_dk), 2);
        heads_out.push_back(ops::bmm(weights, v));
        result.weights.push_back(single ? ops::reshape(weights, {s, s}) : weights);
    }
    const Tensor joined = ops::reshape(ops::concat(std::span<const Tensor>(heads_out), 2), {n * s, d});
    const Tensor projected = ops::matmul(joined, p.out);
    result.output = ops::reshape(projected, x.shape());
    return result;
}

BlockOutput transformer_block(const Tensor& x, const BlockParams& p) {
    AttentionOutput att = mhsa(x, p.attention);
    const Tensor h1 = ops::layer_norm(ops::add(x, att.output), p.norm1_gain, p.norm1_bias);
    const std::size_t d = x.shape().back();
    const Tensor flat = ops::reshape(h1, {h1.numel() / d, d});
    const Tensor hidden = ops::gelu(ops::add_bias(ops::matmul(flat, p.ffn_in_weight), p.ffn_in_bias));
    const Tensor ffn = ops::reshape(ops::add_bias(ops::matmul(hidden, p.ffn_out_weight), p.ffn_out_bias), x.shape());
    return {ops::layer_norm(ops::add(h1, ffn), p.norm2_gain, p.norm2_bias), std::move(att.weights)};
}

Tensor sensor_encode(const Tensor& phi, std::size_t sensor, std::size_t num_sensors) {
    if (phi.rank() != 1) throw ShapeError("sensor_encode: phi must be a vector, got " + shape_str(phi.shape()));
    if (sensor >= num_sensors) {
        throw ContractError("sensor_encode: sensor index " + std::to_string(sensor) + " outside [0, " +
                            std::to_string(num_sensors) + ")");
    }
    std::vector<double> onehot(num_sensors, 0.0);
    onehot[sensor] = 1.0;
    return ops::concat({phi, Tensor::vector(std::move(onehot))}, 0);
}

namespace {

// Per-row modality masks, [rows x width], or an undefined tensor when every
// sensor shares modality m.
Tensor modality_mask(std::span<const Modality> modality, Modality m, std::size_t frames, std::size_t width) {
    const std::size_t s = modality.size();
    std::vector<double> mask(frames * s * width, 0.0);
    for (std::size_t f = 0; f < frames; ++f) {
        for (std::size_t i = 0; i < s; ++i) {
            if (modality[i] != m) continue;
            std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>((f * s + i) * width), width, 1.0);
        }
    }
    return Tensor({frames * s, width}, std::move(mask));
}

}  // namespace

FrameBatchOutput forward_frames(const Tensor& features, std::span<const Modality> modality, const ModelParams& params,
                                const ModelConfig& cfg) {
    const std::size_t s = cfg.num_sensors;
    if (features.rank() != 3 || features.dim(1) != s || features.dim(2) != cfg.input_dim) {
        throw ContractError("forward: features " + shape_str(features.shape()) + " do not match [N x " +
                            std::to_string(s) + " x " + std::to_string(cfg.input_dim) + "]");
    }
    if (modality.size() != s) throw ContractError("forward: need one modality tag per sensor");
    const std::size_t n = features.dim(0);
    if (n == 0) throw ContractError("forward: no frames");
    const std::size_t d = cfg.d_model();

    const Tensor flat = ops::reshape(features, {n * s, cfg.input_dim});
    Tensor embedded;
    for (auto m : {Modality::Audio, Modality::Video}) {
        const auto count = std::count(modality.begin(), modality.end(), m);
        if (count == 0) continue;
        const std::string prefix = "embed." + std::string(to_string(m)) + ".";
        Tensor e = ops::add_bias(ops::matmul(flat, params.at(prefix + "weight")), params.at(prefix + "bias"));
        if (static_cast<std::size_t>(count) != s) e = ops::mul(e, modality_mask(modality, m, n, cfg.embed_dim));
        embedded = embedded.defined() ? ops::add(embedded, e) : e;
    }
    std::vector<double> onehot(n * s * s, 0.0);
    if (cfg.sensor_encoding) {
        for (std::size_t f = 0; f < n; ++f) {
            for (std::size_t i = 0; i < s; ++i) onehot[(f * s + i) * s + i] = 1.0;
        }
    }
    FrameBatchOutput out;
    Tensor rows = ops::reshape(ops::concat({embedded, Tensor({n * s, s}, std::move(onehot))}, 1), {n, s, d});
    if (cfg.variant == Variant::MultiTrans) {
        for (std::size_t b = 0; b < cfg.num_blocks; ++b) {
            BlockOutput block = transformer_block(rows, block_params(params, b, cfg.num_heads));
            rows = block.output;
            out.attention.push_back(std::move(block.attention));
        }
    }
    Tensor fused;
    switch (cfg.fusion) {
        case Fusion::Sum: fused = ops::sum(rows, 1); break;
        case Fusion::Max: fused = ops::max(rows, 1); break;
        case Fusion::Concat: fused = ops::reshape(rows, {n, s * d}); break;
    }
    out.rows = rows;
    out.logits = ops::add_bias(ops::matmul(fused, params.at("classifier.weight")), params.at("classifier.bias"));
    out.probs = ops::sigmoid(out.logits);
    return out;
}

namespace {

std::vector<AttentionRecord> to_records(const std::vector<std::vector<Tensor>>& attention, std::size_t frames,
                                        std::size_t sensors) {
    std::vector<AttentionRecord> records;
    for (std::size_t l = 0; l < attention.size(); ++l) {
        for (std::size_t h = 0; h < attention[l].size(); ++h) {
            const auto w = attention[l][h].data();
            for (std::size_t t = 0; t < frames; ++t) {
                const auto first = w.begin() + static_cast<std::ptrdiff_t>(t * sensors * sensors);
                records.push_back({l, h, t, sensors, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(sensors * sensors))});
            }
        }
    }
    return records;
}

Tensor clip_features(const FeatureClip& clip) {
    return Tensor({clip.frames, clip.sensors, clip.input_dim}, clip.features);
}

}  // namespace

FrameOutput forward_frame(const Tensor& psi, std::span<const Modality> modality, const ModelParams& params,
                          const ModelConfig& cfg) {
    if (psi.rank() != 2) throw ContractError("forward_frame: psi must be [S x input_dim], got " + shape_str(psi.shape()));
    auto out = forward_frames(ops::reshape(psi, {1, psi.dim(0), psi.dim(1)}), modality, params, cfg);
    return {ops::reshape(out.probs, {cfg.num_classes}), to_records(out.attention, 1, cfg.num_sensors)};
}

ClipOutput forward_clip(const FeatureClip& clip, const ModelParams& params, const ModelConfig& cfg,
                        bool keep_attention) {
    if (clip.frames < 1) throw ContractError("forward_clip: clip '" + clip.clip_id + "' has no frames");
    auto out = forward_frames(clip_features(clip), clip.modality, params, cfg);
    ClipOutput result{out.probs, {}};
    if (keep_attention) result.attention = to_records(out.attention, clip.frames, cfg.num_sensors);
    return result;
}

Tensor forward_clips(std::span<const FeatureClip* const> clips, const ModelParams& params, const ModelConfig& cfg) {
    if (clips.empty()) throw ContractError("forward_clips: empty batch");
    const FeatureClip& first = *clips.front();
    std::vector<double> stacked;
    stacked.reserve(clips.size() * first.features.size());
    for (const FeatureClip* c : clips) {
        if (c->frames != first.frames || c->sensors != first.sensors || c->input_dim != first.input_dim ||
            c->modality != first.modality) {
            throw ContractError("forward_clips: clips in a batch must share length, sensors and modality tags");
        }
        stacked.insert(stacked.end(), c->features.begin(), c->features.end());
    }
    Tensor features({clips.size() * first.frames, first.sensors, first.input_dim}, std::move(stacked));
    return forward_frames(features, first.modality, params, cfg).probs;
}

EventMatrix threshold_activity(const Tensor& probs, double theta) {
    if (!(theta > 0.0 && theta < 1.0)) throw ContractError("threshold must lie in (0, 1)");
    if (probs.rank() != 2) throw ShapeError("threshold_activity: expected [T x C], got " + shape_str(probs.shape()));
    EventMatrix a(probs.dim(0), probs.dim(1));
    for (std::size_t i = 0; i < probs.numel(); ++i) a.values[i] = probs[i] > theta ? 1 : 0;
    return a;
}

}  // namespace multitrans
