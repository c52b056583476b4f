#include "multitrans/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "multitrans/autodiff.hpp"
#include "multitrans/errors.hpp"
#include "multitrans/ops.hpp"

namespace multitrans {

void TrainConfig::validate() const {
    if (epochs < 1) throw ContractError("train config: epochs must be >= 1");
    if (!(final_decay > 0.0 && final_decay <= 1.0)) throw ContractError("train config: final_decay must lie in (0, 1]");
    if (!(prob_clamp > 0.0 && prob_clamp < 0.5)) throw ContractError("train config: prob_clamp must lie in (0, 0.5)");
    if (!(lr0 >= 0.0) || !std::isfinite(lr0)) throw ContractError("train config: lr0 must be finite and >= 0");
    if (!(weight_decay >= 0.0)) throw ContractError("train config: weight_decay must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ContractError("train config: betas must lie in [0, 1)");
    }
    if (!(eps_adam > 0.0)) throw ContractError("train config: eps_adam must be > 0");
    if (batch_size < 1) throw ContractError("train config: batch_size must be >= 1");
    if (clip_len < 1) throw ContractError("train config: clip_len must be >= 1");
}

OptimizerState OptimizerState::for_params(const ModelParams& params) {
    OptimizerState s;
    for (const auto& [name, t] : params.tensors()) {
        s.m.emplace(name, std::vector<double>(t.numel(), 0.0));
        s.v.emplace(name, std::vector<double>(t.numel(), 0.0));
    }
    return s;
}

Tensor bag_predict(const Tensor& frame_probs) {
    if (frame_probs.rank() != 2 && frame_probs.rank() != 3) {
        throw ShapeError("bag_predict: expected [T x C] or [B x T x C], got " + shape_str(frame_probs.shape()));
    }
    const std::size_t time_axis = frame_probs.rank() - 2;
    if (frame_probs.dim(time_axis) == 0) throw ContractError("bag_predict: empty frame sequence");
    return ops::mean(frame_probs, time_axis);
}

std::vector<double> class_weights(std::span<const std::size_t> event_counts) {
    std::vector<double> w;
    w.reserve(event_counts.size());
    for (std::size_t c = 0; c < event_counts.size(); ++c) {
        if (event_counts[c] == 0) {
            throw ContractError("class_weights: class " + std::to_string(c) + " has no training events");
        }
        w.push_back(1.0 / static_cast<double>(event_counts[c]));
    }
    return w;
}

Tensor weighted_bce(const Tensor& bag_preds, std::span<const std::uint8_t> labels, std::span<const double> weights,
                    double clamp) {
    if (bag_preds.rank() != 2) throw ShapeError("weighted_bce: expected [B x C], got " + shape_str(bag_preds.shape()));
    const std::size_t b = bag_preds.dim(0), c = bag_preds.dim(1);
    if (labels.size() != b * c || weights.size() != c) {
        throw ContractError("weighted_bce: labels/weights do not match predictions " + shape_str(bag_preds.shape()));
    }
    if (b == 0) throw ContractError("weighted_bce: empty batch");
    if (!(clamp > 0.0 && clamp < 0.5)) throw ContractError("weighted_bce: clamp must lie in (0, 0.5)");
    std::vector<double> g(b * c), not_g(b * c), w(b * c);
    for (std::size_t i = 0; i < b * c; ++i) {
        if (labels[i] > 1) throw ContractError("weighted_bce: labels must be 0 or 1");
        g[i] = labels[i];
        not_g[i] = 1.0 - labels[i];
        w[i] = weights[i % c];
    }
    const Tensor p = ops::clamp(bag_preds, clamp, 1.0 - clamp);
    const Tensor one = Tensor::scalar(1.0);
    const Tensor per_entry = ops::add(ops::mul(Tensor({b, c}, std::move(g)), ops::log(p)),
                                      ops::mul(Tensor({b, c}, std::move(not_g)), ops::log(ops::sub(one, p))));
    return ops::scale(ops::sum(ops::mul(per_entry, Tensor({b, c}, std::move(w)))), -1.0 / static_cast<double>(b));
}

void adamw_step(ModelParams& params, OptimizerState& state, double lr, const TrainConfig& cfg) {
    if (state.m.size() != params.tensors().size() || state.v.size() != params.tensors().size()) {
        throw ContractError("adamw_step: optimizer state does not match the parameter tree");
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (const auto& [name, tensor] : params.tensors()) {
        auto mi = state.m.find(name);
        auto vi = state.v.find(name);
        if (mi == state.m.end() || vi == state.v.end() || mi->second.size() != tensor.numel() ||
            vi->second.size() != tensor.numel()) {
            throw ContractError("adamw_step: optimizer state shape mismatch for '" + name + "'");
        }
        Tensor param = tensor;
        auto theta = param.mutable_data();
        auto& m = mi->second;
        auto& v = vi->second;
        const bool has_grad = param.has_grad();
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double g = has_grad ? param.grad()[i] : 0.0;
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            const double m_hat = m[i] / c1;
            const double v_hat = v[i] / c2;
            theta[i] -= lr * (m_hat / (std::sqrt(v_hat) + cfg.eps_adam) + cfg.weight_decay * theta[i]);
        }
    }
}

double lr_schedule(std::size_t epoch, const TrainConfig& cfg) {
    if (epoch >= cfg.epochs) {
        throw ContractError("lr_schedule: epoch " + std::to_string(epoch) + " outside [0, " +
                            std::to_string(cfg.epochs) + ")");
    }
    if (cfg.epochs == 1 || epoch == 0) return cfg.lr0;
    if (epoch + 1 == cfg.epochs) return cfg.lr0 * cfg.final_decay;
    const double frac = static_cast<double>(epoch) / static_cast<double>(cfg.epochs - 1);
    return cfg.lr0 * std::pow(cfg.final_decay, frac);
}

FeatureClip sample_clip(const FeatureClip& clip, std::size_t length, Rng& rng) {
    if (length == 0 || clip.frames < length) {
        throw ContractError("sample_clip: clip '" + clip.clip_id + "' has " + std::to_string(clip.frames) +
                            " frames, cannot sample " + std::to_string(length));
    }
    const std::size_t offset = static_cast<std::size_t>(rng.below(clip.frames - length + 1));
    return slice_frames(clip, offset, length);
}

TrainResult train(std::span<const FeatureClip> dataset, std::span<const std::size_t> event_counts,
                  const ModelConfig& model_cfg, const TrainConfig& train_cfg, const TrainHooks& hooks) {
    return train_from(ModelParams::initialize(model_cfg, mix_seed(train_cfg.seed, 0)), dataset, event_counts,
                      model_cfg, train_cfg, hooks);
}

TrainResult train_from(ModelParams initial, std::span<const FeatureClip> dataset,
                       std::span<const std::size_t> event_counts, const ModelConfig& model_cfg,
                       const TrainConfig& cfg, const TrainHooks& hooks) {
    model_cfg.validate();
    cfg.validate();
    if (dataset.empty()) throw ContractError("train: empty dataset");
    if (event_counts.size() != model_cfg.num_classes) {
        throw ContractError("train: expected " + std::to_string(model_cfg.num_classes) + " class counts, got " +
                            std::to_string(event_counts.size()));
    }
    for (const auto& clip : dataset) {
        if (clip.sensors != model_cfg.num_sensors || clip.input_dim != model_cfg.input_dim ||
            clip.weak_label.size() != model_cfg.num_classes) {
            throw ContractError("train: clip '" + clip.clip_id + "' does not match the model configuration");
        }
    }
    const std::vector<double> weights = class_weights(event_counts);

    TrainResult result{std::move(initial), {}};
    ModelParams& params = result.params;
    OptimizerState state = OptimizerState::for_params(params);
    Rng rng(mix_seed(cfg.seed, 1));
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t num_classes = model_cfg.num_classes;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_schedule(epoch, cfg);
        rng.shuffle(std::span<std::size_t>(order));
        double loss_total = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            std::vector<FeatureClip> clips;
            clips.reserve(stop - start);
            std::vector<std::uint8_t> labels;
            for (std::size_t i = start; i < stop; ++i) {
                clips.push_back(sample_clip(dataset[order[i]], cfg.clip_len, rng));
                labels.insert(labels.end(), clips.back().weak_label.values.begin(),
                              clips.back().weak_label.values.end());
            }
            std::vector<const FeatureClip*> ptrs;
            for (const auto& c : clips) ptrs.push_back(&c);

            params.zero_grad();
            Tape::discard();
            const auto where = "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batches);
            Tensor loss;
            try {
                const Tensor probs = forward_clips(ptrs, params, model_cfg);
                const Tensor bags = bag_predict(ops::reshape(probs, {clips.size(), cfg.clip_len, num_classes}));
                loss = weighted_bce(bags, labels, weights, cfg.prob_clamp);
            } catch (const NumericError& e) {
                throw TrainingError("numeric failure at " + where + ": " + e.what());
            }
            if (!std::isfinite(loss.item())) {
                throw TrainingError("non-finite loss at " + where);
            }
            backward(loss);
            adamw_step(params, state, lr, cfg);
            loss_total += loss.item();
            ++batches;
        }
        EpochRecord record{epoch, lr, loss_total / static_cast<double>(batches)};
        result.history.push_back(record);
        if (hooks.on_epoch) hooks.on_epoch(record);
        if (cfg.checkpoint_every && hooks.on_checkpoint && (epoch + 1) % cfg.checkpoint_every == 0) {
            hooks.on_checkpoint(epoch + 1, params);
        }
    }
    params.zero_grad();
    return result;
}

}  // namespace multitrans
