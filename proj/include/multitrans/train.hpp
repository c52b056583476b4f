#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "multitrans/clip.hpp"
#include "multitrans/model.hpp"
#include "multitrans/random.hpp"
#include "multitrans/tensor.hpp"

namespace multitrans {

struct TrainConfig {
    std::size_t epochs = 50;
    double lr0 = 0.01;
    double final_decay = 0.1;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_adam = 1e-8;
    std::size_t batch_size = 8;
    std::size_t clip_len = 32;
    std::uint64_t seed = 0;
    double prob_clamp = 1e-7;
    /// Save a checkpoint every k epochs through TrainHooks; 0 disables.
    std::size_t checkpoint_every = 0;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

struct OptimizerState {
    std::map<std::string, std::vector<double>> m;
    std::map<std::string, std::vector<double>> v;
    std::uint64_t step = 0;

    /// Zero moments shaped like every tensor in params.
    static OptimizerState for_params(const ModelParams& params);
};

/// Time mean of frame probabilities: [T x C] -> [C], or [B x T x C] -> [B x C].
Tensor bag_predict(const Tensor& frame_probs);

/// w_c = 1 / count_c.
std::vector<double> class_weights(std::span<const std::size_t> event_counts);

/// Class-weighted binary cross-entropy over bags. labels is B x C row-major.
/// Predictions are clamped to [clamp, 1 - clamp] before the log.
Tensor weighted_bce(const Tensor& bag_preds, std::span<const std::uint8_t> labels, std::span<const double> weights,
                    double clamp);

/// One decoupled-weight-decay Adam update using the gradients stored on params.
/// A tensor without a gradient is treated as having a zero gradient.
void adamw_step(ModelParams& params, OptimizerState& state, double lr, const TrainConfig& cfg);

/// lr0 * final_decay^(epoch / (epochs - 1)).
double lr_schedule(std::size_t epoch, const TrainConfig& cfg);

/// Contiguous window of length T at a uniform offset; keeps the parent's weak label.
FeatureClip sample_clip(const FeatureClip& clip, std::size_t length, Rng& rng);

struct EpochRecord {
    std::size_t epoch = 0;
    double lr = 0.0;
    double mean_loss = 0.0;
};

struct TrainHooks {
    /// Called after every epoch with the 1-based count of finished epochs.
    std::function<void(const EpochRecord&)> on_epoch;
    /// Called when checkpoint_every divides the finished epoch count.
    std::function<void(std::size_t finished_epochs, const ModelParams&)> on_checkpoint;
};

struct TrainResult {
    ModelParams params;
    std::vector<EpochRecord> history;
};

/// Seeded MIL training loop. event_counts are the per-class event counts of
/// the training split and set the loss weights.
TrainResult train(std::span<const FeatureClip> dataset, std::span<const std::size_t> event_counts,
                  const ModelConfig& model_cfg, const TrainConfig& train_cfg, const TrainHooks& hooks = {});

/// Same loop starting from the given parameters instead of a seeded initialization.
TrainResult train_from(ModelParams initial, std::span<const FeatureClip> dataset,
                       std::span<const std::size_t> event_counts, const ModelConfig& model_cfg,
                       const TrainConfig& train_cfg, const TrainHooks& hooks = {});

}  // namespace multitrans
