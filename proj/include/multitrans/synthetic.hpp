#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "multitrans/clip.hpp"
#include "multitrans/random.hpp"

namespace multitrans {

/// Signs applied to each involved sensor's signature for one event, chosen
/// with the given probability.
struct SignMode {
    double probability = 1.0;
    std::vector<double> signs;
    bool operator==(const SignMode&) const = default;
};

/// A kind of event planted into scenes. Labeled sources mark their class column
/// in the strong label; unlabeled ones are background activity.
struct EventSource {
    std::string name;
    std::optional<std::size_t> label;
    /// Informative sensors (one or two), 0-based.
    std::vector<std::size_t> sensors;
    /// Index into GenConfig::signatures for each informative sensor.
    std::vector<std::size_t> signatures;
    /// Empty means a single all-positive mode.
    std::vector<SignMode> modes;
    std::size_t min_duration = 4;
    std::size_t max_duration = 10;
    /// Events per scene, uniform on [min_events, max_events].
    std::size_t min_events = 0;
    std::size_t max_events = 2;
    /// Relative frequency when scenes draw a fixed number of events.
    double weight = 1.0;

    bool operator==(const EventSource&) const = default;
};

struct GenConfig {
    std::size_t train_scenes = 160;
    std::size_t test_scenes = 40;
    std::size_t num_sensors = 6;
    std::size_t input_dim = 8;
    std::size_t num_classes = 4;
    std::size_t frames = 48;
    double noise_std = 1.0;
    double signal_gain = 3.0;
    std::vector<Modality> modality;
    /// Signature vectors of length input_dim.
    std::vector<std::vector<double>> signatures;
    std::vector<EventSource> sources;
    /// When nonzero, every scene draws exactly this many events, picking
    /// sources by weight; per-source event ranges are then ignored.
    std::size_t events_per_scene = 0;
    std::uint64_t seed = 0;
    /// Placement attempts per event, and layouts per scene, before giving up.
    std::size_t max_retries = 64;

    /// Throws ContractError when the configuration is inconsistent.
    void validate() const;
    bool operator==(const GenConfig&) const = default;

    /// Six sensors (three audio, three video), four classes: two single-sensor
    /// classes, one audio-visual class split over sensors 2 and 5, and a
    /// labeled confuser on the same pair. Sensors 1 and 3 carry only noise.
    static GenConfig desk_default();
};

/// One event placed in a scene.
struct PlantedEvent {
    std::size_t source = 0;
    std::size_t onset = 0;
    std::size_t offset = 0;  // exclusive
    std::size_t mode = 0;
};

struct Scene {
    FeatureClip clip;
    std::vector<PlantedEvent> events;
};

/// Draws one scene: Gaussian noise everywhere plus scaled signatures over
/// each event interval. Events never overlap on a shared sensor, and never
/// overlap within one class. Unlabeled events that cannot be placed are
/// skipped; when a labeled one does not fit, the layout is redrawn.
Scene generate_scene(const GenConfig& cfg, Rng& rng, std::string clip_id);

struct Dataset {
    std::vector<FeatureClip> train;
    std::vector<FeatureClip> test;
    /// Labeled event counts per class over the training split.
    std::vector<std::size_t> event_counts;
};

/// Seeded train and test splits. Throws GenerationError if a class has no
/// training events.
Dataset generate_dataset(const GenConfig& cfg);

/// Per-scene seed for split 0 (train) or 1 (test).
std::uint64_t scene_seed(std::uint64_t seed, std::size_t split, std::size_t index);

}  // namespace multitrans
