#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace multitrans {

enum class Modality { Audio, Video };

std::string_view to_string(Modality m);
Modality modality_from_string(std::string_view name);

/// Clip-level multi-label indicator over C classes.
struct BagLabel {
    std::vector<std::uint8_t> values;

    std::size_t size() const { return values.size(); }
    bool operator==(const BagLabel&) const = default;
};

/// Binary frames x classes matrix; used for strong labels and decoded activity.
struct EventMatrix {
    std::size_t frames = 0;
    std::size_t classes = 0;
    std::vector<std::uint8_t> values;

    EventMatrix() = default;
    EventMatrix(std::size_t frames, std::size_t classes)
        : frames(frames), classes(classes), values(frames * classes, 0) {}

    std::uint8_t at(std::size_t t, std::size_t c) const { return values[t * classes + c]; }
    std::uint8_t& at(std::size_t t, std::size_t c) { return values[t * classes + c]; }
    bool operator==(const EventMatrix&) const = default;
};

/// Per-frame, per-sensor feature sequence with its labels.
struct FeatureClip {
    std::string clip_id;
    std::size_t frames = 0;
    std::size_t sensors = 0;
    std::size_t input_dim = 0;
    /// frames x sensors x input_dim, row-major.
    std::vector<double> features;
    std::vector<Modality> modality;
    BagLabel weak_label;
    std::optional<EventMatrix> strong_label;

    std::span<const double> feature(std::size_t t, std::size_t s) const {
        return std::span<const double>(features).subspan((t * sensors + s) * input_dim, input_dim);
    }
    std::span<double> feature(std::size_t t, std::size_t s) {
        return std::span<double>(features).subspan((t * sensors + s) * input_dim, input_dim);
    }

    /// Throws ContractError when sizes or label consistency are violated.
    void validate() const;
};

/// A class is present in the bag iff it is active on at least one frame.
BagLabel weak_label_from_strong(const EventMatrix& strong);

/// Frames [offset, offset + length) of a clip. The weak label is the parent's,
/// unchanged; the strong label is dropped since it would no longer agree with it.
FeatureClip slice_frames(const FeatureClip& clip, std::size_t offset, std::size_t length);

}  // namespace multitrans
