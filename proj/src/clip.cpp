#include "multitrans/clip.hpp"

#include <algorithm>

#include "multitrans/errors.hpp"

namespace multitrans {

std::string_view to_string(Modality m) { return m == Modality::Audio ? "audio" : "video"; }

Modality modality_from_string(std::string_view name) {
    if (name == "audio") return Modality::Audio;
    if (name == "video") return Modality::Video;
    throw ContractError("unknown modality '" + std::string(name) + "'");
}

void FeatureClip::validate() const {
    if (frames < 1) throw ContractError("clip '" + clip_id + "' has no frames");
    if (sensors < 2) throw ContractError("clip '" + clip_id + "' needs at least 2 sensors");
    if (features.size() != frames * sensors * input_dim) {
        throw ContractError("clip '" + clip_id + "' feature buffer does not match frames x sensors x input_dim");
    }
    if (modality.size() != sensors) throw ContractError("clip '" + clip_id + "' needs one modality tag per sensor");
    for (auto v : weak_label.values) {
        if (v > 1) throw ContractError("clip '" + clip_id + "' weak label is not binary");
    }
    if (strong_label) {
        if (strong_label->frames != frames || strong_label->classes != weak_label.size() ||
            strong_label->values.size() != frames * strong_label->classes) {
            throw ContractError("clip '" + clip_id + "' strong label shape mismatch");
        }
        if (weak_label_from_strong(*strong_label) != weak_label) {
            throw ContractError("clip '" + clip_id + "' weak label disagrees with its strong label");
        }
    }
}

BagLabel weak_label_from_strong(const EventMatrix& strong) {
    BagLabel bag{std::vector<std::uint8_t>(strong.classes, 0)};
    for (std::size_t t = 0; t < strong.frames; ++t) {
        for (std::size_t c = 0; c < strong.classes; ++c) {
            if (strong.at(t, c)) bag.values[c] = 1;
        }
    }
    return bag;
}

FeatureClip slice_frames(const FeatureClip& clip, std::size_t offset, std::size_t length) {
    if (length < 1 || offset + length > clip.frames) {
        throw ContractError("frame window [" + std::to_string(offset) + ", " + std::to_string(offset + length) +
                            ") outside clip of " + std::to_string(clip.frames) + " frames");
    }
    FeatureClip out;
    out.clip_id = clip.clip_id;
    out.frames = length;
    out.sensors = clip.sensors;
    out.input_dim = clip.input_dim;
    out.modality = clip.modality;
    out.weak_label = clip.weak_label;
    const std::size_t stride = clip.sensors * clip.input_dim;
    out.features.assign(clip.features.begin() + static_cast<std::ptrdiff_t>(offset * stride),
                        clip.features.begin() + static_cast<std::ptrdiff_t>((offset + length) * stride));
    return out;
}

}  // namespace multitrans
