#include "multitrans/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>

#include "multitrans/errors.hpp"

namespace multitrans {

namespace {

std::vector<double> unit_vector(Rng& rng, std::size_t n) {
    std::vector<double> v(n);
    double norm = 0.0;
    for (auto& x : v) {
        x = rng.normal();
        norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    return v;
}

std::string source_tag(const EventSource& s, std::size_t i) {
    return "source " + std::to_string(i) + (s.name.empty() ? "" : " ('" + s.name + "')");
}

}  // namespace

void GenConfig::validate() const {
    if (num_sensors < 2) throw ContractError("gen config: num_sensors must be >= 2");
    if (input_dim < 1 || num_classes < 1 || frames < 1) {
        throw ContractError("gen config: input_dim, num_classes and frames must be >= 1");
    }
    if (modality.size() != num_sensors) throw ContractError("gen config: need one modality tag per sensor");
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) throw ContractError("gen config: noise_std must be >= 0");
    if (!std::isfinite(signal_gain)) throw ContractError("gen config: signal_gain must be finite");
    for (const auto& sig : signatures) {
        if (sig.size() != input_dim) throw ContractError("gen config: signatures must have length input_dim");
    }
    bool has_cross = false;
    std::vector<bool> labeled(num_classes, false);
    for (std::size_t i = 0; i < sources.size(); ++i) {
        const auto& s = sources[i];
        const auto tag = source_tag(s, i);
        if (s.sensors.empty() || s.sensors.size() > 2) throw ContractError("gen config: " + tag + " needs 1 or 2 sensors");
        if (s.signatures.size() != s.sensors.size()) {
            throw ContractError("gen config: " + tag + " needs one signature per sensor");
        }
        for (auto sensor : s.sensors) {
            if (sensor >= num_sensors) throw ContractError("gen config: " + tag + " uses an unknown sensor");
        }
        if (s.sensors.size() == 2 && s.sensors[0] == s.sensors[1]) {
            throw ContractError("gen config: " + tag + " repeats a sensor");
        }
        for (auto sig : s.signatures) {
            if (sig >= signatures.size()) throw ContractError("gen config: " + tag + " uses an unknown signature");
        }
        double total = 0.0;
        for (const auto& m : s.modes) {
            if (m.signs.size() != s.sensors.size() || !(m.probability >= 0.0)) {
                throw ContractError("gen config: " + tag + " has a malformed sign mode");
            }
            total += m.probability;
        }
        if (!s.modes.empty() && std::abs(total - 1.0) > 1e-9) {
            throw ContractError("gen config: " + tag + " mode probabilities must sum to 1");
        }
        if (s.min_duration < 1 || s.min_duration > s.max_duration || s.max_duration > frames) {
            throw ContractError("gen config: " + tag + " needs 1 <= min_duration <= max_duration <= frames");
        }
        if (s.min_events > s.max_events) throw ContractError("gen config: " + tag + " has min_events > max_events");
        if (s.label) {
            if (*s.label >= num_classes) throw ContractError("gen config: " + tag + " has a label outside the classes");
            labeled[*s.label] = true;
            if (s.sensors.size() == 2 && modality[s.sensors[0]] != modality[s.sensors[1]]) has_cross = true;
        }
    }
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (!labeled[c]) throw ContractError("gen config: class " + std::to_string(c) + " has no event source");
    }
    if (events_per_scene > 0) {
        double total = 0.0;
        for (const auto& s : sources) {
            if (!(s.weight >= 0.0) || !std::isfinite(s.weight)) throw ContractError("gen config: source weights must be >= 0");
            total += s.weight;
        }
        if (!(total > 0.0)) throw ContractError("gen config: a fixed event budget needs a positive source weight");
    }
    if (!has_cross) throw ContractError("gen config: at least one class needs a two-sensor cross-modal source");
}

GenConfig GenConfig::desk_default() {
    GenConfig cfg;
    cfg.modality = {Modality::Audio, Modality::Audio, Modality::Audio,
                    Modality::Video, Modality::Video, Modality::Video};
    Rng rng(0x5167a7u);
    for (int i = 0; i < 4; ++i) cfg.signatures.push_back(unit_vector(rng, cfg.input_dim));
    // signatures: 0 camera class, 1 microphone class, 2 audio half, 3 video half
    EventSource video_only{"video-only", 0, {4}, {0}, {}, 4, 12, 0, 2};
    EventSource audio_only{"audio-only", 1, {0}, {1}, {}, 4, 12, 0, 2};
    EventSource cross{"audio-visual", 2, {2, 5}, {2, 3}, {{0.6, {1.0, 1.0}}, {0.4, {-1.0, -1.0}}}, 4, 10, 0, 2};
    EventSource confuser{"confuser", 3, {2, 5}, {2, 3}, {{1.0, {1.0, -1.0}}}, 4, 10, 0, 3};
    EventSource ambient{"ambient", std::nullopt, {2, 5}, {2, 3}, {{1.0, {-1.0, 1.0}}}, 4, 10, 0, 3};
    cfg.sources = {video_only, audio_only, cross, confuser, ambient};
    return cfg;
}

std::uint64_t scene_seed(std::uint64_t seed, std::size_t split, std::size_t index) {
    return mix_seed(mix_seed(seed, split), index);
}

namespace {

// Lays out events without touching features. Returns nullopt when a labeled
// event finds no room.
std::optional<std::vector<PlantedEvent>> plan_events(const GenConfig& cfg, Rng& rng) {
    const std::size_t L = cfg.frames;
    std::vector<std::vector<bool>> sensor_busy(cfg.num_sensors, std::vector<bool>(L, false));
    std::vector<std::vector<bool>> class_busy(cfg.num_classes, std::vector<bool>(L, false));
    std::vector<PlantedEvent> events;
    std::vector<std::size_t> counts(cfg.sources.size(), 0);
    if (cfg.events_per_scene > 0) {
        double total = 0.0;
        for (const auto& src : cfg.sources) total += src.weight;
        for (std::size_t e = 0; e < cfg.events_per_scene; ++e) {
            const double u = rng.uniform() * total;
            double acc = 0.0;
            std::size_t pick = cfg.sources.size() - 1;
            for (std::size_t si = 0; si < cfg.sources.size(); ++si) {
                acc += cfg.sources[si].weight;
                if (u < acc) {
                    pick = si;
                    break;
                }
            }
            ++counts[pick];
        }
    } else {
        for (std::size_t si = 0; si < cfg.sources.size(); ++si) {
            const EventSource& src = cfg.sources[si];
            counts[si] = src.min_events + rng.below(src.max_events - src.min_events + 1);
        }
    }
    for (std::size_t si = 0; si < cfg.sources.size(); ++si) {
        const EventSource& src = cfg.sources[si];
        for (std::size_t e = 0; e < counts[si]; ++e) {
            bool placed = false;
            for (std::size_t attempt = 0; attempt < cfg.max_retries && !placed; ++attempt) {
                const std::size_t duration = src.min_duration + rng.below(src.max_duration - src.min_duration + 1);
                std::vector<std::size_t> onsets;
                for (std::size_t on = 0; on + duration <= L; ++on) {
                    bool free = true;
                    for (std::size_t t = on; t < on + duration && free; ++t) {
                        for (auto s : src.sensors) free = free && !sensor_busy[s][t];
                        if (src.label) free = free && !class_busy[*src.label][t];
                    }
                    if (free) onsets.push_back(on);
                }
                if (onsets.empty()) continue;
                const std::size_t on = onsets[rng.below(onsets.size())];
                std::size_t mode = 0;
                if (src.modes.size() > 1) {
                    const double u = rng.uniform();
                    double acc = 0.0;
                    mode = src.modes.size() - 1;
                    for (std::size_t m = 0; m < src.modes.size(); ++m) {
                        acc += src.modes[m].probability;
                        if (u < acc) {
                            mode = m;
                            break;
                        }
                    }
                }
                for (std::size_t t = on; t < on + duration; ++t) {
                    for (auto s : src.sensors) sensor_busy[s][t] = true;
                    if (src.label) class_busy[*src.label][t] = true;
                }
                events.push_back({si, on, on + duration, mode});
                placed = true;
            }
            // Background activity that does not fit is dropped; labeled events must fit.
            if (!placed && src.label) return std::nullopt;
        }
    }
    return events;
}

}  // namespace

Scene generate_scene(const GenConfig& cfg, Rng& rng, std::string clip_id) {
    cfg.validate();
    const std::size_t L = cfg.frames, S = cfg.num_sensors, D = cfg.input_dim;
    Scene scene;
    for (std::size_t attempt = 0; attempt < cfg.max_retries; ++attempt) {
        if (auto plan = plan_events(cfg, rng)) {
            scene.events = std::move(*plan);
            break;
        }
        if (attempt + 1 == cfg.max_retries) {
            throw GenerationError("cannot place the labeled events of scene '" + clip_id + "' after " +
                                  std::to_string(cfg.max_retries) + " layouts");
        }
    }
    FeatureClip& clip = scene.clip;
    clip.clip_id = std::move(clip_id);
    clip.frames = L;
    clip.sensors = S;
    clip.input_dim = D;
    clip.modality = cfg.modality;
    clip.features.resize(L * S * D);
    for (auto& x : clip.features) x = cfg.noise_std * rng.normal();

    EventMatrix strong(L, cfg.num_classes);
    for (const auto& ev : scene.events) {
        const EventSource& src = cfg.sources[ev.source];
        // Split the energy evenly over the involved sensors.
        const double amplitude = cfg.signal_gain / std::sqrt(static_cast<double>(src.sensors.size()));
        for (std::size_t t = ev.onset; t < ev.offset; ++t) {
            for (std::size_t k = 0; k < src.sensors.size(); ++k) {
                const double sign = src.modes.empty() ? 1.0 : src.modes[ev.mode].signs[k];
                const auto& sig = cfg.signatures[src.signatures[k]];
                auto f = clip.feature(t, src.sensors[k]);
                for (std::size_t j = 0; j < D; ++j) f[j] += amplitude * sign * sig[j];
            }
            if (src.label) strong.at(t, *src.label) = 1;
        }
    }
    clip.weak_label = weak_label_from_strong(strong);
    clip.strong_label = std::move(strong);
    return scene;
}

Dataset generate_dataset(const GenConfig& cfg) {
    cfg.validate();
    Dataset ds;
    ds.event_counts.assign(cfg.num_classes, 0);
    const std::size_t counts[2] = {cfg.train_scenes, cfg.test_scenes};
    const char* prefixes[2] = {"train-", "test-"};
    for (std::size_t split = 0; split < 2; ++split) {
        auto& out = split == 0 ? ds.train : ds.test;
        out.reserve(counts[split]);
        for (std::size_t i = 0; i < counts[split]; ++i) {
            Rng rng(scene_seed(cfg.seed, split, i));
            char id[32];
            std::snprintf(id, sizeof id, "%s%04zu", prefixes[split], i);
            Scene scene = generate_scene(cfg, rng, id);
            if (split == 0) {
                for (const auto& ev : scene.events) {
                    if (const auto& label = cfg.sources[ev.source].label) ++ds.event_counts[*label];
                }
            }
            out.push_back(std::move(scene.clip));
        }
    }
    for (std::size_t c = 0; c < cfg.num_classes; ++c) {
        if (ds.event_counts[c] == 0) {
            throw GenerationError("class " + std::to_string(c) + " has no events in the training split");
        }
    }
    return ds;
}

}  // namespace multitrans
