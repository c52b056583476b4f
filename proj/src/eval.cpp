#include "multitrans/eval.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <numeric>
#include <thread>
#include <tuple>

#include "multitrans/autodiff.hpp"
#include "multitrans/errors.hpp"
#include "multitrans/metrics.hpp"

namespace multitrans {

std::string_view to_string(ModelKind k) { return k == ModelKind::Network ? "network" : "oracle-stub"; }

ModelKind model_kind_from_string(std::string_view name) {
    if (name == "network") return ModelKind::Network;
    if (name == "oracle-stub") return ModelKind::OracleStub;
    throw ContractError("unknown model kind '" + std::string(name) + "' (expected network or oracle-stub)");
}

namespace {

struct Fnv {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 0x100000001b3ULL;
        }
    }
    void text(std::string_view s) {
        bytes(s.data(), s.size());
        bytes("\0", 1);
    }
    void u64(std::uint64_t v) { bytes(&v, sizeof v); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
};

}  // namespace

std::string Checkpoint::id() const {
    Fnv f;
    f.text(to_string(kind));
    f.u64(config.num_sensors);
    f.u64(config.input_dim);
    f.u64(config.embed_dim);
    f.u64(config.num_heads);
    f.u64(config.num_blocks);
    f.u64(config.num_classes);
    f.text(to_string(config.fusion));
    f.u64(config.ffn_dim);
    f.f64(config.threshold);
    f.text(to_string(config.variant));
    f.u64(config.sensor_encoding ? 1 : 0);
    for (const auto& [name, t] : params.tensors()) {
        f.text(name);
        for (auto d : t.shape()) f.u64(d);
        for (double v : t.data()) f.f64(v);
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(f.h));
    return buf;
}

Checkpoint Checkpoint::oracle_stub(const ModelConfig& cfg) {
    Checkpoint c;
    c.kind = ModelKind::OracleStub;
    c.config = cfg;
    return c;
}

std::vector<double> frame_scores(const Checkpoint& model, const FeatureClip& clip) {
    if (model.kind == ModelKind::OracleStub) {
        if (!clip.strong_label) throw ContractError("oracle stub needs strong labels on clip '" + clip.clip_id + "'");
        if (clip.strong_label->classes != model.config.num_classes) {
            throw ContractError("clip '" + clip.clip_id + "' has a different class count than the model");
        }
        return {clip.strong_label->values.begin(), clip.strong_label->values.end()};
    }
    NoGradGuard guard;
    const ClipOutput out = forward_clip(clip, model.params, model.config);
    return {out.probs.data().begin(), out.probs.data().end()};
}

EvalReport evaluate(const Checkpoint& model, std::span<const FeatureClip> test) {
    if (test.empty()) throw ContractError("evaluate: empty test split");
    const std::size_t C = model.config.num_classes;
    for (const auto& clip : test) {
        if (!clip.strong_label) throw ContractError("evaluate: clip '" + clip.clip_id + "' has no strong labels");
        if (clip.strong_label->classes != C || clip.strong_label->frames != clip.frames) {
            throw ContractError("evaluate: clip '" + clip.clip_id + "' has a strong label of the wrong shape");
        }
    }
    std::vector<std::size_t> order(test.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return test[a].clip_id < test[b].clip_id; });

    // Clips are independent, so score them in parallel into fixed slots.
    std::vector<std::vector<double>> scores(test.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    auto work = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < test.size() && !failed;) {
            try {
                scores[i] = frame_scores(model, test[i]);
            } catch (...) {
                if (!failed.exchange(true)) failure = std::current_exception();
            }
        }
    };
    const std::size_t workers =
        std::min<std::size_t>(test.size(), std::max(1u, std::min(8u, std::thread::hardware_concurrency())));
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);

    EvalReport report;
    report.config = model.config;
    report.checkpoint_id = model.id();
    for (auto i : order) report.num_frames += test[i].frames;
    std::vector<double> s(report.num_frames);
    std::vector<std::uint8_t> y(report.num_frames);
    double total = 0.0;
    std::size_t defined = 0;
    for (std::size_t c = 0; c < C; ++c) {
        std::size_t r = 0;
        for (auto i : order) {
            const auto& clip = test[i];
            for (std::size_t t = 0; t < clip.frames; ++t, ++r) {
                s[r] = scores[i][t * C + c];
                y[r] = clip.strong_label->at(t, c);
            }
        }
        const auto ap = average_precision(s, y);
        report.per_class_ap.push_back(ap);
        if (ap) {
            total += *ap;
            ++defined;
        } else {
            report.excluded_classes.push_back(c);
        }
    }
    if (defined == 0) throw ContractError("evaluate: no class has a positive test frame");
    report.map = total / static_cast<double>(defined);
    return report;
}

std::vector<AttentionRow> dump_attention(const Checkpoint& model, const FeatureClip& clip) {
    if (model.kind != ModelKind::Network || model.config.variant != Variant::MultiTrans) {
        throw ContractError("attention dump needs a MultiTrans network; the baseline has no attention");
    }
    NoGradGuard guard;
    const ClipOutput out = forward_clip(clip, model.params, model.config, true);
    std::vector<AttentionRow> rows;
    for (const auto& rec : out.attention) {
        for (std::size_t q = 0; q < rec.sensors; ++q) {
            for (std::size_t k = 0; k < rec.sensors; ++k) {
                const double w = rec.at(q, k);
                rows.push_back({clip.clip_id, rec.frame, rec.layer, rec.head, q, k, w,
                                w * static_cast<double>(rec.sensors)});
            }
        }
    }
    std::stable_sort(rows.begin(), rows.end(), [](const AttentionRow& a, const AttentionRow& b) {
        return std::tie(a.frame, a.layer, a.head, a.query_sensor, a.key_sensor) <
               std::tie(b.frame, b.layer, b.head, b.query_sensor, b.key_sensor);
    });
    return rows;
}

std::vector<std::string> ablation_names() { return {"A-1", "A-2", "A-3", "C-1", "C-2", "C-3"}; }

AblationVariant ablation_variant(std::string_view name) {
    if (name.size() == 3 && (name[0] == 'A' || name[0] == 'C') && name[1] == '-' && name[2] >= '1' && name[2] <= '3') {
        static constexpr Fusion heads[] = {Fusion::Sum, Fusion::Max, Fusion::Concat};
        return {std::string(name), name[0] == 'A' ? Variant::Baseline : Variant::MultiTrans, heads[name[2] - '1']};
    }
    throw ContractError("unknown ablation variant '" + std::string(name) + "' (expected A-1..A-3 or C-1..C-3)");
}

std::vector<AblationRow> run_ablation(const Dataset& data, const ModelConfig& base, const TrainConfig& train_cfg,
                                      std::span<const std::string> names) {
    std::vector<AblationRow> rows;
    for (const auto& name : names) {
        const AblationVariant v = ablation_variant(name);
        Checkpoint ckpt;
        ckpt.config = base;
        ckpt.config.variant = v.variant;
        ckpt.config.fusion = v.fusion;
        ckpt.params = train(data.train, data.event_counts, ckpt.config, train_cfg).params;
        rows.push_back({v.name, evaluate(ckpt, data.test)});
    }
    return rows;
}

}  // namespace multitrans
