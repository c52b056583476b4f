#include "multitrans/io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "multitrans/errors.hpp"

namespace multitrans {

using nlohmann::json;

namespace {

// Rejects keys outside `allowed` so typos in config files do not pass silently.
void check_keys(const json& j, std::string_view where, std::initializer_list<std::string_view> allowed) {
    if (!j.is_object()) throw ContractError(std::string(where) + ": expected an object");
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (auto a : allowed) ok = ok || key == a;
        if (!ok) throw ContractError(std::string(where) + ": unknown key '" + key + "'");
    }
}

template <typename T>
void read(const json& j, const char* key, T& out, std::string_view where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ContractError(std::string(where) + ": key '" + key + "' has the wrong type");
    }
}

void read_size(const json& j, const char* key, std::size_t& out, std::string_view where) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if (!v.is_number_unsigned()) throw ContractError(std::string(where) + ": key '" + key + "' must be a non-negative integer");
    out = v.get<std::size_t>();
}

json model_to_json(const ModelConfig& c) {
    return {{"num_sensors", c.num_sensors}, {"input_dim", c.input_dim},     {"embed_dim", c.embed_dim},
            {"num_heads", c.num_heads},     {"num_blocks", c.num_blocks},   {"num_classes", c.num_classes},
            {"fusion", to_string(c.fusion)}, {"ffn_dim", c.ffn_dim},        {"threshold", c.threshold},
            {"variant", to_string(c.variant)}, {"sensor_encoding", c.sensor_encoding}};
}

ModelConfig model_from_json(const json& j) {
    constexpr std::string_view where = "model config";
    check_keys(j, where,
               {"num_sensors", "input_dim", "embed_dim", "num_heads", "num_blocks", "num_classes", "fusion", "ffn_dim",
                "threshold", "variant", "sensor_encoding"});
    ModelConfig c;
    read_size(j, "num_sensors", c.num_sensors, where);
    read_size(j, "input_dim", c.input_dim, where);
    read_size(j, "embed_dim", c.embed_dim, where);
    read_size(j, "num_heads", c.num_heads, where);
    read_size(j, "num_blocks", c.num_blocks, where);
    read_size(j, "num_classes", c.num_classes, where);
    read_size(j, "ffn_dim", c.ffn_dim, where);
    read(j, "threshold", c.threshold, where);
    read(j, "sensor_encoding", c.sensor_encoding, where);
    std::string s;
    if (j.contains("fusion")) {
        read(j, "fusion", s, where);
        c.fusion = fusion_from_string(s);
    }
    if (j.contains("variant")) {
        read(j, "variant", s, where);
        c.variant = variant_from_string(s);
    }
    return c;
}

json train_to_json(const TrainConfig& c) {
    return {{"epochs", c.epochs},           {"lr0", c.lr0},
            {"final_decay", c.final_decay}, {"weight_decay", c.weight_decay},
            {"beta1", c.beta1},             {"beta2", c.beta2},
            {"eps_adam", c.eps_adam},       {"batch_size", c.batch_size},
            {"clip_len", c.clip_len},       {"seed", c.seed},
            {"prob_clamp", c.prob_clamp},   {"checkpoint_every", c.checkpoint_every}};
}

TrainConfig train_from_json(const json& j) {
    constexpr std::string_view where = "training config";
    check_keys(j, where,
               {"epochs", "lr0", "final_decay", "weight_decay", "beta1", "beta2", "eps_adam", "batch_size", "clip_len",
                "seed", "prob_clamp", "checkpoint_every"});
    TrainConfig c;
    read_size(j, "epochs", c.epochs, where);
    read(j, "lr0", c.lr0, where);
    read(j, "final_decay", c.final_decay, where);
    read(j, "weight_decay", c.weight_decay, where);
    read(j, "beta1", c.beta1, where);
    read(j, "beta2", c.beta2, where);
    read(j, "eps_adam", c.eps_adam, where);
    read_size(j, "batch_size", c.batch_size, where);
    read_size(j, "clip_len", c.clip_len, where);
    read(j, "seed", c.seed, where);
    read(j, "prob_clamp", c.prob_clamp, where);
    read_size(j, "checkpoint_every", c.checkpoint_every, where);
    return c;
}

json source_to_json(const EventSource& s) {
    json modes = json::array();
    for (const auto& m : s.modes) modes.push_back({{"probability", m.probability}, {"signs", m.signs}});
    return {{"name", s.name},
            {"label", s.label ? json(*s.label) : json(nullptr)},
            {"sensors", s.sensors},
            {"signatures", s.signatures},
            {"modes", modes},
            {"min_duration", s.min_duration},
            {"max_duration", s.max_duration},
            {"min_events", s.min_events},
            {"max_events", s.max_events},
            {"weight", s.weight}};
}

EventSource source_from_json(const json& j) {
    constexpr std::string_view where = "event source";
    check_keys(j, where,
               {"name", "label", "sensors", "signatures", "modes", "min_duration", "max_duration", "min_events",
                "max_events", "weight"});
    EventSource s;
    read(j, "name", s.name, where);
    if (j.contains("label") && !j.at("label").is_null()) {
        std::size_t label = 0;
        read_size(j, "label", label, where);
        s.label = label;
    }
    read(j, "sensors", s.sensors, where);
    read(j, "signatures", s.signatures, where);
    if (j.contains("modes")) {
        if (!j.at("modes").is_array()) throw ContractError("event source: 'modes' must be an array");
        for (const auto& m : j.at("modes")) {
            check_keys(m, "sign mode", {"probability", "signs"});
            SignMode mode;
            read(m, "probability", mode.probability, "sign mode");
            read(m, "signs", mode.signs, "sign mode");
            s.modes.push_back(std::move(mode));
        }
    }
    read_size(j, "min_duration", s.min_duration, where);
    read_size(j, "max_duration", s.max_duration, where);
    read_size(j, "min_events", s.min_events, where);
    read_size(j, "max_events", s.max_events, where);
    read(j, "weight", s.weight, where);
    return s;
}

json generator_to_json(const GenConfig& c) {
    json modality = json::array();
    for (auto m : c.modality) modality.push_back(to_string(m));
    json sources = json::array();
    for (const auto& s : c.sources) sources.push_back(source_to_json(s));
    return {{"train_scenes", c.train_scenes},
            {"test_scenes", c.test_scenes},
            {"num_sensors", c.num_sensors},
            {"input_dim", c.input_dim},
            {"num_classes", c.num_classes},
            {"frames", c.frames},
            {"noise_std", c.noise_std},
            {"signal_gain", c.signal_gain},
            {"modality", modality},
            {"signatures", c.signatures},
            {"sources", sources},
            {"events_per_scene", c.events_per_scene},
            {"seed", c.seed},
            {"max_retries", c.max_retries}};
}

GenConfig generator_from_json(const json& j) {
    constexpr std::string_view where = "generator config";
    check_keys(j, where,
               {"train_scenes", "test_scenes", "num_sensors", "input_dim", "num_classes", "frames", "noise_std",
                "signal_gain", "modality", "signatures", "sources", "events_per_scene", "seed", "max_retries"});
    GenConfig c = GenConfig::desk_default();
    read_size(j, "train_scenes", c.train_scenes, where);
    read_size(j, "test_scenes", c.test_scenes, where);
    read_size(j, "num_sensors", c.num_sensors, where);
    read_size(j, "input_dim", c.input_dim, where);
    read_size(j, "num_classes", c.num_classes, where);
    read_size(j, "frames", c.frames, where);
    read(j, "noise_std", c.noise_std, where);
    read(j, "signal_gain", c.signal_gain, where);
    if (j.contains("modality")) {
        std::vector<std::string> names;
        read(j, "modality", names, where);
        c.modality.clear();
        for (const auto& n : names) c.modality.push_back(modality_from_string(n));
    }
    read(j, "signatures", c.signatures, where);
    if (j.contains("sources")) {
        if (!j.at("sources").is_array()) throw ContractError("generator config: 'sources' must be an array");
        c.sources.clear();
        for (const auto& s : j.at("sources")) c.sources.push_back(source_from_json(s));
    }
    read_size(j, "events_per_scene", c.events_per_scene, where);
    read(j, "seed", c.seed, where);
    read_size(j, "max_retries", c.max_retries, where);
    return c;
}

json parse(const std::string& text, std::string_view what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ContractError(std::string(what) + ": malformed JSON (" + e.what() + ")");
    }
}

void check_finite(std::span<const double> v, const std::string& what) {
    for (double x : v) {
        if (!std::isfinite(x)) throw NumericError(what + " holds a non-finite value");
    }
}

std::uint64_t to_little(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        std::uint64_t r = 0;
        for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xff) << (8 * (7 - i));
        return r;
    }
    return v;
}

}  // namespace

std::string run_config_to_json(const RunConfig& cfg) {
    const json j = {{"generator", generator_to_json(cfg.generator)},
                    {"model", model_to_json(cfg.model)},
                    {"training", train_to_json(cfg.training)}};
    return j.dump(2) + "\n";
}

RunConfig run_config_from_json(const std::string& text) {
    const json j = parse(text, "run config");
    check_keys(j, "run config", {"generator", "model", "training"});
    RunConfig cfg;
    if (j.contains("generator")) cfg.generator = generator_from_json(j.at("generator"));
    if (j.contains("model")) cfg.model = model_from_json(j.at("model"));
    if (j.contains("training")) cfg.training = train_from_json(j.at("training"));
    cfg.generator.validate();
    cfg.model.validate();
    cfg.training.validate();
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) { return run_config_from_json(read_text(path)); }

void save_run_config(const std::filesystem::path& path, const RunConfig& cfg) {
    write_text(path, run_config_to_json(cfg));
}

std::string checkpoint_to_json(const Checkpoint& ckpt) {
    json params = json::object();
    for (const auto& [name, t] : ckpt.params.tensors()) {
        check_finite(t.data(), "parameter '" + name + "'");
        params[name] = {{"shape", t.shape()}, {"data", std::vector<double>(t.data().begin(), t.data().end())}};
    }
    const json j = {{"schema", kCheckpointSchema},
                    {"kind", to_string(ckpt.kind)},
                    {"id", ckpt.id()},
                    {"config", model_to_json(ckpt.config)},
                    {"params", params}};
    return j.dump() + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text) {
    const json j = parse(text, "checkpoint");
    check_keys(j, "checkpoint", {"schema", "kind", "id", "config", "params"});
    if (j.value("schema", "") != kCheckpointSchema) {
        throw ContractError(std::string("checkpoint: schema must be '") + kCheckpointSchema + "'");
    }
    Checkpoint c;
    std::string kind = "network";
    read(j, "kind", kind, "checkpoint");
    c.kind = model_kind_from_string(kind);
    if (!j.contains("config")) throw ContractError("checkpoint: missing 'config'");
    c.config = model_from_json(j.at("config"));
    c.config.validate();
    if (c.kind == ModelKind::OracleStub) return c;
    if (!j.contains("params") || !j.at("params").is_object()) throw ContractError("checkpoint: missing 'params'");
    for (const auto& [name, p] : j.at("params").items()) {
        check_keys(p, "checkpoint parameter", {"shape", "data"});
        Shape shape;
        std::vector<double> data;
        read(p, "shape", shape, "checkpoint parameter");
        read(p, "data", data, "checkpoint parameter");
        if (shape_numel(shape) != data.size()) {
            throw ContractError("checkpoint: parameter '" + name + "' data does not match its shape");
        }
        check_finite(data, "checkpoint parameter '" + name + "'");
        c.params.insert(name, Tensor(std::move(shape), std::move(data), true));
    }
    // Names and shapes must be exactly those the config implies.
    const ModelParams expected = ModelParams::initialize(c.config, 0);
    if (expected.tensors().size() != c.params.tensors().size()) {
        throw ContractError("checkpoint: parameter set does not match the model config");
    }
    for (const auto& [name, t] : expected.tensors()) {
        if (!c.params.contains(name) || c.params.at(name).shape() != t.shape()) {
            throw ContractError("checkpoint: parameter '" + name + "' is missing or has the wrong shape");
        }
    }
    if (j.contains("id") && j.at("id") != c.id()) throw ContractError("checkpoint: id does not match its contents");
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    write_text(path, checkpoint_to_json(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_json(read_text(path)); }

void save_dataset(const std::filesystem::path& dir, const Dataset& data, const GenConfig& cfg) {
    std::error_code ec;
    std::filesystem::create_directories(dir / "features", ec);
    if (ec) throw IoError("cannot create dataset directory '" + dir.string() + "': " + ec.message());
    json clips = json::array();
    for (std::size_t split = 0; split < 2; ++split) {
        const auto& list = split == 0 ? data.train : data.test;
        for (const auto& clip : list) {
            clip.validate();
            check_finite(clip.features, "clip '" + clip.clip_id + "'");
            const std::string file = "features/" + clip.clip_id + ".bin";
            std::ofstream out(dir / file, std::ios::binary | std::ios::trunc);
            if (!out) throw IoError("cannot write '" + (dir / file).string() + "'");
            for (double v : clip.features) {
                const std::uint64_t bits = to_little(std::bit_cast<std::uint64_t>(v));
                out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
            }
            if (!out) throw IoError("write failed for '" + (dir / file).string() + "'");
            json modality = json::array();
            for (auto m : clip.modality) modality.push_back(to_string(m));
            json entry = {{"split", split == 0 ? "train" : "test"},
                          {"clip_id", clip.clip_id},
                          {"frames", clip.frames},
                          {"sensors", clip.sensors},
                          {"input_dim", clip.input_dim},
                          {"modality", modality},
                          {"weak_label", clip.weak_label.values},
                          {"file", file}};
            if (clip.strong_label) {
                entry["strong_label"] = {{"classes", clip.strong_label->classes},
                                         {"values", clip.strong_label->values}};
            }
            clips.push_back(std::move(entry));
        }
    }
    const json manifest = {{"schema", kDatasetSchema},
                           {"generator", generator_to_json(cfg)},
                           {"event_counts", data.event_counts},
                           {"clips", clips}};
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

Dataset load_dataset(const std::filesystem::path& dir) {
    const json j = parse(read_text(dir / "manifest.json"), "dataset manifest");
    check_keys(j, "dataset manifest", {"schema", "generator", "event_counts", "clips"});
    if (j.value("schema", "") != kDatasetSchema) {
        throw ContractError(std::string("dataset manifest: schema must be '") + kDatasetSchema + "'");
    }
    Dataset data;
    read(j, "event_counts", data.event_counts, "dataset manifest");
    if (!j.contains("clips") || !j.at("clips").is_array()) throw ContractError("dataset manifest: missing 'clips'");
    for (const auto& e : j.at("clips")) {
        constexpr std::string_view where = "dataset clip";
        check_keys(e, where,
                   {"split", "clip_id", "frames", "sensors", "input_dim", "modality", "weak_label", "strong_label",
                    "file"});
        FeatureClip clip;
        std::string split, file;
        std::vector<std::string> modality;
        read(e, "split", split, where);
        read(e, "clip_id", clip.clip_id, where);
        read_size(e, "frames", clip.frames, where);
        read_size(e, "sensors", clip.sensors, where);
        read_size(e, "input_dim", clip.input_dim, where);
        read(e, "modality", modality, where);
        for (const auto& m : modality) clip.modality.push_back(modality_from_string(m));
        read(e, "weak_label", clip.weak_label.values, where);
        read(e, "file", file, where);
        if (e.contains("strong_label")) {
            const json& s = e.at("strong_label");
            check_keys(s, "strong label", {"classes", "values"});
            EventMatrix m(clip.frames, 0);
            read_size(s, "classes", m.classes, "strong label");
            read(s, "values", m.values, "strong label");
            clip.strong_label = std::move(m);
        }
        const std::size_t n = clip.frames * clip.sensors * clip.input_dim;
        std::ifstream in(dir / file, std::ios::binary);
        if (!in) throw IoError("cannot read '" + (dir / file).string() + "'");
        clip.features.resize(n);
        for (auto& v : clip.features) {
            std::uint64_t bits = 0;
            if (!in.read(reinterpret_cast<char*>(&bits), sizeof bits)) {
                throw IoError("feature file '" + (dir / file).string() + "' is shorter than its manifest entry");
            }
            v = std::bit_cast<double>(to_little(bits));
        }
        if (in.peek() != std::char_traits<char>::eof()) {
            throw IoError("feature file '" + (dir / file).string() + "' is longer than its manifest entry");
        }
        clip.validate();
        if (split == "train") {
            data.train.push_back(std::move(clip));
        } else if (split == "test") {
            data.test.push_back(std::move(clip));
        } else {
            throw ContractError("dataset clip '" + clip.clip_id + "': split must be train or test");
        }
    }
    return data;
}

std::string format_sig6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string metrics_csv(const EvalReport& report) {
    std::string out = "class,ap\n";
    for (std::size_t c = 0; c < report.per_class_ap.size(); ++c) {
        const auto& ap = report.per_class_ap[c];
        out += std::to_string(c) + "," + (ap ? format_sig6(*ap) : std::string()) + "\n";
    }
    return out;
}

std::string loss_csv(std::span<const EpochRecord> history) {
    std::string out = "epoch,lr,mean_loss\n";
    for (const auto& r : history) {
        out += std::to_string(r.epoch) + "," + format_sig6(r.lr) + "," + format_sig6(r.mean_loss) + "\n";
    }
    return out;
}

std::string attention_csv(std::span<const AttentionRow> rows) {
    std::string out = "clip_id,frame,layer,head,query_sensor,key_sensor,weight,weight_normalized\n";
    for (const auto& r : rows) {
        out += r.clip_id + "," + std::to_string(r.frame) + "," + std::to_string(r.layer) + "," +
               std::to_string(r.head) + "," + std::to_string(r.query_sensor) + "," + std::to_string(r.key_sensor) +
               "," + format_sig6(r.weight) + "," + format_sig6(r.weight_normalized) + "\n";
    }
    return out;
}

std::string ablation_csv(std::span<const AblationRow> rows) {
    std::string out = "variant,map";
    const std::size_t C = rows.empty() ? 0 : rows.front().report.per_class_ap.size();
    for (std::size_t c = 0; c < C; ++c) out += ",ap_" + std::to_string(c);
    out += "\n";
    for (const auto& r : rows) {
        out += r.name + "," + format_sig6(r.report.map);
        for (const auto& ap : r.report.per_class_ap) out += "," + (ap ? format_sig6(*ap) : std::string());
        out += "\n";
    }
    return out;
}

std::string report_to_json(const EvalReport& report) {
    json per_class = json::array();
    for (const auto& ap : report.per_class_ap) per_class.push_back(ap ? json(*ap) : json(nullptr));
    const json j = {{"per_class_ap", per_class},
                    {"excluded_classes", report.excluded_classes},
                    {"map", report.map},
                    {"config", model_to_json(report.config)},
                    {"checkpoint_id", report.checkpoint_id},
                    {"num_frames", report.num_frames}};
    return j.dump(2) + "\n";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace multitrans
