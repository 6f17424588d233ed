#include "debias/config.hpp"

#include "debias/error.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace debias {

namespace {

using nlohmann::json;

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot read " + path.string());
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

// Reads `key` from `obj` into `out` when present; wraps type errors with the field path.
template <typename T>
void read_field(const json& obj, const char* key, const std::string& prefix, T& out) {
    if (!obj.contains(key)) {
        return;
    }
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw Error("invalid value for " + prefix + key);
    }
}

void reject_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& prefix) {
    if (!obj.is_object()) {
        throw Error(prefix.empty() ? "config must be a JSON object" : prefix + " must be a JSON object");
    }
    for (const auto& [key, value] : obj.items()) {
        bool ok = false;
        for (const char* k : known) {
            ok = ok || key == k;
        }
        if (!ok) {
            throw Error("unknown config field: " + prefix + key);
        }
    }
}

json model_to_json(const ModelConfig& m) {
    return {{"channels", m.channels},
            {"height", m.height},
            {"width", m.width},
            {"conv_channels", m.conv_channels},
            {"embedding_dim", m.embedding_dim},
            {"num_classes", m.num_classes},
            {"se_reduction", m.se_reduction},
            {"spatial_kernel", m.spatial_kernel},
            {"target", to_string(m.target)},
            {"attention", m.attention}};
}

ModelConfig model_from_json(const json& j) {
    reject_unknown(j,
                   {"channels", "height", "width", "conv_channels", "embedding_dim", "num_classes", "se_reduction",
                    "spatial_kernel", "target", "attention"},
                   "model.");
    ModelConfig m;
    read_field(j, "channels", "model.", m.channels);
    read_field(j, "height", "model.", m.height);
    read_field(j, "width", "model.", m.width);
    read_field(j, "conv_channels", "model.", m.conv_channels);
    read_field(j, "embedding_dim", "model.", m.embedding_dim);
    read_field(j, "num_classes", "model.", m.num_classes);
    read_field(j, "se_reduction", "model.", m.se_reduction);
    read_field(j, "spatial_kernel", "model.", m.spatial_kernel);
    read_field(j, "attention", "model.", m.attention);
    std::string target = to_string(m.target);
    read_field(j, "target", "model.", target);
    m.target = parse_attribute(target);
    return m;
}

json loss_to_json(const LossConfig& l) {
    return {{"lambda", l.lambda},
            {"beta", l.beta},
            {"epsilon_smooth", l.epsilon_smooth},
            {"epsilon_cov", l.epsilon_cov},
            {"covariance_mode", to_string(l.covariance_mode)},
            {"grouping", to_string(l.grouping)}};
}

LossConfig loss_from_json(const json& j) {
    reject_unknown(j, {"lambda", "beta", "epsilon_smooth", "epsilon_cov", "covariance_mode", "grouping"}, "loss.");
    LossConfig l;
    read_field(j, "lambda", "loss.", l.lambda);
    read_field(j, "beta", "loss.", l.beta);
    read_field(j, "epsilon_smooth", "loss.", l.epsilon_smooth);
    read_field(j, "epsilon_cov", "loss.", l.epsilon_cov);
    std::string mode = to_string(l.covariance_mode);
    read_field(j, "covariance_mode", "loss.", mode);
    l.covariance_mode = parse_covariance_mode(mode);
    std::string grouping = to_string(l.grouping);
    read_field(j, "grouping", "loss.", grouping);
    l.grouping = parse_grouping(grouping);
    return l;
}

json training_json(const RunConfig& c) {
    const auto& o = c.optimizer;
    const auto& s = c.scheduler;
    const auto& p = c.preprocess;
    return {{"model", model_to_json(c.model)},
            {"loss", loss_to_json(c.loss)},
            {"optimizer",
             {{"lr", o.lr},
              {"weight_decay", o.weight_decay},
              {"batch_size", o.batch_size},
              {"beta1", o.beta1},
              {"beta2", o.beta2},
              {"epsilon", o.epsilon}}},
            {"scheduler", {{"patience", s.patience}, {"factor", s.factor}, {"floor", s.floor}}},
            {"preprocess",
             {{"clahe", p.clahe},
              {"clip_limit", p.clahe_config.clip_limit},
              {"tiles", {p.clahe_config.tiles_x, p.clahe_config.tiles_y}},
              {"augment", p.augment},
              {"flip_probability", p.augment_config.flip_probability},
              {"rotation_degrees", p.augment_config.rotation_degrees},
              {"translation_pixels", p.augment_config.translation_pixels}}},
            {"balanced_batches", c.balanced_batches},
            {"seed", c.seed}};
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
    std::filesystem::path p(value);
    if (p.empty() || p.is_absolute() || base.empty()) {
        return p;
    }
    return base / p;
}

} // namespace

void RunConfig::validate() const {
    model.validate();
    loss.validate();
    if (!(optimizer.lr > 0.0)) {
        throw Error("optimizer.lr must be > 0");
    }
    if (!(optimizer.weight_decay >= 0.0)) {
        throw Error("optimizer.weight_decay must be >= 0");
    }
    if (optimizer.batch_size == 0) {
        throw Error("optimizer.batch_size must be > 0");
    }
    if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) || !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) {
        throw Error("optimizer.beta1 and optimizer.beta2 must lie in [0, 1)");
    }
    if (!(optimizer.epsilon > 0.0)) {
        throw Error("optimizer.epsilon must be > 0");
    }
    if (scheduler.patience < 1) {
        throw Error("scheduler.patience must be >= 1");
    }
    if (!(scheduler.factor > 0.0 && scheduler.factor < 1.0)) {
        throw Error("scheduler.factor must lie in (0, 1)");
    }
    if (!(scheduler.floor > 0.0) || scheduler.floor > optimizer.lr) {
        throw Error("scheduler.floor must be positive and <= optimizer.lr");
    }
    if (!(preprocess.clahe_config.clip_limit > 0.0) || preprocess.clahe_config.tiles_x == 0 ||
        preprocess.clahe_config.tiles_y == 0) {
        throw Error("preprocess.clip_limit and preprocess.tiles must be positive");
    }
    const auto& a = preprocess.augment_config;
    if (!(a.flip_probability >= 0.0 && a.flip_probability <= 1.0) || a.rotation_degrees < 0.0 ||
        a.translation_pixels < 0.0) {
        throw Error("preprocess augmentation ranges must be non-negative (flip_probability in [0, 1])");
    }
    if (!(data.val_fraction > 0.0 && data.val_fraction < 1.0)) {
        throw Error("data.val_fraction must lie in (0, 1)");
    }
    if (epochs == 0) {
        throw Error("epochs must be >= 1");
    }
}

RunConfig run_config_from_json(const std::string& text, const std::filesystem::path& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(std::string("config is not valid JSON: ") + e.what());
    }
    reject_unknown(j,
                   {"model", "loss", "optimizer", "scheduler", "preprocess", "data", "epochs", "seed",
                    "balanced_batches", "output_dir"},
                   "");
    RunConfig c;
    if (j.contains("model")) {
        c.model = model_from_json(j["model"]);
    }
    if (j.contains("loss")) {
        c.loss = loss_from_json(j["loss"]);
    }
    if (j.contains("optimizer")) {
        const auto& o = j["optimizer"];
        reject_unknown(o, {"lr", "weight_decay", "batch_size", "beta1", "beta2", "epsilon"}, "optimizer.");
        read_field(o, "lr", "optimizer.", c.optimizer.lr);
        read_field(o, "weight_decay", "optimizer.", c.optimizer.weight_decay);
        read_field(o, "batch_size", "optimizer.", c.optimizer.batch_size);
        read_field(o, "beta1", "optimizer.", c.optimizer.beta1);
        read_field(o, "beta2", "optimizer.", c.optimizer.beta2);
        read_field(o, "epsilon", "optimizer.", c.optimizer.epsilon);
    }
    if (j.contains("scheduler")) {
        const auto& s = j["scheduler"];
        reject_unknown(s, {"patience", "factor", "floor"}, "scheduler.");
        read_field(s, "patience", "scheduler.", c.scheduler.patience);
        read_field(s, "factor", "scheduler.", c.scheduler.factor);
        read_field(s, "floor", "scheduler.", c.scheduler.floor);
    }
    if (j.contains("preprocess")) {
        const auto& p = j["preprocess"];
        reject_unknown(p,
                       {"clahe", "clip_limit", "tiles", "augment", "flip_probability", "rotation_degrees",
                        "translation_pixels"},
                       "preprocess.");
        auto& pp = c.preprocess;
        read_field(p, "clahe", "preprocess.", pp.clahe);
        read_field(p, "clip_limit", "preprocess.", pp.clahe_config.clip_limit);
        if (p.contains("tiles")) {
            std::vector<std::size_t> tiles;
            read_field(p, "tiles", "preprocess.", tiles);
            if (tiles.size() != 2) {
                throw Error("preprocess.tiles must be [tiles_x, tiles_y]");
            }
            pp.clahe_config.tiles_x = tiles[0];
            pp.clahe_config.tiles_y = tiles[1];
        }
        read_field(p, "augment", "preprocess.", pp.augment);
        read_field(p, "flip_probability", "preprocess.", pp.augment_config.flip_probability);
        read_field(p, "rotation_degrees", "preprocess.", pp.augment_config.rotation_degrees);
        read_field(p, "translation_pixels", "preprocess.", pp.augment_config.translation_pixels);
    }
    if (j.contains("data")) {
        const auto& d = j["data"];
        reject_unknown(d, {"train", "val", "image_root", "val_fraction"}, "data.");
        std::string train, val, root;
        read_field(d, "train", "data.", train);
        read_field(d, "val", "data.", val);
        read_field(d, "image_root", "data.", root);
        read_field(d, "val_fraction", "data.", c.data.val_fraction);
        c.data.train = resolve(base_dir, train);
        c.data.val = resolve(base_dir, val);
        c.data.image_root = resolve(base_dir, root);
    }
    read_field(j, "epochs", "", c.epochs);
    read_field(j, "seed", "", c.seed);
    read_field(j, "balanced_batches", "", c.balanced_batches);
    std::string out;
    read_field(j, "output_dir", "", out);
    c.output_dir = resolve(base_dir, out);
    c.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    return run_config_from_json(read_text(path), path.parent_path());
}

std::string run_config_to_json(const RunConfig& cfg) {
    json j = training_json(cfg);
    j["data"] = {{"train", cfg.data.train.string()},
                 {"val", cfg.data.val.string()},
                 {"image_root", cfg.data.image_root.string()},
                 {"val_fraction", cfg.data.val_fraction}};
    j["epochs"] = cfg.epochs;
    j["output_dir"] = cfg.output_dir.string();
    return j.dump(2);
}

std::string config_hash(const RunConfig& cfg) {
    const std::string canonical = training_json(cfg).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

SynthConfig synth_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(std::string("synth config is not valid JSON: ") + e.what());
    }
    reject_unknown(j, {"groups", "height", "width", "target", "patch_quadrant", "test_fraction", "seed"}, "");
    SynthConfig c;
    if (!j.contains("groups") || !j["groups"].is_array()) {
        throw Error("missing field: groups");
    }
    for (const auto& g : j["groups"]) {
        reject_unknown(g, {"race", "gender", "count", "signal", "noise"}, "groups.");
        SynthGroup group;
        read_field(g, "race", "groups.", group.race);
        read_field(g, "gender", "groups.", group.gender);
        read_field(g, "count", "groups.", group.count);
        read_field(g, "signal", "groups.", group.signal);
        read_field(g, "noise", "groups.", group.noise);
        c.groups.push_back(group);
    }
    read_field(j, "height", "", c.height);
    read_field(j, "width", "", c.width);
    read_field(j, "patch_quadrant", "", c.patch_quadrant);
    read_field(j, "test_fraction", "", c.test_fraction);
    read_field(j, "seed", "", c.seed);
    std::string target = to_string(c.target);
    read_field(j, "target", "", target);
    c.target = parse_attribute(target);
    c.validate();
    return c;
}

SynthConfig load_synth_config(const std::filesystem::path& path) { return synth_config_from_json(read_text(path)); }

std::string synth_config_to_json(const SynthConfig& cfg) {
    json groups = json::array();
    for (const auto& g : cfg.groups) {
        groups.push_back(
            {{"race", g.race}, {"gender", g.gender}, {"count", g.count}, {"signal", g.signal}, {"noise", g.noise}});
    }
    return json{{"groups", groups},
                {"height", cfg.height},
                {"width", cfg.width},
                {"target", to_string(cfg.target)},
                {"patch_quadrant", cfg.patch_quadrant},
                {"test_fraction", cfg.test_fraction},
                {"seed", cfg.seed}}
        .dump(2);
}

std::string model_config_to_json(const ModelConfig& cfg) { return model_to_json(cfg).dump(); }

ModelConfig model_config_from_json(const std::string& text) {
    try {
        return model_from_json(json::parse(text));
    } catch (const json::exception& e) {
        throw Error(std::string("malformed model config: ") + e.what());
    }
}

} // namespace debias
