#include "debias/checkpoint.hpp"

#include "debias/config.hpp"
#include "debias/error.hpp"

#include <json.hpp>

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

namespace debias {

namespace {

using nlohmann::json;

constexpr const char* kFormat = "debias-checkpoint";

struct Section {
    const char* prefix;
    ModelParams ModelState::*member;
};

constexpr Section kSections[] = {
    {"param/", &ModelState::params},
    {"adam_m/", &ModelState::first_moment},
    {"adam_v/", &ModelState::second_moment},
};

void put_le(std::string& out, double value) {
    const auto bits = std::bit_cast<std::uint64_t>(value);
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
    }
}

double get_le(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
        bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    }
    return std::bit_cast<double>(bits);
}

json history_to_json(const std::vector<HistoryRow>& rows) {
    json out = json::array();
    for (const auto& r : rows) {
        out.push_back({{"epoch", r.epoch},
                       {"train_loss", r.train_loss},
                       {"ce", r.ce},
                       {"kl", r.kl},
                       {"intra", r.intra},
                       {"train_acc", r.train_acc},
                       {"val_loss", r.val_loss},
                       {"val_acc", r.val_acc},
                       {"lr", r.lr}});
    }
    return out;
}

std::vector<HistoryRow> history_from_json(const json& j) {
    std::vector<HistoryRow> out;
    for (const auto& r : j) {
        out.push_back({r.at("epoch").get<std::int64_t>(), r.at("train_loss").get<double>(), r.at("ce").get<double>(),
                       r.at("kl").get<double>(), r.at("intra").get<double>(), r.at("train_acc").get<double>(),
                       r.at("val_loss").get<double>(), r.at("val_acc").get<double>(), r.at("lr").get<double>()});
    }
    return out;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

} // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    json tensors = json::array();
    std::string payload;
    for (const auto& section : kSections) {
        (ckpt.state.*section.member).visit([&](const std::string& name, const Tensor& t) {
            tensors.push_back({{"name", std::string(section.prefix) + name}, {"shape", t.shape()}});
            for (double v : t.values()) {
                put_le(payload, v);
            }
        });
    }
    const auto& s = ckpt.scheduler;
    json header{{"format", kFormat},
                {"version", kCheckpointVersion},
                {"config_hash", ckpt.config_hash},
                {"model", json::parse(model_config_to_json(ckpt.state.config))},
                {"step", ckpt.state.step},
                {"epoch", ckpt.epoch},
                {"scheduler",
                 {{"lr", s.lr},
                  {"best", s.best},
                  {"has_best", s.has_best},
                  {"bad_epochs", s.bad_epochs},
                  {"patience", s.patience},
                  {"factor", s.factor},
                  {"floor", s.floor}}},
                {"rng", {{"seed", ckpt.rng.seed()}, {"counter", ckpt.rng.counter()}}},
                {"history", history_to_json(ckpt.history)},
                {"tensors", tensors},
                {"payload_doubles", payload.size() / 8}};

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot write checkpoint " + path.string());
    }
    out << header.dump() << '\n';
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) {
        throw Error("failed writing checkpoint " + path.string());
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot read checkpoint " + path.string());
    }
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto newline = bytes.find('\n');
    if (newline == std::string::npos) {
        throw Error("checkpoint " + path.string() + " is truncated (no header terminator)");
    }
    json header;
    try {
        header = json::parse(bytes.substr(0, newline));
    } catch (const json::exception&) {
        throw Error("checkpoint " + path.string() + " has a corrupt header");
    }
    try {
        if (header.at("format").get<std::string>() != kFormat) {
            throw Error(path.string() + " is not a debias checkpoint");
        }
        const int version = header.at("version").get<int>();
        if (version != kCheckpointVersion) {
            throw Error("unsupported checkpoint version " + std::to_string(version) + " (this build reads version " +
                        std::to_string(kCheckpointVersion) + ")");
        }
        const auto expected = header.at("payload_doubles").get<std::size_t>();
        const std::size_t available = bytes.size() - newline - 1;
        if (available != expected * 8) {
            throw Error("checkpoint " + path.string() + " is truncated or corrupt: expected " +
                        std::to_string(expected * 8) + " payload bytes, found " + std::to_string(available));
        }

        Checkpoint ckpt;
        const auto model = model_config_from_json(header.at("model").dump());
        Rng layout_rng(0);
        ckpt.state = init_model(model, layout_rng);
        ckpt.state.step = header.at("step").get<std::int64_t>();
        ckpt.epoch = header.at("epoch").get<std::int64_t>();
        ckpt.config_hash = header.at("config_hash").get<std::string>();
        const auto& s = header.at("scheduler");
        ckpt.scheduler.lr = s.at("lr").get<double>();
        ckpt.scheduler.best = s.at("best").get<double>();
        ckpt.scheduler.has_best = s.at("has_best").get<bool>();
        ckpt.scheduler.bad_epochs = s.at("bad_epochs").get<int>();
        ckpt.scheduler.patience = s.at("patience").get<int>();
        ckpt.scheduler.factor = s.at("factor").get<double>();
        ckpt.scheduler.floor = s.at("floor").get<double>();
        ckpt.rng = Rng(header.at("rng").at("seed").get<std::uint64_t>(),
                       header.at("rng").at("counter").get<std::uint64_t>());
        ckpt.history = history_from_json(header.at("history"));

        const auto& entries = header.at("tensors");
        std::size_t entry = 0;
        const auto* cursor = reinterpret_cast<const unsigned char*>(bytes.data()) + newline + 1;
        for (const auto& section : kSections) {
            (ckpt.state.*section.member).visit([&](const std::string& name, Tensor& t) {
                if (entry >= entries.size()) {
                    throw Error("checkpoint is missing tensor " + std::string(section.prefix) + name);
                }
                const auto& e = entries[entry++];
                if (e.at("name").get<std::string>() != std::string(section.prefix) + name ||
                    e.at("shape").get<Shape>() != t.shape()) {
                    throw Error("checkpoint tensor " + e.at("name").get<std::string>() +
                                " does not match the model layout");
                }
                for (auto& v : t.values()) {
                    v = get_le(cursor);
                    cursor += 8;
                }
            });
        }
        if (entry != entries.size()) {
            throw Error("checkpoint has unexpected extra tensors");
        }
        return ckpt;
    } catch (const json::exception& e) {
        throw Error("checkpoint " + path.string() + " has a corrupt header: " + e.what());
    }
}

std::string format_history_csv(const std::vector<HistoryRow>& history) {
    std::string out = "epoch,train_loss,ce,kl,intra,train_acc,val_loss,val_acc,lr\n";
    for (const auto& r : history) {
        out += std::to_string(r.epoch) + "," + fmt(r.train_loss) + "," + fmt(r.ce) + "," + fmt(r.kl) + "," +
               fmt(r.intra) + "," + fmt(r.train_acc) + "," + fmt(r.val_loss) + "," + fmt(r.val_acc) + "," +
               fmt(r.lr) + "\n";
    }
    return out;
}

void write_history_csv(const std::vector<HistoryRow>& history, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out << format_history_csv(history);
}

} // namespace debias
