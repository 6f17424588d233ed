#include "debias/data.hpp"

#include "debias/error.hpp"
#include "debias/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

namespace debias {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) {
        fields.push_back(field);
    }
    if (!line.empty() && line.back() == ',') {
        fields.emplace_back();
    }
    return fields;
}

std::string trim(std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) {
        s.pop_back();
    }
    std::size_t start = 0;
    while (start < s.size() && (s[start] == ' ' || s[start] == '\t')) {
        ++start;
    }
    return s.substr(start);
}

std::size_t index_in(const std::vector<std::string>& vocab, const std::string& value) {
    auto it = std::lower_bound(vocab.begin(), vocab.end(), value);
    if (it == vocab.end() || *it != value) {
        return vocab.size();
    }
    return static_cast<std::size_t>(it - vocab.begin());
}

std::vector<std::string> sorted_unique(std::vector<std::string> values) {
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    return values;
}

} // namespace

std::size_t Manifest::group_count(Grouping grouping) const {
    return grouping == Grouping::race ? race_vocab.size() : race_vocab.size() * gender_vocab.size();
}

std::size_t Manifest::group_of(const Sample& sample, Grouping grouping) const {
    return grouping == Grouping::race ? sample.race : sample.race * gender_vocab.size() + sample.gender;
}

std::string Manifest::group_name(std::size_t group, Grouping grouping) const {
    if (grouping == Grouping::race) {
        return race_vocab.at(group);
    }
    return race_vocab.at(group / gender_vocab.size()) + "/" + gender_vocab.at(group % gender_vocab.size());
}

std::vector<std::size_t> Manifest::groups(Grouping grouping) const {
    std::vector<std::size_t> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        out.push_back(group_of(s, grouping));
    }
    return out;
}

std::size_t Manifest::label_of(const Sample& sample, Attribute target) const {
    return target == Attribute::race ? sample.race : sample.gender;
}

const std::vector<std::string>& Manifest::vocabulary(Attribute attribute) const {
    return attribute == Attribute::race ? race_vocab : gender_vocab;
}

Manifest load_manifest(const std::filesystem::path& csv, const std::filesystem::path& image_root,
                       const std::optional<Vocabularies>& fixed) {
    std::ifstream in(csv);
    if (!in) {
        throw Error("cannot read manifest " + csv.string());
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw Error("manifest " + csv.string() + " is empty");
    }
    const auto header = split_csv_line(line);
    std::map<std::string, std::size_t> column;
    for (std::size_t i = 0; i < header.size(); ++i) {
        column[trim(header[i])] = i;
    }
    for (const char* required : {"id", "path", "race", "gender"}) {
        if (!column.contains(required)) {
            throw Error(std::string("missing column: ") + required);
        }
    }
    const auto width = std::max({column["id"], column["path"], column["race"], column["gender"]}) + 1;

    struct Row {
        std::string id, path, race, gender;
    };
    std::vector<Row> rows;
    std::set<std::string> seen;
    std::size_t line_number = 1;
    while (std::getline(in, line)) {
        ++line_number;
        if (trim(line).empty()) {
            continue;
        }
        auto fields = split_csv_line(line);
        if (fields.size() < width) {
            throw Error("row " + std::to_string(line_number) + " of " + csv.string() + " has too few fields");
        }
        Row row{trim(fields[column["id"]]), trim(fields[column["path"]]), trim(fields[column["race"]]),
                trim(fields[column["gender"]])};
        if (row.id.empty()) {
            throw Error("empty id on row " + std::to_string(line_number));
        }
        if (row.race.empty() || row.gender.empty()) {
            throw Error("empty label on row " + std::to_string(line_number));
        }
        if (!seen.insert(row.id).second) {
            throw Error("duplicate id '" + row.id + "' on row " + std::to_string(line_number));
        }
        rows.push_back(std::move(row));
    }

    Manifest manifest;
    manifest.image_root = image_root;
    manifest.split = csv.stem().string();
    if (fixed) {
        manifest.race_vocab = sorted_unique(fixed->race);
        manifest.gender_vocab = sorted_unique(fixed->gender);
    } else {
        std::vector<std::string> races, genders;
        for (const auto& r : rows) {
            races.push_back(r.race);
            genders.push_back(r.gender);
        }
        manifest.race_vocab = sorted_unique(std::move(races));
        manifest.gender_vocab = sorted_unique(std::move(genders));
    }
    line_number = 1;
    for (auto& r : rows) {
        ++line_number;
        Sample s;
        s.id = std::move(r.id);
        s.path = std::move(r.path);
        s.race = index_in(manifest.race_vocab, r.race);
        s.gender = index_in(manifest.gender_vocab, r.gender);
        if (s.race == manifest.race_vocab.size()) {
            throw Error("unknown race label '" + r.race + "' for id " + s.id);
        }
        if (s.gender == manifest.gender_vocab.size()) {
            throw Error("unknown gender label '" + r.gender + "' for id " + s.id);
        }
        manifest.samples.push_back(std::move(s));
    }
    return manifest;
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& csv) {
    std::ofstream out(csv);
    if (!out) {
        throw Error("cannot write manifest " + csv.string());
    }
    out << "id,path,race,gender\n";
    for (const auto& s : manifest.samples) {
        out << s.id << ',' << s.path << ',' << manifest.race_vocab.at(s.race) << ','
            << manifest.gender_vocab.at(s.gender) << '\n';
    }
    if (!out) {
        throw Error("failed writing manifest " + csv.string());
    }
}

Tensor load_image(const Manifest& manifest, const Sample& sample) {
    if (!sample.pixels.empty()) {
        return sample.pixels;
    }
    return read_pnm(manifest.image_root / sample.path);
}

std::vector<std::vector<std::size_t>> balanced_batches(std::span<const std::size_t> sample_groups,
                                                       std::span<const std::string> group_names,
                                                       std::size_t batch_size, Rng& rng) {
    const auto group_count = group_names.size();
    if (group_count == 0 || batch_size == 0) {
        throw Error("balanced batching needs at least one group and a positive batch size");
    }
    if (batch_size % group_count != 0) {
        throw Error("batch size " + std::to_string(batch_size) + " is not divisible by " +
                    std::to_string(group_count) + " groups");
    }
    std::vector<std::vector<std::size_t>> members(group_count);
    for (std::size_t i = 0; i < sample_groups.size(); ++i) {
        if (sample_groups[i] >= group_count) {
            throw Error("sample " + std::to_string(i) + " has group id out of range");
        }
        members[sample_groups[i]].push_back(i);
    }
    std::size_t largest = 0;
    for (std::size_t g = 0; g < group_count; ++g) {
        if (members[g].empty()) {
            throw Error("group '" + group_names[g] + "' has no samples");
        }
        largest = std::max(largest, members[g].size());
    }
    const auto per_group = batch_size / group_count;
    const auto batch_count = (largest + per_group - 1) / per_group;

    std::vector<std::vector<std::size_t>> order(group_count);
    for (std::size_t g = 0; g < group_count; ++g) {
        order[g] = members[g];
        rng.shuffle(std::span<std::size_t>(order[g]));
        // Top up by sampling with replacement so every batch stays balanced.
        while (order[g].size() < batch_count * per_group) {
            order[g].push_back(members[g][rng.uniform_int(members[g].size())]);
        }
    }
    std::vector<std::vector<std::size_t>> batches(batch_count);
    for (std::size_t b = 0; b < batch_count; ++b) {
        batches[b].reserve(batch_size);
        for (std::size_t g = 0; g < group_count; ++g) {
            for (std::size_t k = 0; k < per_group; ++k) {
                batches[b].push_back(order[g][b * per_group + k]);
            }
        }
    }
    return batches;
}

std::vector<std::vector<std::size_t>> balanced_batches(const Manifest& manifest, Grouping grouping,
                                                       std::size_t batch_size, Rng& rng) {
    std::vector<std::string> names;
    for (std::size_t g = 0; g < manifest.group_count(grouping); ++g) {
        names.push_back(manifest.group_name(g, grouping));
    }
    const auto groups = manifest.groups(grouping);
    return balanced_batches(groups, names, batch_size, rng);
}

std::vector<std::vector<std::size_t>> random_batches(std::size_t sample_count, std::size_t batch_size, Rng& rng) {
    if (batch_size == 0) {
        throw Error("batch size must be positive");
    }
    std::vector<std::size_t> order(sample_count);
    for (std::size_t i = 0; i < sample_count; ++i) {
        order[i] = i;
    }
    rng.shuffle(std::span<std::size_t>(order));
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < sample_count; start += batch_size) {
        const auto end = std::min(sample_count, start + batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

void SynthConfig::validate() const {
    if (groups.empty()) {
        throw Error("synth.groups must not be empty");
    }
    for (const auto& g : groups) {
        if (g.count < 1) {
            throw Error("synth.groups.count must be >= 1 for " + g.race + "/" + g.gender);
        }
        if (!(g.signal >= 0.0) || !(g.noise >= 0.0)) {
            throw Error("synth.groups signal and noise must be >= 0 for " + g.race + "/" + g.gender);
        }
        if (g.race.empty() || g.gender.empty()) {
            throw Error("synth.groups entries need race and gender names");
        }
    }
    if (height < 8 || width < 8) {
        throw Error("synth image size must be at least 8x8");
    }
    if (patch_quadrant < 0 || patch_quadrant > 3) {
        throw Error("synth.patch_quadrant must be 0..3");
    }
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
        throw Error("synth.test_fraction must lie in [0, 1)");
    }
}

Manifest generate_synthetic(const SynthConfig& cfg) {
    cfg.validate();
    Manifest manifest;
    manifest.split = "all";
    {
        std::vector<std::string> races, genders;
        for (const auto& g : cfg.groups) {
            races.push_back(g.race);
            genders.push_back(g.gender);
        }
        manifest.race_vocab = sorted_unique(std::move(races));
        manifest.gender_vocab = sorted_unique(std::move(genders));
    }
    const auto& classes = manifest.vocabulary(cfg.target);
    const auto other = cfg.target == Attribute::race ? Attribute::gender : Attribute::race;
    const auto height = cfg.height;
    const auto width = cfg.width;
    const auto half_h = height / 2;
    const auto half_w = width / 2;
    const std::size_t qy = cfg.patch_quadrant >= 2 ? half_h : 0;
    const std::size_t qx = cfg.patch_quadrant % 2 == 1 ? half_w : 0;
    const std::size_t margin = 2;

    Rng rng(cfg.seed);
    std::size_t serial = 0;
    for (const auto& group : cfg.groups) {
        Sample proto;
        proto.race = index_in(manifest.race_vocab, group.race);
        proto.gender = index_in(manifest.gender_vocab, group.gender);
        const auto label = manifest.label_of(proto, cfg.target);
        const auto context = other == Attribute::race ? proto.race : proto.gender;
        const double theta = std::numbers::pi * static_cast<double>(label) / static_cast<double>(classes.size());
        // Background brightness and texture frequency depend on the non-target attribute.
        const double level = 0.35 + 0.3 * static_cast<double>(context % 2) + 0.05 * static_cast<double>(context / 2);
        const double frequency = static_cast<double>(context + 1);

        for (std::size_t n = 0; n < group.count; ++n) {
            Sample s = proto;
            char id[32];
            std::snprintf(id, sizeof(id), "s%05zu", serial++);
            s.id = id;
            s.path = "images/" + s.id + ".pgm";
            Tensor img({1, height, width});
            for (std::size_t y = 0; y < height; ++y) {
                for (std::size_t x = 0; x < width; ++x) {
                    double v = level + 0.1 * std::cos(2.0 * std::numbers::pi * frequency * static_cast<double>(x) /
                                                      static_cast<double>(width));
                    const bool in_patch = y >= qy + margin && y < qy + half_h - margin && x >= qx + margin &&
                                          x < qx + half_w - margin;
                    if (in_patch) {
                        const double phase = (static_cast<double>(x) * std::cos(theta) +
                                              static_cast<double>(y) * std::sin(theta)) /
                                             4.0;
                        v += group.signal * (std::cos(2.0 * std::numbers::pi * phase) >= 0.0 ? 1.0 : -1.0);
                    }
                    v += group.noise * rng.normal();
                    img.at(0, y, x) = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
                }
            }
            s.pixels = std::move(img);
            manifest.samples.push_back(std::move(s));
        }
    }
    return manifest;
}

std::pair<Manifest, Manifest> stratified_split(const Manifest& manifest, double fraction, Rng& rng) {
    if (!(fraction >= 0.0 && fraction < 1.0)) {
        throw Error("split fraction must lie in [0, 1)");
    }
    Manifest keep = manifest;
    Manifest held = manifest;
    keep.samples.clear();
    held.samples.clear();
    const auto cells = manifest.group_count(Grouping::race_gender);
    std::vector<std::vector<std::size_t>> members(cells);
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        members[manifest.group_of(manifest.samples[i], Grouping::race_gender)].push_back(i);
    }
    std::vector<bool> is_held(manifest.size(), false);
    for (auto& cell : members) {
        rng.shuffle(std::span<std::size_t>(cell));
        const auto take = static_cast<std::size_t>(std::floor(static_cast<double>(cell.size()) * fraction + 0.5));
        for (std::size_t k = 0; k < take && k < cell.size(); ++k) {
            is_held[cell[k]] = true;
        }
    }
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        (is_held[i] ? held : keep).samples.push_back(manifest.samples[i]);
    }
    return {std::move(keep), std::move(held)};
}

void write_dataset(const Manifest& manifest, const std::filesystem::path& dir, const std::string& csv_name) {
    std::filesystem::create_directories(dir / "images");
    for (const auto& s : manifest.samples) {
        const auto target = dir / s.path;
        if (!s.pixels.empty()) {
            write_pnm(target, s.pixels);
        }
    }
    write_manifest(manifest, dir / csv_name);
}

} // namespace debias
