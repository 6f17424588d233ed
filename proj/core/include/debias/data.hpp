#pragma once

#include "debias/losses.hpp"
#include "debias/model.hpp"
#include "debias/rng.hpp"
#include "debias/tensor.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace debias {

struct Sample {
    std::string id;
    std::string path;     // relative to the manifest's image root
    std::size_t race = 0;    // index into Manifest::race_vocab
    std::size_t gender = 0;  // index into Manifest::gender_vocab
    Tensor pixels;        // CxHxW in [0, 1]; empty until loaded

    friend bool operator==(const Sample&, const Sample&) = default;
};

struct Manifest {
    std::vector<Sample> samples;
    std::vector<std::string> race_vocab;
    std::vector<std::string> gender_vocab;
    std::string split;
    std::filesystem::path image_root;

    std::size_t size() const noexcept { return samples.size(); }
    std::size_t group_count(Grouping grouping) const;
    std::size_t group_of(const Sample& sample, Grouping grouping) const;
    std::string group_name(std::size_t group, Grouping grouping) const;
    std::vector<std::size_t> groups(Grouping grouping) const;
    std::size_t label_of(const Sample& sample, Attribute target) const;
    const std::vector<std::string>& vocabulary(Attribute attribute) const;

    friend bool operator==(const Manifest& a, const Manifest& b) {
        return a.samples == b.samples && a.race_vocab == b.race_vocab && a.gender_vocab == b.gender_vocab;
    }
};

struct Vocabularies {
    std::vector<std::string> race;
    std::vector<std::string> gender;
};

/// Parses a CSV with columns id,path,race,gender (any order, extra columns
/// ignored). Vocabularies are inferred and sorted unless `fixed` is given,
/// in which case labels outside it are rejected.
Manifest load_manifest(const std::filesystem::path& csv, const std::filesystem::path& image_root,
                       const std::optional<Vocabularies>& fixed = std::nullopt);

void write_manifest(const Manifest& manifest, const std::filesystem::path& csv);

/// Pixels of a sample, reading from disk when not held in memory.
Tensor load_image(const Manifest& manifest, const Sample& sample);

/// Index batches with exactly batch_size / G members of every group. Groups
/// are shuffled per call; smaller groups are topped up by drawing with
/// replacement until the largest group has been emitted once.
std::vector<std::vector<std::size_t>> balanced_batches(std::span<const std::size_t> sample_groups,
                                                       std::span<const std::string> group_names,
                                                       std::size_t batch_size, Rng& rng);
std::vector<std::vector<std::size_t>> balanced_batches(const Manifest& manifest, Grouping grouping,
                                                       std::size_t batch_size, Rng& rng);

/// Plain shuffled batching; the final batch may be short.
std::vector<std::vector<std::size_t>> random_batches(std::size_t sample_count, std::size_t batch_size, Rng& rng);

struct SynthGroup {
    std::string race;
    std::string gender;
    std::size_t count = 1;
    double signal = 0.3;  // contrast of the class pattern
    double noise = 0.1;   // std of additive Gaussian noise
};

struct SynthConfig {
    std::vector<SynthGroup> groups;
    std::size_t height = 32;
    std::size_t width = 32;
    Attribute target = Attribute::gender;
    int patch_quadrant = 0;  // 0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right
    double test_fraction = 0.2;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Builds a labelled dataset whose class evidence is a striped patch with
/// group-specific contrast over a background texture keyed by the
/// non-target attribute.
Manifest generate_synthetic(const SynthConfig& cfg);

/// Splits off `fraction` of every race x gender cell into the second manifest.
std::pair<Manifest, Manifest> stratified_split(const Manifest& manifest, double fraction, Rng& rng);

/// Writes every sample's pixels as PGM/PPM under dir/images and the CSV to dir/<name>.
void write_dataset(const Manifest& manifest, const std::filesystem::path& dir, const std::string& csv_name);

} // namespace debias
