#include <debias/data.hpp>
#include <debias/error.hpp>

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

namespace debias {
namespace {

namespace fs = std::filesystem;

class TempDir {
public:
    explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / name) {
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

void write_file(const fs::path& path, const std::string& text) { std::ofstream(path) << text; }

TEST(LoadManifest, WellFormedCsv) {
    TempDir dir("debias_manifest_ok");
    write_file(dir.path() / "m.csv",
               "id,path,race,gender\n"
               "a,img/a.pgm,white,female\n"
               "b,img/b.pgm,black,male\n"
               "c,img/c.pgm,asian,female\n"
               "d,img/d.pgm,white,male\n");
    const Manifest m = load_manifest(dir.path() / "m.csv", dir.path());
    ASSERT_EQ(m.size(), 4U);
    EXPECT_EQ(m.race_vocab, (std::vector<std::string>{"asian", "black", "white"}));
    EXPECT_EQ(m.gender_vocab, (std::vector<std::string>{"female", "male"}));
    EXPECT_EQ(m.samples[1].id, "b");
    EXPECT_EQ(m.samples[1].race, 1U);
    EXPECT_EQ(m.samples[1].gender, 1U);
    EXPECT_EQ(m.group_name(m.group_of(m.samples[0], Grouping::race_gender), Grouping::race_gender),
              "white/female");
    EXPECT_EQ(m.group_name(m.group_of(m.samples[0], Grouping::race), Grouping::race), "white");
}

TEST(LoadManifest, ColumnOrderAndExtrasDoNotMatter) {
    TempDir dir("debias_manifest_order");
    write_file(dir.path() / "m.csv", "gender,age,race,path,id\nmale,30,x,p.pgm,one\n");
    const Manifest m = load_manifest(dir.path() / "m.csv", dir.path());
    EXPECT_EQ(m.samples[0].id, "one");
    EXPECT_EQ(m.samples[0].path, "p.pgm");
}

TEST(LoadManifest, MissingColumnNamed) {
    TempDir dir("debias_manifest_missing");
    write_file(dir.path() / "m.csv", "id,path,gender\na,a.pgm,male\n");
    try {
        load_manifest(dir.path() / "m.csv", dir.path());
        FAIL();
    } catch (const Error& e) {
        EXPECT_STREQ(e.what(), "missing column: race");
    }
}

TEST(LoadManifest, DuplicateIdNamed) {
    TempDir dir("debias_manifest_dup");
    write_file(dir.path() / "m.csv", "id,path,race,gender\nx1,a.pgm,r,g\nx1,b.pgm,r,g\n");
    try {
        load_manifest(dir.path() / "m.csv", dir.path());
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("'x1'"), std::string::npos) << e.what();
    }
}

TEST(LoadManifest, EmptyLabelGivesRowNumber) {
    TempDir dir("debias_manifest_empty");
    write_file(dir.path() / "m.csv", "id,path,race,gender\na,a.pgm,r,g\nb,b.pgm,,g\n");
    try {
        load_manifest(dir.path() / "m.csv", dir.path());
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos) << e.what();
    }
}

TEST(LoadManifest, UnknownLabelAgainstFixedVocabulary) {
    TempDir dir("debias_manifest_unknown");
    write_file(dir.path() / "m.csv", "id,path,race,gender\na,a.pgm,martian,g\n");
    EXPECT_THROW(load_manifest(dir.path() / "m.csv", dir.path(), Vocabularies{{"r"}, {"g"}}), Error);
}

TEST(LoadManifest, UnreadableImageNamesPath) {
    TempDir dir("debias_manifest_noimg");
    write_file(dir.path() / "m.csv", "id,path,race,gender\na,nowhere.pgm,r,g\n");
    const Manifest m = load_manifest(dir.path() / "m.csv", dir.path());
    try {
        load_image(m, m.samples[0]);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("nowhere.pgm"), std::string::npos) << e.what();
    }
}

TEST(LoadManifest, SerializeRoundTrip) {
    TempDir dir("debias_manifest_rt");
    SynthConfig cfg;
    cfg.groups = {{"b", "m", 3, 0.3, 0.1}, {"a", "f", 2, 0.3, 0.1}};
    cfg.height = cfg.width = 8;
    Manifest m = generate_synthetic(cfg);
    for (auto& s : m.samples) {
        s.pixels = Tensor();
    }
    write_manifest(m, dir.path() / "m.csv");
    const Manifest back = load_manifest(dir.path() / "m.csv", dir.path());
    EXPECT_EQ(back, m);
}

TEST(BalancedBatches, EqualGroupsEnumeratedOverEpoch) {
    std::vector<std::size_t> groups;
    for (std::size_t g = 0; g < 4; ++g) {
        groups.insert(groups.end(), 16, g);
    }
    const std::vector<std::string> names{"a", "b", "c", "d"};
    Rng rng(41);
    const auto batches = balanced_batches(groups, names, 8, rng);
    EXPECT_EQ(batches.size(), 8U);
    std::multiset<std::size_t> seen;
    for (const auto& batch : batches) {
        ASSERT_EQ(batch.size(), 8U);
        std::map<std::size_t, std::size_t> count;
        for (auto i : batch) {
            ++count[groups[i]];
            seen.insert(i);
        }
        for (std::size_t g = 0; g < 4; ++g) {
            EXPECT_EQ(count[g], 2U);
        }
    }
    // Equal sizes: every sample exactly once.
    for (std::size_t i = 0; i < 64; ++i) {
        EXPECT_EQ(seen.count(i), 1U);
    }
}

TEST(BalancedBatches, UnequalGroupsStayBalanced) {
    std::vector<std::size_t> groups;
    const std::size_t sizes[4] = {40, 7, 19, 3};
    for (std::size_t g = 0; g < 4; ++g) {
        groups.insert(groups.end(), sizes[g], g);
    }
    const std::vector<std::string> names{"a", "b", "c", "d"};
    Rng rng(42);
    const auto batches = balanced_batches(groups, names, 12, rng);
    EXPECT_EQ(batches.size(), 14U);  // ceil(40 / 3)
    std::set<std::size_t> seen;
    for (const auto& batch : batches) {
        std::map<std::size_t, std::size_t> count;
        for (auto i : batch) {
            ++count[groups[i]];
            seen.insert(i);
        }
        for (std::size_t g = 0; g < 4; ++g) {
            EXPECT_EQ(count[g], 3U);
        }
    }
    EXPECT_EQ(seen.size(), groups.size());  // nobody left out
}

TEST(BalancedBatches, IndivisibleBatchFails) {
    const std::vector<std::size_t> groups{0, 1, 2, 3};
    const std::vector<std::string> names{"a", "b", "c", "d"};
    Rng rng(1);
    try {
        balanced_batches(groups, names, 6, rng);
        FAIL();
    } catch (const Error& e) {
        EXPECT_STREQ(e.what(), "batch size 6 is not divisible by 4 groups");
    }
}

TEST(BalancedBatches, EmptyGroupNamed) {
    const std::vector<std::size_t> groups{0, 0, 2};
    const std::vector<std::string> names{"a", "b", "c"};
    Rng rng(1);
    try {
        balanced_batches(groups, names, 3, rng);
        FAIL();
    } catch (const Error& e) {
        EXPECT_STREQ(e.what(), "group 'b' has no samples");
    }
}

TEST(BalancedBatches, SingleGroupIsShuffledBatching) {
    const std::vector<std::size_t> groups(20, 0);
    const std::vector<std::string> names{"only"};
    Rng rng(43);
    const auto batches = balanced_batches(groups, names, 5, rng);
    ASSERT_EQ(batches.size(), 4U);
    std::vector<std::size_t> flat;
    for (const auto& b : batches) {
        EXPECT_EQ(b.size(), 5U);
        flat.insert(flat.end(), b.begin(), b.end());
    }
    EXPECT_EQ(std::set<std::size_t>(flat.begin(), flat.end()).size(), 20U);
    std::vector<std::size_t> identity(20);
    std::iota(identity.begin(), identity.end(), 0);
    EXPECT_NE(flat, identity);
}

TEST(BalancedBatches, DeterministicPerSeed) {
    std::vector<std::size_t> groups;
    for (std::size_t i = 0; i < 50; ++i) {
        groups.push_back(i % 3 == 0 ? 0 : 1);
    }
    const std::vector<std::string> names{"a", "b"};
    Rng a(5), b(5);
    EXPECT_EQ(balanced_batches(groups, names, 4, a), balanced_batches(groups, names, 4, b));
}

TEST(RandomBatches, CoversEverySampleOnce) {
    Rng rng(44);
    const auto batches = random_batches(23, 5, rng);
    ASSERT_EQ(batches.size(), 5U);
    EXPECT_EQ(batches.back().size(), 3U);
    std::set<std::size_t> seen;
    for (const auto& b : batches) {
        seen.insert(b.begin(), b.end());
    }
    EXPECT_EQ(seen.size(), 23U);
}

SynthConfig four_groups(double weak_signal, double noise, std::size_t count) {
    SynthConfig cfg;
    cfg.groups = {{"a", "f", count, 0.4, noise},
                  {"a", "m", count, 0.4, noise},
                  {"b", "f", count, weak_signal, noise},
                  {"b", "m", count, weak_signal, noise}};
    cfg.seed = 99;
    return cfg;
}

TEST(Synthetic, SameSeedIsBitwiseIdentical) {
    const auto cfg = four_groups(0.2, 0.1, 5);
    EXPECT_EQ(generate_synthetic(cfg), generate_synthetic(cfg));
    auto other = cfg;
    other.seed = 100;
    EXPECT_FALSE(generate_synthetic(cfg) == generate_synthetic(other));
}

TEST(Synthetic, CountsAndLabelsExact) {
    SynthConfig cfg = four_groups(0.2, 0.1, 1);
    cfg.groups[0].count = 7;
    cfg.groups[3].count = 2;
    const Manifest m = generate_synthetic(cfg);
    std::map<std::string, std::size_t> counts;
    for (const auto& s : m.samples) {
        ++counts[m.group_name(m.group_of(s, Grouping::race_gender), Grouping::race_gender)];
        for (double v : s.pixels.values()) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
    EXPECT_EQ(counts["a/f"], 7U);
    EXPECT_EQ(counts["a/m"], 1U);
    EXPECT_EQ(counts["b/f"], 1U);
    EXPECT_EQ(counts["b/m"], 2U);
    EXPECT_EQ(m.size(), 11U);
}

TEST(Synthetic, InvalidConfigRejected) {
    SynthConfig cfg = four_groups(0.2, 0.1, 3);
    cfg.groups[1].signal = -0.1;
    EXPECT_THROW(generate_synthetic(cfg), Error);
    cfg = four_groups(0.2, 0.1, 3);
    cfg.groups[0].count = 0;
    EXPECT_THROW(generate_synthetic(cfg), Error);
    cfg = four_groups(0.2, 0.1, 3);
    cfg.groups.clear();
    EXPECT_THROW(generate_synthetic(cfg), Error);
}

struct CentroidAccuracy {
    std::map<std::string, double> by_group;
};

CentroidAccuracy nearest_centroid_accuracy(const Manifest& all) {
    Rng rng(3);
    const auto [train, test] = stratified_split(all, 0.3, rng);
    std::vector<std::vector<double>> xs, ts;
    std::vector<std::size_t> ys;
    for (const auto& s : train.samples) {
        xs.push_back(s.pixels.values());
        ys.push_back(train.label_of(s, Attribute::gender));
    }
    for (const auto& s : test.samples) {
        ts.push_back(s.pixels.values());
    }
    const auto pred = oracle::nearest_centroid(xs, ys, ts);
    std::map<std::string, std::pair<double, double>> tally;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const auto& s = test.samples[i];
        auto& [correct, total] = tally[test.group_name(test.group_of(s, Grouping::race_gender), Grouping::race_gender)];
        correct += pred[i] == test.label_of(s, Attribute::gender) ? 1.0 : 0.0;
        total += 1.0;
    }
    CentroidAccuracy out;
    for (const auto& [g, ct] : tally) {
        out.by_group[g] = ct.first / ct.second;
    }
    return out;
}

TEST(Synthetic, NoiselessHighSignalIsSeparable) {
    const auto acc = nearest_centroid_accuracy(generate_synthetic(four_groups(0.4, 0.0, 20)));
    for (const auto& [g, a] : acc.by_group) {
        EXPECT_EQ(a, 1.0) << g;
    }
}

TEST(Synthetic, LowerSignalNeverHelpsThatGroup) {
    double previous = 2.0;
    for (double signal : {0.3, 0.12, 0.04}) {
        const auto acc = nearest_centroid_accuracy(generate_synthetic(four_groups(signal, 0.35, 150)));
        const double weak = (acc.by_group.at("b/f") + acc.by_group.at("b/m")) / 2.0;
        EXPECT_LE(weak, previous) << "signal " << signal;
        previous = weak;
    }
    EXPECT_LT(previous, 0.9);
}

TEST(Synthetic, StratifiedSplitKeepsCellProportions) {
    SynthConfig cfg = four_groups(0.2, 0.1, 10);
    cfg.groups[0].count = 30;
    const Manifest m = generate_synthetic(cfg);
    Rng rng(4);
    const auto [keep, held] = stratified_split(m, 0.2, rng);
    EXPECT_EQ(keep.size() + held.size(), m.size());
    std::map<std::size_t, std::size_t> held_counts;
    for (const auto& s : held.samples) {
        ++held_counts[m.group_of(s, Grouping::race_gender)];
    }
    EXPECT_EQ(held_counts[0], 6U);
    EXPECT_EQ(held_counts[1], 2U);
    EXPECT_EQ(held_counts[2], 2U);
    EXPECT_EQ(held_counts[3], 2U);
}

TEST(Synthetic, DatasetOnDiskReloads) {
    TempDir dir("debias_synth_disk");
    SynthConfig cfg = four_groups(0.2, 0.1, 2);
    cfg.height = cfg.width = 8;
    const Manifest m = generate_synthetic(cfg);
    write_dataset(m, dir.path(), "all.csv");
    const Manifest back = load_manifest(dir.path() / "all.csv", dir.path());
    ASSERT_EQ(back.size(), m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
        EXPECT_EQ(load_image(back, back.samples[i]), m.samples[i].pixels);
    }
}

} // namespace
} // namespace debias
