// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <debias/checkpoint.hpp>
#include <debias/config.hpp>
#include <debias/data.hpp>
#include <debias/error.hpp>
#include <debias/explain.hpp>
#include <debias/fairness.hpp>
#include <debias/image.hpp>
#include <debias/losses.hpp>
#include <debias/model.hpp>
#include <debias/numerics.hpp>
#include <debias/optim.hpp>
#include <debias/training.hpp>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "published_rows.hpp"
#include "tiny_run.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace debias;
namespace fs = std::filesystem;

// Tolerances and time limits, in criterion order.
constexpr double kGradientTolerance = 1e-4;
constexpr double kKlSelfTolerance = 1e-12;
constexpr double kDegenerateLossTolerance = 1e-12;
constexpr double kIdentityIntraTolerance = 1e-10;
constexpr double kHandCompositionTolerance = 1e-10;
constexpr double kMacroSlackPoints = 2.0;

constexpr double kLimitMetrics = 1.0;
constexpr double kLimitGradients = 120.0;
constexpr double kLimitLosses = 10.0;
constexpr double kLimitBatching = 5.0;
constexpr double kLimitBias = 600.0;
constexpr double kLimitPersistence = 120.0;
constexpr double kLimitClahe = 1.0;
constexpr double kLimitGradCam = 10.0;
constexpr double kLimitScheduler = 1.0;

struct Verdict {
    bool pass = true;
    std::string detail;
};

std::string fmt(const char* pattern, double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), pattern, value);
    return buf;
}

Verdict require(bool ok, std::string detail) { return {ok, std::move(detail)}; }

Tensor random_tensor(const Shape& shape, Rng& rng, double scale = 1.0) {
    Tensor t(shape);
    for (auto& v : t.values()) {
        v = scale * (2.0 * rng.uniform() - 1.0);
    }
    return t;
}

Tensor random_image(const ModelConfig& cfg, Rng& rng) {
    Tensor t({cfg.channels, cfg.height, cfg.width});
    for (auto& v : t.values()) {
        v = rng.uniform();
    }
    return t;
}

// 1: published metric arithmetic.
Verdict table_metrics() {
    double dob_dev = 0.0, ratio_dev = 0.0, overall_dev = 0.0;
    std::string misses;
    for (const auto& row : fixtures::kFairFaceRows) {
        const auto report = report_from_accuracies(fixtures::as_groups(row));
        const double d = std::abs(report.dob - row.dob);
        const double r = std::abs(report.max_min - row.max_min);
        const double o = std::abs(report.macro_overall - row.overall);
        dob_dev = std::max(dob_dev, d);
        ratio_dev = std::max(ratio_dev, r);
        overall_dev = std::max(overall_dev, o);
        if (d > fixtures::kDobTolerance || r > fixtures::kMaxMinTolerance || o > fixtures::kOverallTolerance) {
            misses += std::string(" ") + row.method;
        }
    }
    return require(misses.empty(), "6 rows; max |dDoB| " + fmt("%.4f", dob_dev) + ", max |dMax/Min| " +
                                       fmt("%.4f", ratio_dev) + ", max |dOverall| " + fmt("%.4f", overall_dev) +
                                       (misses.empty() ? "" : "; off:" + misses));
}

// 2: analytic gradients against central differences.
Verdict gradients() {
    double loss_err = 0.0;
    double param_err = 0.0;
    double cam_err = 0.0;
    std::size_t checked = 0;
    std::size_t refined = 0;
    std::string worst;
    for (std::uint64_t seed : {11U, 12U, 13U}) {
        Rng rng(seed);
        const Tensor logits = random_tensor({4, 2}, rng, 2.0);
        const Tensor embeddings = random_tensor({4, 32}, rng);
        const std::vector<std::size_t> labels{0, 1, 1, 0};
        const std::vector<std::size_t> groups{0, 0, 1, 1};
        for (auto mode : {CovarianceMode::pooled, CovarianceMode::identity}) {
            LossConfig cfg;
            cfg.covariance_mode = mode;
            const auto grads = loss_gradients(logits, labels, embeddings, groups, cfg);
            const auto stats = intra_class_statistics(embeddings, groups, cfg);
            const auto by_logits = [&](const Tensor& z) {
                return evaluate_objective(z, labels, embeddings, groups, cfg, stats).total;
            };
            const auto by_embeddings = [&](const Tensor& e) {
                return evaluate_objective(logits, labels, e, groups, cfg, stats).total;
            };
            loss_err = std::max(loss_err, max_relative_error(grads.logits, finite_difference_grad(by_logits, logits),
                                                             1e-8));
            loss_err = std::max(loss_err, max_relative_error(grads.embeddings,
                                                             finite_difference_grad(by_embeddings, embeddings), 1e-8));
        }

        const ModelState state = init_model(ModelConfig{}, rng);
        const Tensor batch = [&] {
            Tensor b({4, 1, 32, 32});
            for (auto& v : b.values()) {
                v = rng.uniform();
            }
            return b;
        }();
        for (const auto& c : testing::check_parameter_gradients(state, batch, labels, groups, LossConfig{},
                                                                1U << 20, rng, kGradientTolerance)) {
            if (c.max_error > param_err) {
                param_err = c.max_error;
                worst = c.name;
            }
            checked += c.checked;
            refined += c.refined;
        }

        const Tensor image = batch.slice(0);
        const Tensor attended = forward_sample(state, image).attended;
        for (std::size_t target = 0; target < state.config.num_classes; ++target) {
            const auto logit = [&](const Tensor& a) { return head_forward(state, a)[target]; };
            const Tensor expected = global_average_pool(finite_difference_grad(logit, attended, 1e-5));
            cam_err = std::max(cam_err, max_relative_error(grad_cam_weights(state, image, target), expected, 1e-6));
        }
    }
    const bool ok = loss_err < kGradientTolerance && param_err < kGradientTolerance && cam_err < kGradientTolerance;
    return require(ok, "seeds 11-13; loss max rel err " + fmt("%.2e", loss_err) + ", parameters " +
                           fmt("%.2e", param_err) + " (worst " + worst + ", " + std::to_string(checked) +
                           " coords, " + std::to_string(refined) + " re-measured at smaller step), Grad-CAM " +
                           fmt("%.2e", cam_err));
}

// 3: loss identities.
Verdict loss_identities() {
    Rng rng(303);
    const auto random_distribution = [&](std::size_t k) {
        Tensor p({k});
        double sum = 0.0;
        for (auto& v : p.values()) {
            v = rng.uniform() + 1e-3;
            sum += v;
        }
        for (auto& v : p.values()) {
            v /= sum;
        }
        return p;
    };
    double min_kl = std::numeric_limits<double>::infinity();
    double self_kl = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const auto k = 2 + static_cast<std::size_t>(rng.uniform_int(9));
        const Tensor p = random_distribution(k);
        const Tensor q = random_distribution(k);
        min_kl = std::min(min_kl, kl_divergence(p, q));
        self_kl = std::max(self_kl, std::abs(kl_divergence(p, p)));
    }

    double degenerate = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor probs = softmax_rows(random_tensor({6, 3}, rng, 3.0));
        std::vector<std::size_t> labels;
        for (int i = 0; i < 6; ++i) {
            labels.push_back(static_cast<std::size_t>(rng.uniform_int(3)));
        }
        LossConfig cfg;
        cfg.epsilon_smooth = 0.0;
        cfg.lambda = rng.uniform(0.0, 2.0);
        degenerate = std::max(degenerate, std::abs(combined_loss(probs, labels, cfg) -
                                                   (1.0 + cfg.lambda) * cross_entropy(probs, labels)));
    }

    double identity_gap = 0.0;
    double singleton_gap = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor e = random_tensor({7, 5}, rng, 2.0);
        const std::vector<std::size_t> groups{0, 1, 0, 2, 1, 1, 3};  // groups 2 and 3 are singletons
        LossConfig cfg;
        cfg.covariance_mode = CovarianceMode::identity;
        std::map<std::size_t, std::vector<std::size_t>> members;
        for (std::size_t i = 0; i < groups.size(); ++i) {
            members[groups[i]].push_back(i);
        }
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& [g, idx] : members) {
            if (idx.size() < 2) {
                continue;
            }
            for (auto i : idx) {
                for (std::size_t d = 0; d < 5; ++d) {
                    double mean = 0.0;
                    for (auto j : idx) {
                        mean += e.at(j, d);
                    }
                    mean /= static_cast<double>(idx.size());
                    sum += (e.at(i, d) - mean) * (e.at(i, d) - mean);
                }
                ++n;
            }
        }
        identity_gap = std::max(identity_gap, std::abs(intra_class_loss(e, groups, cfg) - sum / static_cast<double>(n)));

        // Identity mode: same loss with the singleton rows removed.
        Tensor kept({5, 5});
        std::vector<std::size_t> kept_groups;
        std::size_t row = 0;
        for (std::size_t i = 0; i < groups.size(); ++i) {
            if (members[groups[i]].size() < 2) {
                continue;
            }
            for (std::size_t d = 0; d < 5; ++d) {
                kept.at(row, d) = e.at(i, d);
            }
            kept_groups.push_back(groups[i]);
            ++row;
        }
        cfg.covariance_mode = CovarianceMode::identity;
        singleton_gap = std::max(singleton_gap,
                                 std::abs(intra_class_loss(e, groups, cfg) - intra_class_loss(kept, kept_groups, cfg)));
        // Pooled mode: the covariance still counts singleton rows in its
        // normalizer, so compare their own terms instead: zero gradient.
        cfg.covariance_mode = CovarianceMode::pooled;
        const auto stats = intra_class_statistics(e, groups, cfg);
        const Tensor grad = intra_class_gradient(e, groups, stats);
        for (std::size_t i : {std::size_t{3}, std::size_t{6}}) {
            for (std::size_t d = 0; d < 5; ++d) {
                singleton_gap = std::max(singleton_gap, std::abs(grad.at(i, d)));
            }
        }
    }
    const bool ok = min_kl >= 0.0 && self_kl <= kKlSelfTolerance && degenerate <= kDegenerateLossTolerance &&
                    identity_gap <= kIdentityIntraTolerance && singleton_gap <= kIdentityIntraTolerance;
    return require(ok, "min KL " + fmt("%.3g", min_kl) + " over 1000 pairs, max |KL(P,P)| " + fmt("%.1e", self_kl) +
                           ", eps=0 gap " + fmt("%.1e", degenerate) + ", identity-mode gap " +
                           fmt("%.1e", identity_gap) + ", singleton gap " + fmt("%.1e", singleton_gap));
}

// 4: balanced batches over a full epoch.
Verdict batching() {
    SynthConfig synth;
    synth.groups = {{"a", "f", 53, 0.3, 0.1}, {"a", "m", 17, 0.3, 0.1}, {"b", "f", 31, 0.3, 0.1},
                    {"b", "m", 6, 0.3, 0.1}};
    synth.height = synth.width = 8;
    const Manifest m = generate_synthetic(synth);
    std::vector<std::size_t> groups;
    std::vector<std::string> names;
    for (const auto& s : m.samples) {
        groups.push_back(m.group_of(s, Grouping::race_gender));
    }
    for (std::size_t g = 0; g < m.group_count(Grouping::race_gender); ++g) {
        names.push_back(m.group_name(g, Grouping::race_gender));
    }
    Rng rng(404);
    std::size_t batches_checked = 0;
    std::size_t unbalanced = 0;
    for (std::size_t batch_size : {4U, 8U, 16U}) {
        for (const auto& batch : balanced_batches(groups, names, batch_size, rng)) {
            std::vector<std::size_t> count(4, 0);
            for (auto i : batch) {
                ++count[groups[i]];
            }
            unbalanced += std::all_of(count.begin(), count.end(), [&](std::size_t c) { return c == batch_size / 4; })
                              ? 0
                              : 1;
            ++batches_checked;
        }
    }
    std::string error;
    try {
        balanced_batches(groups, names, 6, rng);
    } catch (const Error& e) {
        error = e.what();
    }
    const std::string expected = "batch size 6 is not divisible by 4 groups";
    return require(unbalanced == 0 && error == expected,
                   "group sizes 53/17/31/6, " + std::to_string(batches_checked) + " batches at sizes 4/8/16, " +
                       std::to_string(unbalanced) + " unbalanced; batch 6 -> \"" + error + "\"");
}

// 5: the mitigation experiment.
struct ArmResult {
    std::vector<double> dob;
    std::vector<double> macro;
};

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Verdict bias_mitigation() {
    constexpr std::size_t kEpochs = 25;
    constexpr int kSeeds = 5;
    ArmResult arms[2];
    for (int arm = 0; arm < 2; ++arm) {
        for (int seed = 0; seed < kSeeds; ++seed) {
            SynthConfig synth;
            // b/m is both rarer and carries a weaker class signal.
            synth.groups = {{"a", "f", 120, 0.3, 0.2}, {"a", "m", 120, 0.3, 0.2}, {"b", "f", 120, 0.3, 0.2},
                            {"b", "m", 40, 0.08, 0.2}};
            synth.seed = 1000 + static_cast<std::uint64_t>(seed);
            const Manifest all = generate_synthetic(synth);
            Rng split(77 + static_cast<std::uint64_t>(seed));
            const auto [train_m, test_m] = stratified_split(all, 0.3, split);

            RunConfig cfg;
            cfg.model.target = Attribute::gender;
            cfg.loss.grouping = Grouping::race_gender;
            cfg.optimizer.lr = 1e-3;
            cfg.optimizer.batch_size = 16;
            cfg.epochs = kEpochs;
            cfg.seed = static_cast<std::uint64_t>(seed);
            const bool full = arm == 1;
            cfg.loss.lambda = full ? 0.5 : 0.0;
            cfg.loss.beta = full ? 0.1 : 0.0;
            cfg.balanced_batches = full;
            cfg.model.attention = full;

            const auto train = prepare_set(train_m, cfg);
            const auto test = prepare_set(test_m, cfg);
            auto session = start_training(cfg);
            for (std::size_t e = 0; e < kEpochs; ++e) {
                run_epoch(session, train, test);
            }
            const auto report = make_report(evaluate_set(session.state, test, cfg.loss, 64).log);
            arms[arm].dob.push_back(report.dob);
            arms[arm].macro.push_back(report.macro_overall);
            std::printf("    %s seed %d: DoB %6.2f  macro %6.2f  [", full ? "full    " : "baseline", seed, report.dob,
                        report.macro_overall);
            for (const auto& [group, acc] : report.groups) {
                std::printf(" %s %.1f", group.c_str(), acc);
            }
            std::printf(" ]\n");
            std::fflush(stdout);
        }
    }
    const double dob_base = median(arms[0].dob);
    const double dob_full = median(arms[1].dob);
    const double macro_base = median(arms[0].macro);
    const double macro_full = median(arms[1].macro);
    return require(dob_full < dob_base && macro_full >= macro_base - kMacroSlackPoints,
                   "median DoB full " + fmt("%.2f", dob_full) + " vs baseline " + fmt("%.2f", dob_base) +
                       ", median macro full " + fmt("%.2f", macro_full) + " vs baseline " + fmt("%.2f", macro_base) +
                       " (5 seeds, 25 epochs)");
}

// 6: determinism and resume.
std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Verdict persistence() {
    const fs::path dir = fs::temp_directory_path() / "debias_acceptance_persistence";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto cfg = testing::tiny_run_config(606);
    const auto run = [&](std::int64_t epochs, const fs::path& out) {
        const auto [train, val] = testing::tiny_sets(cfg);
        auto session = start_training(cfg);
        while (session.epoch < epochs) {
            run_epoch(session, train, val);
        }
        save_checkpoint(session.checkpoint(), out);
    };
    run(4, dir / "a");
    run(4, dir / "b");
    const bool repeat = slurp(dir / "a") == slurp(dir / "b");

    run(2, dir / "k");
    {
        const auto [train, val] = testing::tiny_sets(cfg);
        auto session = resume_training(cfg, load_checkpoint(dir / "k"));
        while (session.epoch < 4) {
            run_epoch(session, train, val);
        }
        save_checkpoint(session.checkpoint(), dir / "resumed");
    }
    const bool resumed = slurp(dir / "a") == slurp(dir / "resumed");
    const auto bytes = fs::file_size(dir / "a");
    fs::remove_all(dir);
    return require(repeat && resumed, std::string("repeat run ") + (repeat ? "identical" : "DIFFERS") +
                                          ", resume at epoch 2 of 4 " + (resumed ? "identical" : "DIFFERS") + " (" +
                                          std::to_string(bytes) + " byte checkpoint)");
}

// 7: CLAHE against independent references.
Tensor from_levels(const std::vector<std::vector<int>>& levels) {
    Tensor t({levels.size(), levels[0].size()});
    for (std::size_t y = 0; y < levels.size(); ++y) {
        for (std::size_t x = 0; x < levels[0].size(); ++x) {
            t.at(y, x) = levels[y][x] / 255.0;
        }
    }
    return t;
}

std::vector<std::vector<int>> to_levels(const Tensor& t) {
    std::vector<std::vector<int>> out(t.dim(0), std::vector<int>(t.dim(1)));
    for (std::size_t y = 0; y < t.dim(0); ++y) {
        for (std::size_t x = 0; x < t.dim(1); ++x) {
            out[y][x] = static_cast<int>(std::lround(t.at(y, x) * 255.0));
        }
    }
    return out;
}

Verdict clahe_oracles() {
    Rng rng(707);
    std::size_t global_mismatch = 0;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::vector<int>> img(12, std::vector<int>(10));
        std::vector<int> flat;
        for (auto& row : img) {
            for (auto& v : row) {
                v = static_cast<int>(rng.uniform_int(256));
                flat.push_back(v);
            }
        }
        const auto expected = oracle::global_equalize(flat);
        std::size_t i = 0;
        for (const auto& row : to_levels(clahe(from_levels(img), ClaheConfig{1e9, 1, 1}))) {
            for (int v : row) {
                global_mismatch += v == expected[i++] ? 0 : 1;
            }
        }
    }
    std::vector<std::vector<int>> ramp(4, std::vector<int>(4));
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) {
            ramp[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)] = 17 * (x + y);
        }
    }
    std::size_t tile_mismatch = 0;
    for (double clip : {2.0, 100.0}) {
        const auto got = to_levels(clahe(from_levels(ramp), ClaheConfig{clip, 2, 2}));
        const auto expected = oracle::brute_force_clahe(ramp, 2, 2, clip);
        for (std::size_t y = 0; y < 4; ++y) {
            for (std::size_t x = 0; x < 4; ++x) {
                tile_mismatch += got[y][x] == expected[y][x] ? 0 : 1;
            }
        }
    }
    return require(global_mismatch == 0 && tile_mismatch == 0,
                   "single tile vs global HE: " + std::to_string(global_mismatch) +
                       " of 2400 pixels differ; 4x4 2x2-tile fixture vs brute force: " +
                       std::to_string(tile_mismatch) + " of 32 differ");
}

// 8: Grad-CAM contracts.
Verdict gradcam_contracts() {
    ModelConfig cfg;
    cfg.height = cfg.width = 16;
    Rng rng(808);

    ModelState zeroed = init_model(cfg, rng);
    for (std::size_t j = 0; j < cfg.embedding_dim; ++j) {
        zeroed.params.classifier_weight.at(0, j) = 0.0;
    }
    const auto zero_map = grad_cam(zeroed, random_image(cfg, rng), 0);
    const bool zero_ok = std::all_of(zero_map.values.values().begin(), zero_map.values.values().end(),
                                     [](double v) { return v == 0.0; });

    std::size_t bad = 0;
    for (int trial = 0; trial < 100; ++trial) {
        ModelConfig c = cfg;
        c.attention = trial % 2 == 0;
        const ModelState state = init_model(c, rng);
        const auto map = grad_cam(state, random_image(c, rng), static_cast<std::size_t>(rng.uniform_int(2)));
        const auto& v = map.values.values();
        const double peak = *std::max_element(v.begin(), v.end());
        const bool nonneg = std::all_of(v.begin(), v.end(), [](double x) { return x >= 0.0; });
        bad += nonneg && (peak == 1.0 || (peak == 0.0 && map.raw_max == 0.0)) ? 0 : 1;
    }

    ModelConfig single = cfg;
    single.conv_channels = {4, 1};
    single.se_reduction = 1;
    ModelState state = init_model(single, rng);
    const Tensor image = random_image(single, rng);
    const Tensor a = forward_sample(state, image).attended;
    double weight = 0.0;
    for (std::size_t j = 0; j < single.embedding_dim; ++j) {
        weight += state.params.classifier_weight.at(0, j) * state.params.embedding_weight.at(j, 0);
    }
    weight /= static_cast<double>(a.size());
    if (weight < 0.0) {
        for (auto& v : state.params.classifier_weight.values()) {
            v = -v;
        }
        weight = -weight;
    }
    const auto map = grad_cam(state, image, 0);
    double peak = 0.0;
    for (double v : a.values()) {
        peak = std::max(peak, weight * v);
    }
    double hand_gap = 0.0;
    for (std::size_t p = 0; p < a.size(); ++p) {
        hand_gap = std::max(hand_gap, std::abs(map.feature_values[p] - std::max(weight * a[p], 0.0) / peak));
    }
    return require(zero_ok && bad == 0 && hand_gap <= kHandCompositionTolerance,
                   std::string("zeroed class row -> ") + (zero_ok ? "all-zero map" : "NONZERO map") + "; " +
                       std::to_string(bad) + " of 100 random maps violate range/normalization; single-channel gap " +
                       fmt("%.1e", hand_gap));
}

// 9: plateau scheduler with the configured defaults.
Verdict scheduler() {
    const SchedulerSettings settings;
    const double lr0 = OptimizerSettings{}.lr;
    SchedulerState s = make_scheduler(lr0, settings.patience, settings.factor, settings.floor);
    s = plateau_scheduler_step(s, 1.0);
    int decays = 0;
    double previous = s.lr;
    for (int epoch = 0; epoch < settings.patience; ++epoch) {
        s = plateau_scheduler_step(s, 1.0);
        decays += s.lr < previous ? 1 : 0;
        previous = s.lr;
    }
    const bool one_decay = decays == 1 && std::abs(s.lr - lr0 * settings.factor) <= 1e-18;
    double lowest = s.lr;
    for (int epoch = 0; epoch < 1000; ++epoch) {
        s = plateau_scheduler_step(s, 1.0);
        lowest = std::min(lowest, s.lr);
    }
    return require(one_decay && lowest >= settings.floor,
                   std::to_string(settings.patience) + " flat epochs -> " + std::to_string(decays) + " decay(s), lr " +
                       fmt("%g", lr0) + " -> " + fmt("%g", lr0 * settings.factor) + "; lowest lr over 1000 epochs " +
                       fmt("%g", lowest));
}

struct Criterion {
    int number;
    const char* name;
    double limit_seconds;
    std::function<Verdict()> run;
};

} // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "published metric arithmetic", kLimitMetrics, table_metrics},
        {2, "gradient certification", kLimitGradients, gradients},
        {3, "loss identities", kLimitLosses, loss_identities},
        {4, "balanced batching", kLimitBatching, batching},
        {5, "desk-scale bias mitigation", kLimitBias, bias_mitigation},
        {6, "determinism and resume", kLimitPersistence, persistence},
        {7, "CLAHE references", kLimitClahe, clahe_oracles},
        {8, "Grad-CAM contracts", kLimitGradCam, gradcam_contracts},
        {9, "scheduler", kLimitScheduler, scheduler},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = c.run();
        } catch (const std::exception& e) {
            v = {false, std::string("threw: ") + e.what()};
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = seconds < c.limit_seconds;
        const bool pass = v.pass && in_time;
        failures += pass ? 0 : 1;
        std::printf("%s criterion %d (%s): %s [%.2f s, limit %.0f s%s]\n", pass ? "PASS" : "FAIL", c.number, c.name,
                    v.detail.c_str(), seconds, c.limit_seconds, in_time ? "" : ", OVER TIME");
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
