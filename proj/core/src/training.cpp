#include "debias/training.hpp"

#include "debias/error.hpp"
#include "debias/image.hpp"
#include "debias/losses.hpp"

#include <algorithm>

namespace debias {

namespace {

constexpr std::uint64_t kTrainStream = 0x747261696e;  // "train"
constexpr std::uint64_t kSplitStream = 0x73706c6974;  // "split"

std::size_t argmax(std::span<const double> values) {
    return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

} // namespace

Tensor stack_images(const std::vector<Tensor>& images, std::span<const std::size_t> indices) {
    if (indices.empty()) {
        throw Error("cannot stack an empty batch");
    }
    Shape shape = images.at(indices[0]).shape();
    shape.insert(shape.begin(), indices.size());
    Tensor batch(shape);
    for (std::size_t b = 0; b < indices.size(); ++b) {
        batch.set_slice(b, images.at(indices[b]));
    }
    return batch;
}

PreparedSet prepare_set(const Manifest& manifest, const RunConfig& cfg) {
    const auto& vocab = manifest.vocabulary(cfg.model.target);
    if (vocab.size() != cfg.model.num_classes) {
        throw Error("model.num_classes is " + std::to_string(cfg.model.num_classes) + " but the manifest has " +
                    std::to_string(vocab.size()) + " " + to_string(cfg.model.target) + " labels");
    }
    PreparedSet set;
    set.manifest = manifest;
    const Shape expected{cfg.model.channels, cfg.model.height, cfg.model.width};
    for (auto& sample : set.manifest.samples) {
        Tensor img = load_image(manifest, sample);
        if (img.shape() != expected) {
            throw Error("image " + sample.id + " has shape " + shape_string(img.shape()) + ", model expects " +
                        shape_string(expected));
        }
        if (cfg.preprocess.clahe) {
            img = clahe_image(img, cfg.preprocess.clahe_config);
        }
        set.images.push_back(std::move(img));
        set.labels.push_back(manifest.label_of(sample, cfg.model.target));
        set.groups.push_back(manifest.group_of(sample, cfg.loss.grouping));
        sample.pixels = Tensor();
    }
    return set;
}

std::pair<PreparedSet, PreparedSet> load_training_sets(const RunConfig& cfg) {
    const auto root_for = [&](const std::filesystem::path& csv) {
        return cfg.data.image_root.empty() ? csv.parent_path() : cfg.data.image_root;
    };
    if (cfg.data.train.empty()) {
        throw Error("data.train is required");
    }
    Manifest train = load_manifest(cfg.data.train, root_for(cfg.data.train));
    Manifest val;
    if (cfg.data.val.empty()) {
        Rng split_rng = Rng(cfg.seed).fork(kSplitStream);
        auto parts = stratified_split(train, cfg.data.val_fraction, split_rng);
        train = std::move(parts.first);
        val = std::move(parts.second);
        val.split = "val";
    } else {
        val = load_manifest(cfg.data.val, root_for(cfg.data.val), Vocabularies{train.race_vocab, train.gender_vocab});
    }
    if (val.samples.empty()) {
        throw Error("validation set is empty; add samples or raise data.val_fraction");
    }
    return {prepare_set(train, cfg), prepare_set(val, cfg)};
}

Checkpoint TrainingSession::checkpoint() const {
    return {state, scheduler, rng, epoch, history, config_hash(config)};
}

TrainingSession start_training(const RunConfig& cfg) {
    cfg.validate();
    TrainingSession session;
    session.config = cfg;
    Rng init_rng(cfg.seed);
    session.state = init_model(cfg.model, init_rng);
    session.scheduler = make_scheduler(cfg.optimizer.lr, cfg.scheduler.patience, cfg.scheduler.factor,
                                       cfg.scheduler.floor);
    session.rng = Rng(cfg.seed).fork(kTrainStream);
    return session;
}

TrainingSession resume_training(const RunConfig& cfg, Checkpoint checkpoint) {
    cfg.validate();
    if (!(checkpoint.state.config == cfg.model)) {
        throw Error("checkpoint model config does not match the run config");
    }
    TrainingSession session;
    session.config = cfg;
    session.state = std::move(checkpoint.state);
    session.scheduler = checkpoint.scheduler;
    session.rng = checkpoint.rng;
    session.epoch = checkpoint.epoch;
    session.history = std::move(checkpoint.history);
    return session;
}

HistoryRow run_epoch(TrainingSession& session, const PreparedSet& train, const PreparedSet& val) {
    const auto& cfg = session.config;
    const auto batch_size = cfg.optimizer.batch_size;
    std::vector<std::vector<std::size_t>> batches;
    if (cfg.balanced_batches) {
        std::vector<std::string> names;
        for (std::size_t g = 0; g < train.manifest.group_count(cfg.loss.grouping); ++g) {
            names.push_back(train.manifest.group_name(g, cfg.loss.grouping));
        }
        batches = balanced_batches(train.groups, names, batch_size, session.rng);
    } else {
        batches = random_batches(train.images.size(), batch_size, session.rng);
    }

    const double lr = session.scheduler.lr;
    const auto adamw = cfg.optimizer.adamw();
    LossBreakdown sum;
    std::size_t seen = 0;
    std::size_t correct = 0;
    std::vector<std::size_t> labels;
    std::vector<std::size_t> groups;
    for (const auto& indices : batches) {
        Tensor batch = stack_images(train.images, indices);
        if (cfg.preprocess.augment) {
            for (std::size_t b = 0; b < indices.size(); ++b) {
                batch.set_slice(b, augment(batch.slice(b), session.rng, cfg.preprocess.augment_config));
            }
        }
        labels.clear();
        groups.clear();
        for (auto i : indices) {
            labels.push_back(train.labels[i]);
            groups.push_back(train.groups[i]);
        }
        auto grads = compute_gradients(session.state, batch, labels, groups, cfg.loss);
        apply_gradients(session.state, grads.params, lr, adamw);

        const auto n = static_cast<double>(indices.size());
        sum.cross_entropy += grads.breakdown.cross_entropy * n;
        sum.kl_term += grads.breakdown.kl_term * n;
        sum.intra_class += grads.breakdown.intra_class * n;
        sum.total += grads.breakdown.total * n;
        for (std::size_t b = 0; b < indices.size(); ++b) {
            const auto row = grads.logits.data().subspan(b * grads.logits.dim(1), grads.logits.dim(1));
            correct += argmax(row) == labels[b] ? 1 : 0;
        }
        seen += indices.size();
    }

    const auto eval = evaluate_set(session.state, val, cfg.loss, batch_size);
    ++session.epoch;
    const auto total = static_cast<double>(seen);
    HistoryRow row{session.epoch,
                   sum.total / total,
                   sum.cross_entropy / total,
                   sum.kl_term / total,
                   sum.intra_class / total,
                   100.0 * static_cast<double>(correct) / total,
                   eval.loss.total,
                   eval.accuracy,
                   lr};
    session.history.push_back(row);
    session.scheduler = plateau_scheduler_step(session.scheduler, eval.loss.total);
    return row;
}

EvalResult evaluate_set(const ModelState& state, const PreparedSet& set, const LossConfig& loss_cfg,
                        std::size_t batch_size) {
    if (set.images.empty()) {
        throw Error("cannot evaluate an empty set");
    }
    EvalResult out;
    std::size_t correct = 0;
    const auto count = set.images.size();
    const auto grouping = loss_cfg.grouping;
    for (std::size_t start = 0; start < count; start += batch_size) {
        const auto end = std::min(count, start + batch_size);
        std::vector<std::size_t> indices(end - start);
        for (std::size_t i = start; i < end; ++i) {
            indices[i - start] = i;
        }
        const auto fwd = forward(state, stack_images(set.images, indices));
        const std::span<const std::size_t> labels(set.labels.data() + start, end - start);
        const std::span<const std::size_t> groups(set.groups.data() + start, end - start);
        const auto stats = intra_class_statistics(fwd.embeddings, groups, loss_cfg);
        const auto bd = evaluate_objective(fwd.logits, labels, fwd.embeddings, groups, loss_cfg, stats);
        const auto n = static_cast<double>(end - start);
        out.loss.cross_entropy += bd.cross_entropy * n;
        out.loss.kl_term += bd.kl_term * n;
        out.loss.intra_class += bd.intra_class * n;
        out.loss.total += bd.total * n;

        const Tensor probs = softmax_rows(fwd.logits);
        for (std::size_t b = 0; b < indices.size(); ++b) {
            const auto& sample = set.manifest.samples[start + b];
            const auto row = probs.data().subspan(b * probs.dim(1), probs.dim(1));
            PredictionRecord rec;
            rec.id = sample.id;
            rec.group = set.manifest.group_name(set.groups[start + b], grouping);
            rec.truth = labels[b];
            rec.predicted = argmax(row);
            rec.probabilities.assign(row.begin(), row.end());
            correct += rec.truth == rec.predicted ? 1 : 0;
            out.log.records.push_back(std::move(rec));
        }
    }
    const auto total = static_cast<double>(count);
    out.loss.cross_entropy /= total;
    out.loss.kl_term /= total;
    out.loss.intra_class /= total;
    out.loss.total /= total;
    out.accuracy = 100.0 * static_cast<double>(correct) / total;
    return out;
}

} // namespace debias
