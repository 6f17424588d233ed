#include "debias/losses.hpp"

#include "debias/error.hpp"
#include "debias/numerics.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <map>

namespace debias {

namespace {

using MatrixMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

void check_distribution(const Tensor& v, const char* name) {
    double total = 0.0;
    for (double x : v.values()) {
        if (!(x >= 0.0) || !std::isfinite(x)) {
            throw Error(std::string(name) + " has a negative or non-finite entry");
        }
        total += x;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw Error(std::string(name) + " is not normalized (sum " + std::to_string(total) + ")");
    }
}

void check_labels(const Tensor& probs, std::span<const std::size_t> labels) {
    if (probs.rank() != 2 || probs.dim(0) != labels.size()) {
        throw Error("expected a " + std::to_string(labels.size()) + "xK probability matrix, got " +
                    shape_string(probs.shape()));
    }
    for (auto label : labels) {
        if (label >= probs.dim(1)) {
            throw Error("label " + std::to_string(label) + " out of range for " + std::to_string(probs.dim(1)) +
                        " classes");
        }
    }
}

double kl_unchecked(std::span<const double> p, std::span<const double> q) {
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) {
            total += p[i] * std::log(p[i] / std::max(q[i], kProbabilityFloor));
        }
    }
    return total;
}

// Solves L L^T x = b in place using the stored lower factor.
void cholesky_solve(const Tensor& factor, std::span<double> rhs) {
    const auto dim = static_cast<Eigen::Index>(factor.dim(0));
    MatrixMap lower(factor.data().data(), dim, dim);
    Eigen::Map<Eigen::VectorXd> x(rhs.data(), dim);
    lower.triangularView<Eigen::Lower>().solveInPlace(x);
    lower.transpose().triangularView<Eigen::Upper>().solveInPlace(x);
}

std::size_t group_slot(const IntraClassStats& stats, std::size_t group) {
    auto it = std::lower_bound(stats.group_ids.begin(), stats.group_ids.end(), group);
    if (it == stats.group_ids.end() || *it != group) {
        throw Error("group " + std::to_string(group) + " not present in intra-class statistics");
    }
    return static_cast<std::size_t>(it - stats.group_ids.begin());
}

// Whitened deviation S^-1 (e_i - mu_c) of one sample, written to `out`.
void whitened_deviation(const Tensor& embeddings, std::size_t row, const IntraClassStats& stats,
                        std::size_t slot, std::vector<double>& deviation, std::vector<double>& out) {
    const auto dim = embeddings.dim(1);
    for (std::size_t d = 0; d < dim; ++d) {
        deviation[d] = embeddings.at(row, d) - stats.means.at(slot, d);
    }
    out = deviation;
    if (!stats.cholesky.empty()) {
        cholesky_solve(stats.cholesky, out);
    }
}

} // namespace

void LossConfig::validate() const {
    if (!(lambda >= 0.0)) {
        throw Error("loss.lambda must be >= 0");
    }
    if (!(beta >= 0.0)) {
        throw Error("loss.beta must be >= 0");
    }
    if (!(epsilon_smooth >= 0.0 && epsilon_smooth < 1.0)) {
        throw Error("loss.epsilon_smooth must lie in [0, 1)");
    }
    if (!(epsilon_cov > 0.0)) {
        throw Error("loss.epsilon_cov must be > 0");
    }
}

double kl_divergence(const Tensor& p, const Tensor& q) {
    if (p.size() != q.size() || p.empty()) {
        throw Error("kl_divergence length mismatch: " + std::to_string(p.size()) + " vs " +
                    std::to_string(q.size()));
    }
    check_distribution(p, "P");
    check_distribution(q, "Q");
    return kl_unchecked(p.data(), q.data());
}

Tensor target_distribution(std::size_t label, std::size_t classes, double epsilon) {
    if (classes < 2) {
        throw Error("target_distribution needs at least 2 classes");
    }
    if (label >= classes) {
        throw Error("label " + std::to_string(label) + " out of range for " + std::to_string(classes) + " classes");
    }
    if (!(epsilon >= 0.0 && epsilon < 1.0)) {
        throw Error("smoothing epsilon must lie in [0, 1)");
    }
    Tensor out({classes}, epsilon / static_cast<double>(classes - 1));
    out[label] = 1.0 - epsilon;
    return out;
}

Tensor softmax_rows(const Tensor& logits) {
    if (logits.rank() != 2) {
        throw Error("softmax_rows expects a BxK matrix, got " + shape_string(logits.shape()));
    }
    Tensor out(logits.shape());
    for (std::size_t b = 0; b < logits.dim(0); ++b) {
        out.set_slice(b, softmax(logits.slice(b)));
    }
    return out;
}

double cross_entropy(const Tensor& probs, std::span<const std::size_t> labels) {
    check_labels(probs, labels);
    double total = 0.0;
    for (std::size_t b = 0; b < labels.size(); ++b) {
        total -= std::log(std::max(probs.at(b, labels[b]), kProbabilityFloor));
    }
    return total / static_cast<double>(labels.size());
}

double combined_loss(const Tensor& probs, std::span<const std::size_t> labels, const LossConfig& cfg) {
    check_labels(probs, labels);
    const auto classes = probs.dim(1);
    double total = 0.0;
    for (std::size_t b = 0; b < labels.size(); ++b) {
        const auto row = probs.data().subspan(b * classes, classes);
        const Tensor target = target_distribution(labels[b], classes, cfg.epsilon_smooth);
        total += -std::log(std::max(row[labels[b]], kProbabilityFloor)) + cfg.lambda * kl_unchecked(target.data(), row);
    }
    const double loss = total / static_cast<double>(labels.size());
    if (!std::isfinite(loss)) {
        throw Error("combined loss is not finite");
    }
    return loss;
}

IntraClassStats intra_class_statistics(const Tensor& embeddings, std::span<const std::size_t> groups,
                                       const LossConfig& cfg) {
    if (embeddings.rank() != 2 || embeddings.dim(0) != groups.size() || groups.empty()) {
        throw Error("intra-class loss expects a BxD embedding matrix with B group labels, got " +
                    shape_string(embeddings.shape()) + " and " + std::to_string(groups.size()) + " labels");
    }
    if (!embeddings.all_finite()) {
        throw Error("non-finite loss term: intra_class (embeddings contain non-finite values)");
    }
    const auto batch = embeddings.dim(0);
    const auto dim = embeddings.dim(1);

    std::map<std::size_t, std::size_t> counts;
    for (auto g : groups) {
        ++counts[g];
    }
    IntraClassStats stats;
    for (auto [g, n] : counts) {
        stats.group_ids.push_back(g);
        stats.counts.push_back(n);
        if (n >= 2) {
            stats.active_samples += n;
        }
    }
    stats.means = Tensor({stats.group_ids.size(), dim});
    for (std::size_t b = 0; b < batch; ++b) {
        const auto slot = group_slot(stats, groups[b]);
        for (std::size_t d = 0; d < dim; ++d) {
            stats.means.at(slot, d) += embeddings.at(b, d);
        }
    }
    for (std::size_t s = 0; s < stats.group_ids.size(); ++s) {
        for (std::size_t d = 0; d < dim; ++d) {
            stats.means.at(s, d) /= static_cast<double>(stats.counts[s]);
        }
    }

    if (cfg.covariance_mode == CovarianceMode::pooled) {
        MatrixMap e(embeddings.data().data(), static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(dim));
        const Eigen::RowVectorXd mean = e.colwise().mean();
        const Eigen::MatrixXd centered = e.rowwise() - mean;
        Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(batch);
        cov.diagonal().array() += cfg.epsilon_cov;
        Eigen::LLT<Eigen::MatrixXd> llt(cov);
        if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-14)) {
            throw Error("embedding covariance is numerically singular even after the ridge");
        }
        stats.cholesky = Tensor({dim, dim});
        const Eigen::MatrixXd lower = llt.matrixL();
        for (std::size_t r = 0; r < dim; ++r) {
            for (std::size_t c = 0; c < dim; ++c) {
                stats.cholesky.at(r, c) = lower(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
            }
        }
    }
    return stats;
}

double intra_class_loss(const Tensor& embeddings, std::span<const std::size_t> groups, const LossConfig& cfg) {
    return intra_class_loss(embeddings, groups, intra_class_statistics(embeddings, groups, cfg));
}

double intra_class_loss(const Tensor& embeddings, std::span<const std::size_t> groups,
                        const IntraClassStats& stats) {
    if (stats.active_samples == 0) {
        return 0.0;
    }
    const auto dim = embeddings.dim(1);
    std::vector<double> deviation(dim);
    std::vector<double> whitened(dim);
    double total = 0.0;
    for (std::size_t b = 0; b < groups.size(); ++b) {
        const auto slot = group_slot(stats, groups[b]);
        if (stats.counts[slot] < 2) {
            continue;
        }
        whitened_deviation(embeddings, b, stats, slot, deviation, whitened);
        for (std::size_t d = 0; d < dim; ++d) {
            total += deviation[d] * whitened[d];
        }
    }
    return total / static_cast<double>(stats.active_samples);
}

Tensor intra_class_gradient(const Tensor& embeddings, std::span<const std::size_t> groups,
                            const IntraClassStats& stats) {
    Tensor grad(embeddings.shape());
    if (stats.active_samples == 0) {
        return grad;
    }
    const auto dim = embeddings.dim(1);
    const double scale = 2.0 / static_cast<double>(stats.active_samples);
    std::vector<double> deviation(dim);
    std::vector<double> whitened(dim);
    for (std::size_t b = 0; b < groups.size(); ++b) {
        const auto slot = group_slot(stats, groups[b]);
        if (stats.counts[slot] < 2) {
            continue;
        }
        whitened_deviation(embeddings, b, stats, slot, deviation, whitened);
        for (std::size_t d = 0; d < dim; ++d) {
            grad.at(b, d) = scale * whitened[d];
        }
    }
    return grad;
}

LossBreakdown evaluate_objective(const Tensor& logits, std::span<const std::size_t> labels,
                                 const Tensor& embeddings, std::span<const std::size_t> groups,
                                 const LossConfig& cfg, const IntraClassStats& stats) {
    const Tensor probs = softmax_rows(logits);
    check_labels(probs, labels);
    const auto classes = probs.dim(1);
    LossBreakdown out;
    for (std::size_t b = 0; b < labels.size(); ++b) {
        const auto row = probs.data().subspan(b * classes, classes);
        const Tensor target = target_distribution(labels[b], classes, cfg.epsilon_smooth);
        out.cross_entropy -= std::log(std::max(row[labels[b]], kProbabilityFloor));
        out.kl_term += kl_unchecked(target.data(), row);
    }
    const auto batch = static_cast<double>(labels.size());
    out.cross_entropy /= batch;
    out.kl_term /= batch;
    out.intra_class = intra_class_loss(embeddings, groups, stats);
    out.total = out.cross_entropy + cfg.lambda * out.kl_term + cfg.beta * out.intra_class;
    return out;
}

LossGradients loss_gradients(const Tensor& logits, std::span<const std::size_t> labels,
                             const Tensor& embeddings, std::span<const std::size_t> groups,
                             const LossConfig& cfg) {
    if (logits.rank() != 2 || embeddings.rank() != 2 || logits.dim(0) != embeddings.dim(0)) {
        throw Error("loss_gradients batch mismatch: logits " + shape_string(logits.shape()) + ", embeddings " +
                    shape_string(embeddings.shape()));
    }
    const auto stats = intra_class_statistics(embeddings, groups, cfg);
    LossGradients out;
    out.breakdown = evaluate_objective(logits, labels, embeddings, groups, cfg, stats);

    const Tensor probs = softmax_rows(logits);
    const auto batch = logits.dim(0);
    const auto classes = logits.dim(1);
    out.logits = Tensor(logits.shape());
    for (std::size_t b = 0; b < batch; ++b) {
        const Tensor target = target_distribution(labels[b], classes, cfg.epsilon_smooth);
        for (std::size_t k = 0; k < classes; ++k) {
            const double q = probs.at(b, k);
            const double onehot = k == labels[b] ? 1.0 : 0.0;
            out.logits.at(b, k) = ((q - onehot) + cfg.lambda * (q - target[k])) / static_cast<double>(batch);
        }
    }

    if (cfg.beta == 0.0) {
        out.embeddings = Tensor(embeddings.shape());
    } else {
        out.embeddings = intra_class_gradient(embeddings, groups, stats) * cfg.beta;
    }

    const auto& bd = out.breakdown;
    if (!std::isfinite(bd.cross_entropy)) {
        throw Error("non-finite loss term: cross_entropy");
    }
    if (!std::isfinite(bd.kl_term)) {
        throw Error("non-finite loss term: kl_term");
    }
    if (!std::isfinite(bd.intra_class)) {
        throw Error("non-finite loss term: intra_class");
    }
    if (!out.logits.all_finite() || !out.embeddings.all_finite()) {
        throw Error("non-finite loss gradient");
    }
    return out;
}

std::string to_string(CovarianceMode mode) { return mode == CovarianceMode::pooled ? "pooled" : "identity"; }

std::string to_string(Grouping grouping) { return grouping == Grouping::race ? "race" : "race_gender"; }

CovarianceMode parse_covariance_mode(const std::string& text) {
    if (text == "pooled") {
        return CovarianceMode::pooled;
    }
    if (text == "identity") {
        return CovarianceMode::identity;
    }
    throw Error("unknown covariance_mode '" + text + "' (expected pooled or identity)");
}

Grouping parse_grouping(const std::string& text) {
    if (text == "race") {
        return Grouping::race;
    }
    if (text == "race_gender" || text == "race×gender" || text == "race-gender") {
        return Grouping::race_gender;
    }
    throw Error("unknown grouping '" + text + "' (expected race or race_gender)");
}

} // namespace debias
