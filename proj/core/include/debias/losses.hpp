#pragma once

#include "debias/tensor.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace debias {

enum class CovarianceMode { pooled, identity };
enum class Grouping { race, race_gender };

struct LossConfig {
    double lambda = 0.5;          // weight of the KL regularizer
    double beta = 0.1;            // weight of the intra-class term
    double epsilon_smooth = 0.1;  // label-smoothing mass of the KL target
    double epsilon_cov = 1e-3;    // ridge added to the pooled covariance
    CovarianceMode covariance_mode = CovarianceMode::pooled;
    Grouping grouping = Grouping::race;

    void validate() const;
};

struct LossBreakdown {
    double cross_entropy = 0.0;
    double kl_term = 0.0;      // before lambda
    double intra_class = 0.0;  // before beta
    double total = 0.0;
};

inline constexpr double kProbabilityFloor = 1e-12;

/// KL(P || Q) with 0 log 0 = 0 and Q clamped below at kProbabilityFloor.
double kl_divergence(const Tensor& p, const Tensor& q);

/// Label-smoothed target: 1 - eps on `label`, eps / (K - 1) elsewhere.
Tensor target_distribution(std::size_t label, std::size_t classes, double epsilon);

/// Row-wise softmax of a BxK logit matrix.
Tensor softmax_rows(const Tensor& logits);

/// Mean over rows of -log Q(true class).
double cross_entropy(const Tensor& probs, std::span<const std::size_t> labels);

/// Mean over rows of -log Q(true) + lambda * KL(P_i || Q_i).
double combined_loss(const Tensor& probs, std::span<const std::size_t> labels, const LossConfig& cfg);

/// Batch statistics of the intra-class term. The gradient treats these as
/// constants, so finite-difference checks must reuse the same instance.
struct IntraClassStats {
    std::vector<std::size_t> group_ids;  // distinct groups, ascending
    std::vector<std::size_t> counts;     // members per group
    Tensor means;                        // G x D centroids
    Tensor cholesky;                     // D x D lower factor of S (empty in identity mode)
    std::size_t active_samples = 0;      // N: samples in groups with >= 2 members
};

IntraClassStats intra_class_statistics(const Tensor& embeddings, std::span<const std::size_t> groups,
                                       const LossConfig& cfg);

/// (1/N) sum over multi-member groups of (e_i - mu_c)^T S^-1 (e_i - mu_c).
double intra_class_loss(const Tensor& embeddings, std::span<const std::size_t> groups, const LossConfig& cfg);
double intra_class_loss(const Tensor& embeddings, std::span<const std::size_t> groups,
                        const IntraClassStats& stats);
/// Gradient of the frozen-statistics loss with respect to each embedding.
Tensor intra_class_gradient(const Tensor& embeddings, std::span<const std::size_t> groups,
                            const IntraClassStats& stats);

/// Full objective with the intra-class statistics held fixed.
LossBreakdown evaluate_objective(const Tensor& logits, std::span<const std::size_t> labels,
                                 const Tensor& embeddings, std::span<const std::size_t> groups,
                                 const LossConfig& cfg, const IntraClassStats& stats);

struct LossGradients {
    Tensor logits;
    Tensor embeddings;
    LossBreakdown breakdown;
};

LossGradients loss_gradients(const Tensor& logits, std::span<const std::size_t> labels,
                             const Tensor& embeddings, std::span<const std::size_t> groups,
                             const LossConfig& cfg);

std::string to_string(CovarianceMode mode);
std::string to_string(Grouping grouping);
CovarianceMode parse_covariance_mode(const std::string& text);
Grouping parse_grouping(const std::string& text);

} // namespace debias
