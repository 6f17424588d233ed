#pragma once

#include "debias/losses.hpp"
#include "debias/optim.hpp"
#include "debias/rng.hpp"
#include "debias/tensor.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace debias {

enum class Attribute { race, gender };

std::string to_string(Attribute attribute);
Attribute parse_attribute(const std::string& text);

struct ModelConfig {
    std::size_t channels = 1;
    std::size_t height = 32;
    std::size_t width = 32;
    std::vector<std::size_t> conv_channels{8, 16};
    std::size_t embedding_dim = 32;
    std::size_t num_classes = 2;
    std::size_t se_reduction = 4;
    std::size_t spatial_kernel = 7;
    Attribute target = Attribute::race;
    bool attention = true;  // false bypasses both attention blocks

    void validate() const;
    /// Shape of the last backbone feature map (input to the attention block).
    Shape feature_shape() const;
    std::size_t feature_channels() const { return conv_channels.back(); }
    std::size_t se_hidden() const { return feature_channels() / se_reduction; }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ConvLayer {
    Tensor weight;  // out x in x 3 x 3
    Tensor bias;

    friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

/// Every trainable tensor of the network. The same structure holds
/// gradients and optimizer moments.
struct ModelParams {
    std::vector<ConvLayer> conv;
    Tensor se_w1, se_b1, se_w2, se_b2;
    Tensor spatial_weight, spatial_bias;  // 1 x 2 x k x k, 1
    Tensor embedding_weight, embedding_bias;
    Tensor classifier_weight, classifier_bias;

    /// Calls f(name, tensor) for every parameter in canonical order.
    template <typename F>
    void visit(F&& f) {
        visit_impl(*this, f);
    }
    template <typename F>
    void visit(F&& f) const {
        visit_impl(*this, f);
    }

    std::vector<Tensor*> tensors();
    std::vector<const Tensor*> tensors() const;
    std::vector<std::string> names() const;
    std::size_t parameter_count() const;
    /// Same layout, every element zero.
    ModelParams zeros_like() const;

    friend bool operator==(const ModelParams&, const ModelParams&) = default;

private:
    template <typename Self, typename F>
    static void visit_impl(Self& self, F& f) {
        for (std::size_t i = 0; i < self.conv.size(); ++i) {
            f("conv" + std::to_string(i) + ".weight", self.conv[i].weight);
            f("conv" + std::to_string(i) + ".bias", self.conv[i].bias);
        }
        f(std::string("se.w1"), self.se_w1);
        f(std::string("se.b1"), self.se_b1);
        f(std::string("se.w2"), self.se_w2);
        f(std::string("se.b2"), self.se_b2);
        f(std::string("spatial.weight"), self.spatial_weight);
        f(std::string("spatial.bias"), self.spatial_bias);
        f(std::string("embedding.weight"), self.embedding_weight);
        f(std::string("embedding.bias"), self.embedding_bias);
        f(std::string("classifier.weight"), self.classifier_weight);
        f(std::string("classifier.bias"), self.classifier_bias);
    }
};

struct ModelState {
    ModelConfig config;
    ModelParams params;
    ModelParams first_moment;
    ModelParams second_moment;
    std::int64_t step = 0;

    friend bool operator==(const ModelState&, const ModelState&) = default;
};

ModelState init_model(const ModelConfig& config, Rng& rng);

struct SeWeights {
    const Tensor& w1;
    const Tensor& b1;
    const Tensor& w2;
    const Tensor& b2;
};

struct SeCache {
    Tensor squeeze;     // C
    Tensor hidden_pre;  // C / r
    Tensor hidden;
    Tensor gate;        // C, each in (0, 1)
    Tensor output;      // C x H x W
};

SeCache se_forward(const Tensor& features, const SeWeights& weights);
inline Tensor se_channel_attention(const Tensor& features, const SeWeights& weights) {
    return se_forward(features, weights).output;
}

struct SpatialCache {
    Tensor fused;        // features + per-channel global mean
    Tensor descriptor;   // 2 x H x W: channel mean, channel max of `fused`
    std::vector<std::size_t> argmax;  // channel of the max per position
    Tensor mask;         // 1 x H x W, each in (0, 1)
    Tensor output;       // fused * mask
};

SpatialCache spatial_forward(const Tensor& features, const Tensor& weight, const Tensor& bias);
inline Tensor spatial_attention(const Tensor& features, const Tensor& weight, const Tensor& bias) {
    return spatial_forward(features, weight, bias).output;
}

/// Intermediates of a single-image forward pass.
struct SampleCache {
    std::vector<Tensor> block_inputs;
    std::vector<Tensor> conv_outputs;  // pre-activation
    Tensor features;                   // input to the attention block
    SeCache se;
    SpatialCache spatial;
    Tensor attended;                   // attention output, the Grad-CAM hook
    Tensor pooled;
    Tensor embedding;
    Tensor logits;
};

SampleCache forward_sample(const ModelState& state, const Tensor& image);

struct ForwardResult {
    Tensor logits;      // B x K
    Tensor embeddings;  // B x D
    std::vector<SampleCache> caches;
};

ForwardResult forward(const ModelState& state, const Tensor& batch);

/// Logits computed from an attention-output map (pool, embed, classify).
Tensor head_forward(const ModelState& state, const Tensor& attended);

/// Accumulates parameter gradients of one sample into `grads` and returns
/// the gradient with respect to the attention output.
Tensor backward_sample(const ModelState& state, const SampleCache& cache, const Tensor& grad_logits,
                       const Tensor& grad_embedding, ModelParams& grads);

/// Gradient of a logit-space upstream signal with respect to the attention output.
Tensor head_backward(const ModelState& state, const SampleCache& cache, const Tensor& grad_logits,
                     const Tensor& grad_embedding, ModelParams* grads);

struct BatchGradients {
    ModelParams params;
    LossBreakdown breakdown;
    IntraClassStats stats;
    Tensor logits;  // B x K from the forward pass
};

BatchGradients compute_gradients(const ModelState& state, const Tensor& batch,
                                 std::span<const std::size_t> labels, std::span<const std::size_t> groups,
                                 const LossConfig& loss_cfg);

/// Objective at the current parameters with the intra-class batch statistics frozen.
LossBreakdown objective(const ModelState& state, const Tensor& batch, std::span<const std::size_t> labels,
                        std::span<const std::size_t> groups, const LossConfig& loss_cfg,
                        const IntraClassStats& stats);

/// AdamW update of every parameter from precomputed gradients; bumps the step counter.
void apply_gradients(ModelState& state, const ModelParams& grads, double lr, const AdamWConfig& adamw = {});

/// Forward, backward and an AdamW update of every parameter.
LossBreakdown train_step(ModelState& state, const Tensor& batch, std::span<const std::size_t> labels,
                         std::span<const std::size_t> groups, const LossConfig& loss_cfg, double lr,
                         const AdamWConfig& adamw = {});

} // namespace debias
