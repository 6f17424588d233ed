#include "debias/model.hpp"

#include "debias/error.hpp"
#include "debias/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace debias {

namespace {

constexpr std::size_t kConvKernel = 3;
constexpr std::size_t kConvPadding = 1;

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& v : t.values()) {
        v = rng.uniform(-bound, bound);
    }
    return t;
}

// He-uniform for layers feeding a ReLU, LeCun-uniform otherwise.
double he_bound(std::size_t fan_in) { return std::sqrt(6.0 / static_cast<double>(fan_in)); }
double lecun_bound(std::size_t fan_in) { return std::sqrt(3.0 / static_cast<double>(fan_in)); }

void accumulate(Tensor& into, const Tensor& value) { into += value; }

} // namespace

std::string to_string(Attribute attribute) { return attribute == Attribute::race ? "race" : "gender"; }

Attribute parse_attribute(const std::string& text) {
    if (text == "race") {
        return Attribute::race;
    }
    if (text == "gender") {
        return Attribute::gender;
    }
    throw Error("unknown attribute '" + text + "' (expected race or gender)");
}

void ModelConfig::validate() const {
    if (channels == 0 || height == 0 || width == 0) {
        throw Error("model input dimensions must be positive");
    }
    if (conv_channels.empty()) {
        throw Error("model.conv_channels must list at least one block");
    }
    if (std::any_of(conv_channels.begin(), conv_channels.end(), [](std::size_t c) { return c == 0; })) {
        throw Error("model.conv_channels entries must be positive");
    }
    const std::size_t reduction = std::size_t{1} << conv_channels.size();
    if (height % reduction != 0 || width % reduction != 0) {
        throw Error("model input " + std::to_string(height) + "x" + std::to_string(width) +
                    " must be divisible by " + std::to_string(reduction) + " for " +
                    std::to_string(conv_channels.size()) + " pooling stages");
    }
    if (embedding_dim < 2) {
        throw Error("model.embedding_dim must be >= 2");
    }
    if (num_classes < 2) {
        throw Error("model.num_classes must be >= 2");
    }
    if (se_reduction == 0 || feature_channels() % se_reduction != 0) {
        throw Error("model.se_reduction must divide the last conv width " + std::to_string(feature_channels()));
    }
    if (spatial_kernel % 2 == 0) {
        throw Error("model.spatial_kernel must be odd");
    }
}

Shape ModelConfig::feature_shape() const {
    const std::size_t reduction = std::size_t{1} << conv_channels.size();
    return {feature_channels(), height / reduction, width / reduction};
}

std::vector<Tensor*> ModelParams::tensors() {
    std::vector<Tensor*> out;
    visit([&out](const std::string&, Tensor& t) { out.push_back(&t); });
    return out;
}

std::vector<const Tensor*> ModelParams::tensors() const {
    std::vector<const Tensor*> out;
    visit([&out](const std::string&, const Tensor& t) { out.push_back(&t); });
    return out;
}

std::vector<std::string> ModelParams::names() const {
    std::vector<std::string> out;
    visit([&out](const std::string& name, const Tensor&) { out.push_back(name); });
    return out;
}

std::size_t ModelParams::parameter_count() const {
    std::size_t total = 0;
    visit([&total](const std::string&, const Tensor& t) { total += t.size(); });
    return total;
}

ModelParams ModelParams::zeros_like() const {
    ModelParams out = *this;
    out.visit([](const std::string&, Tensor& t) { t.fill(0.0); });
    return out;
}

ModelState init_model(const ModelConfig& config, Rng& rng) {
    config.validate();
    ModelState state;
    state.config = config;
    auto& p = state.params;

    std::size_t in = config.channels;
    for (auto out : config.conv_channels) {
        const auto fan_in = in * kConvKernel * kConvKernel;
        p.conv.push_back({uniform_tensor({out, in, kConvKernel, kConvKernel}, he_bound(fan_in), rng),
                          Tensor({out})});
        in = out;
    }
    const auto c = config.feature_channels();
    const auto hidden = config.se_hidden();
    p.se_w1 = uniform_tensor({hidden, c}, he_bound(c), rng);
    p.se_b1 = Tensor({hidden});
    p.se_w2 = uniform_tensor({c, hidden}, lecun_bound(hidden), rng);
    p.se_b2 = Tensor({c});
    const auto k = config.spatial_kernel;
    p.spatial_weight = uniform_tensor({1, 2, k, k}, lecun_bound(2 * k * k), rng);
    p.spatial_bias = Tensor({1});
    p.embedding_weight = uniform_tensor({config.embedding_dim, c}, lecun_bound(c), rng);
    p.embedding_bias = Tensor({config.embedding_dim});
    p.classifier_weight =
        uniform_tensor({config.num_classes, config.embedding_dim}, lecun_bound(config.embedding_dim), rng);
    p.classifier_bias = Tensor({config.num_classes});

    state.first_moment = p.zeros_like();
    state.second_moment = p.zeros_like();
    return state;
}

SeCache se_forward(const Tensor& features, const SeWeights& weights) {
    if (features.rank() != 3) {
        throw Error("SE attention expects CxHxW features, got " + shape_string(features.shape()));
    }
    const auto channels = features.dim(0);
    if (weights.w1.rank() != 2 || weights.w1.dim(1) != channels || weights.w2.rank() != 2 ||
        weights.w2.dim(0) != channels || weights.w2.dim(1) != weights.w1.dim(0) ||
        weights.b1.size() != weights.w1.dim(0) || weights.b2.size() != channels) {
        throw Error("SE weight shapes inconsistent with " + std::to_string(channels) + " channels");
    }
    SeCache cache;
    cache.squeeze = global_average_pool(features);
    cache.hidden_pre = linear(weights.w1, weights.b1, cache.squeeze);
    cache.hidden = relu(cache.hidden_pre);
    cache.gate = linear(weights.w2, weights.b2, cache.hidden);
    for (auto& g : cache.gate.values()) {
        g = sigmoid(g);
    }
    cache.output = features;
    const auto area = features.dim(1) * features.dim(2);
    for (std::size_t ch = 0; ch < channels; ++ch) {
        for (std::size_t p = 0; p < area; ++p) {
            cache.output[ch * area + p] *= cache.gate[ch];
        }
    }
    return cache;
}

SpatialCache spatial_forward(const Tensor& features, const Tensor& weight, const Tensor& bias) {
    if (features.rank() != 3) {
        throw Error("spatial attention expects CxHxW features, got " + shape_string(features.shape()));
    }
    if (weight.rank() != 4 || weight.dim(0) != 1 || weight.dim(1) != 2 || weight.dim(2) != weight.dim(3)) {
        throw Error("spatial attention weight must be 1x2xkxk, got " + shape_string(weight.shape()));
    }
    const auto kernel = weight.dim(2);
    if (kernel % 2 == 0) {
        throw Error("spatial attention kernel size must be odd, got " + std::to_string(kernel));
    }
    const auto channels = features.dim(0);
    const auto height = features.dim(1);
    const auto width = features.dim(2);
    const auto area = height * width;

    SpatialCache cache;
    // Additive local/global fusion: each channel gets its global mean added back.
    const Tensor global = global_average_pool(features);
    cache.fused = features;
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t p = 0; p < area; ++p) {
            cache.fused[c * area + p] += global[c];
        }
    }

    cache.descriptor = Tensor({2, height, width});
    cache.argmax.assign(area, 0);
    for (std::size_t p = 0; p < area; ++p) {
        double total = 0.0;
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < channels; ++c) {
            const double v = cache.fused[c * area + p];
            total += v;
            if (v > best) {
                best = v;
                cache.argmax[p] = c;
            }
        }
        cache.descriptor[p] = total / static_cast<double>(channels);
        cache.descriptor[area + p] = best;
    }

    cache.mask = conv2d(cache.descriptor, weight, bias, (kernel - 1) / 2);
    for (auto& m : cache.mask.values()) {
        m = sigmoid(m);
    }
    cache.output = cache.fused;
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t p = 0; p < area; ++p) {
            cache.output[c * area + p] *= cache.mask[p];
        }
    }
    return cache;
}

SampleCache forward_sample(const ModelState& state, const Tensor& image) {
    const auto& cfg = state.config;
    const auto& p = state.params;
    const Shape expected{cfg.channels, cfg.height, cfg.width};
    if (image.shape() != expected) {
        throw Error("image shape " + shape_string(image.shape()) + " does not match model input " +
                    shape_string(expected));
    }
    if (!image.all_finite()) {
        throw Error("input image contains non-finite values");
    }
    SampleCache cache;
    Tensor x = image;
    for (const auto& layer : p.conv) {
        cache.block_inputs.push_back(x);
        cache.conv_outputs.push_back(conv2d(x, layer.weight, layer.bias, kConvPadding));
        x = avg_pool2(relu(cache.conv_outputs.back()));
    }
    cache.features = x;
    if (cfg.attention) {
        cache.se = se_forward(cache.features, {p.se_w1, p.se_b1, p.se_w2, p.se_b2});
        cache.spatial = spatial_forward(cache.se.output, p.spatial_weight, p.spatial_bias);
        cache.attended = cache.spatial.output;
    } else {
        cache.attended = cache.features;
    }
    cache.pooled = global_average_pool(cache.attended);
    cache.embedding = linear(p.embedding_weight, p.embedding_bias, cache.pooled);
    cache.logits = linear(p.classifier_weight, p.classifier_bias, cache.embedding);
    return cache;
}

ForwardResult forward(const ModelState& state, const Tensor& batch) {
    if (batch.rank() != 4 || batch.dim(0) == 0) {
        throw Error("forward expects a BxCxHxW batch, got " + shape_string(batch.shape()));
    }
    const auto count = batch.dim(0);
    ForwardResult out;
    out.logits = Tensor({count, state.config.num_classes});
    out.embeddings = Tensor({count, state.config.embedding_dim});
    out.caches.reserve(count);
    for (std::size_t b = 0; b < count; ++b) {
        out.caches.push_back(forward_sample(state, batch.slice(b)));
        out.logits.set_slice(b, out.caches.back().logits);
        out.embeddings.set_slice(b, out.caches.back().embedding);
    }
    return out;
}

Tensor head_forward(const ModelState& state, const Tensor& attended) {
    const auto& p = state.params;
    const Tensor embedding = linear(p.embedding_weight, p.embedding_bias, global_average_pool(attended));
    return linear(p.classifier_weight, p.classifier_bias, embedding);
}

Tensor head_backward(const ModelState& state, const SampleCache& cache, const Tensor& grad_logits,
                     const Tensor& grad_embedding, ModelParams* grads) {
    const auto& p = state.params;
    auto cls = linear_backward(grad_logits, p.classifier_weight, cache.embedding);
    Tensor grad_emb = cls.input;
    grad_emb += grad_embedding;
    auto emb = linear_backward(grad_emb, p.embedding_weight, cache.pooled);
    if (grads != nullptr) {
        accumulate(grads->classifier_weight, cls.weight);
        accumulate(grads->classifier_bias, cls.bias);
        accumulate(grads->embedding_weight, emb.weight);
        accumulate(grads->embedding_bias, emb.bias);
    }
    return global_average_pool_backward(emb.input, cache.attended.dim(1), cache.attended.dim(2));
}

namespace {

// Returns the gradient with respect to the spatial block's input.
Tensor spatial_backward(const Tensor& grad_out, const SpatialCache& cache, const Tensor& weight,
                        ModelParams& grads) {
    const auto channels = cache.fused.dim(0);
    const auto height = cache.fused.dim(1);
    const auto width = cache.fused.dim(2);
    const auto area = height * width;
    const auto kernel = weight.dim(2);

    Tensor grad_fused(cache.fused.shape());
    Tensor grad_mask_pre({1, height, width});
    for (std::size_t p = 0; p < area; ++p) {
        double grad_mask = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
            grad_fused[c * area + p] = grad_out[c * area + p] * cache.mask[p];
            grad_mask += grad_out[c * area + p] * cache.fused[c * area + p];
        }
        grad_mask_pre[p] = grad_mask * cache.mask[p] * (1.0 - cache.mask[p]);
    }
    auto conv = conv2d_backward(grad_mask_pre, cache.descriptor, weight, (kernel - 1) / 2);
    accumulate(grads.spatial_weight, conv.kernels);
    accumulate(grads.spatial_bias, conv.bias);
    for (std::size_t p = 0; p < area; ++p) {
        const double share = conv.input[p] / static_cast<double>(channels);
        for (std::size_t c = 0; c < channels; ++c) {
            grad_fused[c * area + p] += share;
        }
        grad_fused[cache.argmax[p] * area + p] += conv.input[area + p];
    }
    // fused = x + mean(x) per channel.
    Tensor grad_in = grad_fused;
    for (std::size_t c = 0; c < channels; ++c) {
        double total = 0.0;
        for (std::size_t p = 0; p < area; ++p) {
            total += grad_fused[c * area + p];
        }
        const double share = total / static_cast<double>(area);
        for (std::size_t p = 0; p < area; ++p) {
            grad_in[c * area + p] += share;
        }
    }
    return grad_in;
}

Tensor se_backward(const Tensor& grad_out, const Tensor& features, const SeCache& cache, const ModelParams& p,
                   ModelParams& grads) {
    const auto channels = features.dim(0);
    const auto area = features.dim(1) * features.dim(2);
    Tensor grad_in(features.shape());
    Tensor grad_gate_pre({channels});
    for (std::size_t c = 0; c < channels; ++c) {
        double grad_gate = 0.0;
        for (std::size_t q = 0; q < area; ++q) {
            grad_in[c * area + q] = grad_out[c * area + q] * cache.gate[c];
            grad_gate += grad_out[c * area + q] * features[c * area + q];
        }
        grad_gate_pre[c] = grad_gate * cache.gate[c] * (1.0 - cache.gate[c]);
    }
    auto second = linear_backward(grad_gate_pre, p.se_w2, cache.hidden);
    accumulate(grads.se_w2, second.weight);
    accumulate(grads.se_b2, second.bias);
    auto first = linear_backward(relu_backward(second.input, cache.hidden_pre), p.se_w1, cache.squeeze);
    accumulate(grads.se_w1, first.weight);
    accumulate(grads.se_b1, first.bias);
    grad_in += global_average_pool_backward(first.input, features.dim(1), features.dim(2));
    return grad_in;
}

} // namespace

Tensor backward_sample(const ModelState& state, const SampleCache& cache, const Tensor& grad_logits,
                       const Tensor& grad_embedding, ModelParams& grads) {
    const auto& p = state.params;
    const Tensor grad_attended = head_backward(state, cache, grad_logits, grad_embedding, &grads);

    Tensor grad = grad_attended;
    if (state.config.attention) {
        grad = spatial_backward(grad, cache.spatial, p.spatial_weight, grads);
        grad = se_backward(grad, cache.features, cache.se, p, grads);
    }
    for (std::size_t i = p.conv.size(); i-- > 0;) {
        const Tensor& pre = cache.conv_outputs[i];
        const Tensor grad_pre = relu_backward(avg_pool2_backward(grad, pre), pre);
        auto conv = conv2d_backward(grad_pre, cache.block_inputs[i], p.conv[i].weight, kConvPadding);
        accumulate(grads.conv[i].weight, conv.kernels);
        accumulate(grads.conv[i].bias, conv.bias);
        grad = std::move(conv.input);
    }
    return grad_attended;
}

BatchGradients compute_gradients(const ModelState& state, const Tensor& batch,
                                 std::span<const std::size_t> labels, std::span<const std::size_t> groups,
                                 const LossConfig& loss_cfg) {
    const auto fwd = forward(state, batch);
    auto lg = loss_gradients(fwd.logits, labels, fwd.embeddings, groups, loss_cfg);
    BatchGradients out;
    out.params = state.params.zeros_like();
    for (std::size_t b = 0; b < fwd.caches.size(); ++b) {
        backward_sample(state, fwd.caches[b], lg.logits.slice(b), lg.embeddings.slice(b), out.params);
    }
    out.breakdown = lg.breakdown;
    out.stats = intra_class_statistics(fwd.embeddings, groups, loss_cfg);
    out.logits = fwd.logits;
    return out;
}

LossBreakdown objective(const ModelState& state, const Tensor& batch, std::span<const std::size_t> labels,
                        std::span<const std::size_t> groups, const LossConfig& loss_cfg,
                        const IntraClassStats& stats) {
    const auto fwd = forward(state, batch);
    return evaluate_objective(fwd.logits, labels, fwd.embeddings, groups, loss_cfg, stats);
}

void apply_gradients(ModelState& state, const ModelParams& grads, double lr, const AdamWConfig& adamw) {
    if (!(lr >= 0.0)) {
        throw Error("learning rate must be non-negative");
    }
    const auto names = state.params.names();
    const auto g = grads.tensors();
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!g[i]->all_finite()) {
            throw Error("non-finite gradient for " + names[i]);
        }
    }
    // Update a copy so a failure leaves the caller's state untouched.
    ModelState next = state;
    ++next.step;
    auto params = next.params.tensors();
    auto m = next.first_moment.tensors();
    auto v = next.second_moment.tensors();
    for (std::size_t i = 0; i < params.size(); ++i) {
        adamw_step(*params[i], *g[i], *m[i], *v[i], next.step, lr, adamw);
        if (!params[i]->all_finite()) {
            throw Error("non-finite parameter " + names[i] + " after training step");
        }
    }
    state = std::move(next);
}

LossBreakdown train_step(ModelState& state, const Tensor& batch, std::span<const std::size_t> labels,
                         std::span<const std::size_t> groups, const LossConfig& loss_cfg, double lr,
                         const AdamWConfig& adamw) {
    auto grads = compute_gradients(state, batch, labels, groups, loss_cfg);
    apply_gradients(state, grads.params, lr, adamw);
    return grads.breakdown;
}

} // namespace debias
