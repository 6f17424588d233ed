#include "debias/explain.hpp"

#include "debias/error.hpp"
#include "debias/image.hpp"
#include "debias/numerics.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>

namespace debias {

namespace {

struct CamParts {
    SampleCache cache;
    Tensor weights;
};

CamParts cam_parts(const ModelState& state, const Tensor& image, std::size_t target_class) {
    if (target_class >= state.config.num_classes) {
        throw Error("target class " + std::to_string(target_class) + " out of range for " +
                    std::to_string(state.config.num_classes) + " classes");
    }
    CamParts parts{forward_sample(state, image), {}};
    Tensor seed({state.config.num_classes});
    seed[target_class] = 1.0;
    const Tensor grad = head_backward(state, parts.cache, seed, Tensor({state.config.embedding_dim}), nullptr);
    parts.weights = global_average_pool(grad);
    return parts;
}

} // namespace

Tensor grad_cam_weights(const ModelState& state, const Tensor& image, std::size_t target_class) {
    return cam_parts(state, image, target_class).weights;
}

Heatmap grad_cam(const ModelState& state, const Tensor& image, std::size_t target_class,
                 const std::string& sample_id) {
    const auto parts = cam_parts(state, image, target_class);
    const auto& maps = parts.cache.attended;
    const auto channels = maps.dim(0);
    const auto height = maps.dim(1);
    const auto width = maps.dim(2);
    const auto area = height * width;

    Heatmap out;
    out.sample_id = sample_id;
    out.target_class = target_class;
    out.feature_values = Tensor({height, width});
    for (std::size_t p = 0; p < area; ++p) {
        double v = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
            v += parts.weights[c] * maps[c * area + p];
        }
        out.feature_values[p] = std::max(v, 0.0);
    }
    out.raw_max = *std::max_element(out.feature_values.values().begin(), out.feature_values.values().end());
    if (out.raw_max > 0.0) {
        for (auto& v : out.feature_values.values()) {
            v /= out.raw_max;
        }
    }
    const auto in_h = image.dim(1);
    const auto in_w = image.dim(2);
    out.values = Tensor({in_h, in_w});
    for (std::size_t y = 0; y < in_h; ++y) {
        for (std::size_t x = 0; x < in_w; ++x) {
            out.values.at(y, x) = out.feature_values.at(y * height / in_h, x * width / in_w);
        }
    }
    return out;
}

AttentionMaps attention_maps(const ModelState& state, const Tensor& image) {
    if (!state.config.attention) {
        throw Error("attention blocks are disabled in this model");
    }
    const auto cache = forward_sample(state, image);
    const auto& mask = cache.spatial.mask;
    return {cache.se.gate, mask.reshaped({mask.dim(1), mask.dim(2)})};
}

void write_heatmap(const Heatmap& heatmap, const std::filesystem::path& dir, const std::string& stem) {
    std::filesystem::create_directories(dir);
    write_pnm(dir / (stem + ".pgm"), heatmap.values);
    nlohmann::json sidecar{{"sample_id", heatmap.sample_id},
                           {"class", heatmap.target_class},
                           {"raw_max", heatmap.raw_max}};
    std::ofstream out(dir / (stem + ".json"));
    if (!out) {
        throw Error("cannot write heatmap sidecar in " + dir.string());
    }
    out << sidecar.dump(2) << '\n';
}

} // namespace debias
