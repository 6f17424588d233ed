#pragma once

#include "debias/model.hpp"
#include "debias/tensor.hpp"

#include <filesystem>
#include <string>

namespace debias {

struct Heatmap {
    Tensor values;          // input resolution, max-normalized
    Tensor feature_values;  // attention-output resolution, max-normalized
    std::string sample_id;
    std::size_t target_class = 0;
    double raw_max = 0.0;   // max before normalization
};

/// Channel weights: spatial mean of d(target logit)/d(attention output).
Tensor grad_cam_weights(const ModelState& state, const Tensor& image, std::size_t target_class);

/// ReLU of the weight-blended attention-output channels, normalized to a
/// maximum of 1 and upsampled nearest-neighbour to the input size.
Heatmap grad_cam(const ModelState& state, const Tensor& image, std::size_t target_class,
                 const std::string& sample_id = {});

struct AttentionMaps {
    Tensor channel_gate;  // C
    Tensor spatial_mask;  // h x w
};

AttentionMaps attention_maps(const ModelState& state, const Tensor& image);

/// Writes <stem>.pgm and a <stem>.json sidecar (sample id, class, raw max).
void write_heatmap(const Heatmap& heatmap, const std::filesystem::path& dir, const std::string& stem);

} // namespace debias
