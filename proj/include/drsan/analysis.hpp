#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "drsan/image.hpp"
#include "drsan/model.hpp"

namespace drsan {

struct AlphaMap {
    int channels = 0, h = 0, w = 0;
    std::vector<float> values;  // channel-major, all strictly inside (0, 1)
};

// Everything observable about one image's pass through the network:
// the per-group coefficient vectors and the per-block attention maps.
// Extraction is a plain forward pass plus copies — it never perturbs the
// values the network computes.
struct AttentionTrace {
    int drags = 0;
    int blocks_per_drag = 0;
    int coeff_len = 0;
    std::vector<std::vector<float>> coeffs;  // [group][coeff_len]; empty unless dra mode
    std::vector<AlphaMap> alphas;            // [group * blocks + block]; empty unless rsa
};

AttentionTrace extract_trace(const Model& model, const Image& lr);

// Counts of one attention map's values over `bins` equal cells of [0, 1].
// `block` indexes alphas (group-major). Counts sum to the map size.
std::vector<std::int64_t> attention_histogram(const AttentionTrace& trace, int block,
                                              int bins);

// Channel-mean of one attention map as a single-channel image: first the raw
// values (already in (0, 1)), then a min-max rescaled copy for display (all
// zeros when the map is constant).
std::pair<Image, Image> attention_spatial_map(const AttentionTrace& trace, int block);

struct TransplantResult {
    Image sr;        // target restored under the donor's coefficients
    Image diff_map;  // |Y(transplanted) - Y(normal)|, single channel
};

// Runs the donor image through the network, captures its per-group
// coefficient vectors, and re-runs the target with those vectors forced in
// place of its own. With donor == target the forced pass reproduces the
// normal one exactly, so the difference map is identically zero.
TransplantResult transplant_dra(const Model& model, const Image& target, const Image& donor);

}  // namespace drsan
