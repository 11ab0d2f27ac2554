#include "drsan/analysis.hpp"

#include <algorithm>
#include <cmath>

namespace drsan {

namespace {

std::vector<DragTraceT<float>> traced_forward(const Model& model, const Image& lr,
                                              TensorPtr<float>* output = nullptr,
                                              const std::vector<std::vector<float>>* override_coeffs = nullptr) {
    auto input = tensor_from_images<float>({&lr});
    std::vector<DragTraceT<float>> traces;
    ForwardHooks<float> hooks;
    hooks.trace = &traces;
    hooks.dra_override = override_coeffs;
    auto out = network_forward(model, input, &hooks);
    if (output) *output = out;
    return traces;
}

const AlphaMap& map_at(const AttentionTrace& trace, int block) {
    if (block < 0 || std::size_t(block) >= trace.alphas.size())
        throw ContractViolation("attention map index " + std::to_string(block) +
                                " outside [0, " + std::to_string(trace.alphas.size()) + ")");
    return trace.alphas[std::size_t(block)];
}

}  // namespace

AttentionTrace extract_trace(const Model& model, const Image& lr) {
    const auto traces = traced_forward(model, lr);

    AttentionTrace t;
    t.drags = model.config.drags;
    t.blocks_per_drag = model.config.blocks;
    t.coeff_len = model.config.coeff_len();
    for (const auto& g : traces) {
        if (!g.coeffs.empty()) t.coeffs.push_back(g.coeffs);
        for (const auto& a : g.alpha) {
            AlphaMap m;
            m.channels = int(a->shape.c);
            m.h = int(a->shape.h);
            m.w = int(a->shape.w);
            m.values = a->data;
            t.alphas.push_back(std::move(m));
        }
    }
    return t;
}

std::vector<std::int64_t> attention_histogram(const AttentionTrace& trace, int block,
                                              int bins) {
    if (bins < 1) throw ContractViolation("attention_histogram: bins must be >= 1");
    const AlphaMap& m = map_at(trace, block);
    std::vector<std::int64_t> counts(std::size_t(bins), 0);
    for (const float v : m.values) {
        // gate values live in (0, 1), so the index needs no range check
        // beyond the top cell's closed edge
        int cell = int(double(v) * bins);
        cell = std::min(bins - 1, std::max(0, cell));
        ++counts[std::size_t(cell)];
    }
    return counts;
}

std::pair<Image, Image> attention_spatial_map(const AttentionTrace& trace, int block) {
    const AlphaMap& m = map_at(trace, block);
    Image raw(m.h, m.w, 1);
    const std::size_t plane = std::size_t(m.h) * m.w;
    for (std::size_t i = 0; i < plane; ++i) {
        double acc = 0.0;
        for (int c = 0; c < m.channels; ++c) acc += m.values[std::size_t(c) * plane + i];
        raw.data[i] = float(acc / m.channels);
    }

    float lo = raw.data[0], hi = raw.data[0];
    for (const float v : raw.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    Image scaled(m.h, m.w, 1);
    if (hi > lo)
        for (std::size_t i = 0; i < plane; ++i)
            scaled.data[i] = (raw.data[i] - lo) / (hi - lo);
    return {std::move(raw), std::move(scaled)};
}

TransplantResult transplant_dra(const Model& model, const Image& target, const Image& donor) {
    if (!model.config.has_drm())
        throw ContractViolation("transplant_dra: model has no coefficient head "
                                "(connection_mode is not dra)");

    // donor pass: harvest its coefficient vectors
    const auto donor_traces = traced_forward(model, donor);
    std::vector<std::vector<float>> coeffs;
    coeffs.reserve(donor_traces.size());
    for (const auto& g : donor_traces) coeffs.push_back(g.coeffs);

    // target twice: as-is, then under the donor's coefficients
    TensorPtr<float> plain_out, forced_out;
    traced_forward(model, target, &plain_out);
    traced_forward(model, target, &forced_out, &coeffs);

    TransplantResult result;
    result.sr = image_from_tensor(*forced_out, 0);
    const Image plain = image_from_tensor(*plain_out, 0);
    const Image y_forced = rgb_to_y(result.sr), y_plain = rgb_to_y(plain);
    result.diff_map = Image(y_forced.h, y_forced.w, 1);
    for (std::size_t i = 0; i < result.diff_map.data.size(); ++i)
        result.diff_map.data[i] = std::abs(y_forced.data[i] - y_plain.data[i]);
    return result;
}

}  // namespace drsan
