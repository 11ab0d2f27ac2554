#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "drsan/config.hpp"
#include "drsan/rng.hpp"
#include "drsan/tensor.hpp"

namespace drsan {

// Owns the learnable tensors, keyed by a stable dotted name. Iteration order
// is lexicographic (std::map), which fixes the serialization and optimizer
// update order.
template <typename S>
class ParameterStoreT {
public:
    TensorPtr<S> create(const std::string& name, Shape shape) {
        if (params_.count(name))
            throw ContractViolation("params: duplicate name \"" + name + "\"");
        auto t = TensorT<S>::create(shape, /*requires_grad=*/true);
        params_.emplace(name, t);
        return t;
    }

    TensorPtr<S> at(const std::string& name) const {
        auto it = params_.find(name);
        if (it == params_.end())
            throw ContractViolation("params: no parameter named \"" + name + "\"");
        return it->second;
    }

    bool contains(const std::string& name) const { return params_.count(name) != 0; }

    const std::map<std::string, TensorPtr<S>>& entries() const { return params_; }

    i64 total_elements() const {
        i64 total = 0;
        for (const auto& [name, t] : params_) total += t->numel();
        return total;
    }

    void zero_grads() {
        for (auto& [name, t] : params_) {
            t->ensure_grad();
            t->zero_grad();
        }
    }

private:
    std::map<std::string, TensorPtr<S>> params_;
};

template <typename S>
struct ConvLayer {
    TensorPtr<S> weight;  // (out_c, in_c, k, k)
    TensorPtr<S> bias;    // (1, out_c, 1, 1)
    int padding = 0;
};

// Pre-activation residual block: PReLU, conv3x3, PReLU, conv3x3.
template <typename S>
struct RbLayers {
    TensorPtr<S> prelu0, prelu1;  // (1, c, 1, 1) slopes
    ConvLayer<S> conv0, conv1;
};

// Coefficient head: conv1x1 (c -> hidden), PReLU, conv1x1 (hidden -> L),
// then spatial average pooling.
template <typename S>
struct DrmLayers {
    ConvLayer<S> conv_in, conv_out;
    TensorPtr<S> prelu;
};

template <typename S>
struct DragLayers {
    std::vector<RbLayers<S>> blocks;
    std::optional<DrmLayers<S>> drm;    // present iff connection_mode == dra
    std::optional<ConvLayer<S>> fuse;   // present iff concat_enabled
};

template <typename S>
struct ModelT {
    NetworkConfig config;
    ParameterStoreT<S> params;
    ConvLayer<S> fext;                   // 3x3, image -> features
    std::vector<DragLayers<S>> drags;
    ConvLayer<S> f3x3;                   // 3x3 after the last group
    std::vector<ConvLayer<S>> upsampler; // one stage for x2/x3, two for x4
    ConvLayer<S> frec;                   // 3x3, features -> image
};

using Model = ModelT<float>;

// Per-group record of everything data-dependent the forward pass computes.
// Filling a trace copies values out of the live graph and never alters it.
template <typename S>
struct DragTraceT {
    std::vector<S> coeffs;            // batch x coeff_len, row-major; empty unless dra mode
    std::vector<TensorPtr<S>> alpha;  // per-block attention maps; empty unless rsa
    std::vector<TensorPtr<S>> z;      // per-block residual branch outputs
    std::vector<TensorPtr<S>> fd;     // per-block dynamic skip inputs
    std::vector<TensorPtr<S>> f;      // f_0 .. f_blocks
};

// Optional knobs for network_forward. Plain inference passes nullptr-
// equivalent defaults; analysis and tests use the hooks.
template <typename S>
struct ForwardHooks {
    // Replaces each group's coefficient vector (outer index = group,
    // inner = batch x coeff_len row-major). The DRM is then skipped.
    const std::vector<std::vector<S>>* dra_override = nullptr;
    // Forces every attention gate to exactly one (isolates the gate's effect).
    bool force_alpha_to_one = false;
    // When set, receives one entry per group.
    std::vector<DragTraceT<S>>* trace = nullptr;
};

namespace detail {

template <typename S>
void init_conv(Rng& rng, ConvLayer<S>& layer) {
    const i64 fan_in = layer.weight->shape.c * layer.weight->shape.h * layer.weight->shape.w;
    const double bound = 1.0 / std::sqrt(double(fan_in));
    for (auto& v : layer.weight->data) v = S(rng.uniform(-bound, bound));
    // biases start at zero (already zero-filled)
}

template <typename S>
ConvLayer<S> make_conv(ParameterStoreT<S>& ps, Rng& rng, const std::string& prefix,
                       i64 in_c, i64 out_c, i64 k) {
    ConvLayer<S> layer;
    layer.weight = ps.create(prefix + ".weight", {out_c, in_c, k, k});
    layer.bias = ps.create(prefix + ".bias", {1, out_c, 1, 1});
    layer.padding = int(k / 2);
    init_conv(rng, layer);
    return layer;
}

template <typename S>
TensorPtr<S> make_slopes(ParameterStoreT<S>& ps, const std::string& name, i64 c) {
    auto t = ps.create(name, {1, c, 1, 1});
    std::fill(t->data.begin(), t->data.end(), S(0.25));
    return t;
}

}  // namespace detail

// Builds a freshly initialized network. Conv weights are uniform in
// +/- 1/sqrt(in_c * k^2), biases zero, PReLU slopes 0.25. The same seed
// always yields the same parameters.
template <typename S>
ModelT<S> build_network(const NetworkConfig& config, std::uint64_t seed = 0x5eed) {
    config.validate();
    ModelT<S> m;
    m.config = config;
    Rng rng(seed);
    const i64 c = config.channels;

    m.fext = detail::make_conv(m.params, rng, "fext", 3, c, 3);

    for (int k = 0; k < config.drags; ++k) {
        const std::string gp = "drag." + std::to_string(k);
        DragLayers<S> g;
        for (int n = 0; n < config.blocks; ++n) {
            const std::string bp = gp + ".rb." + std::to_string(n);
            RbLayers<S> rb;
            rb.prelu0 = detail::make_slopes(m.params, bp + ".prelu.0.slopes", c);
            rb.conv0 = detail::make_conv(m.params, rng, bp + ".conv.0", c, c, 3);
            rb.prelu1 = detail::make_slopes(m.params, bp + ".prelu.1.slopes", c);
            rb.conv1 = detail::make_conv(m.params, rng, bp + ".conv.1", c, c, 3);
            g.blocks.push_back(std::move(rb));
        }
        if (config.has_drm()) {
            DrmLayers<S> drm;
            drm.conv_in = detail::make_conv(m.params, rng, gp + ".drm.conv_in",
                                            c, config.drm_hidden, 1);
            drm.prelu = detail::make_slopes(m.params, gp + ".drm.prelu.slopes",
                                            config.drm_hidden);
            drm.conv_out = detail::make_conv(m.params, rng, gp + ".drm.conv_out",
                                             config.drm_hidden, config.coeff_len(), 1);
            g.drm = std::move(drm);
        }
        if (config.concat_enabled)
            g.fuse = detail::make_conv(m.params, rng, gp + ".fuse",
                                       c * (config.blocks + 1), c, 1);
        m.drags.push_back(std::move(g));
    }

    m.f3x3 = detail::make_conv(m.params, rng, "f3x3", c, c, 3);

    if (config.scale == 4) {
        // two x2 stages, each its own conv + shuffle
        m.upsampler.push_back(detail::make_conv(m.params, rng, "up.0", c, c * 4, 3));
        m.upsampler.push_back(detail::make_conv(m.params, rng, "up.1", c, c * 4, 3));
    } else {
        m.upsampler.push_back(detail::make_conv(m.params, rng, "up.0", c,
                                                c * config.scale * config.scale, 3));
    }

    m.frec = detail::make_conv(m.params, rng, "frec", c, 3, 3);
    return m;
}

template <typename S>
TensorPtr<S> apply_conv(const ConvLayer<S>& layer, const TensorPtr<S>& x) {
    return conv2d(x, layer.weight, layer.bias, layer.padding);
}

// Coefficient head over the group's entry feature f0: two 1x1 convs with a
// PReLU between, pooled to one vector per sample -> (batch, coeff_len, 1, 1).
template <typename S>
TensorPtr<S> drm_forward(const DrmLayers<S>& drm, const TensorPtr<S>& f0,
                         DrmActivation activation) {
    auto h = apply_conv(drm.conv_in, f0);
    h = prelu(h, drm.prelu);
    h = apply_conv(drm.conv_out, h);
    auto r = global_avg_pool(h);
    switch (activation) {
        case DrmActivation::none: break;
        case DrmActivation::sigmoid: r = sigmoid(r); break;
        case DrmActivation::tanh: r = tanh_act(r); break;
    }
    return r;
}

// One residual block with its dynamic skip and attention gate:
//   z   = conv(prelu(conv(prelu(f_prev))))
//   f_d = skip input selected by the connection mode
//   f_n = (z + f_d) * alpha        with alpha = sigmoid(z) when rsa is on
//
// features holds f_0 .. f_{block-1}; block is 1-based. coeffs is the group's
// (batch, coeff_len, 1, 1) vector; its slice [block(block-1)/2, +block) holds
// this block's weights, one scalar per earlier feature per sample.
template <typename S>
TensorPtr<S> drsa_forward(const RbLayers<S>& rb, const std::vector<TensorPtr<S>>& features,
                          const TensorPtr<S>& coeffs, int block, ConnectionMode mode,
                          bool rsa_enabled, bool force_alpha_to_one = false,
                          DragTraceT<S>* trace = nullptr) {
    if (block < 1 || std::size_t(block) > features.size())
        throw ContractViolation("drsa_forward: block " + std::to_string(block) +
                                " needs " + std::to_string(block) +
                                " earlier features, have " + std::to_string(features.size()));
    const auto& f_prev = features[std::size_t(block - 1)];

    auto z = prelu(f_prev, rb.prelu0);
    z = apply_conv(rb.conv0, z);
    z = prelu(z, rb.prelu1);
    z = apply_conv(rb.conv1, z);

    TensorPtr<S> fd;
    switch (mode) {
        case ConnectionMode::standard_res:
            fd = f_prev;
            break;
        case ConnectionMode::all_res: {
            fd = features[0];
            for (int i = 1; i < block; ++i) fd = add(fd, features[std::size_t(i)]);
            break;
        }
        case ConnectionMode::dra: {
            if (!coeffs)
                throw ContractViolation("drsa_forward: dra mode needs a coefficient tensor");
            const i64 off = i64(block) * (block - 1) / 2;
            for (int i = 0; i < block; ++i) {
                auto ri = slice_channels(coeffs, off + i, 1);  // (batch, 1, 1, 1)
                auto term = mul(features[std::size_t(i)], ri);
                fd = i == 0 ? term : add(fd, term);
            }
            break;
        }
    }

    auto summed = add(z, fd);
    TensorPtr<S> out = summed;
    TensorPtr<S> alpha;
    if (rsa_enabled) {
        alpha = force_alpha_to_one ? TensorT<S>::full(z->shape, S(1)) : sigmoid(z);
        out = mul(summed, alpha);
    }
    if (trace) {
        trace->z.push_back(z);
        trace->fd.push_back(fd);
        if (alpha) trace->alpha.push_back(alpha);
    }
    return out;
}

// One residual group: runs the DRM once on the entry feature, then the
// blocks, then fuses [f_0 .. f_N] (concat + 1x1 conv, or plain f_N + f_0).
template <typename S>
TensorPtr<S> drag_forward(const NetworkConfig& config, const DragLayers<S>& g,
                          const TensorPtr<S>& x_prev,
                          const std::vector<S>* coeff_override = nullptr,
                          bool force_alpha_to_one = false,
                          DragTraceT<S>* trace = nullptr) {
    TensorPtr<S> coeffs;
    if (config.has_drm()) {
        if (coeff_override) {
            const i64 batch = x_prev->shape.n, L = config.coeff_len();
            if (i64(coeff_override->size()) != batch * L)
                throw ContractViolation("drag_forward: coefficient override has " +
                                        std::to_string(coeff_override->size()) +
                                        " values, expected " + std::to_string(batch * L));
            coeffs = TensorT<S>::from_data({batch, L, 1, 1}, *coeff_override);
        } else {
            coeffs = drm_forward(*g.drm, x_prev, config.drm_activation);
        }
    }

    std::vector<TensorPtr<S>> features{x_prev};
    for (int n = 1; n <= config.blocks; ++n)
        features.push_back(drsa_forward(g.blocks[std::size_t(n - 1)], features, coeffs, n,
                                        config.connection_mode, config.rsa_enabled,
                                        force_alpha_to_one, trace));

    if (trace) {
        if (coeffs) trace->coeffs = coeffs->data;
        trace->f = features;
    }
    return config.concat_enabled ? apply_conv(*g.fuse, concat_channels(features))
                                 : add(features.back(), features[0]);
}

// Full network: features, residual groups, long skip, upsampling,
// reconstruction. Input is a (batch, 3, h, w) image tensor in [0, 1]; the
// output is (batch, 3, h*scale, w*scale) and is NOT clamped.
template <typename S>
TensorPtr<S> network_forward(const ModelT<S>& m, const TensorPtr<S>& input,
                             const ForwardHooks<S>* hooks = nullptr) {
    if (input->shape.c != 3)
        throw ContractViolation("network_forward: input has " +
                                std::to_string(input->shape.c) + " channels, expected 3");
    if (hooks && hooks->dra_override &&
        i64(hooks->dra_override->size()) != i64(m.drags.size()))
        throw ContractViolation("network_forward: coefficient override covers " +
                                std::to_string(hooks->dra_override->size()) + " groups, model has " +
                                std::to_string(m.drags.size()));

    auto x0 = apply_conv(m.fext, input);
    auto x = x0;
    for (std::size_t k = 0; k < m.drags.size(); ++k) {
        DragTraceT<S>* trace = nullptr;
        if (hooks && hooks->trace) {
            hooks->trace->emplace_back();
            trace = &hooks->trace->back();
        }
        const std::vector<S>* override_k =
            hooks && hooks->dra_override ? &(*hooks->dra_override)[k] : nullptr;
        x = drag_forward(m.config, m.drags[k], x, override_k,
                         hooks && hooks->force_alpha_to_one, trace);
    }
    x = add(apply_conv(m.f3x3, x), x0);

    if (m.config.scale == 4) {
        x = pixel_shuffle(apply_conv(m.upsampler[0], x), 2);
        x = pixel_shuffle(apply_conv(m.upsampler[1], x), 2);
    } else {
        x = pixel_shuffle(apply_conv(m.upsampler[0], x), m.config.scale);
    }
    return apply_conv(m.frec, x);
}

// Closed-form learnable parameter count for a configuration. Kept separate
// from ParameterStoreT totals so the two can cross-check each other.
i64 count_params(const NetworkConfig& config);

// Multiply-accumulate count for super-resolving to an hr_h x hr_w output.
// hr_h*hr_w must be divisible by scale^2 so the low-resolution plane is
// integral (1280x720 works for scales 2, 3 and 4).
i64 count_multi_adds(const NetworkConfig& config, i64 hr_h, i64 hr_w);

}  // namespace drsan
