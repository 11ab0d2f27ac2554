#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "drsan/errors.hpp"

namespace drsan {

using i64 = std::int64_t;

// All tensors are rank-4 (n, c, h, w), row-major with w fastest.
// Convolution weights use (out_c, in_c, k, k); per-channel vectors such as
// biases and PReLU slopes use (1, c, 1, 1); scalars use (1, 1, 1, 1).
struct Shape {
    i64 n = 0, c = 0, h = 0, w = 0;

    i64 numel() const { return n * c * h * w; }
    bool operator==(const Shape& o) const = default;

    std::string str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + ")";
    }
};

// A node in the recorded computation graph. Ops create nodes whose
// backward_step closure propagates this node's grad to its parents; the
// closure holds shared_ptrs to the parents, so a live output keeps the
// recorded graph alive. Node payloads are treated as immutable once an op
// has consumed them; leaves may be rewritten freely between recordings.
template <typename S>
struct TensorT {
    using Ptr = std::shared_ptr<TensorT<S>>;

    Shape shape;
    std::vector<S> data;
    std::vector<S> grad;  // empty until gradient flow reaches this node
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<Ptr> parents;
    std::function<void()> backward_step;

    static Ptr create(Shape shape, bool requires_grad = false) {
        if (shape.n <= 0 || shape.c <= 0 || shape.h <= 0 || shape.w <= 0)
            throw ContractViolation("tensor: non-positive dimension in shape " + shape.str());
        auto t = std::make_shared<TensorT<S>>();
        t->shape = shape;
        t->data.assign(std::size_t(shape.numel()), S(0));
        t->requires_grad = requires_grad;
        return t;
    }

    static Ptr full(Shape shape, S value, bool requires_grad = false) {
        auto t = create(shape, requires_grad);
        std::fill(t->data.begin(), t->data.end(), value);
        return t;
    }

    static Ptr from_data(Shape shape, std::vector<S> values, bool requires_grad = false) {
        auto t = create(shape, requires_grad);
        if (i64(values.size()) != shape.numel())
            throw ContractViolation("tensor: value count " + std::to_string(values.size()) +
                                    " does not fill shape " + shape.str());
        t->data = std::move(values);
        return t;
    }

    i64 numel() const { return shape.numel(); }

    S& at(i64 n, i64 c, i64 y, i64 x) {
        return data[std::size_t(((n * shape.c + c) * shape.h + y) * shape.w + x)];
    }
    S at(i64 n, i64 c, i64 y, i64 x) const {
        return data[std::size_t(((n * shape.c + c) * shape.h + y) * shape.w + x)];
    }

    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), S(0));
    }
    void zero_grad() {
        if (!grad.empty()) std::fill(grad.begin(), grad.end(), S(0));
    }
    // Gradients accumulate additively; a node feeding several consumers
    // receives the sum of their contributions.
    void accumulate_grad(const S* g) {
        ensure_grad();
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
    }
};

template <typename S>
using TensorPtr = std::shared_ptr<TensorT<S>>;

namespace detail {

// The closure is owned by the output node, so a bare self pointer cannot
// dangle while the closure runs.
template <typename S>
bool any_requires(std::initializer_list<const TensorPtr<S>*> ts) {
    for (const auto* t : ts)
        if (*t && (*t)->requires_grad) return true;
    return false;
}

}  // namespace detail

// 2D convolution, stride 1. weight is (out_c, in_c, k, k) with odd k and
// padding fixed at k/2 so spatial size is preserved. bias is (1, out_c, 1, 1).
template <typename S>
TensorPtr<S> conv2d(const TensorPtr<S>& x, const TensorPtr<S>& weight,
                    const TensorPtr<S>& bias, int padding) {
    const i64 N = x->shape.n, C = x->shape.c, H = x->shape.h, W = x->shape.w;
    const i64 OC = weight->shape.n, IC = weight->shape.c;
    const i64 K = weight->shape.h;
    if (weight->shape.w != K)
        throw ContractViolation("conv2d: non-square kernel " + weight->shape.str());
    if (K % 2 == 0)
        throw ContractViolation("conv2d: kernel size " + std::to_string(K) + " must be odd");
    if (padding != int(K / 2))
        throw ContractViolation("conv2d: padding " + std::to_string(padding) +
                                " must equal k/2 = " + std::to_string(K / 2));
    if (IC != C)
        throw ContractViolation("conv2d: input channels " + std::to_string(C) +
                                " != weight input channels " + std::to_string(IC));
    if (bias->shape.numel() != OC || bias->shape.c != OC)
        throw ContractViolation("conv2d: bias shape " + bias->shape.str() +
                                " does not provide " + std::to_string(OC) + " channels");

    const bool track = detail::any_requires<S>({&x, &weight, &bias});
    auto out = TensorT<S>::create({N, OC, H, W}, track);
    out->op = "conv2d";

    const i64 HP = H + 2 * padding, WP = W + 2 * padding;
    const i64 plane = H * W, pplane = HP * WP;

    // Zero-padded copy of one image; rows stay contiguous so the inner
    // accumulation loops vectorize.
    std::vector<S> pad;
    auto load_pad = [&](const S* img) {
        std::fill(pad.begin(), pad.end(), S(0));
        for (i64 c = 0; c < C; ++c)
            for (i64 y = 0; y < H; ++y)
                std::copy(img + c * plane + y * W, img + c * plane + (y + 1) * W,
                          pad.data() + c * pplane + (y + padding) * WP + padding);
    };
    if (padding > 0) pad.resize(std::size_t(C * pplane));

    for (i64 n = 0; n < N; ++n) {
        const S* img = x->data.data() + n * C * plane;
        const S* base;
        if (padding > 0) {
            load_pad(img);
            base = pad.data();
        } else {
            base = img;
        }
        for (i64 oc = 0; oc < OC; ++oc) {
            S* o = out->data.data() + (n * OC + oc) * plane;
            std::fill(o, o + plane, bias->data[std::size_t(oc)]);
            for (i64 ic = 0; ic < C; ++ic) {
                const S* ip = base + ic * pplane;
                const S* wp = weight->data.data() + (oc * IC + ic) * K * K;
                for (i64 ky = 0; ky < K; ++ky)
                    for (i64 kx = 0; kx < K; ++kx) {
                        const S wv = wp[ky * K + kx];
                        for (i64 y = 0; y < H; ++y) {
                            const S* src = ip + (y + ky) * WP + kx;
                            S* dst = o + y * W;
                            for (i64 xx = 0; xx < W; ++xx) dst[xx] += wv * src[xx];
                        }
                    }
            }
        }
    }

    if (track) {
        out->parents = {x, weight, bias};
        TensorT<S>* self = out.get();
        out->backward_step = [self, x, weight, bias, padding]() {
            if (self->grad.empty()) return;
            const i64 N = x->shape.n, C = x->shape.c, H = x->shape.h, W = x->shape.w;
            const i64 OC = weight->shape.n, K = weight->shape.h;
            const i64 HP = H + 2 * padding, WP = W + 2 * padding;
            const i64 plane = H * W, pplane = HP * WP;
            const bool need_dx = x->requires_grad;
            const bool need_dw = weight->requires_grad;
            const bool need_db = bias->requires_grad;
            if (need_dx) x->ensure_grad();
            if (need_dw) weight->ensure_grad();
            if (need_db) bias->ensure_grad();

            std::vector<S> pad, dpad;
            if (need_dw && padding > 0) pad.resize(std::size_t(C * pplane));
            if (need_dx) dpad.resize(std::size_t(C * pplane));

            for (i64 n = 0; n < N; ++n) {
                const S* img = x->data.data() + n * C * plane;
                const S* base = img;
                if (need_dw && padding > 0) {
                    std::fill(pad.begin(), pad.end(), S(0));
                    for (i64 c = 0; c < C; ++c)
                        for (i64 y = 0; y < H; ++y)
                            std::copy(img + c * plane + y * W, img + c * plane + (y + 1) * W,
                                      pad.data() + c * pplane + (y + padding) * WP + padding);
                    base = pad.data();
                }
                if (need_dx) std::fill(dpad.begin(), dpad.end(), S(0));

                for (i64 oc = 0; oc < OC; ++oc) {
                    const S* g = self->grad.data() + (n * OC + oc) * plane;
                    if (need_db) {
                        S acc = 0;
                        for (i64 i = 0; i < plane; ++i) acc += g[i];
                        bias->grad[std::size_t(oc)] += acc;
                    }
                    for (i64 ic = 0; ic < C; ++ic) {
                        const S* ip = need_dw ? base + ic * pplane : nullptr;
                        S* dp = need_dx ? dpad.data() + ic * pplane : nullptr;
                        const S* wp = weight->data.data() + (oc * C + ic) * K * K;
                        S* dwp = need_dw ? weight->grad.data() + (oc * C + ic) * K * K : nullptr;
                        for (i64 ky = 0; ky < K; ++ky)
                            for (i64 kx = 0; kx < K; ++kx) {
                                if (need_dw) {
                                    S acc = 0;
                                    for (i64 y = 0; y < H; ++y) {
                                        const S* src = ip + (y + ky) * WP + kx;
                                        const S* gr = g + y * W;
                                        for (i64 xx = 0; xx < W; ++xx) acc += gr[xx] * src[xx];
                                    }
                                    dwp[ky * K + kx] += acc;
                                }
                                if (need_dx) {
                                    const S wv = wp[ky * K + kx];
                                    for (i64 y = 0; y < H; ++y) {
                                        S* dst = dp + (y + ky) * WP + kx;
                                        const S* gr = g + y * W;
                                        for (i64 xx = 0; xx < W; ++xx) dst[xx] += wv * gr[xx];
                                    }
                                }
                            }
                    }
                }
                if (need_dx) {
                    S* dx = x->grad.data() + n * C * plane;
                    for (i64 c = 0; c < C; ++c)
                        for (i64 y = 0; y < H; ++y) {
                            const S* src = dpad.data() + c * pplane + (y + padding) * WP + padding;
                            S* dst = dx + c * plane + y * W;
                            for (i64 xx = 0; xx < W; ++xx) dst[xx] += src[xx];
                        }
                }
            }
        };
    }
    return out;
}

// PReLU with one learned slope per channel; slopes is (1, c, 1, 1).
// The derivative at exactly zero follows the non-negative branch.
template <typename S>
TensorPtr<S> prelu(const TensorPtr<S>& x, const TensorPtr<S>& slopes) {
    const i64 N = x->shape.n, C = x->shape.c, plane = x->shape.h * x->shape.w;
    if (slopes->shape.c != C || slopes->shape.numel() != C)
        throw ContractViolation("prelu: slope shape " + slopes->shape.str() +
                                " does not provide " + std::to_string(C) + " channels");

    const bool track = detail::any_requires<S>({&x, &slopes});
    auto out = TensorT<S>::create(x->shape, track);
    out->op = "prelu";
    for (i64 n = 0; n < N; ++n)
        for (i64 c = 0; c < C; ++c) {
            const S a = slopes->data[std::size_t(c)];
            const S* src = x->data.data() + (n * C + c) * plane;
            S* dst = out->data.data() + (n * C + c) * plane;
            for (i64 i = 0; i < plane; ++i) dst[i] = src[i] >= S(0) ? src[i] : a * src[i];
        }

    if (track) {
        out->parents = {x, slopes};
        TensorT<S>* self = out.get();
        out->backward_step = [self, x, slopes]() {
            if (self->grad.empty()) return;
            const i64 N = x->shape.n, C = x->shape.c, plane = x->shape.h * x->shape.w;
            if (x->requires_grad) x->ensure_grad();
            if (slopes->requires_grad) slopes->ensure_grad();
            for (i64 n = 0; n < N; ++n)
                for (i64 c = 0; c < C; ++c) {
                    const S a = slopes->data[std::size_t(c)];
                    const S* src = x->data.data() + (n * C + c) * plane;
                    const S* g = self->grad.data() + (n * C + c) * plane;
                    if (x->requires_grad) {
                        S* dx = x->grad.data() + (n * C + c) * plane;
                        for (i64 i = 0; i < plane; ++i)
                            dx[i] += src[i] >= S(0) ? g[i] : a * g[i];
                    }
                    if (slopes->requires_grad) {
                        S acc = 0;
                        for (i64 i = 0; i < plane; ++i)
                            if (src[i] < S(0)) acc += g[i] * src[i];
                        slopes->grad[std::size_t(c)] += acc;
                    }
                }
        };
    }
    return out;
}

namespace detail {

// Numerically stable logistic, nudged onto the open interval (0,1): the true
// function never reaches the endpoints, so saturated rounding is clamped to
// the nearest interior representable value.
template <typename S>
S sigmoid_value(S v) {
    S y;
    if (v >= S(0)) {
        const S e = std::exp(-v);
        y = S(1) / (S(1) + e);
    } else {
        const S e = std::exp(v);
        y = e / (S(1) + e);
    }
    const S hi = S(1) - std::numeric_limits<S>::epsilon() / S(2);
    const S lo = std::numeric_limits<S>::min();
    return std::min(hi, std::max(lo, y));
}

}  // namespace detail

template <typename S>
TensorPtr<S> sigmoid(const TensorPtr<S>& x) {
    auto out = TensorT<S>::create(x->shape, x->requires_grad);
    out->op = "sigmoid";
    for (std::size_t i = 0; i < out->data.size(); ++i)
        out->data[i] = detail::sigmoid_value(x->data[i]);
    if (x->requires_grad) {
        out->parents = {x};
        TensorT<S>* self = out.get();
        out->backward_step = [self, x]() {
            if (self->grad.empty()) return;
            x->ensure_grad();
            for (std::size_t i = 0; i < x->grad.size(); ++i) {
                const S y = self->data[i];
                x->grad[i] += self->grad[i] * y * (S(1) - y);
            }
        };
    }
    return out;
}

template <typename S>
TensorPtr<S> tanh_act(const TensorPtr<S>& x) {
    auto out = TensorT<S>::create(x->shape, x->requires_grad);
    out->op = "tanh";
    for (std::size_t i = 0; i < out->data.size(); ++i)
        out->data[i] = std::tanh(x->data[i]);
    if (x->requires_grad) {
        out->parents = {x};
        TensorT<S>* self = out.get();
        out->backward_step = [self, x]() {
            if (self->grad.empty()) return;
            x->ensure_grad();
            for (std::size_t i = 0; i < x->grad.size(); ++i) {
                const S y = self->data[i];
                x->grad[i] += self->grad[i] * (S(1) - y * y);
            }
        };
    }
    return out;
}

// Spatial mean per (n, c): (n, c, h, w) -> (n, c, 1, 1).
template <typename S>
TensorPtr<S> global_avg_pool(const TensorPtr<S>& x) {
    const i64 N = x->shape.n, C = x->shape.c, plane = x->shape.h * x->shape.w;
    auto out = TensorT<S>::create({N, C, 1, 1}, x->requires_grad);
    out->op = "global_avg_pool";
    for (i64 n = 0; n < N; ++n)
        for (i64 c = 0; c < C; ++c) {
            const S* src = x->data.data() + (n * C + c) * plane;
            S acc = 0;
            for (i64 i = 0; i < plane; ++i) acc += src[i];
            out->data[std::size_t(n * C + c)] = acc / S(plane);
        }
    if (x->requires_grad) {
        out->parents = {x};
        TensorT<S>* self = out.get();
        out->backward_step = [self, x]() {
            if (self->grad.empty()) return;
            const i64 N = x->shape.n, C = x->shape.c, plane = x->shape.h * x->shape.w;
            x->ensure_grad();
            for (i64 n = 0; n < N; ++n)
                for (i64 c = 0; c < C; ++c) {
                    const S g = self->grad[std::size_t(n * C + c)] / S(plane);
                    S* dx = x->grad.data() + (n * C + c) * plane;
                    for (i64 i = 0; i < plane; ++i) dx[i] += g;
                }
        };
    }
    return out;
}

// Rearranges (n, c·r², h, w) -> (n, c, h·r, w·r):
//   out[n][o][y·r+i][x·r+j] = in[n][o·r² + i·r + j][y][x]
template <typename S>
TensorPtr<S> pixel_shuffle(const TensorPtr<S>& x, int r) {
    const i64 N = x->shape.n, C = x->shape.c, H = x->shape.h, W = x->shape.w;
    const i64 R = r;
    if (R < 1)
        throw ContractViolation("pixel_shuffle: factor " + std::to_string(r) + " must be >= 1");
    if (C % (R * R) != 0)
        throw ContractViolation("pixel_shuffle: channels " + std::to_string(C) +
                                " not divisible by r^2 = " + std::to_string(R * R));
    const i64 OC = C / (R * R);
    auto out = TensorT<S>::create({N, OC, H * R, W * R}, x->requires_grad);
    out->op = "pixel_shuffle";
    const i64 in_plane = H * W, out_plane = H * R * W * R;
    for (i64 n = 0; n < N; ++n)
        for (i64 o = 0; o < OC; ++o)
            for (i64 i = 0; i < R; ++i)
                for (i64 j = 0; j < R; ++j) {
                    const S* src = x->data.data() + (n * C + o * R * R + i * R + j) * in_plane;
                    S* dst = out->data.data() + (n * OC + o) * out_plane;
                    for (i64 y = 0; y < H; ++y) {
                        S* row = dst + (y * R + i) * (W * R) + j;
                        const S* srow = src + y * W;
                        for (i64 xx = 0; xx < W; ++xx) row[xx * R] = srow[xx];
                    }
                }
    if (x->requires_grad) {
        out->parents = {x};
        TensorT<S>* self = out.get();
        out->backward_step = [self, x, R]() {
            if (self->grad.empty()) return;
            const i64 N = x->shape.n, C = x->shape.c, H = x->shape.h, W = x->shape.w;
            const i64 OC = C / (R * R);
            const i64 in_plane = H * W, out_plane = H * R * W * R;
            x->ensure_grad();
            for (i64 n = 0; n < N; ++n)
                for (i64 o = 0; o < OC; ++o)
                    for (i64 i = 0; i < R; ++i)
                        for (i64 j = 0; j < R; ++j) {
                            S* dst = x->grad.data() + (n * C + o * R * R + i * R + j) * in_plane;
                            const S* src = self->grad.data() + (n * OC + o) * out_plane;
                            for (i64 y = 0; y < H; ++y) {
                                const S* row = src + (y * R + i) * (W * R) + j;
                                S* drow = dst + y * W;
                                for (i64 xx = 0; xx < W; ++xx) drow[xx] += row[xx * R];
                            }
                        }
        };
    }
    return out;
}

// Concatenates along the channel axis; inputs must agree on n, h, w.
template <typename S>
TensorPtr<S> concat_channels(const std::vector<TensorPtr<S>>& xs) {
    if (xs.empty()) throw ContractViolation("concat_channels: no inputs");
    const i64 N = xs[0]->shape.n, H = xs[0]->shape.h, W = xs[0]->shape.w;
    i64 C = 0;
    bool track = false;
    for (const auto& t : xs) {
        if (t->shape.n != N)
            throw ContractViolation("concat_channels: batch mismatch " +
                                    t->shape.str() + " vs " + xs[0]->shape.str());
        if (t->shape.h != H || t->shape.w != W)
            throw ContractViolation("concat_channels: spatial mismatch " +
                                    t->shape.str() + " vs " + xs[0]->shape.str());
        C += t->shape.c;
        track = track || t->requires_grad;
    }
    auto out = TensorT<S>::create({N, C, H, W}, track);
    out->op = "concat_channels";
    const i64 plane = H * W;
    for (i64 n = 0; n < N; ++n) {
        i64 off = 0;
        for (const auto& t : xs) {
            const i64 tc = t->shape.c;
            std::copy(t->data.data() + n * tc * plane, t->data.data() + (n + 1) * tc * plane,
                      out->data.data() + (n * C + off) * plane);
            off += tc;
        }
    }
    if (track) {
        out->parents = xs;
        TensorT<S>* self = out.get();
        auto inputs = xs;
        out->backward_step = [self, inputs]() {
            if (self->grad.empty()) return;
            const i64 N = self->shape.n, C = self->shape.c;
            const i64 plane = self->shape.h * self->shape.w;
            for (i64 n = 0; n < N; ++n) {
                i64 off = 0;
                for (const auto& t : inputs) {
                    const i64 tc = t->shape.c;
                    if (t->requires_grad) {
                        t->ensure_grad();
                        const S* src = self->grad.data() + (n * C + off) * plane;
                        S* dst = t->grad.data() + n * tc * plane;
                        for (i64 i = 0; i < tc * plane; ++i) dst[i] += src[i];
                    }
                    off += tc;
                }
            }
        };
    }
    return out;
}

// Copies channels [c0, c0+len) into a new tensor.
template <typename S>
TensorPtr<S> slice_channels(const TensorPtr<S>& x, i64 c0, i64 len) {
    const i64 N = x->shape.n, C = x->shape.c, H = x->shape.h, W = x->shape.w;
    if (c0 < 0 || len < 1 || c0 + len > C)
        throw ContractViolation("slice_channels: range [" + std::to_string(c0) + "," +
                                std::to_string(c0 + len) + ") outside " + std::to_string(C) +
                                " channels");
    auto out = TensorT<S>::create({N, len, H, W}, x->requires_grad);
    out->op = "slice_channels";
    const i64 plane = H * W;
    for (i64 n = 0; n < N; ++n)
        std::copy(x->data.data() + (n * C + c0) * plane,
                  x->data.data() + (n * C + c0 + len) * plane,
                  out->data.data() + n * len * plane);
    if (x->requires_grad) {
        out->parents = {x};
        TensorT<S>* self = out.get();
        out->backward_step = [self, x, c0, len]() {
            if (self->grad.empty()) return;
            const i64 N = x->shape.n, C = x->shape.c, plane = x->shape.h * x->shape.w;
            x->ensure_grad();
            for (i64 n = 0; n < N; ++n) {
                const S* src = self->grad.data() + n * len * plane;
                S* dst = x->grad.data() + (n * C + c0) * plane;
                for (i64 i = 0; i < len * plane; ++i) dst[i] += src[i];
            }
        };
    }
    return out;
}

namespace detail {

// add/mul share one elementwise kernel. b either matches a exactly or has
// shape (n, c', 1, 1) with c' in {1, c}; the broadcast dimensions of b's
// gradient are reduce-summed.
template <typename S>
void check_elementwise(const char* opname, const TensorPtr<S>& a, const TensorPtr<S>& b) {
    if (a->shape == b->shape) return;
    if (b->shape.h == 1 && b->shape.w == 1 && b->shape.n == a->shape.n &&
        (b->shape.c == 1 || b->shape.c == a->shape.c))
        return;
    throw ContractViolation(std::string(opname) + ": shape " + b->shape.str() +
                            " does not match or broadcast to " + a->shape.str());
}

}  // namespace detail

template <typename S>
TensorPtr<S> add(const TensorPtr<S>& a, const TensorPtr<S>& b) {
    detail::check_elementwise("add", a, b);
    const bool track = detail::any_requires<S>({&a, &b});
    auto out = TensorT<S>::create(a->shape, track);
    out->op = "add";
    const i64 N = a->shape.n, C = a->shape.c, plane = a->shape.h * a->shape.w;
    if (a->shape == b->shape) {
        for (std::size_t i = 0; i < out->data.size(); ++i)
            out->data[i] = a->data[i] + b->data[i];
    } else {
        const bool per_channel = b->shape.c == C;
        for (i64 n = 0; n < N; ++n)
            for (i64 c = 0; c < C; ++c) {
                const S bv = b->data[std::size_t(per_channel ? n * C + c : n)];
                const S* ap = a->data.data() + (n * C + c) * plane;
                S* op = out->data.data() + (n * C + c) * plane;
                for (i64 i = 0; i < plane; ++i) op[i] = ap[i] + bv;
            }
    }
    if (track) {
        out->parents = {a, b};
        TensorT<S>* self = out.get();
        out->backward_step = [self, a, b]() {
            if (self->grad.empty()) return;
            if (a->requires_grad) a->accumulate_grad(self->grad.data());
            if (!b->requires_grad) return;
            b->ensure_grad();
            if (a->shape == b->shape) {
                for (std::size_t i = 0; i < b->grad.size(); ++i) b->grad[i] += self->grad[i];
                return;
            }
            const i64 N = a->shape.n, C = a->shape.c, plane = a->shape.h * a->shape.w;
            const bool per_channel = b->shape.c == C;
            for (i64 n = 0; n < N; ++n)
                for (i64 c = 0; c < C; ++c) {
                    const S* g = self->grad.data() + (n * C + c) * plane;
                    S acc = 0;
                    for (i64 i = 0; i < plane; ++i) acc += g[i];
                    b->grad[std::size_t(per_channel ? n * C + c : n)] += acc;
                }
        };
    }
    return out;
}

template <typename S>
TensorPtr<S> mul(const TensorPtr<S>& a, const TensorPtr<S>& b) {
    detail::check_elementwise("mul", a, b);
    const bool track = detail::any_requires<S>({&a, &b});
    auto out = TensorT<S>::create(a->shape, track);
    out->op = "mul";
    const i64 N = a->shape.n, C = a->shape.c, plane = a->shape.h * a->shape.w;
    if (a->shape == b->shape) {
        for (std::size_t i = 0; i < out->data.size(); ++i)
            out->data[i] = a->data[i] * b->data[i];
    } else {
        const bool per_channel = b->shape.c == C;
        for (i64 n = 0; n < N; ++n)
            for (i64 c = 0; c < C; ++c) {
                const S bv = b->data[std::size_t(per_channel ? n * C + c : n)];
                const S* ap = a->data.data() + (n * C + c) * plane;
                S* op = out->data.data() + (n * C + c) * plane;
                for (i64 i = 0; i < plane; ++i) op[i] = ap[i] * bv;
            }
    }
    if (track) {
        out->parents = {a, b};
        TensorT<S>* self = out.get();
        out->backward_step = [self, a, b]() {
            if (self->grad.empty()) return;
            const i64 N = a->shape.n, C = a->shape.c, plane = a->shape.h * a->shape.w;
            if (a->shape == b->shape) {
                if (a->requires_grad) {
                    a->ensure_grad();
                    for (std::size_t i = 0; i < a->grad.size(); ++i)
                        a->grad[i] += self->grad[i] * b->data[i];
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    for (std::size_t i = 0; i < b->grad.size(); ++i)
                        b->grad[i] += self->grad[i] * a->data[i];
                }
                return;
            }
            const bool per_channel = b->shape.c == C;
            if (a->requires_grad) a->ensure_grad();
            if (b->requires_grad) b->ensure_grad();
            for (i64 n = 0; n < N; ++n)
                for (i64 c = 0; c < C; ++c) {
                    const std::size_t bi = std::size_t(per_channel ? n * C + c : n);
                    const S bv = b->data[bi];
                    const S* g = self->grad.data() + (n * C + c) * plane;
                    if (a->requires_grad) {
                        S* da = a->grad.data() + (n * C + c) * plane;
                        for (i64 i = 0; i < plane; ++i) da[i] += g[i] * bv;
                    }
                    if (b->requires_grad) {
                        const S* ap = a->data.data() + (n * C + c) * plane;
                        S acc = 0;
                        for (i64 i = 0; i < plane; ++i) acc += g[i] * ap[i];
                        b->grad[bi] += acc;
                    }
                }
        };
    }
    return out;
}

// Mean absolute error over all elements -> scalar (1,1,1,1). The subgradient
// at exact ties is zero.
template <typename S>
TensorPtr<S> l1_loss(const TensorPtr<S>& pred, const TensorPtr<S>& target) {
    if (!(pred->shape == target->shape))
        throw ContractViolation("l1_loss: shape " + pred->shape.str() + " vs " +
                                target->shape.str());
    const bool track = detail::any_requires<S>({&pred, &target});
    auto out = TensorT<S>::create({1, 1, 1, 1}, track);
    out->op = "l1_loss";
    const i64 total = pred->numel();
    S acc = 0;
    for (i64 i = 0; i < total; ++i)
        acc += std::abs(pred->data[std::size_t(i)] - target->data[std::size_t(i)]);
    out->data[0] = acc / S(total);
    if (track) {
        out->parents = {pred, target};
        TensorT<S>* self = out.get();
        out->backward_step = [self, pred, target]() {
            if (self->grad.empty()) return;
            const S g = self->grad[0] / S(pred->numel());
            if (pred->requires_grad) pred->ensure_grad();
            if (target->requires_grad) target->ensure_grad();
            for (std::size_t i = 0; i < pred->data.size(); ++i) {
                const S d = pred->data[i] - target->data[i];
                const S s = d > S(0) ? g : (d < S(0) ? -g : S(0));
                if (pred->requires_grad) pred->grad[i] += s;
                if (target->requires_grad) target->grad[i] -= s;
            }
        };
    }
    return out;
}

// Sum of all elements -> scalar (1,1,1,1).
template <typename S>
TensorPtr<S> sum_all(const TensorPtr<S>& x) {
    auto out = TensorT<S>::create({1, 1, 1, 1}, x->requires_grad);
    out->op = "sum_all";
    S acc = 0;
    for (const S v : x->data) acc += v;
    out->data[0] = acc;
    if (x->requires_grad) {
        out->parents = {x};
        TensorT<S>* self = out.get();
        out->backward_step = [self, x]() {
            if (self->grad.empty()) return;
            x->ensure_grad();
            const S g = self->grad[0];
            for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += g;
        };
    }
    return out;
}

// Reverse-mode sweep from a scalar root. Nodes are visited in reverse
// topological order, each exactly once; leaves not reachable from the root
// are untouched. Grad buffers accumulate, so zero them between recordings.
template <typename S>
void backward(const TensorPtr<S>& root) {
    if (root->shape.numel() != 1)
        throw ContractViolation("backward: root shape " + root->shape.str() + " is not scalar");

    std::vector<TensorT<S>*> order;
    std::unordered_set<TensorT<S>*> seen;
    // Iterative post-order DFS; the second visit of a frame emits the node.
    std::vector<std::pair<TensorT<S>*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorT<S>* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] += S(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backward_step) (*it)->backward_step();
}

}  // namespace drsan
