#include <cmath>

#include "drsan/image.hpp"

namespace drsan {

namespace {

// Keys cubic kernel with a = -0.5 (the classic "bicubic" choice).
double cubic(double t) {
    t = std::abs(t);
    if (t <= 1.0) return (1.5 * t - 2.5) * t * t + 1.0;
    if (t < 2.0) return ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0;
    return 0.0;
}

struct Tap {
    int index;
    double weight;
};

// Per output coordinate: the contributing input indices (edge-clamped) and
// normalized weights. Output pixel i samples around (i + 0.5) * in/out - 0.5.
std::vector<std::vector<Tap>> build_taps(int in_size, int out_size, bool antialias) {
    const double step = double(in_size) / double(out_size);
    const double kernel_scale = (antialias && out_size < in_size) ? step : 1.0;
    const double radius = 2.0 * kernel_scale;

    std::vector<std::vector<Tap>> taps;
    taps.resize(std::size_t(out_size));
    for (int i = 0; i < out_size; ++i) {
        const double center = (i + 0.5) * step - 0.5;
        const int lo = int(std::ceil(center - radius));
        const int hi = int(std::floor(center + radius));
        auto& row = taps[std::size_t(i)];
        double sum = 0.0;
        for (int j = lo; j <= hi; ++j) {
            const double w = cubic((j - center) / kernel_scale);
            if (w == 0.0) continue;
            row.push_back({std::min(in_size - 1, std::max(0, j)), w});
            sum += w;
        }
        // weights must sum to one so constant images are preserved exactly
        for (Tap& t : row) t.weight /= sum;
    }
    return taps;
}

}  // namespace

Image bicubic_resize(const Image& img, int out_h, int out_w, bool antialias) {
    if (img.empty()) throw ContractViolation("bicubic_resize: empty image");
    if (out_h < 1 || out_w < 1)
        throw ContractViolation("bicubic_resize: non-positive output size " +
                                std::to_string(out_h) + "x" + std::to_string(out_w));

    const auto col_taps = build_taps(img.w, out_w, antialias);
    const auto row_taps = build_taps(img.h, out_h, antialias);

    // horizontal pass: (h, w) -> (h, out_w), double precision accumulators
    std::vector<double> mid(std::size_t(img.channels) * img.h * out_w);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.h; ++y) {
            const float* src = &img.data[(std::size_t(c) * img.h + y) * img.w];
            double* dst = &mid[(std::size_t(c) * img.h + y) * out_w];
            for (int x = 0; x < out_w; ++x) {
                double acc = 0.0;
                for (const Tap& t : col_taps[std::size_t(x)])
                    acc += t.weight * double(src[t.index]);
                dst[x] = acc;
            }
        }

    // vertical pass: (h, out_w) -> (out_h, out_w)
    Image out(out_h, out_w, img.channels);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < out_h; ++y)
            for (int x = 0; x < out_w; ++x) {
                double acc = 0.0;
                for (const Tap& t : row_taps[std::size_t(y)])
                    acc += t.weight * mid[(std::size_t(c) * img.h + t.index) * out_w + x];
                out.at(c, y, x) = float(acc);
            }
    return out;
}

}  // namespace drsan
