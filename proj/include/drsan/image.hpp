#pragma once

#include <algorithm>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "drsan/errors.hpp"
#include "drsan/rng.hpp"
#include "drsan/tensor.hpp"

namespace drsan {

// Planar float image, values nominally in [0, 1], channel-major:
// data[(c*h + y)*w + x]. channels is 1 (gray/Y) or 3 (RGB).
struct Image {
    int h = 0, w = 0, channels = 0;
    std::vector<float> data;

    Image() = default;
    Image(int h_, int w_, int channels_)
        : h(h_), w(w_), channels(channels_),
          data(std::size_t(h_) * std::size_t(w_) * std::size_t(channels_), 0.f) {}

    float& at(int c, int y, int x) { return data[(std::size_t(c) * h + y) * w + x]; }
    float at(int c, int y, int x) const { return data[(std::size_t(c) * h + y) * w + x]; }
    bool empty() const { return data.empty(); }
};

// Reads an 8-bit PNG (gray or RGB) or binary PPM/PGM, detected by magic
// bytes. 16-bit, paletted, alpha and interlaced PNGs raise
// UnsupportedFormatError; malformed streams raise DecodeError.
Image load_image(const std::filesystem::path& path);

// Writes by extension: .png (gray or RGB), .ppm (RGB), .pgm (gray).
// Values are clamped to [0, 1] and rounded to 8 bits.
void save_image(const Image& img, const std::filesystem::path& path);

// BT.601 luma from RGB in [0, 1]: y = (65.481 r + 128.553 g + 24.966 b + 16) / 255.
Image rgb_to_y(const Image& rgb);

// Cubic-kernel resampling (Keys, a = -0.5), separable, edge-clamped, with
// the classic half-pixel center alignment. When antialias is set and the
// axis shrinks, the kernel widens by the scale factor so frequencies above
// the output Nyquist are attenuated before decimation.
Image bicubic_resize(const Image& img, int out_h, int out_w, bool antialias);

// Crops bottom/right so both dimensions are multiples of m.
Image modcrop(const Image& img, int m);

// A co-located training pair; hr is the p*s square at (top*s, left*s) where
// lr is the p square at (top, left).
struct PatchPair {
    Image lr, hr;
    int top = 0, left = 0;
};

// Draws a patch position uniformly over all valid top-left corners.
// Returns nullopt when the image is smaller than the patch.
std::optional<PatchPair> sample_patch(const Image& hr, const Image& lr, int patch,
                                      int scale, Rng& rng);

// Dihedral transform d in [0, 8): bit 2 flips horizontally first, then
// d & 3 counter-clockwise quarter turns.
Image augment_image(const Image& img, int d);

// Applies the same dihedral transform to both halves of a pair.
PatchPair augment(const PatchPair& pair, int d);

// Stacks same-sized images into a (batch, channels, h, w) tensor.
template <typename S>
TensorPtr<S> tensor_from_images(const std::vector<const Image*>& imgs) {
    if (imgs.empty()) throw ContractViolation("tensor_from_images: no images");
    const Image& first = *imgs[0];
    for (const Image* im : imgs)
        if (im->h != first.h || im->w != first.w || im->channels != first.channels)
            throw ContractViolation("tensor_from_images: mismatched image sizes");
    auto t = TensorT<S>::create({i64(imgs.size()), first.channels, first.h, first.w});
    const std::size_t per = first.data.size();
    for (std::size_t b = 0; b < imgs.size(); ++b)
        for (std::size_t i = 0; i < per; ++i)
            t->data[b * per + i] = S(imgs[b]->data[i]);
    return t;
}

// Extracts one sample of a (batch, c, h, w) tensor as an image, clamping to
// [0, 1] when requested (network outputs are unbounded).
template <typename S>
Image image_from_tensor(const TensorT<S>& t, i64 sample, bool clamp01 = true) {
    if (sample < 0 || sample >= t.shape.n)
        throw ContractViolation("image_from_tensor: sample " + std::to_string(sample) +
                                " out of batch " + std::to_string(t.shape.n));
    Image img(int(t.shape.h), int(t.shape.w), int(t.shape.c));
    const std::size_t per = img.data.size();
    for (std::size_t i = 0; i < per; ++i) {
        float v = float(t.data[std::size_t(sample) * per + i]);
        if (clamp01) v = std::min(1.f, std::max(0.f, v));
        img.data[i] = v;
    }
    return img;
}

}  // namespace drsan
