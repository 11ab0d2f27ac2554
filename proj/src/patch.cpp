#include "drsan/image.hpp"

namespace drsan {

namespace {

Image crop(const Image& img, int top, int left, int h, int w) {
    Image out(h, w, img.channels);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, top + y, left + x);
    return out;
}

Image flip_horizontal(const Image& img) {
    Image out(img.h, img.w, img.channels);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x) out.at(c, y, x) = img.at(c, y, img.w - 1 - x);
    return out;
}

// One counter-clockwise quarter turn; (y, x) -> (w-1-x, y).
Image rotate_ccw(const Image& img) {
    Image out(img.w, img.h, img.channels);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x) out.at(c, img.w - 1 - x, y) = img.at(c, y, x);
    return out;
}

}  // namespace

std::optional<PatchPair> sample_patch(const Image& hr, const Image& lr, int patch,
                                      int scale, Rng& rng) {
    if (patch < 1) throw ContractViolation("sample_patch: patch size must be >= 1");
    if (scale < 1) throw ContractViolation("sample_patch: scale must be >= 1");
    if (hr.h != lr.h * scale || hr.w != lr.w * scale)
        throw ContractViolation("sample_patch: hr " + std::to_string(hr.h) + "x" +
                                std::to_string(hr.w) + " is not lr " + std::to_string(lr.h) +
                                "x" + std::to_string(lr.w) + " times " + std::to_string(scale));
    if (hr.channels != lr.channels)
        throw ContractViolation("sample_patch: channel mismatch");
    if (lr.h < patch || lr.w < patch) return std::nullopt;

    // uniform over every valid corner, including the extremes
    const int top = int(rng.below(std::uint64_t(lr.h - patch + 1)));
    const int left = int(rng.below(std::uint64_t(lr.w - patch + 1)));

    PatchPair pair;
    pair.top = top;
    pair.left = left;
    pair.lr = crop(lr, top, left, patch, patch);
    pair.hr = crop(hr, top * scale, left * scale, patch * scale, patch * scale);
    return pair;
}

Image augment_image(const Image& img, int d) {
    if (d < 0 || d > 7)
        throw ContractViolation("augment: transform index " + std::to_string(d) +
                                " outside [0, 8)");
    Image out = (d & 4) ? flip_horizontal(img) : img;
    for (int r = 0; r < (d & 3); ++r) out = rotate_ccw(out);
    return out;
}

PatchPair augment(const PatchPair& pair, int d) {
    PatchPair out;
    out.top = pair.top;
    out.left = pair.left;
    out.lr = augment_image(pair.lr, d);
    out.hr = augment_image(pair.hr, d);
    return out;
}

}  // namespace drsan
