#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "drsan/image.hpp"

namespace drsan {

// Peak signal-to-noise ratio in dB between single-channel images on a [0, 1]
// scale, ignoring a `crop` pixel border. Identical images report 99.0 dB.
double psnr(const Image& a, const Image& b, int crop);

// Structural similarity between single-channel images on a [0, 1] scale:
// 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03, mean over all
// fully-inside window positions, after removing a `crop` pixel border.
double ssim(const Image& a, const Image& b, int crop);

struct EvalRow {
    std::string name;
    double psnr = 0.0;
    double ssim = 0.0;
};

struct EvalReport {
    std::vector<EvalRow> rows;  // sorted by file name
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    int scale = 0;
    int crop = 0;
};

// Super-resolves one RGB image (any function will do: a network, bicubic, ...).
using SrFunction = std::function<Image(const Image& lr)>;

// Benchmark protocol over a directory of RGB ground-truth images (png/ppm):
// each is cropped to a multiple of `scale`, downscaled with the antialiased
// cubic kernel, restored by `sr`, and compared on the luma channel with a
// border of `crop` pixels removed (pass crop = scale for the usual protocol).
// workers > 1 scores images concurrently; row order is by file name either way.
EvalReport evaluate(const SrFunction& sr, const std::filesystem::path& hr_dir, int scale,
                    int crop, int workers = 1);

// name,psnr,ssim rows followed by a mean row.
void write_eval_csv(const EvalReport& report, std::ostream& out);

}  // namespace drsan
