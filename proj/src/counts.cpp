#include "drsan/model.hpp"

namespace drsan {

namespace {

i64 conv_params(i64 in_c, i64 out_c, i64 k) { return in_c * out_c * k * k + out_c; }
i64 conv_macs(i64 in_c, i64 out_c, i64 k) { return in_c * out_c * k * k; }

}  // namespace

i64 count_params(const NetworkConfig& config) {
    config.validate();
    const i64 c = config.channels, N = config.blocks;

    i64 per_block = 2 * c + 2 * conv_params(c, c, 3);  // two PReLUs, two convs
    i64 per_group = N * per_block;
    if (config.has_drm())
        per_group += conv_params(c, config.drm_hidden, 1) + config.drm_hidden +
                     conv_params(config.drm_hidden, config.coeff_len(), 1);
    if (config.concat_enabled) per_group += conv_params(c * (N + 1), c, 1);

    i64 total = conv_params(3, c, 3);          // feature extraction
    total += config.drags * per_group;
    total += conv_params(c, c, 3);             // conv after the last group
    if (config.scale == 4)
        total += 2 * conv_params(c, c * 4, 3); // two x2 upsampling stages
    else
        total += conv_params(c, c * config.scale * config.scale, 3);
    total += conv_params(c, 3, 3);             // reconstruction
    return total;
}

i64 count_multi_adds(const NetworkConfig& config, i64 hr_h, i64 hr_w) {
    config.validate();
    if (hr_h < 1 || hr_w < 1)
        throw ContractViolation("count_multi_adds: non-positive output size " +
                                std::to_string(hr_h) + "x" + std::to_string(hr_w));
    const i64 s = config.scale;
    const i64 hr_area = hr_h * hr_w;
    if (hr_area % (s * s) != 0)
        throw ConfigError("count_multi_adds: output area " + std::to_string(hr_area) +
                          " not divisible by scale^2 = " + std::to_string(s * s));
    const i64 lr_area = hr_area / (s * s);
    const i64 c = config.channels, N = config.blocks;

    // everything up to the upsampler runs on the low-resolution grid
    i64 per_px = conv_macs(3, c, 3);
    i64 per_group = N * 2 * conv_macs(c, c, 3);
    if (config.has_drm())
        per_group += conv_macs(c, config.drm_hidden, 1) +
                     conv_macs(config.drm_hidden, config.coeff_len(), 1);
    if (config.concat_enabled) per_group += conv_macs(c * (N + 1), c, 1);
    per_px += config.drags * per_group;
    per_px += conv_macs(c, c, 3);

    i64 total = per_px * lr_area;
    if (s == 4) {
        total += conv_macs(c, c * 4, 3) * lr_area;        // first x2 stage
        total += conv_macs(c, c * 4, 3) * (hr_area / 4);  // second x2 stage
    } else {
        total += conv_macs(c, c * s * s, 3) * lr_area;
    }
    total += conv_macs(c, 3, 3) * hr_area;  // reconstruction at full size
    return total;
}

}  // namespace drsan
