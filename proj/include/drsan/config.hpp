#pragma once

#include <cstdint>
#include <string>

#include "drsan/errors.hpp"

namespace drsan {

// How each residual block forms its skip input f_d:
//   standard_res: f_d = previous block's output (plain residual chain)
//   all_res:      f_d = unweighted sum of all earlier features
//   dra:          f_d = earlier features weighted by learned,
//                 input-dependent coefficients (adds the DRM head)
enum class ConnectionMode { standard_res, all_res, dra };

// Activation applied to the pooled DRM coefficient vector.
enum class DrmActivation { none, sigmoid, tanh };

struct NetworkConfig {
    int drags = 4;         // residual attention groups in the trunk
    int blocks = 4;        // residual blocks per group
    int channels = 32;     // feature width
    int scale = 2;         // upscaling factor: 2, 3 or 4
    int drm_hidden = 16;   // hidden width of the coefficient head
    ConnectionMode connection_mode = ConnectionMode::dra;
    bool rsa_enabled = true;     // sigmoid spatial attention gate on each block
    bool concat_enabled = true;  // fuse group features by concat + 1x1 conv
    DrmActivation drm_activation = DrmActivation::none;

    // One coefficient per (block, earlier feature) pair.
    int coeff_len() const { return blocks * (blocks + 1) / 2; }
    bool has_drm() const { return connection_mode == ConnectionMode::dra; }

    void validate() const;  // throws ConfigError
    std::string to_json() const;
};

// Named model sizes (drsan-32s/32m/32l/48s/48m). Throws ConfigError for an
// unknown name.
NetworkConfig preset(const std::string& name);

// Parses a config from JSON text. Accepts {"preset": "drsan-32s", ...} with
// optional overrides, or explicit fields {"drags", "blocks", "channels",
// "scale", "drm_hidden", "connection_mode", "rsa_enabled", "concat_enabled",
// "drm_activation"}. Unknown keys are rejected.
NetworkConfig config_from_json(const std::string& text);

const char* to_string(ConnectionMode m);
const char* to_string(DrmActivation a);
ConnectionMode connection_mode_from_string(const std::string& s);
DrmActivation drm_activation_from_string(const std::string& s);

}  // namespace drsan
