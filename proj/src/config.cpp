#include "drsan/config.hpp"

#include <json.hpp>

namespace drsan {

void NetworkConfig::validate() const {
    if (drags < 1) throw ConfigError("config: drags must be >= 1, got " + std::to_string(drags));
    if (blocks < 1)
        throw ConfigError("config: blocks must be >= 1, got " + std::to_string(blocks));
    if (channels < 1)
        throw ConfigError("config: channels must be >= 1, got " + std::to_string(channels));
    if (scale != 2 && scale != 3 && scale != 4)
        throw ConfigError("config: scale must be 2, 3 or 4, got " + std::to_string(scale));
    if (has_drm() && drm_hidden < 1)
        throw ConfigError("config: drm_hidden must be >= 1, got " + std::to_string(drm_hidden));
}

const char* to_string(ConnectionMode m) {
    switch (m) {
        case ConnectionMode::standard_res: return "standard_res";
        case ConnectionMode::all_res: return "all_res";
        case ConnectionMode::dra: return "dra";
    }
    return "?";
}

const char* to_string(DrmActivation a) {
    switch (a) {
        case DrmActivation::none: return "none";
        case DrmActivation::sigmoid: return "sigmoid";
        case DrmActivation::tanh: return "tanh";
    }
    return "?";
}

ConnectionMode connection_mode_from_string(const std::string& s) {
    if (s == "standard_res") return ConnectionMode::standard_res;
    if (s == "all_res") return ConnectionMode::all_res;
    if (s == "dra") return ConnectionMode::dra;
    throw ConfigError("config: unknown connection_mode \"" + s + "\"");
}

DrmActivation drm_activation_from_string(const std::string& s) {
    if (s == "none") return DrmActivation::none;
    if (s == "sigmoid") return DrmActivation::sigmoid;
    if (s == "tanh") return DrmActivation::tanh;
    throw ConfigError("config: unknown drm_activation \"" + s + "\"");
}

std::string NetworkConfig::to_json() const {
    nlohmann::ordered_json j;
    j["drags"] = drags;
    j["blocks"] = blocks;
    j["channels"] = channels;
    j["scale"] = scale;
    j["drm_hidden"] = drm_hidden;
    j["connection_mode"] = to_string(connection_mode);
    j["rsa_enabled"] = rsa_enabled;
    j["concat_enabled"] = concat_enabled;
    j["drm_activation"] = to_string(drm_activation);
    return j.dump();
}

NetworkConfig preset(const std::string& name) {
    NetworkConfig c;
    if (name == "drsan-32s") {
        c.channels = 32, c.drags = 4, c.blocks = 4;
    } else if (name == "drsan-32m") {
        c.channels = 32, c.drags = 8, c.blocks = 4;
    } else if (name == "drsan-32l") {
        c.channels = 32, c.drags = 10, c.blocks = 4;
    } else if (name == "drsan-48s") {
        c.channels = 48, c.drags = 4, c.blocks = 3;
    } else if (name == "drsan-48m") {
        c.channels = 48, c.drags = 8, c.blocks = 3;
    } else {
        throw ConfigError("config: unknown preset \"" + name + "\"");
    }
    return c;
}

NetworkConfig config_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config: top-level JSON value must be an object");

    NetworkConfig c;
    if (j.contains("preset")) {
        if (!j["preset"].is_string())
            throw ConfigError("config: \"preset\" must be a string");
        c = preset(j["preset"].get<std::string>());
    }

    auto get_int = [&](const char* key, int& out) {
        if (!j[key].is_number_integer())
            throw ConfigError(std::string("config: \"") + key + "\" must be an integer");
        out = j[key].get<int>();
    };
    auto get_bool = [&](const char* key, bool& out) {
        if (!j[key].is_boolean())
            throw ConfigError(std::string("config: \"") + key + "\" must be a boolean");
        out = j[key].get<bool>();
    };
    auto get_str = [&](const char* key) {
        if (!j[key].is_string())
            throw ConfigError(std::string("config: \"") + key + "\" must be a string");
        return j[key].get<std::string>();
    };

    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (key == "preset") continue;
        if (key == "drags") get_int("drags", c.drags);
        else if (key == "blocks") get_int("blocks", c.blocks);
        else if (key == "channels") get_int("channels", c.channels);
        else if (key == "scale") get_int("scale", c.scale);
        else if (key == "drm_hidden") get_int("drm_hidden", c.drm_hidden);
        else if (key == "connection_mode")
            c.connection_mode = connection_mode_from_string(get_str("connection_mode"));
        else if (key == "rsa_enabled") get_bool("rsa_enabled", c.rsa_enabled);
        else if (key == "concat_enabled") get_bool("concat_enabled", c.concat_enabled);
        else if (key == "drm_activation")
            c.drm_activation = drm_activation_from_string(get_str("drm_activation"));
        else
            throw ConfigError("config: unknown key \"" + key + "\"");
    }
    c.validate();
    return c;
}

}  // namespace drsan
