#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "drsan/model.hpp"
#include "drsan/train.hpp"

namespace drsan {

// Binary snapshot of a model: config (as JSON), every parameter as float32
// little-endian, optionally the Adam moments, and the iteration counter.
// Saving and re-loading restores parameters bit for bit, so the file doubles
// as a determinism witness.
void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     const AdamState* optimizer = nullptr, std::int64_t iteration = 0);

struct LoadedCheckpoint {
    Model model;
    std::optional<AdamState> optimizer;
    std::int64_t iteration = 0;
};

// Rebuilds the network from the embedded config, then fills every parameter.
// Truncation, a bad magic/version, or a parameter mismatch raise the
// corresponding CheckpointError subclass naming the first offender.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// Fills an existing model's parameters from a checkpoint; the embedded
// config must match `model.config` exactly (CheckpointMismatchError names
// the first differing field or parameter otherwise).
void load_checkpoint_into(Model& model, const std::filesystem::path& path);

}  // namespace drsan
