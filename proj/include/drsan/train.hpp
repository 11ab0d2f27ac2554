#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "drsan/image.hpp"
#include "drsan/model.hpp"

namespace drsan {

struct TrainConfig {
    std::int64_t total_iters = 0;
    int batch_size = 16;
    int patch_size = 48;          // low-resolution patch edge
    double lr0 = 2e-4;
    double decay_factor = 0.85;
    std::int64_t decay_interval = 200000;  // iterations per decay step
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 0;
    std::int64_t log_every = 100;
    std::int64_t checkpoint_every = 0;  // 0 = only the final checkpoint
};

// Stepwise-decayed learning rate: lr0 * factor^(iter / interval).
double lr_at(std::int64_t iter, const TrainConfig& cfg);

// Adam moment buffers, keyed like the parameter store.
template <typename S>
struct AdamStateT {
    std::int64_t step = 0;  // t; incremented before each update
    std::map<std::string, std::vector<S>> m, v;

    static AdamStateT zeros_like(const ParameterStoreT<S>& params) {
        AdamStateT s;
        for (const auto& [name, t] : params.entries()) {
            s.m.emplace(name, std::vector<S>(t->data.size(), S(0)));
            s.v.emplace(name, std::vector<S>(t->data.size(), S(0)));
        }
        return s;
    }
};

using AdamState = AdamStateT<float>;

// One Adam update over every parameter, reading the accumulated grads.
// Moment blends and the step itself are computed in double and stored back
// in S. Parameters without a populated gradient are an error.
template <typename S>
void adam_step(ParameterStoreT<S>& params, AdamStateT<S>& state, double lr,
               const TrainConfig& cfg) {
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step));
    for (const auto& [name, t] : params.entries()) {
        if (t->grad.size() != t->data.size())
            throw ContractViolation("adam_step: parameter \"" + name +
                                    "\" has no gradient");
        auto mit = state.m.find(name);
        auto vit = state.v.find(name);
        if (mit == state.m.end() || vit == state.v.end() ||
            mit->second.size() != t->data.size())
            throw ContractViolation("adam_step: state does not cover parameter \"" + name +
                                    "\"");
        S* m = mit->second.data();
        S* v = vit->second.data();
        for (std::size_t i = 0; i < t->data.size(); ++i) {
            const double g = double(t->grad[i]);
            const double mi = cfg.beta1 * double(m[i]) + (1.0 - cfg.beta1) * g;
            const double vi = cfg.beta2 * double(v[i]) + (1.0 - cfg.beta2) * g * g;
            m[i] = S(mi);
            v[i] = S(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            t->data[i] = S(double(t->data[i]) - lr * mhat / (std::sqrt(vhat) + cfg.eps));
        }
    }
}

struct TrainResult {
    std::filesystem::path final_checkpoint;
    double final_loss = 0.0;
    std::int64_t iterations = 0;
};

// Optimizes the model on random augmented patch batches from `hr_images`
// (RGB, [0,1]); their low-resolution halves come from antialiased cubic
// downscaling. Writes "iter,lr,loss,seconds" rows to `log` (if non-null) and
// checkpoints into out_dir, always including out_dir/final.drsan. The whole
// run is a pure function of the model, images, and cfg.seed — wall-clock
// only ever appears in the log's seconds column. A non-finite loss aborts
// with TrainingError naming the iteration and the steepest parameter.
TrainResult train(Model& model, const std::vector<Image>& hr_images, const TrainConfig& cfg,
                  const std::filesystem::path& out_dir, std::ostream* log);

}  // namespace drsan
