#include "drsan/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "drsan/checkpoint.hpp"

namespace drsan {

double lr_at(std::int64_t iter, const TrainConfig& cfg) {
    if (iter < 0) throw ContractViolation("lr_at: negative iteration");
    if (cfg.decay_interval < 1) throw ContractViolation("lr_at: decay interval must be >= 1");
    return cfg.lr0 * std::pow(cfg.decay_factor, double(iter / cfg.decay_interval));
}

namespace {

// The offender for divergence reports; NaN gradients rank above everything.
std::string steepest_parameter(const ParameterStoreT<float>& params) {
    std::string worst_name = "?";
    double worst = -1.0;
    for (const auto& [name, t] : params.entries()) {
        for (const float g : t->grad) {
            const double mag = std::isnan(g) ? std::numeric_limits<double>::infinity()
                                             : std::abs(double(g));
            if (mag > worst) {
                worst = mag;
                worst_name = name;
            }
        }
    }
    return worst_name;
}

}  // namespace

TrainResult train(Model& model, const std::vector<Image>& hr_images, const TrainConfig& cfg,
                  const std::filesystem::path& out_dir, std::ostream* log) {
    if (hr_images.empty()) throw EmptyDatasetError("train: no training images");
    if (cfg.total_iters < 0) throw ContractViolation("train: negative iteration count");
    if (cfg.batch_size < 1) throw ContractViolation("train: batch size must be >= 1");
    if (cfg.patch_size < 1) throw ContractViolation("train: patch size must be >= 1");

    const int scale = model.config.scale;

    // fixed patch sources: cropped ground truth plus its downscaled half
    struct Source {
        Image hr, lr;
    };
    std::vector<Source> sources;
    for (const Image& raw : hr_images) {
        if (raw.channels != 3)
            throw ContractViolation("train: training images must be RGB");
        if (raw.h < scale || raw.w < scale) continue;
        Source s;
        s.hr = modcrop(raw, scale);
        s.lr = bicubic_resize(s.hr, s.hr.h / scale, s.hr.w / scale, /*antialias=*/true);
        if (s.lr.h < cfg.patch_size || s.lr.w < cfg.patch_size) continue;
        sources.push_back(std::move(s));
    }
    if (sources.empty())
        throw TrainingError("train: no image is at least " +
                            std::to_string(cfg.patch_size * scale) + "x" +
                            std::to_string(cfg.patch_size * scale) + " after cropping");

    std::filesystem::create_directories(out_dir);
    Rng rng(cfg.seed);
    AdamState adam = AdamState::zeros_like(model.params);

    if (log) *log << "iter,lr,loss,seconds\n";
    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&]() {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    };

    double loss_value = 0.0;
    std::vector<const Image*> lr_ptrs(std::size_t(cfg.batch_size));
    std::vector<const Image*> hr_ptrs(std::size_t(cfg.batch_size));
    std::vector<PatchPair> batch(std::size_t(cfg.batch_size));

    for (std::int64_t iter = 0; iter < cfg.total_iters; ++iter) {
        for (int b = 0; b < cfg.batch_size; ++b) {
            const Source& src = sources[std::size_t(rng.below(sources.size()))];
            auto pair = sample_patch(src.hr, src.lr, cfg.patch_size, scale, rng);
            // sources smaller than the patch were filtered out above
            batch[std::size_t(b)] = augment(*pair, int(rng.below(8)));
            lr_ptrs[std::size_t(b)] = &batch[std::size_t(b)].lr;
            hr_ptrs[std::size_t(b)] = &batch[std::size_t(b)].hr;
        }
        auto input = tensor_from_images<float>(lr_ptrs);
        auto target = tensor_from_images<float>(hr_ptrs);

        model.params.zero_grads();
        auto loss = l1_loss(network_forward(model, input), target);
        backward(loss);
        loss_value = double(loss->data[0]);

        if (!std::isfinite(loss_value))
            throw TrainingError("train: non-finite loss at iteration " + std::to_string(iter) +
                                " (steepest gradient in \"" +
                                steepest_parameter(model.params) + "\")");

        const double lr = lr_at(iter, cfg);
        adam_step(model.params, adam, lr, cfg);

        if (log && (cfg.log_every > 0 && (iter % cfg.log_every == 0 || iter == cfg.total_iters - 1))) {
            char line[160];
            std::snprintf(line, sizeof line, "%lld,%.8g,%.8g,%.3f",
                          static_cast<long long>(iter), lr, loss_value, elapsed());
            *log << line << "\n";
        }
        if (cfg.checkpoint_every > 0 && (iter + 1) % cfg.checkpoint_every == 0 &&
            iter + 1 < cfg.total_iters)
            save_checkpoint(model, out_dir / ("checkpoint_" + std::to_string(iter + 1) + ".drsan"),
                            &adam, iter + 1);
    }

    TrainResult result;
    result.final_checkpoint = out_dir / "final.drsan";
    result.final_loss = loss_value;
    result.iterations = cfg.total_iters;
    save_checkpoint(model, result.final_checkpoint, &adam, cfg.total_iters);
    return result;
}

}  // namespace drsan
