// Acceptance checks: one line per criterion, nonzero exit if any fails.
//
// The slow criteria (tiny-model overfit, bit-identical retraining) train real
// networks, so a full run takes a few minutes.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "drsan/analysis.hpp"
#include "drsan/gradcheck.hpp"
#include "drsan/metrics.hpp"
#include "drsan/model.hpp"
#include "drsan/train.hpp"
#include "helpers.hpp"

using namespace drsan;

namespace {

constexpr float kTwoPi = 6.2831853f;

int failures = 0;
int criterion_index = 0;

void run_criterion(const char* name, const std::function<std::string()>& body) {
    ++criterion_index;
    const auto t0 = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = true;
    try {
        detail = body();
    } catch (const std::exception& e) {
        ok = false;
        detail = std::string("exception: ") + e.what();
    }
    if (detail.rfind("FAIL", 0) == 0) ok = false;
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!ok) ++failures;
    std::printf("[%d/9] %-52s %s  %6.2fs  %s\n", criterion_index, name,
                ok ? "PASS" : "FAIL", secs, detail.c_str());
    std::fflush(stdout);
}

std::string fail(const std::string& why) { return "FAIL: " + why; }

// --- criterion 5/8/9 shared helpers -----------------------------------------

// Four training images: gentle gradients plus detail close to the half-size
// grid's limit, which plain interpolation smears but a network can learn to
// restore.
Image synth_hr(int n) {
    Image img(96, 96, 3);
    const float ph = float(n) * 1.7f;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 96; ++y)
            for (int x = 0; x < 96; ++x) {
                const float fx = float(x), fy = float(y);
                float v = 0.5f + 0.08f * std::sin(kTwoPi * (fx + fy) / 96.f + float(c));
                v += 0.16f * std::sin(kTwoPi * fx / 6.f + ph) *
                     std::cos(kTwoPi * fy / 8.f + 0.6f * float(c));
                v += 0.14f * std::sin(kTwoPi * (fx - fy) / 12.f + 0.9f * ph + float(c));
                v += 0.10f * std::cos(kTwoPi * fy / 6.f + 2.1f * ph);
                img.at(c, y, x) = std::clamp(v, 0.f, 1.f);
            }
    return img;
}

NetworkConfig overfit_config() {
    NetworkConfig cfg;
    cfg.channels = 8;
    cfg.drags = 1;
    cfg.blocks = 2;
    cfg.drm_hidden = 4;
    cfg.scale = 2;
    return cfg;
}

TrainConfig overfit_train_config(std::int64_t iters) {
    TrainConfig cfg;
    cfg.total_iters = iters;
    cfg.batch_size = 8;
    cfg.patch_size = 24;
    cfg.lr0 = 1e-3;
    cfg.seed = 202;
    cfg.log_every = 500;
    return cfg;
}

Image super_resolve(const Model& model, const Image& lr) {
    return image_from_tensor(*network_forward(model, tensor_from_images<float>({&lr})), 0);
}

// Mean luma fidelity over the training images for the model and for plain
// cubic upscaling of the same half-size inputs.
std::pair<double, double> training_set_psnr(const Model& model,
                                            const std::vector<Image>& hr_images) {
    double model_db = 0.0, cubic_db = 0.0;
    for (const auto& full : hr_images) {
        const Image hr = modcrop(full, model.config.scale);
        const Image lr =
            bicubic_resize(hr, hr.h / model.config.scale, hr.w / model.config.scale, true);
        const Image sr = super_resolve(model, lr);
        Image up = bicubic_resize(lr, hr.h, hr.w, false);
        for (float& v : up.data) v = std::clamp(v, 0.f, 1.f);
        const Image y_hr = rgb_to_y(hr);
        model_db += psnr(rgb_to_y(sr), y_hr, model.config.scale);
        cubic_db += psnr(rgb_to_y(up), y_hr, model.config.scale);
    }
    const double n = double(hr_images.size());
    return {model_db / n, cubic_db / n};
}

// --- criterion 7 oracles -----------------------------------------------------

double psnr_ref(const Image& a, const Image& b) {
    double sq = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = double(a.data[i]) - double(b.data[i]);
        sq += d * d;
    }
    const double mse = sq / double(a.data.size());
    return mse == 0.0 ? 99.0 : 10.0 * std::log10(1.0 / mse);
}

// Sliding 11x11 Gaussian-weighted similarity computed straight from the
// definition: explicit weighted deviations rather than moment identities.
double ssim_ref(const Image& a, const Image& b) {
    constexpr int kWin = 11;
    constexpr double kC1 = 1e-4, kC2 = 9e-4;
    double w[kWin][kWin], wsum = 0.0;
    for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) {
            const double dy = i - 5, dx = j - 5;
            w[i][j] = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
            wsum += w[i][j];
        }
    for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) w[i][j] /= wsum;

    double total = 0.0;
    long windows = 0;
    for (int y0 = 0; y0 + kWin <= a.h; ++y0)
        for (int x0 = 0; x0 + kWin <= a.w; ++x0) {
            double mu_a = 0.0, mu_b = 0.0;
            for (int i = 0; i < kWin; ++i)
                for (int j = 0; j < kWin; ++j) {
                    mu_a += w[i][j] * double(a.at(0, y0 + i, x0 + j));
                    mu_b += w[i][j] * double(b.at(0, y0 + i, x0 + j));
                }
            double va = 0.0, vb = 0.0, cov = 0.0;
            for (int i = 0; i < kWin; ++i)
                for (int j = 0; j < kWin; ++j) {
                    const double da = double(a.at(0, y0 + i, x0 + j)) - mu_a;
                    const double db = double(b.at(0, y0 + i, x0 + j)) - mu_b;
                    va += w[i][j] * da * da;
                    vb += w[i][j] * db * db;
                    cov += w[i][j] * da * db;
                }
            total += ((2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2)) /
                     ((mu_a * mu_a + mu_b * mu_b + kC1) * (va + vb + kC2));
            ++windows;
        }
    return total / double(windows);
}

}  // namespace

int main() {
    std::printf("drsan acceptance run\n");

    run_criterion("preset parameter totals", [] {
        const std::pair<const char*, double> presets[] = {{"drsan-32s", 0.37},
                                                          {"drsan-48s", 0.65},
                                                          {"drsan-32m", 0.69},
                                                          {"drsan-32l", 0.85},
                                                          {"drsan-48m", 1.19}};
        std::string detail;
        for (const auto& [name, millions] : presets) {
            const i64 got = count_params(preset(name));
            if (std::abs(double(got) / 1e6 - millions) > 0.005)
                return fail(std::string(name) + " counts " + std::to_string(got) +
                            ", expected about " + std::to_string(millions) + "M");
            detail += std::to_string(got) + " ";
        }
        return "(" + detail + "params)";
    });

    run_criterion("ablation parameter totals", [] {
        NetworkConfig cfg;
        cfg.channels = 48;
        cfg.drags = 2;
        cfg.blocks = 3;
        const i64 full = count_params(cfg);
        cfg.connection_mode = ConnectionMode::standard_res;  // no coefficient head,
        cfg.concat_enabled = false;                          // no fusion conv
        const i64 baseline = count_params(cfg);
        if (std::llabs(full - 377000) > 1000)
            return fail("full configuration counts " + std::to_string(full));
        if (std::llabs(baseline - 357000) > 1000)
            return fail("standard-residual baseline counts " + std::to_string(baseline));
        return "(" + std::to_string(full) + " vs " + std::to_string(baseline) + ")";
    });

    run_criterion("multiply-add totals at 1280x720", [] {
        struct Row {
            const char* name;
            int scale;
            double expected;
        };
        const Row rows[] = {{"drsan-32s", 2, 85.5e9},
                            {"drsan-48s", 2, 150.0e9},
                            {"drsan-32s", 3, 43.2e9},
                            {"drsan-48m", 4, 88.7e9}};
        std::string detail;
        for (const auto& row : rows) {
            NetworkConfig cfg = preset(row.name);
            cfg.scale = row.scale;
            const i64 got = count_multi_adds(cfg, 720, 1280);
            const double rel = std::abs(double(got) - row.expected) / row.expected;
            if (rel > 0.03)
                return fail(std::string(row.name) + " x" + std::to_string(row.scale) +
                            " counts " + std::to_string(got) + " (" +
                            std::to_string(rel * 100) + "% off)");
            detail += std::to_string(got) + " ";
        }
        return "(" + detail + "macs)";
    });

    run_criterion("gradients vs central differences, full network", [] {
        NetworkConfig cfg;
        cfg.channels = 4;
        cfg.drags = 1;
        cfg.blocks = 2;
        cfg.drm_hidden = 4;
        cfg.scale = 2;

        auto x = TensorT<double>::create({1, 3, 6, 6}, /*requires_grad=*/true);
        for (i64 c = 0; c < 3; ++c)
            for (i64 y = 0; y < 6; ++y)
                for (i64 xx = 0; xx < 6; ++xx)
                    x->data[std::size_t((c * 6 + y) * 6 + xx)] =
                        0.5 +
                        0.3 * std::sin(0.9 * double(xx) + 0.4 * double(y) + double(c));

        // Central differences are blind at a kink: nudging a weight by eps
        // says nothing about the derivative if some activation sits closer
        // than eps times the path gain to zero, and under this init the
        // smallest margin over all PReLU inputs is typically ~1e-5. Scan
        // weight seeds for an operating point where every activation clears
        // the kinks by at least 3e-4 (a few times eps), so no nudge during
        // the check can cross one.
        auto clearance = [](const ModelT<double>& model, const TensorPtr<double>& in) {
            std::vector<DragTraceT<double>> trace;
            ForwardHooks<double> hooks;
            hooks.trace = &trace;
            network_forward(model, in, &hooks);
            double min_abs = 1e30;
            auto scan = [&](const TensorPtr<double>& t) {
                for (const double v : t->data) min_abs = std::min(min_abs, std::abs(v));
            };
            for (std::size_t g = 0; g < trace.size(); ++g) {
                const auto& layers = model.drags[g];
                for (std::size_t n = 0; n < layers.blocks.size(); ++n) {
                    const auto& f = trace[g].f[n];
                    scan(f);
                    scan(conv2d(prelu(f, layers.blocks[n].prelu0),
                                layers.blocks[n].conv0.weight, layers.blocks[n].conv0.bias,
                                layers.blocks[n].conv0.padding));
                }
                if (layers.drm)
                    scan(conv2d(trace[g].f[0], layers.drm->conv_in.weight,
                                layers.drm->conv_in.bias, 0));
            }
            return min_abs;
        };

        std::optional<ModelT<double>> model;
        std::uint64_t chosen = 0;
        for (std::uint64_t seed = 1; seed <= 3000 && !model; ++seed) {
            auto candidate = build_network<double>(cfg, seed);
            if (clearance(candidate, x) >= 3e-4) {
                model = std::move(candidate);
                chosen = seed;
            }
        }
        if (!model)
            return fail("no weight seed in 1..3000 gives activation clearance >= 3e-4");

        // Park the target slightly below the initial prediction, same
        // direction everywhere: the loss gradient is then a coherent +1/N at
        // every pixel (mixed signs would cancel and push some weight
        // gradients into the noise), no nudged prediction can re-cross its
        // target (the nudge moves it by far less than 0.01), and the small
        // loss value keeps finite-difference rounding noise well below the
        // comparison floor.
        const auto pred = network_forward(*model, x);
        auto target = TensorT<double>::create(pred->shape, false);
        Rng rng(77);
        for (std::size_t i = 0; i < target->data.size(); ++i)
            target->data[i] = pred->data[i] - rng.uniform(0.01, 0.03);

        std::vector<TensorPtr<double>> inputs{x};
        for (const auto& [name, t] : model->params.entries()) inputs.push_back(t);

        const double worst = finite_diff_check<double>(
            [&] { return l1_loss(network_forward(*model, x), target); }, inputs);
        if (worst >= 1e-4) return fail("max relative error " + std::to_string(worst));
        char buf[96];
        std::snprintf(buf, sizeof buf, "(max rel err %.2e, weight seed %llu)", worst,
                      (unsigned long long)chosen);
        return std::string(buf);
    });

    std::vector<Image> overfit_images;
    for (int n = 0; n < 4; ++n) overfit_images.push_back(synth_hr(n));
    std::optional<Model> overfit_model;

    run_criterion("tiny-model overfit beats cubic upscaling by 1 dB", [&] {
        testutil::TempDir dir("accept_overfit");
        auto model = build_network<float>(overfit_config(), 101);
        train(model, overfit_images, overfit_train_config(2000), dir.path(), nullptr);
        const auto [model_db, cubic_db] = training_set_psnr(model, overfit_images);
        overfit_model = model;
        char buf[96];
        std::snprintf(buf, sizeof buf, "(model %.2f dB vs cubic %.2f dB)", model_db,
                      cubic_db);
        if (model_db < cubic_db + 1.0) return fail(std::string(buf));
        return std::string(buf);
    });

    run_criterion("attention gate invariants", [] {
        NetworkConfig cfg;
        cfg.channels = 6;
        cfg.drags = 2;
        cfg.blocks = 2;
        cfg.drm_hidden = 4;
        cfg.scale = 2;
        double worst_residual = 0.0;
        for (const std::uint64_t seed : {11u, 12u, 13u}) {
            const auto model = build_network<float>(cfg, seed);
            Rng rng(seed + 100);
            auto x = testutil::random_tensor<float>({2, 3, 10, 9}, rng, 0.0, 1.0);

            std::vector<DragTraceT<float>> trace;
            ForwardHooks<float> hooks;
            hooks.trace = &trace;
            network_forward(model, x, &hooks);
            for (const auto& g : trace)
                for (std::size_t n = 0; n < g.alpha.size(); ++n) {
                    for (const float a : g.alpha[n]->data)
                        if (!(a > 0.f && a < 1.f))
                            return fail("alpha " + std::to_string(a) + " outside (0,1)");
                    const auto& fn = g.f[n + 1];
                    for (std::size_t i = 0; i < fn->data.size(); ++i) {
                        const double residual =
                            std::abs(double(fn->data[i]) / double(g.alpha[n]->data[i]) -
                                     double(g.z[n]->data[i]) - double(g.fd[n]->data[i]));
                        worst_residual = std::max(worst_residual, residual);
                    }
                }

            // switching the gate off must equal forcing it to one
            ForwardHooks<float> force;
            force.force_alpha_to_one = true;
            const auto forced = network_forward(model, x, &force);
            auto plain = model;
            plain.config.rsa_enabled = false;
            const auto off = network_forward(plain, x);
            if (forced->data != off->data)
                return fail("gate-off and forced-alpha outputs differ");
        }
        if (worst_residual >= 1e-6)
            return fail("combine residual " + std::to_string(worst_residual));
        char buf[64];
        std::snprintf(buf, sizeof buf, "(combine residual %.2e)", worst_residual);
        return std::string(buf);
    });

    run_criterion("psnr/ssim vs independent oracles", [] {
        Rng rng(907);
        double worst_p = 0.0, worst_s = 0.0;
        for (int trial = 0; trial < 20; ++trial) {
            const Image a = testutil::random_image(32, 32, 1, rng);
            Image b = testutil::random_image(32, 32, 1, rng);
            if (trial % 2 == 0)  // half the pairs nearly agree
                for (std::size_t i = 0; i < b.data.size(); ++i)
                    b.data[i] = std::clamp(a.data[i] + 0.05f * (b.data[i] - 0.5f), 0.f, 1.f);
            worst_p = std::max(worst_p, std::abs(psnr(a, b, 0) - psnr_ref(a, b)));
            worst_s = std::max(worst_s, std::abs(ssim(a, b, 0) - ssim_ref(a, b)));
        }
        if (worst_p > 1e-8) return fail("psnr off by " + std::to_string(worst_p));
        if (worst_s > 1e-8) return fail("ssim off by " + std::to_string(worst_s));

        const Image self = testutil::random_image(24, 24, 1, rng);
        if (std::abs(ssim(self, self, 0) - 1.0) > 1e-12)
            return fail("ssim(x,x) != 1");
        if (psnr(self, self, 0) != 99.0) return fail("psnr cap not applied");
        char buf[64];
        std::snprintf(buf, sizeof buf, "(worst psnr %.1e, ssim %.1e)", worst_p, worst_s);
        return std::string(buf);
    });

    run_criterion("self-transplant leaves the output unchanged", [&] {
        if (!overfit_model) return fail("no trained model available");
        const Image lr = bicubic_resize(overfit_images[0], 48, 48, true);
        const auto result = transplant_dra(*overfit_model, lr, lr);
        for (const float v : result.diff_map.data)
            if (v != 0.f) return fail("difference map has " + std::to_string(v));
        return std::string("(difference map identically zero)");
    });

    run_criterion("bit-identical retraining", [&] {
        std::string bytes[2];
        for (auto& run_bytes : bytes) {
            testutil::TempDir dir("accept_determinism");
            auto model = build_network<float>(overfit_config(), 101);
            const auto result =
                train(model, overfit_images, overfit_train_config(150), dir.path(), nullptr);
            std::ifstream in(result.final_checkpoint, std::ios::binary);
            run_bytes.assign(std::istreambuf_iterator<char>(in),
                             std::istreambuf_iterator<char>());
        }
        if (bytes[0].empty()) return fail("empty checkpoint");
        if (bytes[0] != bytes[1]) return fail("checkpoints differ between runs");
        return "(" + std::to_string(bytes[0].size()) + " bytes, identical)";
    });

    std::printf("%d/9 criteria passed\n", 9 - failures);
    return failures == 0 ? 0 : 1;
}
