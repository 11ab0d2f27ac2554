// drsan: train, run and inspect dynamic residual self-attention
// super-resolution networks.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "drsan/analysis.hpp"
#include "drsan/checkpoint.hpp"
#include "drsan/metrics.hpp"
#include "drsan/model.hpp"
#include "drsan/train.hpp"

namespace {

// DRSAN_LOG selects stderr diagnostics: quiet (default), info, or debug.
// Unrecognized non-empty values count as info so DRSAN_LOG=1 works too.
int log_level() {
    const char* v = std::getenv("DRSAN_LOG");
    if (!v || !*v) return 0;
    const std::string s(v);
    if (s == "quiet" || s == "0") return 0;
    if (s == "debug") return 2;
    return 1;
}

void note(const std::string& msg) {
    if (log_level() >= 1) std::cerr << "drsan: " << msg << "\n";
}

void debug_note(const std::string& msg) {
    if (log_level() >= 2) std::cerr << "drsan: " << msg << "\n";
}

std::string read_text(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open \"" + path + "\"");
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

drsan::NetworkConfig network_from_flags(const std::string& preset_name,
                                        const std::string& config_path, int scale) {
    if (preset_name.empty() == config_path.empty())
        throw CLI::ValidationError("pass exactly one of --preset / --config");
    drsan::NetworkConfig cfg = preset_name.empty()
                                   ? drsan::config_from_json(read_text(config_path))
                                   : drsan::preset(preset_name);
    if (scale != 0) cfg.scale = scale;
    cfg.validate();
    return cfg;
}

// Training run description: a "network" object (or preset string) plus
// optional optimizer/schedule fields matching TrainConfig.
struct TrainSpec {
    drsan::NetworkConfig network;
    drsan::TrainConfig train;
};

TrainSpec parse_train_spec(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw drsan::ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("network"))
        throw drsan::ConfigError("config: training config needs a \"network\" entry");

    TrainSpec spec;
    if (j["network"].is_string())
        spec.network = drsan::preset(j["network"].get<std::string>());
    else
        spec.network = drsan::config_from_json(j["network"].dump());

    auto& t = spec.train;
    for (const auto& [key, value] : j.items()) {
        if (key == "network") continue;
        try {
            if (key == "iters") t.total_iters = value.get<std::int64_t>();
            else if (key == "batch_size") t.batch_size = value.get<int>();
            else if (key == "patch_size") t.patch_size = value.get<int>();
            else if (key == "lr0") t.lr0 = value.get<double>();
            else if (key == "decay_factor") t.decay_factor = value.get<double>();
            else if (key == "decay_interval") t.decay_interval = value.get<std::int64_t>();
            else if (key == "beta1") t.beta1 = value.get<double>();
            else if (key == "beta2") t.beta2 = value.get<double>();
            else if (key == "eps") t.eps = value.get<double>();
            else if (key == "seed") t.seed = value.get<std::uint64_t>();
            else if (key == "log_every") t.log_every = value.get<std::int64_t>();
            else if (key == "checkpoint_every") t.checkpoint_every = value.get<std::int64_t>();
            else throw drsan::ConfigError("config: unknown key \"" + key + "\"");
        } catch (const nlohmann::json::exception&) {
            throw drsan::ConfigError("config: bad value for \"" + key + "\"");
        }
    }
    return spec;
}

std::vector<drsan::Image> load_image_dir(const std::string& dir) {
    std::vector<std::filesystem::path> files;
    if (!std::filesystem::is_directory(dir))
        throw drsan::EmptyDatasetError("\"" + dir + "\" is not a directory");
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = entry.path().extension().string();
        if (ext == ".png" || ext == ".ppm" || ext == ".pgm") files.push_back(entry.path());
    }
    if (files.empty()) throw drsan::EmptyDatasetError("no images in \"" + dir + "\"");
    std::sort(files.begin(), files.end());
    std::vector<drsan::Image> images;
    images.reserve(files.size());
    for (const auto& f : files) {
        debug_note("loading " + f.string());
        images.push_back(drsan::load_image(f));
    }
    return images;
}

drsan::Model load_model(const std::string& path) {
    note("loading model " + path);
    auto ckpt = drsan::load_checkpoint(path);
    note("model config " + ckpt.model.config.to_json() + ", trained " +
         std::to_string(ckpt.iteration) + " iterations");
    return std::move(ckpt.model);
}

drsan::Image super_resolve(const drsan::Model& model, const drsan::Image& lr) {
    auto out = drsan::network_forward(model, drsan::tensor_from_images<float>({&lr}));
    return drsan::image_from_tensor(*out, 0);
}

// ---- subcommand bodies ----

int run_count(const std::string& preset_name, const std::string& config_path, int scale,
              int hr_h, int hr_w) {
    const auto cfg = network_from_flags(preset_name, config_path, scale);
    std::cout << "params=" << drsan::count_params(cfg)
              << " multi_adds=" << drsan::count_multi_adds(cfg, hr_h, hr_w) << "\n";
    return 0;
}

int run_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, std::optional<std::uint64_t> seed,
              std::optional<std::int64_t> iters) {
    TrainSpec spec = parse_train_spec(read_text(config_path));
    if (seed) spec.train.seed = *seed;
    if (iters) spec.train.total_iters = *iters;

    note("building network " + spec.network.to_json());
    auto model = drsan::build_network<float>(spec.network, spec.train.seed);
    auto images = load_image_dir(data_dir);
    note("training for " + std::to_string(spec.train.total_iters) + " iterations");

    std::filesystem::create_directories(out_dir);
    std::ofstream log(std::filesystem::path(out_dir) / "train_log.csv",
                      std::ios::trunc);
    if (!log) throw std::runtime_error("cannot open train_log.csv in \"" + out_dir + "\"");
    const auto result = drsan::train(model, images, spec.train, out_dir, &log);
    std::cout << "trained " << result.iterations << " iterations, final loss "
              << result.final_loss << ", checkpoint " << result.final_checkpoint.string()
              << "\n";
    return 0;
}

int run_infer(const std::string& model_path, const std::string& input_path,
              const std::string& output_path) {
    const auto model = load_model(model_path);
    const auto lr = drsan::load_image(input_path);
    if (lr.channels != 3) throw drsan::ContractViolation("input image must be RGB");
    note("restoring " + std::to_string(lr.h) + "x" + std::to_string(lr.w) + " -> " +
         std::to_string(lr.h * model.config.scale) + "x" +
         std::to_string(lr.w * model.config.scale));
    drsan::save_image(super_resolve(model, lr), output_path);
    return 0;
}

int run_eval(const std::string& model_path, const std::string& data_dir, int scale,
             int crop, const std::string& report_path, int workers) {
    const auto model = load_model(model_path);
    if (scale != 0 && scale != model.config.scale)
        throw drsan::ConfigError("eval: --scale " + std::to_string(scale) +
                                 " does not match the checkpoint's scale " +
                                 std::to_string(model.config.scale));
    if (crop < 0) crop = model.config.scale;
    const auto report = drsan::evaluate(
        [&](const drsan::Image& lr) { return super_resolve(model, lr); }, data_dir,
        model.config.scale, crop, workers);
    if (!report_path.empty()) {
        std::ofstream out(report_path, std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open \"" + report_path + "\"");
        drsan::write_eval_csv(report, out);
    }
    drsan::write_eval_csv(report, std::cout);
    return 0;
}

int run_analyze_dra(const std::string& model_path, const std::string& image_path,
                    const std::string& out_path) {
    const auto model = load_model(model_path);
    const auto trace = drsan::extract_trace(model, drsan::load_image(image_path));
    if (trace.coeffs.empty())
        throw drsan::ContractViolation("model has no coefficient head (connection_mode is "
                                       "not dra)");
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open \"" + out_path + "\"");
    out << "image,drag,index,value\n";
    for (std::size_t g = 0; g < trace.coeffs.size(); ++g)
        for (std::size_t i = 0; i < trace.coeffs[g].size(); ++i) {
            char line[64];
            std::snprintf(line, sizeof line, ",%zu,%zu,%.8g", g, i,
                          double(trace.coeffs[g][i]));
            out << image_path << line << "\n";
        }
    return 0;
}

int run_analyze_hist(const std::string& model_path, const std::string& image_path, int block,
                     int bins, const std::string& out_path) {
    const auto model = load_model(model_path);
    const auto trace = drsan::extract_trace(model, drsan::load_image(image_path));
    const auto counts = drsan::attention_histogram(trace, block, bins);
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open \"" + out_path + "\"");
    out << "block,bin_lo,bin_hi,count\n";
    for (std::size_t i = 0; i < counts.size(); ++i) {
        char line[96];
        std::snprintf(line, sizeof line, "%d,%.6f,%.6f,%lld", block, double(i) / bins,
                      double(i + 1) / bins, static_cast<long long>(counts[i]));
        out << line << "\n";
    }
    return 0;
}

int run_analyze_map(const std::string& model_path, const std::string& image_path, int block,
                    const std::string& out_path) {
    const auto model = load_model(model_path);
    const auto trace = drsan::extract_trace(model, drsan::load_image(image_path));
    const auto [raw, scaled] = drsan::attention_spatial_map(trace, block);
    (void)raw;
    drsan::save_image(scaled, out_path);
    return 0;
}

int run_analyze_transplant(const std::string& model_path, const std::string& target_path,
                           const std::string& donor_path, const std::string& out_path,
                           const std::string& diff_path) {
    const auto model = load_model(model_path);
    const auto result = drsan::transplant_dra(model, drsan::load_image(target_path),
                                              drsan::load_image(donor_path));
    drsan::save_image(result.sr, out_path);
    if (!diff_path.empty()) {
        // stretch the difference map so faint structure is visible
        drsan::Image vis = result.diff_map;
        float hi = 0.f;
        for (const float v : vis.data) hi = std::max(hi, v);
        if (hi > 0.f)
            for (float& v : vis.data) v /= hi;
        drsan::save_image(vis, diff_path);
        float total = 0.f;
        for (const float v : result.diff_map.data) total += v;
        std::cout << "max_diff=" << hi
                  << " mean_diff=" << total / float(result.diff_map.data.size()) << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dynamic residual self-attention super-resolution"};
    app.require_subcommand(1);

    // count
    std::string preset_name, config_path;
    int scale = 0, hr_h = 720, hr_w = 1280;
    auto* count = app.add_subcommand("count", "parameter and multiply-add counts");
    count->add_option("--preset", preset_name, "model preset (drsan-32s/32m/32l/48s/48m)");
    count->add_option("--config", config_path, "network config JSON file");
    count->add_option("--scale", scale, "upscaling factor override");
    count->add_option("--hr-height", hr_h, "output height for multiply-adds")
        ->default_val(720);
    count->add_option("--hr-width", hr_w, "output width for multiply-adds")
        ->default_val(1280);

    // train
    std::string train_config, train_data, train_out;
    std::optional<std::uint64_t> train_seed;
    std::optional<std::int64_t> train_iters;
    auto* tr = app.add_subcommand("train", "optimize a network on an image directory");
    tr->add_option("--config", train_config, "training config JSON")->required();
    tr->add_option("--data", train_data, "directory of ground-truth images")->required();
    tr->add_option("--out", train_out, "output directory for checkpoints and the log")
        ->required();
    tr->add_option("--seed", train_seed, "override the config seed");
    tr->add_option("--iters", train_iters, "override the config iteration count");

    // infer
    std::string infer_model, infer_in, infer_out;
    auto* inf = app.add_subcommand("infer", "super-resolve one image");
    inf->add_option("--model", infer_model, "checkpoint (.drsan)")->required();
    inf->add_option("--input", infer_in, "low-resolution input image")->required();
    inf->add_option("--output", infer_out, "output image path")->required();

    // eval
    std::string eval_model, eval_data, eval_report;
    int eval_scale = 0, eval_crop = -1, eval_workers = 1;
    auto* ev = app.add_subcommand("eval", "score a model on a ground-truth directory");
    ev->add_option("--model", eval_model, "checkpoint (.drsan)")->required();
    ev->add_option("--dataset", eval_data, "directory of ground-truth images")->required();
    ev->add_option("--scale", eval_scale, "expected upscaling factor (checked against the model)");
    ev->add_option("--crop", eval_crop, "border pixels to ignore (default: scale)");
    ev->add_option("--out", eval_report, "also write the CSV report here");
    ev->add_option("--workers", eval_workers, "parallel image workers")->default_val(1);

    // analyze
    auto* an = app.add_subcommand("analyze", "inspect attention behaviour");
    an->require_subcommand(1);
    std::string an_model, an_image, an_out, an_target, an_donor, an_diff;
    int an_block = 0, an_bins = 20;

    auto* dra = an->add_subcommand("dra", "dump per-group coefficient vectors as CSV");
    dra->add_option("--model", an_model, "checkpoint")->required();
    dra->add_option("--image", an_image, "input image")->required();
    dra->add_option("--out", an_out, "CSV path")->required();

    auto* hist = an->add_subcommand("hist", "histogram one attention map");
    hist->add_option("--model", an_model, "checkpoint")->required();
    hist->add_option("--image", an_image, "input image")->required();
    hist->add_option("--block", an_block, "map index (group-major)")->required();
    hist->add_option("--bins", an_bins, "histogram bins")->default_val(20);
    hist->add_option("--out", an_out, "CSV path")->required();

    auto* map = an->add_subcommand("map", "save one attention map as an image");
    map->add_option("--model", an_model, "checkpoint")->required();
    map->add_option("--image", an_image, "input image")->required();
    map->add_option("--block", an_block, "map index (group-major)")->required();
    map->add_option("--out", an_out, "image path (.png/.pgm)")->required();

    auto* tp = an->add_subcommand("transplant", "restore a target under a donor's coefficients");
    tp->add_option("--model", an_model, "checkpoint")->required();
    tp->add_option("--target", an_target, "image to restore")->required();
    tp->add_option("--donor", an_donor, "image whose coefficients are used")->required();
    tp->add_option("--out", an_out, "restored image path")->required();
    tp->add_option("--diff", an_diff, "difference map path (optional)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        std::cerr << app.help();
        return 1;
    }

    try {
        if (count->parsed())
            return run_count(preset_name, config_path, scale, hr_h, hr_w);
        if (tr->parsed())
            return run_train(train_config, train_data, train_out, train_seed, train_iters);
        if (inf->parsed()) return run_infer(infer_model, infer_in, infer_out);
        if (ev->parsed())
            return run_eval(eval_model, eval_data, eval_scale, eval_crop, eval_report,
                            eval_workers);
        if (an->parsed()) {
            if (dra->parsed()) return run_analyze_dra(an_model, an_image, an_out);
            if (hist->parsed())
                return run_analyze_hist(an_model, an_image, an_block, an_bins, an_out);
            if (map->parsed()) return run_analyze_map(an_model, an_image, an_block, an_out);
            if (tp->parsed())
                return run_analyze_transplant(an_model, an_target, an_donor, an_out, an_diff);
        }
        std::cerr << "error: no subcommand\n";
        return 1;
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
