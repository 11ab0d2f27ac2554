#include "drsan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <thread>

namespace drsan {

namespace {

void check_pair(const char* opname, const Image& a, const Image& b, int crop) {
    if (a.channels != 1 || b.channels != 1)
        throw ContractViolation(std::string(opname) + ": inputs must be single-channel");
    if (a.h != b.h || a.w != b.w)
        throw ContractViolation(std::string(opname) + ": size mismatch " +
                                std::to_string(a.h) + "x" + std::to_string(a.w) + " vs " +
                                std::to_string(b.h) + "x" + std::to_string(b.w));
    if (crop < 0) throw ContractViolation(std::string(opname) + ": negative crop");
    if (a.h - 2 * crop < 1 || a.w - 2 * crop < 1)
        throw ContractViolation(std::string(opname) + ": crop " + std::to_string(crop) +
                                " leaves no pixels in " + std::to_string(a.h) + "x" +
                                std::to_string(a.w));
}

}  // namespace

double psnr(const Image& a, const Image& b, int crop) {
    check_pair("psnr", a, b, crop);
    double acc = 0.0;
    const int h = a.h - crop, w = a.w - crop;
    for (int y = crop; y < h; ++y)
        for (int x = crop; x < w; ++x) {
            const double d = double(a.at(0, y, x)) - double(b.at(0, y, x));
            acc += d * d;
        }
    const double mse = acc / (double(h - crop) * double(w - crop));
    if (mse == 0.0) return 99.0;  // identical inputs; cap instead of +inf
    return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Image& a, const Image& b, int crop) {
    check_pair("ssim", a, b, crop);
    const int win = 11;
    const double sigma = 1.5;
    const int h = a.h - 2 * crop, w = a.w - 2 * crop;
    if (h < win || w < win)
        throw ContractViolation("ssim: cropped image " + std::to_string(h) + "x" +
                                std::to_string(w) + " smaller than the 11x11 window");

    // normalized 2D Gaussian window
    double g[win][win];
    double gsum = 0.0;
    for (int y = 0; y < win; ++y)
        for (int x = 0; x < win; ++x) {
            const double dy = y - (win - 1) / 2.0, dx = x - (win - 1) / 2.0;
            g[y][x] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            gsum += g[y][x];
        }
    for (int y = 0; y < win; ++y)
        for (int x = 0; x < win; ++x) g[y][x] /= gsum;

    const double c1 = 0.01 * 0.01;  // (K1 * L)^2 with L = 1
    const double c2 = 0.03 * 0.03;

    double total = 0.0;
    std::int64_t count = 0;
    for (int y0 = 0; y0 + win <= h; ++y0)
        for (int x0 = 0; x0 + win <= w; ++x0) {
            double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
            for (int y = 0; y < win; ++y)
                for (int x = 0; x < win; ++x) {
                    const double wv = g[y][x];
                    const double va = a.at(0, crop + y0 + y, crop + x0 + x);
                    const double vb = b.at(0, crop + y0 + y, crop + x0 + x);
                    mu_a += wv * va;
                    mu_b += wv * vb;
                    aa += wv * va * va;
                    bb += wv * vb * vb;
                    ab += wv * va * vb;
                }
            const double var_a = aa - mu_a * mu_a;
            const double var_b = bb - mu_b * mu_b;
            const double cov = ab - mu_a * mu_b;
            total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                     ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
            ++count;
        }
    return total / double(count);
}

EvalReport evaluate(const SrFunction& sr, const std::filesystem::path& hr_dir, int scale,
                    int crop, int workers) {
    if (scale < 1) throw ContractViolation("evaluate: scale must be >= 1");
    if (workers < 1) throw ContractViolation("evaluate: workers must be >= 1");
    if (!std::filesystem::is_directory(hr_dir))
        throw EmptyDatasetError("evaluate: \"" + hr_dir.string() + "\" is not a directory");

    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(hr_dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = entry.path().extension().string();
        if (ext == ".png" || ext == ".ppm" || ext == ".pgm") files.push_back(entry.path());
    }
    if (files.empty())
        throw EmptyDatasetError("evaluate: no images in \"" + hr_dir.string() + "\"");
    std::sort(files.begin(), files.end());

    EvalReport report;
    report.scale = scale;
    report.crop = crop;
    report.rows.resize(files.size());

    // each image is independent; rows land in their slot so ordering and
    // results do not depend on the worker count
    auto score = [&](std::size_t i) {
        const Image hr = modcrop(load_image(files[i]), scale);
        const Image lr = bicubic_resize(hr, hr.h / scale, hr.w / scale, /*antialias=*/true);
        const Image restored = sr(lr);
        if (restored.h != hr.h || restored.w != hr.w || restored.channels != hr.channels)
            throw ContractViolation("evaluate: restored image is " +
                                    std::to_string(restored.h) + "x" +
                                    std::to_string(restored.w) + ", expected " +
                                    std::to_string(hr.h) + "x" + std::to_string(hr.w));
        const Image ya = rgb_to_y(restored), yb = rgb_to_y(hr);
        report.rows[i] = {files[i].filename().string(), psnr(ya, yb, crop),
                          ssim(ya, yb, crop)};
    };

    if (workers == 1 || files.size() == 1) {
        for (std::size_t i = 0; i < files.size(); ++i) score(i);
    } else {
        std::vector<std::thread> pool;
        const std::size_t lanes = std::min(std::size_t(workers), files.size());
        std::vector<std::exception_ptr> errors(lanes);
        for (std::size_t lane = 0; lane < lanes; ++lane)
            pool.emplace_back([&, lane]() {
                try {
                    for (std::size_t i = lane; i < files.size(); i += lanes) score(i);
                } catch (...) {
                    errors[lane] = std::current_exception();
                }
            });
        for (auto& t : pool) t.join();
        for (const auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    double sp = 0.0, ss = 0.0;
    for (const auto& row : report.rows) {
        sp += row.psnr;
        ss += row.ssim;
    }
    report.mean_psnr = sp / double(report.rows.size());
    report.mean_ssim = ss / double(report.rows.size());
    return report;
}

void write_eval_csv(const EvalReport& report, std::ostream& out) {
    out << "name,psnr,ssim\n";
    char line[128];
    for (const auto& row : report.rows) {
        std::snprintf(line, sizeof line, "%.4f,%.6f", row.psnr, row.ssim);
        out << row.name << "," << line << "\n";
    }
    std::snprintf(line, sizeof line, "%.4f,%.6f", report.mean_psnr, report.mean_ssim);
    out << "mean," << line << "\n";
}

}  // namespace drsan
