#include <doctest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "drsan/image.hpp"
#include "helpers.hpp"

using namespace drsan;

namespace {

struct RunResult {
    int code = -1;
    std::string out, err;
};

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

// Runs the installed binary through the shell, capturing both streams.
RunResult run_cli(const std::string& args, const std::string& env_prefix = "") {
    static int counter = 0;
    const auto tag = std::to_string(++counter);
    const auto out_file = std::filesystem::temp_directory_path() / ("cli_out_" + tag);
    const auto err_file = std::filesystem::temp_directory_path() / ("cli_err_" + tag);
    std::string cmd = env_prefix.empty() ? "" : env_prefix + " ";
    cmd += "\"" DRSAN_CLI_PATH "\" " + args;
    cmd += " >\"" + out_file.string() + "\" 2>\"" + err_file.string() + "\"";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out_file);
    r.err = slurp(err_file);
    std::filesystem::remove(out_file);
    std::filesystem::remove(err_file);
    return r;
}

bool contains(const std::string& haystack, const std::string& needle) {
    return haystack.find(needle) != std::string::npos;
}

Image smooth_image(int h, int w, float phase) {
    Image img(h, w, 3);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                img.at(c, y, x) =
                    0.5f + 0.35f * std::sin(6.28318f * (x + phase + 5 * c) / w) *
                               std::cos(6.28318f * (y - phase) / h);
    return img;
}

int count_lines(const std::string& text) {
    int n = 0;
    for (const char c : text)
        if (c == '\n') ++n;
    return n;
}

}  // namespace

TEST_CASE("count: presets, overrides, and flag validation") {
    auto r = run_cli("count --preset drsan-32s");
    CHECK(r.code == 0);
    CHECK(r.out == "params=368427 multi_adds=84897792000\n");

    r = run_cli("count --preset drsan-32s --scale 3");
    CHECK(r.code == 0);
    CHECK(r.out == "params=414667 multi_adds=42893312000\n");

    r = run_cli("count --preset drsan-48m --scale 4");
    CHECK(r.code == 0);
    CHECK(r.out == "params=1270963 multi_adds=88327065600\n");

    testutil::TempDir dir("cli_count");
    std::ofstream(dir.path() / "net.json")
        << R"({"channels": 48, "drags": 2, "blocks": 3, "scale": 2})";
    r = run_cli("count --config \"" + (dir.path() / "net.json").string() + "\"");
    CHECK(r.code == 0);
    CHECK(r.out == "params=376879 multi_adds=87356620800\n");

    // exactly one of --preset / --config
    r = run_cli("count");
    CHECK(r.code == 1);
    CHECK(contains(r.err, "error:"));
    r = run_cli("count --preset drsan-32s --config \"" +
                (dir.path() / "net.json").string() + "\"");
    CHECK(r.code == 1);
    CHECK(contains(r.err, "error:"));

    r = run_cli("count --preset no-such-model");
    CHECK(r.code == 2);
    CHECK(contains(r.err, "error:"));
    CHECK(contains(r.err, "no-such-model"));

    // odd output size cannot be a x2 result
    r = run_cli("count --preset drsan-32s --hr-height 721 --hr-width 1281");
    CHECK(r.code == 2);
    CHECK(contains(r.err, "error:"));
}

TEST_CASE("bad invocations exit 1 with a usage hint") {
    auto r = run_cli("");
    CHECK(r.code == 1);
    CHECK(contains(r.err, "error:"));

    r = run_cli("sharpen --input x.png");
    CHECK(r.code == 1);
    CHECK(contains(r.err, "error:"));

    r = run_cli("train --data somewhere");  // missing required flags
    CHECK(r.code == 1);
    CHECK(contains(r.err, "error:"));

    r = run_cli("--help");
    CHECK(r.code == 0);
    CHECK(contains(r.out, "count"));
    CHECK(contains(r.out, "train"));
}

TEST_CASE("train, infer, eval, analyze: the whole pipeline") {
    testutil::TempDir dir("cli_pipe");
    const auto data = dir.path() / "data";
    std::filesystem::create_directories(data);
    save_image(smooth_image(32, 32, 0.f), data / "a.png");
    save_image(smooth_image(32, 32, 7.f), data / "b.png");

    std::ofstream(dir.path() / "train.json") << R"({
        "network": {"channels": 4, "drags": 1, "blocks": 2, "drm_hidden": 4, "scale": 2},
        "iters": 4, "batch_size": 2, "patch_size": 8, "seed": 3, "log_every": 1
    })";

    const auto out = dir.path() / "out";
    auto r = run_cli("train --config \"" + (dir.path() / "train.json").string() +
                     "\" --data \"" + data.string() + "\" --out \"" + out.string() + "\"");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(contains(r.out, "trained 4 iterations"));
    REQUIRE(std::filesystem::exists(out / "final.drsan"));
    const std::string log = slurp(out / "train_log.csv");
    CHECK(contains(log, "iter,lr,loss,seconds"));
    CHECK(count_lines(log) == 5);  // header + four logged iterations

    const std::string model = (out / "final.drsan").string();

    // infer doubles both dimensions
    r = run_cli("infer --model \"" + model + "\" --input \"" + (data / "a.png").string() +
                "\" --output \"" + (dir.path() / "sr.png").string() + "\"");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const Image sr = load_image(dir.path() / "sr.png");
    CHECK(sr.h == 64);
    CHECK(sr.w == 64);
    CHECK(sr.channels == 3);

    // verbose mode narrates to stderr without changing the result
    r = run_cli("infer --model \"" + model + "\" --input \"" + (data / "a.png").string() +
                    "\" --output \"" + (dir.path() / "sr2.png").string() + "\"",
                "DRSAN_LOG=info");
    REQUIRE(r.code == 0);
    CHECK(contains(r.err, "drsan:"));
    CHECK(slurp(dir.path() / "sr2.png") == slurp(dir.path() / "sr.png"));

    r = run_cli("infer --model \"" + model + "\" --input \"" + (data / "a.png").string() +
                    "\" --output \"" + (dir.path() / "sr3.png").string() + "\"",
                "DRSAN_LOG=quiet");
    REQUIRE(r.code == 0);
    CHECK(r.err.empty());

    // eval prints the CSV and optionally writes it
    const auto report = dir.path() / "report.csv";
    r = run_cli("eval --model \"" + model + "\" --dataset \"" + data.string() +
                "\" --scale 2 --out \"" + report.string() + "\" --workers 2");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(contains(r.out, "name,psnr,ssim"));
    CHECK(contains(r.out, "a.png"));
    CHECK(contains(r.out, "mean,"));
    CHECK(slurp(report) == r.out);

    // a wrong --scale is rejected against the checkpoint
    r = run_cli("eval --model \"" + model + "\" --dataset \"" + data.string() +
                "\" --scale 3");
    CHECK(r.code == 2);
    CHECK(contains(r.err, "does not match"));

    // analyze dra: one coefficient triple for the single group
    const auto dra_csv = dir.path() / "dra.csv";
    r = run_cli("analyze dra --model \"" + model + "\" --image \"" +
                (data / "a.png").string() + "\" --out \"" + dra_csv.string() + "\"");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const std::string dra_text = slurp(dra_csv);
    CHECK(contains(dra_text, "image,drag,index,value"));
    CHECK(contains(dra_text, "a.png,0,2,"));
    CHECK(count_lines(dra_text) == 4);

    // analyze hist: counts over the first map sum to its size (4 x 32 x 32)
    const auto hist_csv = dir.path() / "hist.csv";
    r = run_cli("analyze hist --model \"" + model + "\" --image \"" +
                (data / "a.png").string() + "\" --block 0 --bins 10 --out \"" +
                hist_csv.string() + "\"");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    {
        std::istringstream in(slurp(hist_csv));
        std::string line;
        REQUIRE(std::getline(in, line));
        REQUIRE(line == "block,bin_lo,bin_hi,count");
        long long total = 0;
        int rows = 0;
        while (std::getline(in, line)) {
            CHECK(line.rfind("0,", 0) == 0);  // block column first
            const auto last_comma = line.rfind(',');
            total += std::stoll(line.substr(last_comma + 1));
            ++rows;
        }
        CHECK(rows == 10);
        CHECK(total == 4 * 32 * 32);
    }

    // analyze map: a single-channel image at the input grid size
    const auto map_pgm = dir.path() / "map.pgm";
    r = run_cli("analyze map --model \"" + model + "\" --image \"" +
                (data / "a.png").string() + "\" --block 1 --out \"" + map_pgm.string() +
                "\"");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const Image map_img = load_image(map_pgm);
    CHECK(map_img.channels == 1);
    CHECK(map_img.h == 32);
    CHECK(map_img.w == 32);

    // analyze transplant with itself: a zero difference map
    r = run_cli("analyze transplant --model \"" + model + "\" --target \"" +
                (data / "a.png").string() + "\" --donor \"" + (data / "a.png").string() +
                "\" --out \"" + (dir.path() / "tp.png").string() + "\" --diff \"" +
                (dir.path() / "tpdiff.png").string() + "\"");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(contains(r.out, "max_diff=0"));
    CHECK(std::filesystem::exists(dir.path() / "tp.png"));
    CHECK(std::filesystem::exists(dir.path() / "tpdiff.png"));

    // and with a real donor: still fine, files written
    r = run_cli("analyze transplant --model \"" + model + "\" --target \"" +
                (data / "a.png").string() + "\" --donor \"" + (data / "b.png").string() +
                "\" --out \"" + (dir.path() / "tp2.png").string() + "\" --diff \"" +
                (dir.path() / "tpdiff2.png").string() + "\"");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(contains(r.out, "max_diff="));
}

TEST_CASE("runtime failures exit 2 with an error line") {
    testutil::TempDir dir("cli_fail");

    auto r = run_cli("infer --model \"" + (dir.path() / "missing.drsan").string() +
                     "\" --input x.png --output y.png");
    CHECK(r.code == 2);
    CHECK(contains(r.err, "error:"));

    // a valid model but a gray input image
    const auto data = dir.path() / "data";
    std::filesystem::create_directories(data);
    save_image(smooth_image(32, 32, 1.f), data / "a.png");
    std::ofstream(dir.path() / "train.json")
        << R"({"network": {"channels": 4, "drags": 1, "blocks": 2, "drm_hidden": 4,)"
        << R"( "scale": 2}, "iters": 1, "batch_size": 1, "patch_size": 8})";
    const auto out = dir.path() / "out";
    r = run_cli("train --config \"" + (dir.path() / "train.json").string() + "\" --data \"" +
                data.string() + "\" --out \"" + out.string() + "\"");
    REQUIRE_MESSAGE(r.code == 0, r.err);

    Image gray(16, 16, 1);
    for (auto& v : gray.data) v = 0.5f;
    save_image(gray, dir.path() / "gray.png");
    r = run_cli("infer --model \"" + (out / "final.drsan").string() + "\" --input \"" +
                (dir.path() / "gray.png").string() + "\" --output \"" +
                (dir.path() / "y.png").string() + "\"");
    CHECK(r.code == 2);
    CHECK(contains(r.err, "error:"));
    CHECK(contains(r.err, "RGB"));

    // eval over a directory with nothing usable
    const auto empty = dir.path() / "empty";
    std::filesystem::create_directories(empty);
    r = run_cli("eval --model \"" + (out / "final.drsan").string() + "\" --dataset \"" +
                empty.string() + "\"");
    CHECK(r.code == 2);
    CHECK(contains(r.err, "error:"));

    // training config without a network entry
    std::ofstream(dir.path() / "bad.json") << R"({"iters": 1})";
    r = run_cli("train --config \"" + (dir.path() / "bad.json").string() + "\" --data \"" +
                data.string() + "\" --out \"" + out.string() + "\"");
    CHECK(r.code == 2);
    CHECK(contains(r.err, "network"));
}
