#pragma once

#include <filesystem>
#include <string>

#include "drsan/image.hpp"
#include "drsan/rng.hpp"
#include "drsan/tensor.hpp"

namespace testutil {

template <typename S>
drsan::TensorPtr<S> random_tensor(drsan::Shape shape, drsan::Rng& rng, double lo = -1.0,
                                  double hi = 1.0, bool requires_grad = false) {
    auto t = drsan::TensorT<S>::create(shape, requires_grad);
    for (auto& v : t->data) v = S(rng.uniform(lo, hi));
    return t;
}

inline drsan::Image random_image(int h, int w, int channels, drsan::Rng& rng) {
    drsan::Image img(h, w, channels);
    for (auto& v : img.data) v = float(rng.uniform());
    return img;
}

// Unique scratch directory, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("drsan_test_" + tag + "_" + std::to_string(++counter) + "_" +
                 std::to_string(std::uintptr_t(this)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace testutil
