#include "drsan/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace drsan {

namespace {

// Layout (all integers little-endian):
//   8 bytes  magic "DRSANCKP"
//   u32      format version (1)
//   u32      config JSON length, then that many bytes
//   i64      iteration counter
//   u32      parameter count, then per parameter:
//              u16 name length, name bytes,
//              u32 element count, elements as float32
//   u8       optimizer flag; when 1:
//              i64 adam step, then per parameter (same order): m then v blobs
constexpr char kMagic[8] = {'D', 'R', 'S', 'A', 'N', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

static_assert(sizeof(float) == 4, "float32 serialization assumes 4-byte float");

class Writer {
public:
    explicit Writer(const std::filesystem::path& path)
        : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_) throw CheckpointError("cannot open \"" + path.string() + "\" for writing");
    }

    void bytes(const void* p, std::size_t n) {
        out_.write(static_cast<const char*>(p), std::streamsize(n));
    }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u16(std::uint16_t v) { std::uint8_t b[2] = {std::uint8_t(v), std::uint8_t(v >> 8)}; bytes(b, 2); }
    void u32(std::uint32_t v) {
        std::uint8_t b[4] = {std::uint8_t(v), std::uint8_t(v >> 8), std::uint8_t(v >> 16),
                             std::uint8_t(v >> 24)};
        bytes(b, 4);
    }
    void i64(std::int64_t v) {
        std::uint64_t u = std::uint64_t(v);
        std::uint8_t b[8];
        for (int i = 0; i < 8; ++i) b[i] = std::uint8_t(u >> (8 * i));
        bytes(b, 8);
    }
    void floats(const float* p, std::size_t n) {
        // this build is little-endian (x86/arm64); floats go out verbatim
        bytes(p, n * 4);
    }
    void close() {
        out_.flush();
        if (!out_) throw CheckpointError("short write to \"" + path_.string() + "\"");
    }

private:
    std::filesystem::path path_;
    std::ofstream out_;
};

class Reader {
public:
    explicit Reader(const std::filesystem::path& path) : path_(path.string()) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw CheckpointError("cannot open \"" + path_ + "\" for reading");
        buf_.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    }

    void bytes(void* p, std::size_t n) {
        if (pos_ + n > buf_.size())
            throw CheckpointTruncatedError("\"" + path_ + "\": truncated at byte " +
                                           std::to_string(pos_));
        std::memcpy(p, buf_.data() + pos_, n);
        pos_ += n;
    }
    std::uint8_t u8() { std::uint8_t v; bytes(&v, 1); return v; }
    std::uint16_t u16() {
        std::uint8_t b[2]; bytes(b, 2);
        return std::uint16_t(b[0] | (std::uint16_t(b[1]) << 8));
    }
    std::uint32_t u32() {
        std::uint8_t b[4]; bytes(b, 4);
        return b[0] | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
               (std::uint32_t(b[3]) << 24);
    }
    std::int64_t i64() {
        std::uint8_t b[8]; bytes(b, 8);
        std::uint64_t u = 0;
        for (int i = 0; i < 8; ++i) u |= std::uint64_t(b[i]) << (8 * i);
        return std::int64_t(u);
    }
    std::string str(std::size_t n) {
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }
    void floats(float* p, std::size_t n) { bytes(p, n * 4); }
    bool at_end() const { return pos_ == buf_.size(); }
    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::vector<char> buf_;
    std::size_t pos_ = 0;
};

void write_blob(Writer& w, const std::vector<float>& v) {
    w.u32(std::uint32_t(v.size()));
    w.floats(v.data(), v.size());
}

std::vector<float> read_blob(Reader& r, std::size_t expected, const std::string& name) {
    const std::uint32_t n = r.u32();
    if (n != expected)
        throw CheckpointMismatchError("\"" + r.path() + "\": parameter \"" + name + "\" has " +
                                      std::to_string(n) + " elements, expected " +
                                      std::to_string(expected));
    std::vector<float> v(n);
    r.floats(v.data(), n);
    return v;
}

void fill_from(Reader& r, Model& model, std::optional<AdamState>& optimizer,
               std::int64_t& iteration) {
    iteration = r.i64();
    const std::uint32_t count = r.u32();
    const auto& entries = model.params.entries();
    if (count != entries.size())
        throw CheckpointMismatchError("\"" + r.path() + "\": " + std::to_string(count) +
                                      " parameters, model has " +
                                      std::to_string(entries.size()));
    std::vector<std::string> order;
    order.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t name_len = r.u16();
        const std::string name = r.str(name_len);
        if (!model.params.contains(name))
            throw CheckpointMismatchError("\"" + r.path() + "\": unknown parameter \"" + name +
                                          "\"");
        auto t = model.params.at(name);
        t->data = read_blob(r, t->data.size(), name);
        order.push_back(name);
    }
    const std::uint8_t has_opt = r.u8();
    if (has_opt > 1)
        throw CheckpointError("\"" + r.path() + "\": bad optimizer flag");
    if (has_opt) {
        AdamState state;
        state.step = r.i64();
        for (const auto& name : order) {
            const std::size_t n = model.params.at(name)->data.size();
            state.m.emplace(name, read_blob(r, n, name));
            state.v.emplace(name, read_blob(r, n, name));
        }
        optimizer = std::move(state);
    }
    if (!r.at_end())
        throw CheckpointError("\"" + r.path() + "\": trailing bytes after payload");
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     const AdamState* optimizer, std::int64_t iteration) {
    Writer w(path);
    w.bytes(kMagic, 8);
    w.u32(kVersion);
    const std::string config = model.config.to_json();
    w.u32(std::uint32_t(config.size()));
    w.bytes(config.data(), config.size());
    w.i64(iteration);

    const auto& entries = model.params.entries();
    w.u32(std::uint32_t(entries.size()));
    for (const auto& [name, t] : entries) {
        w.u16(std::uint16_t(name.size()));
        w.bytes(name.data(), name.size());
        write_blob(w, t->data);
    }
    if (optimizer) {
        w.u8(1);
        w.i64(optimizer->step);
        for (const auto& [name, t] : entries) {
            auto mit = optimizer->m.find(name);
            auto vit = optimizer->v.find(name);
            if (mit == optimizer->m.end() || vit == optimizer->v.end())
                throw CheckpointError("save_checkpoint: optimizer state missing \"" + name +
                                      "\"");
            write_blob(w, mit->second);
            write_blob(w, vit->second);
        }
    } else {
        w.u8(0);
    }
    w.close();
}

namespace {

NetworkConfig read_header(Reader& r) {
    char magic[8];
    r.bytes(magic, 8);
    if (std::memcmp(magic, kMagic, 8) != 0)
        throw CheckpointError("\"" + r.path() + "\": not a checkpoint file");
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        throw CheckpointVersionError("\"" + r.path() + "\": format version " +
                                     std::to_string(version) + ", expected " +
                                     std::to_string(kVersion));
    const std::uint32_t config_len = r.u32();
    return config_from_json(r.str(config_len));
}

}  // namespace

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    Reader r(path);
    const NetworkConfig config = read_header(r);
    LoadedCheckpoint result;
    result.model = build_network<float>(config);
    fill_from(r, result.model, result.optimizer, result.iteration);
    return result;
}

void load_checkpoint_into(Model& model, const std::filesystem::path& path) {
    Reader r(path);
    const NetworkConfig config = read_header(r);
    const std::string want = model.config.to_json(), got = config.to_json();
    if (want != got)
        throw CheckpointMismatchError("\"" + r.path() + "\": config " + got +
                                      " does not match model config " + want);
    std::optional<AdamState> optimizer;
    std::int64_t iteration = 0;
    fill_from(r, model, optimizer, iteration);
}

}  // namespace drsan
