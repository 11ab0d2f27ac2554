#include <zlib.h>

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "drsan/image.hpp"

namespace drsan {

namespace {

using u8 = std::uint8_t;
using u32 = std::uint32_t;

std::vector<u8> read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ImageError("cannot open \"" + path.string() + "\" for reading");
    std::vector<u8> bytes((std::istreambuf_iterator<char>(f)),
                          std::istreambuf_iterator<char>());
    return bytes;
}

void write_file(const std::filesystem::path& path, const std::vector<u8>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ImageError("cannot open \"" + path.string() + "\" for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!f) throw ImageError("short write to \"" + path.string() + "\"");
}

float byte_to_float(u8 v) { return float(v) / 255.f; }

u8 float_to_byte(float v) {
    v = std::min(1.f, std::max(0.f, v));
    return u8(std::lround(v * 255.f));
}

// ---- PNG ----

const u8 kPngSig[8] = {137, 80, 78, 71, 13, 10, 26, 10};

u32 be32(const u8* p) { return u32(p[0]) << 24 | u32(p[1]) << 16 | u32(p[2]) << 8 | u32(p[3]); }

void put_be32(std::vector<u8>& out, u32 v) {
    out.push_back(u8(v >> 24));
    out.push_back(u8(v >> 16));
    out.push_back(u8(v >> 8));
    out.push_back(u8(v));
}

u8 paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return u8(a);
    if (pb <= pc) return u8(b);
    return u8(c);
}

Image decode_png(const std::vector<u8>& bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kPngSig, 8) != 0)
        throw DecodeError("png: bad signature");

    std::size_t pos = 8;
    bool seen_ihdr = false, seen_iend = false;
    u32 width = 0, height = 0;
    int channels = 0;
    std::vector<u8> idat;

    while (pos < bytes.size()) {
        if (pos + 12 > bytes.size()) throw DecodeError("png: truncated chunk header");
        const u32 len = be32(&bytes[pos]);
        const char* type = reinterpret_cast<const char*>(&bytes[pos + 4]);
        if (pos + 12 + len > bytes.size()) throw DecodeError("png: truncated chunk data");
        const u8* data = &bytes[pos + 8];
        const u32 stored_crc = be32(&bytes[pos + 8 + len]);
        u32 crc = u32(crc32(0, &bytes[pos + 4], len + 4));
        if (crc != stored_crc)
            throw DecodeError(std::string("png: crc mismatch in ") + std::string(type, 4) +
                              " chunk");

        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw DecodeError("png: IHDR length " + std::to_string(len));
            width = be32(data);
            height = be32(data + 4);
            const u8 bit_depth = data[8], color_type = data[9];
            const u8 compression = data[10], filter = data[11], interlace = data[12];
            if (width == 0 || height == 0) throw DecodeError("png: zero dimension");
            if (compression != 0 || filter != 0) throw DecodeError("png: bad IHDR methods");
            if (bit_depth != 8)
                throw UnsupportedFormatError("png: bit depth " + std::to_string(bit_depth) +
                                             " (only 8 supported)");
            if (interlace != 0)
                throw UnsupportedFormatError("png: interlaced images not supported");
            if (color_type == 0) channels = 1;
            else if (color_type == 2) channels = 3;
            else
                throw UnsupportedFormatError("png: color type " + std::to_string(color_type) +
                                             " (only gray and rgb supported)");
            seen_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            if (!seen_ihdr) throw DecodeError("png: IDAT before IHDR");
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            seen_iend = true;
            break;
        }
        // ancillary chunks are skipped
        pos += 12 + len;
    }
    if (!seen_ihdr) throw DecodeError("png: missing IHDR");
    if (!seen_iend) throw DecodeError("png: missing IEND");
    if (idat.empty()) throw DecodeError("png: no image data");

    const std::size_t stride = std::size_t(width) * std::size_t(channels);
    const std::size_t raw_size = (stride + 1) * height;
    std::vector<u8> raw(raw_size);
    uLongf out_len = uLongf(raw_size);
    const int rc = uncompress(raw.data(), &out_len, idat.data(), uLong(idat.size()));
    if (rc != Z_OK || out_len != raw_size) throw DecodeError("png: corrupt compressed stream");

    // undo per-row filtering in place; prev points at the reconstructed row above
    std::vector<u8> pixels(stride * height);
    const int bpp = channels;
    for (u32 y = 0; y < height; ++y) {
        const u8 ftype = raw[(stride + 1) * y];
        const u8* src = &raw[(stride + 1) * y + 1];
        u8* dst = &pixels[stride * y];
        const u8* prev = y > 0 ? &pixels[stride * (y - 1)] : nullptr;
        switch (ftype) {
            case 0:
                std::memcpy(dst, src, stride);
                break;
            case 1:
                for (std::size_t i = 0; i < stride; ++i)
                    dst[i] = u8(src[i] + (i >= std::size_t(bpp) ? dst[i - bpp] : 0));
                break;
            case 2:
                for (std::size_t i = 0; i < stride; ++i)
                    dst[i] = u8(src[i] + (prev ? prev[i] : 0));
                break;
            case 3:
                for (std::size_t i = 0; i < stride; ++i) {
                    const int a = i >= std::size_t(bpp) ? dst[i - bpp] : 0;
                    const int b = prev ? prev[i] : 0;
                    dst[i] = u8(src[i] + (a + b) / 2);
                }
                break;
            case 4:
                for (std::size_t i = 0; i < stride; ++i) {
                    const int a = i >= std::size_t(bpp) ? dst[i - bpp] : 0;
                    const int b = prev ? prev[i] : 0;
                    const int c = prev && i >= std::size_t(bpp) ? prev[i - bpp] : 0;
                    dst[i] = u8(src[i] + paeth(a, b, c));
                }
                break;
            default:
                throw DecodeError("png: unknown filter type " + std::to_string(ftype));
        }
    }

    Image img(int(height), int(width), channels);
    for (u32 y = 0; y < height; ++y)
        for (u32 x = 0; x < width; ++x)
            for (int c = 0; c < channels; ++c)
                img.at(c, int(y), int(x)) = byte_to_float(pixels[stride * y + x * channels + c]);
    return img;
}

void append_chunk(std::vector<u8>& out, const char type[4], const std::vector<u8>& data) {
    put_be32(out, u32(data.size()));
    const std::size_t type_at = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const u32 crc = u32(crc32(0, &out[type_at], uInt(4 + data.size())));
    put_be32(out, crc);
}

std::vector<u8> encode_png(const Image& img) {
    const int channels = img.channels;
    const std::size_t stride = std::size_t(img.w) * channels;

    // filter 0 on every row keeps the writer simple; zlib still shrinks it
    std::vector<u8> raw((stride + 1) * img.h);
    for (int y = 0; y < img.h; ++y) {
        raw[(stride + 1) * y] = 0;
        u8* dst = &raw[(stride + 1) * y + 1];
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < channels; ++c)
                dst[x * channels + c] = float_to_byte(img.at(c, y, x));
    }

    uLongf bound = compressBound(uLong(raw.size()));
    std::vector<u8> compressed(bound);
    if (compress2(compressed.data(), &bound, raw.data(), uLong(raw.size()), 6) != Z_OK)
        throw ImageError("png: compression failed");
    compressed.resize(bound);

    std::vector<u8> out(kPngSig, kPngSig + 8);
    std::vector<u8> ihdr;
    put_be32(ihdr, u32(img.w));
    put_be32(ihdr, u32(img.h));
    ihdr.push_back(8);                           // bit depth
    ihdr.push_back(channels == 1 ? 0 : 2);       // gray or rgb
    ihdr.push_back(0);                           // compression
    ihdr.push_back(0);                           // filter
    ihdr.push_back(0);                           // no interlace
    append_chunk(out, "IHDR", ihdr);
    append_chunk(out, "IDAT", compressed);
    append_chunk(out, "IEND", {});
    return out;
}

// ---- PPM / PGM (binary, maxval 255) ----

struct PnmHeader {
    int channels = 0, w = 0, h = 0;
    std::size_t data_at = 0;
};

PnmHeader parse_pnm_header(const std::vector<u8>& bytes) {
    std::size_t pos = 2;
    auto skip_space = [&]() {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&]() {
        skip_space();
        if (pos >= bytes.size() || !std::isdigit(bytes[pos]))
            throw DecodeError("pnm: malformed header");
        long v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos] - '0');
            if (v > 1 << 24) throw DecodeError("pnm: header value out of range");
            ++pos;
        }
        return int(v);
    };

    PnmHeader h;
    h.channels = bytes[1] == '6' ? 3 : 1;
    h.w = read_int();
    h.h = read_int();
    const int maxval = read_int();
    if (h.w <= 0 || h.h <= 0) throw DecodeError("pnm: bad dimensions");
    if (maxval != 255)
        throw UnsupportedFormatError("pnm: maxval " + std::to_string(maxval) +
                                     " (only 255 supported)");
    if (pos >= bytes.size() || !std::isspace(bytes[pos]))
        throw DecodeError("pnm: missing pixel data separator");
    h.data_at = pos + 1;
    return h;
}

Image decode_pnm(const std::vector<u8>& bytes) {
    const PnmHeader h = parse_pnm_header(bytes);
    const std::size_t need = std::size_t(h.w) * h.h * h.channels;
    if (bytes.size() - h.data_at < need) throw DecodeError("pnm: truncated pixel data");
    Image img(h.h, h.w, h.channels);
    const u8* src = bytes.data() + h.data_at;
    for (int y = 0; y < h.h; ++y)
        for (int x = 0; x < h.w; ++x)
            for (int c = 0; c < h.channels; ++c)
                img.at(c, y, x) = byte_to_float(src[(std::size_t(y) * h.w + x) * h.channels + c]);
    return img;
}

std::vector<u8> encode_pnm(const Image& img) {
    std::string header = (img.channels == 3 ? std::string("P6\n") : std::string("P5\n")) +
                         std::to_string(img.w) + " " + std::to_string(img.h) + "\n255\n";
    std::vector<u8> out(header.begin(), header.end());
    out.reserve(out.size() + img.data.size());
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < img.channels; ++c)
                out.push_back(float_to_byte(img.at(c, y, x)));
    return out;
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
    const std::vector<u8> bytes = read_file(path);
    if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSig, 8) == 0)
        return decode_png(bytes);
    if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6'))
        return decode_pnm(bytes);
    throw UnsupportedFormatError("\"" + path.string() +
                                 "\": not a png or binary ppm/pgm file");
}

void save_image(const Image& img, const std::filesystem::path& path) {
    if (img.empty()) throw ContractViolation("save_image: empty image");
    if (img.channels != 1 && img.channels != 3)
        throw ContractViolation("save_image: " + std::to_string(img.channels) +
                                " channels (must be 1 or 3)");
    const std::string ext = path.extension().string();
    if (ext == ".png") {
        write_file(path, encode_png(img));
    } else if (ext == ".ppm") {
        if (img.channels != 3) throw ContractViolation("save_image: .ppm needs 3 channels");
        write_file(path, encode_pnm(img));
    } else if (ext == ".pgm") {
        if (img.channels != 1) throw ContractViolation("save_image: .pgm needs 1 channel");
        write_file(path, encode_pnm(img));
    } else {
        throw ImageError("save_image: unknown extension \"" + ext + "\"");
    }
}

Image rgb_to_y(const Image& rgb) {
    if (rgb.channels != 3)
        throw ContractViolation("rgb_to_y: image has " + std::to_string(rgb.channels) +
                                " channels, expected 3");
    Image y(rgb.h, rgb.w, 1);
    const std::size_t plane = std::size_t(rgb.h) * rgb.w;
    for (std::size_t i = 0; i < plane; ++i) {
        const double r = rgb.data[i], g = rgb.data[plane + i], b = rgb.data[2 * plane + i];
        y.data[i] = float((65.481 * r + 128.553 * g + 24.966 * b + 16.0) / 255.0);
    }
    return y;
}

Image modcrop(const Image& img, int m) {
    if (m < 1) throw ContractViolation("modcrop: multiple must be >= 1");
    const int h = img.h - img.h % m, w = img.w - img.w % m;
    if (h == 0 || w == 0)
        throw ContractViolation("modcrop: image " + std::to_string(img.h) + "x" +
                                std::to_string(img.w) + " smaller than multiple " +
                                std::to_string(m));
    if (h == img.h && w == img.w) return img;
    Image out(h, w, img.channels);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, y, x);
    return out;
}

}  // namespace drsan
