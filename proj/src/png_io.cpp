#include "omni/png_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <zlib.h>

#include "omni/common.hpp"

namespace omni {

namespace {

constexpr uint8_t kSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

void put_be32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(uint8_t(v >> 24));
    out.push_back(uint8_t(v >> 16));
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v));
}

uint32_t get_be32(const uint8_t* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) |
           uint32_t(p[3]);
}

void put_chunk(std::vector<uint8_t>& out, const char type[4],
               const std::vector<uint8_t>& payload) {
    put_be32(out, uint32_t(payload.size()));
    size_t crc_from = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    uint32_t crc =
        uint32_t(crc32(0, out.data() + crc_from, uInt(out.size() - crc_from)));
    put_be32(out, crc);
}

std::vector<uint8_t> zlib_deflate(const std::vector<uint8_t>& raw) {
    uLongf bound = compressBound(uLong(raw.size()));
    std::vector<uint8_t> out(bound);
    int rc = compress2(out.data(), &bound, raw.data(), uLong(raw.size()), 6);
    require(rc == Z_OK, ErrorCode::io, "png: deflate failed");
    out.resize(bound);
    return out;
}

std::vector<uint8_t> zlib_inflate(const uint8_t* data, size_t n, size_t expect) {
    std::vector<uint8_t> out(expect);
    uLongf got = uLongf(expect);
    int rc = uncompress(out.data(), &got, data, uLong(n));
    require(rc == Z_OK && got == expect, ErrorCode::io, "png: inflate failed");
    return out;
}

}  // namespace

void write_png(const std::string& path, const RgbImage& img) {
    require(img.H >= 1 && img.W >= 1, ErrorCode::shape, "png: empty image");
    require(img.rgb.size() == size_t(img.H) * img.W * 3, ErrorCode::shape,
            "png: pixel buffer size mismatch");

    std::vector<uint8_t> ihdr;
    put_be32(ihdr, uint32_t(img.W));
    put_be32(ihdr, uint32_t(img.H));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // color type: truecolor RGB
    ihdr.push_back(0);  // compression
    ihdr.push_back(0);  // filter method
    ihdr.push_back(0);  // not interlaced

    // Filter type 0 (None) per scanline.
    std::vector<uint8_t> raw;
    raw.reserve(size_t(img.H) * (size_t(img.W) * 3 + 1));
    for (int y = 0; y < img.H; ++y) {
        raw.push_back(0);
        const uint8_t* row = img.rgb.data() + size_t(y) * img.W * 3;
        raw.insert(raw.end(), row, row + size_t(img.W) * 3);
    }

    std::vector<uint8_t> file(kSignature, kSignature + 8);
    put_chunk(file, "IHDR", ihdr);
    put_chunk(file, "IDAT", zlib_deflate(raw));
    put_chunk(file, "IEND", {});

    std::ofstream os(path, std::ios::binary);
    require(os.good(), ErrorCode::io, "png: cannot open " + path);
    os.write(reinterpret_cast<const char*>(file.data()), std::streamsize(file.size()));
    require(os.good(), ErrorCode::io, "png: write failed for " + path);
}

RgbImage read_png(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), ErrorCode::io, "png: cannot open " + path);
    std::vector<uint8_t> file((std::istreambuf_iterator<char>(is)),
                              std::istreambuf_iterator<char>());
    require(file.size() > 8 && std::memcmp(file.data(), kSignature, 8) == 0, ErrorCode::io,
            "png: bad signature in " + path);

    RgbImage img;
    std::vector<uint8_t> idat;
    size_t pos = 8;
    while (pos + 8 <= file.size()) {
        uint32_t len = get_be32(file.data() + pos);
        require(pos + 12 + len <= file.size(), ErrorCode::io, "png: truncated chunk");
        const char* type = reinterpret_cast<const char*>(file.data() + pos + 4);
        uint32_t stored = get_be32(file.data() + pos + 8 + len);
        uint32_t actual = uint32_t(crc32(0, file.data() + pos + 4, uInt(4 + len)));
        require(stored == actual, ErrorCode::io, "png: chunk checksum mismatch");
        const uint8_t* payload = file.data() + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            require(len == 13, ErrorCode::io, "png: bad IHDR");
            img.W = int(get_be32(payload));
            img.H = int(get_be32(payload + 4));
            require(payload[8] == 8 && payload[9] == 2 && payload[10] == 0 &&
                        payload[11] == 0 && payload[12] == 0,
                    ErrorCode::io, "png: unsupported format (expect 8-bit RGB, no interlace)");
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    require(img.H >= 1 && img.W >= 1 && !idat.empty(), ErrorCode::io,
            "png: missing IHDR or IDAT in " + path);

    const size_t stride = size_t(img.W) * 3 + 1;
    std::vector<uint8_t> raw = zlib_inflate(idat.data(), idat.size(), size_t(img.H) * stride);
    img.rgb.resize(size_t(img.H) * img.W * 3);
    for (int y = 0; y < img.H; ++y) {
        require(raw[size_t(y) * stride] == 0, ErrorCode::io,
                "png: unsupported scanline filter");
        std::copy(raw.begin() + ptrdiff_t(size_t(y) * stride + 1),
                  raw.begin() + ptrdiff_t(size_t(y + 1) * stride),
                  img.rgb.begin() + ptrdiff_t(size_t(y) * img.W * 3));
    }
    return img;
}

RgbImage frame_to_rgb(const PixelVideo& v, int t) {
    require(t >= 0 && t < v.T, ErrorCode::shape, "frame_to_rgb: frame index out of range");
    RgbImage img;
    img.H = v.H;
    img.W = v.W;
    img.rgb.resize(size_t(v.H) * v.W * 3);
    const float* src = v.data.data() + size_t(t) * v.H * v.W * 3;
    for (size_t i = 0; i < img.rgb.size(); ++i) {
        double x = std::clamp(double(src[i]), 0.0, 1.0);
        img.rgb[i] = uint8_t(std::lround(x * 255.0));
    }
    return img;
}

}  // namespace omni
