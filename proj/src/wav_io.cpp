#include "omni/wav_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "omni/common.hpp"

namespace omni {

double quantize_sample(double x) {
    x = std::min(1.0, std::max(-1.0, x));
    return std::nearbyint(x * 32767.0) / 32767.0;
}

namespace {

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<char*>(b), 4);
}

void put_u16(std::ostream& os, uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    os.write(reinterpret_cast<char*>(b), 2);
}

uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

uint16_t get_u16(std::istream& is) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    return static_cast<uint16_t>(uint16_t(b[0]) | uint16_t(b[1]) << 8);
}

}  // namespace

void write_wav(const std::string& path, const Waveform& w) {
    require(w.sample_rate == 16000, ErrorCode::value, "write_wav: only 16 kHz supported");
    std::ofstream os(path, std::ios::binary);
    require(os.good(), ErrorCode::io, "write_wav: cannot open " + path);

    const uint32_t n = static_cast<uint32_t>(w.samples.size());
    const uint32_t data_bytes = n * 2;
    os.write("RIFF", 4);
    put_u32(os, 36 + data_bytes);
    os.write("WAVE", 4);
    os.write("fmt ", 4);
    put_u32(os, 16);             // PCM fmt chunk size
    put_u16(os, 1);              // PCM
    put_u16(os, 1);              // mono
    put_u32(os, 16000);          // sample rate
    put_u32(os, 16000 * 2);      // byte rate
    put_u16(os, 2);              // block align
    put_u16(os, 16);             // bits per sample
    os.write("data", 4);
    put_u32(os, data_bytes);
    for (double x : w.samples) {
        double q = std::min(1.0, std::max(-1.0, x));
        int16_t s = static_cast<int16_t>(std::nearbyint(q * 32767.0));
        put_u16(os, static_cast<uint16_t>(s));
    }
    require(os.good(), ErrorCode::io, "write_wav: write failed for " + path);
}

Waveform read_wav(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), ErrorCode::io, "read_wav: cannot open " + path);
    char tag[4];
    is.read(tag, 4);
    require(is.good() && std::memcmp(tag, "RIFF", 4) == 0, ErrorCode::io,
            "read_wav: not a RIFF file: " + path);
    get_u32(is);  // riff size
    is.read(tag, 4);
    require(std::memcmp(tag, "WAVE", 4) == 0, ErrorCode::io, "read_wav: not a WAVE file: " + path);

    Waveform w;
    bool have_fmt = false;
    while (is.read(tag, 4)) {
        uint32_t chunk = get_u32(is);
        if (std::memcmp(tag, "fmt ", 4) == 0) {
            uint16_t fmt = get_u16(is);
            uint16_t channels = get_u16(is);
            uint32_t rate = get_u32(is);
            get_u32(is);  // byte rate
            get_u16(is);  // block align
            uint16_t bits = get_u16(is);
            require(fmt == 1 && bits == 16, ErrorCode::io, "read_wav: only 16-bit PCM supported");
            require(channels == 1, ErrorCode::value, "read_wav: only mono supported");
            require(rate == 16000, ErrorCode::value,
                    "read_wav: sample-rate mismatch (need 16000, got " + std::to_string(rate) + ")");
            if (chunk > 16) is.seekg(chunk - 16, std::ios::cur);
            have_fmt = true;
        } else if (std::memcmp(tag, "data", 4) == 0) {
            require(have_fmt, ErrorCode::io, "read_wav: data chunk before fmt chunk");
            uint32_t n = chunk / 2;
            w.samples.resize(n);
            for (uint32_t i = 0; i < n; ++i) {
                int16_t s = static_cast<int16_t>(get_u16(is));
                w.samples[i] = static_cast<double>(s) / 32767.0;
            }
            require(is.good(), ErrorCode::io, "read_wav: truncated data chunk in " + path);
            return w;
        } else {
            is.seekg(chunk + (chunk & 1), std::ios::cur);  // skip unknown chunk (word aligned)
        }
    }
    fail(ErrorCode::io, "read_wav: no data chunk in " + path);
}

}  // namespace omni
