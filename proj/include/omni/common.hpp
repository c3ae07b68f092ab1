// Shared plumbing: error types with machine-parsable codes, FNV-1a hashing,
// dyadic-grid helpers used by the exactly invertible codec, and small
// formatting utilities. Everything here is header-only and allocation-light.
#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace omni {

// ---------------------------------------------------------------------------
// Errors. Every throw site picks a stable code so the CLI can map failures to
// exit codes (config -> 2, everything else -> 3) and tests can assert on the
// failure class rather than message text.
// ---------------------------------------------------------------------------
enum class ErrorCode {
    config,   // bad/unknown/missing configuration keys or values
    io,       // file system, parse, magic/version mismatch
    shape,    // dimension or divisibility violations
    value,    // out-of-domain values (non-finite, out of range, empty input)
    state,    // contract violations on object state (stats_id mismatch, ...)
    numeric,  // non-finite activations/losses at runtime
};

inline const char* error_code_name(ErrorCode c) {
    switch (c) {
        case ErrorCode::config: return "E_CONFIG";
        case ErrorCode::io: return "E_IO";
        case ErrorCode::shape: return "E_SHAPE";
        case ErrorCode::value: return "E_VALUE";
        case ErrorCode::state: return "E_STATE";
        case ErrorCode::numeric: return "E_NUMERIC";
    }
    return "E_UNKNOWN";
}

class OmniError : public std::runtime_error {
  public:
    OmniError(ErrorCode code, const std::string& msg)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + msg), code_(code) {}
    ErrorCode code() const { return code_; }

  private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) {
    throw OmniError(code, msg);
}

inline void require(bool ok, ErrorCode code, const std::string& msg) {
    if (!ok) fail(code, msg);
}

// ---------------------------------------------------------------------------
// FNV-1a 64-bit. Used for config content hashes, stats ids, and output video
// hashes; stable across platforms and runs by construction.
// ---------------------------------------------------------------------------
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t seed = 0xcbf29ce484222325ull) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    uint64_t h = seed;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a64(std::string_view s, uint64_t seed = 0xcbf29ce484222325ull) {
    return fnv1a64(s.data(), s.size(), seed);
}

inline std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

// ---------------------------------------------------------------------------
// Dyadic grid helpers. The latent codec guarantees bit-exact round trips by
// keeping pixels and normalization means on the 2^-24 grid and stds on exact
// powers of two; see codec.hpp for the full argument.
// ---------------------------------------------------------------------------
inline constexpr double kPixelGrid = 16777216.0;  // 2^24

// Nearest grid point in [0,1]; the grid is exactly the set of float32 values
// k/2^24 with k in [0, 2^24].
inline double quantize_pixel(double v) {
    if (v <= 0.0) return 0.0;
    if (v >= 1.0) return 1.0;
    return std::nearbyint(v * kPixelGrid) / kPixelGrid;
}

// Nearest power of two (in log space); input must be positive.
inline double round_pow2(double v) {
    return std::exp2(std::nearbyint(std::log2(v)));
}

inline bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline bool all_finite(const std::vector<float>& v) {
    for (float x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

// ceil(a/b) for positive integers.
inline int64_t ceil_div(int64_t a, int64_t b) { return (a + b - 1) / b; }

}  // namespace omni
