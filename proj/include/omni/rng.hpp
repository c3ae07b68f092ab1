// Deterministic randomness. One run-level seed fans out into named substreams
// (e.g. "synth/clip/123", "train/batch") so every reported number is
// reproducible from (config, seed) and independent of evaluation order.
//
// std::mt19937_64 is fully specified by the standard, so raw draws are
// portable; the distributions here are written out explicitly because the
// <random> distribution classes are implementation-defined.
#pragma once

#include <random>
#include <sstream>
#include <string>

#include "omni/common.hpp"

namespace omni {

class RandomStream {
  public:
    RandomStream() : engine_(0) {}
    explicit RandomStream(uint64_t seed) : engine_(seed) {}

    // Substream for a named purpose: hash(seed label) seeds a fresh engine.
    static RandomStream substream(uint64_t seed, const std::string& label) {
        uint64_t h = fnv1a64(label, fnv1a64(&seed, sizeof(seed)));
        return RandomStream(h);
    }

    uint64_t bits() { return engine_(); }

    // Uniform in [0,1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Simple multiply-shift; bias is < 2^-64·n and
    // irrelevant at desk scale, while keeping draws portable.
    uint64_t uniform_index(uint64_t n) {
        require(n > 0, ErrorCode::value, "uniform_index: n must be positive");
        return static_cast<uint64_t>(uniform() * static_cast<double>(n)) % n;
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller without the cached spare, so the engine state alone fully
    // captures the stream (needed for exact checkpoint resumability).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        // Guard the log: uniform() can return exactly 0.
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    // Exact engine-state serialization (decimal words, whitespace separated).
    std::string save_state() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }

    void load_state(const std::string& s) {
        std::istringstream is(s);
        is >> engine_;
        require(!is.fail(), ErrorCode::io, "RandomStream: corrupt serialized state");
    }

  private:
    std::mt19937_64 engine_;
};

}  // namespace omni
