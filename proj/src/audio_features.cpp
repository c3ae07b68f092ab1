#include "omni/audio_features.hpp"

#include <cmath>

namespace omni {

void fft_radix2(std::vector<std::complex<double>>& a) {
    const size_t n = a.size();
    require(n > 0 && (n & (n - 1)) == 0, ErrorCode::value, "fft_radix2: size must be a power of two");
    // Bit-reversal permutation.
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        double ang = -2.0 * M_PI / static_cast<double>(len);
        std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t j = 0; j < len / 2; ++j) {
                std::complex<double> u = a[i + j];
                std::complex<double> v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

namespace {

constexpr int kWindowLengths[kAudioScales] = {160, 320, 640};  // 10/20/40 ms

inline double mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_inv(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

size_t next_pow2(size_t n) {
    size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

// Triangular mel filter weights over FFT bins 0..N/2 for one analysis scale.
std::vector<std::vector<double>> mel_filters(size_t fft_size) {
    const double nyquist = kAudioSampleRate / 2.0;
    std::vector<double> edges(kFilterbankBands + 2);
    for (int i = 0; i < kFilterbankBands + 2; ++i)
        edges[i] = mel_inv(mel(nyquist) * i / (kFilterbankBands + 1));

    const size_t bins = fft_size / 2 + 1;
    std::vector<std::vector<double>> filters(kFilterbankBands, std::vector<double>(bins, 0.0));
    for (int b = 0; b < kFilterbankBands; ++b) {
        double lo = edges[b], mid = edges[b + 1], hi = edges[b + 2];
        for (size_t f = 0; f < bins; ++f) {
            double hz = static_cast<double>(f) * kAudioSampleRate / static_cast<double>(fft_size);
            double w = 0.0;
            if (hz > lo && hz < mid)
                w = (hz - lo) / (mid - lo);
            else if (hz >= mid && hz < hi)
                w = (hi - hz) / (hi - mid);
            if (w > 0.0) filters[b][f] = w;
        }
    }
    return filters;
}

}  // namespace

std::vector<std::vector<double>> extract_audio_features(const Waveform& wave, int T) {
    require(T >= 1, ErrorCode::value, "extract_audio_features: T must be >= 1");
    require(!wave.samples.empty(), ErrorCode::value, "extract_audio_features: empty waveform");
    require(wave.sample_rate == kAudioSampleRate, ErrorCode::value,
            "extract_audio_features: sample-rate mismatch (need 16000)");

    // Precompute Hann windows and filterbanks per scale once per call; these
    // are tiny compared to the per-frame work.
    std::vector<std::vector<double>> hann(kAudioScales);
    std::vector<std::vector<std::vector<double>>> banks(kAudioScales);
    std::vector<size_t> fft_sizes(kAudioScales);
    for (int s = 0; s < kAudioScales; ++s) {
        const int L = kWindowLengths[s];
        hann[s].resize(L);
        for (int i = 0; i < L; ++i)
            hann[s][i] = 0.5 * (1.0 - std::cos(2.0 * M_PI * i / (L - 1)));
        fft_sizes[s] = next_pow2(static_cast<size_t>(L));
        banks[s] = mel_filters(fft_sizes[s]);
    }

    auto sample_at = [&](long idx) -> double {
        if (idx < 0 || idx >= static_cast<long>(wave.samples.size())) return 0.0;
        return wave.samples[static_cast<size_t>(idx)];
    };

    std::vector<std::vector<double>> rows(T, std::vector<double>(kAudioFeatureDim, 0.0));
    std::vector<std::complex<double>> buf;
    for (int t = 0; t < T; ++t) {
        const long center = static_cast<long>((t + 0.5) * kSamplesPerFrame);
        int col = 0;
        for (int s = 0; s < kAudioScales; ++s) {
            const int L = kWindowLengths[s];
            const size_t N = fft_sizes[s];
            buf.assign(N, {0.0, 0.0});
            const long start = center - L / 2;
            for (int i = 0; i < L; ++i) buf[i] = {sample_at(start + i) * hann[s][i], 0.0};
            fft_radix2(buf);
            for (int b = 0; b < kFilterbankBands; ++b) {
                double energy = 0.0;
                const auto& filt = banks[s][b];
                for (size_t f = 0; f < N / 2 + 1; ++f) {
                    if (filt[f] != 0.0) energy += filt[f] * std::norm(buf[f]);
                }
                rows[t][col++] = std::log(kLogFloorEps + energy);
            }
        }
    }
    return rows;
}

std::vector<double> frame_envelope(const Waveform& wave, int T) {
    require(T >= 1, ErrorCode::value, "frame_envelope: T must be >= 1");
    std::vector<double> raw(T, 0.0);
    for (int t = 0; t < T; ++t) {
        double acc = 0.0;
        for (int i = 0; i < kSamplesPerFrame; ++i) {
            size_t idx = static_cast<size_t>(t) * kSamplesPerFrame + i;
            if (idx < wave.samples.size()) acc += std::fabs(wave.samples[idx]);
        }
        raw[t] = acc / kSamplesPerFrame;
    }
    std::vector<double> out(T);
    for (int t = 0; t < T; ++t) {
        double a = raw[t > 0 ? t - 1 : 0];
        double b = raw[t];
        double c = raw[t < T - 1 ? t + 1 : T - 1];
        out[t] = 0.25 * a + 0.5 * b + 0.25 * c;
    }
    return out;
}

AudioTokens assemble_audio_tokens(const std::vector<std::vector<double>>& feats, int w,
                                  const AudioProjection& proj) {
    require(w >= 0, ErrorCode::value, "assemble_audio_tokens: window radius must be >= 0");
    require(!feats.empty(), ErrorCode::shape, "assemble_audio_tokens: no feature rows");
    const int T = static_cast<int>(feats.size());
    const int F = static_cast<int>(feats[0].size());
    require(proj.F == F && static_cast<int>(proj.weight.size()) == proj.D * proj.F &&
                static_cast<int>(proj.bias.size()) == proj.D,
            ErrorCode::shape, "assemble_audio_tokens: projection shape mismatch");

    AudioTokens out;
    out.T = T;
    out.k = 2 * w + 1;
    out.D = proj.D;
    out.tokens.assign(size_t(T) * out.k * out.D, 0.0);
    for (int t = 0; t < T; ++t)
        for (int j = 0; j < out.k; ++j) {
            const auto& row = feats[static_cast<size_t>(window_source_frame(t, j, w, T))];
            for (int d = 0; d < proj.D; ++d) {
                double acc = proj.bias[d];
                for (int f = 0; f < F; ++f) acc += proj.weight[size_t(d) * F + f] * row[f];
                out.at(t, j, d) = acc;
            }
        }
    return out;
}

AudioFramePooling pool_audio_per_latent_frame(const AudioTokens& a, const CodecConfig& codec) {
    require(a.T >= 1, ErrorCode::shape, "pool_audio_per_latent_frame: empty token grid");
    AudioFramePooling p;
    p.T = a.T;
    p.k = a.k;
    const int Tlat = latent_frames(a.T, codec.gt);
    p.frame_range.resize(Tlat);
    p.frame_range[0] = {0, 1};
    for (int k = 1; k < Tlat; ++k) {
        int first = 1 + (k - 1) * codec.gt;
        int last = std::min(first + codec.gt, a.T);
        require(first < a.T, ErrorCode::shape,
                "pool_audio_per_latent_frame: token rows inconsistent with codec grouping");
        p.frame_range[k] = {first, last};
    }
    return p;
}

}  // namespace omni
