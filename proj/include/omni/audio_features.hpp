// Audio feature extraction: a pluggable spectral front end producing
// per-frame feature rows at 25 fps. Row t concatenates log-energy mel
// filterbank vectors at three analysis scales (10/20/40 ms Hann windows
// centered on frame t's timestamp), so "multi-scale acoustic features" are
// honored without a pretrained speech model.
//
// The definition is frozen precisely so an independent naive-DFT
// implementation reproduces every row to high accuracy:
//   - window length L in {160, 320, 640} samples, symmetric Hann,
//   - zero-padded to N = next power of two, radix-2 FFT,
//   - B=8 triangular mel filters spanning 0..8 kHz on bins 0..N/2,
//   - entry = ln(1e-10 + filter energy); silence rows equal ln(1e-10).
#pragma once

#include <complex>
#include <vector>

#include "omni/codec.hpp"
#include "omni/wav_io.hpp"

namespace omni {

constexpr int kAudioSampleRate = 16000;
constexpr int kVideoFps = 25;
constexpr int kSamplesPerFrame = kAudioSampleRate / kVideoFps;  // 640
constexpr int kFilterbankBands = 8;
constexpr int kAudioScales = 3;
constexpr int kAudioFeatureDim = kFilterbankBands * kAudioScales;  // F = 24
constexpr double kLogFloorEps = 1e-10;

// In-place iterative radix-2 FFT; size must be a power of two.
void fft_radix2(std::vector<std::complex<double>>& a);

// [T x F] feature rows; row t centered on pixel-frame t's timestamp. The
// waveform is implicitly zero-padded to cover T frames.
std::vector<std::vector<double>> extract_audio_features(const Waveform& wave, int T);

// Per-frame amplitude envelope: mean |sample| over each frame's 640 samples,
// then a [0.25, 0.5, 0.25] smoothing with replicated edges. Shared by the
// sprite generator (mouth height) and sync_correlation (metric side), which
// is what makes ground-truth clips correlate exactly.
std::vector<double> frame_envelope(const Waveform& wave, int T);

// Post-projection audio tokens: token (t, j) = proj(feats[clamp(t+j-w)]),
// k = 2w+1 window slots per frame.
struct AudioTokens {
    int T = 0;
    int k = 0;
    int D = 0;
    std::vector<double> tokens;  // row-major (t, j, d)

    double& at(int t, int j, int d) { return tokens[(size_t(t) * k + j) * D + d]; }
    double at(int t, int j, int d) const { return tokens[(size_t(t) * k + j) * D + d]; }
};

// Frozen linear map F -> D (the learned projection lives in the model; this
// struct serves the standalone operation and tests).
struct AudioProjection {
    int F = 0;
    int D = 0;
    std::vector<double> weight;  // [D x F], row-major
    std::vector<double> bias;    // [D]
};

// Source frame for window slot j of frame t under edge clamping.
inline int window_source_frame(int t, int j, int w, int T) {
    int s = t + j - w;
    return s < 0 ? 0 : (s >= T ? T - 1 : s);
}

AudioTokens assemble_audio_tokens(const std::vector<std::vector<double>>& feats, int w,
                                  const AudioProjection& proj);

// Latent-frame grouping of token rows: latent frame 0 owns pixel frame 0's
// token set, latent frame k>=1 owns the sets of its gt (or fewer, at the
// tail) constituent frames. Expressed as [first_frame, last_frame) pixel
// ranges so both the frozen path and the training graph share it.
struct AudioFramePooling {
    int T = 0;
    int k = 0;
    std::vector<std::pair<int, int>> frame_range;  // per latent frame

    int token_rows(int latent_frame) const {
        auto [a, b] = frame_range[latent_frame];
        return (b - a) * k;
    }
};

AudioFramePooling pool_audio_per_latent_frame(const AudioTokens& a, const CodecConfig& codec);

}  // namespace omni
