// Latent codec: deterministic, exactly invertible stand-in for a causal 3D
// VAE. Pixel videos are packed into a [Tlat x Hlat x Wlat x C] grid with
// causal temporal grouping (frame 0 alone, then groups of gt frames) and
// per-channel affine normalization from corpus statistics.
//
// Exact invertibility in floating point is achieved by construction:
//   - pixel values live on the 2^-24 dyadic grid (exactly the float32 values
//     k/2^24 in [0,1]; the sprite renderer and all dataset inputs quantize
//     to it),
//   - the normalization mean is snapped to the same grid and the std to a
//     power of two when stats are installed into CodecConfig,
//   - codec arithmetic runs in double.
// Then x - mean is an exact integer multiple of 2^-24 (<= 25 bits), division
// and multiplication by a power-of-two std are exact, and adding the mean
// back lands exactly on the original grid point.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "omni/common.hpp"

namespace omni {

// A [T x H x W x 3] video with values in [0,1], fixed 25 fps.
struct PixelVideo {
    int T = 0;
    int H = 0;
    int W = 0;
    int fps = 25;
    std::vector<float> data;  // row-major (t, y, x, color)

    float& at(int t, int y, int x, int c) { return data[((size_t(t) * H + y) * W + x) * 3 + c]; }
    float at(int t, int y, int x, int c) const {
        return data[((size_t(t) * H + y) * W + x) * 3 + c];
    }
    size_t size() const { return data.size(); }

    static PixelVideo zeros(int T, int H, int W) {
        PixelVideo v;
        v.T = T;
        v.H = H;
        v.W = W;
        v.data.assign(size_t(T) * H * W * 3, 0.0f);
        return v;
    }
};

// Per-channel normalization statistics plus an identifier tying latents to
// the stats they were produced with.
struct NormStats {
    std::vector<double> mean;
    std::vector<double> std;
    std::string id;  // 16-hex-digit content hash of (mean, std)

    static NormStats identity(int channels);
    void compute_id();
};

struct CodecConfig {
    int sp = 2;  // spatial patch size
    int gt = 4;  // temporal group size
    NormStats norm;

    int channels() const { return 3 * sp * sp * gt; }

    // Snaps stats onto the exactness-preserving grid (mean -> 2^-24 grid,
    // std -> power of two floored at 1e-6) and installs them.
    void install_stats(const NormStats& raw);

    static CodecConfig with_identity_norm(int sp = 2, int gt = 4);
};

// Number of latent frames for a T-frame pixel video: frame 0 alone, then
// ceil((T-1)/gt) groups.
inline int latent_frames(int T, int gt) {
    return 1 + static_cast<int>(ceil_div(int64_t(T) - 1, gt));
}

struct VideoLatent {
    int Tlat = 0;
    int Hlat = 0;
    int Wlat = 0;
    int C = 0;
    int pixel_frames = 0;  // original T; needed to invert partial tail groups
    std::string stats_id;
    std::vector<double> grid;  // row-major (t, y, x, c)

    double& at(int t, int y, int x, int c) {
        return grid[((size_t(t) * Hlat + y) * Wlat + x) * C + c];
    }
    double at(int t, int y, int x, int c) const {
        return grid[((size_t(t) * Hlat + y) * Wlat + x) * C + c];
    }
    size_t size() const { return grid.size(); }
};

// Causal packing: latent frame 0 holds pixel frame 0 (remaining temporal
// slots zero), latent frame k>=1 holds pixel frames [1+(k-1)gt, 1+k·gt)
// (missing tail frames zero). Channel layout: c = ((slot·3 + color)·sp + py)·sp + px.
VideoLatent encode_video(const PixelVideo& v, const CodecConfig& cfg);

// Exact left inverse of encode_video on its image. `display_mode` clamps the
// output to [0,1]; otherwise values pass through untouched.
PixelVideo decode_video(const VideoLatent& z, const CodecConfig& cfg, bool display_mode = false);

// True per-channel mean/std of the packed (unnormalized) latent entries over
// the corpus, two-pass, std floored at 1e-6. Snapping for exact invertibility
// happens in CodecConfig::install_stats, not here.
NormStats fit_norm_stats(const std::vector<PixelVideo>& corpus, const CodecConfig& cfg);

// Latent file io: magic "OLC1", dims (T, Tlat, Hlat, Wlat, C), stats_id,
// then row-major little-endian float32 grid entries.
void write_latent_file(const std::string& path, const VideoLatent& z);
VideoLatent read_latent_file(const std::string& path);

// Raw pixel-video container for dataset clips (float32 keeps the 2^-24 grid
// exactly): magic "OVID", dims, fps, then row-major float32.
void write_video_file(const std::string& path, const PixelVideo& v);
PixelVideo read_video_file(const std::string& path);

}  // namespace omni
