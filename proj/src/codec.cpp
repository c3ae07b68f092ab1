#include "omni/codec.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "omni/binary_io.hpp"

namespace omni {

NormStats NormStats::identity(int channels) {
    NormStats s;
    s.mean.assign(channels, 0.0);
    s.std.assign(channels, 1.0);
    s.compute_id();
    return s;
}

void NormStats::compute_id() {
    uint64_t h = fnv1a64(mean.data(), mean.size() * sizeof(double));
    h = fnv1a64(std.data(), std.size() * sizeof(double), h);
    id = hex64(h);
}

void CodecConfig::install_stats(const NormStats& raw) {
    require(static_cast<int>(raw.mean.size()) == channels() &&
                static_cast<int>(raw.std.size()) == channels(),
            ErrorCode::shape, "install_stats: stats channel count does not match codec");
    NormStats snapped;
    snapped.mean.resize(raw.mean.size());
    snapped.std.resize(raw.std.size());
    for (size_t c = 0; c < raw.mean.size(); ++c) {
        require(std::isfinite(raw.mean[c]) && std::isfinite(raw.std[c]) && raw.std[c] > 0.0,
                ErrorCode::value, "install_stats: non-finite or non-positive stats");
        snapped.mean[c] = std::nearbyint(raw.mean[c] * kPixelGrid) / kPixelGrid;
        snapped.std[c] = round_pow2(std::max(raw.std[c], 1e-6));
    }
    snapped.compute_id();
    norm = snapped;
}

CodecConfig CodecConfig::with_identity_norm(int sp, int gt) {
    CodecConfig cfg;
    cfg.sp = sp;
    cfg.gt = gt;
    cfg.norm = NormStats::identity(cfg.channels());
    return cfg;
}

namespace {

void check_codec_inputs(const PixelVideo& v, const CodecConfig& cfg) {
    require(cfg.sp >= 1 && cfg.gt >= 1, ErrorCode::config, "codec: sp and gt must be >= 1");
    require(v.T >= 1, ErrorCode::shape, "codec: video needs at least one frame");
    require(v.H % cfg.sp == 0 && v.W % cfg.sp == 0, ErrorCode::shape,
            "codec: H and W must be divisible by the spatial patch size");
    require(static_cast<int>(cfg.norm.mean.size()) == cfg.channels(), ErrorCode::config,
            "codec: normalization stats missing or of wrong channel count");
    require(all_finite(v.data), ErrorCode::value, "codec: non-finite pixel value");
}

// First pixel frame of latent-frame k's group, and the group's frame count.
inline int group_start(int k, int gt) { return k == 0 ? 0 : 1 + (k - 1) * gt; }
inline int group_len(int k, int gt, int T) {
    if (k == 0) return 1;
    int s = group_start(k, gt);
    return std::min(gt, T - s);
}

}  // namespace

VideoLatent encode_video(const PixelVideo& v, const CodecConfig& cfg) {
    check_codec_inputs(v, cfg);
    const int sp = cfg.sp, gt = cfg.gt, C = cfg.channels();
    VideoLatent z;
    z.Tlat = latent_frames(v.T, gt);
    z.Hlat = v.H / sp;
    z.Wlat = v.W / sp;
    z.C = C;
    z.pixel_frames = v.T;
    z.stats_id = cfg.norm.id;
    z.grid.assign(size_t(z.Tlat) * z.Hlat * z.Wlat * C, 0.0);

    for (int k = 0; k < z.Tlat; ++k) {
        const int s = group_start(k, gt);
        const int len = group_len(k, gt, v.T);
        for (int slot = 0; slot < len; ++slot) {
            const int t = s + slot;
            for (int y = 0; y < z.Hlat; ++y)
                for (int x = 0; x < z.Wlat; ++x)
                    for (int color = 0; color < 3; ++color)
                        for (int py = 0; py < sp; ++py)
                            for (int px = 0; px < sp; ++px) {
                                int c = ((slot * 3 + color) * sp + py) * sp + px;
                                double val = v.at(t, y * sp + py, x * sp + px, color);
                                z.at(k, y, x, c) = (val - cfg.norm.mean[c]) / cfg.norm.std[c];
                            }
        }
        // Missing slots (frame 0's group, partial tail group) hold the
        // normalized zero: (0 - mean)/std, so decode would restore exact 0.
        for (int slot = len; slot < gt; ++slot) {
            for (int y = 0; y < z.Hlat; ++y)
                for (int x = 0; x < z.Wlat; ++x)
                    for (int color = 0; color < 3; ++color)
                        for (int py = 0; py < sp; ++py)
                            for (int px = 0; px < sp; ++px) {
                                int c = ((slot * 3 + color) * sp + py) * sp + px;
                                z.at(k, y, x, c) = (0.0 - cfg.norm.mean[c]) / cfg.norm.std[c];
                            }
        }
    }
    return z;
}

PixelVideo decode_video(const VideoLatent& z, const CodecConfig& cfg, bool display_mode) {
    require(z.stats_id == cfg.norm.id, ErrorCode::state,
            "decode_video: latent stats_id does not match codec normalization stats");
    require(z.C == cfg.channels(), ErrorCode::shape, "decode_video: channel count mismatch");
    require(z.pixel_frames >= 1 && z.Tlat == latent_frames(z.pixel_frames, cfg.gt),
            ErrorCode::shape, "decode_video: latent temporal dims inconsistent");

    const int sp = cfg.sp, gt = cfg.gt;
    PixelVideo v = PixelVideo::zeros(z.pixel_frames, z.Hlat * sp, z.Wlat * sp);
    for (int k = 0; k < z.Tlat; ++k) {
        const int s = group_start(k, gt);
        const int len = group_len(k, gt, v.T);
        for (int slot = 0; slot < len; ++slot) {
            const int t = s + slot;
            for (int y = 0; y < z.Hlat; ++y)
                for (int x = 0; x < z.Wlat; ++x)
                    for (int color = 0; color < 3; ++color)
                        for (int py = 0; py < sp; ++py)
                            for (int px = 0; px < sp; ++px) {
                                int c = ((slot * 3 + color) * sp + py) * sp + px;
                                double val = z.at(k, y, x, c) * cfg.norm.std[c] + cfg.norm.mean[c];
                                if (display_mode) val = std::min(1.0, std::max(0.0, val));
                                v.at(t, y * sp + py, x * sp + px, color) = static_cast<float>(val);
                            }
        }
    }
    return v;
}

NormStats fit_norm_stats(const std::vector<PixelVideo>& corpus, const CodecConfig& cfg) {
    require(!corpus.empty(), ErrorCode::value, "fit_norm_stats: empty corpus");
    const int C = cfg.channels();
    CodecConfig raw_cfg = cfg;
    raw_cfg.norm = NormStats::identity(C);

    // Two passes over the packed entries (re-encoding per pass instead of
    // caching every latent keeps memory flat over large corpora): exact mean,
    // then variance about it.
    std::vector<double> sum(C, 0.0);
    std::vector<int64_t> count(C, 0);
    for (const auto& v : corpus) {
        VideoLatent z = encode_video(v, raw_cfg);
        for (int k = 0; k < z.Tlat; ++k)
            for (int y = 0; y < z.Hlat; ++y)
                for (int x = 0; x < z.Wlat; ++x)
                    for (int c = 0; c < C; ++c) {
                        sum[c] += z.at(k, y, x, c);
                        ++count[c];
                    }
    }
    NormStats out;
    out.mean.resize(C);
    out.std.resize(C);
    for (int c = 0; c < C; ++c) out.mean[c] = sum[c] / static_cast<double>(count[c]);

    std::vector<double> sq(C, 0.0);
    for (const auto& v : corpus) {
        VideoLatent z = encode_video(v, raw_cfg);
        for (int k = 0; k < z.Tlat; ++k)
            for (int y = 0; y < z.Hlat; ++y)
                for (int x = 0; x < z.Wlat; ++x)
                    for (int c = 0; c < C; ++c) {
                        double d = z.at(k, y, x, c) - out.mean[c];
                        sq[c] += d * d;
                    }
    }
    for (int c = 0; c < C; ++c)
        out.std[c] = std::max(std::sqrt(sq[c] / static_cast<double>(count[c])), 1e-6);
    out.compute_id();
    return out;
}

// ---------------------------------------------------------------------------
// File io. Integers and floats are written little-endian regardless of host.
// ---------------------------------------------------------------------------

void write_latent_file(const std::string& path, const VideoLatent& z) {
    std::ofstream os(path, std::ios::binary);
    require(os.good(), ErrorCode::io, "write_latent_file: cannot open " + path);
    os.write("OLC1", 4);
    put_u32(os, static_cast<uint32_t>(z.pixel_frames));
    put_u32(os, static_cast<uint32_t>(z.Tlat));
    put_u32(os, static_cast<uint32_t>(z.Hlat));
    put_u32(os, static_cast<uint32_t>(z.Wlat));
    put_u32(os, static_cast<uint32_t>(z.C));
    require(z.stats_id.size() == 16, ErrorCode::state, "write_latent_file: malformed stats_id");
    os.write(z.stats_id.data(), 16);
    for (double v : z.grid) put_f32(os, static_cast<float>(v));
    require(os.good(), ErrorCode::io, "write_latent_file: write failed for " + path);
}

VideoLatent read_latent_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), ErrorCode::io, "read_latent_file: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    require(is.good() && std::memcmp(magic, "OLC1", 4) == 0, ErrorCode::io,
            "read_latent_file: bad magic in " + path);
    VideoLatent z;
    z.pixel_frames = static_cast<int>(get_u32(is));
    z.Tlat = static_cast<int>(get_u32(is));
    z.Hlat = static_cast<int>(get_u32(is));
    z.Wlat = static_cast<int>(get_u32(is));
    z.C = static_cast<int>(get_u32(is));
    char id[16];
    is.read(id, 16);
    z.stats_id.assign(id, 16);
    size_t n = size_t(z.Tlat) * z.Hlat * z.Wlat * z.C;
    z.grid.resize(n);
    for (size_t i = 0; i < n; ++i) z.grid[i] = get_f32(is);
    require(is.good(), ErrorCode::io, "read_latent_file: truncated file " + path);
    return z;
}

void write_video_file(const std::string& path, const PixelVideo& v) {
    std::ofstream os(path, std::ios::binary);
    require(os.good(), ErrorCode::io, "write_video_file: cannot open " + path);
    os.write("OVID", 4);
    put_u32(os, static_cast<uint32_t>(v.T));
    put_u32(os, static_cast<uint32_t>(v.H));
    put_u32(os, static_cast<uint32_t>(v.W));
    put_u32(os, static_cast<uint32_t>(v.fps));
    for (float x : v.data) put_f32(os, x);
    require(os.good(), ErrorCode::io, "write_video_file: write failed for " + path);
}

PixelVideo read_video_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), ErrorCode::io, "read_video_file: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    require(is.good() && std::memcmp(magic, "OVID", 4) == 0, ErrorCode::io,
            "read_video_file: bad magic in " + path);
    PixelVideo v;
    v.T = static_cast<int>(get_u32(is));
    v.H = static_cast<int>(get_u32(is));
    v.W = static_cast<int>(get_u32(is));
    v.fps = static_cast<int>(get_u32(is));
    v.data.resize(size_t(v.T) * v.H * v.W * 3);
    for (auto& x : v.data) x = get_f32(is);
    require(is.good(), ErrorCode::io, "read_video_file: truncated file " + path);
    return v;
}

}  // namespace omni
