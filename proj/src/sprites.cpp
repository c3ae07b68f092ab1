#include "omni/sprites.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "omni/audio_features.hpp"

namespace omni {

// No palette entry may resemble the wrist detector colors (magenta/cyan);
// every face color keeps min(r,b)-g and min(g,b)-r well under the detector
// threshold, including under edge blending.
const std::array<const char*, kNumPaletteColors> kPaletteNames = {
    "red", "blue", "green", "yellow", "purple", "orange", "pink", "brown"};

const std::array<std::array<double, 3>, kNumPaletteColors> kPaletteRgb = {{
    {0.85, 0.20, 0.20},
    {0.20, 0.35, 0.85},
    {0.20, 0.75, 0.30},
    {0.90, 0.85, 0.20},
    {0.60, 0.25, 0.80},
    {0.90, 0.55, 0.15},
    {0.95, 0.55, 0.70},
    {0.55, 0.35, 0.20},
}};

const std::array<const char*, kNumVerbs> kVerbs = {"waving", "talking", "gesturing",
                                                   "swaying"};

const std::array<double, 3> kMouthColor = {1.0, 1.0, 1.0};
const std::array<double, 3> kWristLeftColor = {1.0, 0.0, 1.0};   // magenta
const std::array<double, 3> kWristRightColor = {0.0, 1.0, 1.0};  // cyan
const std::array<double, 3> kBackgroundColor = {0.04, 0.04, 0.07};

std::string caption_for(const SpriteSpec& spec) {
    return std::string("a ") + kPaletteNames[spec.palette] + " person " + kVerbs[spec.verb];
}

std::vector<double> mouth_height_series(const Waveform& wave, int T) {
    std::vector<double> env = frame_envelope(wave, T);
    for (double& e : env) e *= 3.0;  // mouth_max_rows; envelope < 1 so no clamp
    return env;
}

namespace {

struct Painter {
    PixelVideo* v;
    int t;

    void blend(int x, int y, const std::array<double, 3>& rgb, double cov) {
        if (cov <= 0.0 || x < 0 || y < 0 || x >= v->W || y >= v->H) return;
        for (int c = 0; c < 3; ++c) {
            double cur = v->at(t, y, x, c);
            v->at(t, y, x, c) = float(cur + cov * (rgb[c] - cur));
        }
    }

    void set(int x, int y, const std::array<double, 3>& rgb) {
        if (x < 0 || y < 0 || x >= v->W || y >= v->H) return;
        for (int c = 0; c < 3; ++c) v->at(t, y, x, c) = float(rgb[c]);
    }
};

// Half-pixel-wide smooth edge; deterministic and mirror-symmetric.
double disc_coverage(double px, double py, double cx, double cy, double r) {
    double d = std::hypot(px - cx, py - cy);
    return std::clamp(r - d + 0.5, 0.0, 1.0);
}

double segment_coverage(double px, double py, double x0, double y0, double x1, double y1,
                        double halfwidth) {
    double dx = x1 - x0, dy = y1 - y0;
    double len2 = dx * dx + dy * dy;
    double s = len2 > 0.0 ? std::clamp(((px - x0) * dx + (py - y0) * dy) / len2, 0.0, 1.0)
                          : 0.0;
    double d = std::hypot(px - (x0 + s * dx), py - (y0 + s * dy));
    return std::clamp(halfwidth - d + 0.5, 0.0, 1.0);
}

}  // namespace

void render_sprite_frame(const SpriteSpec& spec, double mouth_rows, const SkeletonFrame& pose,
                         PixelVideo& out, int t) {
    require(out.H == spec.canvas && out.W == spec.canvas, ErrorCode::shape,
            "render_sprite_frame: canvas size mismatch");
    require(t >= 0 && t < out.T, ErrorCode::shape, "render_sprite_frame: bad frame index");
    require(mouth_rows >= 0.0 && mouth_rows <= spec.mouth_max_rows + 1e-9, ErrorCode::value,
            "render_sprite_frame: mouth height out of range");

    Painter p{&out, t};
    const std::array<double, 3>& face = kPaletteRgb[spec.palette];

    for (int y = 0; y < out.H; ++y)
        for (int x = 0; x < out.W; ++x) p.set(x, y, kBackgroundColor);

    // Face disc (anti-aliased edge; the mouth box lies strictly inside it).
    for (int y = 0; y < out.H; ++y)
        for (int x = 0; x < out.W; ++x)
            p.blend(x, y, face,
                    disc_coverage(x + 0.5, y + 0.5, spec.face_cx, spec.face_cy, spec.face_r));

    // Mouth bar: full rows then a fractional bottom row, so the box's summed
    // coverage equals mouth_rows exactly and intensity is affine in it.
    for (int r = 0; r < spec.mouth_max_rows; ++r) {
        double cov = std::clamp(mouth_rows - r, 0.0, 1.0);
        for (int x = spec.mouth_x0; x < spec.mouth_x1; ++x)
            p.blend(x, spec.mouth_y0 + r, kMouthColor, cov);
    }

    // Arms: shoulder -> wrist strokes in the body color.
    const int W = out.W, H = out.H;
    const double slx = spec.shoulder_lx * W, sly = spec.shoulder_y * H;
    const double srx = spec.shoulder_rx * W, sry = spec.shoulder_y * H;
    const Joint& wl = pose.joints[kWristL];
    const Joint& wr = pose.joints[kWristR];
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double cl = segment_coverage(x + 0.5, y + 0.5, slx, sly, wl.x * W, wl.y * H,
                                         spec.arm_halfwidth);
            double cr = segment_coverage(x + 0.5, y + 0.5, srx, sry, wr.x * W, wr.y * H,
                                         spec.arm_halfwidth);
            p.blend(x, y, face, std::max(cl, cr));
        }

    // Wrist discs: binary coverage in exact detector colors, drawn last.
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            if (std::hypot(x + 0.5 - wl.x * W, y + 0.5 - wl.y * H) <= spec.wrist_r)
                p.set(x, y, kWristLeftColor);
            if (std::hypot(x + 0.5 - wr.x * W, y + 0.5 - wr.y * H) <= spec.wrist_r)
                p.set(x, y, kWristRightColor);
        }

    float* frame = out.data.data() + size_t(t) * H * W * 3;
    for (size_t i = 0; i < size_t(H) * W * 3; ++i)
        frame[i] = float(quantize_pixel(frame[i]));
}

namespace {

constexpr double kPi = 3.14159265358979323846;

Waveform make_burst_waveform(int duration, RandomStream& rng) {
    Waveform w;
    w.sample_rate = kAudioSampleRate;
    w.samples.assign(size_t(duration) * kSamplesPerFrame, 0.0);
    bool talking = rng.bernoulli(0.5);
    int f = 0;
    while (f < duration) {
        int len = talking ? 4 + int(rng.uniform_index(6)) : 2 + int(rng.uniform_index(4));
        len = std::min(len, duration - f);
        if (talking) {
            double freq = rng.uniform(100.0, 3000.0);
            double amp = rng.uniform(0.35, 0.85);
            const size_t n0 = size_t(f) * kSamplesPerFrame;
            const size_t n = size_t(len) * kSamplesPerFrame;
            const size_t ramp = std::max<size_t>(1, n / 4);
            for (size_t i = 0; i < n; ++i) {
                double attack = std::min(1.0, double(i) / double(ramp));
                double decay = std::min(1.0, double(n - 1 - i) / double(ramp));
                w.samples[n0 + i] = amp * std::min(attack, decay) *
                                    std::sin(2.0 * kPi * freq * double(i) / kAudioSampleRate);
            }
        }
        f += len;
        talking = !talking;
    }
    for (double& s : w.samples) s = quantize_sample(s);
    return w;
}

struct ArmTrack {
    double base, amp, hz, phase;  // wrist angle in radians around the shoulder

    double angle(int frame) const {
        return base + amp * std::sin(2.0 * kPi * hz * double(frame) / kVideoFps + phase);
    }
};

ArmTrack sample_arm(RandomStream& rng, bool left) {
    auto deg = [](double d) { return d * kPi / 180.0; };
    ArmTrack a;
    // Angle ranges keep wrist discs clear of the mouth box columns: the left
    // wrist stays on the left third of the canvas, the right on the right.
    a.base = left ? rng.uniform(deg(140), deg(220)) : rng.uniform(deg(-40), deg(40));
    a.amp = left ? rng.uniform(deg(15), deg(40)) : rng.uniform(deg(10), deg(35));
    a.hz = rng.uniform(0.3, 1.2);
    a.phase = rng.uniform(0.0, 2.0 * kPi);
    return a;
}

}  // namespace

SynthClip synth_clip(int id, const SynthConfig& cfg, uint64_t seed) {
    require(cfg.duration >= 1, ErrorCode::value, "synth_clip: duration must be >= 1");
    RandomStream rng = RandomStream::substream(seed, "clip" + std::to_string(id));

    SynthClip clip;
    clip.spec.palette = int(rng.uniform_index(kNumPaletteColors));
    clip.spec.verb = int(rng.uniform_index(kNumVerbs));
    clip.record.id = "clip" + std::to_string(id);
    clip.record.caption = caption_for(clip.spec);
    clip.record.lipsync_ok = rng.bernoulli(cfg.lipsync_rate);
    clip.record.pose_visible = rng.bernoulli(cfg.pose_rate);
    clip.record.aesthetic_ok = rng.bernoulli(cfg.aesthetic_rate);

    clip.wave = make_burst_waveform(cfg.duration, rng);

    const ArmTrack left = sample_arm(rng, true);
    const ArmTrack right = sample_arm(rng, false);
    clip.skeleton.frames.resize(cfg.duration);
    const SpriteSpec& s = clip.spec;
    for (int t = 0; t < cfg.duration; ++t) {
        SkeletonFrame& f = clip.skeleton.frames[t];
        auto place = [&](int j, double x, double y) {
            f.joints[j].x = std::clamp(x, 0.07, 0.93);
            f.joints[j].y = std::clamp(y, 0.07, 0.93);
            f.joints[j].visible = true;
        };
        place(kHead, 0.5, s.face_cy / s.canvas);
        place(kNeck, 0.5, 0.55);
        place(kShoulderL, s.shoulder_lx, s.shoulder_y);
        place(kShoulderR, s.shoulder_rx, s.shoulder_y);
        double la = left.angle(t), ra = right.angle(t);
        place(kWristL, s.shoulder_lx + s.arm_reach * std::cos(la),
              s.shoulder_y + s.arm_reach * std::sin(la));
        place(kWristR, s.shoulder_rx + s.arm_reach * std::cos(ra),
              s.shoulder_y + s.arm_reach * std::sin(ra));
        place(kElbowL, 0.5 * (f.joints[kShoulderL].x + f.joints[kWristL].x),
              0.5 * (f.joints[kShoulderL].y + f.joints[kWristL].y));
        place(kElbowR, 0.5 * (f.joints[kShoulderR].x + f.joints[kWristR].x),
              0.5 * (f.joints[kShoulderR].y + f.joints[kWristR].y));
    }

    const std::vector<double> mouth = mouth_height_series(clip.wave, cfg.duration);
    clip.frames = PixelVideo::zeros(cfg.duration, s.canvas, s.canvas);
    clip.frames.fps = kVideoFps;
    for (int t = 0; t < cfg.duration; ++t)
        render_sprite_frame(s, mouth[t], clip.skeleton.frames[t], clip.frames, t);
    return clip;
}

std::vector<ClipRecord> write_synth_dataset(const std::string& dir, int count,
                                            const SynthConfig& cfg, uint64_t seed) {
    require(count >= 1, ErrorCode::value, "write_synth_dataset: count must be >= 1");
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    require(!ec, ErrorCode::io, "cannot create dataset directory " + dir);

    std::vector<ClipRecord> records;
    records.reserve(count);
    for (int id = 0; id < count; ++id) {
        SynthClip clip = synth_clip(id, cfg, seed);
        const std::string base = dir + "/" + clip.record.id;
        clip.record.frames_path = base + ".ovid";
        clip.record.waveform_path = base + ".wav";
        clip.record.skeleton_path = base + ".jsonl";
        write_video_file(clip.record.frames_path, clip.frames);
        write_wav(clip.record.waveform_path, clip.wave);
        write_skeleton_jsonl(clip.record.skeleton_path, clip.skeleton);
        records.push_back(clip.record);
    }
    write_manifest(dir + "/manifest.jsonl", records);
    return records;
}

}  // namespace omni
