// Procedural talking-sprite clips: a 16x16 character whose mouth opening is
// proportional to the per-frame audio envelope by construction and whose arms
// follow the driving skeleton, so lip-sync and pose metrics have analytic
// ground truth (correlation 1, sub-pixel wrist recovery).
#pragma once

#include <array>
#include <string>
#include <vector>

#include "omni/codec.hpp"
#include "omni/rng.hpp"
#include "omni/skeleton.hpp"
#include "omni/train.hpp"
#include "omni/wav_io.hpp"

namespace omni {

constexpr int kNumPaletteColors = 8;
extern const std::array<const char*, kNumPaletteColors> kPaletteNames;
extern const std::array<std::array<double, 3>, kNumPaletteColors> kPaletteRgb;

constexpr int kNumVerbs = 4;
extern const std::array<const char*, kNumVerbs> kVerbs;

// Fixed detector colors: wrist discs render as exact constants (no edge
// blending), so metric recovery is a plain color match.
extern const std::array<double, 3> kMouthColor;
extern const std::array<double, 3> kWristLeftColor;
extern const std::array<double, 3> kWristRightColor;
extern const std::array<double, 3> kBackgroundColor;

// Canvas geometry in pixel units. The mouth box sits strictly inside the face
// disc, and arm geometry keeps every arm/wrist pixel outside the mouth box
// columns, so the box's mean intensity is exactly affine in mouth height.
struct SpriteSpec {
    int canvas = 16;
    double face_cx = 8.0, face_cy = 6.0, face_r = 4.4;
    int mouth_x0 = 6, mouth_x1 = 10;  // columns [x0, x1)
    int mouth_y0 = 7;                 // grows downward from this row
    int mouth_max_rows = 3;
    double shoulder_y = 0.65;              // normalized, as in the skeleton
    double shoulder_lx = 0.25, shoulder_rx = 0.75;
    double arm_reach = 0.28;               // normalized shoulder->wrist radius
    double arm_halfwidth = 0.6;            // pixels
    double wrist_r = 1.1;                  // pixels
    int palette = 0;
    int verb = 0;
};

std::string caption_for(const SpriteSpec& spec);

// Mouth opening in rows for each frame: mouth_max_rows * envelope. The
// envelope of a quantized waveform never reaches 1, so the bar never clamps.
std::vector<double> mouth_height_series(const Waveform& wave, int T);

// Draws one frame (face, mouth bar with fractional bottom row, arms, binary
// wrist discs) into frame t of `out`. Pixels quantize to the storage grid so
// disk round trips are exact.
void render_sprite_frame(const SpriteSpec& spec, double mouth_rows, const SkeletonFrame& pose,
                         PixelVideo& out, int t);

struct SynthConfig {
    int duration = 25;             // frames per clip
    double lipsync_rate = 0.30;    // strict-filter emulation; 0.13 mirrors the
                                   // production corpus preset
    double pose_rate = 0.90;
    double aesthetic_rate = 0.50;
};

struct SynthClip {
    ClipRecord record;  // paths filled in by the dataset writer
    SpriteSpec spec;
    PixelVideo frames;
    Waveform wave;
    SkeletonSequence skeleton;
};

// Deterministic in (id, seed): tone-burst waveform, oscillating arm
// trajectory, palette/verb identity, quality flags at the configured rates.
SynthClip synth_clip(int id, const SynthConfig& cfg, uint64_t seed);

// Writes <id>.ovid / <id>.wav / <id>.jsonl per clip plus manifest.jsonl;
// returns the manifest records in id order.
std::vector<ClipRecord> write_synth_dataset(const std::string& dir, int count,
                                            const SynthConfig& cfg, uint64_t seed);

}  // namespace omni
