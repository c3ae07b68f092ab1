// Skeleton keypoints and their deterministic rasterization to RGB maps.
// Desk skeleton: 8 named joints (head, neck, shoulders, elbows, wrists) with
// 7 bones; bones and joints render in fixed colors with anti-aliased
// coverage so mirrored inputs produce mirrored maps to ~1e-6.
#pragma once

#include <array>
#include <string>
#include <vector>

#include "omni/codec.hpp"

namespace omni {

constexpr int kNumJoints = 8;

enum JointId {
    kHead = 0,
    kNeck,
    kShoulderL,
    kShoulderR,
    kElbowL,
    kElbowR,
    kWristL,
    kWristR,
};

extern const std::array<const char*, kNumJoints> kJointNames;

// Bone list as (parent, child) joint ids.
constexpr int kNumBones = 7;
extern const std::array<std::pair<int, int>, kNumBones> kBones;

struct Joint {
    double x = 0.0;  // [0,1], left to right
    double y = 0.0;  // [0,1], top to bottom
    bool visible = false;
};

struct SkeletonFrame {
    std::array<Joint, kNumJoints> joints;
};

struct SkeletonSequence {
    std::vector<SkeletonFrame> frames;

    SkeletonSequence slice(int first, int last) const {
        SkeletonSequence s;
        s.frames.assign(frames.begin() + first, frames.begin() + last);
        return s;
    }
};

struct RasterConfig {
    double bone_halfwidth = 0.7;  // pixels
    double joint_radius = 1.1;    // pixels
};

// Per-frame [H x W x 3] maps, background zeros, per-channel max compositing
// (order independent). Errors on visible joints outside [0,1]^2 or non-finite.
PixelVideo rasterize_skeleton(const SkeletonSequence& s, int H, int W,
                              const RasterConfig& rc = RasterConfig());

// JSON-lines io: one record per frame, named joints with x/y/v fields.
void write_skeleton_jsonl(const std::string& path, const SkeletonSequence& s);
SkeletonSequence read_skeleton_jsonl(const std::string& path);

}  // namespace omni
