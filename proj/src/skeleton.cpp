#include "omni/skeleton.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

namespace omni {

const std::array<const char*, kNumJoints> kJointNames = {
    "head", "neck", "shoulder_l", "shoulder_r", "elbow_l", "elbow_r", "wrist_l", "wrist_r"};

const std::array<std::pair<int, int>, kNumBones> kBones = {{
    {kHead, kNeck},
    {kNeck, kShoulderL},
    {kNeck, kShoulderR},
    {kShoulderL, kElbowL},
    {kElbowL, kWristL},
    {kShoulderR, kElbowR},
    {kElbowR, kWristR},
}};

namespace {

struct Rgb {
    double r, g, b;
};

// Fixed palettes so every render of the same skeleton is identical and bones
// are distinguishable by color alone.
constexpr Rgb kBoneColors[kNumBones] = {
    {0.9, 0.2, 0.2}, {0.2, 0.9, 0.2}, {0.2, 0.2, 0.9}, {0.9, 0.9, 0.2},
    {0.9, 0.2, 0.9}, {0.2, 0.9, 0.9}, {0.9, 0.6, 0.2},
};
constexpr Rgb kJointColors[kNumJoints] = {
    {1.0, 1.0, 1.0}, {0.7, 0.7, 0.7}, {1.0, 0.5, 0.5}, {0.5, 1.0, 0.5},
    {0.5, 0.5, 1.0}, {1.0, 1.0, 0.5}, {1.0, 0.5, 1.0}, {0.5, 1.0, 1.0},
};

// Distance from point p to segment (a, b), all in pixel coordinates.
double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
    double dx = bx - ax, dy = by - ay;
    double len2 = dx * dx + dy * dy;
    double t = 0.0;
    if (len2 > 0.0) t = std::min(1.0, std::max(0.0, ((px - ax) * dx + (py - ay) * dy) / len2));
    double cx = ax + t * dx, cy = ay + t * dy;
    return std::hypot(px - cx, py - cy);
}

// 1-pixel anti-aliasing ramp around the stroke edge.
inline double coverage(double dist, double radius) {
    return std::min(1.0, std::max(0.0, radius + 0.5 - dist));
}

void composite_max(PixelVideo& maps, int t, int y, int x, const Rgb& color, double cov) {
    if (cov <= 0.0) return;
    maps.at(t, y, x, 0) = std::max(maps.at(t, y, x, 0), static_cast<float>(cov * color.r));
    maps.at(t, y, x, 1) = std::max(maps.at(t, y, x, 1), static_cast<float>(cov * color.g));
    maps.at(t, y, x, 2) = std::max(maps.at(t, y, x, 2), static_cast<float>(cov * color.b));
}

}  // namespace

PixelVideo rasterize_skeleton(const SkeletonSequence& s, int H, int W, const RasterConfig& rc) {
    const int T = static_cast<int>(s.frames.size());
    require(T >= 1, ErrorCode::shape, "rasterize_skeleton: empty sequence");
    PixelVideo maps = PixelVideo::zeros(T, H, W);

    for (int t = 0; t < T; ++t) {
        const auto& joints = s.frames[t].joints;
        for (const auto& j : joints) {
            if (!j.visible) continue;
            require(std::isfinite(j.x) && std::isfinite(j.y) && j.x >= 0.0 && j.x <= 1.0 &&
                        j.y >= 0.0 && j.y <= 1.0,
                    ErrorCode::value, "rasterize_skeleton: visible keypoint outside [0,1]^2");
        }
        // Pixel centers sit at (x+0.5, y+0.5); keypoints scale by canvas size.
        auto px_of = [&](const Joint& j) { return j.x * W; };
        auto py_of = [&](const Joint& j) { return j.y * H; };

        for (int b = 0; b < kNumBones; ++b) {
            const Joint& a = joints[kBones[b].first];
            const Joint& c = joints[kBones[b].second];
            if (!a.visible || !c.visible) continue;
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) {
                    double d = segment_distance(x + 0.5, y + 0.5, px_of(a), py_of(a), px_of(c),
                                                py_of(c));
                    composite_max(maps, t, y, x, kBoneColors[b], coverage(d, rc.bone_halfwidth));
                }
        }
        for (int jid = 0; jid < kNumJoints; ++jid) {
            const Joint& j = joints[jid];
            if (!j.visible) continue;
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) {
                    double d = std::hypot(x + 0.5 - px_of(j), y + 0.5 - py_of(j));
                    composite_max(maps, t, y, x, kJointColors[jid], coverage(d, rc.joint_radius));
                }
        }
    }
    return maps;
}

void write_skeleton_jsonl(const std::string& path, const SkeletonSequence& s) {
    std::ofstream os(path);
    require(os.good(), ErrorCode::io, "write_skeleton_jsonl: cannot open " + path);
    for (const auto& frame : s.frames) {
        nlohmann::json joints = nlohmann::json::object();
        for (int j = 0; j < kNumJoints; ++j) {
            joints[kJointNames[j]] = {{"x", frame.joints[j].x},
                                      {"y", frame.joints[j].y},
                                      {"v", frame.joints[j].visible}};
        }
        os << nlohmann::json{{"joints", joints}}.dump() << "\n";
    }
    require(os.good(), ErrorCode::io, "write_skeleton_jsonl: write failed for " + path);
}

SkeletonSequence read_skeleton_jsonl(const std::string& path) {
    std::ifstream is(path);
    require(is.good(), ErrorCode::io, "read_skeleton_jsonl: cannot open " + path);
    SkeletonSequence s;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            fail(ErrorCode::io, "read_skeleton_jsonl: bad JSON in " + path + ": " + e.what());
        }
        SkeletonFrame frame;
        const auto& joints = rec.at("joints");
        for (int j = 0; j < kNumJoints; ++j) {
            const auto& node = joints.at(kJointNames[j]);
            frame.joints[j].x = node.at("x").get<double>();
            frame.joints[j].y = node.at("y").get<double>();
            frame.joints[j].visible = node.at("v").get<bool>();
        }
        s.frames.push_back(frame);
    }
    return s;
}

}  // namespace omni
