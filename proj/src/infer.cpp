#include "omni/infer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "omni/audio_features.hpp"
#include "omni/png_io.hpp"

namespace omni {

DriveMode drive_mode_from_string(const std::string& s) {
    if (s == "audio") return DriveMode::audio;
    if (s == "pose") return DriveMode::pose;
    if (s == "audio+pose" || s == "audio_pose") return DriveMode::audio_pose;
    fail(ErrorCode::config, "unknown drive mode '" + s + "' (audio, pose, audio+pose)");
}

std::string to_string(DriveMode m) {
    switch (m) {
        case DriveMode::audio: return "audio";
        case DriveMode::pose: return "pose";
        case DriveMode::audio_pose: return "audio+pose";
    }
    fail(ErrorCode::value, "invalid drive mode");
}

ConditionMask resolve_activation(const DrivingRequest& req) {
    require(req.duration >= 1, ErrorCode::value, "duration must be >= 1 frame");
    require(req.steps >= 1, ErrorCode::value, "steps must be >= 1");
    require(req.cfg_scale >= 0.0, ErrorCode::value, "cfg_scale must be >= 0");
    require(req.reference.T == 1, ErrorCode::shape, "reference must be a single frame");
    const bool wants_audio = req.mode == DriveMode::audio || req.mode == DriveMode::audio_pose;
    const bool wants_pose = req.mode == DriveMode::pose || req.mode == DriveMode::audio_pose;
    require(!wants_audio || !req.waveform.samples.empty(), ErrorCode::value,
            "audio-driven request has no waveform");
    require(!wants_pose || !req.skeleton.frames.empty(), ErrorCode::value,
            "pose-driven request has no skeleton");
    ConditionMask m;
    m.text = !req.caption.empty();  // empty caption -> NULL text, slot still occupied
    m.audio = wants_audio;
    m.pose = wants_pose;
    m.motion_frames = false;  // decided per segment by the chaining loop
    return m;
}

std::vector<SegmentPlan> plan_segments(int duration, int Lseg, int M) {
    require(duration >= 1, ErrorCode::value, "duration must be positive");
    require(M >= 1 && Lseg > M, ErrorCode::value,
            "segment length must exceed the motion overlap");
    std::vector<SegmentPlan> plans;
    plans.push_back({0, std::min(Lseg, duration), -1});
    int next = plans[0].frames;
    while (next < duration) {
        SegmentPlan p;
        p.first_frame = next;
        p.frames = std::min(Lseg - M, duration - next);
        p.motion_first = next - M;
        plans.push_back(p);
        next += p.frames;
    }
    return plans;
}

std::vector<double> cfg_predict(const ModelConfig& model, ParamStore<float>& params,
                                const ForwardInputs& full, const std::vector<int>& null_text,
                                double cfg_scale) {
    require(cfg_scale >= 0.0, ErrorCode::value, "cfg_scale must be >= 0");
    require(full.seq != nullptr, ErrorCode::value, "cfg_predict: no packed sequence");
    auto run = [&](const ForwardInputs& in) {
        std::vector<float> v = predict_velocity(model, params, in);
        return std::vector<double>(v.begin(), v.end());
    };
    if (cfg_scale == 1.0) return run(full);

    // Unconditional branch: audio and text nulled together; pose, reference
    // and motion frames stay exactly as in the conditional branch.
    PackedSequence seq_drop = *full.seq;
    seq_drop.text_ids = null_text;
    ForwardInputs drop = full;
    drop.seq = &seq_drop;
    drop.audio = nullptr;
    if (cfg_scale == 0.0) return run(drop);

    std::vector<double> v = run(drop);
    std::vector<double> v_full = run(full);
    for (size_t i = 0; i < v.size(); ++i) v[i] += cfg_scale * (v_full[i] - v[i]);
    return v;
}

VideoLatent noise_latent(int pixel_frames, int Tlat, int Hlat, int Wlat, int C,
                         const std::string& stats_id, RandomStream& rng) {
    VideoLatent z;
    z.pixel_frames = pixel_frames;
    z.Tlat = Tlat;
    z.Hlat = Hlat;
    z.Wlat = Wlat;
    z.C = C;
    z.stats_id = stats_id;
    z.grid.resize(size_t(Tlat) * Hlat * Wlat * C);
    for (auto& v : z.grid) v = rng.normal();
    return z;
}

VideoLatent sample_segment(const VelocityFn& vfn, VideoLatent x, int steps) {
    require(steps >= 1, ErrorCode::value, "steps must be >= 1");
    const double dt = 1.0 / steps;
    for (int k = 0; k < steps; ++k) {
        const double t = 1.0 - k * dt;
        std::vector<double> v = vfn(x, t);
        require(v.size() == x.grid.size(), ErrorCode::shape,
                "sample_segment: velocity size mismatch");
        for (size_t i = 0; i < v.size(); ++i) x.grid[i] -= dt * v[i];
        require(all_finite(x.grid), ErrorCode::numeric,
                "non-finite sample state after step " + std::to_string(k));
    }
    return x;
}

namespace {

// Smallest clip length >= T that the causal grouping can encode.
int round_up_encodable(int T, int gt) {
    if (T <= 1) return 1;
    return 1 + ceil_div(T - 1, gt) * gt;
}

}  // namespace

GenerationResult generate(const DrivingRequest& req, const ModelConfig& model,
                          const CodecConfig& codec, const Vocab& vocab,
                          ParamStore<float>& params, bool keep_window_latents) {
    const ConditionMask active = resolve_activation(req);
    require(vocab.size() == model.vocab_size, ErrorCode::config,
            "vocabulary size disagrees with model config");
    require(model.latent_channels == codec.channels(), ErrorCode::config,
            "codec channel count disagrees with the model");

    const VideoLatent z_ref = encode_video(req.reference, codec);
    const int H = req.reference.H, W = req.reference.W;
    const int M = model.M;
    const auto plans = plan_segments(req.duration, req.segment_length, M);
    if (plans.size() > 1)
        require((M - 1) % codec.gt == 0, ErrorCode::config,
                "motion overlap must end on a latent group boundary");
    const int m_lat = 1 + (M - 1) / codec.gt;  // latent frames covering M pixels

    // Window geometry: each segment denoises a whole encodable window (motion
    // prefix + emitted frames, rounded up); extra frames are never emitted.
    struct Win { int start = 0, len = 0; };
    std::vector<Win> wins(plans.size());
    int max_need = 0;
    for (size_t k = 0; k < plans.size(); ++k) {
        const bool has_motion = plans[k].motion_first >= 0;
        wins[k].start = has_motion ? plans[k].motion_first : plans[k].first_frame;
        wins[k].len = round_up_encodable((has_motion ? M : 0) + plans[k].frames, codec.gt);
        max_need = std::max(max_need, wins[k].start + wins[k].len);
    }

    // Driving signals once over the padded timeline: silence past the
    // waveform, last skeleton frame replicated past the provided range.
    const bool use_audio = active.audio && !req.null_audio;
    std::vector<std::vector<double>> feats;
    if (use_audio) {
        Waveform padded = req.waveform;
        padded.samples.resize(size_t(max_need) * kSamplesPerFrame, 0.0);
        feats = extract_audio_features(padded, max_need);
    }
    SkeletonSequence sk;
    if (active.pose) {
        sk.frames = req.skeleton.frames;
        sk.frames.resize(size_t(max_need), req.skeleton.frames.back());
    }

    const TextTokens text_full = active.text ? encode_text(req.caption, vocab, model.Lmax)
                                             : null_caption_tokens(model.Lmax);
    const TextTokens text_null = null_caption_tokens(model.Lmax);

    RandomStream rng = RandomStream::substream(req.seed, "sample");

    GenerationResult res;
    res.video = PixelVideo::zeros(req.duration, H, W);
    res.video.fps = kVideoFps;
    const size_t frame_elems = size_t(H) * W * 3;

    for (size_t k = 0; k < plans.size(); ++k) {
        const SegmentPlan& p = plans[k];
        const Win w = wins[k];
        const bool has_motion = p.motion_first >= 0;
        try {
            VideoLatent z_motion;
            if (has_motion)
                z_motion = encode_video(slice_frames(res.video, p.motion_first, M), codec);

            const int Tlat_w = latent_frames(w.len, codec.gt);
            const int m = has_motion ? m_lat : 0;
            require(Tlat_w - m >= 1, ErrorCode::shape,
                    "window too short for its motion prefix");

            VideoLatent x = noise_latent(w.len - (has_motion ? M : 0), Tlat_w - m,
                                         z_ref.Hlat, z_ref.Wlat, z_ref.C, z_ref.stats_id,
                                         rng);

            AudioRouting routing;
            if (use_audio) {
                std::vector<double> flat(size_t(w.len) * model.audio_dim);
                for (int f = 0; f < w.len; ++f)
                    std::copy(feats[w.start + f].begin(), feats[w.start + f].end(),
                              flat.begin() + size_t(f) * model.audio_dim);
                routing = build_audio_routing(flat, w.len, model.audio_dim,
                                              model.audio_window, codec, Tlat_w);
            }
            PixelVideo pose_maps;
            if (active.pose)
                pose_maps = rasterize_skeleton(sk.slice(w.start, w.start + w.len), H, W);

            auto vfn = [&](const VideoLatent& xt, double t) {
                PackedSequence seq = pack_tokens(xt, z_ref, has_motion ? &z_motion : nullptr,
                                                 text_full.ids, model);
                ForwardInputs in;
                in.seq = &seq;
                in.audio = use_audio ? &routing : nullptr;
                in.pose_maps = active.pose ? &pose_maps : nullptr;
                in.t = t;
                return cfg_predict(model, params, in, text_null.ids, req.cfg_scale);
            };
            VideoLatent x0 = sample_segment(vfn, std::move(x), req.steps);

            VideoLatent z_window = std::move(x0);
            if (has_motion) {
                z_window.Tlat = Tlat_w;
                z_window.pixel_frames = w.len;
                z_window.grid.insert(z_window.grid.begin(), z_motion.grid.begin(),
                                     z_motion.grid.end());
            }
            PixelVideo decoded = decode_video(z_window, codec, /*display_mode=*/true);

            const int emit_from = has_motion ? M : 0;
            std::copy(decoded.data.begin() + ptrdiff_t(emit_from * frame_elems),
                      decoded.data.begin() + ptrdiff_t((emit_from + p.frames) * frame_elems),
                      res.video.data.begin() + ptrdiff_t(p.first_frame * frame_elems));

            res.segments.push_back({p.first_frame, p.frames, w.len});
            if (keep_window_latents) res.window_latents.push_back(std::move(z_window));
        } catch (const OmniError& e) {
            fail(e.code(), "segment " + std::to_string(k) + ": " + e.what());
        }
    }
    return res;
}

GenerationResult generate(const DrivingRequest& req, Checkpoint& ck,
                          bool keep_window_latents) {
    return generate(req, ck.model, ck.codec, ck.vocab, ck.params, keep_window_latents);
}

void write_generation(const std::string& dir, const GenerationResult& result, uint64_t seed,
                      const std::string& config_hash, bool dump_latents) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    require(!ec, ErrorCode::io, "cannot create output directory " + dir);

    char name[32];
    for (int t = 0; t < result.video.T; ++t) {
        std::snprintf(name, sizeof(name), "frame_%05d.png", t);
        write_png(dir + "/" + name, frame_to_rgb(result.video, t));
    }
    write_video_file(dir + "/video.ovid", result.video);

    nlohmann::json manifest;
    manifest["fps"] = result.video.fps;
    manifest["frames"] = result.video.T;
    manifest["seed"] = seed;
    manifest["config_hash"] = config_hash;
    manifest["segments"] = nlohmann::json::array();
    for (const SegmentTrace& s : result.segments)
        manifest["segments"].push_back({{"first_frame", s.first_frame},
                                        {"frames", s.frames},
                                        {"window_frames", s.window_frames}});
    std::ofstream os(dir + "/manifest.json");
    require(os.good(), ErrorCode::io, "cannot write manifest in " + dir);
    os << manifest.dump(2) << "\n";

    if (dump_latents)
        for (size_t k = 0; k < result.window_latents.size(); ++k) {
            std::snprintf(name, sizeof(name), "segment_%02zu.olc1", k);
            write_latent_file(dir + "/" + name, result.window_latents[k]);
        }
}

}  // namespace omni
