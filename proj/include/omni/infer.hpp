// Sampling: condition-activation rules per driving mode, classifier-free
// guidance on audio+text only, Euler integration of the rectified flow, and
// long videos via motion-frame chaining of fixed-length segments.
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "omni/checkpoint.hpp"
#include "omni/model.hpp"
#include "omni/rng.hpp"
#include "omni/skeleton.hpp"
#include "omni/train.hpp"
#include "omni/wav_io.hpp"

namespace omni {

enum class DriveMode { audio, pose, audio_pose };

DriveMode drive_mode_from_string(const std::string& s);
std::string to_string(DriveMode m);

struct DrivingRequest {
    PixelVideo reference;        // exactly one frame
    std::string caption;         // empty -> NULL text condition
    Waveform waveform;           // required when mode involves audio
    SkeletonSequence skeleton;   // required when mode involves pose
    DriveMode mode = DriveMode::audio;
    int duration = 25;           // requested pixel frames
    double cfg_scale = 6.5;
    int steps = 32;
    uint64_t seed = 0;
    int segment_length = 25;     // pixel frames generated per segment window
    bool null_audio = false;     // diagnostic: route the learned null-audio
                                 // token instead of features (sync controls)
};

// Activation ladder: text is always present (null when no caption), audio
// modes enable audio, pose modes enable pose, and pose-only driving disables
// audio. Errors when a mode-required signal is missing.
ConditionMask resolve_activation(const DrivingRequest& req);

struct SegmentPlan {
    int first_frame = 0;    // first emitted pixel frame
    int frames = 0;         // emitted frame count
    int motion_first = -1;  // start of the M-frame motion source, -1 for none
};

// Tiles [0, duration): the first segment emits Lseg frames, each later one
// emits Lseg - M frames conditioned on the previous M emitted frames, and the
// last may be shorter. Every emitted frame appears in exactly one segment.
std::vector<SegmentPlan> plan_segments(int duration, int Lseg, int M = 5);

// Guided velocity: v_drop + s * (v_full - v_drop), where the drop branch
// replaces audio AND text with their null forms while keeping pose, reference
// and motion frames. s == 1 and s == 0 skip the branch they do not need, so
// those identities hold exactly.
std::vector<double> cfg_predict(const ModelConfig& model, ParamStore<float>& params,
                                const ForwardInputs& full, const std::vector<int>& null_text,
                                double cfg_scale);

// Standard-normal latent in the given shape; the noise for one segment is
// drawn in a single burst before integration starts.
VideoLatent noise_latent(int pixel_frames, int Tlat, int Hlat, int Wlat, int C,
                         const std::string& stats_id, RandomStream& rng);

// dx/dt at (x, t); injectable so the sampler can be tested against
// closed-form fields without a trained model.
using VelocityFn = std::function<std::vector<double>(const VideoLatent&, double)>;

// Euler from t=1 down to t=0 on a uniform grid: x <- x - (1/steps) * v(x, t).
// `x` is the t=1 noise state. Non-finite states abort with the step index.
VideoLatent sample_segment(const VelocityFn& vfn, VideoLatent x, int steps);

struct SegmentTrace {
    int first_frame = 0;    // first emitted pixel frame
    int frames = 0;         // emitted count
    int window_frames = 0;  // denoised window length incl. motion prefix
};

struct GenerationResult {
    PixelVideo video;  // exactly req.duration frames
    std::vector<SegmentTrace> segments;
    std::vector<VideoLatent> window_latents;  // filled when keep_window_latents
};

// Full pipeline: encode the reference, activate driving signals, sample each
// segment with CFG, decode, and stitch. Audio features are extracted once
// over the padded waveform; skeletons replicate their last frame past the
// provided range. Deterministic in (request, seed).
GenerationResult generate(const DrivingRequest& req, const ModelConfig& model,
                          const CodecConfig& codec, const Vocab& vocab,
                          ParamStore<float>& params, bool keep_window_latents = false);

// Convenience wrapper over a loaded checkpoint.
GenerationResult generate(const DrivingRequest& req, Checkpoint& ck,
                          bool keep_window_latents = false);

// Frame directory: frame_00000.png ... plus manifest.json carrying fps, frame
// count, seed and the run-config hash; optionally the raw window latents.
void write_generation(const std::string& dir, const GenerationResult& result, uint64_t seed,
                      const std::string& config_hash, bool dump_latents = false);

}  // namespace omni
