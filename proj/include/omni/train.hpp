// Omni-conditions training: quality-flag task routing, ratio-based condition
// dropping with stage forcing, batch assembly from the clip manifest, AdamW
// with global-norm clipping, and the three-stage schedule with exact
// resumability.
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "omni/checkpoint.hpp"
#include "omni/model.hpp"
#include "omni/rng.hpp"
#include "omni/skeleton.hpp"

namespace omni {

struct ClipRecord {
    std::string id;
    std::string frames_path;    // OVID pixel video
    std::string waveform_path;  // 16 kHz mono WAV
    std::string skeleton_path;  // JSON-lines keypoints
    std::string caption;
    bool lipsync_ok = false;
    bool pose_visible = false;
    bool aesthetic_ok = false;
};

std::vector<ClipRecord> read_manifest(const std::string& path);
void write_manifest(const std::string& path, const std::vector<ClipRecord>& records);

// Principle 1: conditions a clip may train (text always; audio/pose behind
// their quality flags). Clips are never discarded.
struct EligibleSet {
    bool text = true;
    bool audio = false;
    bool pose = false;
};

EligibleSet route_clip(const ClipRecord& c);

struct TrainPlan {
    int stage = 3;               // 1: text+ref only, 2: +audio, 3: all
    double ratio_text = 0.9;
    double ratio_audio = 0.5;
    double ratio_pose = 0.25;
    int steps = 0;
    double lr = 1e-4;
    double weight_decay = 0.01;
    double grad_clip = 1.0;
    int batch = 16;
    uint64_t seed = 0;

    void validate() const;  // stage forcing: stage 1 -> A=P=0, stage 2 -> P=0
};

// Motion-frame prefixes are included with this fixed probability when the
// crop is long enough to carry one.
constexpr double kMotionKeepProb = 0.5;

struct ConditionMask {
    bool text = false;
    bool audio = false;
    bool pose = false;
    bool motion_frames = false;  // reference is always active
};

// Principle 2: independent Bernoulli keep per eligible condition; ineligible
// or stage-disabled conditions are always off. Draws a fixed number of
// uniforms regardless of eligibility so the RNG stream stays aligned.
ConditionMask sample_condition_mask(const EligibleSet& eligible, const TrainPlan& plan,
                                    RandomStream& rng);

// One training item, fully materialized for the denoiser.
struct BatchItem {
    PackedSequence seq;
    AudioRouting audio;    // valid when mask.audio
    PixelVideo pose_maps;  // valid when mask.pose (window skeleton maps)
    double t = 0.0;
    std::vector<double> target_v;  // [n_video x C]
    ConditionMask mask;
    std::string clip_id;
};

struct DatasetConfig {
    std::vector<int> crop_lengths = {13, 25};  // pixel frames, each (L-1) % gt == 0
};

std::vector<BatchItem> build_batch(const std::vector<ClipRecord>& records,
                                   const TrainPlan& plan, const ModelConfig& model,
                                   const CodecConfig& codec, const Vocab& vocab,
                                   const DatasetConfig& data, RandomStream& rng);

constexpr int kLossRingCapacity = 512;

struct TrainState {
    ModelConfig model;
    CodecConfig codec;
    Vocab vocab;
    ParamStore<float> params;
    AdamMoments moments;
    uint64_t step = 0;
    RandomStream rng{0};
    std::vector<float> loss_ring;

    void push_loss(float v);
    TrainerTrailer trailer() const;
};

TrainState make_train_state(const ModelConfig& model, const CodecConfig& codec,
                            const Vocab& vocab, uint64_t init_seed);
TrainState train_state_from_checkpoint(const Checkpoint& ck);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
};

// Decoupled AdamW for one tensor: bias-corrected moment estimates, weight
// decay applied to the parameter itself rather than folded into the gradient.
// Accumulates in double regardless of T; templated so tests can drive the
// identical arithmetic at full double precision.
template <typename T>
void adamw_update(T* w, const T* g, T* m, T* v, size_t n, uint64_t t, double lr,
                  double weight_decay, const AdamConfig& adam = AdamConfig()) {
    const double bc1 = 1.0 - std::pow(adam.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(adam.beta2, static_cast<double>(t));
    for (size_t i = 0; i < n; ++i) {
        const double gi = static_cast<double>(g[i]);
        const double mi = adam.beta1 * static_cast<double>(m[i]) + (1.0 - adam.beta1) * gi;
        const double vi = adam.beta2 * static_cast<double>(v[i]) + (1.0 - adam.beta2) * gi * gi;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        const double step_dir = (mi / bc1) / (std::sqrt(vi / bc2) + adam.eps);
        const double wi = static_cast<double>(w[i]);
        w[i] = static_cast<T>(wi - lr * (step_dir + weight_decay * wi));
    }
}

// Forward/backward over the batch (items independently, reduced in item
// order), global-norm clip, decoupled AdamW update. Returns the mean item
// loss. Identical results for any jobs count.
double train_step(TrainState& state, const std::vector<BatchItem>& batch,
                  const TrainPlan& plan, int jobs, const AdamConfig& adam = AdamConfig());

// Forward-only mean loss over a batch; no optimizer state is touched.
double batch_loss(TrainState& state, const std::vector<BatchItem>& batch, int jobs = 1);

// Audio-task comparison loss: `items` draws with text+audio forced on and
// pose off, derived from `seed` alone, so different checkpoints (with equal
// model shapes) are scored on identical (clip, crop, t, noise) tuples.
// Records must all be audio-eligible.
double validation_loss(TrainState& state, const std::vector<ClipRecord>& records, int items,
                       uint64_t seed, int jobs = 1);

struct StageMetrics {
    int stage = 0;
    uint64_t steps = 0;
    double mean_loss = 0.0;
    double exposure_text = 0.0;
    double exposure_audio = 0.0;
    double exposure_pose = 0.0;
    double exposure_motion = 0.0;
};

struct RunHooks {
    std::string checkpoint_dir;                     // stage<k>.ohck at each boundary
    std::string metrics_csv;                        // appended per step when set
    int jobs = 1;
    int latest_every = 0;                           // also write latest.ohck every N steps
    std::function<void(uint64_t, int, double)> on_step;  // (global step, stage, loss)
};

// Sequential stage execution. state.step counts global steps across stages,
// so a state resumed from any checkpoint continues exactly where it left off
// (already-finished work is skipped).
std::vector<StageMetrics> run_stages(TrainState& state, const std::vector<TrainPlan>& plans,
                                     const std::vector<ClipRecord>& records,
                                     const DatasetConfig& data, const RunHooks& hooks);

// Clip loading shared with evaluation: frames + waveform + skeleton.
struct LoadedClip {
    PixelVideo frames;
    Waveform wave;
    SkeletonSequence skeleton;
};

LoadedClip load_clip(const ClipRecord& rec);

// Frame-range copy of a pixel video (crop windows, motion tails).
PixelVideo slice_frames(const PixelVideo& v, int first, int count);

// Latent-frame slice; pixel_frames is set to the covered pixel span.
VideoLatent slice_latent_frames(const VideoLatent& z, int first, int count,
                                const CodecConfig& codec);

}  // namespace omni
