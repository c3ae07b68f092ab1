// Desk-scale evaluation: lip-sync correlation (envelope vs mouth intensity),
// wrist recovery against the driving skeleton, reconstruction PSNR, and the
// batch evaluator that generates per-clip videos from a checkpoint. These are
// analytic proxies on the sprite domain, not the pretrained-network metrics
// used on real footage.
#pragma once

#include <string>
#include <vector>

#include "omni/infer.hpp"
#include "omni/sprites.hpp"

namespace omni {

// Pearson correlation between the per-frame mean intensity of the sprite
// mouth box and the waveform's frame envelope. Errors when either series has
// zero variance (constant video or silence): the value is undefined, never 0.
double sync_correlation(const PixelVideo& video, const Waveform& wave,
                        const SpriteSpec& spec = SpriteSpec());

// Mean Euclidean wrist deviation in pixels: wrist discs are recovered per
// frame as score-weighted centroids of detector-colored pixels and compared
// with the driving skeleton's wrist positions. Errors when a frame shows no
// wrist pixels (blank or off-palette video).
double pose_deviation(const PixelVideo& video, const SkeletonSequence& skeleton,
                      const SpriteSpec& spec = SpriteSpec());

// 10*log10(1/mse) over [0,1] pixels; +inf for identical videos.
double recon_psnr(const PixelVideo& a, const PixelVideo& b);

struct EvalSettings {
    std::vector<DriveMode> modes = {DriveMode::audio};
    int steps = 16;
    double cfg_scale = 1.0;  // single-branch sampling; raise for guided runs
    bool null_audio = false; // control runs: audio slot forced to the null token
    uint64_t seed = 0;
    int jobs = 1;
};

struct ClipEval {
    std::string clip_id;
    std::string mode;
    bool ok = false;          // generation + loading succeeded
    bool sync_defined = false;
    double sync = 0.0;
    bool pose_defined = false;
    double pose_err = 0.0;
    double psnr = 0.0;
    std::string error;        // first failure for this row, if any
};

struct EvalReport {
    std::vector<ClipEval> rows;  // |testset| x |modes|, test order within mode

    int count_ok(const std::string& mode) const;
    // Median over ok rows; undefined sync counts as `undefined_value`
    // (constant output deserves a worst-case score, not a skipped sample).
    double median_sync(const std::string& mode, double undefined_value = 0.0) const;
    double mean_pose_err(const std::string& mode) const;
    double mean_psnr(const std::string& mode) const;
};

// Generates one video per (clip, mode) with per-clip seeds derived from
// settings.seed and aggregates the metrics. Per-clip failures are recorded in
// their row and the batch continues.
EvalReport evaluate_model(Checkpoint& ck, const std::vector<ClipRecord>& testset,
                          const EvalSettings& settings);

// CSV with a provenance header line, plus one two-column gnuplot data file
// per metric next to it (<stem>_sync.dat, <stem>_pose.dat, <stem>_psnr.dat).
void write_eval_report(const std::string& csv_path, const EvalReport& report);

}  // namespace omni
