// Ablation grid over the data-mixing strategy: text-data fraction sweeps at a
// fixed audio-exposure budget, condition-introduction orders (IA / IPA / IAP),
// and audio-vs-pose keep-ratio cells. Every cell is an independent seeded
// training run scored on a shared validation batch.
#pragma once

#include <string>
#include <vector>

#include "omni/metrics.hpp"
#include "omni/train.hpp"

namespace omni {

struct AblationSettings {
    ModelConfig model;             // small grid-cell architecture
    CodecConfig codec;
    DatasetConfig data;
    int batch = 8;
    int seeds = 3;
    // Audio-exposure budget in expected audio-conditioned items per run
    // divided by batch: cells with rarer audio-eligible data train longer so
    // every cell sees the same expected number of audio-conditioned items.
    int audio_steps = 60;
    int steps_cap = 20000;         // safety limit per stage
    int val_items = 16;            // shared audio-task validation batch size
    int eval_clips = 6;            // pose-driving clips for order cells
    int eval_steps = 8;            // sampler steps for the pose evaluation
    std::vector<int> tdata;        // percent of non-audio clips kept, e.g. {0,100}
    std::vector<std::string> orders;  // subset of {"IA","IPA","IAP"}
    bool ratio_cells = false;      // add A>P vs A<P cells
    int jobs = 1;
};

struct CellResult {
    std::string cell;
    uint64_t seed = 0;
    uint64_t steps = 0;            // total optimizer steps taken
    int clips = 0;                 // training subset size
    double train_loss = 0.0;       // final-stage mean training loss
    double val_audio_loss = 0.0;   // shared audio-task batch
    double pose_err = -1.0;        // mean wrist deviation (px); -1 = not measured
    bool ok = false;
    std::string error;
};

// Runs seeds x cells training runs; failures are recorded per row and the
// grid continues. val_records supply the shared validation material (their
// audio-eligible subset scores val_audio_loss; pose-visible subset drives the
// pose evaluation).
std::vector<CellResult> run_ablation(const std::vector<ClipRecord>& train_records,
                                     const std::vector<ClipRecord>& val_records,
                                     const AblationSettings& settings, uint64_t base_seed);

// CSV in the grid's row layout (one row per cell x seed) with a provenance
// header line.
void write_ablation_report(const std::string& path, const std::vector<CellResult>& rows);

}  // namespace omni
