#include "omni/ablate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace omni {

namespace {

struct CellSpec {
    std::string name;
    std::vector<ClipRecord> subset;
    std::vector<TrainPlan> plans;  // seed/batch filled per run
};

int audio_eligible_count(const std::vector<ClipRecord>& records) {
    int n = 0;
    for (const ClipRecord& r : records) n += r.lipsync_ok ? 1 : 0;
    return n;
}

// Steps such that steps x P(item is audio-conditioned) is the configured
// budget: cells whose subsets are mostly audio-eligible train for fewer
// steps, cells diluted with text-only data train for more.
int steps_for_audio_budget(const AblationSettings& s, const std::vector<ClipRecord>& subset,
                           double ratio_audio) {
    const int n_audio = audio_eligible_count(subset);
    require(n_audio > 0, ErrorCode::config, "ablation subset has no audio-eligible clips");
    const double exposure = double(n_audio) / double(subset.size()) * ratio_audio;
    const int steps = int(std::lround(double(s.audio_steps) / exposure));
    return std::clamp(steps, 1, s.steps_cap);
}

TrainPlan stage_plan(int stage, double rt, double ra, double rp, int steps) {
    TrainPlan p;
    p.stage = stage;
    p.ratio_text = rt;
    p.ratio_audio = ra;
    p.ratio_pose = rp;
    p.steps = steps;
    return p;
}

std::vector<CellSpec> build_cells(const std::vector<ClipRecord>& records,
                                  const AblationSettings& s) {
    std::vector<CellSpec> cells;

    for (int pct : s.tdata) {
        require(pct >= 0 && pct <= 100, ErrorCode::config,
                "tdata percentages must lie in [0,100]");
        CellSpec c;
        c.name = "tdata_" + std::to_string(pct);
        std::vector<ClipRecord> others;
        for (const ClipRecord& r : records)
            (r.lipsync_ok ? c.subset : others).push_back(r);
        const size_t keep = others.size() * size_t(pct) / 100;
        c.subset.insert(c.subset.end(), others.begin(), others.begin() + ptrdiff_t(keep));
        const int steps = steps_for_audio_budget(s, c.subset, 0.5);
        c.plans = {stage_plan(3, 0.9, 0.5, 0.25, steps)};
        cells.push_back(std::move(c));
    }

    // Orders and ratio cells share the full corpus and a common per-stage
    // length; what differs is when (and how often) each condition appears.
    if (!s.orders.empty() || s.ratio_cells) {
        const int L = std::max(1, steps_for_audio_budget(s, records, 0.5) / 2);
        for (const std::string& order : s.orders) {
            CellSpec c;
            c.name = "order_" + order;
            c.subset = records;
            if (order == "IA")
                c.plans = {stage_plan(1, 0.9, 0.0, 0.0, L), stage_plan(2, 0.9, 0.5, 0.0, L),
                           stage_plan(3, 0.9, 0.5, 0.0, L)};
            else if (order == "IPA")
                c.plans = {stage_plan(1, 0.9, 0.0, 0.0, L), stage_plan(3, 0.9, 0.0, 0.25, L),
                           stage_plan(3, 0.9, 0.5, 0.25, L)};
            else if (order == "IAP")
                c.plans = {stage_plan(1, 0.9, 0.0, 0.0, L), stage_plan(2, 0.9, 0.5, 0.0, L),
                           stage_plan(3, 0.9, 0.5, 0.25, L)};
            else
                fail(ErrorCode::config, "unknown order cell '" + order + "' (IA, IPA, IAP)");
            cells.push_back(std::move(c));
        }
        if (s.ratio_cells) {
            CellSpec hi;
            hi.name = "ratio_AgtP";
            hi.subset = records;
            hi.plans = {stage_plan(1, 0.9, 0.0, 0.0, L), stage_plan(2, 0.9, 0.5, 0.0, L),
                        stage_plan(3, 0.9, 0.5, 0.25, L)};
            CellSpec lo;
            lo.name = "ratio_AltP";
            lo.subset = records;
            lo.plans = {stage_plan(1, 0.9, 0.0, 0.0, L), stage_plan(2, 0.9, 0.25, 0.0, L),
                        stage_plan(3, 0.9, 0.25, 0.5, L)};
            cells.push_back(std::move(hi));
            cells.push_back(std::move(lo));
        }
    }
    require(!cells.empty(), ErrorCode::config, "ablation grid is empty");
    return cells;
}

}  // namespace

std::vector<CellResult> run_ablation(const std::vector<ClipRecord>& train_records,
                                     const std::vector<ClipRecord>& val_records,
                                     const AblationSettings& settings, uint64_t base_seed) {
    settings.model.validate();
    require(!train_records.empty(), ErrorCode::value, "run_ablation: no training records");
    require(settings.seeds >= 1 && settings.batch >= 1 && settings.audio_steps >= 1,
            ErrorCode::config, "run_ablation: seeds, batch and audio_steps must be >= 1");

    std::vector<ClipRecord> val_audio, val_pose;
    for (const ClipRecord& r : val_records) {
        if (r.lipsync_ok) val_audio.push_back(r);
        if (r.pose_visible && int(val_pose.size()) < settings.eval_clips)
            val_pose.push_back(r);
    }
    require(!val_audio.empty(), ErrorCode::value,
            "run_ablation: validation set has no audio-eligible clips");

    std::vector<std::string> captions;
    for (const ClipRecord& r : train_records) captions.push_back(r.caption);
    for (const ClipRecord& r : val_records) captions.push_back(r.caption);
    Vocab vocab = build_vocab(captions);
    ModelConfig model = settings.model;
    model.vocab_size = vocab.size();
    model.validate();

    const uint64_t val_seed = fnv1a64(std::string_view("ablation-val"), base_seed);
    std::vector<CellSpec> cells = build_cells(train_records, settings);

    std::vector<CellResult> rows;
    for (const CellSpec& cell : cells) {
        for (int si = 0; si < settings.seeds; ++si) {
            CellResult row;
            row.cell = cell.name;
            row.seed = fnv1a64(cell.name + "/" + std::to_string(si), base_seed);
            row.clips = int(cell.subset.size());
            try {
                std::vector<TrainPlan> plans = cell.plans;
                for (TrainPlan& p : plans) {
                    p.seed = row.seed;
                    p.batch = settings.batch;
                }
                TrainState st =
                    make_train_state(model, settings.codec, vocab, row.seed);
                RunHooks hooks;
                hooks.jobs = settings.jobs;
                auto stage_metrics = run_stages(st, plans, cell.subset, settings.data, hooks);
                row.steps = st.step;
                row.train_loss = stage_metrics.back().mean_loss;
                row.val_audio_loss = validation_loss(st, val_audio, settings.val_items,
                                                     val_seed, settings.jobs);
                if (cell.name.rfind("tdata_", 0) != 0 && !val_pose.empty()) {
                    try {
                        Checkpoint ck;
                        ck.model = st.model;
                        ck.codec = st.codec;
                        ck.vocab = st.vocab;
                        ck.params = st.params;
                        EvalSettings es;
                        es.modes = {DriveMode::pose};
                        es.steps = settings.eval_steps;
                        es.cfg_scale = 1.0;
                        es.seed = val_seed;
                        es.jobs = settings.jobs;
                        EvalReport rep = evaluate_model(ck, val_pose, es);
                        row.pose_err = rep.mean_pose_err("pose");
                    } catch (const OmniError&) {
                        row.pose_err = -1.0;  // wrists unrecoverable; leave unmeasured
                    }
                }
                row.ok = true;
            } catch (const OmniError& e) {
                row.error = e.what();
            }
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

void write_ablation_report(const std::string& path, const std::vector<CellResult>& rows) {
    std::ofstream os(path);
    require(os.good(), ErrorCode::io, "cannot write ablation report " + path);
    os << "# data-mixing ablation, desk-scale proxies (val loss on a shared "
          "audio-task batch; pose in px)\n";
    os << "cell,seed,steps,clips,train_loss,val_audio_loss,pose_err,ok,error\n";
    for (const CellResult& r : rows) {
        std::string err = r.error;
        std::replace(err.begin(), err.end(), ',', ';');
        os << r.cell << "," << r.seed << "," << r.steps << "," << r.clips << ","
           << r.train_loss << "," << r.val_audio_loss << "," << r.pose_err << ","
           << (r.ok ? 1 : 0) << "," << err << "\n";
    }
    require(os.good(), ErrorCode::io, "write failed for " + path);
}

}  // namespace omni
