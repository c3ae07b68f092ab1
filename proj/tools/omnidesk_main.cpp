// omnidesk: one seeded, config-driven binary covering the whole experiment
// surface — dataset synthesis, staged training, generation, evaluation and
// the data-mixing ablation grid. Every reported number is reproducible from
// (config file, --seed); OMNI_THREADS caps worker counts globally.
//
// Exit codes: 0 ok, 2 configuration problem, 3 runtime failure.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "omni/ablate.hpp"
#include "omni/checkpoint.hpp"
#include "omni/config.hpp"
#include "omni/threading.hpp"

namespace fs = std::filesystem;
using namespace omni;

namespace {

struct Args {
    std::string config;
    std::string out = "out";
    std::string resume;
    uint64_t seed = 0;
    int jobs = 0;  // 0 -> hardware/OMNI_THREADS decides
};

const char* onoff(bool b) { return b ? "on" : "off"; }

std::vector<ClipRecord> manifest_for(const RunConfig& cfg) {
    const std::string dir = cfg.str("data.dir", "");
    require(!dir.empty(), ErrorCode::config, "data.dir is required for this command");
    return read_manifest((fs::path(dir) / "manifest.jsonl").string());
}

// Last data.holdout manifest rows are never trained on; they are the
// evaluation/validation pool for every command that needs unseen clips.
void split_holdout(const RunConfig& cfg, const std::vector<ClipRecord>& all,
                   std::vector<ClipRecord>& train, std::vector<ClipRecord>& held) {
    const long long holdout = cfg.integer("data.holdout", 0);
    require(holdout >= 0 && holdout < (long long)all.size(), ErrorCode::config,
            "data.holdout must lie in [0, clips)");
    train.assign(all.begin(), all.end() - holdout);
    held.assign(all.end() - holdout, all.end());
}

// Dataset-fitted latent normalization (identity when data.norm_clips = 0).
// Stats go through install_stats so codec round trips stay exact.
CodecConfig fitted_codec(const RunConfig& cfg, const std::vector<ClipRecord>& train) {
    CodecConfig codec = codec_base_from_config(cfg);
    const long long want = cfg.integer("data.norm_clips", 64);
    require(want >= 0, ErrorCode::config, "data.norm_clips must be >= 0");
    const size_t n = std::min<size_t>(size_t(want), train.size());
    if (n == 0) return codec;
    std::vector<PixelVideo> corpus;
    corpus.reserve(n);
    for (size_t i = 0; i < n; ++i) corpus.push_back(read_video_file(train[i].frames_path));
    codec.install_stats(fit_norm_stats(corpus, codec));
    return codec;
}

int cmd_synth(const RunConfig& cfg, const Args& a) {
    const int count = int(cfg.integer("synth.clips", 100));
    SynthConfig sc = synth_from_config(cfg);
    fs::create_directories(a.out);
    auto records = write_synth_dataset(a.out, count, sc, a.seed);
    double lips = 0, pose = 0, aest = 0;
    for (const ClipRecord& r : records) {
        lips += r.lipsync_ok;
        pose += r.pose_visible;
        aest += r.aesthetic_ok;
    }
    const double n = double(records.size());
    std::printf("wrote %zu clips (%d frames each) to %s\n", records.size(), sc.duration,
                a.out.c_str());
    std::printf("flag rates: lipsync %.4f  pose %.4f  aesthetic %.4f\n", lips / n, pose / n,
                aest / n);
    return 0;
}

int cmd_train(const RunConfig& cfg, const Args& a, int jobs) {
    std::vector<ClipRecord> train, held;
    split_holdout(cfg, manifest_for(cfg), train, held);
    require(!train.empty(), ErrorCode::config, "no training clips left after holdout");

    TrainState state = [&] {
        if (!a.resume.empty()) {
            Checkpoint ck = load_checkpoint(a.resume);
            // The config must describe the architecture in the checkpoint:
            // compare fingerprints with the checkpoint's own codec/vocab so
            // dataset-fitted stats cannot mask a model mismatch.
            ModelConfig want = model_from_config(cfg);
            want.vocab_size = int(ck.vocab.size());
            require(checkpoint_fingerprint(want, ck.codec, ck.vocab) ==
                        checkpoint_fingerprint(ck),
                    ErrorCode::config, "resume checkpoint does not match the configured model");
            const CodecConfig base = codec_base_from_config(cfg);
            require(ck.codec.sp == base.sp && ck.codec.gt == base.gt, ErrorCode::config,
                    "resume checkpoint codec does not match the configured codec");
            return train_state_from_checkpoint(ck);
        }
        std::vector<std::string> captions;
        for (const ClipRecord& r : train) captions.push_back(r.caption);
        Vocab vocab = build_vocab(captions);
        ModelConfig model = model_from_config(cfg);
        model.vocab_size = int(vocab.size());
        model.validate();
        return make_train_state(model, fitted_codec(cfg, train), vocab, a.seed);
    }();

    const std::vector<TrainPlan> plans = plans_from_config(cfg, a.seed);
    fs::create_directories(a.out);
    RunHooks hooks;
    hooks.checkpoint_dir = a.out;
    hooks.metrics_csv = (fs::path(a.out) / "metrics.csv").string();
    hooks.jobs = jobs;
    hooks.latest_every = int(cfg.integer("train.latest_every", 0));
    if (!fs::exists(hooks.metrics_csv) || fs::file_size(hooks.metrics_csv) == 0) {
        std::ofstream head(hooks.metrics_csv);
        head << "step,stage,loss,rate_text,rate_audio,rate_pose\n";
    }
    hooks.on_step = [](uint64_t step, int stage, double loss) {
        if (step % 100 == 0 || step == 1)
            std::printf("step %llu  stage %d  loss %.5f\n", (unsigned long long)step, stage,
                        loss);
    };

    std::printf("config %s  seed %llu  clips %zu (+%zu held out)  start step %llu\n",
                cfg.content_hash().c_str(), (unsigned long long)a.seed, train.size(),
                held.size(), (unsigned long long)state.step);
    DatasetConfig data;
    data.crop_lengths = cfg.int_list("data.crop_lengths", data.crop_lengths);
    auto stages = run_stages(state, plans, train, data, hooks);
    for (const StageMetrics& s : stages)
        std::printf(
            "stage %d: steps=%llu mean_loss=%.5f exposure text=%.3f audio=%.3f pose=%.3f "
            "motion=%.3f\n",
            s.stage, (unsigned long long)s.steps, s.mean_loss, s.exposure_text,
            s.exposure_audio, s.exposure_pose, s.exposure_motion);
    std::printf("checkpoints in %s  fingerprint %s\n", a.out.c_str(),
                checkpoint_fingerprint(state.model, state.codec, state.vocab).c_str());
    return 0;
}

int cmd_generate(const RunConfig& cfg, const Args& a, int jobs) {
    (void)jobs;  // a single request: the graph itself is single-threaded
    const std::string ckpath = cfg.str("generate.checkpoint", "");
    require(!ckpath.empty(), ErrorCode::config, "generate.checkpoint is required");
    Checkpoint ck = load_checkpoint(ckpath);
    const std::string fp = checkpoint_fingerprint(ck);
    const std::string expect = cfg.str("generate.expect", "");
    require(expect.empty() || expect == fp, ErrorCode::config,
            "checkpoint fingerprint mismatch: request pins " + expect + " but " + ckpath +
                " is " + fp);

    DrivingRequest req;
    const std::string ref = cfg.str("generate.reference", "");
    require(!ref.empty(), ErrorCode::config, "generate.reference is required");
    req.reference = slice_frames(read_video_file(ref), 0, 1);
    req.caption = cfg.str("generate.caption", "");
    if (cfg.has("generate.waveform")) req.waveform = read_wav(cfg.str("generate.waveform", ""));
    if (cfg.has("generate.skeleton"))
        req.skeleton = read_skeleton_jsonl(cfg.str("generate.skeleton", ""));
    req.mode = drive_mode_from_string(cfg.str("generate.mode", "audio"));
    req.duration = int(cfg.integer("generate.duration", req.duration));
    req.cfg_scale = cfg.number("generate.cfg_scale", req.cfg_scale);
    req.steps = int(cfg.integer("generate.steps", req.steps));
    req.segment_length = int(cfg.integer("generate.segment_length", req.segment_length));
    req.null_audio = cfg.flag("generate.null_audio", false);
    req.seed = a.seed;

    const ConditionMask active = resolve_activation(req);
    const auto segs = plan_segments(req.duration, req.segment_length, ck.model.M);
    std::printf("checkpoint %s  mode %s  seed %llu\n", fp.c_str(),
                to_string(req.mode).c_str(), (unsigned long long)a.seed);
    std::printf("conditions: text=%s audio=%s pose=%s reference=on motion=%s\n",
                onoff(active.text), onoff(active.audio && !req.null_audio), onoff(active.pose),
                onoff(segs.size() > 1));
    std::printf("%d frames in %zu segments of <= %d\n", req.duration, segs.size(),
                req.segment_length);

    GenerationResult result = generate(req, ck, cfg.flag("generate.dump_latents", false));
    fs::create_directories(a.out);
    write_generation(a.out, result, req.seed, cfg.content_hash(),
                     cfg.flag("generate.dump_latents", false));
    std::printf("wrote %d frames to %s\n", result.video.T, a.out.c_str());
    return 0;
}

int cmd_evaluate(const RunConfig& cfg, const Args& a, int jobs) {
    const std::string ckpath = cfg.str("eval.checkpoint", "");
    require(!ckpath.empty(), ErrorCode::config, "eval.checkpoint is required");
    Checkpoint ck = load_checkpoint(ckpath);
    std::vector<ClipRecord> train, held;
    split_holdout(cfg, manifest_for(cfg), train, held);
    require(!held.empty(), ErrorCode::config, "evaluate needs data.holdout > 0");
    EvalSettings settings = eval_from_config(cfg, a.seed);
    settings.jobs = jobs;

    EvalReport report = evaluate_model(ck, held, settings);
    fs::create_directories(a.out);
    const std::string csv = (fs::path(a.out) / "eval.csv").string();
    write_eval_report(csv, report);
    for (DriveMode m : settings.modes) {
        const std::string mode = to_string(m);
        char pose[32] = "-";
        if (m == DriveMode::pose || m == DriveMode::audio_pose) {
            try {
                std::snprintf(pose, sizeof pose, "%.3f px", report.mean_pose_err(mode));
            } catch (const OmniError&) {
                // wrists unrecoverable in every clip (weak checkpoints)
            }
        }
        std::printf("mode %-10s ok %d/%zu  median sync %.4f  mean pose err %s  psnr %.2f\n",
                    mode.c_str(), report.count_ok(mode), held.size(), report.median_sync(mode),
                    pose, report.mean_psnr(mode));
    }
    std::printf("report: %s\n", csv.c_str());
    return 0;
}

int cmd_ablate(const RunConfig& cfg, const Args& a, int jobs) {
    std::vector<ClipRecord> train, held;
    split_holdout(cfg, manifest_for(cfg), train, held);
    require(!held.empty(), ErrorCode::config, "ablate needs data.holdout > 0");

    AblationSettings s;
    s.codec = fitted_codec(cfg, train);
    s.model = model_from_config(cfg);
    s.model.D = int(cfg.integer("ablate.dim", 48));
    s.model.nblocks = int(cfg.integer("ablate.blocks", 2));
    s.model.nheads = int(cfg.integer("ablate.heads", 2));
    s.model.latent_channels = s.codec.channels();
    s.model.temporal_group = s.codec.gt;
    s.data.crop_lengths = cfg.int_list("data.crop_lengths", s.data.crop_lengths);
    s.batch = int(cfg.integer("ablate.batch", s.batch));
    s.seeds = int(cfg.integer("ablate.seeds", s.seeds));
    s.audio_steps = int(cfg.integer("ablate.audio_steps", s.audio_steps));
    s.steps_cap = int(cfg.integer("ablate.steps_cap", s.steps_cap));
    s.val_items = int(cfg.integer("ablate.val_items", s.val_items));
    s.eval_clips = int(cfg.integer("ablate.eval_clips", s.eval_clips));
    s.eval_steps = int(cfg.integer("ablate.eval_steps", s.eval_steps));
    s.tdata = cfg.int_list("ablate.tdata", {0, 25, 50, 100});
    s.orders = cfg.str_list("ablate.orders", {"IA", "IPA", "IAP"});
    s.ratio_cells = cfg.flag("ablate.ratio_cells", true);
    s.jobs = jobs;

    std::printf("config %s  seed %llu  %zu train / %zu val clips\n",
                cfg.content_hash().c_str(), (unsigned long long)a.seed, train.size(),
                held.size());
    auto rows = run_ablation(train, held, s, a.seed);
    fs::create_directories(a.out);
    const std::string csv = (fs::path(a.out) / "ablation.csv").string();
    write_ablation_report(csv, rows);

    std::printf("%-12s %6s %6s %6s %11s %11s %9s %s\n", "cell", "seed#", "steps", "clips",
                "train_loss", "val_audio", "pose_px", "status");
    int seq = 0;
    for (const CellResult& r : rows) {
        char pose[32];
        if (r.pose_err >= 0)
            std::snprintf(pose, sizeof pose, "%9.3f", r.pose_err);
        else
            std::snprintf(pose, sizeof pose, "%9s", "-");
        std::printf("%-12s %6d %6llu %6d %11.5f %11.5f %s %s\n", r.cell.c_str(), seq++,
                    (unsigned long long)r.steps, r.clips, r.train_loss, r.val_audio_loss, pose,
                    r.ok ? "ok" : r.error.c_str());
    }
    std::printf("report: %s\n", csv.c_str());
    return 0;
}

int run_cli(int argc, char** argv) {
    CLI::App app{"omnidesk — desk-scale multi-condition video diffusion toolchain"};
    app.require_subcommand(1);
    Args a;
    app.add_option("--config", a.config, "run configuration file")->required();
    app.add_option("--seed", a.seed, "run seed (default 0)");
    app.add_option("--out", a.out, "output directory (default ./out)");
    app.add_option("--resume", a.resume, "checkpoint to resume training from");
    app.add_option("--jobs", a.jobs, "worker threads (0 = auto, capped by OMNI_THREADS)");

    auto* synth = app.add_subcommand("synth", "write a synthetic sprite dataset");
    auto* train = app.add_subcommand("train", "run the staged training schedule");
    auto* generate = app.add_subcommand("generate", "sample a video from a checkpoint");
    auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint on held-out clips");
    auto* ablate = app.add_subcommand("ablate", "run the data-mixing ablation grid");
    for (auto* sub : {synth, train, generate, evaluate, ablate}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int r = app.exit(e);  // prints usage/help
        return r == 0 ? 0 : 2;
    }

    RunConfig cfg = parse_run_config(a.config);
    validate_run_config(cfg);
    const int jobs = effective_threads(a.jobs);

    if (synth->parsed()) return cmd_synth(cfg, a);
    if (train->parsed()) return cmd_train(cfg, a, jobs);
    if (generate->parsed()) return cmd_generate(cfg, a, jobs);
    if (evaluate->parsed()) return cmd_evaluate(cfg, a, jobs);
    return cmd_ablate(cfg, a, jobs);
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const OmniError& e) {
        std::cerr << e.what() << "\n";
        return e.code() == ErrorCode::config ? 2 : 3;
    } catch (const std::exception& e) {
        std::cerr << "E_RUNTIME: " << e.what() << "\n";
        return 3;
    }
}
