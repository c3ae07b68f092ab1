// Proxy metrics: lip-sync correlation on ground truth and scrambled frames,
// wrist recovery accuracy and sensitivity, PSNR, the batch evaluator's
// bookkeeping, and the report/plot-file format.
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "omni/checkpoint.hpp"
#include "omni/metrics.hpp"
#include "omni/text_codec.hpp"

using namespace omni;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> read_lines(const fs::path& p) {
    std::ifstream is(p);
    REQUIRE(is.good());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(is, line)) lines.push_back(line);
    return lines;
}

}  // namespace

TEST_CASE("generated clips score perfect lip-sync across seeds") {
    SynthConfig cfg;
    for (int i = 0; i < 25; ++i) {
        SynthClip clip = synth_clip(i, cfg, 5000);
        CHECK(sync_correlation(clip.frames, clip.wave) == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("frame shuffling destroys lip-sync correlation") {
    SynthConfig cfg;
    std::vector<double> scores;
    for (int i = 0; i < 100; ++i) {
        SynthClip clip = synth_clip(i, cfg, 6000);
        std::vector<int> order(clip.frames.T);
        for (int t = 0; t < clip.frames.T; ++t) order[t] = t;
        std::mt19937 gen(1000 + i);
        std::shuffle(order.begin(), order.end(), gen);

        PixelVideo perm = PixelVideo::zeros(clip.frames.T, clip.frames.H, clip.frames.W);
        perm.fps = clip.frames.fps;
        const size_t stride = size_t(clip.frames.H) * clip.frames.W * 3;
        for (int t = 0; t < clip.frames.T; ++t)
            std::copy_n(clip.frames.data.begin() + size_t(order[t]) * stride, stride,
                        perm.data.begin() + size_t(t) * stride);
        scores.push_back(std::fabs(sync_correlation(perm, clip.wave)));
    }
    std::sort(scores.begin(), scores.end());
    const double median = 0.5 * (scores[49] + scores[50]);
    CHECK(median < 0.2);
}

TEST_CASE("sync correlation is undefined rather than zero on degenerate input") {
    SynthConfig cfg;
    cfg.duration = 8;
    SynthClip clip = synth_clip(0, cfg, 11);

    // Constant video: the mouth series has no variance.
    PixelVideo flat = PixelVideo::zeros(8, 16, 16);
    try {
        sync_correlation(flat, clip.wave);
        FAIL("expected a zero-variance error");
    } catch (const OmniError& e) {
        CHECK(e.code() == ErrorCode::value);
        CHECK(std::string(e.what()).find("zero-variance") != std::string::npos);
    }

    // Silence: the envelope side is constant instead.
    Waveform silent;
    silent.samples.assign(size_t(8) * kSamplesPerFrame, 0.0);
    CHECK_THROWS_AS(sync_correlation(clip.frames, silent), OmniError);

    // Too short for a meaningful correlation.
    PixelVideo two = slice_frames(clip.frames, 0, 2);
    try {
        sync_correlation(two, clip.wave);
        FAIL("expected a frame-count error");
    } catch (const OmniError& e) {
        CHECK(std::string(e.what()).find("at least 3 frames") != std::string::npos);
    }

    // Wrong canvas.
    PixelVideo wide = PixelVideo::zeros(8, 16, 20);
    CHECK_THROWS_AS(sync_correlation(wide, clip.wave), OmniError);
}

TEST_CASE("sync correlation is invariant to waveform amplitude") {
    SynthConfig cfg;
    SynthClip clip = synth_clip(4, cfg, 77);
    const double base = sync_correlation(clip.frames, clip.wave);
    for (double scale : {3.7, 0.1}) {
        Waveform scaled = clip.wave;
        for (double& s : scaled.samples) s *= scale;
        CHECK(sync_correlation(clip.frames, scaled) == doctest::Approx(base).epsilon(1e-12));
    }
}

TEST_CASE("wrist recovery lands within half a pixel on rendered clips") {
    SynthConfig cfg;
    cfg.duration = 9;
    for (int i = 0; i < 100; ++i) {
        SynthClip clip = synth_clip(i, cfg, 8000);
        CHECK(pose_deviation(clip.frames, clip.skeleton) < 0.5);
    }
}

TEST_CASE("wrist recovery tracks a known skeleton offset") {
    SynthConfig cfg;
    cfg.duration = 9;
    SynthClip clip = synth_clip(1, cfg, 31);

    SkeletonSequence shifted = clip.skeleton;
    for (SkeletonFrame& f : shifted.frames) {
        f.joints[kWristL].y += 2.0 / 16.0;  // two pixels straight down
        f.joints[kWristR].y += 2.0 / 16.0;
    }
    const double dev = pose_deviation(clip.frames, shifted);
    CHECK(dev > 1.5);
    CHECK(dev < 2.5);
}

TEST_CASE("wrist recovery errors on blank or mismatched input") {
    SynthConfig cfg;
    cfg.duration = 4;
    SynthClip clip = synth_clip(2, cfg, 13);

    PixelVideo blank = PixelVideo::zeros(4, 16, 16);
    try {
        pose_deviation(blank, clip.skeleton);
        FAIL("expected a no-wrist-pixels error");
    } catch (const OmniError& e) {
        CHECK(std::string(e.what()).find("no wrist pixels") != std::string::npos);
    }

    SkeletonSequence shorter = clip.skeleton;
    shorter.frames.pop_back();
    CHECK_THROWS_AS(pose_deviation(clip.frames, shorter), OmniError);

    PixelVideo empty;
    CHECK_THROWS_AS(pose_deviation(empty, clip.skeleton), OmniError);
}

TEST_CASE("psnr is infinite on identical videos and 20 dB at a 0.1 offset") {
    RandomStream rng(9);
    PixelVideo a = PixelVideo::zeros(3, 8, 8);
    for (float& x : a.data) x = float(rng.uniform(0.0, 0.4));

    CHECK(std::isinf(recon_psnr(a, a)));

    PixelVideo b = a;
    for (float& x : b.data) x += 0.1f;
    CHECK(recon_psnr(a, b) == doctest::Approx(20.0).epsilon(1e-4));

    PixelVideo wrong = PixelVideo::zeros(3, 8, 9);
    CHECK_THROWS_AS(recon_psnr(a, wrong), OmniError);
    PixelVideo empty;
    CHECK_THROWS_AS(recon_psnr(empty, empty), OmniError);
}

TEST_CASE("evaluate_model fills one row per clip and mode, deterministically") {
    SynthConfig cfg;
    cfg.duration = 9;
    const fs::path dir = fs::temp_directory_path() / "omni_metrics_testset";
    fs::remove_all(dir);
    std::vector<ClipRecord> testset = write_synth_dataset(dir.string(), 3, cfg, 321);

    Checkpoint ck;
    ck.codec = CodecConfig::with_identity_norm(2, 4);
    std::vector<std::string> captions;
    for (const ClipRecord& r : testset) captions.push_back(r.caption);
    ck.vocab = build_vocab(captions, 32);
    ck.model.D = 16;
    ck.model.nblocks = 1;
    ck.model.nheads = 2;
    ck.model.Lmax = 6;
    ck.model.Cp = 2;
    ck.model.ffn_mult = 2;
    ck.model.vocab_size = ck.vocab.size();
    ck.model.latent_channels = ck.codec.channels();
    ck.model.temporal_group = ck.codec.gt;
    register_params(ck.params, ck.model);
    RandomStream rng(2718);
    randomize_all(ck.params, rng, 0.05);

    EvalSettings settings;
    settings.modes = {DriveMode::audio, DriveMode::pose};
    settings.steps = 2;
    settings.seed = 17;

    EvalReport report = evaluate_model(ck, testset, settings);
    REQUIRE(report.rows.size() == testset.size() * settings.modes.size());

    // Mode-major layout, test order within each mode; every generation runs.
    for (size_t mi = 0; mi < settings.modes.size(); ++mi)
        for (size_t i = 0; i < testset.size(); ++i) {
            const ClipEval& row = report.rows[mi * testset.size() + i];
            CHECK(row.clip_id == testset[i].id);
            CHECK(row.mode == to_string(settings.modes[mi]));
            CHECK(row.ok);
            CHECK(std::isfinite(row.psnr));
            if (row.mode == "audio") CHECK(!row.pose_defined);
            if (row.mode == "pose") CHECK(!row.sync_defined);
        }
    CHECK(report.count_ok("audio") == 3);
    CHECK(report.count_ok("pose") == 3);

    // Same settings reproduce every field; extra workers change nothing.
    for (int jobs : {1, 3}) {
        EvalSettings again = settings;
        again.jobs = jobs;
        EvalReport rerun = evaluate_model(ck, testset, again);
        REQUIRE(rerun.rows.size() == report.rows.size());
        for (size_t r = 0; r < report.rows.size(); ++r) {
            CHECK(rerun.rows[r].clip_id == report.rows[r].clip_id);
            CHECK(rerun.rows[r].mode == report.rows[r].mode);
            CHECK(rerun.rows[r].ok == report.rows[r].ok);
            CHECK(rerun.rows[r].sync_defined == report.rows[r].sync_defined);
            CHECK(rerun.rows[r].sync == report.rows[r].sync);
            CHECK(rerun.rows[r].pose_defined == report.rows[r].pose_defined);
            CHECK(rerun.rows[r].pose_err == report.rows[r].pose_err);
            CHECK(rerun.rows[r].psnr == report.rows[r].psnr);
            CHECK(rerun.rows[r].error == report.rows[r].error);
        }
    }

    // A different evaluation seed reseeds the per-clip generations.
    EvalSettings other = settings;
    other.seed = 18;
    EvalReport moved = evaluate_model(ck, testset, other);
    bool any_diff = false;
    for (size_t r = 0; r < report.rows.size(); ++r)
        any_diff = any_diff || moved.rows[r].psnr != report.rows[r].psnr;
    CHECK(any_diff);

    CHECK_THROWS_AS(evaluate_model(ck, {}, settings), OmniError);
    EvalSettings no_modes = settings;
    no_modes.modes.clear();
    CHECK_THROWS_AS(evaluate_model(ck, testset, no_modes), OmniError);
    fs::remove_all(dir);
}

TEST_CASE("report aggregates respect definedness and reject empty modes") {
    EvalReport rep;
    auto add = [&](std::string mode, bool ok, bool sdef, double sync, bool pdef,
                   double pose, double psnr) {
        ClipEval r;
        r.clip_id = "c" + std::to_string(rep.rows.size());
        r.mode = std::move(mode);
        r.ok = ok;
        r.sync_defined = sdef;
        r.sync = sync;
        r.pose_defined = pdef;
        r.pose_err = pose;
        r.psnr = psnr;
        rep.rows.push_back(r);
    };
    add("audio", true, true, 0.9, false, 0.0, 30.0);
    add("audio", true, true, 0.1, false, 0.0, 20.0);
    add("audio", true, false, 0.0, false, 0.0, 10.0);  // sync undefined, still ok
    add("audio", false, false, 0.0, false, 0.0, 0.0);  // failed row
    add("pose", true, false, 0.0, true, 1.5, 5.0);
    add("even", true, true, 0.2, false, 0.0, 1.0);
    add("even", true, true, 0.4, false, 0.0, 3.0);

    CHECK(rep.count_ok("audio") == 3);
    CHECK(rep.count_ok("pose") == 1);
    CHECK(rep.count_ok("absent") == 0);

    // Undefined sync enters the median at the caller's substitute value.
    CHECK(rep.median_sync("audio") == 0.1);        // {0.0, 0.1, 0.9}
    CHECK(rep.median_sync("audio", 2.0) == 0.9);   // {0.1, 0.9, 2.0}
    CHECK(rep.median_sync("even") == doctest::Approx(0.3));  // even count averages

    CHECK(rep.mean_pose_err("pose") == 1.5);
    CHECK(rep.mean_psnr("audio") == doctest::Approx(20.0));

    try {
        rep.median_sync("absent");
        FAIL("expected a no-samples error");
    } catch (const OmniError& e) {
        CHECK(std::string(e.what()).find("no samples") != std::string::npos);
    }
    CHECK_THROWS_AS(rep.mean_pose_err("audio"), OmniError);
    CHECK_THROWS_AS(rep.mean_psnr("absent"), OmniError);
}

TEST_CASE("report files carry the proxy disclaimer and per-metric plot data") {
    EvalReport rep;
    ClipEval ok_row;
    ok_row.clip_id = "clipA";
    ok_row.mode = "audio";
    ok_row.ok = true;
    ok_row.sync_defined = true;
    ok_row.sync = 0.75;
    ok_row.psnr = 18.5;
    rep.rows.push_back(ok_row);

    ClipEval pose_row;
    pose_row.clip_id = "clipB";
    pose_row.mode = "pose";
    pose_row.ok = true;
    pose_row.pose_defined = true;
    pose_row.pose_err = 0.25;
    pose_row.psnr = 12.0;
    rep.rows.push_back(pose_row);

    ClipEval bad_row;
    bad_row.clip_id = "clipC";
    bad_row.mode = "audio";
    bad_row.ok = false;
    bad_row.error = "boom, with comma";
    rep.rows.push_back(bad_row);

    const fs::path dir = fs::temp_directory_path() / "omni_metrics_report";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string csv = (dir / "eval.csv").string();
    write_eval_report(csv, rep);

    std::vector<std::string> lines = read_lines(csv);
    REQUIRE(lines.size() == 2 + rep.rows.size());
    CHECK(lines[0].starts_with("# "));
    CHECK(lines[0].find("desk-scale proxy") != std::string::npos);
    CHECK(lines[1] == "clip_id,mode,ok,sync_defined,sync,pose_defined,pose_err,psnr,error");
    CHECK(lines[2].starts_with("clipA,audio,1,1,0.75,"));
    // Commas inside error text are sanitized so the CSV keeps its arity.
    CHECK(lines[4].find("boom; with comma") != std::string::npos);
    CHECK(lines[4].find("boom,") == std::string::npos);

    std::vector<std::string> sync = read_lines(dir / "eval_sync.dat");
    REQUIRE(sync.size() == 2);  // header + the one sync-defined row
    CHECK(sync[0] == "# index  sync  (desk-scale proxy)");
    CHECK(sync[1] == "0 0.75");

    std::vector<std::string> pose = read_lines(dir / "eval_pose.dat");
    REQUIRE(pose.size() == 2);
    CHECK(pose[0] == "# index  pose  (desk-scale proxy)");
    CHECK(pose[1] == "1 0.25");

    std::vector<std::string> psnr = read_lines(dir / "eval_psnr.dat");
    REQUIRE(psnr.size() == 3);  // both ok rows plot psnr
    CHECK(psnr[0] == "# index  psnr  (desk-scale proxy)");
    CHECK(psnr[1] == "0 18.5");
    CHECK(psnr[2] == "1 12");

    CHECK_THROWS_AS(write_eval_report((dir / "absent" / "eval.csv").string(), rep), OmniError);
    fs::remove_all(dir);
}
