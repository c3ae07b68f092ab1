#include "omni/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "omni/audio_features.hpp"
#include "omni/threading.hpp"

namespace omni {

namespace {

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= double(n);
    my /= double(n);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    // Quantized signals with real variation sit many orders of magnitude
    // above this; only genuinely constant series fall below it.
    require(sxx > 1e-18 && syy > 1e-18, ErrorCode::value,
            "sync correlation undefined: zero-variance series");
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace

double sync_correlation(const PixelVideo& video, const Waveform& wave,
                        const SpriteSpec& spec) {
    require(video.T >= 3, ErrorCode::value, "sync correlation needs at least 3 frames");
    require(video.H == spec.canvas && video.W == spec.canvas, ErrorCode::shape,
            "sync correlation expects sprite-canvas frames");

    std::vector<double> mouth(video.T, 0.0);
    const int pixels = (spec.mouth_x1 - spec.mouth_x0) * spec.mouth_max_rows * 3;
    for (int t = 0; t < video.T; ++t) {
        double acc = 0.0;
        for (int r = 0; r < spec.mouth_max_rows; ++r)
            for (int x = spec.mouth_x0; x < spec.mouth_x1; ++x)
                for (int c = 0; c < 3; ++c) acc += video.at(t, spec.mouth_y0 + r, x, c);
        mouth[t] = acc / double(pixels);
    }
    return pearson(mouth, frame_envelope(wave, video.T));
}

namespace {

// Detector score in [0,1]: how strongly a pixel reads as the wrist color.
// min(r,b)-g separates magenta from every palette face color (and min(g,b)-r
// cyan) with >= 0.15 margin even under edge blending.
double wrist_score(double r, double g, double b, bool left) {
    double s = left ? std::min(r, b) - g : std::min(g, b) - r;
    return std::clamp((s - 0.5) / 0.5, 0.0, 1.0);
}

}  // namespace

double pose_deviation(const PixelVideo& video, const SkeletonSequence& skeleton,
                      const SpriteSpec& spec) {
    require(video.T >= 1, ErrorCode::value, "pose deviation needs at least 1 frame");
    require(int(skeleton.frames.size()) == video.T, ErrorCode::shape,
            "pose deviation: skeleton frame count differs from video");

    double total = 0.0;
    for (int t = 0; t < video.T; ++t) {
        for (int side = 0; side < 2; ++side) {
            const bool left = side == 0;
            double wsum = 0.0, cx = 0.0, cy = 0.0;
            for (int y = 0; y < video.H; ++y)
                for (int x = 0; x < video.W; ++x) {
                    double w = wrist_score(video.at(t, y, x, 0), video.at(t, y, x, 1),
                                           video.at(t, y, x, 2), left);
                    wsum += w;
                    cx += w * (x + 0.5);
                    cy += w * (y + 0.5);
                }
            require(wsum > 1e-6, ErrorCode::value,
                    "pose deviation: no wrist pixels in frame " + std::to_string(t));
            const Joint& j = skeleton.frames[t].joints[left ? kWristL : kWristR];
            total += std::hypot(cx / wsum - j.x * video.W, cy / wsum - j.y * video.H);
        }
    }
    return total / (2.0 * video.T);
}

double recon_psnr(const PixelVideo& a, const PixelVideo& b) {
    require(a.T == b.T && a.H == b.H && a.W == b.W, ErrorCode::shape,
            "recon_psnr: video shapes differ");
    require(!a.data.empty(), ErrorCode::value, "recon_psnr: empty video");
    double mse = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        double d = double(a.data[i]) - double(b.data[i]);
        mse += d * d;
    }
    mse /= double(a.data.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

EvalReport evaluate_model(Checkpoint& ck, const std::vector<ClipRecord>& testset,
                          const EvalSettings& settings) {
    require(!testset.empty(), ErrorCode::value, "evaluate_model: empty test set");
    require(!settings.modes.empty(), ErrorCode::value, "evaluate_model: no modes");

    EvalReport report;
    report.rows.resize(testset.size() * settings.modes.size());
    for (size_t mi = 0; mi < settings.modes.size(); ++mi) {
        const DriveMode mode = settings.modes[mi];
        parallel_for(int(testset.size()), settings.jobs, [&](int i) {
            ClipEval& row = report.rows[mi * testset.size() + size_t(i)];
            const ClipRecord& rec = testset[size_t(i)];
            row.clip_id = rec.id;
            row.mode = to_string(mode);
            try {
                LoadedClip clip = load_clip(rec);
                DrivingRequest req;
                req.reference = slice_frames(clip.frames, 0, 1);
                req.caption = rec.caption;
                req.waveform = clip.wave;
                req.skeleton = clip.skeleton;
                req.mode = mode;
                req.duration = clip.frames.T;
                req.cfg_scale = settings.cfg_scale;
                req.steps = settings.steps;
                req.seed = fnv1a64(rec.id, settings.seed);
                req.null_audio = settings.null_audio;
                GenerationResult gen = generate(req, ck);
                row.ok = true;
                row.psnr = recon_psnr(gen.video, clip.frames);
                if (mode == DriveMode::audio || mode == DriveMode::audio_pose) {
                    try {
                        row.sync = sync_correlation(gen.video, clip.wave);
                        row.sync_defined = true;
                    } catch (const OmniError& e) {
                        row.error = e.what();  // undefined sync, row still ok
                    }
                }
                if (mode == DriveMode::pose || mode == DriveMode::audio_pose) {
                    try {
                        row.pose_err = pose_deviation(gen.video, clip.skeleton);
                        row.pose_defined = true;
                    } catch (const OmniError& e) {
                        if (row.error.empty()) row.error = e.what();
                    }
                }
            } catch (const OmniError& e) {
                row.ok = false;
                row.error = e.what();
            }
        });
    }
    return report;
}

int EvalReport::count_ok(const std::string& mode) const {
    int n = 0;
    for (const ClipEval& r : rows)
        if (r.mode == mode && r.ok) ++n;
    return n;
}

double EvalReport::median_sync(const std::string& mode, double undefined_value) const {
    std::vector<double> v;
    for (const ClipEval& r : rows)
        if (r.mode == mode && r.ok) v.push_back(r.sync_defined ? r.sync : undefined_value);
    require(!v.empty(), ErrorCode::value, "median_sync: no samples for mode " + mode);
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double EvalReport::mean_pose_err(const std::string& mode) const {
    double acc = 0.0;
    int n = 0;
    for (const ClipEval& r : rows)
        if (r.mode == mode && r.pose_defined) {
            acc += r.pose_err;
            ++n;
        }
    require(n > 0, ErrorCode::value, "mean_pose_err: no samples for mode " + mode);
    return acc / double(n);
}

double EvalReport::mean_psnr(const std::string& mode) const {
    double acc = 0.0;
    int n = 0;
    for (const ClipEval& r : rows)
        if (r.mode == mode && r.ok) {
            acc += r.psnr;
            ++n;
        }
    require(n > 0, ErrorCode::value, "mean_psnr: no samples for mode " + mode);
    return acc / double(n);
}

void write_eval_report(const std::string& csv_path, const EvalReport& report) {
    std::ofstream os(csv_path);
    require(os.good(), ErrorCode::io, "cannot write report " + csv_path);
    os << "# desk-scale proxy metrics on the synthetic sprite domain "
          "(analytic stand-ins, not pretrained-network scores)\n";
    os << "clip_id,mode,ok,sync_defined,sync,pose_defined,pose_err,psnr,error\n";
    for (const ClipEval& r : report.rows) {
        std::string err = r.error;
        std::replace(err.begin(), err.end(), ',', ';');
        os << r.clip_id << "," << r.mode << "," << (r.ok ? 1 : 0) << ","
           << (r.sync_defined ? 1 : 0) << "," << r.sync << "," << (r.pose_defined ? 1 : 0)
           << "," << r.pose_err << "," << r.psnr << "," << err << "\n";
    }
    require(os.good(), ErrorCode::io, "write failed for " + csv_path);

    const std::string stem = csv_path.size() > 4 && csv_path.ends_with(".csv")
                                 ? csv_path.substr(0, csv_path.size() - 4)
                                 : csv_path;
    auto write_plot = [&](const std::string& name, auto defined, auto value) {
        std::ofstream ps(stem + "_" + name + ".dat");
        require(ps.good(), ErrorCode::io, "cannot write plot data for " + name);
        ps << "# index  " << name << "  (desk-scale proxy)\n";
        for (size_t i = 0; i < report.rows.size(); ++i)
            if (defined(report.rows[i])) ps << i << " " << value(report.rows[i]) << "\n";
    };
    write_plot(
        "sync", [](const ClipEval& r) { return r.sync_defined; },
        [](const ClipEval& r) { return r.sync; });
    write_plot(
        "pose", [](const ClipEval& r) { return r.pose_defined; },
        [](const ClipEval& r) { return r.pose_err; });
    write_plot(
        "psnr", [](const ClipEval& r) { return r.ok; },
        [](const ClipEval& r) { return r.psnr; });
}

}  // namespace omni
