#include "omni/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

#include "omni/audio_features.hpp"
#include "omni/threading.hpp"
#include "omni/wav_io.hpp"

namespace omni {

// ---------------------------------------------------------------------------
// Manifest io
// ---------------------------------------------------------------------------

std::vector<ClipRecord> read_manifest(const std::string& path) {
    std::ifstream is(path);
    require(is.good(), ErrorCode::io, "read_manifest: cannot open " + path);
    std::vector<ClipRecord> out;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            fail(ErrorCode::io,
                 "read_manifest: " + path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        try {
            ClipRecord r;
            r.id = j.at("id").get<std::string>();
            r.frames_path = j.at("frames").get<std::string>();
            r.waveform_path = j.at("waveform").get<std::string>();
            r.skeleton_path = j.at("skeleton").get<std::string>();
            r.caption = j.at("caption").get<std::string>();
            r.lipsync_ok = j.at("lipsync_ok").get<bool>();
            r.pose_visible = j.at("pose_visible").get<bool>();
            r.aesthetic_ok = j.at("aesthetic_ok").get<bool>();
            out.push_back(std::move(r));
        } catch (const std::exception& e) {
            fail(ErrorCode::io, "read_manifest: " + path + ":" + std::to_string(lineno) +
                                    ": missing field (" + e.what() + ")");
        }
    }
    return out;
}

void write_manifest(const std::string& path, const std::vector<ClipRecord>& records) {
    std::ofstream os(path);
    require(os.good(), ErrorCode::io, "write_manifest: cannot open " + path);
    for (const ClipRecord& r : records) {
        nlohmann::json j{{"id", r.id},
                         {"frames", r.frames_path},
                         {"waveform", r.waveform_path},
                         {"skeleton", r.skeleton_path},
                         {"caption", r.caption},
                         {"lipsync_ok", r.lipsync_ok},
                         {"pose_visible", r.pose_visible},
                         {"aesthetic_ok", r.aesthetic_ok}};
        os << j.dump() << "\n";
    }
    require(os.good(), ErrorCode::io, "write_manifest: write failed for " + path);
}

// ---------------------------------------------------------------------------
// Routing and condition masks
// ---------------------------------------------------------------------------

EligibleSet route_clip(const ClipRecord& c) {
    EligibleSet e;
    e.text = true;  // every clip can train the text+reference task
    e.audio = c.lipsync_ok;
    e.pose = c.pose_visible;
    return e;
}

void TrainPlan::validate() const {
    require(stage >= 1 && stage <= 3, ErrorCode::config, "stage must be 1, 2 or 3");
    auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
    require(in01(ratio_text) && in01(ratio_audio) && in01(ratio_pose), ErrorCode::config,
            "keep ratios must lie in [0,1]");
    require(stage != 1 || (ratio_audio == 0.0 && ratio_pose == 0.0), ErrorCode::config,
            "stage 1 excludes audio and pose (A=P=0)");
    require(stage != 2 || ratio_pose == 0.0, ErrorCode::config,
            "stage 2 drops only the pose condition (P=0)");
    require(steps >= 0, ErrorCode::config, "steps must be >= 0");
    require(lr >= 0.0 && weight_decay >= 0.0, ErrorCode::config,
            "lr and weight_decay must be >= 0");
    require(grad_clip > 0.0, ErrorCode::config, "grad_clip must be positive");
    require(batch >= 1, ErrorCode::config, "batch must be >= 1");
}

ConditionMask sample_condition_mask(const EligibleSet& eligible, const TrainPlan& plan,
                                    RandomStream& rng) {
    plan.validate();
    // Fixed draw count per sample keeps the stream aligned across clips.
    bool keep_t = rng.bernoulli(plan.ratio_text);
    bool keep_a = rng.bernoulli(plan.ratio_audio);
    bool keep_p = rng.bernoulli(plan.ratio_pose);
    bool keep_m = rng.bernoulli(kMotionKeepProb);
    ConditionMask m;
    m.text = eligible.text && keep_t;
    m.audio = eligible.audio && keep_a;  // plan ratios already encode stage forcing
    m.pose = eligible.pose && keep_p;
    m.motion_frames = keep_m;
    return m;
}

// ---------------------------------------------------------------------------
// Clip loading and slicing
// ---------------------------------------------------------------------------

LoadedClip load_clip(const ClipRecord& rec) {
    try {
        LoadedClip c;
        c.frames = read_video_file(rec.frames_path);
        c.wave = read_wav(rec.waveform_path);
        c.skeleton = read_skeleton_jsonl(rec.skeleton_path);
        require(static_cast<int>(c.skeleton.frames.size()) == c.frames.T, ErrorCode::shape,
                "skeleton frame count differs from video");
        return c;
    } catch (const OmniError& e) {
        fail(e.code(), "clip " + rec.id + ": " + e.what());
    }
}

PixelVideo slice_frames(const PixelVideo& v, int first, int count) {
    require(first >= 0 && count >= 1 && first + count <= v.T, ErrorCode::shape,
            "slice_frames: range out of bounds");
    PixelVideo out = PixelVideo::zeros(count, v.H, v.W);
    out.fps = v.fps;
    const size_t frame = size_t(v.H) * v.W * 3;
    std::copy(v.data.begin() + first * frame, v.data.begin() + (first + count) * frame,
              out.data.begin());
    return out;
}

VideoLatent slice_latent_frames(const VideoLatent& z, int first, int count,
                                const CodecConfig& codec) {
    require(first >= 0 && count >= 1 && first + count <= z.Tlat, ErrorCode::shape,
            "slice_latent_frames: range out of bounds");
    auto group_start = [&](int k) { return k == 0 ? 0 : 1 + (k - 1) * codec.gt; };
    VideoLatent out = z;
    out.Tlat = count;
    out.pixel_frames = group_start(first + count) - group_start(first);
    const size_t frame = size_t(z.Hlat) * z.Wlat * z.C;
    out.grid.assign(z.grid.begin() + first * frame, z.grid.begin() + (first + count) * frame);
    return out;
}

// ---------------------------------------------------------------------------
// Batch assembly
// ---------------------------------------------------------------------------

namespace {

// Latent frame count whose groups cover exactly `pixels` pixel frames, or -1
// when no group boundary lands there (then a motion prefix of that length
// cannot be expressed).
int latent_prefix_for_pixels(int pixels, int gt) {
    if (pixels == 0) return 0;
    if (pixels == 1) return 1;
    if ((pixels - 1) % gt != 0) return -1;
    return 1 + (pixels - 1) / gt;
}

}  // namespace

std::vector<BatchItem> build_batch(const std::vector<ClipRecord>& records,
                                   const TrainPlan& plan, const ModelConfig& model,
                                   const CodecConfig& codec, const Vocab& vocab,
                                   const DatasetConfig& data, RandomStream& rng) {
    require(!records.empty(), ErrorCode::value, "build_batch: no records");
    require(!data.crop_lengths.empty(), ErrorCode::config, "build_batch: no crop lengths");
    for (int L : data.crop_lengths)
        require(L >= 1 && (L - 1) % codec.gt == 0, ErrorCode::config,
                "crop length " + std::to_string(L) + " not encodable");

    std::vector<BatchItem> batch;
    batch.reserve(plan.batch);
    for (int b = 0; b < plan.batch; ++b) {
        // Fixed per-item draw order: clip, crop length, crop start, condition
        // mask (4 draws), reference frame, t, then noise.
        const ClipRecord& rec = records[rng.uniform_index(records.size())];
        LoadedClip clip = load_clip(rec);

        std::vector<int> usable;
        for (int L : data.crop_lengths)
            if (L <= clip.frames.T) usable.push_back(L);
        require(!usable.empty(), ErrorCode::shape,
                "clip " + rec.id + ": shorter than every crop length");
        const int L = usable[rng.uniform_index(usable.size())];
        const int start = static_cast<int>(rng.uniform_index(clip.frames.T - L + 1));

        ConditionMask mask = sample_condition_mask(route_clip(rec), plan, rng);
        const int ref_frame = static_cast<int>(rng.uniform_index(clip.frames.T));
        const double t = rng.uniform();

        PixelVideo window = slice_frames(clip.frames, start, L);
        VideoLatent z_window = encode_video(window, codec);
        VideoLatent z_ref = encode_video(slice_frames(clip.frames, ref_frame, 1), codec);

        // Motion prefix: the first M pixel frames of the window become clean
        // motion latents; the loss covers only the continuation latents.
        int m_lat = 0;
        if (mask.motion_frames) {
            int m = latent_prefix_for_pixels(model.M, codec.gt);
            if (m >= 1 && m < z_window.Tlat) m_lat = m;
        }
        mask.motion_frames = m_lat > 0;

        VideoLatent z_motion, x0;
        if (m_lat > 0) {
            z_motion = slice_latent_frames(z_window, 0, m_lat, codec);
            x0 = slice_latent_frames(z_window, m_lat, z_window.Tlat - m_lat, codec);
        } else {
            x0 = z_window;
        }

        std::vector<double> noise(x0.grid.size());
        for (auto& v : noise) v = rng.normal();
        NoiseState ns = flow_pair(x0, noise, t);

        TextTokens text = mask.text ? encode_text(rec.caption, vocab, model.Lmax)
                                    : null_caption_tokens(model.Lmax);

        BatchItem item;
        item.clip_id = rec.id;
        item.mask = mask;
        item.t = t;
        item.target_v = std::move(ns.target_v);
        item.seq = pack_tokens(ns.x_t, z_ref, m_lat > 0 ? &z_motion : nullptr, text.ids, model);

        if (mask.audio) {
            auto feat_rows = extract_audio_features(clip.wave, clip.frames.T);
            std::vector<double> flat(size_t(L) * model.audio_dim);
            for (int f = 0; f < L; ++f)
                std::copy(feat_rows[start + f].begin(), feat_rows[start + f].end(),
                          flat.begin() + size_t(f) * model.audio_dim);
            item.audio = build_audio_routing(flat, L, model.audio_dim, model.audio_window,
                                             codec, z_window.Tlat);
        }
        if (mask.pose) {
            try {
                item.pose_maps =
                    rasterize_skeleton(clip.skeleton.slice(start, start + L), window.H,
                                       window.W);
            } catch (const OmniError& e) {
                fail(e.code(), "clip " + rec.id + ": " + e.what());
            }
        }
        batch.push_back(std::move(item));
    }
    return batch;
}

// ---------------------------------------------------------------------------
// Optimizer step
// ---------------------------------------------------------------------------

void TrainState::push_loss(float v) {
    if (loss_ring.size() >= kLossRingCapacity)
        loss_ring.erase(loss_ring.begin());
    loss_ring.push_back(v);
}

TrainerTrailer TrainState::trailer() const {
    TrainerTrailer t;
    t.step = step;
    t.rng_state = rng.save_state();
    t.loss_ring = loss_ring;
    return t;
}

TrainState make_train_state(const ModelConfig& model, const CodecConfig& codec,
                            const Vocab& vocab, uint64_t init_seed) {
    require(vocab.size() == model.vocab_size, ErrorCode::config,
            "vocabulary size disagrees with model config");
    TrainState st;
    st.model = model;
    st.codec = codec;
    st.vocab = vocab;
    register_params(st.params, model);
    RandomStream init_rng = RandomStream::substream(init_seed, "init");
    init_training(st.params, model, init_rng);
    st.moments = AdamMoments::zeros_like(st.params);
    st.rng = RandomStream::substream(init_seed, "data");
    return st;
}

TrainState train_state_from_checkpoint(const Checkpoint& ck) {
    TrainState st;
    st.model = ck.model;
    st.codec = ck.codec;
    st.vocab = ck.vocab;
    register_params(st.params, st.model);
    for (int i = 0; i < st.params.count(); ++i) st.params.vec(i) = ck.params.vec(i);
    st.moments = ck.moments ? *ck.moments : AdamMoments::zeros_like(st.params);
    if (ck.trailer) {
        st.step = ck.trailer->step;
        st.rng.load_state(ck.trailer->rng_state);
        st.loss_ring = ck.trailer->loss_ring;
    }
    return st;
}

double batch_loss(TrainState& state, const std::vector<BatchItem>& batch, int jobs) {
    require(!batch.empty(), ErrorCode::value, "batch_loss: empty batch");
    std::vector<double> losses(batch.size(), 0.0);
    parallel_for(int(batch.size()), jobs, [&](int i) {
        const BatchItem& item = batch[size_t(i)];
        Graph<float> g;
        ForwardInputs in;
        in.seq = &item.seq;
        in.audio = item.mask.audio ? &item.audio : nullptr;
        in.pose_maps = item.mask.pose ? &item.pose_maps : nullptr;
        in.t = item.t;
        int vel = denoiser_forward(g, state.model, state.params, in);
        std::vector<float> target(item.target_v.begin(), item.target_v.end());
        std::vector<uint8_t> mask(target.size(), 1);
        losses[size_t(i)] = double(g.data(g.mse_masked(vel, target, mask))[0]);
    });
    double acc = 0.0;
    for (double l : losses) acc += l;
    return acc / double(batch.size());
}

double validation_loss(TrainState& state, const std::vector<ClipRecord>& records, int items,
                       uint64_t seed, int jobs) {
    require(items >= 1, ErrorCode::value, "validation_loss: items must be >= 1");
    for (const ClipRecord& r : records)
        require(r.lipsync_ok, ErrorCode::value,
                "validation_loss: clip " + r.id + " is not audio-eligible");
    TrainPlan plan;
    plan.stage = 3;
    plan.ratio_text = 1.0;
    plan.ratio_audio = 1.0;
    plan.ratio_pose = 0.0;
    plan.batch = items;
    RandomStream rng = RandomStream::substream(seed, "val");
    DatasetConfig data;
    std::vector<BatchItem> batch =
        build_batch(records, plan, state.model, state.codec, state.vocab, data, rng);
    return batch_loss(state, batch, jobs);
}

double train_step(TrainState& state, const std::vector<BatchItem>& batch,
                  const TrainPlan& plan, int jobs, const AdamConfig& adam) {
    require(!batch.empty(), ErrorCode::value, "train_step: empty batch");
    ParamStore<float>& P = state.params;
    const int np = P.count();

    std::unordered_map<const float*, int> ptr_to_index;
    ptr_to_index.reserve(np);
    for (int i = 0; i < np; ++i) ptr_to_index.emplace(P.data(i), i);

    auto zero_grads = [&]() {
        std::vector<std::vector<float>> g(np);
        for (int i = 0; i < np; ++i) g[i].assign(P.elems(i), 0.0f);
        return g;
    };

    auto run_item = [&](const BatchItem& item, std::vector<std::vector<float>>& grads) {
        Graph<float> g;
        ForwardInputs in;
        in.seq = &item.seq;
        in.audio = item.mask.audio ? &item.audio : nullptr;
        in.pose_maps = item.mask.pose ? &item.pose_maps : nullptr;
        in.t = item.t;
        int vel = denoiser_forward(g, state.model, P, in);
        std::vector<float> target(item.target_v.begin(), item.target_v.end());
        std::vector<uint8_t> mask(target.size(), 1);
        int loss = g.mse_masked(vel, target, mask);
        g.backward(loss);
        for (int node : g.params()) {
            const float* gr = g.grad(node);
            if (!gr) continue;
            int idx = ptr_to_index.at(g.data(node));
            vaxpy(grads[idx].data(), 1.0f, gr, static_cast<int>(P.elems(idx)));
        }
        return double(g.data(loss)[0]);
    };

    std::vector<double> losses(batch.size(), 0.0);
    std::vector<std::vector<float>> grads = zero_grads();
    const int workers = effective_threads(jobs);
    if (workers <= 1) {
        for (size_t i = 0; i < batch.size(); ++i) losses[i] = run_item(batch[i], grads);
    } else {
        // Per-item buffers reduced in item order: bit-identical to the
        // sequential path for any worker count.
        std::vector<std::vector<std::vector<float>>> item_grads(batch.size());
        parallel_for(static_cast<int>(batch.size()), workers, [&](int i) {
            item_grads[i] = zero_grads();
            losses[i] = run_item(batch[i], item_grads[i]);
        });
        for (size_t i = 0; i < batch.size(); ++i)
            for (int p = 0; p < np; ++p)
                vaxpy(grads[p].data(), 1.0f, item_grads[i][p].data(),
                      static_cast<int>(P.elems(p)));
    }

    double loss_sum = 0.0;
    for (double l : losses) loss_sum += l;
    const double mean_loss = loss_sum / double(batch.size());
    if (!std::isfinite(mean_loss)) {
        std::string ids;
        for (const BatchItem& it : batch) ids += " " + it.clip_id;
        fail(ErrorCode::numeric, "non-finite loss at step " + std::to_string(state.step + 1) +
                                     " (batch clips:" + ids + ")");
    }

    // Mean over items, then global-norm clip.
    const float inv_b = 1.0f / float(batch.size());
    double sq_sum = 0.0;
    for (int p = 0; p < np; ++p)
        for (float& v : grads[p]) {
            v *= inv_b;
            sq_sum += double(v) * double(v);
        }
    const double gnorm = std::sqrt(sq_sum);
    require(std::isfinite(gnorm), ErrorCode::numeric,
            "non-finite gradient norm at step " + std::to_string(state.step + 1));
    if (gnorm > plan.grad_clip) {
        const float scale = float(plan.grad_clip / gnorm);
        for (int p = 0; p < np; ++p)
            for (float& v : grads[p]) v *= scale;
    }

    const uint64_t t = state.step + 1;
    for (int p = 0; p < np; ++p)
        adamw_update(P.data(p), grads[p].data(), state.moments.m[p].data(),
                     state.moments.v[p].data(), P.elems(p), t, plan.lr, plan.weight_decay,
                     adam);

    state.step = t;
    state.push_loss(float(mean_loss));
    return mean_loss;
}

// ---------------------------------------------------------------------------
// Stage runner
// ---------------------------------------------------------------------------

namespace {

void append_metrics(const std::string& path, uint64_t step, int stage, double loss,
                    double rt, double ra, double rp) {
    bool fresh = true;
    {
        std::ifstream probe(path);
        fresh = !probe.good() || probe.peek() == std::ifstream::traits_type::eof();
    }
    std::ofstream os(path, std::ios::app);
    require(os.good(), ErrorCode::io, "cannot append metrics to " + path);
    if (fresh) os << "step,stage,loss,rate_text,rate_audio,rate_pose\n";
    os << step << "," << stage << "," << loss << "," << rt << "," << ra << "," << rp << "\n";
}

}  // namespace

std::vector<StageMetrics> run_stages(TrainState& state, const std::vector<TrainPlan>& plans,
                                     const std::vector<ClipRecord>& records,
                                     const DatasetConfig& data, const RunHooks& hooks) {
    require(!plans.empty(), ErrorCode::config, "run_stages: no plans");
    for (size_t k = 0; k + 1 < plans.size(); ++k)
        require(plans[k].stage <= plans[k + 1].stage, ErrorCode::config,
                "run_stages: plans must be ordered by stage");

    std::vector<StageMetrics> metrics;
    uint64_t cum = 0;
    for (size_t k = 0; k < plans.size(); ++k) {
        const TrainPlan& plan = plans[k];
        plan.validate();
        const uint64_t stage_end = cum + uint64_t(plan.steps);
        StageMetrics sm;
        sm.stage = plan.stage;

        if (state.step < stage_end) {
            // Fresh stage entry reseeds the data stream; a mid-stage resume
            // keeps the restored stream, which is what makes the continued
            // trajectory bit-identical.
            if (state.step == cum)
                state.rng = RandomStream::substream(plan.seed,
                                                    "stage" + std::to_string(k + 1));
            double loss_acc = 0.0, t_acc = 0.0, a_acc = 0.0, p_acc = 0.0, m_acc = 0.0;
            uint64_t n = 0;
            while (state.step < stage_end) {
                auto batch = build_batch(records, plan, state.model, state.codec, state.vocab,
                                         data, state.rng);
                double loss = train_step(state, batch, plan, hooks.jobs);
                double bt = 0, ba = 0, bp = 0, bm = 0;
                for (const BatchItem& it : batch) {
                    bt += it.mask.text ? 1 : 0;
                    ba += it.mask.audio ? 1 : 0;
                    bp += it.mask.pose ? 1 : 0;
                    bm += it.mask.motion_frames ? 1 : 0;
                }
                const double inv = 1.0 / double(batch.size());
                loss_acc += loss;
                t_acc += bt * inv;
                a_acc += ba * inv;
                p_acc += bp * inv;
                m_acc += bm * inv;
                ++n;
                if (!hooks.metrics_csv.empty())
                    append_metrics(hooks.metrics_csv, state.step, plan.stage, loss, bt * inv,
                                   ba * inv, bp * inv);
                if (hooks.on_step) hooks.on_step(state.step, plan.stage, loss);
                if (hooks.latest_every > 0 && !hooks.checkpoint_dir.empty() &&
                    state.step % uint64_t(hooks.latest_every) == 0) {
                    TrainerTrailer tr = state.trailer();
                    save_checkpoint(hooks.checkpoint_dir + "/latest.ohck", state.model,
                                    state.codec, state.vocab, state.params, &state.moments,
                                    &tr);
                }
            }
            if (n > 0) {
                sm.steps = n;
                sm.mean_loss = loss_acc / double(n);
                sm.exposure_text = t_acc / double(n);
                sm.exposure_audio = a_acc / double(n);
                sm.exposure_pose = p_acc / double(n);
                sm.exposure_motion = m_acc / double(n);
            }
        }
        cum = stage_end;
        if (!hooks.checkpoint_dir.empty()) {
            TrainerTrailer tr = state.trailer();
            save_checkpoint(hooks.checkpoint_dir + "/stage" + std::to_string(k + 1) + ".ohck",
                            state.model, state.codec, state.vocab, state.params,
                            &state.moments, &tr);
        }
        metrics.push_back(sm);
    }
    return metrics;
}

}  // namespace omni
