#include "omni/model.hpp"

#include <cmath>
#include <cstdio>

namespace omni {

namespace {

template <typename T>
std::vector<T> cast_vec(const std::vector<double>& v) {
    return std::vector<T>(v.begin(), v.end());
}

template <typename T>
void check_block_finite(const Graph<T>& g, int node, int block) {
    const T* d = g.data(node);
    for (size_t i = 0, n = g.size(node); i < n; ++i)
        if (!std::isfinite(double(d[i])))
            fail(ErrorCode::numeric,
                 "non-finite activation in block " + std::to_string(block));
}

std::string blk(int i, const char* suffix) {
    return "blk" + std::to_string(i) + "." + suffix;
}

}  // namespace

void ModelConfig::validate() const {
    require(D >= 2 && nblocks >= 1 && nheads >= 1, ErrorCode::config, "model dims must be positive");
    require(D % nheads == 0, ErrorCode::config, "hidden size not divisible by head count");
    require(head_dim() % 2 == 0, ErrorCode::config, "head dim must be even for rotary pairs");
    require(Lmax >= 1, ErrorCode::config, "Lmax must be >= 1");
    require(M >= 0, ErrorCode::config, "motion frame cap must be >= 0");
    require(Cp >= 1 && temporal_group >= 1, ErrorCode::config, "pose channel config invalid");
    require(rope_base > 1.0, ErrorCode::config, "rope_base must exceed 1");
    require(vocab_size >= 3, ErrorCode::config, "vocabulary must include reserved ids");
    require(ffn_mult >= 1 && audio_dim >= 1 && audio_window >= 0, ErrorCode::config,
            "feature dims invalid");
    require(latent_channels >= 1, ErrorCode::config, "latent channels invalid");
}

// ---------------------------------------------------------------------------
// Parameter registration & initialization
// ---------------------------------------------------------------------------

template <typename T>
void register_params(ParamStore<T>& store, const ModelConfig& cfg) {
    cfg.validate();
    const int D = cfg.D, C = cfg.latent_channels, F = cfg.audio_dim;
    const int Cpg = cfg.pose_grid_channels();
    const int Dff = cfg.ffn_mult * D;

    store.add("text.embed", cfg.vocab_size, D);
    store.add("in.latent.w", D, C);
    store.add("in.latent.b", 1, D);
    store.add("in.pose.w", D, Cpg);
    store.add("time.mlp1.w", D, D);
    store.add("time.mlp1.b", 1, D);
    store.add("time.mlp2.w", D, D);
    store.add("time.mlp2.b", 1, D);
    store.add("audio.proj.w", D, F);
    store.add("audio.proj.b", 1, D);
    store.add("audio.null", 1, D);
    store.add("guider.c1.w", 16, 3 * 9);
    store.add("guider.c1.b", 1, 16);
    store.add("guider.c2.w", 32, 16 * 9);
    store.add("guider.c2.b", 1, 32);
    store.add("guider.c3.w", cfg.Cp, 32 * 9);
    store.add("guider.c3.b", 1, cfg.Cp);

    for (int i = 0; i < cfg.nblocks; ++i) {
        for (const char* s : {"t", "v"}) {
            std::string p = blk(i, s) + ".";
            store.add(p + "q.w", D, D);
            store.add(p + "q.b", 1, D);
            store.add(p + "k.w", D, D);
            store.add(p + "k.b", 1, D);
            store.add(p + "v.w", D, D);
            store.add(p + "v.b", 1, D);
            store.add(p + "out.w", D, D);
            store.add(p + "out.b", 1, D);
            store.add(p + "ffn1.w", Dff, D);
            store.add(p + "ffn1.b", 1, Dff);
            store.add(p + "ffn2.w", D, Dff);
            store.add(p + "ffn2.b", 1, D);
            // adaLN projection: 6 modulation rows for the text stream,
            // 9 for the visual stream (extra shift/scale/gate for audio CA)
            int nmod = (s[0] == 't') ? 6 : 9;
            store.add(p + "mod.w", nmod * D, D);
            store.add(p + "mod.b", 1, nmod * D);
        }
        std::string a = blk(i, "a") + ".";
        store.add(a + "q.w", D, D);
        store.add(a + "q.b", 1, D);
        store.add(a + "k.w", D, D);
        store.add(a + "k.b", 1, D);
        store.add(a + "v.w", D, D);
        store.add(a + "v.b", 1, D);
        store.add(a + "out.w", D, D);
        store.add(a + "out.b", 1, D);
    }
    store.add("final.mod.w", 2 * D, D);
    store.add("final.mod.b", 1, 2 * D);
    store.add("head.w", C, D);
    store.add("head.b", 1, C);
}

namespace {

// adaLN modulations, the output head, and the guider's last stage start at
// zero: every block begins as the identity, the velocity starts at 0, and
// pose starts as an exact no-op.
bool zero_initialized(const std::string& name) {
    return name.find(".mod.") != std::string::npos || name.rfind("head.", 0) == 0 ||
           name.rfind("guider.c3.", 0) == 0;
}

}  // namespace

template <typename T>
void init_training(ParamStore<T>& store, const ModelConfig& cfg, RandomStream& rng) {
    (void)cfg;
    for (int i = 0; i < store.count(); ++i) {
        const std::string& name = store.name(i);
        T* d = store.data(i);
        size_t n = store.elems(i);
        if (zero_initialized(name)) {
            std::fill(d, d + n, T(0));
        } else if (name.size() > 2 && name.compare(name.size() - 2, 2, ".b") == 0) {
            std::fill(d, d + n, T(0));
        } else {
            for (size_t j = 0; j < n; ++j) d[j] = T(0.02 * rng.normal());
        }
    }
}

template <typename T>
void randomize_all(ParamStore<T>& store, RandomStream& rng, double scale) {
    for (int i = 0; i < store.count(); ++i) {
        T* d = store.data(i);
        for (size_t j = 0, n = store.elems(i); j < n; ++j) d[j] = T(scale * rng.normal());
    }
}

// ---------------------------------------------------------------------------
// Token packing and rotary phases
// ---------------------------------------------------------------------------

PackedSequence pack_tokens(const VideoLatent& z_noisy, const VideoLatent& z_ref,
                           const VideoLatent* z_motion, const std::vector<int>& text_ids,
                           const ModelConfig& cfg) {
    cfg.validate();
    require(static_cast<int>(text_ids.size()) == cfg.Lmax, ErrorCode::shape,
            "text ids must have length Lmax");
    require(z_ref.Hlat == z_noisy.Hlat && z_ref.Wlat == z_noisy.Wlat, ErrorCode::shape,
            "reference spatial dims differ from video");
    require(z_ref.Tlat == 1, ErrorCode::shape, "reference must be a single latent frame");
    require(z_ref.C == z_noisy.C, ErrorCode::shape, "reference channel count differs");
    if (z_motion) {
        require(z_motion->Hlat == z_noisy.Hlat && z_motion->Wlat == z_noisy.Wlat,
                ErrorCode::shape, "motion spatial dims differ from video");
        require(z_motion->C == z_noisy.C, ErrorCode::shape, "motion channel count differs");
        require(z_motion->pixel_frames <= cfg.M, ErrorCode::value,
                "too many motion frames: " + std::to_string(z_motion->pixel_frames) +
                    " > M=" + std::to_string(cfg.M));
    }

    PackedSequence s;
    s.Lt = cfg.Lmax;
    s.Tlat = z_noisy.Tlat;
    s.Hlat = z_noisy.Hlat;
    s.Wlat = z_noisy.Wlat;
    s.C = z_noisy.C;
    s.m = z_motion ? z_motion->Tlat : 0;
    const int HW = s.Hlat * s.Wlat;
    s.n_ref = HW;
    s.n_motion = s.m * HW;
    s.n_video = s.Tlat * HW;
    s.text_ids = text_ids;

    const int N = s.total();
    s.kinds.resize(N);
    s.pos.assign(N, {0, 0, 0});
    s.frame_of.assign(N, -1);
    s.latent_rows.resize(size_t(s.vis_rows()) * s.C);

    int row = 0;
    for (int i = 0; i < s.Lt; ++i) s.kinds[row++] = TokenKind::text;

    auto copy_frame = [&](const VideoLatent& z, int t_src, TokenKind kind, int t_pos,
                          int latent_frame) {
        for (int y = 0; y < s.Hlat; ++y)
            for (int x = 0; x < s.Wlat; ++x) {
                s.kinds[row] = kind;
                s.pos[row] = {t_pos, y, x};
                s.frame_of[row] = latent_frame;
                const int vis = row - s.Lt;
                for (int c = 0; c < s.C; ++c)
                    s.latent_rows[size_t(vis) * s.C + c] = z.at(t_src, y, x, c);
                ++row;
            }
    };

    copy_frame(z_ref, 0, TokenKind::reference, 0, -1);
    for (int t = 0; t < s.m; ++t) copy_frame(*z_motion, t, TokenKind::motion, t, -1);
    for (int t = 0; t < s.Tlat; ++t)
        copy_frame(z_noisy, t, TokenKind::video, s.m + t, t);
    return s;
}

template <typename T>
std::shared_ptr<RopeTable<T>> build_rope(const PackedSequence& seq, const ModelConfig& cfg) {
    const int pairs = cfg.head_dim() / 2;
    // Split rotary pairs across the (t, h, w) axes; remainder goes to t, then h.
    const int base = pairs / 3, rem = pairs % 3;
    const int pt = base + (rem > 0 ? 1 : 0);
    const int ph = base + (rem > 1 ? 1 : 0);
    const int pw = base;

    auto tab = std::make_shared<RopeTable<T>>();
    tab->rows = seq.vis_rows();
    tab->pairs = pairs;
    tab->cos_ph.resize(size_t(tab->rows) * pairs);
    tab->sin_ph.resize(size_t(tab->rows) * pairs);

    for (int r = 0; r < tab->rows; ++r) {
        const int tok = seq.Lt + r;
        const auto [t, h, w] = seq.pos[tok];
        const double t_eff = (seq.kinds[tok] == TokenKind::reference) ? 0.0 : double(t);
        T* cs = tab->cos_ph.data() + size_t(r) * pairs;
        T* sn = tab->sin_ph.data() + size_t(r) * pairs;
        int p = 0;
        auto emit = [&](double pos, int n) {
            for (int i = 0; i < n; ++i, ++p) {
                double theta = pos * std::pow(cfg.rope_base, -double(i) / double(n));
                cs[p] = T(std::cos(theta));
                sn[p] = T(std::sin(theta));
            }
        };
        emit(t_eff, pt);
        emit(double(h), ph);
        emit(double(w), pw);
    }
    return tab;
}

// ---------------------------------------------------------------------------
// Audio routing
// ---------------------------------------------------------------------------

AudioRouting build_audio_routing(const std::vector<double>& feats, int T, int F, int w,
                                 const CodecConfig& codec, int Tlat) {
    require(T >= 1 && F >= 1 && w >= 0, ErrorCode::value, "audio routing dims invalid");
    require(static_cast<int>(feats.size()) == T * F, ErrorCode::shape,
            "feature rows do not match frame count");
    require(latent_frames(T, codec.gt) == Tlat, ErrorCode::shape,
            "audio frame count inconsistent with latent grouping");
    AudioRouting r;
    r.T = T;
    r.ktok = 2 * w + 1;
    r.F = F;
    r.rows.resize(size_t(T) * r.ktok * F);
    for (int t = 0; t < T; ++t)
        for (int j = 0; j < r.ktok; ++j) {
            int src = window_source_frame(t, j, w, T);
            std::copy(feats.begin() + size_t(src) * F, feats.begin() + size_t(src + 1) * F,
                      r.rows.begin() + (size_t(t) * r.ktok + j) * F);
        }
    r.frame_ranges.resize(Tlat);
    for (int k = 0; k < Tlat; ++k) {
        int a = (k == 0) ? 0 : 1 + (k - 1) * codec.gt;
        int b = (k == 0) ? 1 : std::min(1 + k * codec.gt, T);
        r.frame_ranges[k] = {a, b};
    }
    return r;
}

// ---------------------------------------------------------------------------
// Pose guider (in-graph)
// ---------------------------------------------------------------------------

namespace {

// One skeleton map frame (or a zero pad) through the three-stage conv stack;
// returns [Cp x (Hlat*Wlat)].
template <typename T>
int guider_encode_frame(Graph<T>& g, std::vector<int>& cache_zero,
                        const std::function<int(const std::string&)>& prm,
                        const PixelVideo* maps, int frame, int H, int W) {
    int x;
    if (maps == nullptr || frame < 0) {
        if (!cache_zero.empty()) return cache_zero[0];
        x = g.input(std::vector<T>(size_t(3) * H * W, T(0)), 3, H * W);
    } else {
        std::vector<T> planes(size_t(3) * H * W);
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < H; ++y)
                for (int xx = 0; xx < W; ++xx)
                    planes[(size_t(c) * H + y) * W + xx] = T(maps->at(frame, y, xx, c));
        x = g.input(std::move(planes), 3, H * W);
    }
    int h1 = g.silu(g.conv3x3(x, prm("guider.c1.w"), prm("guider.c1.b"), H, W, 1));
    int h2 = g.silu(g.conv3x3(h1, prm("guider.c2.w"), prm("guider.c2.b"), H, W, 2));
    int out = g.conv3x3(h2, prm("guider.c3.w"), prm("guider.c3.b"), H / 2, W / 2, 1);
    if (maps == nullptr || frame < 0) cache_zero.push_back(out);
    return out;
}

// Pose feature rows [n_video x (gt*Cp)] in (t, y, x) row order for the video
// latent frames of a segment window. The maps cover the whole window (motion
// prefix + generated part); temporal grouping mirrors the latent codec, so
// window latent frame 0 owns pixel frame 0 alone (pad slots encode a blank
// map) and frame j >= 1 owns its gt constituent frames. Only rows for window
// frames m .. m+Tlat-1 (the video tokens) are produced.
template <typename T>
int build_pose_rows(Graph<T>& g, const std::function<int(const std::string&)>& prm,
                    const PixelVideo& maps, const ModelConfig& cfg, int m, int Tlat,
                    int Hlat, int Wlat) {
    require(maps.H == 2 * Hlat && maps.W == 2 * Wlat, ErrorCode::shape,
            "pose map dims do not match the latent grid");
    require(latent_frames(maps.T, cfg.temporal_group) == m + Tlat, ErrorCode::shape,
            "pose map frame count inconsistent with latent grouping");
    std::vector<int> zero_cache;
    std::vector<int> frame_rows;
    frame_rows.reserve(Tlat);
    for (int k = 0; k < Tlat; ++k) {
        const int j = m + k;  // window latent frame
        std::vector<int> slots;
        slots.reserve(cfg.temporal_group);
        for (int s = 0; s < cfg.temporal_group; ++s) {
            int f = (j == 0) ? (s == 0 ? 0 : -1) : 1 + (j - 1) * cfg.temporal_group + s;
            if (f >= maps.T) f = -1;
            slots.push_back(guider_encode_frame(g, zero_cache, prm, f < 0 ? nullptr : &maps,
                                                f, maps.H, maps.W));
        }
        // [gt*Cp x HW] channel-major, transposed to token-major rows.
        frame_rows.push_back(g.transpose(g.concat_rows(slots)));
    }
    return g.concat_rows(frame_rows);
}

}  // namespace

// ---------------------------------------------------------------------------
// Denoiser forward
// ---------------------------------------------------------------------------

std::vector<double> time_embedding(double t, int dim) {
    require(dim % 2 == 0, ErrorCode::config, "time embedding dim must be even");
    const int half = dim / 2;
    std::vector<double> out(dim);
    for (int i = 0; i < half; ++i) {
        double freq = std::exp(-std::log(10000.0) * double(i) / double(half));
        double arg = 1000.0 * t * freq;
        out[i] = std::cos(arg);
        out[half + i] = std::sin(arg);
    }
    return out;
}

template <typename T>
int denoiser_forward(Graph<T>& g, const ModelConfig& cfg, ParamStore<T>& P,
                     const ForwardInputs& in) {
    cfg.validate();
    require(in.seq != nullptr, ErrorCode::value, "packed sequence required");
    require(in.t >= 0.0 && in.t <= 1.0, ErrorCode::value, "noise level outside [0,1]");
    const PackedSequence& s = *in.seq;
    const int D = cfg.D, H = cfg.nheads;
    const int HW = s.Hlat * s.Wlat;

    std::map<std::string, int> prm_cache;
    auto prm = [&](const std::string& name) {
        auto it = prm_cache.find(name);
        if (it != prm_cache.end()) return it->second;
        int idx = P.index_of(name);
        int node = g.param(P.data(idx), P.rows(idx), P.cols(idx));
        prm_cache.emplace(name, node);
        return node;
    };

    // Conditioning vector from the sinusoidal noise-level embedding.
    int t_in = g.input(cast_vec<T>(time_embedding(in.t, D)), 1, D);
    int c = g.linear(g.silu(g.linear(t_in, prm("time.mlp1.w"), prm("time.mlp1.b"))),
                     prm("time.mlp2.w"), prm("time.mlp2.b"));
    int c_act = g.silu(c);

    // Token embeddings: text lookup; visual rows through the latent input
    // projection, with the pose branch added onto video rows only (the
    // channel-concat input is computed as a sum of the two partial products).
    int x_text = g.embed(prm("text.embed"), s.text_ids);
    int x_vis = g.linear(g.input(cast_vec<T>(s.latent_rows), s.vis_rows(), s.C),
                         prm("in.latent.w"), prm("in.latent.b"));
    if (in.pose_maps != nullptr) {
        int pose_rows = build_pose_rows(g, prm, *in.pose_maps, cfg, s.m, s.Tlat, s.Hlat,
                                        s.Wlat);
        int zero_bias = g.input(std::vector<T>(D, T(0)), 1, D);
        x_vis = g.add_rows(x_vis, g.linear(pose_rows, prm("in.pose.w"), zero_bias),
                           s.video_row0());
    }

    // Audio token rows in model space. When audio is dropped the learned null
    // token stands in and cross-attention still runs (one key per frame).
    // Audio routing spans the whole segment window (motion prefix + video),
    // so video latent frame k maps to window latent frame k + m.
    int audio_rows;
    std::vector<std::pair<int, int>> kv_ranges(s.Tlat);
    if (in.audio != nullptr) {
        const AudioRouting& a = *in.audio;
        require(static_cast<int>(a.frame_ranges.size()) == s.m + s.Tlat, ErrorCode::shape,
                "audio routing frame count does not match the segment window");
        audio_rows = g.linear(g.input(cast_vec<T>(a.rows), a.T * a.ktok, a.F),
                              prm("audio.proj.w"), prm("audio.proj.b"));
        for (int k = 0; k < s.Tlat; ++k) kv_ranges[k] = a.row_range(k + s.m);
    } else {
        audio_rows = prm("audio.null");
        for (int k = 0; k < s.Tlat; ++k) kv_ranges[k] = {0, 1};
    }
    std::vector<std::pair<int, int>> q_ranges(s.Tlat);
    for (int k = 0; k < s.Tlat; ++k) q_ranges[k] = {k * HW, (k + 1) * HW};

    auto rope_tab = build_rope<T>(s, cfg);

    for (int b = 0; b < cfg.nblocks; ++b) {
        const std::string pt = blk(b, "t") + ".";
        const std::string pv = blk(b, "v") + ".";
        const std::string pa = blk(b, "a") + ".";
        int tmod = g.reshape(g.linear(c_act, prm(pt + "mod.w"), prm(pt + "mod.b")), 6, D);
        int vmod = g.reshape(g.linear(c_act, prm(pv + "mod.w"), prm(pv + "mod.b")), 9, D);
        auto trow = [&](int i) { return g.slice_rows(tmod, i, 1); };
        auto vrow = [&](int i) { return g.slice_rows(vmod, i, 1); };

        // Joint self-attention with per-stream projections; rotary positions
        // apply to visual q/k only (text carries no positional encoding).
        int ht = g.modulate(g.layernorm(x_text), trow(0), trow(1));
        int hv = g.modulate(g.layernorm(x_vis), vrow(0), vrow(1));
        int qj = g.concat_rows({g.linear(ht, prm(pt + "q.w"), prm(pt + "q.b")),
                                g.rope(g.linear(hv, prm(pv + "q.w"), prm(pv + "q.b")),
                                       rope_tab, H)});
        int kj = g.concat_rows({g.linear(ht, prm(pt + "k.w"), prm(pt + "k.b")),
                                g.rope(g.linear(hv, prm(pv + "k.w"), prm(pv + "k.b")),
                                       rope_tab, H)});
        int vj = g.concat_rows({g.linear(ht, prm(pt + "v.w"), prm(pt + "v.b")),
                                g.linear(hv, prm(pv + "v.w"), prm(pv + "v.b"))});
        int att = g.attention(qj, kj, vj, H);
        x_text = g.add(x_text, g.rowgate(g.linear(g.slice_rows(att, 0, s.Lt),
                                                  prm(pt + "out.w"), prm(pt + "out.b")),
                                         trow(2)));
        x_vis = g.add(x_vis, g.rowgate(g.linear(g.slice_rows(att, s.Lt, s.vis_rows()),
                                                prm(pv + "out.w"), prm(pv + "out.b")),
                                       vrow(2)));

        // Frame-wise audio cross-attention on video rows only.
        int xvid = g.slice_rows(x_vis, s.video_row0(), s.n_video);
        int hca = g.modulate(g.layernorm(xvid), vrow(3), vrow(4));
        int ca = g.attention_ranges(g.linear(hca, prm(pa + "q.w"), prm(pa + "q.b")),
                                    g.linear(audio_rows, prm(pa + "k.w"), prm(pa + "k.b")),
                                    g.linear(audio_rows, prm(pa + "v.w"), prm(pa + "v.b")),
                                    H, q_ranges, kv_ranges);
        x_vis = g.add_rows(x_vis,
                           g.rowgate(g.linear(ca, prm(pa + "out.w"), prm(pa + "out.b")),
                                     vrow(5)),
                           s.video_row0());

        // Per-stream feed-forward.
        x_text = g.add(
            x_text,
            g.rowgate(g.linear(g.gelu(g.linear(g.modulate(g.layernorm(x_text), trow(3), trow(4)),
                                               prm(pt + "ffn1.w"), prm(pt + "ffn1.b"))),
                               prm(pt + "ffn2.w"), prm(pt + "ffn2.b")),
                      trow(5)));
        x_vis = g.add(
            x_vis,
            g.rowgate(g.linear(g.gelu(g.linear(g.modulate(g.layernorm(x_vis), vrow(6), vrow(7)),
                                               prm(pv + "ffn1.w"), prm(pv + "ffn1.b"))),
                               prm(pv + "ffn2.w"), prm(pv + "ffn2.b")),
                      vrow(8)));

        check_block_finite(g, x_vis, b);
        check_block_finite(g, x_text, b);
    }

    int fmod = g.reshape(g.linear(c_act, prm("final.mod.w"), prm("final.mod.b")), 2, D);
    int xv = g.slice_rows(x_vis, s.video_row0(), s.n_video);
    int hf = g.modulate(g.layernorm(xv), g.slice_rows(fmod, 0, 1), g.slice_rows(fmod, 1, 1));
    return g.linear(hf, prm("head.w"), prm("head.b"));
}

template <typename T>
std::vector<T> predict_velocity(const ModelConfig& cfg, ParamStore<T>& params,
                                const ForwardInputs& in) {
    Graph<T> g;
    int vel = denoiser_forward(g, cfg, params, in);
    return std::vector<T>(g.data(vel), g.data(vel) + g.size(vel));
}

template <typename T>
PoseFeatureGrid encode_pose_features(const PixelVideo& maps, const CodecConfig& codec,
                                     const ModelConfig& cfg, ParamStore<T>& params) {
    require(codec.gt == cfg.temporal_group, ErrorCode::config,
            "codec temporal group differs from model pose grouping");
    PoseFeatureGrid out;
    out.Tlat = latent_frames(maps.T, codec.gt);
    out.Hlat = maps.H / 2;
    out.Wlat = maps.W / 2;
    out.C = cfg.pose_grid_channels();
    Graph<T> g;
    std::map<std::string, int> cache;
    auto prm = [&](const std::string& name) {
        auto it = cache.find(name);
        if (it != cache.end()) return it->second;
        int idx = params.index_of(name);
        int node = g.param(params.data(idx), params.rows(idx), params.cols(idx));
        cache.emplace(name, node);
        return node;
    };
    int rows = build_pose_rows(g, prm, maps, cfg, 0, out.Tlat, out.Hlat, out.Wlat);
    const T* d = g.data(rows);
    out.grid.assign(d, d + g.size(rows));
    return out;
}

// ---------------------------------------------------------------------------
// Flow objective
// ---------------------------------------------------------------------------

NoiseState flow_pair(const VideoLatent& x0, const std::vector<double>& noise, double t) {
    require(noise.size() == x0.grid.size(), ErrorCode::shape,
            "noise shape differs from latent");
    require(t >= 0.0 && t <= 1.0, ErrorCode::value, "t outside [0,1]");
    NoiseState ns;
    ns.t = t;
    ns.x_t = x0;
    ns.target_v.resize(noise.size());
    for (size_t i = 0; i < noise.size(); ++i) {
        ns.x_t.grid[i] = (1.0 - t) * x0.grid[i] + t * noise[i];
        ns.target_v[i] = noise[i] - x0.grid[i];
    }
    return ns;
}

double mse_loss(const std::vector<double>& pred, const std::vector<double>& target,
                const std::vector<uint8_t>& mask) {
    require(pred.size() == target.size() && pred.size() == mask.size(), ErrorCode::shape,
            "mse_loss: shape mismatch");
    int64_t count = 0;
    double acc = 0.0;
    for (size_t i = 0; i < pred.size(); ++i)
        if (mask[i]) {
            double d = pred[i] - target[i];
            acc += d * d;
            ++count;
        }
    require(count > 0, ErrorCode::value, "mse_loss: empty mask");
    return acc / double(count);
}

// ---------------------------------------------------------------------------
// Explicit instantiations
// ---------------------------------------------------------------------------

template void register_params<float>(ParamStore<float>&, const ModelConfig&);
template void register_params<double>(ParamStore<double>&, const ModelConfig&);
template void init_training<float>(ParamStore<float>&, const ModelConfig&, RandomStream&);
template void init_training<double>(ParamStore<double>&, const ModelConfig&, RandomStream&);
template void randomize_all<float>(ParamStore<float>&, RandomStream&, double);
template void randomize_all<double>(ParamStore<double>&, RandomStream&, double);
template std::shared_ptr<RopeTable<float>> build_rope<float>(const PackedSequence&,
                                                             const ModelConfig&);
template std::shared_ptr<RopeTable<double>> build_rope<double>(const PackedSequence&,
                                                               const ModelConfig&);
template int denoiser_forward<float>(Graph<float>&, const ModelConfig&, ParamStore<float>&,
                                     const ForwardInputs&);
template int denoiser_forward<double>(Graph<double>&, const ModelConfig&, ParamStore<double>&,
                                      const ForwardInputs&);
template std::vector<float> predict_velocity<float>(const ModelConfig&, ParamStore<float>&,
                                                    const ForwardInputs&);
template std::vector<double> predict_velocity<double>(const ModelConfig&, ParamStore<double>&,
                                                      const ForwardInputs&);
template PoseFeatureGrid encode_pose_features<float>(const PixelVideo&, const CodecConfig&,
                                                     const ModelConfig&, ParamStore<float>&);
template PoseFeatureGrid encode_pose_features<double>(const PixelVideo&, const CodecConfig&,
                                                      const ModelConfig&, ParamStore<double>&);

}  // namespace omni
