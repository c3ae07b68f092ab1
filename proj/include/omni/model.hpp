// The denoiser: an MMDiT-style dual-stream transformer over packed
// [text | reference | motion | video] tokens with 3D rotary positions,
// frame-wise audio cross-attention, pose channel-concat input projection,
// and a rectified-flow velocity objective.
#pragma once

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "omni/audio_features.hpp"
#include "omni/codec.hpp"
#include "omni/graph.hpp"
#include "omni/rng.hpp"

namespace omni {

struct ModelConfig {
    int D = 128;             // hidden size
    int nblocks = 4;
    int nheads = 4;
    int Lmax = 32;           // text tokens (padded/truncated)
    double rope_base = 10000.0;
    int Cp = 8;              // pose channels per pixel frame (guider output)
    int M = 5;               // max motion pixel-frames carried between segments
    int ffn_mult = 4;
    int vocab_size = 3;      // reserved ids only until a vocab is built
    int latent_channels = 48;
    int temporal_group = 4;  // codec gt; fixes pose grid channels = gt*Cp
    int audio_dim = kAudioFeatureDim;
    int audio_window = 2;    // window radius w; k = 2w+1 tokens per frame

    int head_dim() const { return D / nheads; }
    int pose_grid_channels() const { return temporal_group * Cp; }
    int audio_tokens_per_frame() const { return 2 * audio_window + 1; }
    void validate() const;
};

// Named, ordered parameter storage. Registration order is the canonical
// layout for checkpoints and gradient buffers.
template <typename T>
class ParamStore {
  public:
    int add(const std::string& name, int rows, int cols) {
        require(index_.find(name) == index_.end(), ErrorCode::state,
                "duplicate parameter name: " + name);
        index_[name] = static_cast<int>(names_.size());
        names_.push_back(name);
        shapes_.push_back({rows, cols});
        values_.emplace_back(size_t(rows) * cols, T(0));
        return static_cast<int>(names_.size()) - 1;
    }
    int index_of(const std::string& name) const {
        auto it = index_.find(name);
        require(it != index_.end(), ErrorCode::state, "unknown parameter: " + name);
        return it->second;
    }
    int count() const { return static_cast<int>(names_.size()); }
    const std::string& name(int i) const { return names_[i]; }
    int rows(int i) const { return shapes_[i][0]; }
    int cols(int i) const { return shapes_[i][1]; }
    size_t elems(int i) const { return values_[i].size(); }
    T* data(int i) { return values_[i].data(); }
    const T* data(int i) const { return values_[i].data(); }
    std::vector<T>& vec(int i) { return values_[i]; }
    const std::vector<T>& vec(int i) const { return values_[i]; }
    size_t total_elems() const {
        size_t n = 0;
        for (const auto& v : values_) n += v.size();
        return n;
    }

  private:
    std::vector<std::string> names_;
    std::vector<std::array<int, 2>> shapes_;
    std::vector<std::vector<T>> values_;
    std::map<std::string, int> index_;
};

enum class TokenKind : uint8_t { text = 0, reference = 1, motion = 2, video = 3 };

// Flattened joint sequence in the fixed order [text | reference | motion | video].
// Visual tokens carry their latent channel rows; positions are (t, h, w)
// integer triples with motion at t ∈ [0, m) and video at t ∈ [m, m+Tlat).
struct PackedSequence {
    int Lt = 0;        // text rows
    int n_ref = 0;
    int n_motion = 0;
    int n_video = 0;
    int Tlat = 0, Hlat = 0, Wlat = 0, C = 0;  // video grid dims
    int m = 0;         // motion latent-frame count
    std::vector<TokenKind> kinds;
    std::vector<std::array<int, 3>> pos;   // per token (t, h, w); text entries unused
    std::vector<int> frame_of;             // video rows: latent frame index; else -1
    std::vector<double> latent_rows;       // [(n_ref+n_motion+n_video) x C]
    std::vector<int> text_ids;             // length Lt

    int total() const { return Lt + n_ref + n_motion + n_video; }
    int vis_rows() const { return n_ref + n_motion + n_video; }
    int video_row0() const { return n_ref + n_motion; }  // within visual rows
};

PackedSequence pack_tokens(const VideoLatent& z_noisy, const VideoLatent& z_ref,
                           const VideoLatent* z_motion, const std::vector<int>& text_ids,
                           const ModelConfig& cfg);

// Rotation phases over the visual rows of a packed sequence. Head-dim pairs
// are split across the (t, h, w) axes, remainder going to t then h; reference
// tokens keep spatial phases but have their temporal phase forced to zero.
template <typename T>
std::shared_ptr<RopeTable<T>> build_rope(const PackedSequence& seq, const ModelConfig& cfg);

// Constant audio inputs for one segment window (motion prefix + generated
// part): clamped window feature rows (one row per (pixel frame, window slot))
// plus the pixel-frame range each window latent frame attends to. The
// denoiser offsets by the motion frame count to route video tokens.
struct AudioRouting {
    int T = 0;      // pixel frames
    int ktok = 0;   // tokens per pixel frame
    int F = 0;      // feature dim
    std::vector<double> rows;                       // [(T*ktok) x F]
    std::vector<std::pair<int, int>> frame_ranges;  // per latent frame [first, last) pixel frame

    std::pair<int, int> row_range(int latent_frame) const {
        auto [a, b] = frame_ranges[latent_frame];
        return {a * ktok, b * ktok};
    }
};

AudioRouting build_audio_routing(const std::vector<double>& feats, int T, int F, int w,
                                 const CodecConfig& codec, int Tlat);

// Everything the in-graph forward consumes besides parameters.
struct ForwardInputs {
    const PackedSequence* seq = nullptr;
    const AudioRouting* audio = nullptr;   // null => learned null-audio token path
    const PixelVideo* pose_maps = nullptr; // null => zero pose contribution
    double t = 0.0;                        // noise level in [0,1]
};

// Builds the full differentiable forward pass on the tape; returns the node
// holding velocity rows [n_video x C] in (t, y, x) row order.
template <typename T>
int denoiser_forward(Graph<T>& g, const ModelConfig& cfg, ParamStore<T>& params,
                     const ForwardInputs& in);

// Convenience wrapper for inference/tests: runs the forward without gradients
// and returns the velocity as a VideoLatent-shaped grid.
template <typename T>
std::vector<T> predict_velocity(const ModelConfig& cfg, ParamStore<T>& params,
                                const ForwardInputs& in);

// Pose guider applied outside the training graph (frozen parameters):
// returns the [Tlat x Hlat x Wlat x (gt*Cp)] feature grid.
struct PoseFeatureGrid {
    int Tlat = 0, Hlat = 0, Wlat = 0, C = 0;
    std::vector<double> grid;
    double at(int t, int y, int x, int c) const {
        return grid[((size_t(t) * Hlat + y) * Wlat + x) * C + c];
    }
};

template <typename T>
PoseFeatureGrid encode_pose_features(const PixelVideo& maps, const CodecConfig& codec,
                                     const ModelConfig& cfg, ParamStore<T>& params);

// Rectified-flow training pair: x_t = (1-t)x0 + t*noise, target_v = noise - x0.
struct NoiseState {
    double t = 0.0;
    VideoLatent x_t;
    std::vector<double> target_v;  // same layout as x_t.grid
};

NoiseState flow_pair(const VideoLatent& x0, const std::vector<double>& noise, double t);

// Plain (non-graph) masked MSE used by evaluation and as the loss oracle.
double mse_loss(const std::vector<double>& pred, const std::vector<double>& target,
                const std::vector<uint8_t>& mask);

// Parameter registration (canonical order) and initializers.
template <typename T>
void register_params(ParamStore<T>& store, const ModelConfig& cfg);

// Training init: truncated-normal-free scheme — N(0, 0.02) weights, zero
// biases, zero-initialized adaLN modulations, output head, and guider final
// stage (so velocity ≡ 0 and pose is a no-op at step 0).
template <typename T>
void init_training(ParamStore<T>& store, const ModelConfig& cfg, RandomStream& rng);

// Test helper: every tensor N(0, scale) so no gradient path is gated off.
template <typename T>
void randomize_all(ParamStore<T>& store, RandomStream& rng, double scale);

// Sinusoidal noise-level embedding feeding the adaLN conditioning MLP.
std::vector<double> time_embedding(double t, int dim);

}  // namespace omni
