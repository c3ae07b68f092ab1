#include "omni/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "omni/binary_io.hpp"

namespace omni {

namespace {

constexpr uint32_t kCheckpointVersion = 1;

void put_model_config(std::ostream& os, const ModelConfig& c) {
    put_u32(os, c.D);
    put_u32(os, c.nblocks);
    put_u32(os, c.nheads);
    put_u32(os, c.Lmax);
    put_f64(os, c.rope_base);
    put_u32(os, c.Cp);
    put_u32(os, c.M);
    put_u32(os, c.ffn_mult);
    put_u32(os, c.vocab_size);
    put_u32(os, c.latent_channels);
    put_u32(os, c.temporal_group);
    put_u32(os, c.audio_dim);
    put_u32(os, c.audio_window);
}

ModelConfig get_model_config(std::istream& is) {
    ModelConfig c;
    c.D = static_cast<int>(get_u32(is));
    c.nblocks = static_cast<int>(get_u32(is));
    c.nheads = static_cast<int>(get_u32(is));
    c.Lmax = static_cast<int>(get_u32(is));
    c.rope_base = get_f64(is);
    c.Cp = static_cast<int>(get_u32(is));
    c.M = static_cast<int>(get_u32(is));
    c.ffn_mult = static_cast<int>(get_u32(is));
    c.vocab_size = static_cast<int>(get_u32(is));
    c.latent_channels = static_cast<int>(get_u32(is));
    c.temporal_group = static_cast<int>(get_u32(is));
    c.audio_dim = static_cast<int>(get_u32(is));
    c.audio_window = static_cast<int>(get_u32(is));
    return c;
}

void put_tensor_block(std::ostream& os, const ParamStore<float>& params,
                      const std::vector<std::vector<float>>* override_data) {
    put_u32(os, static_cast<uint32_t>(params.count()));
    for (int i = 0; i < params.count(); ++i) {
        put_string(os, params.name(i));
        put_u32(os, static_cast<uint32_t>(params.rows(i)));
        put_u32(os, static_cast<uint32_t>(params.cols(i)));
        const std::vector<float>& v = override_data ? (*override_data)[i] : params.vec(i);
        require(v.size() == params.elems(i), ErrorCode::state, "tensor size drift on save");
        for (float x : v) put_f32(os, x);
    }
}

// Reads a tensor block and verifies it matches the registered layout exactly.
void get_tensor_block(std::istream& is, ParamStore<float>& params,
                      std::vector<std::vector<float>>* into, const std::string& what) {
    uint32_t n = get_u32(is);
    require(static_cast<int>(n) == params.count(), ErrorCode::io,
            "checkpoint " + what + " tensor count mismatch");
    for (int i = 0; i < params.count(); ++i) {
        std::string name = get_string(is);
        int rows = static_cast<int>(get_u32(is));
        int cols = static_cast<int>(get_u32(is));
        require(name == params.name(i) && rows == params.rows(i) && cols == params.cols(i),
                ErrorCode::io,
                "checkpoint " + what + " layout mismatch at tensor " + name);
        float* dst = into ? (*into)[i].data() : params.data(i);
        for (size_t j = 0, m = params.elems(i); j < m; ++j) dst[j] = get_f32(is);
    }
}

}  // namespace

AdamMoments AdamMoments::zeros_like(const ParamStore<float>& params) {
    AdamMoments mom;
    mom.m.resize(params.count());
    mom.v.resize(params.count());
    for (int i = 0; i < params.count(); ++i) {
        mom.m[i].assign(params.elems(i), 0.0f);
        mom.v[i].assign(params.elems(i), 0.0f);
    }
    return mom;
}

void save_checkpoint(const std::string& path, const ModelConfig& model,
                     const CodecConfig& codec, const Vocab& vocab,
                     const ParamStore<float>& params, const AdamMoments* moments,
                     const TrainerTrailer* trailer) {
    std::ofstream os(path, std::ios::binary);
    require(os.good(), ErrorCode::io, "save_checkpoint: cannot open " + path);
    os.write("OHCK", 4);
    put_u32(os, kCheckpointVersion);
    put_model_config(os, model);

    put_u32(os, codec.sp);
    put_u32(os, codec.gt);
    put_u32(os, static_cast<uint32_t>(codec.norm.mean.size()));
    for (double v : codec.norm.mean) put_f64(os, v);
    for (double v : codec.norm.std) put_f64(os, v);

    put_string(os, vocab_to_string(vocab));

    put_tensor_block(os, params, nullptr);
    os.put(moments ? 1 : 0);
    if (moments) {
        put_tensor_block(os, params, &moments->m);
        put_tensor_block(os, params, &moments->v);
    }
    os.put(trailer ? 1 : 0);
    if (trailer) {
        put_u64(os, trailer->step);
        put_string(os, trailer->rng_state);
        put_u32(os, static_cast<uint32_t>(trailer->loss_ring.size()));
        for (float v : trailer->loss_ring) put_f32(os, v);
    }
    require(os.good(), ErrorCode::io, "save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), ErrorCode::io, "load_checkpoint: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    require(is.good() && std::memcmp(magic, "OHCK", 4) == 0, ErrorCode::io,
            "load_checkpoint: bad magic in " + path);
    uint32_t version = get_u32(is);
    require(version == kCheckpointVersion, ErrorCode::io,
            "load_checkpoint: unsupported version " + std::to_string(version));

    Checkpoint ck;
    ck.model = get_model_config(is);
    ck.model.validate();

    ck.codec.sp = static_cast<int>(get_u32(is));
    ck.codec.gt = static_cast<int>(get_u32(is));
    uint32_t nc = get_u32(is);
    NormStats raw;
    raw.mean.resize(nc);
    raw.std.resize(nc);
    for (auto& v : raw.mean) v = get_f64(is);
    for (auto& v : raw.std) v = get_f64(is);
    // Stored stats are already snapped; install_stats is idempotent on them
    // and recomputes the content id.
    ck.codec.install_stats(raw);

    ck.vocab = vocab_from_string(get_string(is));
    require(ck.vocab.size() == ck.model.vocab_size, ErrorCode::io,
            "load_checkpoint: vocabulary size disagrees with model config");

    register_params(ck.params, ck.model);
    get_tensor_block(is, ck.params, nullptr, "parameter");
    if (is.get() == 1) {
        AdamMoments mom = AdamMoments::zeros_like(ck.params);
        get_tensor_block(is, ck.params, &mom.m, "first-moment");
        get_tensor_block(is, ck.params, &mom.v, "second-moment");
        ck.moments = std::move(mom);
    }
    if (is.get() == 1) {
        TrainerTrailer tr;
        tr.step = get_u64(is);
        tr.rng_state = get_string(is);
        tr.loss_ring.resize(get_u32(is));
        for (auto& v : tr.loss_ring) v = get_f32(is);
        ck.trailer = std::move(tr);
    }
    require(is.good(), ErrorCode::io, "load_checkpoint: truncated file " + path);
    return ck;
}

std::string checkpoint_fingerprint(const ModelConfig& model, const CodecConfig& codec,
                                   const Vocab& vocab) {
    std::ostringstream os(std::ios::binary);
    put_model_config(os, model);
    put_u32(os, uint32_t(codec.sp));
    put_u32(os, uint32_t(codec.gt));
    put_string(os, codec.norm.id);
    put_u32(os, uint32_t(vocab.size()));
    const std::string bytes = os.str();
    return hex64(fnv1a64(bytes.data(), bytes.size()));
}

}  // namespace omni
