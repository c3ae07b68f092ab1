// Versioned binary checkpoints: magic "OHCK", version, model/codec config,
// vocabulary, named parameter tensors as 32-bit little-endian floats, then
// optimizer moments in the same layout, then the training trailer (step, RNG
// state, loss-history ring) that makes a run exactly resumable.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "omni/model.hpp"
#include "omni/text_codec.hpp"

namespace omni {

// First/second AdamW moments, index-aligned with ParamStore registration.
struct AdamMoments {
    std::vector<std::vector<float>> m;
    std::vector<std::vector<float>> v;

    static AdamMoments zeros_like(const ParamStore<float>& params);
};

struct TrainerTrailer {
    uint64_t step = 0;
    std::string rng_state;            // serialized RandomStream engine
    std::vector<float> loss_ring;     // most recent losses, oldest first
};

struct Checkpoint {
    ModelConfig model;
    CodecConfig codec;
    Vocab vocab;
    ParamStore<float> params;
    std::optional<AdamMoments> moments;
    std::optional<TrainerTrailer> trailer;
};

void save_checkpoint(const std::string& path, const ModelConfig& model,
                     const CodecConfig& codec, const Vocab& vocab,
                     const ParamStore<float>& params, const AdamMoments* moments,
                     const TrainerTrailer* trailer);

Checkpoint load_checkpoint(const std::string& path);

// Stable identity of the architecture + codec + vocabulary (not the weights):
// requests can pin the checkpoint they were written for.
std::string checkpoint_fingerprint(const ModelConfig& model, const CodecConfig& codec,
                                   const Vocab& vocab);
inline std::string checkpoint_fingerprint(const Checkpoint& ck) {
    return checkpoint_fingerprint(ck.model, ck.codec, ck.vocab);
}

}  // namespace omni
