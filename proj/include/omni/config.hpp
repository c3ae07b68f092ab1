// Run configuration: a sectioned key=value file covering codec, model,
// training stages, synthesis, evaluation and generation. Unknown keys are
// rejected, every problem is reported in one pass, and the content hash is
// invariant to key order so runs can be tied to their exact configuration.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "omni/codec.hpp"
#include "omni/infer.hpp"
#include "omni/metrics.hpp"
#include "omni/model.hpp"
#include "omni/sprites.hpp"
#include "omni/train.hpp"

namespace omni {

struct RunConfig {
    std::map<std::string, std::string> values;  // "section.key" -> raw value

    bool has(const std::string& key) const { return values.count(key) != 0; }
    std::string str(const std::string& key, const std::string& fallback) const;
    long long integer(const std::string& key, long long fallback) const;
    double number(const std::string& key, double fallback) const;
    bool flag(const std::string& key, bool fallback) const;
    std::vector<int> int_list(const std::string& key, std::vector<int> fallback) const;
    std::vector<std::string> str_list(const std::string& key,
                                      std::vector<std::string> fallback) const;

    // FNV over the sorted key=value pairs: reordering-invariant, content-bound.
    std::string content_hash() const;
};

RunConfig parse_run_config_text(const std::string& text, const std::string& origin);
RunConfig parse_run_config(const std::string& path);

// Schema check: unknown keys and malformed values collected into one
// config error listing every problem.
void validate_run_config(const RunConfig& cfg);

// Section views with desk defaults for anything unset.
ModelConfig model_from_config(const RunConfig& cfg);
CodecConfig codec_base_from_config(const RunConfig& cfg);  // stats still identity
SynthConfig synth_from_config(const RunConfig& cfg);
std::vector<TrainPlan> plans_from_config(const RunConfig& cfg, uint64_t seed);
EvalSettings eval_from_config(const RunConfig& cfg, uint64_t seed);

}  // namespace omni
