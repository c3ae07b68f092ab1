#include "omni/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace omni {

namespace {

enum class KeyType { integer, number, boolean, text, int_list, text_list };

struct SchemaEntry {
    const char* key;
    KeyType type;
};

// Every key the toolchain understands. validate_run_config rejects anything
// not listed here, so typos fail loudly instead of silently using defaults.
const SchemaEntry kSchema[] = {
    {"codec.spatial", KeyType::integer},
    {"codec.temporal", KeyType::integer},
    {"model.dim", KeyType::integer},
    {"model.blocks", KeyType::integer},
    {"model.heads", KeyType::integer},
    {"model.text_len", KeyType::integer},
    {"model.rope_base", KeyType::number},
    {"model.pose_channels", KeyType::integer},
    {"model.motion_frames", KeyType::integer},
    {"model.ffn_mult", KeyType::integer},
    {"model.audio_window", KeyType::integer},
    {"data.dir", KeyType::text},
    {"data.crop_lengths", KeyType::int_list},
    {"data.holdout", KeyType::integer},
    {"data.norm_clips", KeyType::integer},
    {"synth.clips", KeyType::integer},
    {"synth.duration", KeyType::integer},
    {"synth.lipsync_rate", KeyType::number},
    {"synth.pose_rate", KeyType::number},
    {"synth.aesthetic_rate", KeyType::number},
    {"train.batch", KeyType::integer},
    {"train.lr", KeyType::number},
    {"train.weight_decay", KeyType::number},
    {"train.grad_clip", KeyType::number},
    {"train.ratio_text", KeyType::number},
    {"train.ratio_audio", KeyType::number},
    {"train.ratio_pose", KeyType::number},
    {"train.stage1_steps", KeyType::integer},
    {"train.stage2_steps", KeyType::integer},
    {"train.stage3_steps", KeyType::integer},
    {"train.latest_every", KeyType::integer},
    {"eval.checkpoint", KeyType::text},
    {"eval.steps", KeyType::integer},
    {"eval.cfg_scale", KeyType::number},
    {"eval.modes", KeyType::text_list},
    {"eval.null_audio", KeyType::boolean},
    {"generate.checkpoint", KeyType::text},
    {"generate.expect", KeyType::text},
    {"generate.reference", KeyType::text},
    {"generate.caption", KeyType::text},
    {"generate.waveform", KeyType::text},
    {"generate.skeleton", KeyType::text},
    {"generate.mode", KeyType::text},
    {"generate.duration", KeyType::integer},
    {"generate.cfg_scale", KeyType::number},
    {"generate.steps", KeyType::integer},
    {"generate.segment_length", KeyType::integer},
    {"generate.null_audio", KeyType::boolean},
    {"generate.dump_latents", KeyType::boolean},
    {"ablate.dim", KeyType::integer},
    {"ablate.blocks", KeyType::integer},
    {"ablate.heads", KeyType::integer},
    {"ablate.seeds", KeyType::integer},
    {"ablate.batch", KeyType::integer},
    {"ablate.audio_steps", KeyType::integer},
    {"ablate.tdata", KeyType::int_list},
    {"ablate.orders", KeyType::text_list},
    {"ablate.ratio_cells", KeyType::boolean},
    {"ablate.val_items", KeyType::integer},
    {"ablate.eval_clips", KeyType::integer},
    {"ablate.eval_steps", KeyType::integer},
    {"ablate.steps_cap", KeyType::integer},
};

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

bool valid_name(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s)
        if (!std::islower(static_cast<unsigned char>(c)) &&
            !std::isdigit(static_cast<unsigned char>(c)) && c != '_')
            return false;
    return true;
}

bool parse_ll(const std::string& s, long long& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtoll(s.c_str(), &end, 10);
    return end == s.c_str() + s.size();
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
}

bool parse_bool(const std::string& s, bool& out) {
    if (s == "true" || s == "1") {
        out = true;
        return true;
    }
    if (s == "false" || s == "0") {
        out = false;
        return true;
    }
    return false;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

}  // namespace

RunConfig parse_run_config_text(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    std::vector<std::string> errors;
    std::string section;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        auto where = [&]() { return origin + ":" + std::to_string(lineno); };
        size_t hash = line.find('#');
        if (hash != std::string::npos) {
            // '#' inside a quoted value is content, not a comment
            size_t q1 = line.find('"');
            size_t q2 = q1 == std::string::npos ? std::string::npos : line.find('"', q1 + 1);
            if (!(q1 != std::string::npos && q2 != std::string::npos && hash > q1 &&
                  hash < q2))
                line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']' || !valid_name(trim(line.substr(1, line.size() - 2)))) {
                errors.push_back(where() + ": malformed section header");
                continue;
            }
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        size_t eq = line.find('=');
        if (eq == std::string::npos) {
            errors.push_back(where() + ": expected key = value");
            continue;
        }
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (!valid_name(key)) {
            errors.push_back(where() + ": malformed key '" + key + "'");
            continue;
        }
        if (section.empty()) {
            errors.push_back(where() + ": key '" + key + "' outside any [section]");
            continue;
        }
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
            value = value.substr(1, value.size() - 2);
        std::string full = section + "." + key;
        if (cfg.values.count(full)) {
            errors.push_back(where() + ": duplicate key '" + full + "'");
            continue;
        }
        cfg.values[full] = value;
    }
    if (!errors.empty()) {
        std::string msg = "config errors:";
        for (const std::string& e : errors) msg += "\n  " + e;
        fail(ErrorCode::config, msg);
    }
    return cfg;
}

RunConfig parse_run_config(const std::string& path) {
    std::ifstream is(path);
    require(is.good(), ErrorCode::io, "cannot open config " + path);
    std::stringstream buf;
    buf << is.rdbuf();
    return parse_run_config_text(buf.str(), path);
}

void validate_run_config(const RunConfig& cfg) {
    std::vector<std::string> errors;
    for (const auto& [key, value] : cfg.values) {
        const SchemaEntry* entry = nullptr;
        for (const SchemaEntry& e : kSchema)
            if (key == e.key) {
                entry = &e;
                break;
            }
        if (!entry) {
            errors.push_back("unknown key '" + key + "'");
            continue;
        }
        long long ll;
        double d;
        bool b;
        switch (entry->type) {
            case KeyType::integer:
                if (!parse_ll(value, ll))
                    errors.push_back("key '" + key + "': expected integer, got '" + value +
                                     "'");
                break;
            case KeyType::number:
                if (!parse_double(value, d))
                    errors.push_back("key '" + key + "': expected number, got '" + value +
                                     "'");
                break;
            case KeyType::boolean:
                if (!parse_bool(value, b))
                    errors.push_back("key '" + key + "': expected true/false, got '" + value +
                                     "'");
                break;
            case KeyType::int_list:
                for (const std::string& item : split_list(value))
                    if (!parse_ll(item, ll))
                        errors.push_back("key '" + key + "': bad list entry '" + item + "'");
                break;
            case KeyType::text:
            case KeyType::text_list:
                break;
        }
    }
    if (!errors.empty()) {
        std::string msg = "config errors:";
        for (const std::string& e : errors) msg += "\n  " + e;
        fail(ErrorCode::config, msg);
    }
}

std::string RunConfig::str(const std::string& key, const std::string& fallback) const {
    auto it = values.find(key);
    return it == values.end() ? fallback : it->second;
}

long long RunConfig::integer(const std::string& key, long long fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    long long v;
    require(parse_ll(it->second, v), ErrorCode::config,
            "key '" + key + "': expected integer, got '" + it->second + "'");
    return v;
}

double RunConfig::number(const std::string& key, double fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    double v;
    require(parse_double(it->second, v), ErrorCode::config,
            "key '" + key + "': expected number, got '" + it->second + "'");
    return v;
}

bool RunConfig::flag(const std::string& key, bool fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    bool v;
    require(parse_bool(it->second, v), ErrorCode::config,
            "key '" + key + "': expected true/false, got '" + it->second + "'");
    return v;
}

std::vector<int> RunConfig::int_list(const std::string& key, std::vector<int> fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    std::vector<int> out;
    for (const std::string& item : split_list(it->second)) {
        long long v;
        require(parse_ll(item, v), ErrorCode::config,
                "key '" + key + "': bad list entry '" + item + "'");
        out.push_back(int(v));
    }
    return out;
}

std::vector<std::string> RunConfig::str_list(const std::string& key,
                                             std::vector<std::string> fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    return split_list(it->second);
}

std::string RunConfig::content_hash() const {
    // std::map iterates in key order already: canonical by construction.
    uint64_t h = fnv1a64(std::string_view("omni-run-config"));
    for (const auto& [key, value] : values) {
        h = fnv1a64(key, h);
        h = fnv1a64(std::string_view("="), h);
        h = fnv1a64(value, h);
        h = fnv1a64(std::string_view("\n"), h);
    }
    return hex64(h);
}

ModelConfig model_from_config(const RunConfig& cfg) {
    ModelConfig m;
    m.D = int(cfg.integer("model.dim", m.D));
    m.nblocks = int(cfg.integer("model.blocks", m.nblocks));
    m.nheads = int(cfg.integer("model.heads", m.nheads));
    m.Lmax = int(cfg.integer("model.text_len", m.Lmax));
    m.rope_base = cfg.number("model.rope_base", m.rope_base);
    m.Cp = int(cfg.integer("model.pose_channels", m.Cp));
    m.M = int(cfg.integer("model.motion_frames", m.M));
    m.ffn_mult = int(cfg.integer("model.ffn_mult", m.ffn_mult));
    m.audio_window = int(cfg.integer("model.audio_window", m.audio_window));
    CodecConfig codec = codec_base_from_config(cfg);
    m.latent_channels = codec.channels();
    m.temporal_group = codec.gt;
    m.validate();
    return m;
}

CodecConfig codec_base_from_config(const RunConfig& cfg) {
    return CodecConfig::with_identity_norm(int(cfg.integer("codec.spatial", 2)),
                                           int(cfg.integer("codec.temporal", 4)));
}

SynthConfig synth_from_config(const RunConfig& cfg) {
    SynthConfig s;
    s.duration = int(cfg.integer("synth.duration", s.duration));
    s.lipsync_rate = cfg.number("synth.lipsync_rate", s.lipsync_rate);
    s.pose_rate = cfg.number("synth.pose_rate", s.pose_rate);
    s.aesthetic_rate = cfg.number("synth.aesthetic_rate", s.aesthetic_rate);
    return s;
}

std::vector<TrainPlan> plans_from_config(const RunConfig& cfg, uint64_t seed) {
    TrainPlan base;
    base.batch = int(cfg.integer("train.batch", base.batch));
    base.lr = cfg.number("train.lr", base.lr);
    base.weight_decay = cfg.number("train.weight_decay", base.weight_decay);
    base.grad_clip = cfg.number("train.grad_clip", base.grad_clip);
    base.seed = seed;
    const double rt = cfg.number("train.ratio_text", 0.9);
    const double ra = cfg.number("train.ratio_audio", 0.5);
    const double rp = cfg.number("train.ratio_pose", 0.25);

    std::vector<TrainPlan> plans(3, base);
    plans[0].stage = 1;
    plans[0].ratio_text = rt;
    plans[0].ratio_audio = 0.0;
    plans[0].ratio_pose = 0.0;
    plans[0].steps = int(cfg.integer("train.stage1_steps", 0));
    plans[1].stage = 2;
    plans[1].ratio_text = rt;
    plans[1].ratio_audio = ra;
    plans[1].ratio_pose = 0.0;
    plans[1].steps = int(cfg.integer("train.stage2_steps", 0));
    plans[2].stage = 3;
    plans[2].ratio_text = rt;
    plans[2].ratio_audio = ra;
    plans[2].ratio_pose = rp;
    plans[2].steps = int(cfg.integer("train.stage3_steps", 0));
    for (const TrainPlan& p : plans) p.validate();
    return plans;
}

EvalSettings eval_from_config(const RunConfig& cfg, uint64_t seed) {
    EvalSettings s;
    s.steps = int(cfg.integer("eval.steps", s.steps));
    s.cfg_scale = cfg.number("eval.cfg_scale", s.cfg_scale);
    s.null_audio = cfg.flag("eval.null_audio", s.null_audio);
    s.seed = seed;
    std::vector<std::string> modes = cfg.str_list("eval.modes", {"audio"});
    s.modes.clear();
    for (const std::string& m : modes) s.modes.push_back(drive_mode_from_string(m));
    return s;
}

}  // namespace omni
