#pragma once

// Run configuration and its plain-text file format: one `key = value` per
// line, '#' starts a comment. Field names follow the published
// hyper-parameter tables (combine-vr, alpha_v, U, ...); '_' and '-' are
// interchangeable in keys.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace sade {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class ModelKind { sade, mlp, link, gcn, linkx };

/// How two branches are mixed per node.
enum class CombineType {
    type1 = 1,  // softmax over sigmoid(branch * G)
    type2 = 2,  // softmax over the linear score branch * G
    type3 = 3,  // no gating, plain sum
};

inline std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::sade: return "sade";
        case ModelKind::mlp: return "mlp";
        case ModelKind::link: return "link";
        case ModelKind::gcn: return "gcn";
        case ModelKind::linkx: return "linkx";
    }
    return "?";
}

inline ModelKind parse_model_kind(const std::string& s) {
    if (s == "sade" || s == "sade-gcn") return ModelKind::sade;
    if (s == "mlp") return ModelKind::mlp;
    if (s == "link") return ModelKind::link;
    if (s == "gcn") return ModelKind::gcn;
    if (s == "linkx") return ModelKind::linkx;
    throw ConfigError("unknown model '" + s + "' (expected sade|mlp|link|gcn|linkx)");
}

struct ModelConfig {
    ModelKind kind = ModelKind::sade;
    std::size_t layers = 2;
    std::size_t hidden = 64;
    std::size_t key_dim = 0;  // 0: same as the layer's output width
    double alpha_v = 1.0;
    double alpha_i = 1.0;
    double alpha_f = 1.0;
    double alpha_t = 1.0;
    CombineType combine_vr = CombineType::type1;
    CombineType combine_ft = CombineType::type1;
    bool non_linear = false;
    bool bias = false;
    double dropout = 0.5;
    bool self_loops = false;
    bool no_feature_path = false;
    bool no_topology_path = false;
    bool no_feature_scaling = false;
    bool no_topology_scaling = false;
    bool symmetric_attention = false;

    [[nodiscard]] bool feature_path_on() const { return !no_feature_path && alpha_f != 0.0; }
    [[nodiscard]] bool topology_path_on() const { return !no_topology_path && alpha_t != 0.0; }

    void validate() const {
        if (layers < 1) throw ConfigError("layers must be >= 1");
        if (hidden < 1) throw ConfigError("hidden must be >= 1");
        if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
        if (kind == ModelKind::sade) {
            if (!feature_path_on() && !topology_path_on()) {
                throw ConfigError("at least one path (feature or topology) must be enabled");
            }
            if (alpha_v == 0.0 && alpha_i == 0.0) throw ConfigError("alpha_v and alpha_i cannot both be 0");
        }
    }
};

struct TrainConfig {
    std::size_t epochs = 200;
    double learning_rate = 1e-2;
    double weight_decay = 5e-4;
    std::size_t update_interval = 1;  // U
    std::uint64_t seed = 0;

    void validate() const {
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
        if (update_interval < 1) throw ConfigError("U must be >= 1");
        if (!(learning_rate > 0.0)) throw ConfigError("learning-rate must be > 0");
        if (weight_decay < 0.0) throw ConfigError("weight-decay must be >= 0");
    }
};

struct RunConfig {
    ModelConfig model;
    TrainConfig train;

    void validate() const {
        model.validate();
        train.validate();
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
    }
}

inline std::size_t to_count(const std::string& key, const std::string& v) {
    const double d = to_double(key, v);
    if (d < 0 || d != static_cast<double>(static_cast<std::size_t>(d))) {
        throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
    }
    return static_cast<std::size_t>(d);
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw ConfigError("config key '" + key + "': expected 0/1, got '" + v + "'");
}

inline CombineType to_combine(const std::string& key, const std::string& v) {
    std::string s = v;
    if (s.rfind("type", 0) == 0) s = s.substr(4);
    if (s == "1") return CombineType::type1;
    if (s == "2") return CombineType::type2;
    if (s == "3") return CombineType::type3;
    throw ConfigError("config key '" + key + "': expected 1, 2 or 3, got '" + v + "'");
}

}  // namespace detail

/// Applies one key/value pair. Unknown keys are a ConfigError.
inline void apply_config_key(RunConfig& cfg, std::string key, const std::string& value) {
    std::replace(key.begin(), key.end(), '_', '-');
    std::transform(key.begin(), key.end(), key.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    auto& m = cfg.model;
    auto& t = cfg.train;
    using namespace detail;
    if (key == "model") m.kind = parse_model_kind(value);
    else if (key == "layers") m.layers = to_count(key, value);
    else if (key == "hidden") m.hidden = to_count(key, value);
    else if (key == "key-dim") m.key_dim = to_count(key, value);
    else if (key == "alpha-v") m.alpha_v = to_double(key, value);
    else if (key == "alpha-i") m.alpha_i = to_double(key, value);
    else if (key == "alpha-f") m.alpha_f = to_double(key, value);
    else if (key == "alpha-t") m.alpha_t = to_double(key, value);
    else if (key == "combine-vr") m.combine_vr = to_combine(key, value);
    else if (key == "combine-ft") m.combine_ft = to_combine(key, value);
    else if (key == "non-linear") m.non_linear = to_bool(key, value);
    else if (key == "bias") m.bias = to_bool(key, value);
    else if (key == "dropout") m.dropout = to_double(key, value);
    else if (key == "self-loops") m.self_loops = to_bool(key, value);
    else if (key == "no-feature-path") m.no_feature_path = to_bool(key, value);
    else if (key == "no-topology-path") m.no_topology_path = to_bool(key, value);
    else if (key == "no-feature-scaling") m.no_feature_scaling = to_bool(key, value);
    else if (key == "no-topology-scaling") m.no_topology_scaling = to_bool(key, value);
    else if (key == "symmetric-attention") m.symmetric_attention = to_bool(key, value);
    else if (key == "epochs") t.epochs = to_count(key, value);
    else if (key == "learning-rate" || key == "lr") t.learning_rate = to_double(key, value);
    else if (key == "weight-decay") t.weight_decay = to_double(key, value);
    else if (key == "u" || key == "update-interval") t.update_interval = to_count(key, value);
    else if (key == "seed") t.seed = to_count(key, value);
    else throw ConfigError("unknown config key '" + key + "'");
}

inline void parse_config_text(RunConfig& cfg, const std::string& text, const std::string& origin = "<string>") {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        }
        try {
            apply_config_key(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

inline void parse_config_file(RunConfig& cfg, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    parse_config_text(cfg, ss.str(), path.string());
}

inline nlohmann::json to_json(const RunConfig& c) {
    const auto& m = c.model;
    const auto& t = c.train;
    return nlohmann::json{
        {"model", to_string(m.kind)},
        {"layers", m.layers},
        {"hidden", m.hidden},
        {"key-dim", m.key_dim},
        {"alpha_v", m.alpha_v},
        {"alpha_i", m.alpha_i},
        {"alpha_f", m.alpha_f},
        {"alpha_t", m.alpha_t},
        {"combine-vr", static_cast<int>(m.combine_vr)},
        {"combine-ft", static_cast<int>(m.combine_ft)},
        {"non-linear", m.non_linear},
        {"bias", m.bias},
        {"dropout", m.dropout},
        {"self-loops", m.self_loops},
        {"no-feature-path", m.no_feature_path},
        {"no-topology-path", m.no_topology_path},
        {"no-feature-scaling", m.no_feature_scaling},
        {"no-topology-scaling", m.no_topology_scaling},
        {"symmetric-attention", m.symmetric_attention},
        {"epochs", t.epochs},
        {"learning-rate", t.learning_rate},
        {"weight-decay", t.weight_decay},
        {"U", t.update_interval},
        {"seed", t.seed},
    };
}

}  // namespace sade
