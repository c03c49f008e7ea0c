#include "flattenet/config.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace flattenet {

namespace {

using nlohmann::json;

void require_keys(const json& obj, const std::string& where,
                  std::initializer_list<const char*> required,
                  std::initializer_list<const char*> optional = {}) {
    for (const char* key : required)
        if (!obj.contains(key))
            throw ConfigError(where + ": missing key \"" + key + "\"");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* key : required) known = known || it.key() == key;
        for (const char* key : optional) known = known || it.key() == key;
        if (!known) throw ConfigError(where + ": unknown key \"" + it.key() + "\"");
    }
}

std::int64_t get_int(const json& obj, const std::string& where, const char* key) {
    const json& v = obj.at(key);
    if (!v.is_number_integer())
        throw ConfigError(where + ": \"" + key + "\" must be an integer");
    return v.get<std::int64_t>();
}

RearrangeMode parse_rearrange(const std::string& s, const std::string& where) {
    if (s == "cs+ps") return RearrangeMode::CsPs;
    if (s == "ps-only") return RearrangeMode::PsOnly;
    if (s == "randperm+ps") return RearrangeMode::RandPermPs;
    throw ConfigError(where + ": rearrange must be one of cs+ps, ps-only, randperm+ps");
}

const char* rearrange_str(RearrangeMode m) {
    switch (m) {
        case RearrangeMode::CsPs: return "cs+ps";
        case RearrangeMode::PsOnly: return "ps-only";
        case RearrangeMode::RandPermPs: return "randperm+ps";
    }
    return "?";
}

PredictorMode parse_mode(const std::string& s, const std::string& where) {
    if (s == "affine-after-R") return PredictorMode::AffineAfterR;
    if (s == "fc-before-R") return PredictorMode::FoldedBeforeR;
    throw ConfigError(where + ": predictor mode must be affine-after-R or fc-before-R");
}

ModelConfig make_preset(std::string name, std::vector<DwsgConvSpec> layers, std::int64_t s2,
                        std::int64_t classes) {
    ModelConfig cfg;
    cfg.name = std::move(name);
    cfg.module.layers = std::move(layers);
    cfg.module.s2 = s2;
    cfg.classes = classes;
    return cfg;
}

DwsgConvSpec dwsg(std::int64_t k, std::int64_t s, std::int64_t g1, std::int64_t g2,
                  std::int64_t g3, std::int64_t expand) {
    DwsgConvSpec l;
    l.k = k;
    l.s = s;
    l.g1 = g1;
    l.g2 = g2;
    l.g3 = g3;
    l.expand = expand;
    return l;
}

} // namespace

ModelConfig parse_config(const std::string& json_text, const std::string& name) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(name + ": " + e.what());
    }
    if (!root.is_object()) throw ConfigError(name + ": top level must be an object");
    require_keys(root, name, {"layers", "s2", "rearrange", "predictor"}, {"perm_seed"});

    ModelConfig cfg;
    cfg.name = name;

    const json& layers = root.at("layers");
    if (!layers.is_array()) throw ConfigError(name + ": \"layers\" must be an array");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const std::string where = name + ".layers[" + std::to_string(i) + "]";
        const json& jl = layers[i];
        if (!jl.is_object()) throw ConfigError(where + ": must be an object");
        require_keys(jl, where, {"k", "s", "g1", "g2", "g3", "expand", "prelu"});
        DwsgConvSpec l;
        l.k = get_int(jl, where, "k");
        l.s = get_int(jl, where, "s");
        l.g1 = get_int(jl, where, "g1");
        l.g2 = get_int(jl, where, "g2");
        l.g3 = get_int(jl, where, "g3");
        l.expand = get_int(jl, where, "expand");
        if (!jl.at("prelu").is_boolean())
            throw ConfigError(where + ": \"prelu\" must be a boolean");
        l.prelu = jl.at("prelu").get<bool>();
        cfg.module.layers.push_back(l);
    }

    cfg.module.s2 = get_int(root, name, "s2");
    if (!root.at("rearrange").is_string())
        throw ConfigError(name + ": \"rearrange\" must be a string");
    cfg.module.rearrange = parse_rearrange(root.at("rearrange").get<std::string>(), name);
    if (root.contains("perm_seed")) {
        if (cfg.module.rearrange != RearrangeMode::RandPermPs)
            throw ConfigError(name + ": perm_seed only applies to randperm+ps");
        cfg.module.perm_seed = static_cast<std::uint64_t>(get_int(root, name, "perm_seed"));
    }

    const json& pred = root.at("predictor");
    if (!pred.is_object()) throw ConfigError(name + ": \"predictor\" must be an object");
    require_keys(pred, name + ".predictor", {"classes", "mode"});
    cfg.classes = get_int(pred, name + ".predictor", "classes");
    if (cfg.classes < 1) throw ConfigError(name + ": classes must be positive");
    if (!pred.at("mode").is_string())
        throw ConfigError(name + ": predictor mode must be a string");
    cfg.predictor_mode = parse_mode(pred.at("mode").get<std::string>(), name);

    if (cfg.module.s2 < 1) throw ConfigError(name + ": s2 must be positive");
    for (const DwsgConvSpec& l : cfg.module.layers)
        if (l.k < 1 || l.s < 1 || l.g1 < 1 || l.g2 < 1 || l.g3 < 1 || l.expand < 1)
            throw ConfigError(name + ": layer fields must be positive");
    return cfg;
}

ModelConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    std::string stem = path;
    if (const auto slash = stem.find_last_of('/'); slash != std::string::npos)
        stem = stem.substr(slash + 1);
    if (const auto dot = stem.find_last_of('.'); dot != std::string::npos)
        stem = stem.substr(0, dot);
    return parse_config(buf.str(), stem);
}

std::string config_json(const ModelConfig& cfg) {
    json root;
    root["layers"] = json::array();
    for (const DwsgConvSpec& l : cfg.module.layers)
        root["layers"].push_back({{"k", l.k},
                                  {"s", l.s},
                                  {"g1", l.g1},
                                  {"g2", l.g2},
                                  {"g3", l.g3},
                                  {"expand", l.expand},
                                  {"prelu", l.prelu}});
    root["s2"] = cfg.module.s2;
    root["rearrange"] = rearrange_str(cfg.module.rearrange);
    if (cfg.module.rearrange == RearrangeMode::RandPermPs)
        root["perm_seed"] = static_cast<std::int64_t>(cfg.module.perm_seed);
    root["predictor"] = {
        {"classes", cfg.classes},
        {"mode", cfg.predictor_mode == PredictorMode::AffineAfterR ? "affine-after-R"
                                                                   : "fc-before-R"},
    };
    return root.dump(2) + "\n";
}

const std::vector<ModelConfig>& builtin_configs() {
    static const std::vector<ModelConfig> presets = [] {
        std::vector<ModelConfig> v;
        v.push_back(make_preset("table1", {dwsg(3, 1, 32, 32, 64, 1)}, 8, 16));
        v.push_back(make_preset(
            "table7", {dwsg(7, 1, 32, 32, 64, 2), dwsg(7, 1, 64, 64, 64, 2)}, 8, 59));
        v.push_back(make_preset("table9", {dwsg(5, 1, 32, 32, 32, 2)}, 8, 20));
        v.push_back(make_preset("table11_s6", {dwsg(3, 2, 32, 32, 64, 4)}, 16, 16));
        v.push_back(make_preset(
            "table11_s7", {dwsg(3, 2, 32, 32, 64, 4), dwsg(3, 2, 64, 64, 128, 4)}, 32, 16));
        return v;
    }();
    return presets;
}

const ModelConfig* find_builtin(const std::string& name) {
    for (const ModelConfig& cfg : builtin_configs())
        if (cfg.name == name) return &cfg;
    return nullptr;
}

} // namespace flattenet
