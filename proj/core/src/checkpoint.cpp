#include "flattenet/checkpoint.hpp"

#include "flattenet/io.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace flattenet {

namespace {

using nlohmann::json;

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// parameter names are dotted paths; keep them readable as file names
std::string param_file(const std::string& name) { return name + ".flt1"; }

template <typename T>
void save_impl(const std::string& dir, const std::vector<Param<T>*>& params) {
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["dtype"] = std::is_same_v<T, float> ? "f32" : "f64";
    manifest["params"] = json::array();
    for (const Param<T>* p : params) {
        write_flt1(dir + "/" + param_file(p->name), p->value);
        manifest["params"].push_back({{"name", p->name},
                                      {"file", param_file(p->name)},
                                      {"dims", {p->value.dims().n, p->value.dims().c,
                                                p->value.dims().h, p->value.dims().w}}});
    }
    std::ofstream out(dir + "/manifest.json", std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot write manifest in " + dir);
    out << manifest.dump(2) << "\n";
}

template <typename T>
void load_impl(const std::string& dir, const std::vector<Param<T>*>& params) {
    std::ifstream in(dir + "/manifest.json", std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open manifest in " + dir);
    json manifest;
    try {
        in >> manifest;
    } catch (const json::parse_error& e) {
        throw std::runtime_error(std::string("checkpoint: bad manifest: ") + e.what());
    }
    const std::string want_dtype = std::is_same_v<T, float> ? "f32" : "f64";
    if (manifest.at("dtype").get<std::string>() != want_dtype)
        throw std::runtime_error("checkpoint: dtype mismatch in " + dir);

    const json& list = manifest.at("params");
    if (list.size() != params.size())
        throw std::runtime_error("checkpoint: parameter count mismatch in " + dir);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Param<T>& p = *params[i];
        const json& entry = list[i];
        if (entry.at("name").get<std::string>() != p.name)
            throw std::runtime_error("checkpoint: expected parameter \"" + p.name +
                                     "\", manifest has \"" + entry.at("name").get<std::string>() + "\"");
        AnyTensor loaded = read_flt1(dir + "/" + entry.at("file").get<std::string>());
        if (!std::holds_alternative<Tensor<T>>(loaded))
            throw std::runtime_error("checkpoint: dtype mismatch for " + p.name);
        Tensor<T>& t = std::get<Tensor<T>>(loaded);
        if (!(t.dims() == p.value.dims()))
            throw std::runtime_error("checkpoint: dims mismatch for " + p.name + ": file has " +
                                     t.dims().str() + ", model has " + p.value.dims().str());
        p.value = std::move(t);
    }
}

} // namespace

std::string history_jsonl(const std::vector<EpochRecord>& history) {
    std::string out;
    for (const EpochRecord& r : history) {
        out += "{\"step\": " + std::to_string(r.step) + ", \"lr\": " + num(r.lr) +
               ", \"loss\": " + num(r.loss) + ", \"metric\": " + num(r.metric) + "}\n";
    }
    return out;
}

void write_history_jsonl(const std::string& path, const std::vector<EpochRecord>& history) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("history: cannot write " + path);
    out << history_jsonl(history);
}

std::vector<EpochRecord> read_history_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("history: cannot open " + path);
    std::vector<EpochRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw std::runtime_error(std::string("history: bad record: ") + e.what());
        }
        out.push_back(EpochRecord{j.at("step").get<std::int64_t>(), j.at("lr").get<double>(),
                                  j.at("loss").get<double>(), j.at("metric").get<double>()});
    }
    return out;
}

void save_checkpoint(const std::string& dir, const std::vector<Param<float>*>& params) {
    save_impl(dir, params);
}
void save_checkpoint(const std::string& dir, const std::vector<Param<double>*>& params) {
    save_impl(dir, params);
}
void load_checkpoint(const std::string& dir, const std::vector<Param<float>*>& params) {
    load_impl(dir, params);
}
void load_checkpoint(const std::string& dir, const std::vector<Param<double>*>& params) {
    load_impl(dir, params);
}

} // namespace flattenet
