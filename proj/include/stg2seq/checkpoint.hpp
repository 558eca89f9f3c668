#pragma once

// Checkpoint JSON:
//   {format_version, hyper{...}, tensors{name: {shape, data}}, extra{name: {shape, data}}, meta{...}}
// Object keys serialize sorted, so equal checkpoints produce equal bytes.

#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>

#include "json.hpp"

#include "stg2seq/errors.hpp"
#include "stg2seq/io.hpp"
#include "stg2seq/model.hpp"
#include "stg2seq/tensor.hpp"

namespace stg2seq {

inline constexpr int checkpoint_format_version = 1;

struct Checkpoint {
    ModelParams params;
    std::map<std::string, Tensor> extra;  // e.g. adjacency, normalizer bounds
    nlohmann::json meta = nlohmann::json::object();
};

inline nlohmann::json to_json(const Tensor& t) {
    return {{"shape", t.shape()}, {"data", t.values()}};
}

inline Tensor tensor_from_json(const nlohmann::json& j, const std::string& name) {
    try {
        Shape shape = j.at("shape").get<Shape>();
        std::vector<double> data = j.at("data").get<std::vector<double>>();
        if (data.size() != element_count(shape)) {
            throw InputError("checkpoint: tensor " + name + " has " + std::to_string(data.size()) +
                             " values for shape " + to_string(shape));
        }
        return Tensor(std::move(shape), std::move(data));
    } catch (const nlohmann::json::exception& e) {
        throw InputError("checkpoint: tensor " + name + ": " + e.what());
    }
}

inline nlohmann::json to_json(const Hyper& h) {
    return {{"regions", h.regions},         {"channels", h.channels},         {"time_features", h.time_features},
            {"history", h.history},         {"short_window", h.short_window}, {"patch", h.patch},
            {"horizon", h.horizon},         {"hidden", h.hidden},             {"long_layers", h.long_layers},
            {"short_layers", h.short_layers}, {"gated", h.gated},             {"attention", h.attention},
            {"short_encoder", h.short_encoder}};
}

inline Hyper hyper_from_json(const nlohmann::json& j) {
    Hyper h;
    try {
        h.regions = j.at("regions").get<std::size_t>();
        h.channels = j.at("channels").get<std::size_t>();
        h.time_features = j.at("time_features").get<std::size_t>();
        h.history = j.value("history", h.history);
        h.short_window = j.value("short_window", h.short_window);
        h.patch = j.value("patch", h.patch);
        h.horizon = j.value("horizon", h.horizon);
        h.hidden = j.value("hidden", h.hidden);
        h.long_layers = j.value("long_layers", h.long_layers);
        h.short_layers = j.value("short_layers", h.short_layers);
        h.gated = j.value("gated", h.gated);
        h.attention = j.value("attention", h.attention);
        h.short_encoder = j.value("short_encoder", h.short_encoder);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("hyperparameters: ") + e.what());
    }
    return h;
}

inline std::string checkpoint_json(const Checkpoint& ck) {
    nlohmann::json j;
    j["format_version"] = checkpoint_format_version;
    j["hyper"] = to_json(ck.params.hyper);
    j["tensors"] = nlohmann::json::object();
    for_each_tensor(ck.params, [&](const std::string& name, const Tensor& t) { j["tensors"][name] = to_json(t); });
    j["extra"] = nlohmann::json::object();
    for (const auto& [name, t] : ck.extra) j["extra"][name] = to_json(t);
    j["meta"] = ck.meta;
    return j.dump(1) + "\n";
}

inline Checkpoint parse_checkpoint(const std::string& text, const std::string& source = "checkpoint") {
    const nlohmann::json j = parse_json(text, source);
    if (!j.is_object() || j.value("format_version", -1) != checkpoint_format_version) {
        throw InputError(source + ": unsupported or missing format_version (expected " +
                         std::to_string(checkpoint_format_version) + ")");
    }
    Checkpoint ck;
    const Hyper hyper = hyper_from_json(j.at("hyper"));
    ck.params = init_params(hyper, 0);  // structure only; every tensor is overwritten
    const auto& tensors = j.at("tensors");
    std::set<std::string> used;
    for_each_tensor(ck.params, [&](const std::string& name, Tensor& t) {
        if (!tensors.contains(name)) throw InputError(source + ": missing tensor " + name);
        Tensor loaded = tensor_from_json(tensors.at(name), name);
        if (loaded.shape() != t.shape()) {
            throw InputError(source + ": tensor " + name + " has shape " + to_string(loaded.shape()) + ", expected " +
                             to_string(t.shape()));
        }
        t = std::move(loaded);
        used.insert(name);
    });
    for (const auto& [name, value] : tensors.items()) {
        if (!used.count(name)) throw InputError(source + ": unexpected tensor " + name);
    }
    if (j.contains("extra")) {
        for (const auto& [name, value] : j.at("extra").items()) ck.extra.emplace(name, tensor_from_json(value, name));
    }
    if (j.contains("meta")) ck.meta = j.at("meta");
    return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    write_file(path, checkpoint_json(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return parse_checkpoint(read_file(path), path.string());
}

}  // namespace stg2seq
