#pragma once

// JSON checkpoints for every net kind. Doubles are written with their
// shortest round-trip representation, so load reproduces parameters
// bit-exactly.

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "glab/nnkernel.hpp"

namespace glab {

using Json = nlohmann::json;

struct Checkpoint {
    MlpNet net;
    std::string kind;  // "denoiser" | "velocity" | "scheduler"
    Json meta;
};

inline Json checkpoint_to_json(const MlpNet& net, const std::string& kind, const Json& meta) {
    Json j;
    j["version"] = 1;
    j["kind"] = kind;
    j["layer_dims"] = net.layer_dims;
    j["weights"] = net.weights;
    j["biases"] = net.biases;
    j["output_squash"] = net.output_squash == OutputSquash::Sigmoid ? "sigmoid" : "none";
    j["meta"] = meta.is_null() ? Json::object() : meta;
    return j;
}

inline Checkpoint checkpoint_from_json(const Json& j) {
    if (!j.contains("version") || j["version"].get<int>() != 1)
        throw IoError("checkpoint: unsupported version");
    Checkpoint ck;
    ck.kind = j.at("kind").get<std::string>();
    ck.net.layer_dims = j.at("layer_dims").get<std::vector<int>>();
    ck.net.weights = j.at("weights").get<std::vector<std::vector<double>>>();
    ck.net.biases = j.at("biases").get<std::vector<std::vector<double>>>();
    std::string squash = j.at("output_squash").get<std::string>();
    if (squash == "sigmoid")
        ck.net.output_squash = OutputSquash::Sigmoid;
    else if (squash == "none")
        ck.net.output_squash = OutputSquash::None;
    else
        throw IoError("checkpoint: unknown output_squash '" + squash + "'");
    ck.meta = j.value("meta", Json::object());

    if (ck.net.layer_dims.size() < 2 || ck.net.weights.size() != ck.net.layer_dims.size() - 1 ||
        ck.net.biases.size() != ck.net.weights.size())
        throw IoError("checkpoint: inconsistent layer structure");
    for (std::size_t l = 0; l + 1 < ck.net.layer_dims.size(); ++l) {
        std::size_t want_w = static_cast<std::size_t>(ck.net.layer_dims[l]) * ck.net.layer_dims[l + 1];
        if (ck.net.weights[l].size() != want_w ||
            ck.net.biases[l].size() != static_cast<std::size_t>(ck.net.layer_dims[l + 1]))
            throw IoError("checkpoint: parameter shape mismatch at layer " + std::to_string(l));
    }
    return ck;
}

inline void save_checkpoint(const std::string& path, const MlpNet& net, const std::string& kind,
                            const Json& meta = Json::object()) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out << checkpoint_to_json(net, kind, meta).dump(2) << "\n";
    if (!out) throw IoError("failed writing checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    Json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw IoError("corrupt checkpoint " + path + ": " + e.what());
    }
    return checkpoint_from_json(j);
}

}  // namespace glab
