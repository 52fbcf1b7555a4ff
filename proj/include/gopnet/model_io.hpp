#pragma once

// Versioned JSON model files. Doubles survive a save/load round trip exactly
// (shortest-representation printing), operator names are stored as lowercase
// strings, and an optional standardizer travels with the network so inference
// can reproduce training-time preprocessing.

#include <fstream>
#include <optional>
#include <string>

#include <json.hpp>

#include "gopnet/data.hpp"
#include "gopnet/errors.hpp"
#include "gopnet/matrix.hpp"
#include "gopnet/network.hpp"
#include "gopnet/operators.hpp"

namespace gopnet {

inline constexpr int kModelFormatVersion = 1;

namespace detail {

inline const nlohmann::json& json_field(const nlohmann::json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) throw ParseError(std::string("model: missing field '") + key + "'");
    return *it;
}

inline int json_int(const nlohmann::json& j, const char* key) {
    const nlohmann::json& v = json_field(j, key);
    if (!v.is_number_integer()) throw ParseError(std::string("model: field '") + key + "' must be an integer");
    return v.get<int>();
}

inline const nlohmann::json& json_array(const nlohmann::json& j, const char* key) {
    const nlohmann::json& v = json_field(j, key);
    if (!v.is_array()) throw ParseError(std::string("model: field '") + key + "' must be an array");
    return v;
}

inline std::string json_string(const nlohmann::json& j, const char* key) {
    const nlohmann::json& v = json_field(j, key);
    if (!v.is_string()) throw ParseError(std::string("model: field '") + key + "' must be a string");
    return v.get<std::string>();
}

inline nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Matrix json_to_matrix(const nlohmann::json& j, const char* what) {
    if (!j.is_array() || j.empty())
        throw ParseError(std::string("model: ") + what + " must be a non-empty array of rows");
    const std::size_t cols = j.front().is_array() ? j.front().size() : 0;
    Matrix m(j.size(), cols);
    for (std::size_t r = 0; r < j.size(); ++r) {
        const nlohmann::json& row = j[r];
        if (!row.is_array() || row.size() != cols)
            throw ParseError(std::string("model: ragged rows in ") + what);
        for (std::size_t c = 0; c < cols; ++c) {
            if (!row[c].is_number()) throw ParseError(std::string("model: non-numeric entry in ") + what);
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c].get<double>();
        }
    }
    return m;
}

inline nlohmann::json vector_to_json(const Vector& v) {
    nlohmann::json arr = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

inline Vector json_to_vector(const nlohmann::json& j, const char* what) {
    if (!j.is_array()) throw ParseError(std::string("model: ") + what + " must be an array");
    Vector v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw ParseError(std::string("model: non-numeric entry in ") + what);
        v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    }
    return v;
}

}  // namespace detail

struct LoadedModel {
    Network net;
    std::optional<Standardizer> standardizer;
};

inline nlohmann::json model_to_json(const Network& net,
                                    const std::optional<Standardizer>& standardizer = {}) {
    nlohmann::json j;
    j["format_version"] = kModelFormatVersion;
    j["input_dim"] = net.input_dim;
    j["n_classes"] = net.n_classes;
    nlohmann::json layers = nlohmann::json::array();
    for (const HiddenLayer& layer : net.layers) {
        nlohmann::json blocks = nlohmann::json::array();
        for (const GopBlock& b : layer.blocks) {
            nlohmann::json jb;
            jb["opset"] = {{"nodal", nodal_name(b.opset.nodal)},
                           {"pool", pool_name(b.opset.pool)},
                           {"act", act_name(b.opset.act)}};
            jb["weights"] = detail::matrix_to_json(b.weights);
            jb["bias"] = detail::vector_to_json(b.bias);
            blocks.push_back(std::move(jb));
        }
        layers.push_back({{"blocks", std::move(blocks)}});
    }
    j["layers"] = std::move(layers);
    j["output_weights"] = detail::matrix_to_json(net.output_weights);
    if (standardizer) {
        j["standardizer"] = {{"mean", detail::vector_to_json(standardizer->mean)},
                             {"std", detail::vector_to_json(standardizer->stdev)}};
    }
    return j;
}

inline LoadedModel model_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ParseError("model: top level must be an object");
    const int version = detail::json_int(j, "format_version");
    if (version != kModelFormatVersion)
        throw VersionError("model: unsupported format_version " + std::to_string(version) +
                           " (expected " + std::to_string(kModelFormatVersion) + ")");

    LoadedModel loaded;
    Network& net = loaded.net;
    net.input_dim = detail::json_int(j, "input_dim");
    net.n_classes = detail::json_int(j, "n_classes");
    for (const nlohmann::json& jl : detail::json_array(j, "layers")) {
        HiddenLayer layer;
        for (const nlohmann::json& jb : detail::json_array(jl, "blocks")) {
            GopBlock b;
            const nlohmann::json& jo = detail::json_field(jb, "opset");
            b.opset.nodal = nodal_from_name(detail::json_string(jo, "nodal"));
            b.opset.pool = pool_from_name(detail::json_string(jo, "pool"));
            b.opset.act = act_from_name(detail::json_string(jo, "act"));
            b.weights = detail::json_to_matrix(detail::json_field(jb, "weights"), "block weights");
            b.bias = detail::json_to_vector(detail::json_field(jb, "bias"), "block bias");
            layer.blocks.push_back(std::move(b));
        }
        net.layers.push_back(std::move(layer));
    }
    net.output_weights = detail::json_to_matrix(detail::json_field(j, "output_weights"), "output weights");

    if (auto it = j.find("standardizer"); it != j.end()) {
        Standardizer s;
        s.mean = detail::json_to_vector(detail::json_field(*it, "mean"), "standardizer mean");
        s.stdev = detail::json_to_vector(detail::json_field(*it, "std"), "standardizer std");
        if (s.mean.size() != s.stdev.size() ||
            s.mean.size() != static_cast<Eigen::Index>(net.input_dim))
            throw ParseError("model: standardizer dimension mismatch");
        loaded.standardizer = std::move(s);
    }

    net.validate();
    return loaded;
}

inline void save_model(const std::string& path, const Network& net,
                       const std::optional<Standardizer>& standardizer = {}) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open model file for writing: " + path);
    out << model_to_json(net, standardizer).dump(2) << '\n';
    if (!out) throw IoError("failed writing model file: " + path);
}

inline LoadedModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open model file: " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("model: " + std::string(e.what()));
    }
    return model_from_json(j);
}

}  // namespace gopnet
