#ifndef ICONIC_MODEL_IO_HPP
#define ICONIC_MODEL_IO_HPP

#include "iconic/csv_io.hpp"
#include "iconic/mlp.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace iconic {

inline constexpr const char* kModelFormat = "iconic-mlp";
inline constexpr int kModelVersion = 1;

/// A scorer plus the configuration that produced it.
struct ModelFile {
    MlpParams params;
    std::vector<std::string> provenance;  // key=value lines
};

/// JSON container: widths, activations and row-major parameters.
/// nlohmann/json prints doubles in shortest round-trip form.
inline nlohmann::json to_json(const ModelFile& m) {
    nlohmann::json j;
    j["format"] = kModelFormat;
    j["version"] = kModelVersion;
    j["input_dim"] = m.params.input_dim();
    j["widths"] = m.params.widths();
    auto& layers = j["layers"] = nlohmann::json::array();
    for (const auto& l : m.params.layers) {
        std::vector<double> w;
        w.reserve(static_cast<std::size_t>(l.weight.size()));
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.push_back(l.weight(r, c));
        }
        layers.push_back({{"rows", l.weight.rows()},
                          {"cols", l.weight.cols()},
                          {"activation", to_string(l.activation)},
                          {"weight", std::move(w)},
                          {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
    }
    j["provenance"] = m.provenance;
    return j;
}

inline ModelFile model_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != kModelFormat) throw DataError("not an iconic-mlp model file");
        if (j.at("version").get<int>() != kModelVersion) {
            throw DataError("unsupported model version " + std::to_string(j.at("version").get<int>()));
        }
        ModelFile m;
        for (const auto& jl : j.at("layers")) {
            const auto rows = jl.at("rows").get<Eigen::Index>();
            const auto cols = jl.at("cols").get<Eigen::Index>();
            const auto w = jl.at("weight").get<std::vector<double>>();
            const auto b = jl.at("bias").get<std::vector<double>>();
            if (rows <= 0 || cols <= 0 || static_cast<Eigen::Index>(w.size()) != rows * cols ||
                static_cast<Eigen::Index>(b.size()) != rows) {
                throw DataError("layer " + std::to_string(m.params.layers.size()) + " has inconsistent shape");
            }
            Layer l;
            l.weight.resize(rows, cols);
            for (Eigen::Index r = 0; r < rows; ++r) {
                for (Eigen::Index c = 0; c < cols; ++c) l.weight(r, c) = w[static_cast<std::size_t>(r * cols + c)];
            }
            l.bias = Eigen::Map<const Vector>(b.data(), rows);
            l.activation = activation_from_string(jl.at("activation").get<std::string>());
            m.params.layers.push_back(std::move(l));
        }
        validate(m.params);
        if (j.contains("input_dim") && j.at("input_dim").get<std::size_t>() != m.params.input_dim()) {
            throw DataError("input_dim does not match the first layer");
        }
        if (j.contains("provenance")) m.provenance = j.at("provenance").get<std::vector<std::string>>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed model file: ") + e.what());
    }
}

inline void save_model(const ModelFile& m, const std::filesystem::path& path) {
    csv::write_atomically(path, to_json(m).dump(1) + "\n");
}

inline ModelFile load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open model '" + path.string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    return model_from_json(j);
}

}  // namespace iconic

#endif  // ICONIC_MODEL_IO_HPP
