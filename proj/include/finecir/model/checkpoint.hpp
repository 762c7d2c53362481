#pragma once

#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "finecir/model/finecir_model.hpp"

namespace finecir {

inline constexpr const char* kCheckpointFormat = "finecir-checkpoint";
inline constexpr int kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Checkpoint {
    std::unique_ptr<FineCirModel> model;
    double temperature = 0.07;
    long step = 0;
};

inline nlohmann::ordered_json checkpoint_json(const FineCirModel& m, double temperature, long step) {
    const auto& c = m.config();
    nlohmann::ordered_json j;
    j["format"] = kCheckpointFormat;
    j["version"] = kCheckpointVersion;
    j["dims"] = {{"C", c.channels}, {"D_I", c.image_dim}, {"S", c.seq_len}, {"D_T", c.text_dim},
                 {"D", c.width},    {"k", c.queries},     {"F", c.feature_dim}};
    j["config"] = c.to_json();
    j["signature"] = m.signature();
    j["temperature"] = temperature;
    j["step"] = step;
    j["params"] = m.params().to_json();
    return j;
}

/// Writes to a sibling temp file and renames, so readers never see a
/// partial checkpoint.
inline void save_checkpoint(const std::string& path, const FineCirModel& m, double temperature, long step = 0) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw CheckpointError("cannot write checkpoint " + path);
        out << checkpoint_json(m, temperature, step).dump() << '\n';
        if (!out) throw CheckpointError("write failed for checkpoint " + path);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw CheckpointError("cannot rename checkpoint into " + path);
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j,
                                       std::shared_ptr<const sg::ParserBackend> parser = nullptr) {
    if (j.value("format", std::string{}) != kCheckpointFormat) throw CheckpointError("not a finecir checkpoint");
    if (j.value("version", 0) != kCheckpointVersion)
        throw CheckpointError("unsupported checkpoint version " + j.value("version", nlohmann::json()).dump());
    Checkpoint ck;
    ck.model = std::make_unique<FineCirModel>(ModelConfig::from_json(j.at("config")), std::move(parser));
    try {
        ck.model->params().load_json(j.at("params"));
    } catch (const std::runtime_error& e) {
        throw CheckpointError(e.what());
    }
    ck.temperature = j.at("temperature").get<double>();
    ck.step = j.at("step").get<long>();
    return ck;
}

inline Checkpoint load_checkpoint(const std::string& path, std::shared_ptr<const sg::ParserBackend> parser = nullptr) {
    std::ifstream in(path);
    if (!in) throw CheckpointError("cannot open checkpoint " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(path + ": " + e.what());
    }
    return checkpoint_from_json(j, std::move(parser));
}

}  // namespace finecir
