#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "chunkpool/data.hpp"
#include "chunkpool/model.hpp"
#include "chunkpool/training.hpp"

namespace chunkpool {

struct CorpusPaths {
    std::string train;
    std::string test;
};

// One archivable JSON file holds everything a run needs; command-line flags
// exist only for file paths and a seed override.
struct RunConfig {
    std::string vocab_path;  // may be empty when a synthetic spec supplies the vocabulary
    ModelConfig model;
    TrainConfig train;
    std::optional<SyntheticSpec> synthetic;
    std::optional<CorpusPaths> corpus;
    std::string output_dir = "out";

    // Cross-field checks over every constituent config. Label names may be
    // auto-filled from a synthetic spec before this runs.
    void validate() const;

    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig load(const std::string& path);
};

nlohmann::json synthetic_spec_to_json(const SyntheticSpec& spec);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j);

nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

}  // namespace chunkpool
