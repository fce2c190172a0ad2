#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "dyntex/lbfgs.hpp"
#include "dyntex/texture_stats.hpp"

#include <json.hpp>

namespace dyntex {

struct WeightSetting {
    std::uint64_t seed = 0;
    /// When set, weights are loaded from this DTSW file instead.
    std::optional<std::filesystem::path> file;
};

/// A parsed run configuration. Relative paths are resolved against the
/// directory holding the config file.
struct RunConfig {
    std::filesystem::path exemplar_dir;
    std::filesystem::path output_dir;
    /// 0 keeps the exemplar's length.
    std::size_t frames = 0;
    WeightSetting appearance_weights{0, std::nullopt};
    WeightSetting dynamics_weights{0, std::nullopt};
    LossConfig loss;
    LbfgsConfig optimizer;
    std::uint64_t init_seed = 0;

    /// Every setting, defaults included.
    nlohmann::json to_json() const;
};

/// Strict parse: unknown keys and wrong types throw ConfigError naming the
/// key path; syntax errors throw ConfigError whose message names the line.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace dyntex
