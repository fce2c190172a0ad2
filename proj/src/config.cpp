#include "dyntex/config.hpp"

#include <algorithm>
#include <set>

#include "dyntex/error.hpp"
#include "dyntex/video_io.hpp"

namespace dyntex {

namespace {

using nlohmann::json;

std::string join(const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
}

void reject_unknown(const json& object, const std::string& path, std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : object.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
            throw ConfigError(join(path, key), "unknown key");
    }
}

const json& require_object(const json& value, const std::string& path) {
    if (!value.is_object()) throw ConfigError(path, "expected an object");
    return value;
}

std::uint64_t as_unsigned(const json& value, const std::string& path) {
    if (!value.is_number_integer() || (value.is_number_integer() && !value.is_number_unsigned() && value.get<long long>() < 0))
        throw ConfigError(path, "expected a non-negative integer");
    return value.get<std::uint64_t>();
}

double as_number(const json& value, const std::string& path) {
    if (!value.is_number()) throw ConfigError(path, "expected a number");
    return value.get<double>();
}

std::string as_string(const json& value, const std::string& path) {
    if (!value.is_string()) throw ConfigError(path, "expected a string");
    return value.get<std::string>();
}

const json& as_array(const json& value, const std::string& path) {
    if (!value.is_array()) throw ConfigError(path, "expected an array");
    return value;
}

std::filesystem::path resolve(const std::string& text, const std::filesystem::path& base) {
    std::filesystem::path p(text);
    return p.is_absolute() || base.empty() ? p : base / p;
}

ShiftAxis parse_axis(const json& value, const std::string& path) {
    const std::string name = as_string(value, path);
    if (name == "horizontal") return ShiftAxis::Horizontal;
    if (name == "vertical") return ShiftAxis::Vertical;
    throw ConfigError(path, "expected \"horizontal\" or \"vertical\"");
}

WeightSetting parse_weights(const json& weights, const std::string& stream, const std::string& path) {
    WeightSetting out;
    const std::string seed_key = stream + "_seed", file_key = stream + "_file";
    const bool has_seed = weights.contains(seed_key), has_file = weights.contains(file_key);
    if (has_seed && has_file) throw ConfigError(join(path, file_key), "give either " + seed_key + " or " + file_key);
    if (has_seed) out.seed = as_unsigned(weights.at(seed_key), join(path, seed_key));
    return out;
}

void parse_loss(const json& loss, LossConfig& config) {
    const std::string path = "loss";
    require_object(loss, path);
    reject_unknown(loss, path,
                   {"layer_weights", "shifts", "intervals", "interval_weights", "lambda", "pyramid_scales"});

    if (loss.contains("layer_weights")) {
        const std::string p = join(path, "layer_weights");
        const json& w = require_object(loss.at("layer_weights"), p);
        for (const auto& [label, value] : w.items()) {
            const auto it = std::find(kAppearanceTapLabels.begin(), kAppearanceTapLabels.end(), label);
            if (it == kAppearanceTapLabels.end()) throw ConfigError(join(p, label), "unknown appearance tap");
            config.layer_weights[static_cast<std::size_t>(it - kAppearanceTapLabels.begin())] =
                as_number(value, join(p, label));
        }
    }
    if (loss.contains("shifts")) {
        const std::string p = join(path, "shifts");
        config.shifts.clear();
        std::size_t i = 0;
        for (const json& item : as_array(loss.at("shifts"), p)) {
            const std::string ip = p + "[" + std::to_string(i++) + "]";
            if (item.is_object()) {
                reject_unknown(item, ip, {"axis", "distance"});
                if (!item.contains("axis") || !item.contains("distance"))
                    throw ConfigError(ip, "needs \"axis\" and \"distance\"");
                config.shifts.push_back({parse_axis(item.at("axis"), join(ip, "axis")),
                                         as_unsigned(item.at("distance"), join(ip, "distance"))});
            } else {
                // A bare distance shifts along both axes.
                for (const ShiftSpec& s : both_axes({as_unsigned(item, ip)})) config.shifts.push_back(s);
            }
        }
    }
    if (loss.contains("intervals")) {
        const std::string p = join(path, "intervals");
        config.intervals.clear();
        std::size_t i = 0;
        for (const json& item : as_array(loss.at("intervals"), p))
            config.intervals.push_back(as_unsigned(item, p + "[" + std::to_string(i++) + "]"));
        if (!loss.contains("interval_weights"))
            config.interval_weights.assign(config.intervals.size(),
                                           config.intervals.empty() ? 0.0 : 1.0 / config.intervals.size());
    }
    if (loss.contains("interval_weights")) {
        const std::string p = join(path, "interval_weights");
        config.interval_weights.clear();
        std::size_t i = 0;
        for (const json& item : as_array(loss.at("interval_weights"), p))
            config.interval_weights.push_back(as_number(item, p + "[" + std::to_string(i++) + "]"));
    }
    if (loss.contains("lambda")) config.lambda = as_number(loss.at("lambda"), join(path, "lambda"));
    if (loss.contains("pyramid_scales")) {
        const std::string p = join(path, "pyramid_scales");
        const std::uint64_t s = as_unsigned(loss.at("pyramid_scales"), p);
        if (s > 16) throw ConfigError(p, "too many pyramid scales");
        config.pyramid_scales = static_cast<unsigned>(s);
    }
    try {
        config.validate();
    } catch (const ConfigError& e) {
        const std::string what = e.what();
        throw ConfigError(join(path, e.key()), what.substr(std::min(what.size(), e.key().size() + 2)));
    }
}

void parse_optimizer(const json& opt, LbfgsConfig& config) {
    const std::string path = "optimizer";
    require_object(opt, path);
    reject_unknown(opt, path, {"max_iters", "tol_grad", "tol_loss", "memory"});
    if (opt.contains("max_iters")) config.max_iterations = as_unsigned(opt.at("max_iters"), join(path, "max_iters"));
    if (opt.contains("tol_grad")) config.tol_grad = as_number(opt.at("tol_grad"), join(path, "tol_grad"));
    if (opt.contains("tol_loss")) config.tol_loss = as_number(opt.at("tol_loss"), join(path, "tol_loss"));
    if (opt.contains("memory")) config.memory = as_unsigned(opt.at("memory"), join(path, "memory"));
    try {
        config.validate();
    } catch (const ConfigError& e) {
        const std::string what = e.what();
        throw ConfigError(join(path, e.key()), what.substr(std::min(what.size(), e.key().size() + 2)));
    }
}

std::size_t line_of(const std::string& text, std::size_t byte) {
    byte = std::min(byte, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(byte), '\n'));
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        // e.byte is one past the offending character.
        const std::size_t line = line_of(text, e.byte == 0 ? 0 : e.byte - 1);
        throw ConfigError("", "JSON syntax error on line " + std::to_string(line) + ": " + e.what());
    }
    require_object(doc, "(root)");
    reject_unknown(doc, "",
                   {"exemplar_dir", "output_dir", "frames", "weights", "loss", "optimizer", "init_seed"});

    RunConfig config;
    if (!doc.contains("exemplar_dir")) throw ConfigError("exemplar_dir", "required");
    config.exemplar_dir = resolve(as_string(doc.at("exemplar_dir"), "exemplar_dir"), base_dir);
    if (doc.contains("output_dir")) config.output_dir = resolve(as_string(doc.at("output_dir"), "output_dir"), base_dir);
    if (doc.contains("frames")) config.frames = as_unsigned(doc.at("frames"), "frames");
    if (doc.contains("init_seed")) config.init_seed = as_unsigned(doc.at("init_seed"), "init_seed");
    if (doc.contains("weights")) {
        const json& w = require_object(doc.at("weights"), "weights");
        reject_unknown(w, "weights", {"appearance_seed", "appearance_file", "dynamics_seed", "dynamics_file"});
        config.appearance_weights = parse_weights(w, "appearance", "weights");
        config.dynamics_weights = parse_weights(w, "dynamics", "weights");
        if (w.contains("appearance_file"))
            config.appearance_weights.file =
                resolve(as_string(w.at("appearance_file"), "weights.appearance_file"), base_dir);
        if (w.contains("dynamics_file"))
            config.dynamics_weights.file = resolve(as_string(w.at("dynamics_file"), "weights.dynamics_file"), base_dir);
    }
    if (doc.contains("loss")) parse_loss(doc.at("loss"), config.loss);
    if (doc.contains("optimizer")) parse_optimizer(doc.at("optimizer"), config.optimizer);
    return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes;
    try {
        bytes = read_file_bytes(path);
    } catch (const Error& e) {
        throw ConfigError("", std::string("cannot read config: ") + e.what());
    }
    return parse_run_config(std::string(bytes.begin(), bytes.end()), path.parent_path());
}

nlohmann::json RunConfig::to_json() const {
    json weights;
    if (appearance_weights.file)
        weights["appearance_file"] = appearance_weights.file->string();
    else
        weights["appearance_seed"] = appearance_weights.seed;
    if (dynamics_weights.file)
        weights["dynamics_file"] = dynamics_weights.file->string();
    else
        weights["dynamics_seed"] = dynamics_weights.seed;

    json layer_weights = json::object();
    for (std::size_t l = 0; l < kAppearanceTapCount; ++l) layer_weights[kAppearanceTapLabels[l]] = loss.layer_weights[l];
    json shifts = json::array();
    for (const ShiftSpec& s : loss.shifts) shifts.push_back({{"axis", axis_name(s.axis)}, {"distance", s.distance}});

    return {{"exemplar_dir", exemplar_dir.string()},
            {"output_dir", output_dir.string()},
            {"frames", frames},
            {"init_seed", init_seed},
            {"weights", weights},
            {"loss",
             {{"layer_weights", layer_weights},
              {"shifts", shifts},
              {"intervals", loss.intervals},
              {"interval_weights", loss.interval_weights},
              {"lambda", loss.lambda},
              {"pyramid_scales", loss.pyramid_scales}}},
            {"optimizer",
             {{"max_iters", optimizer.max_iterations},
              {"tol_grad", optimizer.tol_grad},
              {"tol_loss", optimizer.tol_loss},
              {"memory", optimizer.memory}}}};
}

}  // namespace dyntex
