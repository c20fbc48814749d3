#include "expcot/config.hpp"

#include "expcot/errors.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

namespace expcot {

namespace {

void require_exists(const std::string& path, const std::string& what) {
    if (!path.empty() && !std::filesystem::exists(path)) {
        throw ConfigError(what + " does not exist: " + path);
    }
}

} // namespace

std::string interpolate_env(const std::string& value) {
    const auto begin = value.find("${");
    if (begin == std::string::npos) {
        return value;
    }
    const auto end = value.find('}', begin + 2);
    if (end == std::string::npos) {
        throw ConfigError("unterminated ${...} in config value: " + value);
    }
    const std::string name = value.substr(begin + 2, end - begin - 2);
    if (name.empty()) {
        throw ConfigError("empty environment variable name in config value: " + value);
    }
    const char* resolved = std::getenv(name.c_str());
    if (!resolved) {
        throw ConfigError("environment variable " + name + " is not set");
    }
    return value.substr(0, begin) + resolved + value.substr(end + 1);
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig config;
    if (j.contains("gateway")) {
        const auto& g = j.at("gateway");
        config.gateway.backend = g.value("backend", config.gateway.backend);
        config.gateway.endpoint = g.value("endpoint", config.gateway.endpoint);
        config.gateway.model = g.value("model", config.gateway.model);
        config.gateway.api_key = g.value("api_key", config.gateway.api_key);
        config.gateway.script_file = g.value("script_file", config.gateway.script_file);
        config.gateway.requests_per_second =
            g.value("requests_per_second", config.gateway.requests_per_second);
        config.gateway.burst_capacity = g.value("burst_capacity", config.gateway.burst_capacity);
    }
    if (j.contains("au_backend")) {
        const auto& a = j.at("au_backend");
        config.au_backend.kind = a.value("kind", config.au_backend.kind);
        config.au_backend.path = a.value("path", config.au_backend.path);
        config.au_backend.url = a.value("url", config.au_backend.url);
    }
    if (j.contains("policy")) {
        const auto& p = j.at("policy");
        config.policy.label_injection_threshold =
            p.value("label_injection_threshold", config.policy.label_injection_threshold);
        config.policy.max_rounds = p.value("max_rounds", config.policy.max_rounds);
        config.policy.parallelism = p.value("parallelism", config.policy.parallelism);
    }
    config.default_profile = j.value("default_profile", config.default_profile);
    config.template_dir = j.value("template_dir", config.template_dir);
    config.au_names_file = j.value("au_names_file", config.au_names_file);
    config.output_dir = j.value("output_dir", config.output_dir);
    config.log_level = j.value("log_level", config.log_level);
    return config;
}

RunConfig RunConfig::load(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) {
        throw ConfigError("cannot open config: " + file.string());
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(file.string() + ": bad JSON: " + e.what());
    }
    RunConfig config = from_json(j);
    config.validate();
    return config;
}

std::string RunConfig::resolved_api_key() const {
    return interpolate_env(gateway.api_key);
}

nlohmann::json RunConfig::snapshot_json() const {
    // Keys that arrived as literals (no ${...}) are masked outright.
    const std::string key_form = gateway.api_key.find("${") != std::string::npos
                                     ? gateway.api_key
                                     : (gateway.api_key.empty() ? "" : "<redacted>");
    return nlohmann::json{
        {"gateway",
         {{"backend", gateway.backend},
          {"endpoint", gateway.endpoint},
          {"model", gateway.model},
          {"api_key", key_form},
          {"script_file", gateway.script_file},
          {"requests_per_second", gateway.requests_per_second},
          {"burst_capacity", gateway.burst_capacity}}},
        {"au_backend",
         {{"kind", au_backend.kind}, {"path", au_backend.path}, {"url", au_backend.url}}},
        {"policy",
         {{"label_injection_threshold", policy.label_injection_threshold},
          {"max_rounds", policy.max_rounds},
          {"parallelism", policy.parallelism}}},
        {"default_profile", default_profile},
        {"template_dir", template_dir},
        {"au_names_file", au_names_file},
        {"output_dir", output_dir},
        {"log_level", log_level},
    };
}

void RunConfig::validate() const {
    policy.validate();

    static const std::set<std::string> kBackends{"http", "mock"};
    if (!kBackends.count(gateway.backend)) {
        throw ConfigError("gateway.backend must be \"http\" or \"mock\", got \"" +
                          gateway.backend + "\"");
    }
    if (gateway.backend == "http" && gateway.endpoint.empty()) {
        throw ConfigError("gateway.backend \"http\" requires gateway.endpoint");
    }
    if (gateway.requests_per_second <= 0.0 || gateway.burst_capacity < 1.0) {
        throw ConfigError("gateway rate limits must be positive");
    }

    static const std::set<std::string> kAuKinds{"precomputed", "service", "stub"};
    if (!kAuKinds.count(au_backend.kind)) {
        throw ConfigError("au_backend.kind must be precomputed, service, or stub, got \"" +
                          au_backend.kind + "\"");
    }
    if (au_backend.kind == "precomputed" && au_backend.path.empty()) {
        throw ConfigError("au_backend.kind \"precomputed\" requires au_backend.path");
    }
    if (au_backend.kind == "service" && au_backend.url.empty()) {
        throw ConfigError("au_backend.kind \"service\" requires au_backend.url");
    }

    static const std::set<std::string> kProfiles{"rafdb", "affectnet7", "affectnet8"};
    if (!kProfiles.count(default_profile)) {
        throw ConfigError("default_profile must be rafdb, affectnet7, or affectnet8, got \"" +
                          default_profile + "\"");
    }

    static const std::set<std::string> kLevels{"debug", "info", "warn", "error"};
    if (!kLevels.count(log_level)) {
        throw ConfigError("log_level must be debug, info, warn, or error");
    }

    require_exists(gateway.script_file, "gateway.script_file");
    require_exists(au_backend.path, "au_backend.path");
    require_exists(template_dir, "template_dir");
    require_exists(au_names_file, "au_names_file");
}

void write_config_snapshot(const std::filesystem::path& file, const RunConfig& config) {
    if (file.has_parent_path()) {
        std::filesystem::create_directories(file.parent_path());
    }
    std::ofstream out(file, std::ios::trunc);
    if (!out) {
        throw ConfigError("cannot write config snapshot: " + file.string());
    }
    out << config.snapshot_json().dump(2) << "\n";
}

} // namespace expcot
