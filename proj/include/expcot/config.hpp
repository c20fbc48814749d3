#pragma once

#include "expcot/pipeline.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace expcot {

struct GatewaySettings {
    std::string backend = "mock"; // "http" | "mock"
    std::string endpoint;         // http only
    std::string model = "gpt-4o";
    std::string api_key;     // may hold ${ENV_VAR}; resolved only at use time
    std::string script_file; // mock only; empty -> empty script
    double requests_per_second = 10.0;
    double burst_capacity = 20.0;
};

struct AuBackendSettings {
    std::string kind = "stub"; // "precomputed" | "service" | "stub"
    std::string path;          // precomputed
    std::string url;           // service
};

// Resolved run configuration. Everything an operator can set lives here so a
// snapshot of this struct reproduces the run.
struct RunConfig {
    GatewaySettings gateway;
    AuBackendSettings au_backend;
    PipelinePolicy policy;
    std::string default_profile = "affectnet8";
    std::string template_dir;  // optional prompt override directory
    std::string au_names_file; // optional AU name table override
    std::string output_dir = "out";
    std::string log_level = "info"; // "debug" | "info" | "warn" | "error"

    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig load(const std::filesystem::path& file);

    // ${VAR} lookup happens here and nowhere else, so resolved secrets never
    // reach serialized form.
    std::string resolved_api_key() const;

    // Configuration as it should be persisted next to run outputs: resolved
    // values except the API key, which stays in its raw (interpolatable) or
    // redacted form.
    nlohmann::json snapshot_json() const;

    void validate() const;
};

// Substitutes one ${VAR} occurrence from the environment; returns the input
// unchanged when it contains no marker. Throws ConfigError when the variable
// is unset.
std::string interpolate_env(const std::string& value);

void write_config_snapshot(const std::filesystem::path& file, const RunConfig& config);

} // namespace expcot
