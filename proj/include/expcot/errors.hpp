#pragma once

#include <stdexcept>
#include <string>

namespace expcot {

// Base for all library errors. Batch code catches this at the sample
// boundary so one bad sample never takes down the run.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Misconfiguration detected before any sample runs. Fatal, exit code 1.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what) {}
};

// Gateway failure with provenance: which sample and stage was in flight.
class TransportError : public Error {
public:
    TransportError(std::string sample_id, std::string stage, const std::string& what)
        : Error("[" + sample_id + "/" + stage + "] " + what),
          sample_id_(std::move(sample_id)),
          stage_(std::move(stage)) {}

    const std::string& sample_id() const { return sample_id_; }
    const std::string& stage() const { return stage_; }

private:
    std::string sample_id_;
    std::string stage_;
};

// A constrained LLM response (label, verdict, CoT section, judge integer)
// that could not be interpreted. Carries the raw text for the transcript.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::string raw)
        : Error(what), raw_(std::move(raw)) {}

    const std::string& raw() const { return raw_; }

private:
    std::string raw_;
};

} // namespace expcot
