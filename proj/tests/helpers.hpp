#pragma once

#include "expcot/cot.hpp"
#include "expcot/gateway.hpp"
#include "expcot/labels.hpp"
#include "expcot/pipeline.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace testutil {

// Unique scratch directory, removed on destruction.
class TempDir {
public:
    TempDir() {
        const auto base = std::filesystem::temp_directory_path();
        std::mt19937_64 rng(std::random_device{}());
        for (int i = 0; i < 64; ++i) {
            auto candidate = base / ("expcot-test-" + std::to_string(rng()));
            std::error_code ec;
            if (std::filesystem::create_directory(candidate, ec)) {
                path_ = candidate;
                return;
            }
        }
        throw std::runtime_error("cannot create a scratch directory");
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path file(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::trunc | std::ios::binary);
    out << content;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::filesystem::path source_root() {
    return EXPCOT_SOURCE_DIR;
}

// A syntactically valid three-part analysis whose conclusion names the given
// expression word.
inline std::string valid_cot_text(const std::string& label_word) {
    return "Key Observations: Both lip corners pull upward with moderate strength while the "
           "cheeks rise slightly, and the lips part over a gentle jaw movement.\n"
           "Overall Emotional Interpretation: The raised cheeks and lifted lip corners work "
           "together in one coherent pattern, leaving no trace of tension anywhere else on "
           "the face.\n"
           "Conclusion: The expression is " +
           label_word + ", relaxed and open.";
}

// AU vector with a handful of positive entries.
inline expcot::AuVector smile_vector() {
    std::vector<double> v(expcot::kActionUnitCount, 0.0);
    v[8] = 0.42;
    v[9] = 0.38;
    v[12] = 0.66;
    v[13] = 0.61;
    v[22] = 0.35;
    return expcot::AuVector::from_densities(v);
}

// Scripts all four stages of one sample that fails verification fail_rounds
// times, then passes and refines cleanly.
inline void script_sample(expcot::ScriptedBackend& backend, const std::string& id,
                          int fail_rounds, const std::string& label_word) {
    backend.script(id, "AU2Des", expcot::ScriptedBackend::kAnyRound,
                   "The lip corners pull up strongly and the cheeks rise, suggesting " +
                       label_word + ".");
    backend.script(id, "Des2Exp", expcot::ScriptedBackend::kAnyRound, label_word);
    for (int r = 1; r <= fail_rounds; ++r) {
        backend.script(id, "Verify", r, "Incorrect");
    }
    backend.script(id, "Verify", fail_rounds + 1, "Correct");
    backend.script(id, "Refine", expcot::ScriptedBackend::kAnyRound, valid_cot_text(label_word));
}

// Gateway with effectively unlimited rate and minimal backoff.
inline std::shared_ptr<expcot::Gateway> make_gateway(const TempDir& dir,
                                                     std::shared_ptr<expcot::ChatBackend> backend,
                                                     const std::string& name = "transcripts.jsonl") {
    expcot::GatewayOptions opts;
    opts.requests_per_second = 1e6;
    opts.burst_capacity = 1e6;
    opts.backoff_base = std::chrono::milliseconds(1);
    return std::make_shared<expcot::Gateway>(
        std::move(backend), std::make_shared<expcot::TranscriptLog>(dir.file(name)), opts);
}

inline expcot::SampleInput sample_input(const std::string& id, const std::string& dataset,
                                        const std::string& label_word) {
    expcot::SampleInput in;
    in.sample_id = id;
    in.dataset = dataset;
    in.gt_label = expcot::normalize_label(label_word);
    in.au = smile_vector();
    return in;
}

} // namespace testutil
