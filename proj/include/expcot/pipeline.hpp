#pragma once

#include "expcot/au.hpp"
#include "expcot/cot.hpp"
#include "expcot/gateway.hpp"
#include "expcot/labels.hpp"
#include "expcot/prompts.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace expcot {

// One manifest line. au and au_ref are alternatives; when au is present the
// AU backend is not consulted.
struct SampleInput {
    std::string sample_id;
    std::string dataset;
    ExpressionLabel gt_label = ExpressionLabel::Neutral;
    std::optional<AuVector> au;
    std::string au_ref;
};

struct PipelinePolicy {
    int label_injection_threshold = 3; // feedback rounds before the true label is injected
    int max_rounds = 6;
    int parallelism = 1;

    void validate() const;
};

enum class SampleStatus {
    Accepted,
    Failed,
};

std::string sample_status_name(SampleStatus s);

// Per-sample provenance. Accepted implies final_cot is present, clean under
// validate_cot, and the last verdict is Correct.
struct SampleOutcome {
    std::string sample_id;
    std::string dataset;
    ExpressionLabel gt_label = ExpressionLabel::Neutral;
    SampleStatus status = SampleStatus::Failed;
    int rounds_used = 0;
    bool label_injected = false;
    std::vector<std::string> verdicts; // per round: "Correct" | "Incorrect"
    std::optional<CotRecord> final_cot;
    std::string transcript_ref;
    std::string failure_reason; // empty when Accepted

    nlohmann::json to_json() const;
    static SampleOutcome from_json(const nlohmann::json& j);
};

// Source of AU vectors for samples whose manifest line has no inline au.
// The neural regressor behind the service variant is external.
class AuBackend {
public:
    virtual ~AuBackend() = default;

    virtual std::string kind() const = 0;
    // key is au_ref when present, else sample_id. Throws on unknown keys.
    virtual AuVector fetch(const std::string& key) = 0;
};

// JSONL of {"sample_id": ..., "au": [24 floats]} loaded up front.
class PrecomputedAuBackend : public AuBackend {
public:
    explicit PrecomputedAuBackend(const std::filesystem::path& file);

    std::string kind() const override { return "precomputed-file"; }
    AuVector fetch(const std::string& key) override;

private:
    std::map<std::string, AuVector> vectors_;
};

// HTTP service returning {"au": [24 floats]} for {"sample_id": key}.
class InferenceServiceAuBackend : public AuBackend {
public:
    explicit InferenceServiceAuBackend(std::string url);

    std::string kind() const override { return "inference-service"; }
    AuVector fetch(const std::string& key) override;

private:
    std::string url_;
};

// Deterministic synthetic vectors derived from the key; for tests and
// plumbing checks only.
class StubAuBackend : public AuBackend {
public:
    std::string kind() const override { return "stub"; }
    AuVector fetch(const std::string& key) override;
};

// Maps a manifest dataset name onto its label profile; unknown datasets fall
// back to the configured default profile name.
const LabelProfile& profile_for_dataset(const std::string& dataset,
                                        const std::string& default_profile = "affectnet8");

struct EngineConfig {
    PipelinePolicy policy;
    std::string default_profile = "affectnet8";
    AuNameTable table = AuNameTable::feafa_default();
    PromptSet prompts = PromptSet::embedded_defaults();
    GenerationConfig creative_cfg{0.7, 1024, 3, std::chrono::seconds{60}};
    GenerationConfig extraction_cfg{0.0, 64, 3, std::chrono::seconds{60}};
};

struct BatchReport {
    int total = 0;
    int accepted = 0;
    int failed = 0;
    int label_injected = 0;
    double mean_rounds = 0.0;
    std::map<std::string, int> per_dataset;
    std::map<std::string, int> accepted_per_dataset;

    nlohmann::json to_json() const;
};

// The six-process engine driver. AU acquisition, description generation,
// expression extraction, verification, bounded feedback reflection with
// label injection, and format refinement.
class Engine {
public:
    Engine(std::shared_ptr<Gateway> gateway, std::shared_ptr<AuBackend> au_backend,
           EngineConfig config);

    // Runs one sample end to end; never throws for per-sample problems, the
    // outcome carries the failure reason instead.
    SampleOutcome run_sample(const SampleInput& input);

    // Runs the manifest with bounded parallelism. Results come back in
    // manifest order regardless of scheduling. Samples whose id is in
    // already_done are skipped (their slot is left out of the result).
    std::vector<SampleOutcome> run_batch(const std::vector<SampleInput>& manifest,
                                         const std::set<std::string>& already_done = {});

    static BatchReport summarize(const std::vector<SampleOutcome>& outcomes);

    const EngineConfig& config() const { return config_; }

private:
    std::string refined_analysis_attempt(const std::string& sample_id,
                                         const std::string& analysis, int attempt);

    std::shared_ptr<Gateway> gateway_;
    std::shared_ptr<AuBackend> au_backend_;
    EngineConfig config_;
};

// Manifest ingestion: JSON Lines, one object per sample
// {sample_id, dataset, gt_label, au: [24 floats] | au_ref: string}.
// Throws ConfigError naming the offending sample and field.
std::vector<SampleInput> load_manifest(const std::filesystem::path& file,
                                       const std::string& default_profile = "affectnet8");

// Validation-only pass over an already-loaded manifest: id uniqueness plus
// per-dataset counts (the dry-run report).
std::map<std::string, int> manifest_dataset_counts(const std::vector<SampleInput>& manifest);

void write_outcomes(const std::filesystem::path& file, const std::vector<SampleOutcome>& outcomes);
std::vector<SampleOutcome> read_outcomes(const std::filesystem::path& file);

} // namespace expcot
