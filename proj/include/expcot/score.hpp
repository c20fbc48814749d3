#pragma once

#include "expcot/cot.hpp"
#include "expcot/gateway.hpp"
#include "expcot/labels.hpp"

#include <json.hpp>

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace expcot {

// Per-record component scores: two judged similarities plus the mechanical
// label match, which is binary and therefore 0 or 5.
struct ComponentScores {
    int key_obs = 0;    // 0..5
    int overall = 0;    // 0..5
    int conclusion = 0; // 0 or 5

    void validate() const;
    bool operator==(const ComponentScores&) const = default;
};

struct ExpCotScore {
    double value = 0.0; // (key_obs + overall + conclusion) / 15
};

ExpCotScore aggregate(const ComponentScores& c);

// Same normalization applied to real-valued per-component means.
double aggregate_mean(double key_obs, double overall, double conclusion);

// Judge call stage names as recorded in transcripts; scripted backends key
// their replies on these.
inline constexpr const char* kJudgeKeyObsStage = "JudgeKeyObs";
inline constexpr const char* kJudgeOverallStage = "JudgeOverall";

// Strict reading of a judge reply: the whole trimmed response must be one
// integer in [0, 5]. Anything else yields nullopt.
std::optional<int> parse_judge_score(const std::string& response);

// LLM-as-judge for the two narrative components. Each component costs one
// call, plus one re-ask when the reply fails the strict parse; a second
// failure raises. The conclusion component never touches the judge.
class Judge {
public:
    explicit Judge(std::shared_ptr<Gateway> gateway,
                   GenerationConfig cfg = GenerationConfig{0.0, 16, 3,
                                                           std::chrono::seconds{60}});

    ComponentScores judge_components(const CotRecord& pred, const CotRecord& gt,
                                     const std::string& sample_id = "pair");

private:
    int judged_score(const std::string& stage, const std::string& request,
                     const std::string& sample_id);

    std::shared_ptr<Gateway> gateway_;
    GenerationConfig cfg_;
};

// Fraction of positions where both lists name the same expression.
double accuracy(const std::vector<ExpressionLabel>& preds,
                const std::vector<ExpressionLabel>& gts);

// Case-folded, punctuation-stripped BLEU: modified n-gram precision with
// uniform weights up to min(max_n, candidate length), brevity penalty, and
// 1e-9 substituted for zero matched-n-gram counts.
double bleu(const std::string& candidate, const std::string& reference, int max_n = 4);

struct ScorePair {
    std::string sample_id;
    CotRecord pred;
    CotRecord gt;
};

struct ScoredSample {
    std::string sample_id;
    ComponentScores components;
    double score = 0.0;
};

// Batch result shaped like the usual report table: per-component means over
// the scored samples plus the mean aggregate.
struct ScoreReport {
    std::vector<ScoredSample> samples;
    std::vector<std::string> failures; // "<sample_id>: <reason>"
    double mean_key_obs = 0.0;
    double mean_overall = 0.0;
    double mean_conclusion = 0.0;
    double mean_aggregate = 0.0;

    int scored() const { return static_cast<int>(samples.size()); }

    nlohmann::json to_json() const;
};

// Scores each pair in order. Judge and gateway failures are recorded per
// sample instead of aborting the batch.
ScoreReport score_pairs(Judge& judge, const std::vector<ScorePair>& pairs);

} // namespace expcot
