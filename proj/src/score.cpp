#include "expcot/score.hpp"

#include "expcot/errors.hpp"

#include <cctype>
#include <cmath>
#include <map>
#include <sstream>

namespace expcot {

namespace {

constexpr double kZeroCountEpsilon = 1e-9;

const char* kKeyObsRubric =
    "Assess the similarity between the generated and ground truth descriptions by "
    "comparing the Action Unit names and their corresponding intensities. A score "
    "between 0 and 5 is assigned, with 5 indicating the highest level of agreement.";

const char* kOverallRubric =
    "Evaluate the similarity of Action Unit combinations and their associated "
    "expressions (e.g., the combination of elevated eyelids and eyebrows indicating "
    "strong surprise, or subtle joyful expressions). This component is also scored "
    "between 0 and 5, with 5 representing the highest level of agreement.";

std::string judge_request(const char* rubric, const std::string& gt_text,
                          const std::string& pred_text) {
    std::ostringstream out;
    out << rubric << "\n\nGround truth description: " << gt_text
        << "\n\nGenerated description: " << pred_text
        << "\n\nRespond with a single integer 0-5, nothing else.";
    return out.str();
}

std::string trimmed(const std::string& text) {
    std::size_t begin = 0;
    std::size_t end = text.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) {
        ++begin;
    }
    while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) {
        --end;
    }
    return text.substr(begin, end - begin);
}

std::vector<std::string> bleu_tokens(const std::string& text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char raw : text) {
        const auto c = static_cast<unsigned char>(raw);
        if (std::isalnum(c)) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) {
        tokens.push_back(std::move(current));
    }
    return tokens;
}

std::map<std::string, int> ngram_counts(const std::vector<std::string>& tokens, int n) {
    std::map<std::string, int> counts;
    if (static_cast<int>(tokens.size()) < n) {
        return counts;
    }
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) {
        std::string gram = tokens[i];
        for (int k = 1; k < n; ++k) {
            gram += ' ';
            gram += tokens[i + static_cast<std::size_t>(k)];
        }
        counts[gram] += 1;
    }
    return counts;
}

} // namespace

void ComponentScores::validate() const {
    if (key_obs < 0 || key_obs > 5 || overall < 0 || overall > 5) {
        throw Error("component scores must lie in [0, 5]");
    }
    if (conclusion != 0 && conclusion != 5) {
        throw Error("conclusion component must be 0 or 5");
    }
}

ExpCotScore aggregate(const ComponentScores& c) {
    c.validate();
    return ExpCotScore{static_cast<double>(c.key_obs + c.overall + c.conclusion) / 15.0};
}

double aggregate_mean(double key_obs, double overall, double conclusion) {
    if (key_obs < 0.0 || key_obs > 5.0 || overall < 0.0 || overall > 5.0 ||
        conclusion < 0.0 || conclusion > 5.0) {
        throw Error("component means must lie in [0, 5]");
    }
    return (key_obs + overall + conclusion) / 15.0;
}

std::optional<int> parse_judge_score(const std::string& response) {
    const std::string body = trimmed(response);
    if (body.empty() || body.size() > 2) {
        return std::nullopt;
    }
    for (char c : body) {
        if (!std::isdigit(static_cast<unsigned char>(c))) {
            return std::nullopt;
        }
    }
    const int value = std::stoi(body);
    if (value < 0 || value > 5) {
        return std::nullopt;
    }
    return value;
}

Judge::Judge(std::shared_ptr<Gateway> gateway, GenerationConfig cfg)
    : gateway_(std::move(gateway)), cfg_(cfg) {
    if (!gateway_) {
        throw ConfigError("judge needs a gateway");
    }
    cfg_.validate();
}

int Judge::judged_score(const std::string& stage, const std::string& request,
                        const std::string& sample_id) {
    std::string last_reply;
    for (int attempt = 1; attempt <= 2; ++attempt) {
        DialogueMemory memory(sample_id);
        memory.append({Role::User, request});
        last_reply = gateway_->complete(memory, cfg_, {sample_id, stage, attempt}).content;
        if (const auto score = parse_judge_score(last_reply)) {
            return *score;
        }
    }
    throw ParseError(stage + " reply is not a single integer 0-5 after one re-ask: \"" +
                         last_reply + "\"",
                     last_reply);
}

ComponentScores Judge::judge_components(const CotRecord& pred, const CotRecord& gt,
                                        const std::string& sample_id) {
    ComponentScores out;
    out.key_obs = judged_score(
        kJudgeKeyObsStage,
        judge_request(kKeyObsRubric, gt.key_observations, pred.key_observations), sample_id);
    out.overall = judged_score(
        kJudgeOverallStage,
        judge_request(kOverallRubric, gt.overall_interpretation, pred.overall_interpretation),
        sample_id);
    out.conclusion = pred.label == gt.label ? 5 : 0;
    return out;
}

double accuracy(const std::vector<ExpressionLabel>& preds,
                const std::vector<ExpressionLabel>& gts) {
    if (preds.empty() || preds.size() != gts.size()) {
        throw Error("accuracy needs two equal-length, non-empty label lists");
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] == gts[i]) {
            ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double bleu(const std::string& candidate, const std::string& reference, int max_n) {
    if (max_n < 1) {
        throw Error("bleu max_n must be positive");
    }
    const std::vector<std::string> cand = bleu_tokens(candidate);
    const std::vector<std::string> ref = bleu_tokens(reference);
    if (cand.empty() || ref.empty()) {
        throw Error("bleu requires candidate and reference with at least one word each");
    }

    const int order = std::min<int>(max_n, static_cast<int>(cand.size()));
    double log_precision_sum = 0.0;
    for (int n = 1; n <= order; ++n) {
        const auto cand_counts = ngram_counts(cand, n);
        const auto ref_counts = ngram_counts(ref, n);
        long long matched = 0;
        long long total = 0;
        for (const auto& [gram, count] : cand_counts) {
            total += count;
            const auto it = ref_counts.find(gram);
            if (it != ref_counts.end()) {
                matched += std::min(count, it->second);
            }
        }
        const double numerator =
            matched > 0 ? static_cast<double>(matched) : kZeroCountEpsilon;
        log_precision_sum += std::log(numerator / static_cast<double>(total));
    }

    const auto cand_len = static_cast<double>(cand.size());
    const auto ref_len = static_cast<double>(ref.size());
    const double brevity_penalty =
        cand_len >= ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
    return brevity_penalty * std::exp(log_precision_sum / static_cast<double>(order));
}

nlohmann::json ScoreReport::to_json() const {
    nlohmann::json sample_rows = nlohmann::json::array();
    for (const auto& s : samples) {
        sample_rows.push_back({
            {"sample_id", s.sample_id},
            {"key_obs", s.components.key_obs},
            {"overall", s.components.overall},
            {"conclusion", s.components.conclusion},
            {"score", s.score},
        });
    }
    return nlohmann::json{
        {"samples", sample_rows},
        {"scored", scored()},
        {"failed", static_cast<int>(failures.size())},
        {"failures", failures},
        {"mean_key_obs", mean_key_obs},
        {"mean_overall", mean_overall},
        {"mean_conclusion", mean_conclusion},
        {"mean_aggregate", mean_aggregate},
    };
}

ScoreReport score_pairs(Judge& judge, const std::vector<ScorePair>& pairs) {
    ScoreReport report;
    double key_sum = 0.0;
    double overall_sum = 0.0;
    double conclusion_sum = 0.0;
    double aggregate_sum = 0.0;
    for (const auto& pair : pairs) {
        try {
            const ComponentScores components =
                judge.judge_components(pair.pred, pair.gt, pair.sample_id);
            const double value = aggregate(components).value;
            report.samples.push_back({pair.sample_id, components, value});
            key_sum += components.key_obs;
            overall_sum += components.overall;
            conclusion_sum += components.conclusion;
            aggregate_sum += value;
        } catch (const Error& e) {
            report.failures.push_back(pair.sample_id + ": " + e.what());
        }
    }
    if (!report.samples.empty()) {
        const auto n = static_cast<double>(report.samples.size());
        report.mean_key_obs = key_sum / n;
        report.mean_overall = overall_sum / n;
        report.mean_conclusion = conclusion_sum / n;
        report.mean_aggregate = aggregate_sum / n;
    }
    return report;
}

} // namespace expcot
