#pragma once

#include "expcot/au.hpp"
#include "expcot/labels.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>

namespace expcot {

enum class PromptStage {
    AU2Des,
    Des2Exp,
    Verify,
    FeedbackPlain,
    FeedbackWithLabel,
    Refine,
};

std::string prompt_stage_name(PromptStage stage);

// The six instruction templates with named {slot}s. Embedded defaults carry
// the engine's canonical instruction wording; a template directory with one
// UTF-8 file per stage (au2des.txt, des2exp.txt, verify.txt,
// feedback_plain.txt, feedback_with_label.txt, refine.txt) overrides them
// slot-for-slot.
class PromptSet {
public:
    static const PromptSet& embedded_defaults();
    static PromptSet load_overrides(const std::filesystem::path& dir);

    const std::string& body(PromptStage stage) const;

    // Fills every {slot}; throws on a slot without a filler.
    static std::string render(const std::string& body,
                              const std::map<std::string, std::string>& slots);

    std::string render_au2des(const AuObservation& obs) const;
    std::string render_des2exp(const std::string& description) const;
    std::string render_verify(const AuObservation& obs, ExpressionLabel gt_label) const;
    std::string render_feedback(bool with_label, std::optional<ExpressionLabel> gt_label) const;
    std::string render_refine(const std::string& previous_analysis) const;

private:
    std::map<PromptStage, std::string> bodies_;
};

// Convenience wrappers over the embedded defaults.
std::string render_au2des(const AuObservation& obs);
std::string render_des2exp(const std::string& description);
std::string render_verify(const AuObservation& obs, ExpressionLabel gt_label);
std::string render_feedback(bool with_label, std::optional<ExpressionLabel> gt_label);
std::string render_refine(const std::string& previous_analysis);

// Quoted python-dict style used by the analysis instruction:
// {'left eye close': 0.23, 'jaw drop': 0.40}; names lowercased, 2-decimal
// densities, ascending AU-index order (the observation's order).
std::string positive_au_dict(const AuObservation& obs);
// Unquoted style used by the verification instruction:
// {left eye close: 0.23, jaw drop: 0.40}.
std::string positive_au_dict_plain(const AuObservation& obs);

enum class Verdict {
    Correct,
    Incorrect,
    Unparseable,
};

std::string verdict_name(Verdict v);

// Case-insensitive, whitespace-trimmed exact match first; otherwise a
// substring search that keeps "correct" inside "incorrect" from counting
// twice. Both-or-neither found -> Unparseable.
Verdict parse_verdict(const std::string& response);

// Strict single-label parse of a constrained response: strips quotes,
// punctuation and whitespace, then normalizes against the profile's label
// set. Throws ParseError carrying the raw response.
ExpressionLabel parse_label(const std::string& response, const LabelProfile& profile);

} // namespace expcot
