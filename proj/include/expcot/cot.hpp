#pragma once

#include "expcot/labels.hpp"

#include <string>
#include <vector>

#include <json.hpp>

namespace expcot {

inline constexpr int kCotWordLimit = 130;

inline constexpr const char* kKeyObservationsHeader = "Key Observations:";
inline constexpr const char* kOverallInterpretationHeader = "Overall Emotional Interpretation:";
inline constexpr const char* kConclusionHeader = "Conclusion:";

// Three-part chain of thought plus the expression label extracted from the
// conclusion. word_count is the whitespace-token count over the three
// section bodies (headers excluded).
struct CotRecord {
    std::string key_observations;
    std::string overall_interpretation;
    std::string conclusion;
    ExpressionLabel label = ExpressionLabel::Neutral;
    int word_count = 0;

    bool operator==(const CotRecord&) const = default;
};

enum class CotViolation {
    SectionEmpty,
    OverLength,
    AuIndexPresent,
    LabelOutOfProfile,
};

std::string violation_name(CotViolation v);

// Whitespace-token count over the three section bodies.
int count_cot_words(const std::string& key_observations,
                    const std::string& overall_interpretation,
                    const std::string& conclusion);

// Splits on the three case-insensitive headers in order, extracts the label
// from the conclusion (earliest recognized label token in the profile wins)
// and fills word_count. Throws ParseError naming the missing header, or a
// no-label-in-conclusion ParseError.
CotRecord parse_cot(const std::string& text, const LabelProfile& profile);

// Every violated constraint, in the fixed order
// {section-empty, over-length, au-index-present, label-out-of-profile}.
// Empty result means the record satisfies all CotRecord invariants.
std::vector<CotViolation> validate_cot(const CotRecord& rec, const LabelProfile& profile);

// Canonical flat-text form with the three literal headers; the inverse of
// parse_cot for records whose conclusion names their label.
std::string serialize_cot(const CotRecord& rec);

nlohmann::json cot_to_json(const CotRecord& rec);
CotRecord cot_from_json(const nlohmann::json& j, const LabelProfile& profile);

} // namespace expcot
