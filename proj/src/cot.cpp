#include "expcot/cot.hpp"

#include "expcot/errors.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <sstream>

namespace expcot {

namespace {

std::string to_lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::string trim(const std::string& s) {
    auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) {
        return "";
    }
    auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

// Case-insensitive substring search.
std::size_t ifind(const std::string& haystack, const std::string& needle, std::size_t from) {
    const std::string h = to_lower(haystack);
    const std::string n = to_lower(needle);
    return h.find(n, from);
}

int count_words(const std::string& s) {
    std::istringstream in(s);
    std::string token;
    int count = 0;
    while (in >> token) {
        ++count;
    }
    return count;
}

const std::regex& au_index_pattern() {
    static const std::regex pattern(R"(AU\s*[0-9]+)");
    return pattern;
}

// Earliest alphabetic token in the conclusion that normalizes to a label
// inside the profile. Tokens that normalize to an out-of-profile label are
// skipped so the scan can still find an admissible one later.
std::optional<ExpressionLabel> extract_label(const std::string& conclusion,
                                             const LabelProfile& profile) {
    std::size_t i = 0;
    while (i < conclusion.size()) {
        if (!std::isalpha(static_cast<unsigned char>(conclusion[i]))) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < conclusion.size() && std::isalpha(static_cast<unsigned char>(conclusion[j]))) {
            ++j;
        }
        try {
            const ExpressionLabel label = normalize_label(conclusion.substr(i, j - i));
            if (profile.contains(label)) {
                return label;
            }
        } catch (const ParseError&) {
            // not a label token
        }
        i = j;
    }
    return std::nullopt;
}

} // namespace

std::string violation_name(CotViolation v) {
    switch (v) {
    case CotViolation::SectionEmpty:
        return "section-empty";
    case CotViolation::OverLength:
        return "over-length";
    case CotViolation::AuIndexPresent:
        return "au-index-present";
    case CotViolation::LabelOutOfProfile:
        return "label-out-of-profile";
    }
    return "unknown";
}

int count_cot_words(const std::string& key_observations,
                    const std::string& overall_interpretation,
                    const std::string& conclusion) {
    return count_words(key_observations) + count_words(overall_interpretation) +
           count_words(conclusion);
}

CotRecord parse_cot(const std::string& text, const LabelProfile& profile) {
    struct Section {
        const char* header;
        std::size_t body_begin = 0;
        std::size_t header_begin = 0;
    };
    Section sections[3] = {{kKeyObservationsHeader}, {kOverallInterpretationHeader}, {kConclusionHeader}};

    std::size_t from = 0;
    for (auto& section : sections) {
        const std::size_t at = ifind(text, section.header, from);
        if (at == std::string::npos) {
            throw ParseError(std::string("missing section header: \"") + section.header + "\"",
                             text);
        }
        section.header_begin = at;
        section.body_begin = at + std::string(section.header).size();
        from = section.body_begin;
    }

    CotRecord rec;
    rec.key_observations =
        trim(text.substr(sections[0].body_begin, sections[1].header_begin - sections[0].body_begin));
    rec.overall_interpretation =
        trim(text.substr(sections[1].body_begin, sections[2].header_begin - sections[1].body_begin));
    rec.conclusion = trim(text.substr(sections[2].body_begin));

    const auto label = extract_label(rec.conclusion, profile);
    if (!label) {
        throw ParseError("no expression label recognized in conclusion", rec.conclusion);
    }
    rec.label = *label;
    rec.word_count = count_cot_words(rec.key_observations, rec.overall_interpretation, rec.conclusion);
    return rec;
}

std::vector<CotViolation> validate_cot(const CotRecord& rec, const LabelProfile& profile) {
    std::vector<CotViolation> violations;
    if (rec.key_observations.empty() || rec.overall_interpretation.empty() ||
        rec.conclusion.empty()) {
        violations.push_back(CotViolation::SectionEmpty);
    }
    if (count_cot_words(rec.key_observations, rec.overall_interpretation, rec.conclusion) >
        kCotWordLimit) {
        violations.push_back(CotViolation::OverLength);
    }
    if (std::regex_search(rec.key_observations, au_index_pattern()) ||
        std::regex_search(rec.overall_interpretation, au_index_pattern()) ||
        std::regex_search(rec.conclusion, au_index_pattern())) {
        violations.push_back(CotViolation::AuIndexPresent);
    }
    if (!profile.contains(rec.label)) {
        violations.push_back(CotViolation::LabelOutOfProfile);
    }
    return violations;
}

std::string serialize_cot(const CotRecord& rec) {
    std::string out;
    out += kKeyObservationsHeader;
    out += " " + rec.key_observations + "\n";
    out += kOverallInterpretationHeader;
    out += " " + rec.overall_interpretation + "\n";
    out += kConclusionHeader;
    out += " " + rec.conclusion;
    return out;
}

nlohmann::json cot_to_json(const CotRecord& rec) {
    return nlohmann::json{
        {"key_observations", rec.key_observations},
        {"overall_interpretation", rec.overall_interpretation},
        {"conclusion", rec.conclusion},
        {"label", label_name(rec.label)},
        {"word_count", rec.word_count},
    };
}

CotRecord cot_from_json(const nlohmann::json& j, const LabelProfile& profile) {
    CotRecord rec;
    rec.key_observations = j.at("key_observations").get<std::string>();
    rec.overall_interpretation = j.at("overall_interpretation").get<std::string>();
    rec.conclusion = j.at("conclusion").get<std::string>();
    rec.label = normalize_label(j.at("label").get<std::string>());
    if (j.contains("word_count")) {
        rec.word_count = j.at("word_count").get<int>();
    } else {
        rec.word_count =
            count_cot_words(rec.key_observations, rec.overall_interpretation, rec.conclusion);
    }
    if (!profile.contains(rec.label)) {
        throw ParseError("label out of profile " + profile.name() + ": " + label_name(rec.label),
                         label_name(rec.label));
    }
    return rec;
}

} // namespace expcot
