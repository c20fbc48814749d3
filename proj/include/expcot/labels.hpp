#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace expcot {

// Closed 8-class expression set.
enum class ExpressionLabel {
    Surprise,
    Fear,
    Disgust,
    Happiness,
    Sadness,
    Anger,
    Neutral,
    Contempt,
};

inline constexpr int kExpressionLabelCount = 8;

// Canonical display name, e.g. "Happiness".
const std::string& label_name(ExpressionLabel label);

// All 8 labels in canonical order.
const std::vector<ExpressionLabel>& all_labels();

// Maps spelling variants onto canonical labels ("sad" -> Sadness).
// The shipped table is replaceable from a config file.
class SynonymTable {
public:
    static const SynonymTable& shipped_default();
    // One "<synonym>\t<canonical-label-name>" record per line.
    static SynonymTable load(const std::filesystem::path& file);

    // Lowercase synonym -> canonical lowercase label name, identity for
    // canonical names themselves.
    std::optional<std::string> canonicalize(const std::string& lowercased) const;

private:
    std::map<std::string, std::string> mapping_;
};

// Admissible label set for one dataset family.
class LabelProfile {
public:
    // "rafdb" and "affectnet7": the 7 labels excluding Contempt.
    // "affectnet8": all 8 labels.
    static const LabelProfile& by_name(const std::string& name);
    static bool is_known_name(const std::string& name);

    const std::string& name() const { return name_; }
    const std::vector<ExpressionLabel>& allowed() const { return allowed_; }
    bool contains(ExpressionLabel label) const;

private:
    LabelProfile(std::string name, std::vector<ExpressionLabel> allowed)
        : name_(std::move(name)), allowed_(std::move(allowed)) {}

    std::string name_;
    std::vector<ExpressionLabel> allowed_;
};

// Lowercase, trim, synonym-table lookup, exact match.
// Throws ParseError (carrying the raw input) for unrecognized strings.
ExpressionLabel normalize_label(const std::string& raw);
ExpressionLabel normalize_label(const std::string& raw, const SynonymTable& synonyms);

} // namespace expcot
