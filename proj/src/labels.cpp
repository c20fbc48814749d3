#include "expcot/labels.hpp"

#include "expcot/errors.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>

namespace expcot {

namespace {

const std::array<std::string, kExpressionLabelCount> kLabelNames = {
    "Surprise", "Fear", "Disgust", "Happiness", "Sadness", "Anger", "Neutral", "Contempt",
};

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

std::optional<ExpressionLabel> label_from_lowercase(const std::string& s) {
    for (int i = 0; i < kExpressionLabelCount; ++i) {
        if (to_lower(kLabelNames[static_cast<std::size_t>(i)]) == s) {
            return static_cast<ExpressionLabel>(i);
        }
    }
    return std::nullopt;
}

} // namespace

const std::string& label_name(ExpressionLabel label) {
    return kLabelNames[static_cast<std::size_t>(label)];
}

const std::vector<ExpressionLabel>& all_labels() {
    static const std::vector<ExpressionLabel> labels = [] {
        std::vector<ExpressionLabel> v;
        for (int i = 0; i < kExpressionLabelCount; ++i) {
            v.push_back(static_cast<ExpressionLabel>(i));
        }
        return v;
    }();
    return labels;
}

const SynonymTable& SynonymTable::shipped_default() {
    static const SynonymTable table = [] {
        SynonymTable t;
        t.mapping_ = {
            {"sad", "sadness"},
            {"happy", "happiness"},
            {"angry", "anger"},
            {"surprised", "surprise"},
            {"fearful", "fear"},
            {"disgusted", "disgust"},
            {"contemptuous", "contempt"},
        };
        return t;
    }();
    return table;
}

SynonymTable SynonymTable::load(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) {
        throw ConfigError("cannot open synonym table: " + file.string());
    }
    SynonymTable t;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw ConfigError(file.string() + ":" + std::to_string(line_no) +
                              ": expected <synonym>\\t<canonical>");
        }
        const std::string synonym = to_lower(trim(line.substr(0, tab)));
        const std::string canonical = to_lower(trim(line.substr(tab + 1)));
        if (!label_from_lowercase(canonical)) {
            throw ConfigError(file.string() + ":" + std::to_string(line_no) +
                              ": unknown canonical label: " + canonical);
        }
        t.mapping_[synonym] = canonical;
    }
    return t;
}

std::optional<std::string> SynonymTable::canonicalize(const std::string& lowercased) const {
    auto it = mapping_.find(lowercased);
    if (it != mapping_.end()) {
        return it->second;
    }
    if (label_from_lowercase(lowercased)) {
        return lowercased;
    }
    return std::nullopt;
}

const LabelProfile& LabelProfile::by_name(const std::string& name) {
    static const std::vector<ExpressionLabel> seven = {
        ExpressionLabel::Surprise, ExpressionLabel::Fear,    ExpressionLabel::Disgust,
        ExpressionLabel::Happiness, ExpressionLabel::Sadness, ExpressionLabel::Anger,
        ExpressionLabel::Neutral,
    };
    static const LabelProfile rafdb("rafdb", seven);
    static const LabelProfile affectnet7("affectnet7", seven);
    static const LabelProfile affectnet8("affectnet8", all_labels());
    if (name == "rafdb") {
        return rafdb;
    }
    if (name == "affectnet7") {
        return affectnet7;
    }
    if (name == "affectnet8") {
        return affectnet8;
    }
    throw ConfigError("unknown label profile: " + name +
                      " (expected rafdb, affectnet7 or affectnet8)");
}

bool LabelProfile::is_known_name(const std::string& name) {
    return name == "rafdb" || name == "affectnet7" || name == "affectnet8";
}

bool LabelProfile::contains(ExpressionLabel label) const {
    return std::find(allowed_.begin(), allowed_.end(), label) != allowed_.end();
}

ExpressionLabel normalize_label(const std::string& raw) {
    return normalize_label(raw, SynonymTable::shipped_default());
}

ExpressionLabel normalize_label(const std::string& raw, const SynonymTable& synonyms) {
    const std::string lowered = to_lower(trim(raw));
    if (auto canonical = synonyms.canonicalize(lowered)) {
        if (auto label = label_from_lowercase(*canonical)) {
            return *label;
        }
    }
    throw ParseError("unrecognized expression label: \"" + raw + "\"", raw);
}

} // namespace expcot
