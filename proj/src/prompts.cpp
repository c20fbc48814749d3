#include "expcot/prompts.hpp"

#include "expcot/errors.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace expcot {

namespace {

constexpr const char* kAu2DesBody =
    "Provided step-by-step analysis of the face based on the specified Facial Action Units. "
    "The positive AUs are {positive_aus}, and other AUs' density are 0.";

constexpr const char* kDes2ExpBody =
    "Based on the description, just give me the expression result without other words. "
    "The result should only be one of the following: 'Surprise', 'Fear', 'Disgust', "
    "'Happiness', 'Sadness', 'Anger', 'Neutral' and 'Contempt'.\n"
    "Description: {description}";

constexpr const char* kVerifyBody =
    "Determine whether the description contains AU {positive_aus_plain}, and the relevant "
    "degree corresponds to AU density. Also check if the generated expression label matches "
    "{gt_label}. Just give me the result 'Correct' or 'Incorrect', without any other words.";

constexpr const char* kFeedbackPlainBody =
    "The just expression and analysis are incorrect. A revised response is requested based on "
    "the observations and analysis.";

constexpr const char* kFeedbackWithLabelBody =
    "The generated expression and analysis remain incorrect. The correct expression is "
    "{emotion}. Please provide a revised analysis that aligns with this expression.";

constexpr const char* kRefineBody =
    "Enhance the expression description to make it more reasonable, presenting a logical flow "
    "of thought.\n"
    "Avoid the use of personal pronouns.\n"
    "New analysis should contain 3 parts: key observations, overall emotional interpretation, "
    "and conclusion.\n"
    "The word count does not exceed 130.\n"
    "Ensure that no AU indices (e.g., 'AU 1', 'AU 47') are included in the description.\n"
    "Write the three parts under the literal section headers 'Key Observations:', "
    "'Overall Emotional Interpretation:' and 'Conclusion:'.\n"
    "Original description: {previous_analysis}.";

std::string stage_file_name(PromptStage stage) {
    switch (stage) {
    case PromptStage::AU2Des:
        return "au2des.txt";
    case PromptStage::Des2Exp:
        return "des2exp.txt";
    case PromptStage::Verify:
        return "verify.txt";
    case PromptStage::FeedbackPlain:
        return "feedback_plain.txt";
    case PromptStage::FeedbackWithLabel:
        return "feedback_with_label.txt";
    case PromptStage::Refine:
        return "refine.txt";
    }
    return "";
}

std::string to_lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

bool is_slot_char(char c) {
    return (c >= 'a' && c <= 'z') || c == '_';
}

} // namespace

std::string prompt_stage_name(PromptStage stage) {
    switch (stage) {
    case PromptStage::AU2Des:
        return "AU2Des";
    case PromptStage::Des2Exp:
        return "Des2Exp";
    case PromptStage::Verify:
        return "Verify";
    case PromptStage::FeedbackPlain:
        return "FeedbackPlain";
    case PromptStage::FeedbackWithLabel:
        return "FeedbackWithLabel";
    case PromptStage::Refine:
        return "Refine";
    }
    return "unknown";
}

const PromptSet& PromptSet::embedded_defaults() {
    static const PromptSet set = [] {
        PromptSet s;
        s.bodies_ = {
            {PromptStage::AU2Des, kAu2DesBody},
            {PromptStage::Des2Exp, kDes2ExpBody},
            {PromptStage::Verify, kVerifyBody},
            {PromptStage::FeedbackPlain, kFeedbackPlainBody},
            {PromptStage::FeedbackWithLabel, kFeedbackWithLabelBody},
            {PromptStage::Refine, kRefineBody},
        };
        return s;
    }();
    return set;
}

PromptSet PromptSet::load_overrides(const std::filesystem::path& dir) {
    PromptSet set = embedded_defaults();
    for (auto& [stage, body] : set.bodies_) {
        const auto file = dir / stage_file_name(stage);
        if (!std::filesystem::exists(file)) {
            continue;
        }
        std::ifstream in(file);
        if (!in) {
            throw ConfigError("cannot open template override: " + file.string());
        }
        std::ostringstream buf;
        buf << in.rdbuf();
        std::string text = buf.str();
        // Strip one trailing newline so file-based templates match embedded ones.
        if (!text.empty() && text.back() == '\n') {
            text.pop_back();
        }
        if (text.empty()) {
            throw ConfigError("template override is empty: " + file.string());
        }
        body = std::move(text);
    }
    return set;
}

const std::string& PromptSet::body(PromptStage stage) const {
    return bodies_.at(stage);
}

std::string PromptSet::render(const std::string& body,
                              const std::map<std::string, std::string>& slots) {
    std::string out;
    out.reserve(body.size());
    std::size_t i = 0;
    while (i < body.size()) {
        if (body[i] != '{') {
            out += body[i];
            ++i;
            continue;
        }
        std::size_t j = i + 1;
        while (j < body.size() && is_slot_char(body[j])) {
            ++j;
        }
        if (j < body.size() && body[j] == '}' && j > i + 1) {
            const std::string slot = body.substr(i + 1, j - i - 1);
            auto it = slots.find(slot);
            if (it == slots.end()) {
                throw ConfigError("template slot without filler: {" + slot + "}");
            }
            out += it->second;
            i = j + 1;
        } else {
            // literal brace, not a slot
            out += body[i];
            ++i;
        }
    }
    return out;
}

std::string positive_au_dict(const AuObservation& obs) {
    std::string out = "{";
    for (std::size_t i = 0; i < obs.positive.size(); ++i) {
        if (i > 0) {
            out += ", ";
        }
        out += "'" + to_lower(obs.positive[i].first) + "': " + format_density(obs.positive[i].second);
    }
    out += "}";
    return out;
}

std::string positive_au_dict_plain(const AuObservation& obs) {
    std::string out = "{";
    for (std::size_t i = 0; i < obs.positive.size(); ++i) {
        if (i > 0) {
            out += ", ";
        }
        out += to_lower(obs.positive[i].first) + ": " + format_density(obs.positive[i].second);
    }
    out += "}";
    return out;
}

std::string PromptSet::render_au2des(const AuObservation& obs) const {
    return render(body(PromptStage::AU2Des), {{"positive_aus", positive_au_dict(obs)}});
}

std::string PromptSet::render_des2exp(const std::string& description) const {
    if (description.empty()) {
        throw Error("des2exp description must be non-empty");
    }
    return render(body(PromptStage::Des2Exp), {{"description", description}});
}

std::string PromptSet::render_verify(const AuObservation& obs, ExpressionLabel gt_label) const {
    return render(body(PromptStage::Verify), {
                                                 {"positive_aus_plain", positive_au_dict_plain(obs)},
                                                 {"gt_label", label_name(gt_label)},
                                             });
}

std::string PromptSet::render_feedback(bool with_label,
                                       std::optional<ExpressionLabel> gt_label) const {
    if (!with_label) {
        return body(PromptStage::FeedbackPlain);
    }
    if (!gt_label) {
        throw Error("label-injecting feedback requested without a ground-truth label");
    }
    return render(body(PromptStage::FeedbackWithLabel), {{"emotion", label_name(*gt_label)}});
}

std::string PromptSet::render_refine(const std::string& previous_analysis) const {
    if (previous_analysis.empty()) {
        throw Error("refine input must be non-empty");
    }
    return render(body(PromptStage::Refine), {{"previous_analysis", previous_analysis}});
}

std::string render_au2des(const AuObservation& obs) {
    return PromptSet::embedded_defaults().render_au2des(obs);
}

std::string render_des2exp(const std::string& description) {
    return PromptSet::embedded_defaults().render_des2exp(description);
}

std::string render_verify(const AuObservation& obs, ExpressionLabel gt_label) {
    return PromptSet::embedded_defaults().render_verify(obs, gt_label);
}

std::string render_feedback(bool with_label, std::optional<ExpressionLabel> gt_label) {
    return PromptSet::embedded_defaults().render_feedback(with_label, gt_label);
}

std::string render_refine(const std::string& previous_analysis) {
    return PromptSet::embedded_defaults().render_refine(previous_analysis);
}

std::string verdict_name(Verdict v) {
    switch (v) {
    case Verdict::Correct:
        return "Correct";
    case Verdict::Incorrect:
        return "Incorrect";
    case Verdict::Unparseable:
        return "Unparseable";
    }
    return "unknown";
}

Verdict parse_verdict(const std::string& response) {
    std::string s = response;
    auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) {
        return Verdict::Unparseable;
    }
    auto end = s.find_last_not_of(" \t\r\n");
    s = to_lower(s.substr(begin, end - begin + 1));

    if (s == "correct") {
        return Verdict::Correct;
    }
    if (s == "incorrect") {
        return Verdict::Incorrect;
    }

    // Substring fallback: each "correct" occurrence counts as standalone
    // unless it is the tail of an "incorrect" occurrence.
    bool has_correct = false;
    bool has_incorrect = false;
    std::size_t at = 0;
    while ((at = s.find("correct", at)) != std::string::npos) {
        if (at >= 2 && s.compare(at - 2, 2, "in") == 0) {
            has_incorrect = true;
        } else {
            has_correct = true;
        }
        at += 1;
    }
    if (has_correct && !has_incorrect) {
        return Verdict::Correct;
    }
    if (has_incorrect && !has_correct) {
        return Verdict::Incorrect;
    }
    return Verdict::Unparseable;
}

ExpressionLabel parse_label(const std::string& response, const LabelProfile& profile) {
    std::size_t begin = 0;
    std::size_t end = response.size();
    while (begin < end && !std::isalpha(static_cast<unsigned char>(response[begin]))) {
        ++begin;
    }
    while (end > begin && !std::isalpha(static_cast<unsigned char>(response[end - 1]))) {
        --end;
    }
    ExpressionLabel label;
    try {
        label = normalize_label(response.substr(begin, end - begin));
    } catch (const ParseError&) {
        throw ParseError("unrecognized expression label: \"" + response + "\"", response);
    }
    if (!profile.contains(label)) {
        throw ParseError("label not in profile " + profile.name() + ": " + label_name(label),
                         response);
    }
    return label;
}

} // namespace expcot
