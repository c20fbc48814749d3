#pragma once

#include "expcot/cot.hpp"
#include "expcot/pipeline.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace expcot {

enum class TaskKind {
    Fer,
    Cot,
};

std::string task_name(TaskKind t);
TaskKind task_from_name(const std::string& name);

// Fixed conversation wording. The placeholder marks where the image tokens
// are spliced in at training time; it must open the first human turn.
inline constexpr const char* kImagePlaceholder = "<image>";
inline constexpr const char* kFerInstruction =
    "What expression does this face show? Answer with the expression name only.";
inline constexpr const char* kCotInstruction =
    "Analyze this facial expression step by step: give the key observations, the "
    "overall emotional interpretation, and the conclusion.";

struct ConversationTurn {
    std::string role; // "human" | "assistant"
    std::string content;

    bool operator==(const ConversationTurn&) const = default;
};

// One instruction-tuning conversation. FER is a single question/answer round
// whose answer is the expression name alone; CoT adds a first round carrying
// the flat-text analysis, then asks the FER question verbatim.
struct ConversationRecord {
    std::string sample_id;
    std::string image_ref;
    std::string dataset;
    TaskKind task = TaskKind::Fer;
    std::string label; // expression name, never a class id
    std::vector<ConversationTurn> turns;

    bool operator==(const ConversationRecord&) const = default;

    nlohmann::json to_json() const;
    static ConversationRecord from_json(const nlohmann::json& j);
};

struct MixPolicy {
    double fer_fraction = 0.75;
    std::uint64_t seed = 0;

    void validate() const;
};

// Converts accepted outcomes into conversations, preserving input order.
// Task assignment is an independent seeded coin per sample, so a fixed seed
// reproduces the file byte for byte. Throws on any non-Accepted outcome or
// analysis that fails re-validation.
std::vector<ConversationRecord> emit(const std::vector<SampleOutcome>& outcomes,
                                     const MixPolicy& mix);

void write_records(const std::filesystem::path& file,
                   const std::vector<ConversationRecord>& records);
std::vector<ConversationRecord> read_records(const std::filesystem::path& file);

// Counting summary: tasks, labels, source datasets, and a 10-word-bucket
// histogram over CoT answer lengths (bucket key = lower bound).
struct DatasetStats {
    int total = 0;
    std::map<std::string, int> per_task;
    std::map<std::string, int> per_label;
    std::map<std::string, int> per_dataset;
    std::map<int, int> cot_word_histogram;

    nlohmann::json to_json() const;
};

DatasetStats dataset_stats(const std::vector<ConversationRecord>& records);

} // namespace expcot
