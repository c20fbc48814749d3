#include "expcot/dataset.hpp"

#include "expcot/errors.hpp"

#include <fstream>
#include <random>
#include <sstream>

namespace expcot {

namespace {

// Uniform double in [0, 1) built from the top 53 bits of one engine draw;
// distribution classes vary across standard libraries, this does not.
double unit_draw(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

ConversationTurn human_turn(std::string content) {
    return {"human", std::move(content)};
}

ConversationTurn assistant_turn(std::string content) {
    return {"assistant", std::move(content)};
}

} // namespace

std::string task_name(TaskKind t) {
    return t == TaskKind::Fer ? "FER" : "CoT";
}

TaskKind task_from_name(const std::string& name) {
    if (name == "FER") {
        return TaskKind::Fer;
    }
    if (name == "CoT") {
        return TaskKind::Cot;
    }
    throw ParseError("unknown task name: \"" + name + "\"", name);
}

nlohmann::json ConversationRecord::to_json() const {
    nlohmann::json turn_rows = nlohmann::json::array();
    for (const auto& turn : turns) {
        turn_rows.push_back({{"role", turn.role}, {"content", turn.content}});
    }
    return nlohmann::json{
        {"sample_id", sample_id}, {"image_ref", image_ref}, {"dataset", dataset},
        {"task", task_name(task)}, {"label", label},        {"turns", turn_rows},
    };
}

ConversationRecord ConversationRecord::from_json(const nlohmann::json& j) {
    ConversationRecord rec;
    rec.sample_id = j.at("sample_id").get<std::string>();
    rec.image_ref = j.at("image_ref").get<std::string>();
    rec.dataset = j.at("dataset").get<std::string>();
    rec.task = task_from_name(j.at("task").get<std::string>());
    rec.label = j.at("label").get<std::string>();
    for (const auto& turn : j.at("turns")) {
        rec.turns.push_back(
            {turn.at("role").get<std::string>(), turn.at("content").get<std::string>()});
    }
    return rec;
}

void MixPolicy::validate() const {
    if (fer_fraction < 0.0 || fer_fraction > 1.0) {
        throw ConfigError("fer_fraction must lie in [0, 1]");
    }
}

std::vector<ConversationRecord> emit(const std::vector<SampleOutcome>& outcomes,
                                     const MixPolicy& mix) {
    mix.validate();
    std::mt19937_64 rng(mix.seed);
    std::vector<ConversationRecord> records;
    records.reserve(outcomes.size());
    for (const auto& o : outcomes) {
        if (o.status != SampleStatus::Accepted || !o.final_cot) {
            throw Error("emit requires accepted outcomes with an analysis; sample \"" +
                        o.sample_id + "\" is not");
        }
        if (!validate_cot(*o.final_cot, profile_for_dataset(o.dataset)).empty()) {
            throw Error("sample \"" + o.sample_id + "\" carries an analysis that fails " +
                        "validation; refusing to emit it");
        }

        ConversationRecord rec;
        rec.sample_id = o.sample_id;
        rec.image_ref = o.sample_id;
        rec.dataset = o.dataset;
        rec.label = label_name(o.gt_label);
        rec.task = unit_draw(rng) < mix.fer_fraction ? TaskKind::Fer : TaskKind::Cot;

        const std::string fer_question = std::string(kImagePlaceholder) + "\n" + kFerInstruction;
        if (rec.task == TaskKind::Fer) {
            rec.turns.push_back(human_turn(fer_question));
            rec.turns.push_back(assistant_turn(rec.label));
        } else {
            rec.turns.push_back(
                human_turn(std::string(kImagePlaceholder) + "\n" + kCotInstruction));
            rec.turns.push_back(assistant_turn(serialize_cot(*o.final_cot)));
            // Second round repeats the FER question verbatim (minus the image
            // placeholder, already bound in round one) for uniform label
            // supervision across both tasks.
            rec.turns.push_back(human_turn(kFerInstruction));
            rec.turns.push_back(assistant_turn(rec.label));
        }
        records.push_back(std::move(rec));
    }
    return records;
}

void write_records(const std::filesystem::path& file,
                   const std::vector<ConversationRecord>& records) {
    if (file.has_parent_path()) {
        std::filesystem::create_directories(file.parent_path());
    }
    std::ofstream out(file, std::ios::trunc);
    if (!out) {
        throw ConfigError("cannot write dataset: " + file.string());
    }
    for (const auto& rec : records) {
        out << rec.to_json().dump() << "\n";
    }
}

std::vector<ConversationRecord> read_records(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) {
        throw ConfigError("cannot open dataset: " + file.string());
    }
    std::vector<ConversationRecord> records;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        try {
            records.push_back(ConversationRecord::from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            throw ConfigError(file.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return records;
}

nlohmann::json DatasetStats::to_json() const {
    nlohmann::json histogram = nlohmann::json::object();
    for (const auto& [bucket, count] : cot_word_histogram) {
        std::ostringstream key;
        key << bucket << "-" << bucket + 9;
        histogram[key.str()] = count;
    }
    return nlohmann::json{
        {"total", total},
        {"per_task", per_task},
        {"per_label", per_label},
        {"per_dataset", per_dataset},
        {"cot_word_histogram", histogram},
    };
}

DatasetStats dataset_stats(const std::vector<ConversationRecord>& records) {
    DatasetStats stats;
    stats.total = static_cast<int>(records.size());
    for (const auto& rec : records) {
        stats.per_task[task_name(rec.task)] += 1;
        stats.per_label[rec.label] += 1;
        stats.per_dataset[rec.dataset] += 1;
        if (rec.task == TaskKind::Cot && rec.turns.size() >= 2) {
            int words = 0;
            std::istringstream in(rec.turns[1].content);
            std::string token;
            while (in >> token) {
                ++words;
            }
            stats.cot_word_histogram[(words / 10) * 10] += 1;
        }
    }
    return stats;
}

} // namespace expcot
