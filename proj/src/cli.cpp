#include "expcot/cli.hpp"

#include "expcot/config.hpp"
#include "expcot/dataset.hpp"
#include "expcot/errors.hpp"
#include "expcot/pipeline.hpp"
#include "expcot/score.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace expcot {

namespace {

std::string iso_timestamp() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%FT%TZ", &tm);
    return buf;
}

enum class LogLevel { Debug = 0, Info = 1, Warn = 2, Error = 3 };

LogLevel log_level_from_name(const std::string& name) {
    if (name == "debug") {
        return LogLevel::Debug;
    }
    if (name == "info") {
        return LogLevel::Info;
    }
    if (name == "warn") {
        return LogLevel::Warn;
    }
    if (name == "error") {
        return LogLevel::Error;
    }
    throw ConfigError("unknown log level: " + name);
}

struct Logger {
    LogLevel threshold = LogLevel::Info;
    bool json = false;

    void log(LogLevel level, const std::string& msg) const {
        if (level < threshold) {
            return;
        }
        static const char* kNames[] = {"debug", "info", "warn", "error"};
        const char* name = kNames[static_cast<int>(level)];
        if (json) {
            std::cerr << nlohmann::json{{"ts", iso_timestamp()}, {"level", name}, {"msg", msg}}
                             .dump()
                      << "\n";
        } else {
            std::cerr << name << ": " << msg << "\n";
        }
    }

    void debug(const std::string& msg) const { log(LogLevel::Debug, msg); }
    void info(const std::string& msg) const { log(LogLevel::Info, msg); }
    void warn(const std::string& msg) const { log(LogLevel::Warn, msg); }
    void error(const std::string& msg) const { log(LogLevel::Error, msg); }
};

void write_json_file(const std::filesystem::path& file, const nlohmann::json& j) {
    if (file.has_parent_path()) {
        std::filesystem::create_directories(file.parent_path());
    }
    std::ofstream out(file, std::ios::trunc);
    if (!out) {
        throw ConfigError("cannot write " + file.string());
    }
    out << j.dump(2) << "\n";
}

std::shared_ptr<Gateway> build_gateway(const RunConfig& config,
                                       std::shared_ptr<TranscriptLog> transcript) {
    std::shared_ptr<ChatBackend> backend;
    if (config.gateway.backend == "http") {
        backend = std::make_shared<HttpChatBackend>(config.gateway.endpoint, config.gateway.model,
                                                    config.resolved_api_key());
    } else if (config.gateway.script_file.empty()) {
        backend = std::make_shared<ScriptedBackend>();
    } else {
        backend = ScriptedBackend::from_script_file(config.gateway.script_file);
    }
    GatewayOptions options;
    options.requests_per_second = config.gateway.requests_per_second;
    options.burst_capacity = config.gateway.burst_capacity;
    return std::make_shared<Gateway>(std::move(backend), std::move(transcript), options);
}

std::shared_ptr<AuBackend> build_au_backend(const RunConfig& config) {
    if (config.au_backend.kind == "precomputed") {
        return std::make_shared<PrecomputedAuBackend>(config.au_backend.path);
    }
    if (config.au_backend.kind == "service") {
        return std::make_shared<InferenceServiceAuBackend>(config.au_backend.url);
    }
    return std::make_shared<StubAuBackend>();
}

EngineConfig build_engine_config(const RunConfig& config) {
    EngineConfig engine_config;
    engine_config.policy = config.policy;
    engine_config.default_profile = config.default_profile;
    if (!config.au_names_file.empty()) {
        engine_config.table = AuNameTable::load(config.au_names_file);
    }
    if (!config.template_dir.empty()) {
        engine_config.prompts = PromptSet::load_overrides(config.template_dir);
    }
    return engine_config;
}

// Rows usable as scoring input: either bare analyses ({"sample_id", "cot"})
// or whole outcome lines from a generation run (their final_cot is taken).
std::vector<std::pair<std::string, CotRecord>> load_cot_rows(const std::filesystem::path& file,
                                                             const LabelProfile& profile) {
    std::ifstream in(file);
    if (!in) {
        throw ConfigError("cannot open records: " + file.string());
    }
    std::vector<std::pair<std::string, CotRecord>> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        const std::string where = file.string() + ":" + std::to_string(line_no);
        try {
            const nlohmann::json j = nlohmann::json::parse(line);
            const auto id = j.at("sample_id").get<std::string>();
            if (j.contains("cot") && !j.at("cot").is_null()) {
                rows.emplace_back(id, cot_from_json(j.at("cot"), profile));
            } else if (j.contains("final_cot") && !j.at("final_cot").is_null()) {
                rows.emplace_back(id, cot_from_json(j.at("final_cot"), profile));
            } else {
                throw ConfigError("row has neither \"cot\" nor \"final_cot\"");
            }
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(where + ": " + e.what());
        } catch (const Error& e) {
            throw ConfigError(where + ": " + e.what());
        }
    }
    if (rows.empty()) {
        throw ConfigError(file.string() + ": no scoreable records");
    }
    return rows;
}

struct GenerateArgs {
    std::string config_path;
    std::string manifest_path;
    std::string out_dir;
    int parallelism = 0;
    bool dry_run = false;
    bool resume = false;
};

int cmd_generate(const GenerateArgs& a, Logger& log) {
    RunConfig config = RunConfig::load(a.config_path);
    if (!a.out_dir.empty()) {
        config.output_dir = a.out_dir;
    }
    if (a.parallelism > 0) {
        config.policy.parallelism = a.parallelism;
    }
    config.validate();
    log.threshold = log_level_from_name(config.log_level);

    const std::filesystem::path out_dir = config.output_dir;
    std::filesystem::create_directories(out_dir);

    const auto manifest = load_manifest(a.manifest_path, config.default_profile);
    const nlohmann::json manifest_report = {{"total", manifest.size()},
                                            {"per_dataset", manifest_dataset_counts(manifest)}};
    write_config_snapshot(out_dir / "config_snapshot.json", config);

    if (a.dry_run) {
        std::ofstream(out_dir / "transcripts.jsonl", std::ios::app);
        write_json_file(out_dir / "manifest_report.json", manifest_report);
        std::cout << manifest_report.dump(2) << "\n";
        log.info("dry run: manifest valid, " + std::to_string(manifest.size()) +
                 " samples, no completions requested");
        return kExitOk;
    }

    auto transcript = std::make_shared<TranscriptLog>(out_dir / "transcripts.jsonl");
    Engine engine(build_gateway(config, transcript), build_au_backend(config),
                  build_engine_config(config));

    const auto outcomes_path = out_dir / "outcomes.jsonl";
    std::vector<SampleOutcome> previous;
    std::set<std::string> done;
    if (a.resume && std::filesystem::exists(outcomes_path)) {
        previous = read_outcomes(outcomes_path);
        for (const auto& o : previous) {
            done.insert(o.sample_id);
        }
        log.info("resume: skipping " + std::to_string(done.size()) + " finished samples");
    }

    log.info("running " + std::to_string(manifest.size() - done.size()) + " samples at parallelism " +
             std::to_string(config.policy.parallelism));
    std::vector<SampleOutcome> fresh = engine.run_batch(manifest, done);

    std::map<std::string, SampleOutcome> previous_by_id;
    for (auto& o : previous) {
        previous_by_id.emplace(o.sample_id, std::move(o));
    }
    std::map<std::string, SampleOutcome> fresh_by_id;
    for (auto& o : fresh) {
        fresh_by_id.emplace(o.sample_id, std::move(o));
    }
    std::vector<SampleOutcome> merged;
    merged.reserve(manifest.size());
    for (const auto& input : manifest) {
        if (auto it = fresh_by_id.find(input.sample_id); it != fresh_by_id.end()) {
            merged.push_back(std::move(it->second));
        } else if (auto it2 = previous_by_id.find(input.sample_id); it2 != previous_by_id.end()) {
            merged.push_back(std::move(it2->second));
        }
    }
    write_outcomes(outcomes_path, merged);

    const BatchReport report = Engine::summarize(merged);
    nlohmann::json report_json = report.to_json();
    report_json["manifest"] = manifest_report;
    write_json_file(out_dir / "run_report.json", report_json);
    std::cout << report_json.dump(2) << "\n";

    if (report.failed > 0) {
        log.warn(std::to_string(report.failed) + " of " + std::to_string(report.total) +
                 " samples failed");
        return kExitPartial;
    }
    log.info("all " + std::to_string(report.total) + " samples accepted");
    return kExitOk;
}

struct ScoreArgs {
    std::string pred_path;
    std::string gt_path;
    std::string judge = "mock";
    std::string script_path;
    std::string config_path;
    std::string profile = "affectnet8";
    std::string out_path = "score_report.json";
};

int cmd_score(const ScoreArgs& a, Logger& log) {
    RunConfig config;
    if (!a.config_path.empty()) {
        config = RunConfig::load(a.config_path);
        log.threshold = log_level_from_name(config.log_level);
    }
    if (a.judge != "mock" && a.judge != "http") {
        throw ConfigError("--judge must be \"mock\" or \"http\"");
    }
    config.gateway.backend = a.judge;
    if (!a.script_path.empty()) {
        config.gateway.script_file = a.script_path;
    }
    config.validate();

    const LabelProfile& profile = LabelProfile::by_name(a.profile);
    const auto preds = load_cot_rows(a.pred_path, profile);
    auto gts = load_cot_rows(a.gt_path, profile);
    std::map<std::string, CotRecord> gt_by_id;
    for (auto& [id, rec] : gts) {
        gt_by_id.emplace(id, std::move(rec));
    }

    std::vector<ScorePair> pairs;
    pairs.reserve(preds.size());
    for (const auto& [id, rec] : preds) {
        const auto it = gt_by_id.find(id);
        if (it == gt_by_id.end()) {
            throw ConfigError("no ground-truth record for sample \"" + id + "\"");
        }
        pairs.push_back({id, rec, it->second});
    }

    const std::filesystem::path out_path = a.out_path;
    auto transcript = std::make_shared<TranscriptLog>(
        out_path.parent_path() / (out_path.stem().string() + "_judge_transcript.jsonl"));
    auto gateway = build_gateway(config, transcript);
    Judge judge(gateway);

    log.info("scoring " + std::to_string(pairs.size()) + " record pairs");
    const ScoreReport report = score_pairs(judge, pairs);
    write_json_file(out_path, report.to_json());
    if (!a.config_path.empty()) {
        write_config_snapshot(
            out_path.parent_path() / (out_path.stem().string() + "_config_snapshot.json"),
            config);
    }
    std::cout << report.to_json().dump(2) << "\n";

    if (!report.failures.empty()) {
        log.warn(std::to_string(report.failures.size()) + " pairs failed scoring");
        return kExitPartial;
    }
    return kExitOk;
}

struct EmitArgs {
    std::string outcomes_path;
    double mix = 0.75;
    std::uint64_t seed = 0;
    std::string out_path;
};

int cmd_emit_dataset(const EmitArgs& a, Logger& log) {
    const auto outcomes = read_outcomes(a.outcomes_path);
    std::vector<SampleOutcome> accepted;
    int skipped = 0;
    for (const auto& o : outcomes) {
        if (o.status == SampleStatus::Accepted) {
            accepted.push_back(o);
        } else {
            ++skipped;
        }
    }
    if (accepted.empty()) {
        throw ConfigError(a.outcomes_path + ": no accepted outcomes to emit");
    }
    if (skipped > 0) {
        log.info("skipping " + std::to_string(skipped) + " non-accepted outcomes");
    }

    const MixPolicy mix{a.mix, a.seed};
    const auto records = emit(accepted, mix);
    write_records(a.out_path, records);

    const DatasetStats stats = dataset_stats(records);
    const std::filesystem::path out_path = a.out_path;
    write_json_file(out_path.parent_path() / (out_path.stem().string() + "_settings.json"),
                    nlohmann::json{{"outcomes", a.outcomes_path},
                                   {"fer_fraction", a.mix},
                                   {"seed", a.seed},
                                   {"out", a.out_path},
                                   {"skipped_not_accepted", skipped}});
    std::cout << stats.to_json().dump(2) << "\n";
    log.info("emitted " + std::to_string(records.size()) + " conversations");
    return kExitOk;
}

struct ValidateArgs {
    std::string manifest_path;
    std::string config_path;
    std::string out_path;
};

int cmd_validate(const ValidateArgs& a, Logger& log) {
    std::string profile = "affectnet8";
    if (!a.config_path.empty()) {
        profile = RunConfig::load(a.config_path).default_profile;
    }
    const auto manifest = load_manifest(a.manifest_path, profile);
    const nlohmann::json report = {{"total", manifest.size()},
                                   {"per_dataset", manifest_dataset_counts(manifest)}};
    if (!a.out_path.empty()) {
        write_json_file(a.out_path, report);
    }
    std::cout << report.dump(2) << "\n";
    log.info("manifest valid: " + std::to_string(manifest.size()) + " samples");
    return kExitOk;
}

struct StatsArgs {
    std::string in_path;
    std::string out_path;
};

int cmd_stats(const StatsArgs& a, Logger&) {
    const auto records = read_records(a.in_path);
    const nlohmann::json report = dataset_stats(records).to_json();
    if (!a.out_path.empty()) {
        write_json_file(a.out_path, report);
    }
    std::cout << report.dump(2) << "\n";
    return kExitOk;
}

} // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"AU-conditioned expression analysis pipeline"};
    app.set_version_flag("--version", std::string("expcot ") + kVersion);
    app.require_subcommand(1);

    Logger log;
    bool log_json = false;
    app.add_flag("--log-json", log_json, "emit logs as JSON lines");

    GenerateArgs gen;
    CLI::App* generate = app.add_subcommand(
        "generate", "run the analysis engine over a sample manifest");
    generate->fallthrough();
    generate->add_option("--config", gen.config_path, "run configuration JSON")->required();
    generate->add_option("--manifest", gen.manifest_path, "sample manifest JSONL")->required();
    generate->add_option("--out-dir", gen.out_dir, "override the configured output directory");
    generate->add_option("--parallelism", gen.parallelism, "override worker count");
    generate->add_flag("--dry-run", gen.dry_run, "validate inputs, request no completions");
    generate->add_flag("--resume", gen.resume, "skip samples already present in outcomes.jsonl");

    ScoreArgs score;
    CLI::App* score_cmd =
        app.add_subcommand("score", "judge predicted analyses against ground truth");
    score_cmd->fallthrough();
    score_cmd->add_option("--pred", score.pred_path, "predicted records JSONL")->required();
    score_cmd->add_option("--gt", score.gt_path, "ground-truth records JSONL")->required();
    score_cmd->add_option("--judge", score.judge, "judge backend: mock or http");
    score_cmd->add_option("--script", score.script_path, "scripted judge replies (mock)");
    score_cmd->add_option("--config", score.config_path, "run configuration JSON");
    score_cmd->add_option("--profile", score.profile, "label profile for record parsing");
    score_cmd->add_option("--out", score.out_path, "report destination");

    EmitArgs emit_args;
    CLI::App* emit_cmd =
        app.add_subcommand("emit-dataset", "convert accepted outcomes into conversations");
    emit_cmd->fallthrough();
    emit_cmd->add_option("--outcomes", emit_args.outcomes_path, "outcomes JSONL")->required();
    emit_cmd->add_option("--mix", emit_args.mix, "FER share of the task mix")
        ->check(CLI::Range(0.0, 1.0));
    emit_cmd->add_option("--seed", emit_args.seed, "task-assignment seed");
    emit_cmd->add_option("--out", emit_args.out_path, "dataset destination JSONL")->required();

    ValidateArgs val;
    CLI::App* validate = app.add_subcommand("validate", "check a manifest without running");
    validate->fallthrough();
    validate->add_option("--manifest", val.manifest_path, "sample manifest JSONL")->required();
    validate->add_option("--config", val.config_path, "run configuration JSON");
    validate->add_option("--out", val.out_path, "report destination");

    StatsArgs stats;
    CLI::App* stats_cmd = app.add_subcommand("stats", "summarize an emitted dataset");
    stats_cmd->fallthrough();
    stats_cmd->add_option("--in", stats.in_path, "dataset JSONL")->required();
    stats_cmd->add_option("--out", stats.out_path, "report destination");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }
    log.json = log_json;

    try {
        if (*generate) {
            return cmd_generate(gen, log);
        }
        if (*score_cmd) {
            return cmd_score(score, log);
        }
        if (*emit_cmd) {
            return cmd_emit_dataset(emit_args, log);
        }
        if (*validate) {
            return cmd_validate(val, log);
        }
        if (*stats_cmd) {
            return cmd_stats(stats, log);
        }
    } catch (const Error& e) {
        log.error(e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        log.error(std::string("unexpected: ") + e.what());
        return kExitConfig;
    }
    return kExitConfig;
}

} // namespace expcot
