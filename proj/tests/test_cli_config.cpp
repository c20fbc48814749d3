#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "expcot/cli.hpp"
#include "expcot/config.hpp"
#include "expcot/cot.hpp"
#include "expcot/dataset.hpp"
#include "expcot/errors.hpp"
#include "expcot/pipeline.hpp"
#include "expcot/score.hpp"

#include "helpers.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace expcot;
using testutil::TempDir;

namespace {

struct EnvVar {
    std::string name;
    EnvVar(const std::string& n, const std::string& value) : name(n) {
        ::setenv(name.c_str(), value.c_str(), 1);
    }
    ~EnvVar() { ::unsetenv(name.c_str()); }
};

struct CliResult {
    int exit_code = 0;
    std::string out;
    std::string err;
};

CliResult run(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("expcot");
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    std::ostringstream captured_out;
    std::ostringstream captured_err;
    auto* old_out = std::cout.rdbuf(captured_out.rdbuf());
    auto* old_err = std::cerr.rdbuf(captured_err.rdbuf());
    CliResult result;
    try {
        result.exit_code = run_cli(static_cast<int>(argv.size()), argv.data());
    } catch (...) {
        std::cout.rdbuf(old_out);
        std::cerr.rdbuf(old_err);
        throw;
    }
    std::cout.rdbuf(old_out);
    std::cerr.rdbuf(old_err);
    result.out = captured_out.str();
    result.err = captured_err.str();
    return result;
}

std::string path_of(const TempDir& dir, const std::string& name) {
    return dir.file(name).string();
}

} // namespace

TEST_CASE("environment interpolation") {
    CHECK(interpolate_env("plain-value") == "plain-value");
    CHECK(interpolate_env("") == "");

    EnvVar var("EXPCOT_TEST_SECRET_1", "sk-abc");
    CHECK(interpolate_env("${EXPCOT_TEST_SECRET_1}") == "sk-abc");
    CHECK(interpolate_env("prefix-${EXPCOT_TEST_SECRET_1}-suffix") == "prefix-sk-abc-suffix");

    CHECK_THROWS_AS(interpolate_env("${EXPCOT_TEST_UNSET_VARIABLE_42}"), ConfigError);
    CHECK_THROWS_AS(interpolate_env("${EXPCOT_TEST_SECRET_1"), ConfigError);
    CHECK_THROWS_AS(interpolate_env("${}"), ConfigError);
}

TEST_CASE("run config defaults, parsing, and key resolution") {
    const RunConfig defaults = RunConfig::from_json(nlohmann::json::object());
    CHECK(defaults.gateway.backend == "mock");
    CHECK(defaults.gateway.model == "gpt-4o");
    CHECK(defaults.au_backend.kind == "stub");
    CHECK(defaults.policy.label_injection_threshold == 3);
    CHECK(defaults.policy.max_rounds == 6);
    CHECK(defaults.default_profile == "affectnet8");
    CHECK(defaults.output_dir == "out");
    CHECK_NOTHROW(defaults.validate());

    const auto j = nlohmann::json::parse(R"({
        "gateway": {"backend": "http", "endpoint": "http://x/v1/chat/completions",
                    "model": "m", "api_key": "${EXPCOT_TEST_SECRET_2}",
                    "requests_per_second": 3.5, "burst_capacity": 9},
        "au_backend": {"kind": "stub"},
        "policy": {"label_injection_threshold": 2, "max_rounds": 5, "parallelism": 8},
        "default_profile": "rafdb",
        "output_dir": "runs/a",
        "log_level": "debug"
    })");
    const RunConfig config = RunConfig::from_json(j);
    CHECK(config.gateway.backend == "http");
    CHECK(config.gateway.requests_per_second == doctest::Approx(3.5));
    CHECK(config.policy.parallelism == 8);
    CHECK(config.default_profile == "rafdb");
    CHECK_NOTHROW(config.validate());

    EnvVar var("EXPCOT_TEST_SECRET_2", "resolved-key");
    CHECK(config.resolved_api_key() == "resolved-key");

    TempDir dir;
    testutil::write_file(dir.file("c.json"), j.dump());
    const RunConfig loaded = RunConfig::load(dir.file("c.json"));
    CHECK(loaded.gateway.endpoint == config.gateway.endpoint);

    CHECK_THROWS_AS(RunConfig::load(dir.file("absent.json")), ConfigError);
    testutil::write_file(dir.file("broken.json"), "{nope");
    CHECK_THROWS_AS(RunConfig::load(dir.file("broken.json")), ConfigError);
}

TEST_CASE("run config validation rejects inconsistent settings") {
    auto valid = RunConfig::from_json(nlohmann::json::object());

    auto bad = valid;
    bad.gateway.backend = "grpc";
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = valid;
    bad.gateway.backend = "http";
    CHECK_THROWS_AS(bad.validate(), ConfigError); // endpoint missing

    bad = valid;
    bad.gateway.requests_per_second = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = valid;
    bad.au_backend.kind = "csv";
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = valid;
    bad.au_backend.kind = "precomputed";
    CHECK_THROWS_AS(bad.validate(), ConfigError); // path missing

    bad = valid;
    bad.au_backend.kind = "service";
    CHECK_THROWS_AS(bad.validate(), ConfigError); // url missing

    bad = valid;
    bad.default_profile = "imagenet";
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = valid;
    bad.log_level = "verbose";
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = valid;
    bad.policy.max_rounds = 99;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = valid;
    bad.gateway.script_file = "/definitely/not/here.json";
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = valid;
    bad.template_dir = "/definitely/not/here";
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("config snapshots never contain resolved secrets") {
    auto config = RunConfig::from_json(nlohmann::json::object());

    config.gateway.api_key = "sk-literal-secret";
    auto snapshot = config.snapshot_json();
    CHECK(snapshot.at("gateway").at("api_key") == "<redacted>");
    CHECK(snapshot.dump().find("sk-literal-secret") == std::string::npos);

    // The interpolation marker itself is safe to persist: it names the
    // variable, not the secret.
    config.gateway.api_key = "${OPENAI_API_KEY}";
    snapshot = config.snapshot_json();
    CHECK(snapshot.at("gateway").at("api_key") == "${OPENAI_API_KEY}");

    config.gateway.api_key = "";
    snapshot = config.snapshot_json();
    CHECK(snapshot.at("gateway").at("api_key") == "");

    TempDir dir;
    config.gateway.api_key = "sk-another-literal";
    write_config_snapshot(dir.file("snap.json"), config);
    const auto text = testutil::read_file(dir.file("snap.json"));
    CHECK(text.find("sk-another-literal") == std::string::npos);
    CHECK(text.find("<redacted>") != std::string::npos);
}

TEST_CASE("cli reports its version and rejects bad invocations") {
    const auto version = run({"--version"});
    CHECK(version.exit_code == kExitOk);
    CHECK(version.out.find("expcot 1.0.0") != std::string::npos);

    CHECK(run({}).exit_code == kExitConfig);
    CHECK(run({"unknown-subcommand"}).exit_code == kExitConfig);
    CHECK(run({"generate"}).exit_code == kExitConfig); // missing required options
    CHECK(run({"validate", "--manifest"}).exit_code == kExitConfig);
}

namespace {

std::string manifest_text(int n, const std::string& dataset = "rafdb") {
    const char* labels[] = {"happiness", "sadness", "anger", "surprise"};
    std::string text;
    for (int i = 0; i < n; ++i) {
        nlohmann::json j = {{"sample_id", "s" + std::to_string(i)},
                            {"dataset", dataset},
                            {"gt_label", labels[i % 4]}};
        j["au"] = std::vector<double>(24, 0.0);
        j["au"][12] = 0.61;
        text += j.dump() + "\n";
    }
    return text;
}

// Scripted replies accepting every sample on the first round, except the
// listed ids which fail verification forever.
nlohmann::json success_script(int n, const std::set<int>& failing = {}) {
    const char* labels[] = {"happiness", "sadness", "anger", "surprise"};
    nlohmann::json keyed = nlohmann::json::array();
    for (int i = 0; i < n; ++i) {
        const std::string id = "s" + std::to_string(i);
        const std::string label = labels[i % 4];
        keyed.push_back({{"sample_id", id},
                         {"stage", "AU2Des"},
                         {"response", "The lip corners pull upward, suggesting " + label + "."}});
        keyed.push_back({{"sample_id", id}, {"stage", "Des2Exp"}, {"response", label}});
        keyed.push_back({{"sample_id", id},
                         {"stage", "Verify"},
                         {"response", failing.count(i) ? "Incorrect" : "Correct"}});
        keyed.push_back({{"sample_id", id},
                         {"stage", "Refine"},
                         {"response", testutil::valid_cot_text(label)}});
    }
    return nlohmann::json{{"keyed", keyed}};
}

std::string write_run_config(const TempDir& dir, const std::string& script_name,
                             int max_rounds = 2) {
    const nlohmann::json config = {
        {"gateway",
         {{"backend", "mock"},
          {"script_file", path_of(dir, script_name)},
          {"requests_per_second", 100000.0},
          {"burst_capacity", 100000.0}}},
        {"au_backend", {{"kind", "stub"}}},
        {"policy",
         {{"label_injection_threshold", 1}, {"max_rounds", max_rounds}, {"parallelism", 3}}},
        {"default_profile", "affectnet8"},
        {"output_dir", path_of(dir, "out")},
        {"log_level", "warn"},
    };
    testutil::write_file(dir.file("config.json"), config.dump(2));
    return path_of(dir, "config.json");
}

} // namespace

TEST_CASE("validate subcommand reports totals or a precise diagnosis") {
    TempDir dir;
    testutil::write_file(dir.file("m.jsonl"), manifest_text(3));

    const auto good = run({"validate", "--manifest", path_of(dir, "m.jsonl")});
    CHECK(good.exit_code == kExitOk);
    const auto report = nlohmann::json::parse(good.out);
    CHECK(report.at("total") == 3);
    CHECK(report.at("per_dataset").at("rafdb") == 3);

    nlohmann::json bad_row = {{"sample_id", "x"}, {"dataset", "rafdb"}, {"gt_label", "anger"}};
    bad_row["au"] = std::vector<double>(24, 0.0);
    bad_row["au"][7] = 1.5;
    testutil::write_file(dir.file("bad.jsonl"), bad_row.dump() + "\n");
    const auto bad = run({"validate", "--manifest", path_of(dir, "bad.jsonl")});
    CHECK(bad.exit_code == kExitConfig);
    CHECK(bad.err.find("sample \"x\"") != std::string::npos);
    CHECK(bad.err.find("au[7]") != std::string::npos);

    // --out also writes the report to disk.
    const auto with_out = run({"validate", "--manifest", path_of(dir, "m.jsonl"), "--out",
                               path_of(dir, "report.json")});
    CHECK(with_out.exit_code == kExitOk);
    CHECK(nlohmann::json::parse(testutil::read_file(dir.file("report.json"))).at("total") == 3);
}

TEST_CASE("json log mode emits structured lines on stderr") {
    TempDir dir;
    testutil::write_file(dir.file("m.jsonl"), manifest_text(2));
    const auto result =
        run({"--log-json", "validate", "--manifest", path_of(dir, "m.jsonl")});
    CHECK(result.exit_code == kExitOk);
    std::istringstream err(result.err);
    std::string line;
    int json_lines = 0;
    while (std::getline(err, line)) {
        if (line.empty()) {
            continue;
        }
        const auto j = nlohmann::json::parse(line);
        CHECK(j.contains("ts"));
        CHECK(j.contains("level"));
        CHECK(j.contains("msg"));
        ++json_lines;
    }
    CHECK(json_lines >= 1);
}

TEST_CASE("dry runs validate everything and request no completions") {
    TempDir dir;
    testutil::write_file(dir.file("m.jsonl"), manifest_text(5));
    testutil::write_file(dir.file("script.json"), success_script(5).dump());
    const auto config_path = write_run_config(dir, "script.json");

    const auto result = run({"generate", "--config", config_path, "--manifest",
                             path_of(dir, "m.jsonl"), "--dry-run"});
    CHECK(result.exit_code == kExitOk);
    const auto report = nlohmann::json::parse(result.out);
    CHECK(report.at("total") == 5);

    const auto out_dir = dir.file("out");
    CHECK(std::filesystem::exists(out_dir / "config_snapshot.json"));
    CHECK(std::filesystem::exists(out_dir / "manifest_report.json"));
    CHECK(std::filesystem::exists(out_dir / "transcripts.jsonl"));
    CHECK(std::filesystem::file_size(out_dir / "transcripts.jsonl") == 0);
    CHECK_FALSE(std::filesystem::exists(out_dir / "outcomes.jsonl"));
}

TEST_CASE("generation runs end to end, reports failures, and feeds the other subcommands") {
    TempDir dir;
    testutil::write_file(dir.file("m.jsonl"), manifest_text(20));
    testutil::write_file(dir.file("script.json"), success_script(20, {18, 19}).dump());
    const auto config_path = write_run_config(dir, "script.json");

    const auto result = run({"generate", "--config", config_path, "--manifest",
                             path_of(dir, "m.jsonl")});
    CHECK(result.exit_code == kExitPartial);
    const auto report = nlohmann::json::parse(result.out);
    CHECK(report.at("total") == 20);
    CHECK(report.at("accepted") == 18);
    CHECK(report.at("failed") == 2);
    CHECK(report.at("label_injected") == 2);
    CHECK(report.at("manifest").at("total") == 20);

    const auto out_dir = dir.file("out");
    const auto outcomes = read_outcomes(out_dir / "outcomes.jsonl");
    REQUIRE(outcomes.size() == 20);
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        CHECK(outcomes[i].sample_id == "s" + std::to_string(i));
    }
    CHECK(outcomes[18].status == SampleStatus::Failed);
    CHECK(outcomes[18].failure_reason == "exhausted-rounds");

    // The snapshot mirrors the effective configuration.
    const auto snapshot =
        nlohmann::json::parse(testutil::read_file(out_dir / "config_snapshot.json"));
    CHECK(snapshot.at("policy").at("parallelism") == 3);
    CHECK(snapshot.at("gateway").at("backend") == "mock");

    SUBCASE("emit-dataset converts the accepted outcomes") {
        const auto emitted = run({"emit-dataset", "--outcomes",
                                  (out_dir / "outcomes.jsonl").string(), "--mix", "0.5", "--seed",
                                  "7", "--out", path_of(dir, "dataset.jsonl")});
        CHECK(emitted.exit_code == kExitOk);
        const auto stats = nlohmann::json::parse(emitted.out);
        CHECK(stats.at("total") == 18);
        CHECK(stats.at("per_task").at("FER").get<int>() +
                  stats.at("per_task").at("CoT").get<int>() ==
              18);

        const auto settings = nlohmann::json::parse(
            testutil::read_file(dir.file("dataset_settings.json")));
        CHECK(settings.at("skipped_not_accepted") == 2);
        CHECK(settings.at("seed") == 7);

        // Same seed, byte-identical output.
        const auto again = run({"emit-dataset", "--outcomes",
                                (out_dir / "outcomes.jsonl").string(), "--mix", "0.5", "--seed",
                                "7", "--out", path_of(dir, "dataset2.jsonl")});
        CHECK(again.exit_code == kExitOk);
        CHECK(testutil::read_file(dir.file("dataset.jsonl")) ==
              testutil::read_file(dir.file("dataset2.jsonl")));

        const auto stats_run = run({"stats", "--in", path_of(dir, "dataset.jsonl"), "--out",
                                    path_of(dir, "stats.json")});
        CHECK(stats_run.exit_code == kExitOk);
        CHECK(nlohmann::json::parse(stats_run.out).at("total") == 18);
        CHECK(std::filesystem::exists(dir.file("stats.json")));
    }

    SUBCASE("out-of-range mix fractions are rejected at parse time") {
        const auto bad = run({"emit-dataset", "--outcomes",
                              (out_dir / "outcomes.jsonl").string(), "--mix", "1.5", "--out",
                              path_of(dir, "d.jsonl")});
        CHECK(bad.exit_code == kExitConfig);
    }
}

TEST_CASE("resume merges finished outcomes with freshly generated ones") {
    TempDir dir;
    testutil::write_file(dir.file("m.jsonl"), manifest_text(12));
    testutil::write_file(dir.file("script.json"), success_script(12).dump());
    const auto config_path = write_run_config(dir, "script.json");

    const auto first = run({"generate", "--config", config_path, "--manifest",
                            path_of(dir, "m.jsonl")});
    CHECK(first.exit_code == kExitOk);

    // Grow the manifest and swap in a script that would FAIL the original
    // samples if they were re-run; only the new ones have working replies.
    testutil::write_file(dir.file("m.jsonl"), manifest_text(20));
    auto second_script = success_script(20);
    for (auto& entry : second_script.at("keyed")) {
        const std::string id = entry.at("sample_id").get<std::string>();
        if (entry.at("stage") == "Verify" && id.size() >= 2 &&
            std::stoi(id.substr(1)) < 12) {
            entry["response"] = "Incorrect";
        }
    }
    testutil::write_file(dir.file("script.json"), second_script.dump());

    const auto resumed = run({"generate", "--config", config_path, "--manifest",
                              path_of(dir, "m.jsonl"), "--resume"});
    CHECK(resumed.exit_code == kExitOk);
    const auto report = nlohmann::json::parse(resumed.out);
    CHECK(report.at("total") == 20);
    CHECK(report.at("accepted") == 20);

    const auto outcomes = read_outcomes(dir.file("out") / "outcomes.jsonl");
    REQUIRE(outcomes.size() == 20);
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        CHECK(outcomes[i].sample_id == "s" + std::to_string(i));
        CHECK(outcomes[i].status == SampleStatus::Accepted);
    }
}

TEST_CASE("generate rejects a config pointing at a missing script") {
    TempDir dir;
    testutil::write_file(dir.file("m.jsonl"), manifest_text(2));
    const auto config_path = write_run_config(dir, "script-that-does-not-exist.json");
    const auto result = run({"generate", "--config", config_path, "--manifest",
                             path_of(dir, "m.jsonl")});
    CHECK(result.exit_code == kExitConfig);
    CHECK(result.err.find("script_file") != std::string::npos);
}

namespace {

std::string cot_rows_text(const std::vector<std::pair<std::string, std::string>>& id_labels,
                          const std::string& field) {
    std::string text;
    for (const auto& [id, label] : id_labels) {
        const auto rec =
            parse_cot(testutil::valid_cot_text(label), LabelProfile::by_name("affectnet8"));
        text += nlohmann::json{{"sample_id", id}, {field, cot_to_json(rec)}}.dump() + "\n";
    }
    return text;
}

} // namespace

TEST_CASE("score subcommand judges prediction files against ground truth") {
    TempDir dir;
    // Predictions use the generation-output shape, ground truth the bare shape.
    testutil::write_file(dir.file("pred.jsonl"),
                         cot_rows_text({{"a", "happiness"}, {"b", "sadness"}, {"c", "anger"}},
                                       "final_cot"));
    testutil::write_file(dir.file("gt.jsonl"),
                         cot_rows_text({{"a", "happiness"}, {"b", "sadness"}, {"c", "fear"}},
                                       "cot"));
    testutil::write_file(dir.file("judge_script.json"),
                         nlohmann::json{{"keyed",
                                         {{{"stage", "JudgeKeyObs"}, {"response", "5"}},
                                          {{"stage", "JudgeOverall"}, {"response", "4"}}}}}
                             .dump());

    const auto result = run({"score", "--pred", path_of(dir, "pred.jsonl"), "--gt",
                             path_of(dir, "gt.jsonl"), "--script",
                             path_of(dir, "judge_script.json"), "--out",
                             path_of(dir, "report.json")});
    CHECK(result.exit_code == kExitOk);
    const auto report = nlohmann::json::parse(result.out);
    CHECK(report.at("scored") == 3);
    CHECK(report.at("failed") == 0);
    CHECK(report.at("mean_key_obs") == doctest::Approx(5.0));
    CHECK(report.at("mean_overall") == doctest::Approx(4.0));
    CHECK(report.at("mean_conclusion") == doctest::Approx(10.0 / 3.0));
    CHECK(report.at("mean_aggregate") ==
          doctest::Approx(((14.0 / 15.0) * 2 + 9.0 / 15.0) / 3.0));
    CHECK(std::filesystem::exists(dir.file("report.json")));
    CHECK(std::filesystem::exists(dir.file("report_judge_transcript.jsonl")));
    const auto judge_entries =
        TranscriptLog::read_all(dir.file("report_judge_transcript.jsonl"));
    CHECK(judge_entries.size() == 6);

    SUBCASE("a prediction without ground truth is a configuration error") {
        testutil::write_file(dir.file("pred2.jsonl"),
                             cot_rows_text({{"a", "happiness"}, {"zz", "anger"}}, "cot"));
        const auto missing = run({"score", "--pred", path_of(dir, "pred2.jsonl"), "--gt",
                                  path_of(dir, "gt.jsonl"), "--script",
                                  path_of(dir, "judge_script.json"), "--out",
                                  path_of(dir, "r2.json")});
        CHECK(missing.exit_code == kExitConfig);
        CHECK(missing.err.find("no ground-truth record for sample \"zz\"") != std::string::npos);
    }

    SUBCASE("unjudgeable pairs downgrade the exit code, not the run") {
        testutil::write_file(dir.file("broken_judge.json"),
                             nlohmann::json{{"keyed",
                                             {{{"stage", "JudgeKeyObs"}, {"response", "maybe"}},
                                              {{"stage", "JudgeOverall"}, {"response", "4"}}}}}
                                 .dump());
        const auto partial = run({"score", "--pred", path_of(dir, "pred.jsonl"), "--gt",
                                  path_of(dir, "gt.jsonl"), "--script",
                                  path_of(dir, "broken_judge.json"), "--out",
                                  path_of(dir, "r3.json")});
        CHECK(partial.exit_code == kExitPartial);
        const auto r = nlohmann::json::parse(partial.out);
        CHECK(r.at("scored") == 0);
        CHECK(r.at("failed") == 3);
    }

    SUBCASE("unknown judge kinds are rejected") {
        const auto bad = run({"score", "--pred", path_of(dir, "pred.jsonl"), "--gt",
                              path_of(dir, "gt.jsonl"), "--judge", "oracle", "--out",
                              path_of(dir, "r4.json")});
        CHECK(bad.exit_code == kExitConfig);
    }
}

TEST_CASE("score rejects records that fail the requested profile") {
    TempDir dir;
    testutil::write_file(dir.file("pred.jsonl"), cot_rows_text({{"a", "contempt"}}, "cot"));
    testutil::write_file(dir.file("gt.jsonl"), cot_rows_text({{"a", "contempt"}}, "cot"));
    const auto result = run({"score", "--pred", path_of(dir, "pred.jsonl"), "--gt",
                             path_of(dir, "gt.jsonl"), "--profile", "rafdb", "--out",
                             path_of(dir, "r.json")});
    CHECK(result.exit_code == kExitConfig);
    CHECK(result.err.find("pred.jsonl:1") != std::string::npos);
}

TEST_CASE("scoring rows need an analysis under a known key") {
    TempDir dir;
    testutil::write_file(dir.file("pred.jsonl"), "{\"sample_id\": \"a\"}\n");
    testutil::write_file(dir.file("gt.jsonl"), cot_rows_text({{"a", "anger"}}, "cot"));
    const auto result = run({"score", "--pred", path_of(dir, "pred.jsonl"), "--gt",
                             path_of(dir, "gt.jsonl"), "--out", path_of(dir, "r.json")});
    CHECK(result.exit_code == kExitConfig);
    CHECK(result.err.find("neither") != std::string::npos);
}
