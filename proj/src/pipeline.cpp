#include "expcot/pipeline.hpp"

#include "expcot/errors.hpp"

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <random>
#include <thread>

namespace expcot {

void PipelinePolicy::validate() const {
    if (label_injection_threshold < 1 || max_rounds < label_injection_threshold ||
        max_rounds > 10) {
        throw ConfigError("pipeline policy requires 1 <= threshold <= max_rounds <= 10");
    }
    if (parallelism < 1) {
        throw ConfigError("parallelism must be positive");
    }
}

std::string sample_status_name(SampleStatus s) {
    return s == SampleStatus::Accepted ? "Accepted" : "Failed";
}

nlohmann::json SampleOutcome::to_json() const {
    nlohmann::json j = {
        {"sample_id", sample_id},
        {"dataset", dataset},
        {"gt_label", label_name(gt_label)},
        {"status", sample_status_name(status)},
        {"rounds_used", rounds_used},
        {"label_injected", label_injected},
        {"verdicts", verdicts},
        {"transcript_ref", transcript_ref},
        {"failure_reason", failure_reason},
    };
    j["final_cot"] = final_cot ? cot_to_json(*final_cot) : nlohmann::json(nullptr);
    return j;
}

SampleOutcome SampleOutcome::from_json(const nlohmann::json& j) {
    SampleOutcome out;
    out.sample_id = j.at("sample_id").get<std::string>();
    out.dataset = j.at("dataset").get<std::string>();
    out.gt_label = normalize_label(j.at("gt_label").get<std::string>());
    out.status = j.at("status").get<std::string>() == "Accepted" ? SampleStatus::Accepted
                                                                 : SampleStatus::Failed;
    out.rounds_used = j.at("rounds_used").get<int>();
    out.label_injected = j.at("label_injected").get<bool>();
    out.verdicts = j.at("verdicts").get<std::vector<std::string>>();
    out.transcript_ref = j.value("transcript_ref", "");
    out.failure_reason = j.value("failure_reason", "");
    if (j.contains("final_cot") && !j.at("final_cot").is_null()) {
        out.final_cot = cot_from_json(j.at("final_cot"), profile_for_dataset(out.dataset));
    }
    return out;
}

PrecomputedAuBackend::PrecomputedAuBackend(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) {
        throw ConfigError("cannot open AU file: " + file.string());
    }
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        try {
            const nlohmann::json j = nlohmann::json::parse(line);
            vectors_.emplace(j.at("sample_id").get<std::string>(),
                             AuVector::from_densities(j.at("au").get<std::vector<double>>()));
        } catch (const std::exception& e) {
            throw ConfigError(file.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

AuVector PrecomputedAuBackend::fetch(const std::string& key) {
    auto it = vectors_.find(key);
    if (it == vectors_.end()) {
        throw Error("no precomputed AU vector for \"" + key + "\"");
    }
    return it->second;
}

InferenceServiceAuBackend::InferenceServiceAuBackend(std::string url) : url_(std::move(url)) {}

AuVector InferenceServiceAuBackend::fetch(const std::string& key) {
    auto scheme_end = url_.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigError("AU service URL must include a scheme: " + url_);
    }
    auto path_begin = url_.find('/', scheme_end + 3);
    const std::string host = path_begin == std::string::npos ? url_ : url_.substr(0, path_begin);
    const std::string path = path_begin == std::string::npos ? "/" : url_.substr(path_begin);

    httplib::Client client(host);
    client.set_read_timeout(30, 0);
    const nlohmann::json payload = {{"sample_id", key}};
    auto res = client.Post(path, payload.dump(), "application/json");
    if (!res || res->status != 200) {
        throw Error("AU service request failed for \"" + key + "\"" +
                    (res ? " (HTTP " + std::to_string(res->status) + ")" : ""));
    }
    try {
        const nlohmann::json body = nlohmann::json::parse(res->body);
        return AuVector::from_densities(body.at("au").get<std::vector<double>>());
    } catch (const std::exception& e) {
        throw Error("AU service returned a malformed body for \"" + key + "\": " + e.what());
    }
}

AuVector StubAuBackend::fetch(const std::string& key) {
    // FNV-1a, fixed across platforms so stub vectors are reproducible.
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : key) {
        h ^= c;
        h *= 1099511628211ull;
    }
    std::mt19937_64 rng(h);
    std::vector<double> densities(kActionUnitCount, 0.0);
    const int positives = 1 + static_cast<int>(rng() % 5);
    for (int i = 0; i < positives; ++i) {
        const auto index = static_cast<std::size_t>(rng() % kActionUnitCount);
        const double cents = 1.0 + static_cast<double>(rng() % 100);
        densities[index] = cents / 100.0;
    }
    return AuVector::from_densities(densities);
}

const LabelProfile& profile_for_dataset(const std::string& dataset,
                                        const std::string& default_profile) {
    if (dataset == "rafdb") {
        return LabelProfile::by_name("rafdb");
    }
    if (dataset == "affectnet7") {
        return LabelProfile::by_name("affectnet7");
    }
    if (dataset == "affectnet" || dataset == "affectnet8") {
        return LabelProfile::by_name("affectnet8");
    }
    return LabelProfile::by_name(default_profile);
}

Engine::Engine(std::shared_ptr<Gateway> gateway, std::shared_ptr<AuBackend> au_backend,
               EngineConfig config)
    : gateway_(std::move(gateway)), au_backend_(std::move(au_backend)), config_(std::move(config)) {
    if (!gateway_ || !au_backend_) {
        throw ConfigError("engine needs a gateway and an AU backend");
    }
    config_.policy.validate();
    config_.creative_cfg.validate();
    config_.extraction_cfg.validate();
}

std::string Engine::refined_analysis_attempt(const std::string& sample_id,
                                             const std::string& analysis, int attempt) {
    DialogueMemory memory(sample_id);
    memory.append({Role::User, config_.prompts.render_refine(analysis)});
    return gateway_->complete(memory, config_.creative_cfg, {sample_id, "Refine", attempt}).content;
}

SampleOutcome Engine::run_sample(const SampleInput& input) {
    SampleOutcome out;
    out.sample_id = input.sample_id;
    out.dataset = input.dataset;
    out.gt_label = input.gt_label;
    out.transcript_ref =
        gateway_->transcript().path().filename().string() + "#" + input.sample_id;

    const LabelProfile& full_set = LabelProfile::by_name("affectnet8");
    const LabelProfile& dataset_profile =
        profile_for_dataset(input.dataset, config_.default_profile);

    try {
        const AuVector au = input.au ? *input.au
                                     : au_backend_->fetch(input.au_ref.empty() ? input.sample_id
                                                                               : input.au_ref);
        const AuObservation obs = partition(au, config_.table);

        DialogueMemory memory(input.sample_id);
        memory.append({Role::User, config_.prompts.render_au2des(obs)});

        std::string analysis;
        bool accepted = false;
        int round = 0;
        while (round < config_.policy.max_rounds) {
            ++round;

            // AU2Des: generation on round 1, regeneration after feedback later.
            const ChatMessage description =
                gateway_->complete(memory, config_.creative_cfg, {input.sample_id, "AU2Des", round});
            memory.append(description);
            analysis = description.content;

            // Des2Exp continues the same memory.
            memory.append({Role::User, config_.prompts.render_des2exp(analysis)});
            const ChatMessage label_response = gateway_->complete(
                memory, config_.extraction_cfg, {input.sample_id, "Des2Exp", round});
            memory.append(label_response);

            // The instruction enumerates all eight classes, so extraction
            // runs against the full set; the match below is what gates.
            std::optional<ExpressionLabel> extracted;
            try {
                extracted = parse_label(label_response.content, full_set);
            } catch (const ParseError&) {
                // unparseable label: the round fails, feedback recovers
            }

            // Result verification: fresh single-turn conversation with the
            // description and generated label pasted in.
            std::string verify_message = config_.prompts.render_verify(obs, input.gt_label);
            verify_message += "\n\nDescription: " + analysis;
            verify_message += "\nGenerated expression label: " +
                              (extracted ? label_name(*extracted) : label_response.content);
            DialogueMemory verify_memory(input.sample_id);
            verify_memory.append({Role::User, verify_message});
            const ChatMessage verdict_response = gateway_->complete(
                verify_memory, config_.extraction_cfg, {input.sample_id, "Verify", round});

            // Unparseable verdicts count as Incorrect; the feedback loop is
            // the designed recovery path.
            const Verdict verdict = parse_verdict(verdict_response.content);
            const bool verdict_ok = verdict == Verdict::Correct;
            const bool label_ok = extracted && *extracted == input.gt_label;
            out.verdicts.push_back(verdict_ok && label_ok ? "Correct" : "Incorrect");

            if (verdict_ok && label_ok) {
                accepted = true;
                break;
            }
            if (round < config_.policy.max_rounds) {
                const bool inject = round >= config_.policy.label_injection_threshold;
                memory.append({Role::User,
                               config_.prompts.render_feedback(inject, inject
                                                                           ? std::optional(input.gt_label)
                                                                           : std::nullopt)});
                if (inject) {
                    out.label_injected = true;
                }
            }
        }
        out.rounds_used = round;

        if (!accepted) {
            out.status = SampleStatus::Failed;
            out.failure_reason = "exhausted-rounds";
            return out;
        }

        // Format refinement on a fresh memory holding only the accepted
        // analysis; one retry before giving up.
        for (int attempt = 1; attempt <= 2; ++attempt) {
            const std::string refined =
                refined_analysis_attempt(input.sample_id, analysis, attempt);
            try {
                const CotRecord record = parse_cot(refined, dataset_profile);
                if (validate_cot(record, dataset_profile).empty()) {
                    out.final_cot = record;
                    out.status = SampleStatus::Accepted;
                    break;
                }
            } catch (const ParseError&) {
                // malformed refinement output; retry once
            }
        }
        if (out.status != SampleStatus::Accepted) {
            out.failure_reason = "refinement-failed";
        }
    } catch (const Error& e) {
        out.status = SampleStatus::Failed;
        out.failure_reason = e.what();
    }
    return out;
}

std::vector<SampleOutcome> Engine::run_batch(const std::vector<SampleInput>& manifest,
                                             const std::set<std::string>& already_done) {
    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        if (!already_done.count(manifest[i].sample_id)) {
            pending.push_back(i);
        }
    }

    std::vector<std::optional<SampleOutcome>> slots(manifest.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t at = next.fetch_add(1);
            if (at >= pending.size()) {
                return;
            }
            const std::size_t index = pending[at];
            slots[index] = run_sample(manifest[index]);
        }
    };

    const int threads =
        std::max(1, std::min<int>(config_.policy.parallelism,
                                  static_cast<int>(pending.size())));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(threads));
        for (int i = 0; i < threads; ++i) {
            pool.emplace_back(worker);
        }
        for (auto& t : pool) {
            t.join();
        }
    }

    std::vector<SampleOutcome> outcomes;
    outcomes.reserve(pending.size());
    for (auto& slot : slots) {
        if (slot) {
            outcomes.push_back(std::move(*slot));
        }
    }
    return outcomes;
}

BatchReport Engine::summarize(const std::vector<SampleOutcome>& outcomes) {
    BatchReport report;
    report.total = static_cast<int>(outcomes.size());
    long long round_sum = 0;
    for (const auto& o : outcomes) {
        report.per_dataset[o.dataset] += 1;
        round_sum += o.rounds_used;
        if (o.status == SampleStatus::Accepted) {
            report.accepted += 1;
            report.accepted_per_dataset[o.dataset] += 1;
        } else {
            report.failed += 1;
        }
        if (o.label_injected) {
            report.label_injected += 1;
        }
    }
    report.mean_rounds =
        outcomes.empty() ? 0.0 : static_cast<double>(round_sum) / static_cast<double>(outcomes.size());
    return report;
}

nlohmann::json BatchReport::to_json() const {
    return nlohmann::json{
        {"total", total},
        {"accepted", accepted},
        {"failed", failed},
        {"label_injected", label_injected},
        {"mean_rounds", mean_rounds},
        {"per_dataset", per_dataset},
        {"accepted_per_dataset", accepted_per_dataset},
    };
}

std::vector<SampleInput> load_manifest(const std::filesystem::path& file,
                                       const std::string& default_profile) {
    std::ifstream in(file);
    if (!in) {
        throw ConfigError("cannot open manifest: " + file.string());
    }
    std::vector<SampleInput> manifest;
    std::set<std::string> ids;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(file.string() + ":" + std::to_string(line_no) +
                              ": bad JSON: " + e.what());
        }
        SampleInput input;
        try {
            input.sample_id = j.at("sample_id").get<std::string>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError(file.string() + ":" + std::to_string(line_no) +
                              ": missing field sample_id");
        }
        const std::string where = "sample \"" + input.sample_id + "\"";
        if (input.sample_id.empty()) {
            throw ConfigError(where + ": sample_id must be non-empty");
        }
        if (!ids.insert(input.sample_id).second) {
            throw ConfigError(where + ": duplicate sample_id");
        }
        try {
            input.dataset = j.at("dataset").get<std::string>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError(where + ": missing field dataset");
        }
        try {
            input.gt_label = normalize_label(j.at("gt_label").get<std::string>());
        } catch (const nlohmann::json::exception&) {
            throw ConfigError(where + ": missing field gt_label");
        } catch (const ParseError& e) {
            throw ConfigError(where + ": gt_label: " + e.what());
        }
        const LabelProfile& profile = profile_for_dataset(input.dataset, default_profile);
        if (!profile.contains(input.gt_label)) {
            throw ConfigError(where + ": gt_label " + label_name(input.gt_label) +
                              " not in profile " + profile.name() + " for dataset " +
                              input.dataset);
        }
        if (j.contains("au")) {
            try {
                input.au = AuVector::from_densities(j.at("au").get<std::vector<double>>());
            } catch (const std::exception& e) {
                throw ConfigError(where + ": " + e.what());
            }
        } else if (j.contains("au_ref")) {
            input.au_ref = j.at("au_ref").get<std::string>();
            if (input.au_ref.empty()) {
                throw ConfigError(where + ": au_ref must be non-empty when present");
            }
        }
        manifest.push_back(std::move(input));
    }
    if (manifest.empty()) {
        throw ConfigError(file.string() + ": manifest is empty");
    }
    return manifest;
}

std::map<std::string, int> manifest_dataset_counts(const std::vector<SampleInput>& manifest) {
    std::map<std::string, int> counts;
    for (const auto& input : manifest) {
        counts[input.dataset] += 1;
    }
    return counts;
}

void write_outcomes(const std::filesystem::path& file,
                    const std::vector<SampleOutcome>& outcomes) {
    if (file.has_parent_path()) {
        std::filesystem::create_directories(file.parent_path());
    }
    std::ofstream out(file, std::ios::trunc);
    if (!out) {
        throw ConfigError("cannot write outcomes: " + file.string());
    }
    for (const auto& o : outcomes) {
        out << o.to_json().dump() << "\n";
    }
}

std::vector<SampleOutcome> read_outcomes(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) {
        throw ConfigError("cannot open outcomes: " + file.string());
    }
    std::vector<SampleOutcome> outcomes;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        outcomes.push_back(SampleOutcome::from_json(nlohmann::json::parse(line)));
    }
    return outcomes;
}

} // namespace expcot
