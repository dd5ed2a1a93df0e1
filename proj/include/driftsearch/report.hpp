#pragma once

#include <ctime>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "driftsearch/environment.hpp"
#include "driftsearch/search.hpp"
#include "driftsearch/validation.hpp"

namespace drift {

inline json to_json(const EnvironmentSpec& env) {
    json deps = json::array();
    for (const auto& [pkg, v] : env.deps)
        deps.push_back(json::array({pkg, v.raw}));
    return json{{"runtime", to_string(env.runtime)}, {"origin", env.origin}, {"deps", deps}};
}

inline EnvironmentSpec environment_from_json(const json& j) {
    EnvironmentSpec env;
    auto r = parse_runtime(j.at("runtime").get<std::string>());
    if (!r) throw IoError("environment: unknown runtime");
    env.runtime = *r;
    env.origin = j.value("origin", "");
    for (const auto& dj : j.at("deps"))
        env.deps.emplace_back(dj.at(0).get<std::string>(),
                              parse_version(dj.at(1).get<std::string>()));
    return env;
}

inline json to_json(const Mutation& m) {
    return json{{"op", to_string(m.op)},
                {"package", m.package},
                {"from", m.from_version.raw},
                {"to", m.to_version.raw}};
}

inline json to_json(const Patch& patch) {
    json j = json::array();
    for (const auto& m : patch)
        j.push_back(to_json(m));
    return j;
}

inline json drift_instance_to_json(const DriftInstance& d, const std::string& snippet_id) {
    json j{{"snippet", snippet_id},
           {"checkpoint", to_json(d.checkpoint)},
           {"patch", to_json(d.patch)},
           {"validations", d.validations_spent}};
    if (d.localized_package) j["localized_package"] = *d.localized_package;
    return j;
}

inline std::string iso8601_now() {
    std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    return buf;
}

/// Full report for one search run, including the per-validation audit log.
/// Deterministic except for the header's generated_at field.
inline json search_report(const SearchOutcome& outcome, const std::string& snippet_id,
                          const std::string& command, const std::string& backend,
                          const std::vector<std::string>& notes = {}) {
    json j;
    j["header"] = {{"tool", "driftsearch"},
                   {"command", command},
                   {"backend", backend},
                   {"generated_at", iso8601_now()}};
    j["snippet"] = snippet_id;
    j["termination"] = to_string(outcome.termination);
    j["working_env"] = outcome.working_env ? to_json(*outcome.working_env) : json(nullptr);
    json drifts = json::array();
    for (const auto& d : outcome.drift_instances)
        drifts.push_back(drift_instance_to_json(d, snippet_id));
    j["drift_instances"] = drifts;
    j["validations_total"] = outcome.validations_total;
    json per_candidate = json::array();
    for (const auto& s : outcome.per_candidate_stats) {
        json cj{{"origin", s.origin}, {"validations", s.validations}, {"mutations", s.mutations}};
        cj["halt"] = s.halt_reason ? json(to_string(*s.halt_reason)) : json(nullptr);
        cj["final_checkpoint"] = s.final_checkpoint ? to_json(*s.final_checkpoint) : json(nullptr);
        per_candidate.push_back(cj);
    }
    j["per_candidate"] = per_candidate;
    json log = json::array();
    for (const auto& e : outcome.validation_log) {
        json ej{{"env", e.env_key}, {"candidate", e.candidate_origin},
                {"status", to_string(e.status)}};
        ej["exception_name"] = e.exception_name ? json(*e.exception_name) : json(nullptr);
        ej["snippet_line"] = e.snippet_line ? json(*e.snippet_line) : json(nullptr);
        log.push_back(ej);
    }
    j["validation_log"] = log;
    if (!notes.empty()) j["notes"] = notes;
    return j;
}

/// Folds many report files into summary counts.
inline json fold_reports(const std::vector<json>& reports) {
    json summary;
    summary["reports"] = reports.size();
    std::map<std::string, std::size_t> terminations;
    std::size_t drift_total = 0, validations_total = 0;
    std::size_t working = 0, working_validations = 0;
    for (const auto& r : reports) {
        std::string t = r.at("termination").get<std::string>();
        terminations[t]++;
        drift_total += r.at("drift_instances").size();
        std::size_t v = r.at("validations_total").get<std::size_t>();
        validations_total += v;
        if (t == "Working") {
            working++;
            working_validations += v;
        }
    }
    summary["terminations"] = terminations;
    summary["drift_instances_total"] = drift_total;
    summary["validations_total"] = validations_total;
    summary["avg_validations_when_working"] =
        working == 0 ? 0.0
                     : static_cast<double>(working_validations) / static_cast<double>(working);
    return summary;
}

inline json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    json j = json::parse(in, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) throw IoError("malformed JSON in " + path);
    return j;
}

inline std::string load_text_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << text;
}

} // namespace drift
