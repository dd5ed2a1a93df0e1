#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "driftsearch/environment.hpp"
#include "driftsearch/errors.hpp"
#include "driftsearch/universe.hpp"

namespace drift {

enum class ValidationStatus { Success, Exception, Timeout };

inline std::string to_string(ValidationStatus s) {
    switch (s) {
        case ValidationStatus::Success: return "success";
        case ValidationStatus::Exception: return "exception";
        case ValidationStatus::Timeout: return "timeout";
    }
    return "?";
}

enum class FrameOrigin { Snippet, Stdlib, Dependency, Filesystem };

inline std::string to_string(FrameOrigin o) {
    switch (o) {
        case FrameOrigin::Snippet: return "snippet";
        case FrameOrigin::Stdlib: return "stdlib";
        case FrameOrigin::Dependency: return "dependency";
        case FrameOrigin::Filesystem: return "filesystem";
    }
    return "?";
}

struct StackFrame {
    FrameOrigin origin = FrameOrigin::Snippet;
    std::string package; // set for Dependency frames
    int line = 1;
};

/// The outcome of one validation: status plus exception metadata. The trace
/// is ordered outermost first, so the raising frame is the last element.
struct ValidationResult {
    ValidationStatus status = ValidationStatus::Success;
    std::optional<std::string> exception_name;
    std::optional<std::string> exception_message;
    std::vector<StackFrame> trace;
    std::optional<int> snippet_line; // deepest snippet line reached
    std::vector<std::pair<std::string, std::string>> install_failures;

    /// Absent snippet lines compare as 0 (failure before any snippet line ran).
    int effective_snippet_line() const { return snippet_line.value_or(0); }

    bool check_invariants() const {
        if (status == ValidationStatus::Exception)
            return exception_name.has_value() && !trace.empty();
        if (status == ValidationStatus::Success)
            return !exception_name && !exception_message;
        return true;
    }
};

/// The latest unfixed validation failure plus the mutations tried since.
struct Checkpoint {
    ValidationResult result; // always an Exception
    std::string env_at_checkpoint;
    Patch mutations_since;
};

/// A recorded instance of configuration drift: the illuminating failure and
/// the patch that fixed it.
struct DriftInstance {
    ValidationResult checkpoint;
    Patch patch;
    std::size_t validations_spent = 0;
    std::optional<std::string> localized_package;
};

// ---------------------------------------------------------------------------
// Checkpoint progress
// ---------------------------------------------------------------------------

/// True when a fresh validation covers more of the snippet than the
/// checkpoint failure: an outright success, or an exception strictly past
/// the checkpoint line. Timeouts never fix anything.
inline bool is_fixed(const Checkpoint& checkpoint, const ValidationResult& fresh) {
    if (fresh.status == ValidationStatus::Success) return true;
    if (fresh.status == ValidationStatus::Timeout) return false;
    return fresh.effective_snippet_line() > checkpoint.result.effective_snippet_line();
}

// ---------------------------------------------------------------------------
// Fixability and fault localization
// ---------------------------------------------------------------------------

namespace detail {

inline bool is_import_error(const std::string& name) {
    return name == "ImportError" || name == "ModuleNotFoundError";
}

inline bool is_filesystem_error(const std::string& name) {
    return name == "FileNotFoundError" || name == "PermissionError" ||
           name == "IsADirectoryError" || name == "NotADirectoryError";
}

/// Pulls candidate module names out of an import-error message. Handles the
/// two interpreter formats: "No module named 'x.y'" and
/// "cannot import name 'n' from 'x.y'" (tried as x.y.n, then x.y).
inline std::vector<std::string> missing_modules_from_message(const std::string& message) {
    auto quoted = [&](std::size_t from) -> std::optional<std::pair<std::string, std::size_t>> {
        auto open = message.find('\'', from);
        if (open == std::string::npos) return std::nullopt;
        auto close = message.find('\'', open + 1);
        if (close == std::string::npos) return std::nullopt;
        return std::make_pair(message.substr(open + 1, close - open - 1), close + 1);
    };
    std::vector<std::string> out;
    if (message.find("No module named") != std::string::npos) {
        if (auto q = quoted(0)) out.push_back(q->first);
    } else if (message.find("cannot import name") != std::string::npos) {
        auto q1 = quoted(0);
        if (q1) {
            if (auto q2 = quoted(q1->second)) {
                out.push_back(q2->first + "." + q1->first);
                out.push_back(q2->first);
            }
        }
    }
    return out;
}

/// Installed packages that provide the module, via the same longest-prefix
/// knowledge-base lookup used for candidate generation.
inline std::vector<std::string> installed_providers(const std::string& module,
                                                    const EnvironmentSpec& env,
                                                    const KnowledgeBase* kb) {
    std::vector<std::string> out;
    if (!kb) return out;
    for (const auto& pkg : kb->providers(module))
        if (env.has(pkg)) out.push_back(pkg);
    return out;
}

} // namespace detail

/// Whether a failure can plausibly be repaired by version mutations: never
/// for filesystem failures; otherwise when the failure comes from an
/// installed dependency, is an import error related to one, or is a
/// TypeError/AttributeError. Throws ContractViolation on non-Exception input.
inline bool is_fixable(const ValidationResult& result, const EnvironmentSpec& env,
                       const KnowledgeBase* kb = nullptr) {
    if (result.status != ValidationStatus::Exception)
        throw ContractViolation("is_fixable requires an Exception result");
    for (const auto& frame : result.trace)
        if (frame.origin == FrameOrigin::Filesystem) return false;
    const std::string& name = *result.exception_name;
    if (detail::is_filesystem_error(name)) return false;

    for (const auto& frame : result.trace)
        if (frame.origin == FrameOrigin::Dependency) return true;
    if (detail::is_import_error(name) && result.exception_message) {
        for (const auto& module : detail::missing_modules_from_message(*result.exception_message))
            if (!detail::installed_providers(module, env, kb).empty()) return true;
    }
    return name == "TypeError" || name == "AttributeError";
}

/// Maps a failure to the single installed package most likely responsible:
/// the deepest dependency stack frame when the raising frame is outside the
/// snippet and stdlib, else the unique installed provider of a missing
/// module for import errors. Empty when localization fails.
inline std::optional<std::string> localize_fault(const ValidationResult& result,
                                                 const EnvironmentSpec& env,
                                                 const KnowledgeBase* kb = nullptr) {
    if (result.status != ValidationStatus::Exception) return std::nullopt;
    if (!result.trace.empty()) {
        const auto& raising = result.trace.back();
        if (raising.origin != FrameOrigin::Snippet && raising.origin != FrameOrigin::Stdlib) {
            for (auto it = result.trace.rbegin(); it != result.trace.rend(); ++it)
                if (it->origin == FrameOrigin::Dependency) return it->package;
            return std::nullopt;
        }
    }
    if (result.exception_name && detail::is_import_error(*result.exception_name) &&
        result.exception_message) {
        for (const auto& module : detail::missing_modules_from_message(*result.exception_message)) {
            auto providers = detail::installed_providers(module, env, kb);
            if (providers.size() == 1) return providers.front();
            if (!providers.empty()) return std::nullopt; // ambiguous
        }
    }
    return std::nullopt;
}

/// Validation time limit in seconds: scripts get one minute, notebooks two
/// minutes plus one per cell.
inline int timeout_budget(SnippetKind kind, int cell_count = 0) {
    if (kind == SnippetKind::Script) return 60;
    return 120 + 60 * cell_count;
}

// ---------------------------------------------------------------------------
// Canonical JSON shape (shared with the executor protocol)
// ---------------------------------------------------------------------------

inline json to_json(const StackFrame& f) {
    json j{{"origin", to_string(f.origin)}, {"line", f.line}};
    if (f.origin == FrameOrigin::Dependency) j["package"] = f.package;
    return j;
}

inline json to_json(const ValidationResult& r) {
    json j;
    j["status"] = to_string(r.status);
    if (r.exception_name) j["exception_name"] = *r.exception_name;
    if (r.exception_message) j["message"] = *r.exception_message;
    if (r.status != ValidationStatus::Success) {
        json trace = json::array();
        for (const auto& f : r.trace)
            trace.push_back(to_json(f));
        j["trace"] = trace;
    }
    if (r.snippet_line) j["snippet_line"] = *r.snippet_line;
    json failures = json::array();
    for (const auto& [pkg, msg] : r.install_failures)
        failures.push_back({{"package", pkg}, {"message", msg}});
    j["install_failures"] = failures;
    return j;
}

inline ValidationResult validation_result_from_json(const json& j) {
    ValidationResult r;
    std::string status = j.at("status").get<std::string>();
    if (status == "success")
        r.status = ValidationStatus::Success;
    else if (status == "exception")
        r.status = ValidationStatus::Exception;
    else if (status == "timeout")
        r.status = ValidationStatus::Timeout;
    else
        throw IoError("validation result: unknown status '" + status + "'");
    if (j.contains("exception_name")) r.exception_name = j.at("exception_name").get<std::string>();
    if (j.contains("message")) r.exception_message = j.at("message").get<std::string>();
    if (j.contains("trace"))
        for (const auto& fj : j.at("trace")) {
            StackFrame f;
            std::string origin = fj.at("origin").get<std::string>();
            if (origin == "snippet")
                f.origin = FrameOrigin::Snippet;
            else if (origin == "stdlib")
                f.origin = FrameOrigin::Stdlib;
            else if (origin == "dependency")
                f.origin = FrameOrigin::Dependency;
            else if (origin == "filesystem")
                f.origin = FrameOrigin::Filesystem;
            else
                throw IoError("validation result: unknown frame origin '" + origin + "'");
            if (fj.contains("package")) f.package = fj.at("package").get<std::string>();
            f.line = fj.value("line", 1);
            r.trace.push_back(std::move(f));
        }
    if (j.contains("snippet_line") && !j.at("snippet_line").is_null())
        r.snippet_line = j.at("snippet_line").get<int>();
    if (j.contains("install_failures"))
        for (const auto& ij : j.at("install_failures"))
            r.install_failures.emplace_back(ij.at("package").get<std::string>(),
                                            ij.at("message").get<std::string>());
    return r;
}

} // namespace drift
