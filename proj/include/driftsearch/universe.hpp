#pragma once

#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "driftsearch/errors.hpp"
#include "driftsearch/semver.hpp"

namespace drift {

using json = nlohmann::json;

enum class Runtime { Level2, Level3 };

inline std::string to_string(Runtime r) { return r == Runtime::Level2 ? "level-2" : "level-3"; }

inline std::optional<Runtime> parse_runtime(const std::string& s) {
    if (s == "level-2" || s == "2") return Runtime::Level2;
    if (s == "level-3" || s == "3") return Runtime::Level3;
    return std::nullopt;
}

/// One release of a package: its version plus name-only dependency edges.
struct Release {
    Version version;
    std::vector<std::string> deps;
};

struct PackageEntry {
    ReleaseHistory history;
    /// Dependency edges keyed by the release's raw version string.
    std::map<std::string, std::vector<std::string>> deps_by_version;

    const std::vector<std::string>& deps_of(const Version& v) const {
        static const std::vector<std::string> none;
        auto it = deps_by_version.find(v.raw);
        return it == deps_by_version.end() ? none : it->second;
    }
};

/// The package index: every known package with its releases and per-version
/// dependency edges. Immutable after load.
struct PackageIndex {
    std::map<std::string, PackageEntry> packages;
    /// Version strings dropped at load time because they did not parse.
    std::vector<std::string> load_warnings;

    bool has(const std::string& id) const { return packages.count(id) != 0; }

    const PackageEntry& at(const std::string& id) const {
        auto it = packages.find(id);
        if (it == packages.end()) throw MissingPackage(id);
        return it->second;
    }

    Version latest(const std::string& id) const { return latest_version(at(id).history); }
};

/// Maps fully qualified module names to candidate packages, plus the set of
/// standard-library modules that never need a package.
struct KnowledgeBase {
    std::map<std::string, std::vector<std::string>> module_map;
    std::set<std::string> stdlib;

    bool is_stdlib(const std::string& module) const {
        std::string prefix;
        for (std::size_t i = 0; i <= module.size(); ++i) {
            if (i == module.size() || module[i] == '.') {
                if (stdlib.count(module.substr(0, i))) return true;
                if (i == module.size()) break;
            }
        }
        return false;
    }

    /// Longest dotted-prefix lookup; empty result when no prefix matches.
    std::vector<std::string> providers(const std::string& module) const {
        std::string candidate = module;
        while (true) {
            auto it = module_map.find(candidate);
            if (it != module_map.end()) return it->second;
            auto dot = candidate.rfind('.');
            if (dot == std::string::npos) return {};
            candidate.resize(dot);
        }
    }
};

enum class SnippetKind { Script, Notebook };

/// Everything the engine knows about a snippet before validation.
struct SnippetManifest {
    std::string snippet_id;
    SnippetKind kind = SnippetKind::Script;
    int cell_count = 0; // notebooks only
    std::vector<std::string> imports;
    std::vector<Runtime> runtime_candidates;
};

// ---------------------------------------------------------------------------
// Import extraction (restricted grammar: `import a.b[.c] [as x]` and
// `from a.b import c [as x]`; unrecognized lines are skipped).
// ---------------------------------------------------------------------------

namespace detail {

inline bool is_ident(const std::string& s) {
    if (s.empty()) return false;
    if (!std::isalpha(static_cast<unsigned char>(s[0])) && s[0] != '_') return false;
    for (char c : s)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
    return true;
}

inline bool is_dotted_name(const std::string& s) {
    std::size_t start = 0;
    while (true) {
        auto dot = s.find('.', start);
        std::string part = s.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (!is_ident(part)) return false;
        if (dot == std::string::npos) return true;
        start = dot + 1;
    }
}

inline std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

// Splits "a, b as x, c" into the bare names, dropping aliases. Returns
// nullopt when any element fails the identifier check.
inline std::optional<std::vector<std::string>> parse_name_list(std::string text, bool allow_dotted) {
    for (char& c : text)
        if (c == '(' || c == ')') c = ' ';
    std::vector<std::string> names;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto comma = text.find(',', start);
        std::string piece = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        auto toks = split_ws(piece);
        if (toks.size() == 3 && toks[1] == "as" && is_ident(toks[2]))
            toks = {toks[0]};
        if (toks.size() != 1) return std::nullopt;
        if (allow_dotted ? !is_dotted_name(toks[0]) : !is_ident(toks[0])) return std::nullopt;
        names.push_back(toks[0]);
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return names;
}

} // namespace detail

/// Extracts fully qualified imported names from source text, in source order
/// and deduplicated. `from a.b import c` contributes both `a.b.c` and `a.b`
/// (the imported name may be a module or a member).
inline std::vector<std::string> extract_imports(const std::string& source_text) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    auto emit = [&](const std::string& name) {
        if (seen.insert(name).second) out.push_back(name);
    };

    std::istringstream in(source_text);
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        std::string head;
        ls >> head;
        std::string rest;
        std::getline(ls, rest);

        if (head == "import") {
            auto names = detail::parse_name_list(rest, /*allow_dotted=*/true);
            if (!names) continue;
            for (const auto& n : *names) emit(n);
        } else if (head == "from") {
            auto toks = detail::split_ws(rest);
            if (toks.size() < 2 || !detail::is_dotted_name(toks[0])) continue;
            auto import_pos = rest.find(" import ");
            std::string base = toks[0];
            if (import_pos == std::string::npos || toks[1] != "import") continue;
            std::string tail = rest.substr(import_pos + 8);
            auto names = detail::parse_name_list(tail, /*allow_dotted=*/false);
            if (!names) continue;
            for (const auto& n : *names) emit(base + "." + n);
            emit(base);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dependency resolution
// ---------------------------------------------------------------------------

struct DirectDependencies {
    std::set<std::string> packages;
    /// Non-stdlib modules with no knowledge-base mapping; recorded, not fatal.
    std::vector<std::string> unmapped;
};

/// Maps imported modules to packages. Stdlib modules are dropped, remaining
/// modules go through longest-prefix lookup, and all candidate packages are
/// unioned (overestimation accepted).
inline DirectDependencies resolve_direct_dependencies(const std::vector<std::string>& imports,
                                                      const KnowledgeBase& kb) {
    DirectDependencies out;
    std::set<std::string> unmapped_seen;
    for (const auto& module : imports) {
        if (kb.is_stdlib(module)) continue;
        auto providers = kb.providers(module);
        if (providers.empty()) {
            if (unmapped_seen.insert(module).second) out.unmapped.push_back(module);
            continue;
        }
        out.packages.insert(providers.begin(), providers.end());
    }
    return out;
}

using Pins = std::map<std::string, Version>;

inline Version pin_or_latest(const Pins& pins, const PackageIndex& index, const std::string& pkg) {
    auto it = pins.find(pkg);
    return it == pins.end() ? index.latest(pkg) : it->second;
}

/// Least fixed point of the per-pinned-version dependency relation. Packages
/// without a pin resolve at their latest version. Throws MissingPackage when
/// an edge names a package absent from the index.
inline std::set<std::string> transitive_closure(const std::set<std::string>& direct,
                                                const PackageIndex& index,
                                                const Pins& pins = {}) {
    std::set<std::string> closed;
    std::vector<std::string> work(direct.begin(), direct.end());
    while (!work.empty()) {
        std::string pkg = work.back();
        work.pop_back();
        if (!index.has(pkg)) throw MissingPackage(pkg);
        if (!closed.insert(pkg).second) continue;
        Version v = pin_or_latest(pins, index, pkg);
        for (const auto& dep : index.at(pkg).deps_of(v))
            work.push_back(dep);
    }
    return closed;
}

struct BrokenEdge {
    std::string dependency; // the prerequisite whose ordering constraint was waived
    std::string dependent;  // the package installed before it
};

struct InstallOrder {
    std::vector<std::string> order;
    std::vector<BrokenEdge> broken_edges;
};

/// Topological install order over the pinned dependency graph. Among ready
/// packages the lexicographically smallest goes first, which keeps the output
/// deterministic. On a cycle the smallest remaining package is installed
/// anyway and each waived prerequisite edge is recorded.
inline InstallOrder install_order(const std::set<std::string>& deps, const PackageIndex& index,
                                  const Pins& pins = {}) {
    InstallOrder out;
    // unmet[p] = prerequisites of p not yet installed
    std::map<std::string, std::set<std::string>> unmet;
    for (const auto& pkg : deps) {
        Version v = pin_or_latest(pins, index, pkg);
        auto& set = unmet[pkg];
        for (const auto& dep : index.at(pkg).deps_of(v))
            if (deps.count(dep) && dep != pkg) set.insert(dep);
    }
    while (!unmet.empty()) {
        std::string next;
        for (const auto& [pkg, reqs] : unmet) {
            if (reqs.empty()) {
                next = pkg;
                break;
            }
        }
        if (next.empty()) {
            // cycle: install the smallest remaining package first
            next = unmet.begin()->first;
            for (const auto& req : unmet.at(next))
                out.broken_edges.push_back({req, next});
        }
        out.order.push_back(next);
        unmet.erase(next);
        for (auto& [pkg, reqs] : unmet)
            reqs.erase(next);
    }
    return out;
}

// ---------------------------------------------------------------------------
// File loaders
// ---------------------------------------------------------------------------

inline PackageIndex package_index_from_json(const json& j) {
    PackageIndex index;
    for (const auto& [id, pj] : j.at("packages").items()) {
        PackageEntry entry;
        entry.history.package = id;
        for (const auto& rj : pj.at("releases")) {
            std::string raw = rj.at("version").get<std::string>();
            auto v = try_parse_version(raw);
            if (!v) {
                index.load_warnings.push_back(id + ": dropped unparseable version '" + raw + "'");
                continue;
            }
            std::vector<std::string> deps;
            if (rj.contains("deps"))
                for (const auto& dj : rj.at("deps"))
                    deps.push_back(dj.at("name").get<std::string>());
            entry.history.releases.push_back(*v);
            entry.deps_by_version[v->raw] = std::move(deps);
        }
        entry.history.normalize();
        index.packages.emplace(id, std::move(entry));
    }
    return index;
}

inline KnowledgeBase knowledge_base_from_json(const json& j) {
    KnowledgeBase kb;
    if (j.contains("modules"))
        for (const auto& [module, pkgs] : j.at("modules").items()) {
            std::vector<std::string> ids = pkgs.get<std::vector<std::string>>();
            if (ids.empty()) continue; // module_map values must be non-empty
            kb.module_map[module] = std::move(ids);
        }
    if (j.contains("stdlib"))
        for (const auto& m : j.at("stdlib"))
            kb.stdlib.insert(m.get<std::string>());
    return kb;
}

inline SnippetManifest manifest_from_json(const json& j) {
    SnippetManifest m;
    m.snippet_id = j.at("snippet_id").get<std::string>();
    std::string kind = j.value("kind", "script");
    if (kind == "notebook")
        m.kind = SnippetKind::Notebook;
    else if (kind != "script")
        throw IoError("manifest: unknown kind '" + kind + "'");
    m.cell_count = j.value("cell_count", 0);
    if (m.kind == SnippetKind::Script && m.cell_count != 0)
        throw IoError("manifest: scripts must have cell_count 0");
    if (j.contains("imports"))
        m.imports = j.at("imports").get<std::vector<std::string>>();
    for (const auto& rc : j.at("runtime_candidates")) {
        std::string s = rc.is_number() ? std::to_string(rc.get<int>()) : rc.get<std::string>();
        auto r = parse_runtime(s);
        if (!r) throw IoError("manifest: unknown runtime '" + s + "'");
        if (std::find(m.runtime_candidates.begin(), m.runtime_candidates.end(), *r) ==
            m.runtime_candidates.end())
            m.runtime_candidates.push_back(*r);
    }
    if (m.runtime_candidates.empty())
        throw IoError("manifest: runtime_candidates must be non-empty");
    return m;
}

} // namespace drift
