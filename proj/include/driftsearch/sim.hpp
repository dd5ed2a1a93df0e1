#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "driftsearch/environment.hpp"
#include "driftsearch/errors.hpp"
#include "driftsearch/validation.hpp"

namespace drift::sim {

/// One abstract snippet statement. Lines are 1-based and contiguous.
struct Statement {
    enum class Kind { Import, Call, UseFile, RaiseLocal };
    Kind kind = Kind::Import;
    int line = 1;
    std::string module;             // Import, Call
    std::vector<std::string> names; // Import: `from module import names...`
    std::string symbol;             // Call
    int arg_count = 0;              // Call
    std::string path;               // UseFile
    std::string exception;          // RaiseLocal
    std::string message;            // RaiseLocal (optional override)
};

struct SimSnippet {
    std::vector<Statement> statements;
};

struct CrossImport {
    std::string module;   // what gets imported
    std::string provider; // package expected to provide it
    int line = 1;         // line inside the importing package's source
};

/// Symbol table of one module at one package version: name -> arity.
using ModuleApi = std::map<std::string, int>;
using PackageApi = std::map<std::string, ModuleApi>; // module path -> symbols

/// A deterministic stand-in for real installed packages: an index plus
/// per-version export tables and import edges between packages.
struct SimWorld {
    PackageIndex index;
    std::map<std::string, PackageApi> api;                  // "pkg@ver" -> exports
    std::map<std::string, std::vector<CrossImport>> cross_imports; // "pkg@ver" -> imports
    std::uint64_t seed = 0;
    std::optional<SimSnippet> snippet; // optionally embedded scenario snippet

    static std::string api_key(const std::string& pkg, const Version& v) {
        return pkg + "@" + v.raw;
    }

    const PackageApi& api_of(const std::string& pkg, const Version& v) const {
        auto it = api.find(api_key(pkg, v));
        if (it == api.end())
            throw WorldInconsistency("world defines no api for " + api_key(pkg, v));
        return it->second;
    }

    const std::vector<CrossImport>& cross_imports_of(const std::string& pkg,
                                                     const Version& v) const {
        static const std::vector<CrossImport> none;
        auto it = cross_imports.find(api_key(pkg, v));
        return it == cross_imports.end() ? none : it->second;
    }
};

namespace detail {

struct SimFailure {
    std::string name;
    std::string message;
    std::vector<StackFrame> frames;
};

inline bool table_has_module(const PackageApi& table, const std::string& module) {
    if (table.count(module)) return true;
    auto it = table.lower_bound(module + ".");
    return it != table.end() && it->first.rfind(module + ".", 0) == 0;
}

inline std::optional<std::string> find_provider(const SimWorld& world, const EnvironmentSpec& env,
                                                const std::string& module) {
    for (const auto& [pkg, v] : env.deps)
        if (table_has_module(world.api_of(pkg, v), module)) return pkg;
    return std::nullopt;
}

class Execution {
public:
    Execution(const SimWorld& world, const EnvironmentSpec& env) : world_(world), env_(env) {}

    /// Loads a package: runs its cross-imports (transitively), raising
    /// SimFailure with the accumulated dependency frames on failure.
    void load_package(const std::string& pkg, std::vector<StackFrame>& frames) {
        if (!loaded_.insert(pkg).second) return;
        Version pin = *env_.pin(pkg);
        for (const auto& ci : world_.cross_imports_of(pkg, pin)) {
            frames.push_back({FrameOrigin::Dependency, pkg, ci.line});
            resolve_import(ci.module, frames);
            frames.pop_back();
        }
    }

    /// Resolves one imported module path against the environment, loading
    /// its provider first (module loading executes the provider's imports).
    void resolve_import(const std::string& module, std::vector<StackFrame>& frames) {
        auto provider = find_provider(world_, env_, module);
        if (!provider) {
            // distinguish a missing member of an existing module from a
            // missing module tree
            auto dot = module.rfind('.');
            if (dot != std::string::npos) {
                std::string parent = module.substr(0, dot);
                std::string leaf = module.substr(dot + 1);
                auto parent_provider = find_provider(world_, env_, parent);
                if (parent_provider) {
                    load_package(*parent_provider, frames);
                    const auto& table = world_.api_of(*parent_provider, *env_.pin(*parent_provider));
                    auto mit = table.find(parent);
                    if (mit != table.end() && mit->second.count(leaf)) return; // member import
                    throw SimFailure{"ImportError",
                                     "cannot import name '" + leaf + "' from '" + parent + "'",
                                     frames};
                }
            }
            throw SimFailure{"ImportError", "No module named '" + module + "'", frames};
        }
        load_package(*provider, frames);
    }

    const SimWorld& world_;
    const EnvironmentSpec& env_;
    std::set<std::string> loaded_;
};

} // namespace detail

/// Executes the snippet's statements in order against the pinned exports of
/// the environment. Pure: identical inputs produce identical results. The
/// budget parameter is reserved (no statement consumes simulated time yet).
inline ValidationResult simulate_validation(const SimSnippet& snippet, const EnvironmentSpec& env,
                                            const SimWorld& world, int /*budget_seconds*/ = 60) {
    for (const auto& [pkg, v] : env.deps)
        world.api_of(pkg, v); // throws WorldInconsistency when undefined

    ValidationResult result;
    detail::Execution exec(world, env);

    auto fail = [&](const detail::SimFailure& f, int line) {
        result.status = ValidationStatus::Exception;
        result.exception_name = f.name;
        result.exception_message = f.message;
        result.trace = f.frames;
        result.snippet_line = line;
        return result;
    };

    int last_line = 0;
    for (const auto& stmt : snippet.statements) {
        last_line = stmt.line;
        std::vector<StackFrame> frames{{FrameOrigin::Snippet, "", stmt.line}};
        try {
            switch (stmt.kind) {
                case Statement::Kind::Import: {
                    auto provider = detail::find_provider(world, env, stmt.module);
                    if (!provider)
                        throw detail::SimFailure{
                            "ImportError", "No module named '" + stmt.module + "'", frames};
                    exec.load_package(*provider, frames);
                    const auto& table = world.api_of(*provider, *env.pin(*provider));
                    for (const auto& name : stmt.names) {
                        std::string full = stmt.module + "." + name;
                        if (detail::table_has_module(table, full)) continue;
                        auto mit = table.find(stmt.module);
                        if (mit != table.end() && mit->second.count(name)) continue;
                        throw detail::SimFailure{
                            "ImportError",
                            "cannot import name '" + name + "' from '" + stmt.module + "'",
                            frames};
                    }
                    break;
                }
                case Statement::Kind::Call: {
                    auto provider = detail::find_provider(world, env, stmt.module);
                    if (!provider) {
                        std::string root = stmt.module.substr(0, stmt.module.find('.'));
                        throw detail::SimFailure{
                            "NameError", "name '" + root + "' is not defined", frames};
                    }
                    const auto& table = world.api_of(*provider, *env.pin(*provider));
                    auto mit = table.find(stmt.module);
                    if (mit == table.end() || !mit->second.count(stmt.symbol))
                        throw detail::SimFailure{"AttributeError",
                                                 "module '" + stmt.module +
                                                     "' has no attribute '" + stmt.symbol + "'",
                                                 frames};
                    int arity = mit->second.at(stmt.symbol);
                    if (arity != stmt.arg_count)
                        throw detail::SimFailure{
                            "TypeError", stmt.symbol + "() takes " + std::to_string(arity) +
                                             " positional arguments but " +
                                             std::to_string(stmt.arg_count) + " were given",
                            frames};
                    break;
                }
                case Statement::Kind::UseFile: {
                    frames.push_back({FrameOrigin::Filesystem, "", 1});
                    throw detail::SimFailure{
                        "FileNotFoundError",
                        "[Errno 2] No such file or directory: '" + stmt.path + "'", frames};
                }
                case Statement::Kind::RaiseLocal: {
                    std::string msg = stmt.message.empty()
                                          ? stmt.exception + " raised by snippet"
                                          : stmt.message;
                    throw detail::SimFailure{stmt.exception, msg, frames};
                }
            }
        } catch (const detail::SimFailure& f) {
            return fail(f, stmt.line);
        }
    }
    result.status = ValidationStatus::Success;
    if (last_line > 0) result.snippet_line = last_line;
    return result;
}

// ---------------------------------------------------------------------------
// Ground-truth oracle
// ---------------------------------------------------------------------------

/// Enumerates every configuration reachable from the candidate through the
/// semver operator closure (computed by direct scan, independently of the
/// search path), validates each, and returns the canonical keys that
/// validate Success.
inline std::set<std::string> brute_force_oracle(const SimSnippet& snippet, const SimWorld& world,
                                                const EnvironmentSpec& candidate) {
    std::vector<std::pair<std::string, std::vector<Version>>> axes;
    for (const auto& [pkg, pin] : candidate.deps)
        axes.emplace_back(pkg, operator_closure_versions(world.index.at(pkg).history, pin));

    std::set<std::string> working;
    std::vector<std::size_t> idx(axes.size(), 0);
    while (true) {
        Pins pins;
        for (std::size_t i = 0; i < axes.size(); ++i)
            pins.emplace(axes[i].first, axes[i].second[idx[i]]);
        EnvironmentSpec env = drift::detail::rebuild_environment(candidate, pins, world.index);
        auto result = simulate_validation(snippet, env, world);
        if (result.status == ValidationStatus::Success)
            working.insert(canonical_key(env));
        // odometer
        std::size_t i = 0;
        for (; i < axes.size(); ++i) {
            if (++idx[i] < axes[i].second.size()) break;
            idx[i] = 0;
        }
        if (i == axes.size()) break;
    }
    return working;
}

// ---------------------------------------------------------------------------
// Scenario generation
// ---------------------------------------------------------------------------

struct ScenarioKnobs {
    int packages = 2;
    int max_versions = 4;   // per package
    int drifts = 1;
};

struct Scenario {
    SimWorld world;
    SimSnippet snippet;
    SnippetManifest manifest;
};

/// Derives a knowledge base from a world: every module path exported by any
/// version of a package maps to that package. Stdlib is empty (snippets in
/// simulated worlds only touch third-party modules).
inline KnowledgeBase knowledge_base_from_world(const SimWorld& world) {
    KnowledgeBase kb;
    for (const auto& [pkg, entry] : world.index.packages)
        for (const auto& v : entry.history.releases) {
            auto it = world.api.find(SimWorld::api_key(pkg, v));
            if (it == world.api.end()) continue;
            for (const auto& [module, symbols] : it->second) {
                auto& providers = kb.module_map[module];
                if (std::find(providers.begin(), providers.end(), pkg) == providers.end())
                    providers.push_back(pkg);
            }
        }
    return kb;
}

/// Deterministically generates a (world, snippet, manifest) triple. Drift is
/// seeded by removing exported symbols (or changing their arity, or removing
/// a cross-imported module) from a version boundary onward; the snippet is
/// guaranteed to exercise every seeded drift.
inline Scenario generate_scenario(std::uint64_t seed, const ScenarioKnobs& knobs) {
    std::mt19937_64 rng(seed);
    auto pick = [&](int n) { return static_cast<int>(rng() % static_cast<std::uint64_t>(n)); };

    static const std::vector<std::string> kNames = {"alpha",   "bravo", "charlie", "delta",
                                                    "echo",    "foxtrot", "golf",  "hotel"};
    static const std::vector<std::string> kSymbols = {"load", "run",  "build", "parse",
                                                      "emit", "scan", "fit",   "dump"};

    Scenario sc;
    sc.world.seed = seed;
    int npkg = std::clamp(knobs.packages, 1, static_cast<int>(kNames.size()));

    struct Draft {
        std::string name;
        std::vector<Version> versions;
        std::vector<std::string> deps;
        PackageApi base_api; // before drift adjustments
    };
    std::vector<Draft> drafts(npkg);

    for (int i = 0; i < npkg; ++i) {
        Draft& d = drafts[i];
        d.name = kNames[static_cast<std::size_t>(i) % kNames.size()];
        int count = knobs.max_versions <= 2 ? std::max(1, knobs.max_versions)
                                            : 2 + pick(knobs.max_versions - 1);
        std::uint64_t maj = rng() % 2, min = rng() % 2, pat = 0;
        for (int k = 0; k < count; ++k) {
            if (k > 0) {
                int bump = (k == 1) ? 1 + pick(2) : pick(10) < 2 ? 2 : pick(10) < 6 ? 1 : 0;
                if (bump == 2) { maj++; min = 0; pat = 0; }
                else if (bump == 1) { min++; pat = 0; }
                else { pat++; }
            }
            std::string raw = std::to_string(maj) + "." + std::to_string(min) + "." +
                              std::to_string(pat);
            d.versions.push_back(parse_version(raw));
        }
        if (i > 0 && pick(10) < 4)
            d.deps.push_back(drafts[static_cast<std::size_t>(pick(i))].name);

        ModuleApi root;
        int nsyms = 2 + pick(3);
        for (int s = 0; s < nsyms; ++s)
            root[kSymbols[static_cast<std::size_t>(pick(static_cast<int>(kSymbols.size())))]] =
                pick(4);
        d.base_api[d.name] = root;
        if (pick(10) < 6) {
            ModuleApi sub;
            sub[kSymbols[static_cast<std::size_t>(pick(static_cast<int>(kSymbols.size())))]] =
                pick(4);
            d.base_api[d.name + ".core"] = sub;
        }
    }

    // cross-imports along dependency edges (importer -> provider root module)
    std::map<std::string, std::vector<CrossImport>> shared_cross; // per package, all versions
    for (const auto& d : drafts)
        for (const auto& dep : d.deps)
            if (pick(10) < 6) shared_cross[d.name].push_back({dep, dep, 3 + pick(9)});

    // drift seeding
    struct Drift {
        int pkg;
        int kind;        // 0 from-import, 1 call-attr, 2 call-arity, 3 cross-import
        Version boundary; // versions >= boundary lack the target
        std::string module;
        std::string symbol;
        int old_arity = 0;
        std::string importer; // kind 3
    };
    std::vector<Drift> drifts;
    for (int n = 0; n < knobs.drifts; ++n) {
        // choose a package with at least two (major, minor) levels
        int p = -1;
        for (int attempt = 0; attempt < 2 * npkg; ++attempt) {
            int cand = pick(npkg);
            std::set<std::pair<std::uint64_t, std::uint64_t>> levels;
            for (const auto& v : drafts[static_cast<std::size_t>(cand)].versions)
                levels.insert({v.major, v.minor});
            if (levels.size() >= 2) {
                p = cand;
                break;
            }
        }
        if (p < 0) continue;
        Draft& d = drafts[static_cast<std::size_t>(p)];

        // group versions by level, pick a boundary
        std::vector<std::vector<Version>> groups;
        for (const auto& v : d.versions) {
            if (groups.empty() || groups.back().front().major != v.major ||
                groups.back().front().minor != v.minor)
                groups.push_back({});
            groups.back().push_back(v);
        }
        Version boundary;
        bool unreachable = pick(10) < 2 && groups.front().size() >= 2;
        if (unreachable)
            boundary = groups.front()[1 + static_cast<std::size_t>(
                                              pick(static_cast<int>(groups.front().size()) - 1))];
        else
            boundary = groups[1 + static_cast<std::size_t>(
                                      pick(static_cast<int>(groups.size()) - 1))]
                           .front();

        Drift drift;
        drift.pkg = p;
        drift.kind = pick(4);
        drift.boundary = boundary;
        drift.module = d.name;
        drift.symbol = "legacy_" + kSymbols[static_cast<std::size_t>(n) % kSymbols.size()];
        drift.old_arity = pick(3);
        if (drift.kind == 3) {
            // need a dependent package to carry the cross-import
            int q = -1;
            for (int i = 0; i < npkg; ++i)
                if (i != p) { q = i; break; }
            if (q < 0) {
                drift.kind = 0;
            } else {
                drift.importer = drafts[static_cast<std::size_t>(q)].name;
                auto& qdeps = drafts[static_cast<std::size_t>(q)].deps;
                if (std::find(qdeps.begin(), qdeps.end(), d.name) == qdeps.end())
                    qdeps.push_back(d.name);
                drift.module = d.name + ".compat" + std::to_string(n);
                shared_cross[drift.importer].push_back({drift.module, d.name, 5 + n});
            }
        }
        drifts.push_back(drift);
    }

    // materialize the index and per-version api tables
    for (auto& d : drafts) {
        PackageEntry entry;
        entry.history.package = d.name;
        for (const auto& v : d.versions) {
            entry.history.releases.push_back(v);
            entry.deps_by_version[v.raw] = d.deps;
        }
        entry.history.normalize();
        sc.world.index.packages.emplace(d.name, std::move(entry));
    }
    for (int i = 0; i < npkg; ++i) {
        const Draft& d = drafts[static_cast<std::size_t>(i)];
        for (const auto& v : d.versions) {
            PackageApi table = d.base_api;
            for (const auto& drift : drifts) {
                if (drift.pkg != i) continue;
                bool affected = !(v < drift.boundary);
                switch (drift.kind) {
                    case 0:
                    case 1:
                        if (!affected) table[d.name][drift.symbol] = drift.old_arity;
                        break;
                    case 2:
                        table[d.name][drift.symbol] =
                            affected ? drift.old_arity + 1 : drift.old_arity;
                        break;
                    case 3:
                        if (!affected) table[drift.module] = ModuleApi{};
                        break;
                }
            }
            sc.world.api[SimWorld::api_key(d.name, v)] = std::move(table);
        }
    }
    for (const auto& [pkg, imports] : shared_cross) {
        const Draft& d = *std::find_if(drafts.begin(), drafts.end(),
                                       [&](const Draft& x) { return x.name == pkg; });
        for (const auto& v : d.versions)
            sc.world.cross_imports[SimWorld::api_key(pkg, v)] = imports;
    }

    // snippet: import every root module, then exercise the drift targets
    int line = 1;
    for (const auto& d : drafts) {
        Statement s;
        s.kind = Statement::Kind::Import;
        s.line = line++;
        s.module = d.name;
        sc.snippet.statements.push_back(std::move(s));
        sc.manifest.imports.push_back(d.name);
    }
    for (const auto& drift : drifts) {
        const Draft& d = drafts[static_cast<std::size_t>(drift.pkg)];
        Statement s;
        s.line = line++;
        switch (drift.kind) {
            case 0:
                s.kind = Statement::Kind::Import;
                s.module = d.name;
                s.names = {drift.symbol};
                break;
            case 1:
            case 2:
                s.kind = Statement::Kind::Call;
                s.module = d.name;
                s.symbol = drift.symbol;
                s.arg_count = drift.old_arity;
                break;
            case 3:
                // the importer's root import (already present) triggers it
                s.kind = Statement::Kind::Import;
                s.module = drift.importer;
                break;
        }
        sc.snippet.statements.push_back(std::move(s));
    }
    if (knobs.drifts > 0 && pick(10) < 1) {
        Statement s;
        s.line = line++;
        if (pick(2) == 0) {
            s.kind = Statement::Kind::RaiseLocal;
            s.exception = "NameError";
            s.message = "name 'sample' is not defined";
        } else {
            s.kind = Statement::Kind::UseFile;
            s.path = "data/input.txt";
        }
        sc.snippet.statements.push_back(std::move(s));
    }

    sc.manifest.snippet_id = "scenario-" + std::to_string(seed);
    sc.manifest.kind = SnippetKind::Script;
    sc.manifest.runtime_candidates = {Runtime::Level3};
    sc.world.snippet = sc.snippet;
    return sc;
}

// ---------------------------------------------------------------------------
// File shapes
// ---------------------------------------------------------------------------

inline json to_json(const Statement& s) {
    json j{{"line", s.line}};
    switch (s.kind) {
        case Statement::Kind::Import:
            j["op"] = "import";
            j["module"] = s.module;
            if (!s.names.empty()) j["names"] = s.names;
            break;
        case Statement::Kind::Call:
            j["op"] = "call";
            j["module"] = s.module;
            j["symbol"] = s.symbol;
            j["args"] = s.arg_count;
            break;
        case Statement::Kind::UseFile:
            j["op"] = "use_file";
            j["path"] = s.path;
            break;
        case Statement::Kind::RaiseLocal:
            j["op"] = "raise";
            j["exception"] = s.exception;
            if (!s.message.empty()) j["message"] = s.message;
            break;
    }
    return j;
}

inline json to_json(const SimSnippet& snippet) {
    json j = json::array();
    for (const auto& s : snippet.statements)
        j.push_back(to_json(s));
    return j;
}

inline SimSnippet snippet_from_json(const json& j) {
    SimSnippet out;
    int expected_line = 1;
    for (const auto& sj : j) {
        Statement s;
        s.line = sj.at("line").get<int>();
        if (s.line != expected_line++)
            throw IoError("snippet statement lines must be 1-based and contiguous");
        std::string op = sj.at("op").get<std::string>();
        if (op == "import") {
            s.kind = Statement::Kind::Import;
            s.module = sj.at("module").get<std::string>();
            if (sj.contains("names")) s.names = sj.at("names").get<std::vector<std::string>>();
        } else if (op == "call") {
            s.kind = Statement::Kind::Call;
            s.module = sj.at("module").get<std::string>();
            s.symbol = sj.at("symbol").get<std::string>();
            s.arg_count = sj.value("args", 0);
        } else if (op == "use_file") {
            s.kind = Statement::Kind::UseFile;
            s.path = sj.at("path").get<std::string>();
        } else if (op == "raise") {
            s.kind = Statement::Kind::RaiseLocal;
            s.exception = sj.at("exception").get<std::string>();
            s.message = sj.value("message", "");
        } else {
            throw IoError("snippet: unknown statement op '" + op + "'");
        }
        out.statements.push_back(std::move(s));
    }
    return out;
}

inline json to_json(const SimWorld& world) {
    json packages = json::object();
    for (const auto& [pkg, entry] : world.index.packages) {
        json releases = json::array();
        for (const auto& v : entry.history.releases) {
            json deps = json::array();
            for (const auto& dep : entry.deps_of(v))
                deps.push_back({{"name", dep}});
            releases.push_back({{"version", v.raw}, {"deps", deps}});
        }
        packages[pkg] = {{"releases", releases}};
    }
    json api = json::object();
    for (const auto& [key, table] : world.api) {
        json modules = json::object();
        for (const auto& [module, symbols] : table) {
            json syms = json::array();
            for (const auto& [name, arity] : symbols)
                syms.push_back(json::array({name, arity}));
            modules[module] = syms;
        }
        api[key] = modules;
    }
    json cross = json::object();
    for (const auto& [key, imports] : world.cross_imports) {
        json list = json::array();
        for (const auto& ci : imports)
            list.push_back({{"module", ci.module}, {"provider", ci.provider}, {"line", ci.line}});
        cross[key] = list;
    }
    json j{{"index", {{"packages", packages}}}, {"api", api}, {"cross_imports", cross}};
    if (world.seed != 0) j["seed"] = world.seed;
    if (world.snippet) j["snippet"] = to_json(*world.snippet);
    return j;
}

inline SimWorld world_from_json(const json& j) {
    SimWorld world;
    world.index = package_index_from_json(j.at("index"));
    if (j.contains("api"))
        for (const auto& [key, modules] : j.at("api").items()) {
            PackageApi table;
            for (const auto& [module, syms] : modules.items()) {
                ModuleApi api;
                for (const auto& entry : syms)
                    api[entry.at(0).get<std::string>()] = entry.at(1).get<int>();
                table[module] = std::move(api);
            }
            world.api[key] = std::move(table);
        }
    if (j.contains("cross_imports"))
        for (const auto& [key, list] : j.at("cross_imports").items()) {
            std::vector<CrossImport> imports;
            for (const auto& cj : list)
                imports.push_back({cj.at("module").get<std::string>(),
                                   cj.at("provider").get<std::string>(), cj.value("line", 1)});
            world.cross_imports[key] = std::move(imports);
        }
    world.seed = j.value("seed", 0);
    if (j.contains("snippet")) world.snippet = snippet_from_json(j.at("snippet"));
    return world;
}

} // namespace drift::sim
