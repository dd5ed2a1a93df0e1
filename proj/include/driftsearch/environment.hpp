#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "driftsearch/errors.hpp"
#include "driftsearch/semver.hpp"
#include "driftsearch/universe.hpp"

namespace drift {

/// A candidate environment: a runtime level plus pinned dependencies in a
/// valid install order. Immutable by convention; mutation produces a copy.
struct EnvironmentSpec {
    Runtime runtime = Runtime::Level3;
    std::vector<std::pair<std::string, Version>> deps; // install order
    std::string origin; // identifier of the generating candidate

    bool has(const std::string& pkg) const {
        for (const auto& [name, v] : deps)
            if (name == pkg) return true;
        return false;
    }

    std::optional<Version> pin(const std::string& pkg) const {
        for (const auto& [name, v] : deps)
            if (name == pkg) return v;
        return std::nullopt;
    }
};

enum class MutationOp { MajorDecrement, MinorDecrement, MatrixJump };

inline std::string to_string(MutationOp op) {
    switch (op) {
        case MutationOp::MajorDecrement: return "MajorDecrement";
        case MutationOp::MinorDecrement: return "MinorDecrement";
        case MutationOp::MatrixJump: return "MatrixJump";
    }
    return "?";
}

/// A single version change. Always a downgrade: to_version < from_version.
struct Mutation {
    MutationOp op;
    std::string package;
    Version from_version;
    Version to_version;
};

/// An ordered, sequentially applicable list of mutations.
using Patch = std::vector<Mutation>;

/// Patch distance: operators only decrement and are never undone, so path
/// length equals mutation count.
inline std::size_t distance(const Patch& patch) { return patch.size(); }

/// Deterministic identity for the visited set: runtime plus sorted
/// (package, version) pairs. Equal specs produce equal keys.
inline std::string canonical_key(const EnvironmentSpec& env) {
    std::map<std::string, std::string> sorted;
    for (const auto& [pkg, v] : env.deps)
        sorted[pkg] = v.raw;
    std::string key = to_string(env.runtime) + "|";
    bool first = true;
    for (const auto& [pkg, raw] : sorted) {
        if (!first) key += ",";
        key += pkg + "=" + raw;
        first = false;
    }
    return key;
}

namespace detail {

/// Re-resolves the dependency set after a pin change: every currently pinned
/// package keeps its pin, packages newly required by the pinned versions are
/// added at latest, and the install order is recomputed. Packages are never
/// removed (pins stay monotone across a search run).
inline EnvironmentSpec rebuild_environment(const EnvironmentSpec& base, Pins pins,
                                           const PackageIndex& index) {
    std::set<std::string> all;
    std::vector<std::string> work;
    for (const auto& [pkg, v] : pins)
        work.push_back(pkg);
    while (!work.empty()) {
        std::string pkg = work.back();
        work.pop_back();
        if (!index.has(pkg)) throw MissingPackage(pkg);
        if (!all.insert(pkg).second) continue;
        if (!pins.count(pkg)) pins.emplace(pkg, index.latest(pkg));
        for (const auto& dep : index.at(pkg).deps_of(pins.at(pkg)))
            work.push_back(dep);
    }
    auto order = install_order(all, index, pins);
    EnvironmentSpec out;
    out.runtime = base.runtime;
    out.origin = base.origin;
    for (const auto& pkg : order.order)
        out.deps.emplace_back(pkg, pins.at(pkg));
    return out;
}

} // namespace detail

/// Applies one mutation, re-resolving transitive dependencies and install
/// order (a version change can change the dependency set). Throws
/// StaleMutation when the pin does not match the mutation's from_version.
inline EnvironmentSpec apply_mutation(const EnvironmentSpec& env, const Mutation& m,
                                      const PackageIndex& index) {
    auto current = env.pin(m.package);
    if (!current || *current != m.from_version)
        throw StaleMutation("mutation of " + m.package + " expects " + m.from_version.raw +
                            " but environment pins " +
                            (current ? current->raw : std::string("<nothing>")));
    Pins pins;
    for (const auto& [pkg, v] : env.deps)
        pins.emplace(pkg, v);
    pins[m.package] = m.to_version;
    return detail::rebuild_environment(env, std::move(pins), index);
}

inline EnvironmentSpec apply_patch(EnvironmentSpec env, const Patch& patch,
                                   const PackageIndex& index) {
    for (const auto& m : patch)
        env = apply_mutation(env, m, index);
    return env;
}

struct CandidateSet {
    std::vector<EnvironmentSpec> environments;
    std::vector<std::string> unmapped_modules;
    std::vector<BrokenEdge> broken_edges;
};

/// One EnvironmentSpec per runtime candidate, every dependency pinned at its
/// latest version, carrying a valid install order.
inline CandidateSet generate_candidates(const SnippetManifest& manifest, const KnowledgeBase& kb,
                                        const PackageIndex& index) {
    CandidateSet out;
    auto direct = resolve_direct_dependencies(manifest.imports, kb);
    out.unmapped_modules = direct.unmapped;
    auto all = transitive_closure(direct.packages, index);
    Pins pins;
    for (const auto& pkg : all)
        pins.emplace(pkg, index.latest(pkg));
    auto order = install_order(all, index, pins);
    out.broken_edges = order.broken_edges;
    for (Runtime r : manifest.runtime_candidates) {
        EnvironmentSpec env;
        env.runtime = r;
        env.origin = to_string(r);
        for (const auto& pkg : order.order)
            env.deps.emplace_back(pkg, pins.at(pkg));
        out.environments.push_back(std::move(env));
    }
    return out;
}

} // namespace drift
