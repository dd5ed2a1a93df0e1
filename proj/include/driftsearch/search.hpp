#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "driftsearch/environment.hpp"
#include "driftsearch/errors.hpp"
#include "driftsearch/upgrade_matrix.hpp"
#include "driftsearch/validation.hpp"

namespace drift {

using Validator = std::function<ValidationResult(const EnvironmentSpec&)>;

struct SearchBudget {
    std::chrono::seconds wall_clock_limit{3600};
    std::optional<std::size_t> max_validations;
};

enum class Termination { Working, NotFixable, SpaceExhausted, Budget, Inconclusive };

inline std::string to_string(Termination t) {
    switch (t) {
        case Termination::Working: return "Working";
        case Termination::NotFixable: return "NotFixable";
        case Termination::SpaceExhausted: return "SpaceExhausted";
        case Termination::Budget: return "Budget";
        case Termination::Inconclusive: return "Inconclusive";
    }
    return "?";
}

struct ValidationLogEntry {
    std::string env_key;
    std::string candidate_origin;
    ValidationStatus status;
    std::optional<std::string> exception_name;
    std::optional<int> snippet_line;
};

struct CandidateStats {
    std::string origin;
    std::size_t validations = 0;
    std::size_t mutations = 0; // mutations committed in recorded drift patches
    std::optional<Termination> halt_reason;
    std::optional<ValidationResult> final_checkpoint; // unfixed at halt
};

struct SearchOutcome {
    std::optional<EnvironmentSpec> working_env;
    std::vector<DriftInstance> drift_instances;
    Termination termination = Termination::Inconclusive;
    std::size_t validations_total = 0;
    std::vector<CandidateStats> per_candidate_stats;
    std::vector<ValidationLogEntry> validation_log;
};

namespace detail {

// -----------------------------------------------------------------------
// Mutation streams: lazily enumerate unexplored environments reachable
// from a root configuration. Yielded items carry the path from the root.
// -----------------------------------------------------------------------

struct StreamItem {
    EnvironmentSpec env;
    Patch path;
};

class MutationStream {
public:
    virtual ~MutationStream() = default;
    virtual std::optional<StreamItem> next() = 0;
};

/// Iterative-deepening depth-first enumeration over the semver operators,
/// all DecrementSemverMajor steps before any DecrementSemverMinor. When a
/// matrix map is supplied, packages with a non-empty exploration ordering
/// contribute matrix jumps in place of their semver operators. Environments
/// already validated are skipped, and a configuration reached twice within
/// one depth iteration is expanded only once.
class IddfsStream final : public MutationStream {
public:
    IddfsStream(EnvironmentSpec root, std::optional<std::string> only_package,
                const PackageIndex& index, const MatrixMap* matrices,
                std::set<std::string>& validated)
        : root_(std::move(root)),
          only_package_(std::move(only_package)),
          index_(index),
          matrices_(matrices),
          validated_(validated) {}

    std::optional<StreamItem> next() override {
        while (true) {
            if (stack_.empty()) {
                if (!open_next_depth()) return std::nullopt;
            }
            while (!stack_.empty()) {
                Node& node = stack_.back();
                if (node.moves_cursor >= node.moves.size()) {
                    stack_.pop_back();
                    continue;
                }
                Mutation m = node.moves[node.moves_cursor++];
                EnvironmentSpec child = apply_mutation(node.item.env, m, index_);
                Patch child_path = node.item.path;
                child_path.push_back(m);
                std::string key = canonical_key(child);
                bool at_limit = child_path.size() >= depth_;
                if (at_limit) {
                    any_at_limit_ = true;
                    if (!seen_this_depth_.insert(key).second) continue;
                    if (validated_.count(key)) continue;
                    return StreamItem{std::move(child), std::move(child_path)};
                }
                if (!seen_this_depth_.insert(key).second) continue;
                push_node({std::move(child), std::move(child_path)});
                // descend before finishing this node's remaining moves
                break;
            }
            if (stack_.empty() && !any_at_limit_ && depth_ > 0)
                exhausted_ = true;
            if (exhausted_) return std::nullopt;
        }
    }

private:
    struct Node {
        StreamItem item;
        std::vector<Mutation> moves;
        std::size_t moves_cursor = 0;
    };

    bool open_next_depth() {
        if (exhausted_) return false;
        if (depth_ > 0 && !any_at_limit_) {
            exhausted_ = true; // nothing exists at the previous depth
            return false;
        }
        ++depth_;
        any_at_limit_ = false;
        seen_this_depth_.clear();
        push_node({root_, {}});
        return true;
    }

    void push_node(StreamItem item) {
        Node node;
        node.moves = moves_of(item.env, item.path);
        node.item = std::move(item);
        stack_.push_back(std::move(node));
    }

    bool minors_started(const Patch& path) const {
        for (const auto& m : path)
            if (m.op == MutationOp::MinorDecrement) return true;
        return false;
    }

    std::vector<Mutation> moves_of(const EnvironmentSpec& env, const Patch& path) const {
        std::vector<Mutation> moves;
        bool minor_phase = minors_started(path);
        auto considered = [&](const std::string& pkg) {
            return !only_package_ || pkg == *only_package_;
        };
        if (!minor_phase) {
            for (const auto& [pkg, pin] : env.deps) {
                if (!considered(pkg)) continue;
                const UpgradeMatrix* matrix = matrix_for(pkg);
                if (matrix) {
                    for (const auto& target : exploration_order(*matrix, pin)) {
                        if (!(target < pin)) continue;
                        if (!index_.at(pkg).history.contains(target)) continue;
                        moves.push_back({MutationOp::MatrixJump, pkg, pin, target});
                    }
                    continue;
                }
                if (auto down = decrement_semver_major(index_.at(pkg).history, pin))
                    moves.push_back({MutationOp::MajorDecrement, pkg, pin, *down});
            }
        }
        for (const auto& [pkg, pin] : env.deps) {
            if (!considered(pkg)) continue;
            if (matrix_for(pkg)) continue;
            if (auto down = decrement_semver_minor(index_.at(pkg).history, pin))
                moves.push_back({MutationOp::MinorDecrement, pkg, pin, *down});
        }
        return moves;
    }

    const UpgradeMatrix* matrix_for(const std::string& pkg) const {
        if (!matrices_) return nullptr;
        auto it = matrices_->find(pkg);
        if (it == matrices_->end()) return nullptr;
        return it->second.cells.empty() ? nullptr : &it->second;
    }

    EnvironmentSpec root_;
    std::optional<std::string> only_package_;
    const PackageIndex& index_;
    const MatrixMap* matrices_;
    std::set<std::string>& validated_;

    std::vector<Node> stack_;
    std::set<std::string> seen_this_depth_;
    std::size_t depth_ = 0;
    bool any_at_limit_ = false;
    bool exhausted_ = false;
};

/// Matrix-guided stream: jumps the localized package directly to each
/// version in the exploration ordering (each jump is a single mutation from
/// the checkpoint configuration). Entries that are not strictly below the
/// current pin, or that name versions absent from the release history, are
/// skipped. When the ordering is exhausted, falls back to IDDFS over the
/// package from its post-jump version, then over the whole environment.
class MatrixStream final : public MutationStream {
public:
    MatrixStream(EnvironmentSpec root, std::string package, const UpgradeMatrix& matrix,
                 const PackageIndex& index, const MatrixMap* matrices,
                 std::set<std::string>& validated)
        : root_(std::move(root)), package_(std::move(package)), index_(index),
          matrices_(matrices), validated_(validated) {
        Version pin = *root_.pin(package_);
        ordering_ = exploration_order(matrix, pin);
        last_jump_env_ = root_;
    }

    std::optional<StreamItem> next() override {
        while (cursor_ < ordering_.size()) {
            const Version& target = ordering_[cursor_++];
            Version pin = *root_.pin(package_);
            if (!(target < pin)) continue;
            if (!index_.at(package_).history.contains(target)) continue;
            Mutation m{MutationOp::MatrixJump, package_, pin, target};
            EnvironmentSpec env = apply_mutation(root_, m, index_);
            std::string key = canonical_key(env);
            last_jump_env_ = env;
            last_jump_path_ = {m};
            if (validated_.count(key)) continue;
            return StreamItem{std::move(env), {m}};
        }
        if (!fallback_) {
            if (phase_ == 0) {
                phase_ = 1;
                fallback_ = std::make_unique<IddfsStream>(last_jump_env_, package_, index_,
                                                          nullptr, validated_);
            }
        }
        while (true) {
            auto item = fallback_->next();
            if (item) {
                if (phase_ == 1) {
                    // paths from the fallback root compose after the jump
                    Patch full = last_jump_path_;
                    full.insert(full.end(), item->path.begin(), item->path.end());
                    item->path = std::move(full);
                }
                return item;
            }
            if (phase_ == 1) {
                phase_ = 2;
                fallback_ = std::make_unique<IddfsStream>(root_, std::nullopt, index_, matrices_,
                                                          validated_);
                continue;
            }
            return std::nullopt;
        }
    }

private:
    EnvironmentSpec root_;
    std::string package_;
    const PackageIndex& index_;
    const MatrixMap* matrices_;
    std::set<std::string>& validated_;
    std::vector<Version> ordering_;
    std::size_t cursor_ = 0;
    int phase_ = 0; // 0 jumps, 1 package IDDFS from post-jump, 2 whole environment
    std::unique_ptr<MutationStream> fallback_;
    EnvironmentSpec last_jump_env_;
    Patch last_jump_path_;
};

/// The per-checkpoint mutator: matrix ordering when the localized package
/// has one, else IDDFS over the localized package, else IDDFS over all
/// packages. A localized stream that exhausts its subspace escalates to the
/// whole environment — search halts only when no sequence of mutations
/// leads to an unexplored configuration.
class CheckpointMutator final : public MutationStream {
public:
    CheckpointMutator(EnvironmentSpec root, std::optional<std::string> localized,
                      const PackageIndex& index, const MatrixMap* matrices,
                      std::set<std::string>& validated)
        : root_(std::move(root)), index_(index), matrices_(matrices), validated_(validated) {
        if (localized) {
            const UpgradeMatrix* matrix = nullptr;
            if (matrices) {
                auto it = matrices->find(*localized);
                if (it != matrices->end() && !it->second.cells.empty()) matrix = &it->second;
            }
            if (matrix && !exploration_order(*matrix, *root_.pin(*localized)).empty()) {
                primary_ = std::make_unique<MatrixStream>(root_, *localized, *matrix, index_,
                                                          matrices_, validated_);
                escalates_ = false; // MatrixStream escalates internally
                return;
            }
            primary_ = std::make_unique<IddfsStream>(root_, *localized, index_, nullptr,
                                                     validated_);
            escalates_ = true;
            return;
        }
        primary_ = std::make_unique<IddfsStream>(root_, std::nullopt, index_, matrices_,
                                                 validated_);
        escalates_ = false;
    }

    std::optional<StreamItem> next() override {
        auto item = primary_->next();
        if (item || !escalates_) return item;
        escalates_ = false;
        primary_ = std::make_unique<IddfsStream>(root_, std::nullopt, index_, matrices_,
                                                 validated_);
        return primary_->next();
    }

private:
    EnvironmentSpec root_;
    const PackageIndex& index_;
    const MatrixMap* matrices_;
    std::set<std::string>& validated_;
    std::unique_ptr<MutationStream> primary_;
    bool escalates_ = false;
};

struct CandidateRun {
    EnvironmentSpec initial_env;
    std::optional<Checkpoint> checkpoint;
    EnvironmentSpec checkpoint_env; // exploration root
    std::optional<std::string> localized;
    std::unique_ptr<MutationStream> stream;
    std::set<std::string> validated;
    CandidateStats stats;
    std::size_t validations_at_checkpoint = 0;
    bool halted = false;
    bool started = false;
};

class KeyAudit {
public:
    void record(const std::string& key, const EnvironmentSpec& env) {
        auto [it, inserted] = seen_.emplace(key, fingerprint(env));
        if (!inserted && it->second != fingerprint(env))
            throw Error("canonical_key collision: " + key);
        if (!inserted)
            throw Error("environment validated twice: " + key);
    }

private:
    static std::string fingerprint(const EnvironmentSpec& env) {
        std::string fp = to_string(env.runtime);
        std::map<std::string, std::string> sorted;
        for (const auto& [p, v] : env.deps)
            sorted[p] = v.raw;
        for (const auto& [p, v] : sorted)
            fp += ";" + p + "@" + v;
        return fp;
    }
    std::map<std::string, std::string> seen_;
};

} // namespace detail

struct SearchInputs {
    const PackageIndex* index = nullptr;
    const KnowledgeBase* kb = nullptr;
    const MatrixMap* matrices = nullptr;
    SearchBudget budget;
};

/// Feedback-directed search over candidate environments, serviced
/// round-robin with one validation per turn. Each validation either fixes
/// the current checkpoint (recording a drift instance) or feeds the
/// checkpoint's mutator; a checkpoint change re-runs fault localization and
/// re-selects the mutator. A candidate halts on a non-fixable checkpoint, a
/// timeout, or exhaustion of its reachable configuration space; the other
/// candidates keep running.
inline SearchOutcome feedback_directed_search(const std::vector<EnvironmentSpec>& candidates,
                                              const Validator& validator,
                                              const SearchInputs& inputs) {
    if (candidates.empty()) throw Error("feedback_directed_search: no candidate environments");
    if (!inputs.index) throw Error("feedback_directed_search: package index required");

    SearchOutcome outcome;
    detail::KeyAudit audit;
    auto started_at = std::chrono::steady_clock::now();

    std::vector<detail::CandidateRun> runs;
    for (const auto& env : candidates) {
        detail::CandidateRun run;
        run.initial_env = env;
        run.checkpoint_env = env;
        run.stats.origin = env.origin.empty() ? to_string(env.runtime) : env.origin;
        runs.push_back(std::move(run));
    }

    auto budget_exceeded = [&]() {
        if (inputs.budget.max_validations &&
            outcome.validations_total >= *inputs.budget.max_validations)
            return true;
        return std::chrono::steady_clock::now() - started_at >= inputs.budget.wall_clock_limit;
    };

    auto validate = [&](detail::CandidateRun& run,
                        const EnvironmentSpec& env) -> ValidationResult {
        std::string key = canonical_key(env);
        audit.record(key, env);
        run.validated.insert(key);
        ValidationResult result = validator(env);
        run.stats.validations++;
        outcome.validations_total++;
        outcome.validation_log.push_back({key, run.stats.origin, result.status,
                                          result.exception_name, result.snippet_line});
        return result;
    };

    std::size_t live = runs.size();
    while (live > 0) {
        for (auto& run : runs) {
            if (run.halted) continue;
            if (budget_exceeded()) {
                outcome.termination = Termination::Budget;
                for (auto& r : runs)
                    outcome.per_candidate_stats.push_back(r.stats);
                return outcome;
            }

            EnvironmentSpec env;
            Patch path;
            if (!run.started) {
                run.started = true;
                env = run.initial_env;
            } else {
                auto item = run.stream->next();
                if (!item) {
                    run.halted = true;
                    run.stats.halt_reason = Termination::SpaceExhausted;
                    if (run.checkpoint) run.stats.final_checkpoint = run.checkpoint->result;
                    live--;
                    continue;
                }
                env = std::move(item->env);
                path = std::move(item->path);
                if (run.checkpoint) run.checkpoint->mutations_since = path;
            }

            ValidationResult result = validate(run, env);

            if (result.status == ValidationStatus::Timeout) {
                run.halted = true;
                run.stats.halt_reason = Termination::Inconclusive;
                if (run.checkpoint) run.stats.final_checkpoint = run.checkpoint->result;
                live--;
                continue;
            }

            bool fixed = run.checkpoint ? is_fixed(*run.checkpoint, result)
                                        : result.status == ValidationStatus::Success;
            if (run.checkpoint && fixed) {
                DriftInstance drift;
                drift.checkpoint = run.checkpoint->result;
                drift.patch = path;
                drift.validations_spent = run.stats.validations - run.validations_at_checkpoint;
                drift.localized_package = run.localized;
                run.stats.mutations += drift.patch.size();
                outcome.drift_instances.push_back(std::move(drift));
            }

            if (result.status == ValidationStatus::Success) {
                outcome.working_env = env;
                outcome.termination = Termination::Working;
                outcome.per_candidate_stats.clear();
                for (auto& r : runs)
                    outcome.per_candidate_stats.push_back(r.stats);
                return outcome;
            }

            // an exception that did not fix the checkpoint feeds the current
            // mutator; one that did (or the first failure) becomes the new
            // checkpoint
            if (!run.checkpoint || fixed) {
                run.checkpoint = Checkpoint{result, canonical_key(env), {}};
                run.checkpoint_env = env;
                run.validations_at_checkpoint = run.stats.validations;
                if (!is_fixable(result, env, inputs.kb)) {
                    run.halted = true;
                    run.stats.halt_reason = Termination::NotFixable;
                    run.stats.final_checkpoint = result;
                    live--;
                    continue;
                }
                run.localized = localize_fault(result, env, inputs.kb);
                run.stream = std::make_unique<detail::CheckpointMutator>(
                    env, run.localized, *inputs.index, inputs.matrices, run.validated);
            }
        }
    }

    for (auto& run : runs)
        outcome.per_candidate_stats.push_back(run.stats);
    bool any_not_fixable = false, any_exhausted = false;
    for (const auto& run : runs) {
        if (run.stats.halt_reason == Termination::NotFixable) any_not_fixable = true;
        if (run.stats.halt_reason == Termination::SpaceExhausted) any_exhausted = true;
    }
    outcome.termination = any_not_fixable ? Termination::NotFixable
                          : any_exhausted ? Termination::SpaceExhausted
                                          : Termination::Inconclusive;
    return outcome;
}

/// Uninformed baseline: iterative-deepening depth-first enumeration of the
/// operator-closure space, validating every configuration exactly once,
/// without checkpoints, localization, or matrices.
inline SearchOutcome iddfs_baseline(const std::vector<EnvironmentSpec>& candidates,
                                    const Validator& validator, const SearchInputs& inputs) {
    if (candidates.empty()) throw Error("iddfs_baseline: no candidate environments");
    if (!inputs.index) throw Error("iddfs_baseline: package index required");

    SearchOutcome outcome;
    detail::KeyAudit audit;
    auto started_at = std::chrono::steady_clock::now();

    std::vector<detail::CandidateRun> runs;
    for (const auto& env : candidates) {
        detail::CandidateRun run;
        run.initial_env = env;
        run.stats.origin = env.origin.empty() ? to_string(env.runtime) : env.origin;
        runs.push_back(std::move(run));
    }

    auto budget_exceeded = [&]() {
        if (inputs.budget.max_validations &&
            outcome.validations_total >= *inputs.budget.max_validations)
            return true;
        return std::chrono::steady_clock::now() - started_at >= inputs.budget.wall_clock_limit;
    };

    std::size_t live = runs.size();
    while (live > 0) {
        for (auto& run : runs) {
            if (run.halted) continue;
            if (budget_exceeded()) {
                outcome.termination = Termination::Budget;
                for (auto& r : runs)
                    outcome.per_candidate_stats.push_back(r.stats);
                return outcome;
            }

            EnvironmentSpec env;
            if (!run.started) {
                run.started = true;
                env = run.initial_env;
                run.stream = std::make_unique<detail::IddfsStream>(
                    run.initial_env, std::nullopt, *inputs.index, nullptr, run.validated);
            } else {
                auto item = run.stream->next();
                if (!item) {
                    run.halted = true;
                    run.stats.halt_reason = Termination::SpaceExhausted;
                    live--;
                    continue;
                }
                env = std::move(item->env);
            }

            std::string key = canonical_key(env);
            audit.record(key, env);
            run.validated.insert(key);
            ValidationResult result = validator(env);
            run.stats.validations++;
            outcome.validations_total++;
            outcome.validation_log.push_back({key, run.stats.origin, result.status,
                                              result.exception_name, result.snippet_line});

            if (result.status == ValidationStatus::Success) {
                outcome.working_env = env;
                outcome.termination = Termination::Working;
                outcome.per_candidate_stats.clear();
                for (auto& r : runs)
                    outcome.per_candidate_stats.push_back(r.stats);
                return outcome;
            }
            if (result.status == ValidationStatus::Timeout) {
                run.halted = true;
                run.stats.halt_reason = Termination::Inconclusive;
                live--;
                continue;
            }
        }
    }

    for (auto& run : runs)
        outcome.per_candidate_stats.push_back(run.stats);
    bool any_exhausted = false;
    for (const auto& run : runs)
        if (run.stats.halt_reason == Termination::SpaceExhausted) any_exhausted = true;
    outcome.termination = any_exhausted ? Termination::SpaceExhausted : Termination::Inconclusive;
    return outcome;
}

/// The matrix-guided mutation stream for one package, exposed for direct
/// inspection: yields the jump targets in exploration order, then falls back
/// to IDDFS from the last jumped-to version.
inline std::vector<Patch> matrix_mutator_preview(const EnvironmentSpec& env,
                                                 const std::string& package,
                                                 const UpgradeMatrix& matrix,
                                                 const PackageIndex& index, std::size_t limit) {
    std::set<std::string> validated{canonical_key(env)};
    detail::MatrixStream stream(env, package, matrix, index, nullptr, validated);
    std::vector<Patch> out;
    while (out.size() < limit) {
        auto item = stream.next();
        if (!item) break;
        validated.insert(canonical_key(item->env));
        out.push_back(item->path);
    }
    return out;
}

} // namespace drift
