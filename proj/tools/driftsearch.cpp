#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "driftsearch/driftsearch.hpp"

namespace fs = std::filesystem;
using drift::json;

namespace {

struct CommonOptions {
    std::string manifest_path;
    std::string index_path;
    std::string kb_path;
    std::string matrix_path;
    std::string world_path;
    std::string snippet_path;
    std::string backend = "sim";
    std::string executor_cmd;
    std::string out_path;
    long budget_seconds = 3600;
    long max_validations = 0;
    bool verbose = false;
};

void add_search_flags(CLI::App* cmd, CommonOptions& opt) {
    cmd->add_option("--manifest", opt.manifest_path, "snippet manifest (JSON)")->required();
    cmd->add_option("--index", opt.index_path, "package index (JSON)");
    cmd->add_option("--kb", opt.kb_path, "knowledge base (JSON)");
    cmd->add_option("--matrix", opt.matrix_path, "compiled upgrade matrices (JSON)");
    cmd->add_option("--world", opt.world_path, "simulated world (JSON, sim backend)");
    cmd->add_option("--snippet", opt.snippet_path,
                    "snippet statements (JSON, sim) or source path (exec)");
    cmd->add_option("--backend", opt.backend, "validator backend")
        ->check(CLI::IsMember({"sim", "exec"}));
    cmd->add_option("--executor-cmd", opt.executor_cmd,
                    "executor launch command (defaults to $V2_EXECUTOR_CMD)");
    cmd->add_option("--budget-seconds", opt.budget_seconds, "wall clock budget");
    cmd->add_option("--max-validations", opt.max_validations, "validation count budget");
    cmd->add_option("--out,-o", opt.out_path, "report output path (default stdout)");
    cmd->add_flag("-v,--verbose", opt.verbose, "log each validation to stderr");
}

int exit_code_for(drift::Termination t) {
    switch (t) {
        case drift::Termination::Working: return 0;
        case drift::Termination::NotFixable:
        case drift::Termination::SpaceExhausted: return 2;
        case drift::Termination::Budget:
        case drift::Termination::Inconclusive: return 3;
    }
    return 1;
}

int run_search(const CommonOptions& opt, bool baseline) {
    drift::SnippetManifest manifest =
        drift::manifest_from_json(drift::load_json_file(opt.manifest_path));

    std::optional<drift::sim::SimWorld> world;
    if (!opt.world_path.empty())
        world = drift::sim::world_from_json(drift::load_json_file(opt.world_path));

    drift::PackageIndex index;
    if (!opt.index_path.empty())
        index = drift::package_index_from_json(drift::load_json_file(opt.index_path));
    else if (world)
        index = world->index;
    else
        throw drift::IoError("no package index: pass --index or --world");

    drift::KnowledgeBase kb;
    if (!opt.kb_path.empty())
        kb = drift::knowledge_base_from_json(drift::load_json_file(opt.kb_path));
    else if (world)
        kb = drift::sim::knowledge_base_from_world(*world);

    drift::MatrixMap matrices;
    if (!opt.matrix_path.empty())
        matrices = drift::matrix_map_from_json(drift::load_json_file(opt.matrix_path));

    auto candidates = drift::generate_candidates(manifest, kb, index);
    int timeout = drift::timeout_budget(manifest.kind, manifest.cell_count);

    drift::Validator validator;
    std::optional<drift::ExecutorClient> client;
    std::optional<drift::sim::SimSnippet> snippet;
    if (opt.backend == "sim") {
        if (!world) throw drift::IoError("sim backend requires --world");
        if (!opt.snippet_path.empty())
            snippet = drift::sim::snippet_from_json(drift::load_json_file(opt.snippet_path));
        else if (world->snippet)
            snippet = world->snippet;
        else
            throw drift::IoError("sim backend requires --snippet or a world with an embedded one");
        validator = [&](const drift::EnvironmentSpec& env) {
            return drift::sim::simulate_validation(*snippet, env, *world, timeout);
        };
    } else {
        std::string cmd = opt.executor_cmd;
        if (cmd.empty()) {
            const char* env_cmd = std::getenv(drift::kExecutorCmdEnvVar);
            if (env_cmd) cmd = env_cmd;
        }
        if (cmd.empty())
            throw drift::IoError(std::string("exec backend requires --executor-cmd or $") +
                                 drift::kExecutorCmdEnvVar);
        if (opt.snippet_path.empty())
            throw drift::IoError("exec backend requires --snippet (path to the snippet source)");
        client.emplace(cmd);
        validator = [&, timeout](const drift::EnvironmentSpec& env) {
            return client->validate(opt.snippet_path, env, timeout);
        };
    }

    if (opt.verbose) {
        drift::Validator inner = validator;
        validator = [inner](const drift::EnvironmentSpec& env) {
            auto result = inner(env);
            std::cerr << "validated " << drift::canonical_key(env) << " -> "
                      << drift::to_string(result.status) << "\n";
            return result;
        };
    }

    drift::SearchInputs inputs;
    inputs.index = &index;
    inputs.kb = &kb;
    inputs.matrices = matrices.empty() ? nullptr : &matrices;
    inputs.budget.wall_clock_limit = std::chrono::seconds(opt.budget_seconds);
    if (opt.max_validations > 0)
        inputs.budget.max_validations = static_cast<std::size_t>(opt.max_validations);

    drift::SearchOutcome outcome =
        baseline ? drift::iddfs_baseline(candidates.environments, validator, inputs)
                 : drift::feedback_directed_search(candidates.environments, validator, inputs);

    std::vector<std::string> notes;
    for (const auto& m : candidates.unmapped_modules)
        notes.push_back("unmapped module: " + m);
    for (const auto& e : candidates.broken_edges)
        notes.push_back("broken dependency cycle edge: " + e.dependency + " -> " + e.dependent);

    json report = drift::search_report(outcome, manifest.snippet_id,
                                       baseline ? "baseline" : "search", opt.backend, notes);
    std::string text = report.dump(2) + "\n";
    if (opt.out_path.empty())
        std::cout << text;
    else
        drift::write_text_file(opt.out_path, text);
    return exit_code_for(outcome.termination);
}

int run_analyze(const CommonOptions& opt) {
    drift::SnippetManifest manifest =
        drift::manifest_from_json(drift::load_json_file(opt.manifest_path));
    std::optional<drift::sim::SimWorld> world;
    if (!opt.world_path.empty())
        world = drift::sim::world_from_json(drift::load_json_file(opt.world_path));
    drift::PackageIndex index;
    if (!opt.index_path.empty())
        index = drift::package_index_from_json(drift::load_json_file(opt.index_path));
    else if (world)
        index = world->index;
    else
        throw drift::IoError("no package index: pass --index or --world");
    drift::KnowledgeBase kb;
    if (!opt.kb_path.empty())
        kb = drift::knowledge_base_from_json(drift::load_json_file(opt.kb_path));
    else if (world)
        kb = drift::sim::knowledge_base_from_world(*world);

    auto candidates = drift::generate_candidates(manifest, kb, index);
    json out = json::array();
    for (const auto& env : candidates.environments) {
        std::cout << "candidate " << env.origin << " (runtime " << drift::to_string(env.runtime)
                  << ")\n";
        for (const auto& [pkg, v] : env.deps)
            std::cout << "  " << pkg << "==" << v.raw << "\n";
        out.push_back(drift::to_json(env));
    }
    for (const auto& m : candidates.unmapped_modules)
        std::cerr << "warning: unmapped module " << m << "\n";
    for (const auto& e : candidates.broken_edges)
        std::cerr << "warning: broke dependency cycle edge " << e.dependency << " -> "
                  << e.dependent << "\n";
    if (!opt.out_path.empty()) drift::write_text_file(opt.out_path, out.dump(2) + "\n");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"configuration drift detection for code snippets"};
    app.require_subcommand(1);

    CommonOptions search_opt, baseline_opt, analyze_opt;
    auto* search_cmd =
        app.add_subcommand("search", "feedback-directed search for configuration drift");
    add_search_flags(search_cmd, search_opt);
    auto* baseline_cmd =
        app.add_subcommand("baseline", "iterative-deepening depth-first baseline search");
    add_search_flags(baseline_cmd, baseline_opt);

    auto* analyze_cmd =
        app.add_subcommand("analyze", "generate candidate environments without validating");
    analyze_cmd->add_option("--manifest", analyze_opt.manifest_path, "snippet manifest (JSON)")
        ->required();
    analyze_cmd->add_option("--index", analyze_opt.index_path, "package index (JSON)");
    analyze_cmd->add_option("--kb", analyze_opt.kb_path, "knowledge base (JSON)");
    analyze_cmd->add_option("--world", analyze_opt.world_path, "simulated world (JSON)");
    analyze_cmd->add_option("--out,-o", analyze_opt.out_path, "write candidates as JSON");

    auto* matrix_cmd = app.add_subcommand("matrix", "upgrade matrix tools");
    matrix_cmd->require_subcommand(1);
    std::string events_path, matrix_out, matrix_in, show_package;
    auto* matrix_build = matrix_cmd->add_subcommand("build", "compile upgrade events into matrices");
    matrix_build->add_option("events", events_path, "upgrade events (CSV)")->required();
    matrix_build->add_option("--out,-o", matrix_out, "output path (JSON)")->required();
    auto* matrix_show = matrix_cmd->add_subcommand("show", "render one package's matrix as a grid");
    matrix_show->add_option("package", show_package, "package id")->required();
    matrix_show->add_option("--matrix", matrix_in, "compiled matrices (JSON)")->required();

    auto* simulate_cmd =
        app.add_subcommand("simulate", "generate a seeded scenario (world, snippet, manifest, kb)");
    std::uint64_t sim_seed = 1;
    int sim_packages = 2, sim_versions = 4, sim_drifts = 1;
    std::string sim_out = ".";
    simulate_cmd->add_option("--seed", sim_seed, "scenario seed");
    simulate_cmd->add_option("--packages", sim_packages, "package count");
    simulate_cmd->add_option("--versions", sim_versions, "max versions per package");
    simulate_cmd->add_option("--drifts", sim_drifts, "seeded drift count");
    simulate_cmd->add_option("--out,-o", sim_out, "output directory")->required();

    auto* report_cmd = app.add_subcommand("report", "fold search reports into summary counts");
    std::vector<std::string> report_paths;
    std::string report_out;
    report_cmd->add_option("reports", report_paths, "report files (JSON)")->required();
    report_cmd->add_option("--out,-o", report_out, "write the summary as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (search_cmd->parsed()) return run_search(search_opt, /*baseline=*/false);
        if (baseline_cmd->parsed()) return run_search(baseline_opt, /*baseline=*/true);
        if (analyze_cmd->parsed()) return run_analyze(analyze_opt);
        if (matrix_cmd->parsed()) {
            if (matrix_build->parsed()) {
                auto file = drift::parse_upgrade_events_csv(drift::load_text_file(events_path));
                auto matrices = drift::build_matrix(file.events);
                drift::write_text_file(matrix_out,
                                       drift::matrix_map_to_json(matrices).dump(2) + "\n");
                std::cout << "events: " << file.events.size()
                          << ", malformed rows skipped: " << file.malformed_rows
                          << ", packages with matrices: " << matrices.size() << "\n";
                return 0;
            }
            auto matrices = drift::matrix_map_from_json(drift::load_json_file(matrix_in));
            auto it = matrices.find(show_package);
            if (it == matrices.end()) {
                std::cerr << "no matrix for package " << show_package << "\n";
                return 1;
            }
            std::cout << drift::render_matrix_grid(it->second);
            return 0;
        }
        if (simulate_cmd->parsed()) {
            drift::sim::ScenarioKnobs knobs{sim_packages, sim_versions, sim_drifts};
            auto scenario = drift::sim::generate_scenario(sim_seed, knobs);
            fs::create_directories(sim_out);
            auto path = [&](const char* name) { return (fs::path(sim_out) / name).string(); };
            drift::write_text_file(path("world.json"),
                                   drift::sim::to_json(scenario.world).dump(2) + "\n");
            drift::write_text_file(path("snippet.json"),
                                   drift::sim::to_json(scenario.snippet).dump(2) + "\n");
            json mj{{"snippet_id", scenario.manifest.snippet_id},
                    {"kind", "script"},
                    {"cell_count", 0},
                    {"imports", scenario.manifest.imports},
                    {"runtime_candidates", json::array()}};
            for (auto r : scenario.manifest.runtime_candidates)
                mj["runtime_candidates"].push_back(drift::to_string(r));
            drift::write_text_file(path("manifest.json"), mj.dump(2) + "\n");
            auto kb = drift::sim::knowledge_base_from_world(scenario.world);
            json kj{{"modules", json::object()}, {"stdlib", json::array()}};
            for (const auto& [module, pkgs] : kb.module_map)
                kj["modules"][module] = pkgs;
            drift::write_text_file(path("kb.json"), kj.dump(2) + "\n");
            std::cout << "scenario " << scenario.manifest.snippet_id << " written to " << sim_out
                      << "\n";
            return 0;
        }
        if (report_cmd->parsed()) {
            std::vector<json> reports;
            for (const auto& p : report_paths)
                reports.push_back(drift::load_json_file(p));
            json summary = drift::fold_reports(reports);
            std::cout << "reports: " << summary["reports"] << "\n";
            std::cout << "terminations:\n";
            for (const auto& [t, n] : summary["terminations"].items())
                std::cout << "  " << t << ": " << n << "\n";
            std::cout << "drift instances: " << summary["drift_instances_total"] << "\n";
            std::cout << "validations: " << summary["validations_total"] << "\n";
            std::cout << "avg validations when working: "
                      << summary["avg_validations_when_working"] << "\n";
            if (!report_out.empty()) drift::write_text_file(report_out, summary.dump(2) + "\n");
            return 0;
        }
    } catch (const drift::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
