#pragma once

#include <algorithm>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "driftsearch/semver.hpp"

namespace drift {

enum class BuildStatus { Passing, Failing, Canceled, Errored };

inline std::optional<BuildStatus> parse_build_status(const std::string& s) {
    if (s == "passing") return BuildStatus::Passing;
    if (s == "failing") return BuildStatus::Failing;
    if (s == "canceled") return BuildStatus::Canceled;
    if (s == "errored") return BuildStatus::Errored;
    return std::nullopt;
}

/// A single mined upgrade event: one dependency version bump plus the CI
/// statuses before and after.
struct UpgradeEvent {
    std::string package;
    Version from_version;
    Version to_version;
    BuildStatus status_before = BuildStatus::Passing;
    BuildStatus status_after = BuildStatus::Passing;
};

struct MatrixCell {
    Version from_version; // upgrade source
    Version to_version;   // upgrade target
    std::size_t total_builds = 0;
    std::size_t broken_builds = 0;

    double breakage_percent() const {
        return total_builds == 0 ? 0.0 : 100.0 * static_cast<double>(broken_builds) /
                                             static_cast<double>(total_builds);
    }
};

/// Per-package table of upgrade breakage counts, keyed by the raw
/// (from, to) version pair.
struct UpgradeMatrix {
    std::string package;
    std::map<std::pair<std::string, std::string>, MatrixCell> cells;
};

using MatrixMap = std::map<std::string, UpgradeMatrix>;

/// Folds upgrade events into per-package matrices. Events with a canceled or
/// errored status on either side are excluded entirely; a breakage is a
/// passing-to-failing transition.
inline MatrixMap build_matrix(const std::vector<UpgradeEvent>& events) {
    MatrixMap out;
    for (const auto& e : events) {
        if (e.status_before == BuildStatus::Canceled || e.status_before == BuildStatus::Errored ||
            e.status_after == BuildStatus::Canceled || e.status_after == BuildStatus::Errored)
            continue;
        auto& matrix = out[e.package];
        matrix.package = e.package;
        auto key = std::make_pair(e.from_version.raw, e.to_version.raw);
        auto it = matrix.cells.find(key);
        if (it == matrix.cells.end()) {
            MatrixCell cell;
            cell.from_version = e.from_version;
            cell.to_version = e.to_version;
            it = matrix.cells.emplace(key, std::move(cell)).first;
        }
        it->second.total_builds += 1;
        if (e.status_before == BuildStatus::Passing && e.status_after == BuildStatus::Failing)
            it->second.broken_builds += 1;
    }
    return out;
}

/// Version ordering for matrix-guided exploration. Breaking pairs whose
/// upgrade target is at most `current` are grouped by descending target
/// version; within a group the downgrade candidates are appended by
/// descending breakage percentage (ties by descending version). Versions
/// with no breaking upgrades never appear.
inline std::vector<Version> exploration_order(const UpgradeMatrix& matrix, const Version& current) {
    struct Pair {
        Version target;  // v1
        Version source;  // v2, the downgrade candidate
        double pct;
    };
    std::vector<Pair> pairs;
    for (const auto& [key, cell] : matrix.cells) {
        if (cell.broken_builds == 0) continue;
        if (cell.to_version > current) continue;
        pairs.push_back({cell.to_version, cell.from_version, cell.breakage_percent()});
    }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
        if (a.target != b.target) return b.target < a.target;
        if (a.pct != b.pct) return a.pct > b.pct;
        return b.source < a.source;
    });
    std::vector<Version> order;
    for (const auto& p : pairs) {
        bool present = std::any_of(order.begin(), order.end(),
                                   [&](const Version& v) { return v == p.source; });
        if (!present) order.push_back(p.source);
    }
    return order;
}

// ---------------------------------------------------------------------------
// Upgrade-event CSV
// ---------------------------------------------------------------------------

struct EventFile {
    std::vector<UpgradeEvent> events;
    std::size_t malformed_rows = 0;
};

/// Parses `package,from_version,to_version,status_before,status_after` rows
/// (header expected). Malformed rows are counted and skipped.
inline EventFile parse_upgrade_events_csv(const std::string& text) {
    EventFile out;
    std::istringstream in(text);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (first) {
            first = false;
            continue; // header
        }
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            auto comma = line.find(',', start);
            fields.push_back(line.substr(start, comma == std::string::npos ? std::string::npos
                                                                           : comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (fields.size() != 5) {
            out.malformed_rows++;
            continue;
        }
        auto from = try_parse_version(fields[1]);
        auto to = try_parse_version(fields[2]);
        auto before = parse_build_status(fields[3]);
        auto after = parse_build_status(fields[4]);
        if (fields[0].empty() || !from || !to || !before || !after || from->raw == to->raw) {
            out.malformed_rows++;
            continue;
        }
        out.events.push_back({fields[0], *from, *to, *before, *after});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Compiled matrix JSON
// ---------------------------------------------------------------------------

inline nlohmann::json matrix_map_to_json(const MatrixMap& matrices) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [pkg, matrix] : matrices) {
        nlohmann::json cells = nlohmann::json::array();
        for (const auto& [key, cell] : matrix.cells)
            cells.push_back({{"from", cell.from_version.raw},
                             {"to", cell.to_version.raw},
                             {"total", cell.total_builds},
                             {"broken", cell.broken_builds}});
        j[pkg] = {{"cells", cells}};
    }
    return j;
}

inline MatrixMap matrix_map_from_json(const nlohmann::json& j) {
    MatrixMap out;
    for (const auto& [pkg, mj] : j.items()) {
        UpgradeMatrix matrix;
        matrix.package = pkg;
        for (const auto& cj : mj.at("cells")) {
            MatrixCell cell;
            cell.from_version = parse_version(cj.at("from").get<std::string>());
            cell.to_version = parse_version(cj.at("to").get<std::string>());
            cell.total_builds = cj.at("total").get<std::size_t>();
            cell.broken_builds = cj.at("broken").get<std::size_t>();
            if (cell.total_builds == 0 || cell.broken_builds > cell.total_builds)
                throw IoError("matrix cell for " + pkg + " has inconsistent counts");
            matrix.cells.emplace(std::make_pair(cell.from_version.raw, cell.to_version.raw),
                                 std::move(cell));
        }
        out.emplace(pkg, std::move(matrix));
    }
    return out;
}

/// Renders the matrix as a text grid: rows are upgrade sources, columns are
/// upgrade targets, cells are the percent of builds broken.
inline std::string render_matrix_grid(const UpgradeMatrix& matrix) {
    std::vector<Version> froms, tos;
    auto push_unique = [](std::vector<Version>& vs, const Version& v) {
        for (const auto& x : vs)
            if (x == v) return;
        vs.push_back(v);
    };
    for (const auto& [key, cell] : matrix.cells) {
        push_unique(froms, cell.from_version);
        push_unique(tos, cell.to_version);
    }
    std::sort(froms.begin(), froms.end());
    std::sort(tos.begin(), tos.end());

    std::size_t width = 6;
    for (const auto& v : froms) width = std::max(width, v.raw.size() + 2);
    for (const auto& v : tos) width = std::max(width, v.raw.size() + 2);

    std::ostringstream out;
    out << "upgrade matrix for " << matrix.package << " (% builds broken, from \\ to)\n";
    out << std::setw(static_cast<int>(width)) << "";
    for (const auto& t : tos)
        out << std::setw(static_cast<int>(width)) << t.raw;
    out << "\n";
    for (const auto& f : froms) {
        out << std::setw(static_cast<int>(width)) << f.raw;
        for (const auto& t : tos) {
            auto it = matrix.cells.find(std::make_pair(f.raw, t.raw));
            if (it == matrix.cells.end()) {
                out << std::setw(static_cast<int>(width)) << ".";
            } else {
                std::ostringstream cell;
                cell << std::fixed << std::setprecision(0) << it->second.breakage_percent() << "%";
                out << std::setw(static_cast<int>(width)) << cell.str();
            }
        }
        out << "\n";
    }
    return out.str();
}

} // namespace drift
