#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "driftsearch/errors.hpp"

namespace drift {

/// A parsed semantic-like version.
///
/// Ordering is by (major, minor, patch); a version carrying a prerelease
/// tag sorts before the plain release with the same triple, and remaining
/// ties are broken by the raw string.
struct Version {
    std::uint64_t major = 0;
    std::uint64_t minor = 0;
    std::uint64_t patch = 0;
    std::optional<std::string> prerelease;
    std::string raw;

    bool is_prerelease() const { return prerelease.has_value(); }

    int compare(const Version& o) const {
        if (major != o.major) return major < o.major ? -1 : 1;
        if (minor != o.minor) return minor < o.minor ? -1 : 1;
        if (patch != o.patch) return patch < o.patch ? -1 : 1;
        if (is_prerelease() != o.is_prerelease()) return is_prerelease() ? -1 : 1;
        return raw.compare(o.raw) < 0 ? -1 : (raw == o.raw ? 0 : 1);
    }

    const std::string& str() const { return raw; }
};

inline bool operator<(const Version& a, const Version& b) { return a.compare(b) < 0; }
inline bool operator>(const Version& a, const Version& b) { return a.compare(b) > 0; }
inline bool operator<=(const Version& a, const Version& b) { return a.compare(b) <= 0; }
inline bool operator>=(const Version& a, const Version& b) { return a.compare(b) >= 0; }
inline bool operator==(const Version& a, const Version& b) { return a.compare(b) == 0; }
inline bool operator!=(const Version& a, const Version& b) { return a.compare(b) != 0; }

/// Lenient parse of an ecosystem version string. The numeric dotted prefix
/// maps to major/minor/patch (missing components default to 0) and any
/// remaining suffix is kept as an opaque prerelease tag. Throws ParseError
/// when the string does not start with a digit.
inline Version parse_version(std::string_view text) {
    if (text.empty())
        throw ParseError("empty version string");
    if (!std::isdigit(static_cast<unsigned char>(text.front())))
        throw ParseError("version has no leading numeric component: " + std::string(text));

    Version v;
    v.raw = std::string(text);

    std::size_t pos = 0;
    auto read_component = [&](std::uint64_t& out) -> bool {
        if (pos >= text.size() || !std::isdigit(static_cast<unsigned char>(text[pos])))
            return false;
        std::uint64_t value = 0;
        while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) {
            std::uint64_t digit = static_cast<std::uint64_t>(text[pos] - '0');
            if (value > (UINT64_MAX - digit) / 10)
                throw ParseError("version component overflows: " + std::string(text));
            value = value * 10 + digit;
            ++pos;
        }
        out = value;
        return true;
    };

    read_component(v.major);
    for (std::uint64_t* slot : {&v.minor, &v.patch}) {
        if (pos < text.size() && text[pos] == '.' && pos + 1 < text.size() &&
            std::isdigit(static_cast<unsigned char>(text[pos + 1]))) {
            ++pos;
            read_component(*slot);
        }
    }

    if (pos < text.size()) {
        std::string_view suffix = text.substr(pos);
        while (!suffix.empty() &&
               (suffix.front() == '-' || suffix.front() == '.' || suffix.front() == '_' ||
                suffix.front() == '+'))
            suffix.remove_prefix(1);
        if (!suffix.empty())
            v.prerelease = std::string(suffix);
    }
    return v;
}

inline std::optional<Version> try_parse_version(std::string_view text) {
    try {
        return parse_version(text);
    } catch (const ParseError&) {
        return std::nullopt;
    }
}

/// The ordered list of a package's releases.
struct ReleaseHistory {
    std::string package;
    std::vector<Version> releases; // strictly ascending, no duplicates
    /// Whether prerelease versions count as mutation targets (load-time flag).
    bool include_prerelease = false;

    bool empty() const { return releases.empty(); }

    /// Sorts ascending and drops exact duplicates. Call after bulk insertion.
    void normalize() {
        std::sort(releases.begin(), releases.end());
        releases.erase(std::unique(releases.begin(), releases.end(),
                                   [](const Version& a, const Version& b) { return a == b; }),
                       releases.end());
    }

    bool contains(const Version& v) const {
        return std::binary_search(releases.begin(), releases.end(), v);
    }

    std::optional<Version> find(std::string_view raw) const {
        for (const auto& r : releases)
            if (r.raw == raw) return r;
        return std::nullopt;
    }

    bool eligible(const Version& v) const { return include_prerelease || !v.is_prerelease(); }
};

/// Latest release of the history. Prereleases are skipped unless the flag is
/// set or every release is a prerelease. Throws EmptyHistory.
inline Version latest_version(const ReleaseHistory& history, bool include_prerelease = false) {
    if (history.empty())
        throw EmptyHistory("no releases for package " + history.package);
    if (!include_prerelease) {
        for (auto it = history.releases.rbegin(); it != history.releases.rend(); ++it)
            if (!it->is_prerelease()) return *it;
    }
    return history.releases.back();
}

/// Latest release at the largest major strictly below current.major, or
/// nothing when no smaller major exists.
inline std::optional<Version> decrement_semver_major(const ReleaseHistory& history,
                                                     const Version& current) {
    std::optional<Version> best;
    for (const auto& r : history.releases) {
        if (!history.eligible(r) || r.major >= current.major) continue;
        if (!best || r.major > best->major || (r.major == best->major && r > *best))
            best = r;
    }
    return best;
}

/// Latest release with the same major and the largest minor strictly below
/// current.minor. Never crosses a major version boundary.
inline std::optional<Version> decrement_semver_minor(const ReleaseHistory& history,
                                                     const Version& current) {
    std::optional<Version> best;
    for (const auto& r : history.releases) {
        if (!history.eligible(r) || r.major != current.major || r.minor >= current.minor) continue;
        if (!best || r.minor > best->minor || (r.minor == best->minor && r > *best))
            best = r;
    }
    return best;
}

/// All versions reachable from `start` through the two decrement operators,
/// computed by a direct scan: the start itself plus the latest eligible
/// release of every (major, minor) level below it.
inline std::vector<Version> operator_closure_versions(const ReleaseHistory& history,
                                                      const Version& start) {
    std::vector<Version> out{start};
    std::vector<std::pair<std::pair<std::uint64_t, std::uint64_t>, Version>> levels;
    for (const auto& r : history.releases) {
        if (!history.eligible(r)) continue;
        bool below = r.major < start.major || (r.major == start.major && r.minor < start.minor);
        if (!below) continue;
        auto key = std::make_pair(r.major, r.minor);
        auto it = std::find_if(levels.begin(), levels.end(),
                               [&](const auto& e) { return e.first == key; });
        if (it == levels.end())
            levels.emplace_back(key, r);
        else if (r > it->second)
            it->second = r;
    }
    for (auto& [key, v] : levels)
        out.push_back(v);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

} // namespace drift
