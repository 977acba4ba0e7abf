#pragma once
// Second-stage consolidation of initial pure phases: agglomerative merging
// over peak-location distances, manual merges, and lineage replay/undo.

#include <xrdphase/baseline.hpp>
#include <xrdphase/core.hpp>
#include <xrdphase/phasemap.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace xrdphase {

enum class PeakMetric { avg_peak_diff, max_peak_diff, sum_peak_diff };

inline std::string to_string(PeakMetric m) {
    switch (m) {
        case PeakMetric::avg_peak_diff: return "avg_peak_diff";
        case PeakMetric::max_peak_diff: return "max_peak_diff";
        case PeakMetric::sum_peak_diff: return "sum_peak_diff";
    }
    return "?";
}

inline PeakMetric parse_peak_metric(std::string_view s) {
    if (s == "avg_peak_diff") return PeakMetric::avg_peak_diff;
    if (s == "max_peak_diff") return PeakMetric::max_peak_diff;
    if (s == "sum_peak_diff") return PeakMetric::sum_peak_diff;
    throw ValidationError("unknown peak metric '" + std::string(s) + "'");
}

/// Peak-location distance between two patterns.
///
/// Equal peak counts pair peaks positionally. Otherwise the min(count)
/// closest cross pairs are matched greedily and every leftover peak costs
/// the pattern width. The per-pair differences and penalties are then
/// averaged, maxed or summed.
inline double phase_distance(const BinaryPeakPattern& p1, const BinaryPeakPattern& p2, PeakMetric metric) {
    if (p1.width() != p2.width()) throw ParameterError("phase_distance: pattern widths differ");
    const auto a = peak_locations(p1), b = peak_locations(p2);
    const double penalty = static_cast<double>(p1.width());
    std::vector<double> terms;
    if (a.size() == b.size()) {
        for (std::size_t k = 0; k < a.size(); ++k)
            terms.push_back(a[k] > b[k] ? double(a[k] - b[k]) : double(b[k] - a[k]));
    } else {
        struct Pair {
            std::size_t d, i, j;
        };
        std::vector<Pair> pairs;
        for (std::size_t i = 0; i < a.size(); ++i)
            for (std::size_t j = 0; j < b.size(); ++j)
                pairs.push_back({a[i] > b[j] ? a[i] - b[j] : b[j] - a[i], i, j});
        std::sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) {
            return std::tie(x.d, x.i, x.j) < std::tie(y.d, y.i, y.j);
        });
        std::vector<bool> used_a(a.size()), used_b(b.size());
        const std::size_t m = std::min(a.size(), b.size());
        for (const auto& p : pairs) {
            if (terms.size() == m) break;
            if (used_a[p.i] || used_b[p.j]) continue;
            used_a[p.i] = used_b[p.j] = true;
            terms.push_back(static_cast<double>(p.d));
        }
        for (std::size_t k = m; k < std::max(a.size(), b.size()); ++k) terms.push_back(penalty);
    }
    if (terms.empty()) return 0.0;
    switch (metric) {
        case PeakMetric::avg_peak_diff: {
            double s = 0.0;
            for (double t : terms) s += t;
            return s / static_cast<double>(terms.size());
        }
        case PeakMetric::max_peak_diff: return *std::max_element(terms.begin(), terms.end());
        case PeakMetric::sum_peak_diff: {
            double s = 0.0;
            for (double t : terms) s += t;
            return s;
        }
    }
    return 0.0;
}

/// Who applied a merge, and when. Timestamps are injected so tests and
/// replays stay reproducible.
struct MergeContext {
    std::string actor = "user";
    std::string timestamp;
};

inline std::string utc_timestamp_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

using PhaseMapping = std::map<PhaseId, PhaseId>;

namespace detail {

inline std::size_t pure_member_count(const MembershipTable& mm, PhaseId id) {
    std::size_t n = 0;
    for (const auto& [sample, set] : mm.entries())
        if (set.size() == 1 && set.front() == id) ++n;
    return n;
}

// Phase with the most pure members; ties go to the lowest id.
inline PhaseId largest_phase(const PhaseMapResult& r, const std::vector<PhaseId>& ids) {
    PhaseId best = ids.front();
    std::size_t best_n = 0;
    bool first = true;
    for (PhaseId id : ids) {
        const std::size_t n = pure_member_count(r.memberships, id);
        if (first || n > best_n || (n == best_n && id < best)) {
            best = id;
            best_n = n;
            first = false;
        }
    }
    return best;
}

enum class RepresentativeRule { largest, average_if_uniform };

// Replaces each group (size >= 2) by a fresh phase placed where its first
// constituent was; returns the old -> new id map (identity for untouched ids).
inline PhaseMapping apply_groups(PhaseMapResult& r, const std::vector<std::vector<PhaseId>>& groups,
                                 RepresentativeRule rule, std::vector<std::string>& warnings) {
    PhaseMapping mapping;
    for (const auto& p : r.catalog.phases()) mapping[p.id] = p.id;

    std::vector<PurePhase> rebuilt;
    std::map<PhaseId, std::size_t> group_of;
    for (std::size_t g = 0; g < groups.size(); ++g)
        if (groups[g].size() >= 2)
            for (PhaseId id : groups[g]) group_of[id] = g;

    std::map<std::size_t, PhaseId> new_id;
    for (const auto& p : r.catalog.phases()) {
        auto it = group_of.find(p.id);
        if (it == group_of.end()) {
            rebuilt.push_back(p);
            continue;
        }
        const auto& members = groups[it->second];
        if (new_id.contains(it->second)) {
            mapping[p.id] = new_id[it->second];
            continue;
        }
        const PhaseId merged{r.catalog.next_index()};
        r.catalog.set_next_index(merged.index + 1);
        new_id[it->second] = merged;
        mapping[p.id] = merged;

        PurePhase out{merged, {}, {}};
        std::set<std::size_t> counts;
        std::vector<BinaryPeakPattern> patterns;
        for (const auto& q : r.catalog.phases()) {
            if (std::find(members.begin(), members.end(), q.id) == members.end()) continue;
            counts.insert(q.representative.peak_count());
            out.members.insert(out.members.end(), q.members.begin(), q.members.end());
            for (const auto& s : q.members)
                if (const auto* pat = r.pattern_of(s)) patterns.push_back(*pat);
        }
        std::set<std::size_t> member_counts;
        for (const auto& pat : patterns) member_counts.insert(pat.peak_count());
        const bool uniform = counts.size() == 1 && member_counts.size() == 1 &&
                             *counts.begin() == *member_counts.begin();
        if (rule == RepresentativeRule::average_if_uniform && uniform && !patterns.empty()) {
            out.representative = average_representation(patterns, *counts.begin());
        } else {
            out.representative = r.catalog.find(largest_phase(r, members))->representative;
            if (rule == RepresentativeRule::average_if_uniform)
                warnings.push_back(merged.str() + ": peak counts differ, kept representative of " +
                                   largest_phase(r, members).str());
        }
        if (counts.size() > 1)
            warnings.push_back(merged.str() + ": merged phases with different peak counts (" +
                               join_phase_set(normalized(members), ',') + ")");
        rebuilt.push_back(std::move(out));
    }

    r.memberships.transform([&](const std::string& sample, const PhaseSet& set) -> PhaseSet {
        PhaseSet mapped;
        for (PhaseId id : set) mapped.push_back(mapping.contains(id) ? mapping[id] : id);
        mapped = normalized(std::move(mapped));
        if (set.size() >= 2 && mapped.size() == 1) {
            for (auto& p : rebuilt)
                if (p.id == mapped.front()) p.members.push_back(sample);
        }
        return mapped;
    });
    r.catalog.phases() = std::move(rebuilt);
    return mapping;
}

}  // namespace detail

struct HierarchicalMergeOutcome {
    PhaseMapResult result;
    PhaseMapping mapping;
};

/// Average-linkage agglomeration of the pure-phase representatives, cut at
/// `cutoff`. Merged phases take the positional average of their pure members
/// when all peak counts agree, otherwise the largest constituent's pattern.
inline HierarchicalMergeOutcome hierarchical_merge(PhaseMapResult result, PeakMetric metric, double cutoff,
                                                   const MergeContext& ctx = {}) {
    if (!(cutoff >= 0.0)) throw ValidationError("cutoff must be non-negative");
    const auto& phases = result.catalog.phases();
    const std::size_t n = phases.size();
    std::vector<std::vector<PhaseId>> groups;
    if (n > 1) {
        DistanceMatrix d(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                d(i, j) = d(j, i) = phase_distance(phases[i].representative, phases[j].representative, metric);
        const auto labels = agglomerative_cluster(d, cutoff);
        groups.resize(cluster_count(labels));
        for (std::size_t i = 0; i < n; ++i) groups[labels[i]].push_back(phases[i].id);
    }
    LineageEntry entry{"hierarchical_merge", {}, to_string(metric), cutoff, ctx.actor, ctx.timestamp, {}};
    auto mapping = detail::apply_groups(result, groups, detail::RepresentativeRule::average_if_uniform,
                                        entry.warnings);
    result.lineage.push_back(std::move(entry));
    return {std::move(result), std::move(mapping)};
}

/// Merges the given pure phases into one new phase whose representative is
/// that of the constituent with the most pure members (ties: lowest id).
inline PhaseMapResult manual_merge(PhaseMapResult result, std::vector<PhaseId> ids,
                                   const MergeContext& ctx = {}) {
    ids = normalized(std::move(ids));
    if (ids.size() < 2) throw ValidationError("merge needs at least two distinct phase ids");
    for (PhaseId id : ids)
        if (!result.catalog.contains(id)) throw ValidationError("unknown phase id " + id.str());
    LineageEntry entry{"manual_merge", ids, "", 0.0, ctx.actor, ctx.timestamp, {}};
    detail::apply_groups(result, {ids}, detail::RepresentativeRule::largest, entry.warnings);
    result.lineage.push_back(std::move(entry));
    return result;
}

/// Rebuilds the result from its input patterns and parameters, then
/// re-applies `lineage` in order.
inline PhaseMapResult replay(const PhaseMapResult& result, const std::vector<LineageEntry>& lineage) {
    PhaseMapResult base = run_incremental_phase_mapping(result.patterns, result.params.mapping);
    base.params = result.params;
    for (const auto& e : lineage) {
        const MergeContext ctx{e.actor, e.timestamp};
        if (e.op == "manual_merge") {
            base = manual_merge(std::move(base), e.ids, ctx);
        } else if (e.op == "hierarchical_merge") {
            base = hierarchical_merge(std::move(base), parse_peak_metric(e.metric), e.cutoff, ctx).result;
        } else {
            throw ValidationError("unknown lineage operation '" + e.op + "'");
        }
    }
    return base;
}

inline PhaseMapResult replay(const PhaseMapResult& result) { return replay(result, result.lineage); }

/// Drops the last lineage entry by replaying the rest.
inline PhaseMapResult undo(const PhaseMapResult& result) {
    if (result.lineage.empty()) throw ValidationError("nothing to undo");
    std::vector<LineageEntry> shorter(result.lineage.begin(), result.lineage.end() - 1);
    return replay(result, shorter);
}

}  // namespace xrdphase
