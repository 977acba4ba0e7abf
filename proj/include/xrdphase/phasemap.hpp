#pragma once
// Incremental phase computation over binary peak patterns.
//
// Samples are grouped by peak count and processed in ascending order. Each
// sample is compared, in order, against the pure phases and then against the
// mixed phases that can be formed from existing pure phases; the first
// fuzzy match wins, otherwise the sample seeds a new pure phase. After each
// group the new representatives are averaged and under-populated phases are
// dropped as outliers.

#include <xrdphase/core.hpp>

#include <algorithm>
#include <map>
#include <span>
#include <vector>

namespace xrdphase {

namespace detail {

// Distance from v to the closest entry of the sorted, non-empty list.
inline std::size_t nearest_distance(std::size_t v, const std::vector<std::size_t>& sorted) {
    auto it = std::lower_bound(sorted.begin(), sorted.end(), v);
    std::size_t best = static_cast<std::size_t>(-1);
    if (it != sorted.end()) best = *it - v;
    if (it != sorted.begin()) best = std::min(best, v - *std::prev(it));
    return best;
}

inline bool within_threshold(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b,
                             std::size_t th) {
    if (a.size() != b.size()) return false;
    if (a.empty()) return true;
    for (std::size_t i : a)
        if (nearest_distance(i, b) > th) return false;
    for (std::size_t i : b)
        if (nearest_distance(i, a) > th) return false;
    return true;
}

inline std::size_t round_half_up(std::size_t sum, std::size_t n) {
    return (2 * sum + n) / (2 * n);
}

}  // namespace detail

/// True iff both patterns have the same peak count and every peak of either
/// lies within `th` windows of some peak of the other.
inline bool fuzzy_equals(const BinaryPeakPattern& s1, const BinaryPeakPattern& s2, std::size_t th) {
    if (s1.width() != s2.width())
        throw ParameterError("fuzzy_equals: pattern widths differ (" + std::to_string(s1.width()) +
                             " vs " + std::to_string(s2.width()) + ")");
    if (s1.peak_count() != s2.peak_count()) return false;
    return detail::within_threshold(peak_locations(s1), peak_locations(s2), th);
}

/// Merges peaks whose consecutive gaps are <= th into one peak at the
/// rounded mean of the run. Input must be sorted and unique.
inline std::vector<std::size_t> coalesce_peaks(const std::vector<std::size_t>& sorted,
                                               std::size_t th) {
    std::vector<std::size_t> out;
    std::size_t i = 0;
    while (i < sorted.size()) {
        std::size_t j = i + 1, sum = sorted[i];
        while (j < sorted.size() && sorted[j] - sorted[j - 1] <= th) sum += sorted[j++];
        out.push_back(detail::round_half_up(sum, j - i));
        i = j;
    }
    return out;
}

struct MixedPhaseCandidate {
    PhaseSet constituents;
    BinaryPeakPattern merged_pattern;
    friend bool operator==(const MixedPhaseCandidate&, const MixedPhaseCandidate&) = default;
};

/// Every combination of 2..max_constituents pure phases whose coalesced peak
/// union has exactly `pc` peaks, sorted by constituent ids.
inline std::vector<MixedPhaseCandidate> compute_mixed_phases(const PhaseCatalog& pp, std::size_t pc,
                                                             std::size_t th,
                                                             std::size_t max_constituents = 3) {
    std::vector<MixedPhaseCandidate> out;
    const auto& phases = pp.phases();
    const std::size_t n = phases.size();
    if (n < 2 || max_constituents < 2) return out;

    // Enumerate over phases sorted by id so output order follows ids.
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return phases[a].id < phases[b].id; });
    std::vector<std::vector<std::size_t>> peaks(n);
    for (std::size_t i = 0; i < n; ++i) peaks[i] = peak_locations(phases[order[i]].representative);
    const std::size_t width = phases.front().representative.width();

    std::vector<std::size_t> chosen;
    auto emit = [&] {
        std::vector<std::size_t> u;
        for (std::size_t k : chosen) u.insert(u.end(), peaks[k].begin(), peaks[k].end());
        std::sort(u.begin(), u.end());
        u.erase(std::unique(u.begin(), u.end()), u.end());
        auto merged = coalesce_peaks(u, th);
        if (merged.size() != pc) return;
        PhaseSet ids;
        for (std::size_t k : chosen) ids.push_back(phases[order[k]].id);
        out.push_back({std::move(ids), BinaryPeakPattern::from_indices(width, merged)});
    };
    // Lexicographic over sorted index tuples == sorted by constituent ids.
    auto recurse = [&](auto&& self, std::size_t start) -> void {
        if (chosen.size() >= 2) emit();
        if (chosen.size() == max_constituents) return;
        for (std::size_t k = start; k < n; ++k) {
            chosen.push_back(k);
            self(self, k + 1);
            chosen.pop_back();
        }
    };
    recurse(recurse, 0);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return a.constituents < b.constituents;
    });
    return out;
}

/// Positional average: the k-th peak of the result is the rounded (half up)
/// mean of every member's k-th peak.
inline BinaryPeakPattern average_representation(std::span<const BinaryPeakPattern> members,
                                                std::size_t pc) {
    if (members.empty()) throw ContractError("average_representation: no members");
    const std::size_t width = members.front().width();
    std::vector<std::size_t> sums(pc, 0);
    for (const auto& m : members) {
        if (m.width() != width) throw ContractError("average_representation: width mismatch");
        const auto loc = peak_locations(m);
        if (loc.size() != pc)
            throw ContractError("average_representation: member has " + std::to_string(loc.size()) +
                                " peaks, expected " + std::to_string(pc));
        for (std::size_t k = 0; k < pc; ++k) sums[k] += loc[k];
    }
    std::vector<std::size_t> avg(pc);
    for (std::size_t k = 0; k < pc; ++k) avg[k] = detail::round_half_up(sums[k], members.size());
    return BinaryPeakPattern::from_indices(width, avg);
}

struct PhaseState {
    PhaseCatalog catalog;
    MembershipTable memberships;
    friend bool operator==(const PhaseState&, const PhaseState&) = default;
};

/// Processes one same-peak-count group against the current catalog.
inline PhaseState phase_computation(std::span<const SamplePattern> group, std::size_t pc,
                                    const PhaseMapParams& params, PhaseState state) {
    for (const auto& s : group) {
        if (s.pattern.peak_count() != pc)
            throw ContractError("sample '" + s.id + "' has " +
                                std::to_string(s.pattern.peak_count()) + " peaks in the pc=" +
                                std::to_string(pc) + " group");
    }
    auto& catalog = state.catalog;
    auto& mm = state.memberships;
    const auto mixed = compute_mixed_phases(catalog, pc, params.th, params.max_mixed_constituents);

    for (const auto& s : group) {
        bool matched = false;
        for (auto& p : catalog.phases()) {
            if (fuzzy_equals(s.pattern, p.representative, params.th)) {
                mm.assign(s.id, {p.id});
                p.members.push_back(s.id);
                matched = true;
                break;
            }
        }
        if (matched) continue;
        for (const auto& m : mixed) {
            if (fuzzy_equals(s.pattern, m.merged_pattern, params.th)) {
                mm.assign(s.id, m.constituents);
                matched = true;
                break;
            }
        }
        if (!matched) {
            const PhaseId id = catalog.add(s.pattern, {s.id});
            mm.assign(s.id, {id});
        }
    }

    // Refresh representatives of the phases at this peak count from their
    // pure members in this group.
    for (auto& p : catalog.phases()) {
        if (p.representative.peak_count() != pc) continue;
        std::vector<BinaryPeakPattern> members;
        for (const auto& s : group) {
            const auto& set = mm.at(s.id);
            if (set.size() == 1 && set.front() == p.id) members.push_back(s.pattern);
        }
        if (!members.empty()) p.representative = average_representation(members, pc);
    }
    return state;
}

struct OutlierRemoval {
    PhaseState state;
    std::vector<PhaseId> removed;
};

/// Drops pure phases with fewer than `ot` pure members. Their pure members
/// become unassigned; mixed memberships lose the removed constituents and
/// collapse to a pure membership (one survivor) or to unassigned (none).
inline OutlierRemoval remove_outlier_phases(PhaseState state, std::size_t ot) {
    std::map<PhaseId, std::size_t> counts;
    for (const auto& p : state.catalog.phases()) counts[p.id] = 0;
    for (const auto& [id, set] : state.memberships.entries())
        if (set.size() == 1 && counts.contains(set.front())) ++counts[set.front()];

    std::vector<PhaseId> removed;
    for (const auto& p : state.catalog.phases())
        if (counts[p.id] < ot) removed.push_back(p.id);
    if (removed.empty()) return {std::move(state), {}};

    auto is_removed = [&](PhaseId id) {
        return std::find(removed.begin(), removed.end(), id) != removed.end();
    };
    auto& catalog = state.catalog;
    state.memberships.transform([&](const std::string& sample, const PhaseSet& set) -> PhaseSet {
        if (set.size() < 2) return set.size() == 1 && is_removed(set.front()) ? PhaseSet{} : set;
        PhaseSet kept;
        for (PhaseId id : set)
            if (!is_removed(id)) kept.push_back(id);
        if (kept.size() == 1) catalog.find(kept.front())->members.push_back(sample);
        return kept.size() >= 1 ? kept : PhaseSet{};
    });
    catalog.erase_if_id(removed);
    return {std::move(state), std::move(removed)};
}

/// Full incremental mapping over (sample id, pattern) pairs.
inline PhaseMapResult run_incremental_phase_mapping(std::span<const SamplePattern> patterns,
                                                    const PhaseMapParams& params) {
    if (params.ot < 1) throw ParameterError("ot must be at least 1");
    PhaseMapResult result;
    result.params.mapping = params;
    result.patterns.assign(patterns.begin(), patterns.end());
    if (patterns.empty()) return result;

    const std::size_t width = patterns.front().pattern.width();
    for (const auto& s : patterns) {
        if (s.pattern.width() != width)
            throw ContractError("pattern '" + s.id + "' has width " +
                                std::to_string(s.pattern.width()) + ", expected " +
                                std::to_string(width));
    }
    if (params.th >= width) throw ParameterError("th must be smaller than the window count");
    result.params.window_count = width;

    PhaseState state;
    std::map<std::size_t, std::vector<SamplePattern>> groups;
    for (const auto& s : patterns) {
        if (state.memberships.contains(s.id))
            throw ValidationError("duplicate sample id '" + s.id + "'");
        state.memberships.assign(s.id, {});  // zero-peak samples stay unassigned
        const std::size_t pc = s.pattern.peak_count();
        if (pc > 0) groups[pc].push_back(s);
    }
    for (const auto& [pc, group] : groups) {
        state = phase_computation(group, pc, params, std::move(state));
        state = remove_outlier_phases(std::move(state), params.ot).state;
    }
    result.catalog = std::move(state.catalog);
    result.memberships = std::move(state.memberships);
    return result;
}

}  // namespace xrdphase
