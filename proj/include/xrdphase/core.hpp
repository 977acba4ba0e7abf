#pragma once
// Shared domain types for the phase-mapping toolkit.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace xrdphase {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Invalid argument to an operation (bad window, length mismatch, ...).
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Input data violates a dataset-level invariant (mixed grids, bad composition).
class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller broke an operation precondition (wrong peak count in a group).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// User-supplied request is invalid (unknown phase id, too few ids).
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// File could not be read, parsed or written.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Q axis and samples
// ---------------------------------------------------------------------------

/// Strictly increasing momentum-transfer axis (inverse angstrom).
class QGrid {
public:
    QGrid() = default;
    explicit QGrid(std::vector<double> values) : values_(std::move(values)) {
        if (values_.size() < 2) throw DatasetError("Q grid needs at least 2 values");
        for (std::size_t i = 1; i < values_.size(); ++i) {
            if (!(values_[i] > values_[i - 1]))
                throw DatasetError("Q grid is not strictly increasing at column " +
                                   std::to_string(i));
        }
    }

    static QGrid linspace(double lo, double hi, std::size_t n) {
        if (n < 2) throw ParameterError("linspace needs n >= 2");
        std::vector<double> v(n);
        for (std::size_t i = 0; i < n; ++i)
            v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
        return QGrid(std::move(v));
    }

    [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
    [[nodiscard]] bool empty() const noexcept { return values_.empty(); }
    [[nodiscard]] const std::vector<double>& values() const noexcept { return values_; }
    [[nodiscard]] double operator[](std::size_t i) const { return values_[i]; }

    friend bool operator==(const QGrid&, const QGrid&) = default;

private:
    std::vector<double> values_;
};

/// Atomic fractions of the three elements; entries >= 0, sum 1.
struct Composition {
    std::array<double, 3> fractions{1.0 / 3, 1.0 / 3, 1.0 / 3};

    [[nodiscard]] double sum() const noexcept {
        return fractions[0] + fractions[1] + fractions[2];
    }
    [[nodiscard]] bool valid(double tol = 1e-6) const noexcept {
        return std::all_of(fractions.begin(), fractions.end(),
                           [](double f) { return f >= 0.0 && std::isfinite(f); }) &&
               std::abs(sum() - 1.0) <= tol;
    }
    friend bool operator==(const Composition&, const Composition&) = default;
};

struct WaferPosition {
    double x_mm = 0.0;
    double y_mm = 0.0;
    friend bool operator==(const WaferPosition&, const WaferPosition&) = default;
};

/// One measured 1D diffraction pattern.
struct XrdSample {
    std::string id;
    std::vector<double> intensities;
    Composition composition;
    WaferPosition wafer_pos;

    friend bool operator==(const XrdSample&, const XrdSample&) = default;
};

/// Grid plus samples; every sample's intensities have grid.size() entries.
struct Dataset {
    QGrid grid;
    std::vector<XrdSample> samples;
};

/// Zero-padded row id used when an input file carries no ids ("s0001").
inline std::string default_sample_id(std::size_t row) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%04zu", row + 1);
    return buf;
}

// ---------------------------------------------------------------------------
// Binary peak representation
// ---------------------------------------------------------------------------

/// Fixed-width bit vector; bit w is set when a peak was detected in window w.
class BinaryPeakPattern {
public:
    BinaryPeakPattern() = default;
    explicit BinaryPeakPattern(std::size_t width) : bits_(width, 0) {
        if (width == 0) throw ParameterError("pattern width must be positive");
    }

    /// Pattern of the given width with exactly the listed windows set.
    static BinaryPeakPattern from_indices(std::size_t width, std::span<const std::size_t> peaks) {
        BinaryPeakPattern p(width);
        for (std::size_t i : peaks) {
            if (i >= width)
                throw ParameterError("peak index " + std::to_string(i) + " outside width " +
                                     std::to_string(width));
            p.bits_[i] = 1;
        }
        return p;
    }
    static BinaryPeakPattern from_indices(std::size_t width, std::initializer_list<std::size_t> peaks) {
        return from_indices(width, std::span<const std::size_t>(peaks.begin(), peaks.size()));
    }

    /// Parses a '0'/'1' string; the string length is the width.
    static BinaryPeakPattern from_bitstring(std::string_view s) {
        BinaryPeakPattern p(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i] == '1') p.bits_[i] = 1;
            else if (s[i] != '0') throw ParameterError("bitstring may only contain 0 and 1");
        }
        return p;
    }

    [[nodiscard]] std::size_t width() const noexcept { return bits_.size(); }
    [[nodiscard]] bool test(std::size_t i) const { return bits_.at(i) != 0; }
    void set(std::size_t i, bool on = true) { bits_.at(i) = on ? 1 : 0; }

    [[nodiscard]] std::size_t peak_count() const noexcept {
        return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
    }

    [[nodiscard]] std::string to_bitstring() const {
        std::string s(bits_.size(), '0');
        for (std::size_t i = 0; i < bits_.size(); ++i)
            if (bits_[i]) s[i] = '1';
        return s;
    }

    friend bool operator==(const BinaryPeakPattern&, const BinaryPeakPattern&) = default;

private:
    std::vector<std::uint8_t> bits_;
};

/// Window indices of set bits, strictly increasing.
inline std::vector<std::size_t> peak_locations(const BinaryPeakPattern& p) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < p.width(); ++i)
        if (p.test(i)) out.push_back(i);
    return out;
}

// ---------------------------------------------------------------------------
// Phases
// ---------------------------------------------------------------------------

/// Identifier of a pure phase. Mixed phases are sorted sets of these.
struct PhaseId {
    std::uint32_t index = 0;

    [[nodiscard]] std::string str() const { return "P" + std::to_string(index); }

    static PhaseId parse(std::string_view s) {
        if (s.size() < 2 || s[0] != 'P')
            throw ValidationError("malformed phase id '" + std::string(s) + "'");
        std::uint32_t v = 0;
        for (char c : s.substr(1)) {
            if (c < '0' || c > '9')
                throw ValidationError("malformed phase id '" + std::string(s) + "'");
            v = v * 10 + static_cast<std::uint32_t>(c - '0');
        }
        return PhaseId{v};
    }

    friend auto operator<=>(const PhaseId&, const PhaseId&) = default;
};

using PhaseSet = std::vector<PhaseId>;  // sorted, deduplicated

inline PhaseSet normalized(PhaseSet s) {
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    return s;
}

inline std::string join_phase_set(const PhaseSet& s, char sep = ';') {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += sep;
        out += s[i].str();
    }
    return out;
}

struct PurePhase {
    PhaseId id;
    BinaryPeakPattern representative;
    std::vector<std::string> members;  // pure members, in assignment order

    friend bool operator==(const PurePhase&, const PurePhase&) = default;
};

/// Ordered collection of pure phases. Ids are never reused.
class PhaseCatalog {
public:
    [[nodiscard]] const std::vector<PurePhase>& phases() const noexcept { return phases_; }
    [[nodiscard]] std::vector<PurePhase>& phases() noexcept { return phases_; }
    [[nodiscard]] std::size_t size() const noexcept { return phases_.size(); }
    [[nodiscard]] bool empty() const noexcept { return phases_.empty(); }
    [[nodiscard]] std::uint32_t next_index() const noexcept { return next_index_; }
    void set_next_index(std::uint32_t n) { next_index_ = n; }

    [[nodiscard]] const PurePhase* find(PhaseId id) const {
        auto it = std::find_if(phases_.begin(), phases_.end(),
                               [&](const PurePhase& p) { return p.id == id; });
        return it == phases_.end() ? nullptr : &*it;
    }
    [[nodiscard]] PurePhase* find(PhaseId id) {
        auto it = std::find_if(phases_.begin(), phases_.end(),
                               [&](const PurePhase& p) { return p.id == id; });
        return it == phases_.end() ? nullptr : &*it;
    }
    [[nodiscard]] bool contains(PhaseId id) const { return find(id) != nullptr; }

    /// Appends a phase under a fresh id and returns that id.
    PhaseId add(BinaryPeakPattern representative, std::vector<std::string> members = {}) {
        PhaseId id{next_index_++};
        phases_.push_back(PurePhase{id, std::move(representative), std::move(members)});
        return id;
    }

    /// Inserts a phase with a caller-chosen id (used when importing results).
    void insert(PurePhase phase) {
        if (contains(phase.id)) throw ValidationError("duplicate phase id " + phase.id.str());
        next_index_ = std::max(next_index_, phase.id.index + 1);
        phases_.push_back(std::move(phase));
    }

    void erase_if_id(const std::vector<PhaseId>& ids) {
        std::erase_if(phases_, [&](const PurePhase& p) {
            return std::find(ids.begin(), ids.end(), p.id) != ids.end();
        });
    }

    friend bool operator==(const PhaseCatalog&, const PhaseCatalog&) = default;

private:
    std::vector<PurePhase> phases_;
    std::uint32_t next_index_ = 0;
};

/// Per-sample phase sets in insertion order. Empty set = outlier/unassigned.
class MembershipTable {
public:
    using Entry = std::pair<std::string, PhaseSet>;

    void assign(const std::string& sample_id, PhaseSet phases) {
        phases = normalized(std::move(phases));
        if (auto it = index_.find(sample_id); it != index_.end()) {
            entries_[it->second].second = std::move(phases);
        } else {
            index_.emplace(sample_id, entries_.size());
            entries_.emplace_back(sample_id, std::move(phases));
        }
    }

    [[nodiscard]] bool contains(const std::string& sample_id) const {
        return index_.contains(sample_id);
    }
    [[nodiscard]] const PhaseSet& at(const std::string& sample_id) const {
        auto it = index_.find(sample_id);
        if (it == index_.end()) throw ValidationError("unknown sample id '" + sample_id + "'");
        return entries_[it->second].second;
    }
    [[nodiscard]] const std::vector<Entry>& entries() const noexcept { return entries_; }
    [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }

    template <class F>
    void transform(F&& f) {
        for (auto& [id, set] : entries_) set = normalized(f(id, set));
    }

    friend bool operator==(const MembershipTable& a, const MembershipTable& b) {
        return a.entries_ == b.entries_;
    }

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Parameters and results
// ---------------------------------------------------------------------------

/// Settings for converting an intensity series into a BinaryPeakPattern.
struct BinarizationParams {
    int smooth_degree = 5;
    int smooth_window = 21;  // odd, in grid points
    int baseline_degree = 1;
    double intensity_threshold = 0.0;  // counts
    std::size_t window_count = 200;

    friend bool operator==(const BinarizationParams&, const BinarizationParams&) = default;
};

/// Settings for the incremental phase computation.
struct PhaseMapParams {
    std::size_t th = 2;   // adjacency threshold, windows
    std::size_t ot = 2;   // minimum pure-member count
    std::size_t max_mixed_constituents = 3;

    friend bool operator==(const PhaseMapParams&, const PhaseMapParams&) = default;
};

/// Everything needed to replay a result from its input patterns.
struct ResultParams {
    PhaseMapParams mapping;
    std::size_t window_count = 0;
    std::optional<BinarizationParams> binarization;  // absent when patterns came from elsewhere
    std::string threshold_source = "explicit";       // "explicit" | "auto"
    std::uint64_t seed = 0;
    std::string outlier_filtering = "per_group";

    friend bool operator==(const ResultParams&, const ResultParams&) = default;
};

/// One applied merge. Entries are replayed in order on the initial result.
struct LineageEntry {
    std::string op;                   // "manual_merge" | "hierarchical_merge"
    std::vector<PhaseId> ids;         // manual: the merged set
    std::string metric;               // hierarchical only
    double cutoff = 0.0;              // hierarchical only
    std::string actor;
    std::string timestamp;
    std::vector<std::string> warnings;

    friend bool operator==(const LineageEntry&, const LineageEntry&) = default;
};

struct SamplePattern {
    std::string id;
    BinaryPeakPattern pattern;
    friend bool operator==(const SamplePattern&, const SamplePattern&) = default;
};

/// Unit of export, plotting and interactive merging.
struct PhaseMapResult {
    PhaseCatalog catalog;
    MembershipTable memberships;
    ResultParams params;
    std::vector<LineageEntry> lineage;
    std::vector<SamplePattern> patterns;  // the mapping input, in input order

    [[nodiscard]] const BinaryPeakPattern* pattern_of(const std::string& sample_id) const {
        for (const auto& sp : patterns)
            if (sp.id == sample_id) return &sp.pattern;
        return nullptr;
    }

    friend bool operator==(const PhaseMapResult&, const PhaseMapResult&) = default;
};

}  // namespace xrdphase
