#pragma once
// Hard-clustering baselines applied directly to intensity vectors:
// pairwise distances (including 1D EMD), average-linkage agglomeration,
// seeded k-means, and scoring against planted ground truth.

#include <xrdphase/core.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace xrdphase {

enum class VectorMetric { euclidean, cosine, seuclidean, correlation, emd };

inline std::string to_string(VectorMetric m) {
    switch (m) {
        case VectorMetric::euclidean: return "euclidean";
        case VectorMetric::cosine: return "cosine";
        case VectorMetric::seuclidean: return "seuclidean";
        case VectorMetric::correlation: return "correlation";
        case VectorMetric::emd: return "emd";
    }
    return "?";
}

inline VectorMetric parse_vector_metric(std::string_view s) {
    if (s == "euclidean") return VectorMetric::euclidean;
    if (s == "cosine") return VectorMetric::cosine;
    if (s == "seuclidean") return VectorMetric::seuclidean;
    if (s == "correlation") return VectorMetric::correlation;
    if (s == "emd") return VectorMetric::emd;
    throw ValidationError("unknown metric '" + std::string(s) + "'");
}

/// Per-column sample variance (n - 1 denominator); zero variances become 1.
inline std::vector<double> column_variances(std::span<const std::vector<double>> rows) {
    if (rows.empty()) return {};
    const std::size_t m = rows.front().size();
    std::vector<double> var(m, 1.0);
    if (rows.size() < 2) return var;
    for (std::size_t c = 0; c < m; ++c) {
        double mean = 0.0;
        for (const auto& r : rows) mean += r[c];
        mean /= static_cast<double>(rows.size());
        double ss = 0.0;
        for (const auto& r : rows) ss += (r[c] - mean) * (r[c] - mean);
        const double v = ss / static_cast<double>(rows.size() - 1);
        var[c] = v > 0.0 ? v : 1.0;
    }
    return var;
}

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double cosine_distance(std::span<const double> a, std::span<const double> b) {
    const double na = std::sqrt(dot(a, a)), nb = std::sqrt(dot(b, b));
    if (na == 0.0 || nb == 0.0) return 1.0;  // zero vector: maximal dissimilarity
    // Rounding can push identical directions slightly below zero.
    return std::clamp(1.0 - dot(a, b) / (na * nb), 0.0, 2.0);
}

}  // namespace detail

/// 1D earth mover's distance between two histograms on a unit-spaced grid.
/// Both inputs are normalized to unit mass first.
inline double emd_1d(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ParameterError("emd_1d: length mismatch");
    double sa = 0.0, sb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] < 0.0 || b[i] < 0.0) throw ParameterError("emd_1d: negative mass");
        sa += a[i];
        sb += b[i];
    }
    if (!(sa > 0.0) || !(sb > 0.0)) throw ParameterError("emd_1d: zero total mass");
    double ca = 0.0, cb = 0.0, total = 0.0;
    for (std::size_t i = 0; i + 1 < a.size(); ++i) {
        ca += a[i] / sa;
        cb += b[i] / sb;
        total += std::abs(ca - cb);
    }
    return total;
}

/// Distance between two intensity vectors. `variances` is required for
/// seuclidean (see column_variances).
inline double vector_distance(std::span<const double> a, std::span<const double> b,
                              VectorMetric metric, std::span<const double> variances = {}) {
    if (a.size() != b.size()) throw ParameterError("vector_distance: length mismatch");
    switch (metric) {
        case VectorMetric::euclidean: {
            double s = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
            return std::sqrt(s);
        }
        case VectorMetric::seuclidean: {
            if (variances.size() != a.size())
                throw ParameterError("seuclidean needs one variance per column");
            double s = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) {
                const double v = variances[i] > 0.0 ? variances[i] : 1.0;
                s += (a[i] - b[i]) * (a[i] - b[i]) / v;
            }
            return std::sqrt(s);
        }
        case VectorMetric::cosine: return detail::cosine_distance(a, b);
        case VectorMetric::correlation: {
            if (a.empty()) return 1.0;
            const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
            const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(b.size());
            std::vector<double> ca(a.size()), cb(b.size());
            for (std::size_t i = 0; i < a.size(); ++i) {
                ca[i] = a[i] - ma;
                cb[i] = b[i] - mb;
            }
            return detail::cosine_distance(ca, cb);
        }
        case VectorMetric::emd: return emd_1d(a, b);
    }
    return 0.0;
}

/// Dense symmetric distance matrix.
class DistanceMatrix {
public:
    DistanceMatrix() = default;
    explicit DistanceMatrix(std::size_t n) : n_(n), d_(n * n, 0.0) {}

    static DistanceMatrix from_rows(const std::vector<std::vector<double>>& rows) {
        DistanceMatrix m(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != rows.size()) throw ParameterError("distance matrix is not square");
            for (std::size_t j = 0; j < rows.size(); ++j) m(i, j) = rows[i][j];
        }
        m.validate();
        return m;
    }

    [[nodiscard]] std::size_t size() const noexcept { return n_; }
    double& operator()(std::size_t i, std::size_t j) { return d_[i * n_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return d_[i * n_ + j]; }

    void validate() const {
        for (std::size_t i = 0; i < n_; ++i) {
            if ((*this)(i, i) != 0.0) throw ParameterError("distance matrix diagonal must be zero");
            for (std::size_t j = i + 1; j < n_; ++j) {
                const double a = (*this)(i, j), b = (*this)(j, i);
                if (!std::isfinite(a) || a < 0.0)
                    throw ParameterError("distance matrix entries must be finite and >= 0");
                if (std::abs(a - b) > 1e-12 * std::max(1.0, std::abs(a)))
                    throw ParameterError("distance matrix is not symmetric");
            }
        }
    }

private:
    std::size_t n_ = 0;
    std::vector<double> d_;
};

inline DistanceMatrix pairwise_distances(std::span<const std::vector<double>> rows, VectorMetric metric) {
    std::vector<double> var;
    if (metric == VectorMetric::seuclidean) var = column_variances(rows);
    DistanceMatrix m(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = i + 1; j < rows.size(); ++j)
            m(i, j) = m(j, i) = vector_distance(rows[i], rows[j], metric, var);
    return m;
}

/// Relabels so that labels appear as 0, 1, 2, ... in first-occurrence order.
inline std::vector<std::size_t> canonical_labels(std::span<const std::size_t> labels) {
    std::map<std::size_t, std::size_t> remap;
    std::vector<std::size_t> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto [it, inserted] = remap.try_emplace(labels[i], remap.size());
        out[i] = it->second;
    }
    return out;
}

inline std::size_t cluster_count(std::span<const std::size_t> labels) {
    if (labels.empty()) return 0;
    return *std::max_element(labels.begin(), labels.end()) + 1;
}

struct MergeStep {
    std::size_t a;  // surviving slot (lowest original index of the merged cluster)
    std::size_t b;  // absorbed slot
    double height;
};

/// Average-linkage merge sequence. Each cluster is identified by its lowest
/// member index; ties go to the lowest (a, b) pair.
class Dendrogram {
public:
    explicit Dendrogram(const DistanceMatrix& distances) : n_(distances.size()) {
        distances.validate();
        DistanceMatrix d = distances;
        std::vector<std::size_t> size(n_, 1);
        std::vector<bool> active(n_, true);
        for (std::size_t step = 0; step + 1 < n_; ++step) {
            std::size_t ba = 0, bb = 0;
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < n_; ++i) {
                if (!active[i]) continue;
                for (std::size_t j = i + 1; j < n_; ++j) {
                    if (active[j] && d(i, j) < best) {
                        best = d(i, j);
                        ba = i;
                        bb = j;
                    }
                }
            }
            const double na = static_cast<double>(size[ba]), nb = static_cast<double>(size[bb]);
            for (std::size_t k = 0; k < n_; ++k) {
                if (!active[k] || k == ba || k == bb) continue;
                const double v = (na * d(ba, k) + nb * d(bb, k)) / (na + nb);
                d(ba, k) = d(k, ba) = v;
            }
            size[ba] += size[bb];
            active[bb] = false;
            steps_.push_back({ba, bb, best});
        }
    }

    [[nodiscard]] const std::vector<MergeStep>& steps() const noexcept { return steps_; }

    /// Flat clusters from all merges at height <= cutoff.
    [[nodiscard]] std::vector<std::size_t> cut(double cutoff) const {
        std::vector<std::size_t> parent(n_);
        std::iota(parent.begin(), parent.end(), std::size_t{0});
        auto find = [&](std::size_t x) {
            while (parent[x] != x) x = parent[x] = parent[parent[x]];
            return x;
        };
        for (const auto& s : steps_) {
            if (s.height > cutoff) break;
            parent[find(s.b)] = find(s.a);
        }
        std::vector<std::size_t> roots(n_);
        for (std::size_t i = 0; i < n_; ++i) roots[i] = find(i);
        return canonical_labels(roots);
    }

private:
    std::size_t n_;
    std::vector<MergeStep> steps_;
};

/// Average-linkage clusters cut at a distance cutoff.
inline std::vector<std::size_t> agglomerative_cluster(const DistanceMatrix& distances, double cutoff) {
    return Dendrogram(distances).cut(cutoff);
}

struct KMeansResult {
    std::vector<std::size_t> labels;
    std::vector<std::vector<double>> centroids;
    std::vector<double> objective;  // after each assignment step
    int iterations = 0;
};

/// Lloyd iterations from k-means++ seeding. Stops when assignments repeat or
/// after `max_iterations`.
inline KMeansResult kmeans(std::span<const std::vector<double>> points, std::size_t k,
                           std::uint64_t seed, int max_iterations = 300) {
    const std::size_t n = points.size();
    if (k == 0) throw ParameterError("k must be positive");
    if (k > n) throw ParameterError("k exceeds the number of points");
    const std::size_t dim = points.front().size();
    auto sq = [&](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < dim; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
        return s;
    };

    std::mt19937_64 rng(seed);
    KMeansResult r;
    std::vector<bool> taken(n, false);
    std::size_t first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    r.centroids.push_back(points[first]);
    taken[first] = true;
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = sq(points[i], r.centroids[0]);
    while (r.centroids.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) total += taken[i] ? 0.0 : d2[i];
        std::size_t pick = n;
        if (total > 0.0) {
            double u = std::uniform_real_distribution<double>(0.0, total)(rng);
            for (std::size_t i = 0; i < n; ++i) {
                if (taken[i] || d2[i] <= 0.0) continue;
                pick = i;
                if (u < d2[i]) break;
                u -= d2[i];
            }
        } else {
            for (std::size_t i = 0; i < n && pick == n; ++i)
                if (!taken[i]) pick = i;
        }
        taken[pick] = true;
        r.centroids.push_back(points[pick]);
        for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq(points[i], points[pick]));
    }

    r.labels.assign(n, k);
    for (int iter = 0; iter < max_iterations; ++iter) {
        bool changed = false;
        double obj = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double bd = sq(points[i], r.centroids[0]);
            for (std::size_t c = 1; c < k; ++c) {
                const double dc = sq(points[i], r.centroids[c]);
                if (dc < bd) {
                    bd = dc;
                    best = c;
                }
            }
            if (r.labels[i] != best) changed = true;
            r.labels[i] = best;
            obj += bd;
        }
        r.objective.push_back(obj);
        r.iterations = iter + 1;
        if (!changed) break;
        std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            ++counts[r.labels[i]];
            for (std::size_t j = 0; j < dim; ++j) sums[r.labels[i]][j] += points[i][j];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;  // empty cluster keeps its centroid
            for (std::size_t j = 0; j < dim; ++j)
                r.centroids[c][j] = sums[c][j] / static_cast<double>(counts[c]);
        }
    }
    return r;
}

// ---------------------------------------------------------------------------
// Scoring against planted truth
// ---------------------------------------------------------------------------

/// Assignment of one sample: a set of cluster labels (singleton for hard
/// clusterers, possibly larger for the incremental method).
using LabelSet = std::vector<std::size_t>;

inline std::vector<LabelSet> as_label_sets(std::span<const std::size_t> labels) {
    std::vector<LabelSet> out;
    out.reserve(labels.size());
    for (std::size_t l : labels) out.push_back({l});
    return out;
}

namespace detail {

inline std::vector<std::size_t> truth_class_ids(std::span<const LabelSet> truth) {
    std::map<LabelSet, std::size_t> ids;
    std::vector<std::size_t> out;
    for (const auto& t : truth) out.push_back(ids.try_emplace(t, ids.size()).first->second);
    return out;
}

inline std::vector<std::size_t> assignment_class_ids(std::span<const LabelSet> assigned) {
    return truth_class_ids(assigned);
}

}  // namespace detail

/// Fraction of samples whose assignment equals the majority assignment of
/// their truth class.
inline double purity(std::span<const LabelSet> assigned, std::span<const LabelSet> truth) {
    if (assigned.empty()) return 1.0;
    const auto a = detail::assignment_class_ids(assigned);
    const auto t = detail::truth_class_ids(truth);
    std::map<std::size_t, std::map<std::size_t, std::size_t>> table;  // cluster -> truth -> count
    for (std::size_t i = 0; i < a.size(); ++i) ++table[a[i]][t[i]];
    std::size_t hit = 0;
    for (const auto& [c, row] : table) {
        std::size_t best = 0;
        for (const auto& [tc, cnt] : row) best = std::max(best, cnt);
        hit += best;
    }
    return static_cast<double>(hit) / static_cast<double>(a.size());
}

/// Adjusted Rand index between the assignment and truth partitions.
inline double adjusted_rand_index(std::span<const LabelSet> assigned, std::span<const LabelSet> truth) {
    const auto a = detail::assignment_class_ids(assigned);
    const auto t = detail::truth_class_ids(truth);
    const std::size_t n = a.size();
    if (n < 2) return 1.0;
    std::map<std::pair<std::size_t, std::size_t>, double> nij;
    std::map<std::size_t, double> ai, bj;
    for (std::size_t i = 0; i < n; ++i) {
        nij[{a[i], t[i]}] += 1;
        ai[a[i]] += 1;
        bj[t[i]] += 1;
    }
    auto c2 = [](double x) { return x * (x - 1) / 2; };
    double sum_ij = 0, sum_a = 0, sum_b = 0;
    for (const auto& [k, v] : nij) sum_ij += c2(v);
    for (const auto& [k, v] : ai) sum_a += c2(v);
    for (const auto& [k, v] : bj) sum_b += c2(v);
    const double expected = sum_a * sum_b / c2(static_cast<double>(n));
    const double max_index = 0.5 * (sum_a + sum_b);
    if (max_index == expected) return 1.0;
    return (sum_ij - expected) / (max_index - expected);
}

/// Majority label among the samples whose truth is exactly {phase}.
inline std::map<std::size_t, std::size_t> planted_phase_labels(std::span<const LabelSet> assigned,
                                                               std::span<const LabelSet> truth) {
    std::map<std::size_t, std::map<std::size_t, std::size_t>> votes;
    for (std::size_t i = 0; i < truth.size(); ++i)
        if (truth[i].size() == 1)
            for (std::size_t l : assigned[i]) ++votes[truth[i][0]][l];
    std::map<std::size_t, std::size_t> out;
    for (const auto& [phase, row] : votes) {
        std::size_t best_label = 0, best = 0;
        for (const auto& [l, c] : row)
            if (c > best) {
                best = c;
                best_label = l;
            }
        out[phase] = best_label;
    }
    return out;
}

/// Fraction of planted mixed samples whose assignment shares no label with
/// any of their constituents' clusters (mixed treated as its own cluster).
inline double mixed_separate_fraction(std::span<const LabelSet> assigned, std::span<const LabelSet> truth) {
    const auto label_of = planted_phase_labels(assigned, truth);
    std::size_t mixed = 0, separate = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i].size() < 2) continue;
        ++mixed;
        bool shares = false;
        for (std::size_t q : truth[i]) {
            auto it = label_of.find(q);
            if (it == label_of.end()) continue;
            if (std::find(assigned[i].begin(), assigned[i].end(), it->second) != assigned[i].end())
                shares = true;
        }
        if (!shares) ++separate;
    }
    return mixed == 0 ? 0.0 : static_cast<double>(separate) / static_cast<double>(mixed);
}

/// Fraction of planted mixed samples assigned exactly their constituents'
/// clusters (requires set-valued assignments to be non-zero).
inline double dual_membership_recall(std::span<const LabelSet> assigned, std::span<const LabelSet> truth) {
    const auto label_of = planted_phase_labels(assigned, truth);
    std::size_t mixed = 0, exact = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i].size() < 2) continue;
        ++mixed;
        LabelSet expected;
        bool mapped = true;
        for (std::size_t q : truth[i]) {
            auto it = label_of.find(q);
            if (it == label_of.end()) mapped = false;
            else expected.push_back(it->second);
        }
        std::sort(expected.begin(), expected.end());
        expected.erase(std::unique(expected.begin(), expected.end()), expected.end());
        LabelSet got = assigned[i];
        std::sort(got.begin(), got.end());
        if (mapped && expected.size() == truth[i].size() && got == expected) ++exact;
    }
    return mixed == 0 ? 0.0 : static_cast<double>(exact) / static_cast<double>(mixed);
}

// ---------------------------------------------------------------------------
// Parameter sweeps
// ---------------------------------------------------------------------------

/// start, start*factor, start*factor^2, ... (count values).
inline std::vector<double> geometric_grid(double start, double factor, std::size_t count) {
    std::vector<double> out;
    double v = start;
    for (std::size_t i = 0; i < count; ++i, v *= factor) out.push_back(v);
    return out;
}

struct HierarchicalSweep {
    VectorMetric metric = VectorMetric::cosine;
    std::vector<double> cutoffs;
};

struct SweepSpec {
    std::vector<HierarchicalSweep> hierarchical;
    std::vector<std::size_t> kmeans_k;
    std::uint64_t seed = 0;
};

struct SweepRow {
    std::string method;  // "hier" | "kmeans"
    std::string metric;
    double param = 0.0;
    std::size_t clusters = 0;
    double purity = 0.0;
    double ari = 0.0;
    double mixed_separate = 0.0;
    double dual_recall = 0.0;
    std::vector<std::size_t> labels;
};

struct SweepReport {
    std::vector<SweepRow> rows;
    std::vector<std::string> notes;
};

/// Runs each configured clusterer over its parameter grid and scores every
/// setting against `truth` (planted phase sets per sample; may be empty).
inline SweepReport sweep(std::span<const std::vector<double>> vectors, std::span<const LabelSet> truth,
                         const SweepSpec& spec) {
    SweepReport report;
    report.notes.push_back("dtw: not evaluated (quadratic per pair; excluded from sweeps)");
    const bool scored = !truth.empty();
    if (scored && truth.size() != vectors.size())
        throw ParameterError("sweep: truth size differs from sample count");
    auto score = [&](SweepRow& row) {
        row.clusters = cluster_count(row.labels);
        if (!scored) return;
        const auto sets = as_label_sets(row.labels);
        row.purity = purity(sets, truth);
        row.ari = adjusted_rand_index(sets, truth);
        row.mixed_separate = mixed_separate_fraction(sets, truth);
        row.dual_recall = dual_membership_recall(sets, truth);
    };
    for (const auto& h : spec.hierarchical) {
        if (h.cutoffs.empty()) continue;
        const Dendrogram tree(pairwise_distances(vectors, h.metric));
        for (double cutoff : h.cutoffs) {
            SweepRow row;
            row.method = "hier";
            row.metric = to_string(h.metric);
            row.param = cutoff;
            row.labels = tree.cut(cutoff);
            score(row);
            report.rows.push_back(std::move(row));
        }
    }
    for (std::size_t k : spec.kmeans_k) {
        SweepRow row;
        row.method = "kmeans";
        row.metric = "euclidean";
        row.param = static_cast<double>(k);
        row.labels = canonical_labels(kmeans(vectors, k, spec.seed).labels);
        score(row);
        report.rows.push_back(std::move(row));
    }
    return report;
}

}  // namespace xrdphase
