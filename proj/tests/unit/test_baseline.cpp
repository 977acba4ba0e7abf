#include "fixtures.hpp"
#include "oracles.hpp"

#include <xrdphase/baseline.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace xrdphase;

TEST(VectorDistance, LiteralFormulas) {
    const std::vector<double> a{1, 2, 3}, b{4, 0, 3};
    EXPECT_DOUBLE_EQ(vector_distance(a, b, VectorMetric::euclidean), std::sqrt(9.0 + 4.0));
    const double cos = (4.0 + 0 + 9) / (std::sqrt(14.0) * std::sqrt(25.0));
    EXPECT_NEAR(vector_distance(a, b, VectorMetric::cosine), 1.0 - cos, 1e-15);
    const std::vector<double> var{2, 4, 1};
    EXPECT_DOUBLE_EQ(vector_distance(a, b, VectorMetric::seuclidean, var), std::sqrt(9.0 / 2 + 4.0 / 4));
    // Centred: a -> {-1,0,1}, b -> {5/3,-7/3,2/3}.
    const double num = -5.0 / 3 + 0 + 2.0 / 3;
    const double den = std::sqrt(2.0) * std::sqrt((25.0 + 49 + 4) / 9);
    EXPECT_NEAR(vector_distance(a, b, VectorMetric::correlation), 1.0 - num / den, 1e-15);
}

TEST(VectorDistance, CosineOfOrthogonalIsOneAndOfParallelIsZero) {
    const std::vector<double> x{1, 0, 0}, y{0, 5, 0}, z{3, 0, 0};
    EXPECT_DOUBLE_EQ(vector_distance(x, y, VectorMetric::cosine), 1.0);
    EXPECT_DOUBLE_EQ(vector_distance(x, z, VectorMetric::cosine), 0.0);
    const std::vector<double> v{0.1, 0.7, 0.3};
    EXPECT_GE(vector_distance(v, v, VectorMetric::cosine), 0.0);
}

TEST(VectorDistance, ColumnVariancesUseSampleVarianceAndReplaceZero) {
    const std::vector<std::vector<double>> rows{{1, 5}, {3, 5}, {5, 5}};
    EXPECT_EQ(column_variances(rows), (std::vector<double>{4.0, 1.0}));
}

TEST(VectorDistance, MetricNamesAndErrors) {
    for (VectorMetric m : {VectorMetric::euclidean, VectorMetric::cosine, VectorMetric::seuclidean,
                           VectorMetric::correlation, VectorMetric::emd})
        EXPECT_EQ(parse_vector_metric(to_string(m)), m);
    EXPECT_ANY_THROW(parse_vector_metric("dtw"));
    const std::vector<double> a{1, 2}, b{1, 2, 3};
    EXPECT_THROW(vector_distance(a, b, VectorMetric::euclidean), ParameterError);
    EXPECT_THROW(vector_distance(a, a, VectorMetric::seuclidean), ParameterError);
}

TEST(Emd, KnownValues) {
    EXPECT_DOUBLE_EQ(emd_1d(std::vector<double>{1, 0, 0}, std::vector<double>{0, 0, 1}), 2.0);
    EXPECT_DOUBLE_EQ(emd_1d(std::vector<double>{1, 1, 0}, std::vector<double>{0, 1, 1}), 1.0);
    // Unequal totals are normalised to unit mass first.
    EXPECT_DOUBLE_EQ(emd_1d(std::vector<double>{2, 0}, std::vector<double>{0, 5}), 1.0);
    EXPECT_DOUBLE_EQ(emd_1d(std::vector<double>{3}, std::vector<double>{1}), 0.0);
    EXPECT_THROW(emd_1d(std::vector<double>{0, 0}, std::vector<double>{1, 0}), ParameterError);
    EXPECT_THROW(emd_1d(std::vector<double>{-1, 2}, std::vector<double>{1, 0}), ParameterError);
}

TEST(Emd, MatchesMemoisedPlanEnumeration) {
    std::mt19937_64 rng(31);
    for (int t = 0; t < 300; ++t) {
        const std::size_t bins = 2 + static_cast<std::size_t>(t % 4);
        std::vector<std::vector<int>> hists;
        oracle::compositions(6, bins, hists);
        std::uniform_int_distribution<std::size_t> pick(0, hists.size() - 1);
        const auto& a = hists[pick(rng)];
        const auto& b = hists[pick(rng)];
        oracle::TransportEnumerator e(a, b);
        std::vector<double> da(a.begin(), a.end()), db(b.begin(), b.end());
        EXPECT_NEAR(emd_1d(da, db), static_cast<double>(e.min_cost()) / 6.0, 1e-12);
    }
}

TEST(Emd, BothOraclesAgree) {
    std::vector<std::vector<int>> hists;
    oracle::compositions(5, 4, hists);
    for (const auto& a : hists) {
        const auto costs = oracle::transport_costs_from(a);
        for (const auto& b : hists)
            EXPECT_EQ(costs.at(oracle::histogram_key(b, 5)), oracle::TransportEnumerator(a, b).min_cost());
    }
}

TEST(DistanceMatrix, ValidationRejectsBadEntries) {
    EXPECT_THROW(DistanceMatrix::from_rows({{0, 1}, {2, 0}}), ParameterError);
    EXPECT_THROW(DistanceMatrix::from_rows({{1, 1}, {1, 0}}), ParameterError);
    EXPECT_THROW(DistanceMatrix::from_rows({{0, -1}, {-1, 0}}), ParameterError);
    EXPECT_THROW(DistanceMatrix::from_rows({{0, 1, 2}, {1, 0}}), ParameterError);
    EXPECT_NO_THROW(DistanceMatrix::from_rows({{0, 1}, {1, 0}}));
}

TEST(Agglomerative, HandExample) {
    // Points on a line: 0, 1, 5, 6, 20.
    const std::vector<double> x{0, 1, 5, 6, 20};
    std::vector<std::vector<double>> d(5, std::vector<double>(5));
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) d[i][j] = std::abs(x[i] - x[j]);
    const auto m = DistanceMatrix::from_rows(d);
    EXPECT_EQ(agglomerative_cluster(m, 0.0), (std::vector<std::size_t>{0, 1, 2, 3, 4}));
    EXPECT_EQ(agglomerative_cluster(m, 1.0), (std::vector<std::size_t>{0, 0, 1, 1, 2}));
    // Average distance between {0,1} and {5,6} is 5.
    EXPECT_EQ(agglomerative_cluster(m, 4.99), (std::vector<std::size_t>{0, 0, 1, 1, 2}));
    EXPECT_EQ(agglomerative_cluster(m, 5.0), (std::vector<std::size_t>{0, 0, 0, 0, 1}));
    EXPECT_EQ(agglomerative_cluster(m, 1e9), (std::vector<std::size_t>{0, 0, 0, 0, 0}));
}

TEST(Agglomerative, MatchesDefinitionOracle) {
    std::mt19937_64 rng(32);
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = 1 + static_cast<std::size_t>(t % 12);
        std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                d[i][j] = d[j][i] = static_cast<double>(std::uniform_int_distribution<int>(1, 9)(rng));
        for (double cutoff : {0.5, 2.0, 4.0, 7.5}) {
            EXPECT_EQ(agglomerative_cluster(DistanceMatrix::from_rows(d), cutoff), oracle::average_linkage(d, cutoff))
                << "trial " << t << " cutoff " << cutoff;
        }
    }
}

TEST(Agglomerative, ClusterCountFallsAsCutoffRises) {
    std::mt19937_64 rng(33);
    std::vector<std::vector<double>> pts(40, std::vector<double>(3));
    for (auto& p : pts)
        for (double& v : p) v = std::uniform_real_distribution<double>(0, 10)(rng);
    const Dendrogram tree(pairwise_distances(pts, VectorMetric::euclidean));
    std::size_t prev = 41;
    for (double c : {0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0}) {
        const std::size_t k = cluster_count(tree.cut(c));
        EXPECT_LE(k, prev);
        prev = k;
    }
    EXPECT_EQ(prev, 1u);
}

TEST(KMeans, SeparatedBlobsAreRecovered) {
    std::vector<std::vector<double>> pts;
    for (int i = 0; i < 10; ++i) pts.push_back({0.0 + 0.01 * i, 0.0});
    for (int i = 0; i < 10; ++i) pts.push_back({10.0 + 0.01 * i, 10.0});
    for (int i = 0; i < 10; ++i) pts.push_back({-10.0, 10.0 + 0.01 * i});
    const auto r = kmeans(pts, 3, 5);
    const auto labels = canonical_labels(r.labels);
    for (int i = 0; i < 30; ++i) EXPECT_EQ(labels[static_cast<std::size_t>(i)], static_cast<std::size_t>(i / 10));
}

TEST(KMeans, ObjectiveNeverIncreasesAndRunIsSeeded) {
    std::mt19937_64 rng(34);
    std::vector<std::vector<double>> pts(200, std::vector<double>(4));
    for (auto& p : pts)
        for (double& v : p) v = std::normal_distribution<double>(0, 1)(rng);
    const auto r = kmeans(pts, 6, 9);
    for (std::size_t i = 1; i < r.objective.size(); ++i) EXPECT_LE(r.objective[i], r.objective[i - 1] + 1e-9);
    EXPECT_EQ(kmeans(pts, 6, 9).labels, r.labels);
    // The reported objective is the within-cluster sum of squares.
    double sse = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            const double d = pts[i][j] - r.centroids[r.labels[i]][j];
            sse += d * d;
        }
    EXPECT_NEAR(r.objective.back(), sse, 1e-9 * (1.0 + sse));
}

TEST(KMeans, DuplicatePointsAndBadK) {
    const std::vector<std::vector<double>> pts(5, std::vector<double>{1.0, 1.0});
    const auto r = kmeans(pts, 3, 1);
    EXPECT_EQ(r.labels.size(), 5u);
    EXPECT_THROW(kmeans(pts, 0, 1), ParameterError);
    EXPECT_THROW(kmeans(pts, 6, 1), ParameterError);
}

TEST(Scores, PurityAndAriExamples) {
    const std::vector<LabelSet> truth{{0}, {0}, {1}, {1}};
    EXPECT_DOUBLE_EQ(purity(truth, truth), 1.0);
    EXPECT_DOUBLE_EQ(adjusted_rand_index(truth, truth), 1.0);
    const std::vector<LabelSet> one{{0}, {0}, {0}, {0}};
    EXPECT_DOUBLE_EQ(purity(one, truth), 0.5);
    EXPECT_DOUBLE_EQ(adjusted_rand_index(one, truth), 0.0);
    // Label names do not matter.
    const std::vector<LabelSet> renamed{{7}, {7}, {3}, {3}};
    EXPECT_DOUBLE_EQ(adjusted_rand_index(renamed, truth), 1.0);
}

TEST(Scores, AriMatchesPairCountingDefinition) {
    std::mt19937_64 rng(35);
    for (int t = 0; t < 50; ++t) {
        const std::size_t n = 30;
        std::vector<LabelSet> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = {std::uniform_int_distribution<std::size_t>(0, 3)(rng)};
            b[i] = {std::uniform_int_distribution<std::size_t>(0, 2)(rng)};
        }
        // Rand-style pair counts, then the Hubert-Arabie adjustment.
        double both = 0, only_a = 0, only_b = 0, pairs = 0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                const bool sa = a[i] == a[j], sb = b[i] == b[j];
                both += sa && sb;
                only_a += sa;
                only_b += sb;
                ++pairs;
            }
        const double expected = only_a * only_b / pairs;
        const double want = (both - expected) / (0.5 * (only_a + only_b) - expected);
        EXPECT_NEAR(adjusted_rand_index(a, b), want, 1e-12);
    }
}

TEST(Scores, DualMembershipRecallAndMixedSeparate) {
    const std::vector<LabelSet> truth{{0}, {0}, {1}, {1}, {0, 1}, {0, 1}};
    const std::vector<LabelSet> dual{{4}, {4}, {9}, {9}, {4, 9}, {9, 4}};
    EXPECT_DOUBLE_EQ(dual_membership_recall(dual, truth), 1.0);
    const std::vector<LabelSet> hard{{4}, {4}, {9}, {9}, {4}, {2}};
    EXPECT_DOUBLE_EQ(dual_membership_recall(hard, truth), 0.0);
    EXPECT_DOUBLE_EQ(mixed_separate_fraction(hard, truth), 0.5);
}

TEST(Sweep, RowsCoverEveryCutoffAndK) {
    const auto s = generate(fixture::wafer_config());
    std::vector<std::vector<double>> v;
    for (std::size_t i = 0; i < 120; ++i) v.push_back(s.dataset.samples[i].intensities);
    std::vector<LabelSet> truth(s.truth.begin(), s.truth.begin() + 120);
    SweepSpec spec;
    spec.hierarchical.push_back({VectorMetric::cosine, geometric_grid(1000.0, 0.5, 50)});
    spec.kmeans_k = {2, 3};
    spec.seed = 4;
    const auto report = sweep(v, truth, spec);
    ASSERT_EQ(report.rows.size(), 52u);
    EXPECT_EQ(report.rows.front().clusters, 1u);  // cutoff 1000 merges everything
    EXPECT_EQ(report.rows[50].method, "kmeans");
    EXPECT_EQ(report.rows[51].clusters, 3u);
    for (const auto& r : report.rows) EXPECT_DOUBLE_EQ(r.dual_recall, 0.0);
    ASSERT_FALSE(report.notes.empty());
    EXPECT_THROW(sweep(v, std::vector<LabelSet>(3), spec), ParameterError);
}

TEST(Sweep, GeometricGridHalves) {
    const auto g = geometric_grid(1000.0, 0.5, 50);
    ASSERT_EQ(g.size(), 50u);
    EXPECT_DOUBLE_EQ(g[0], 1000.0);
    EXPECT_DOUBLE_EQ(g[3], 125.0);
    EXPECT_DOUBLE_EQ(g[49], 1000.0 * std::pow(0.5, 49));
}
