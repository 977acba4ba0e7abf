#pragma once
// Intensity series -> BinaryPeakPattern: sliding polynomial smoothing,
// clipped baseline subtraction and windowed peak detection.

#include <xrdphase/core.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <span>
#include <thread>
#include <vector>

namespace xrdphase {

namespace detail {

// Vandermonde matrix on coordinates t.
inline Eigen::MatrixXd vandermonde(std::span<const double> t, int degree) {
    Eigen::MatrixXd v(static_cast<Eigen::Index>(t.size()), degree + 1);
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
        double p = 1.0;
        for (int c = 0; c <= degree; ++c) {
            v(r, c) = p;
            p *= t[static_cast<std::size_t>(r)];
        }
    }
    return v;
}

// Least-squares polynomial coefficients of y over t (Householder QR).
inline Eigen::VectorXd polyfit(std::span<const double> t, std::span<const double> y, int degree) {
    const Eigen::MatrixXd v = vandermonde(t, degree);
    Eigen::Map<const Eigen::VectorXd> rhs(y.data(), static_cast<Eigen::Index>(y.size()));
    return v.colPivHouseholderQr().solve(rhs);
}

inline double polyval(const Eigen::VectorXd& coef, double t) {
    double acc = 0.0;
    for (Eigen::Index c = coef.size() - 1; c >= 0; --c) acc = acc * t + coef(c);
    return acc;
}

// Row o holds the weights that evaluate, at window position o, the
// least-squares polynomial fitted to the window's samples.
inline Eigen::MatrixXd smoothing_weights(int degree, int window) {
    const int half = window / 2;
    std::vector<double> t(static_cast<std::size_t>(window));
    const double scale = half > 0 ? static_cast<double>(half) : 1.0;
    for (int j = 0; j < window; ++j) t[static_cast<std::size_t>(j)] = (j - half) / scale;
    const Eigen::MatrixXd v = vandermonde(t, degree);
    const Eigen::MatrixXd pinv =
        v.colPivHouseholderQr().solve(Eigen::MatrixXd::Identity(window, window));
    return v * pinv;
}

}  // namespace detail

/// Sliding-window least-squares polynomial smoothing.
///
/// Each output point is the value of a degree-`degree` polynomial fitted over
/// the `window` points centred on it. Near the ends the window is shifted to
/// stay inside the series and the fit is evaluated off-centre.
inline std::vector<double> smooth(std::span<const double> intensities, int degree, int window) {
    const auto n = static_cast<long>(intensities.size());
    if (degree < 0) throw ParameterError("smoothing degree must be non-negative");
    if (window % 2 == 0) throw ParameterError("smoothing window must be odd");
    if (window <= degree) throw ParameterError("smoothing window must exceed the degree");
    if (window > n) throw ParameterError("smoothing window longer than the series");

    const Eigen::MatrixXd w = detail::smoothing_weights(degree, window);
    const long half = window / 2;
    std::vector<double> out(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) {
        const long start = std::clamp(i - half, 0L, n - window);
        const long row = i - start;
        double acc = 0.0;
        for (long j = 0; j < window; ++j)
            acc += w(row, j) * intensities[static_cast<std::size_t>(start + j)];
        out[static_cast<std::size_t>(i)] = acc;
    }
    return out;
}

struct BaselineFit {
    std::vector<double> values;
    int iterations = 0;
    bool degenerate = false;  // clipping emptied the fit set; plain fit used
};

/// Low-degree baseline by iterated clipping: refit on the points lying at or
/// below the previous fit until the retained set is stable (max 10 rounds).
inline BaselineFit fit_baseline(std::span<const double> smoothed, int degree) {
    const std::size_t n = smoothed.size();
    if (degree < 0) throw ParameterError("baseline degree must be non-negative");
    if (static_cast<std::size_t>(degree) >= n)
        throw ParameterError("baseline degree must be below the series length");

    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i)
        t[i] = n > 1 ? 2.0 * static_cast<double>(i) / static_cast<double>(n - 1) - 1.0 : 0.0;

    double scale = 0.0;
    for (double y : smoothed) scale = std::max(scale, std::abs(y));
    const double tol = 1e-9 * (1.0 + scale);

    auto evaluate = [&](const Eigen::VectorXd& coef) {
        std::vector<double> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = detail::polyval(coef, t[i]);
        return v;
    };

    BaselineFit fit;
    std::vector<std::size_t> kept(n);
    for (std::size_t i = 0; i < n; ++i) kept[i] = i;
    fit.values = evaluate(detail::polyfit(t, smoothed, degree));

    constexpr int kMaxIterations = 10;
    std::vector<double> kt, ky;
    for (int iter = 1; iter <= kMaxIterations; ++iter) {
        std::vector<std::size_t> next;
        for (std::size_t i = 0; i < n; ++i)
            if (smoothed[i] <= fit.values[i] + tol) next.push_back(i);
        if (next.size() < static_cast<std::size_t>(degree) + 1) {
            fit.degenerate = true;
            fit.values = evaluate(detail::polyfit(t, smoothed, degree));
            break;
        }
        if (next == kept) break;
        kept = std::move(next);
        kt.clear();
        ky.clear();
        for (std::size_t i : kept) {
            kt.push_back(t[i]);
            ky.push_back(smoothed[i]);
        }
        fit.values = evaluate(detail::polyfit(kt, ky, degree));
        fit.iterations = iter;
    }
    return fit;
}

/// Elementwise max(smoothed - baseline, 0).
inline std::vector<double> subtract_and_clamp(std::span<const double> smoothed,
                                              std::span<const double> baseline) {
    if (smoothed.size() != baseline.size())
        throw ParameterError("subtract_and_clamp: length mismatch");
    std::vector<double> out(smoothed.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::max(smoothed[i] - baseline[i], 0.0);
    return out;
}

/// Half-open [begin, end) grid ranges of `windows` contiguous windows over
/// `n` points; the first n % windows windows hold one extra point.
inline std::vector<std::pair<std::size_t, std::size_t>> window_bounds(std::size_t n,
                                                                      std::size_t windows) {
    if (windows == 0 || windows > n)
        throw ParameterError("window count must be in [1, series length]");
    std::vector<std::pair<std::size_t, std::size_t>> out;
    out.reserve(windows);
    const std::size_t base = n / windows, extra = n % windows;
    std::size_t begin = 0;
    for (std::size_t w = 0; w < windows; ++w) {
        const std::size_t len = base + (w < extra ? 1 : 0);
        out.emplace_back(begin, begin + len);
        begin += len;
    }
    return out;
}

/// Indices where the first difference turns from positive to negative.
/// A flat top is reported at its leftmost index.
inline std::vector<std::size_t> peak_candidates(std::span<const double> x) {
    std::vector<std::size_t> out;
    const std::size_t n = x.size();
    std::size_t i = 1;
    while (i + 1 < n) {
        if (x[i] > x[i - 1]) {
            std::size_t j = i;
            while (j + 1 < n && x[j + 1] == x[i]) ++j;
            if (j + 1 < n && x[j + 1] < x[i]) out.push_back(i);
            i = j + 1;
        } else {
            ++i;
        }
    }
    return out;
}

/// Marks window w when its strongest candidate peak reaches the threshold.
inline BinaryPeakPattern detect_peaks(std::span<const double> processed,
                                      const BinarizationParams& params) {
    const auto bounds = window_bounds(processed.size(), params.window_count);
    BinaryPeakPattern pattern(params.window_count);
    const auto candidates = peak_candidates(processed);
    std::size_t c = 0;
    for (std::size_t w = 0; w < bounds.size(); ++w) {
        double best = -1.0;
        bool any = false;
        for (; c < candidates.size() && candidates[c] < bounds[w].second; ++c) {
            best = any ? std::max(best, processed[candidates[c]]) : processed[candidates[c]];
            any = true;
        }
        if (any && best >= params.intensity_threshold) pattern.set(w);
    }
    return pattern;
}

inline void validate(const BinarizationParams& p, std::size_t grid_length) {
    if (p.smooth_window % 2 == 0) throw ParameterError("smooth_window must be odd");
    if (p.smooth_window <= p.smooth_degree)
        throw ParameterError("smooth_window must exceed smooth_degree");
    if (p.smooth_degree < 0 || p.baseline_degree < 0)
        throw ParameterError("polynomial degrees must be non-negative");
    if (!(p.intensity_threshold >= 0.0))
        throw ParameterError("intensity_threshold must be non-negative");
    if (p.window_count == 0 || p.window_count > grid_length)
        throw ParameterError("window count must be in [1, grid length]");
    if (static_cast<std::size_t>(p.smooth_window) > grid_length)
        throw ParameterError("smooth_window longer than the grid");
}

/// Smoothed, baseline-subtracted, clamped series.
inline std::vector<double> process_intensities(std::span<const double> intensities,
                                               const BinarizationParams& params) {
    auto smoothed = smooth(intensities, params.smooth_degree, params.smooth_window);
    const auto baseline = fit_baseline(smoothed, params.baseline_degree);
    return subtract_and_clamp(smoothed, baseline.values);
}

inline BinaryPeakPattern binarize_sample(const XrdSample& sample, const BinarizationParams& params) {
    validate(params, sample.intensities.size());
    return detect_peaks(process_intensities(sample.intensities, params), params);
}

namespace detail {

template <class F>
void parallel_for(std::size_t n, unsigned threads, F&& body) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) body(i);
        });
    }
}

inline void check_lengths(const QGrid& grid, std::span<const XrdSample> samples) {
    for (const auto& s : samples) {
        if (s.intensities.size() != grid.size())
            throw DatasetError("sample '" + s.id + "' has " + std::to_string(s.intensities.size()) +
                               " intensities, grid has " + std::to_string(grid.size()));
    }
}

}  // namespace detail

/// Order-preserving batch binarization. `threads` = 0 uses all cores.
inline std::vector<BinaryPeakPattern> binarize_dataset(const QGrid& grid,
                                                       std::span<const XrdSample> samples,
                                                       const BinarizationParams& params,
                                                       unsigned threads = 0) {
    detail::check_lengths(grid, samples);
    std::vector<BinaryPeakPattern> out(samples.size());
    if (samples.empty()) return out;
    validate(params, grid.size());
    detail::parallel_for(samples.size(), threads, [&](std::size_t i) {
        out[i] = detect_peaks(process_intensities(samples[i].intensities, params), params);
    });
    return out;
}

/// median(x) + 5 * MAD(x).
inline double robust_threshold(std::vector<double> x) {
    if (x.empty()) return 0.0;
    auto median = [](std::vector<double>& v) {
        const std::size_t mid = v.size() / 2;
        std::nth_element(v.begin(), v.begin() + static_cast<long>(mid), v.end());
        double m = v[mid];
        if (v.size() % 2 == 0) {
            const double lo = *std::max_element(v.begin(), v.begin() + static_cast<long>(mid));
            m = 0.5 * (m + lo);
        }
        return m;
    };
    const double med = median(x);
    for (double& v : x) v = std::abs(v - med);
    return med + 5.0 * median(x);
}

/// Dataset-wide intensity threshold estimated from the pooled processed series.
inline double estimate_threshold(const QGrid& grid, std::span<const XrdSample> samples,
                                 const BinarizationParams& params, unsigned threads = 0) {
    detail::check_lengths(grid, samples);
    if (samples.empty()) return 0.0;
    validate(params, grid.size());
    std::vector<std::vector<double>> processed(samples.size());
    detail::parallel_for(samples.size(), threads, [&](std::size_t i) {
        processed[i] = process_intensities(samples[i].intensities, params);
    });
    std::vector<double> pooled;
    pooled.reserve(samples.size() * grid.size());
    for (const auto& p : processed) pooled.insert(pooled.end(), p.begin(), p.end());
    return robust_threshold(std::move(pooled));
}

}  // namespace xrdphase
