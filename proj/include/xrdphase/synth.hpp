#pragma once
// Synthetic composition-spread wafers with planted pure-phase regions and
// mixed-phase boundary bands. Serves as ground truth for the test suites.

#include <xrdphase/baseline.hpp>
#include <xrdphase/core.hpp>
#include <xrdphase/phasemap.hpp>
#include <xrdphase/signal.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace xrdphase {

/// One planted phase: Gaussian peaks at fixed Q positions.
struct PlantedPhase {
    std::vector<double> peak_q;
    std::vector<double> amplitudes;  // one per peak
    double width = 0.02;             // Gaussian sigma, inverse angstrom
};

struct SynthConfig {
    std::uint64_t seed = 0;
    double wafer_radius_mm = 50.0;
    double pitch_mm = 2.0;
    std::size_t max_samples = 0;  // 0 keeps every grid point on the wafer
    double q_min = 1.0;
    double q_max = 4.2;
    std::size_t q_points = 499;
    std::vector<PlantedPhase> phases;
    double boundary_band = 0.0;  // fraction of samples given two-phase patterns
    double background_intercept = 50.0;
    double background_slope = 0.0;  // counts per inverse angstrom
    double spike_rate = 0.0;
    double spike_amplitude = 0.0;
    double noise_sigma = 0.0;
    // When non-zero the planted peaks are checked for separation at this
    // window count and adjacency threshold.
    std::size_t check_windows = 0;
    std::size_t check_th = 0;
};

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct SynthDataset {
    Dataset dataset;
    std::vector<LabelSet> truth;  // planted phase indices per sample

    [[nodiscard]] MembershipTable truth_table() const {
        MembershipTable t;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            PhaseSet s;
            for (std::size_t k : truth[i]) s.push_back(PhaseId{static_cast<std::uint32_t>(k)});
            t.assign(dataset.samples[i].id, s);
        }
        return t;
    }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Planted peak windows of a phase under the checking configuration.
inline std::vector<std::size_t> planted_windows(const QGrid& grid, const PlantedPhase& ph,
                                                std::size_t windows) {
    const auto bounds = window_bounds(grid.size(), windows);
    std::vector<std::size_t> out;
    for (double q : ph.peak_q) {
        const auto& v = grid.values();
        auto it = std::lower_bound(v.begin(), v.end(), q);
        std::size_t idx = static_cast<std::size_t>(it - v.begin());
        if (idx == v.size()) idx = v.size() - 1;
        else if (idx > 0 && q - v[idx - 1] < v[idx] - q) --idx;
        std::size_t w = 0;
        while (bounds[w].second <= idx) ++w;
        out.push_back(w);
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline void check_config(const SynthConfig& c, const QGrid& grid) {
    if (c.phases.empty()) throw ConfigError("at least one planted phase is required");
    if (!(c.pitch_mm > 0.0) || !(c.wafer_radius_mm > 0.0))
        throw ConfigError("wafer radius and pitch must be positive");
    if (c.boundary_band < 0.0 || c.boundary_band > 1.0)
        throw ConfigError("boundary_band must be in [0, 1]");
    if (c.boundary_band > 0.0 && c.phases.size() < 2)
        throw ConfigError("a boundary band needs at least two phases");
    if (c.spike_rate < 0.0 || c.spike_rate > 1.0) throw ConfigError("spike_rate must be in [0, 1]");
    if (c.noise_sigma < 0.0) throw ConfigError("noise_sigma must be non-negative");
    for (const auto& p : c.phases) {
        if (p.peak_q.size() != p.amplitudes.size())
            throw ConfigError("each planted peak needs one amplitude");
        if (p.peak_q.empty()) throw ConfigError("planted phases need at least one peak");
        if (!(p.width > 0.0)) throw ConfigError("peak width must be positive");
        for (double q : p.peak_q)
            if (q < c.q_min || q > c.q_max) throw ConfigError("planted peak outside the Q range");
    }
    if (c.check_windows == 0) return;

    std::vector<std::vector<std::size_t>> peaks;
    for (const auto& p : c.phases) {
        auto w = planted_windows(grid, p, c.check_windows);
        if (std::adjacent_find(w.begin(), w.end()) != w.end())
            throw ConfigError("a planted phase has two peaks in one window");
        peaks.push_back(std::move(w));
    }
    for (std::size_t i = 0; i < peaks.size(); ++i) {
        for (std::size_t j = i + 1; j < peaks.size(); ++j) {
            if (detail::within_threshold(peaks[i], peaks[j], c.check_th))
                throw ConfigError("planted phases " + std::to_string(i) + " and " + std::to_string(j) +
                                  " are indistinguishable at th=" + std::to_string(c.check_th));
            std::vector<std::size_t> u = peaks[i];
            u.insert(u.end(), peaks[j].begin(), peaks[j].end());
            std::sort(u.begin(), u.end());
            if (coalesce_peaks(u, c.check_th).size() != peaks[i].size() + peaks[j].size())
                throw ConfigError("planted phases " + std::to_string(i) + " and " + std::to_string(j) +
                                  " have peaks within th of each other");
        }
    }
}

}  // namespace detail

/// Samples laid out on a square grid inside the wafer; pure-phase regions are
/// equal angular sectors and the samples closest to a sector boundary carry
/// the union of the two adjacent phases.
inline SynthDataset generate(const SynthConfig& config) {
    const QGrid grid = QGrid::linspace(config.q_min, config.q_max, config.q_points);
    detail::check_config(config, grid);

    struct Site {
        double x, y;
    };
    std::vector<Site> sites;
    const double r = config.wafer_radius_mm, pitch = config.pitch_mm;
    const long steps = static_cast<long>(std::floor(r / pitch));
    for (long iy = -steps; iy <= steps; ++iy)
        for (long ix = -steps; ix <= steps; ++ix) {
            const double x = static_cast<double>(ix) * pitch, y = static_cast<double>(iy) * pitch;
            if (x * x + y * y <= r * r + 1e-9) sites.push_back({x, y});
        }
    if (config.max_samples > 0 && sites.size() > config.max_samples) {
        std::stable_sort(sites.begin(), sites.end(), [](const Site& a, const Site& b) {
            return a.x * a.x + a.y * a.y < b.x * b.x + b.y * b.y;
        });
        sites.resize(config.max_samples);
        std::stable_sort(sites.begin(), sites.end(),
                         [](const Site& a, const Site& b) { return std::tie(a.y, a.x) < std::tie(b.y, b.x); });
    }

    const std::size_t n = sites.size();
    const std::size_t np = config.phases.size();
    constexpr double two_pi = 2.0 * std::numbers::pi;
    const double sector = two_pi / static_cast<double>(np);
    constexpr double offset = std::numbers::pi / 2.0;

    SynthDataset out;
    out.truth.resize(n);
    std::vector<double> boundary_distance(n);
    std::vector<std::size_t> neighbour(n);
    for (std::size_t i = 0; i < n; ++i) {
        double a = std::atan2(sites[i].y, sites[i].x) - offset;
        a = std::fmod(std::fmod(a, two_pi) + two_pi, two_pi);
        const auto k = std::min(static_cast<std::size_t>(a / sector), np - 1);
        const double lo = a - static_cast<double>(k) * sector, hi = sector - lo;
        out.truth[i] = {k};
        boundary_distance[i] = std::min(lo, hi);
        neighbour[i] = lo < hi ? (k + np - 1) % np : (k + 1) % np;
    }
    const auto n_mixed = static_cast<std::size_t>(
        std::ceil(config.boundary_band * static_cast<double>(n) - 1e-9));
    if (np >= 2 && n_mixed > 0) {
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return boundary_distance[a] < boundary_distance[b];
        });
        for (std::size_t m = 0; m < std::min(n_mixed, n); ++m) {
            const std::size_t i = order[m];
            LabelSet s{out.truth[i][0], neighbour[i]};
            std::sort(s.begin(), s.end());
            out.truth[i] = s;
        }
    }

    // Gun directions for the composition gradient.
    std::array<std::pair<double, double>, 3> guns;
    for (std::size_t k = 0; k < 3; ++k) {
        const double ang = offset + static_cast<double>(k) * two_pi / 3.0;
        guns[k] = {std::cos(ang), std::sin(ang)};
    }

    out.dataset.grid = grid;
    out.dataset.samples.resize(n);
    const auto& q = grid.values();
    for (std::size_t i = 0; i < n; ++i) {
        XrdSample& s = out.dataset.samples[i];
        s.id = default_sample_id(i);
        s.wafer_pos = {sites[i].x, sites[i].y};
        for (std::size_t k = 0; k < 3; ++k) {
            const double proj = (sites[i].x * guns[k].first + sites[i].y * guns[k].second) / r;
            s.composition.fractions[k] = (1.0 + 0.9 * proj) / 3.0;
        }
        const double sum = s.composition.sum();
        for (double& f : s.composition.fractions) f /= sum;

        std::mt19937_64 rng(detail::splitmix64(config.seed ^ detail::splitmix64(i)));
        std::normal_distribution<double> noise(0.0, 1.0);
        s.intensities.resize(q.size());
        for (std::size_t j = 0; j < q.size(); ++j)
            s.intensities[j] = config.background_intercept + config.background_slope * (q[j] - config.q_min);
        for (std::size_t k : out.truth[i]) {
            const auto& ph = config.phases[k];
            for (std::size_t p = 0; p < ph.peak_q.size(); ++p)
                for (std::size_t j = 0; j < q.size(); ++j) {
                    const double z = (q[j] - ph.peak_q[p]) / ph.width;
                    s.intensities[j] += ph.amplitudes[p] * std::exp(-0.5 * z * z);
                }
        }
        if (config.spike_rate > 0.0 &&
            std::uniform_real_distribution<double>(0.0, 1.0)(rng) < config.spike_rate) {
            const auto j = std::uniform_int_distribution<std::size_t>(0, q.size() - 1)(rng);
            s.intensities[j] += config.spike_amplitude;
        }
        if (config.noise_sigma > 0.0)
            for (double& v : s.intensities) v += config.noise_sigma * noise(rng);
        for (double& v : s.intensities) v = std::max(v, 0.0);
    }
    return out;
}

}  // namespace xrdphase
