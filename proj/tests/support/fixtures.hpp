#pragma once
// Synthetic wafers shared by the unit, integration and acceptance suites.

#include <xrdphase/baseline.hpp>
#include <xrdphase/core.hpp>
#include <xrdphase/phasemap.hpp>
#include <xrdphase/signal.hpp>
#include <xrdphase/synth.hpp>

#include <map>
#include <random>
#include <set>
#include <vector>

namespace fixture {

using namespace xrdphase;

inline constexpr std::size_t kQPoints = 499;
inline constexpr double kQMin = 1.0, kQMax = 4.2;
inline constexpr std::size_t kWindows = 100;
inline constexpr std::size_t kTh = 2;
inline constexpr double kAmplitude = 100.0;
inline constexpr double kThreshold = 40.0;

/// Q value at the centre grid point of window w (windows hold 5 points here).
inline double q_at_window(std::size_t w) {
    const auto bounds = window_bounds(kQPoints, kWindows);
    const std::size_t idx = (bounds[w].first + bounds[w].second - 1) / 2;
    return kQMin + (kQMax - kQMin) * static_cast<double>(idx) / static_cast<double>(kQPoints - 1);
}

inline PlantedPhase phase_at(std::initializer_list<std::size_t> windows, double amplitude = kAmplitude) {
    PlantedPhase p;
    for (std::size_t w : windows) {
        p.peak_q.push_back(q_at_window(w));
        p.amplitudes.push_back(amplitude);
    }
    p.width = 4.0 * (kQMax - kQMin) / static_cast<double>(kQPoints - 1);  // 4 grid points
    return p;
}

/// Planted peak windows of the three-phase wafer (2, 3 and 3 peaks).
inline const std::vector<std::vector<std::size_t>>& planted_windows() {
    static const std::vector<std::vector<std::size_t>> w{{10, 40}, {20, 55, 80}, {30, 65, 90}};
    return w;
}

/// Fixture 1: 500 samples, three phases, 10% boundary band, no noise.
inline SynthConfig wafer_config(std::uint64_t seed = 1) {
    SynthConfig c;
    c.seed = seed;
    c.wafer_radius_mm = 26.0;
    c.pitch_mm = 2.0;
    c.max_samples = 500;
    c.q_min = kQMin;
    c.q_max = kQMax;
    c.q_points = kQPoints;
    c.phases = {phase_at({10, 40}), phase_at({20, 55, 80}), phase_at({30, 65, 90})};
    c.boundary_band = 0.10;
    c.background_intercept = 50.0;
    c.background_slope = 10.0;
    c.check_windows = kWindows;
    c.check_th = kTh;
    return c;
}

/// Fixture 2: fixture 1 plus noise (5% of amplitude) and spikes.
inline SynthConfig noisy_wafer_config(std::uint64_t seed = 2) {
    SynthConfig c = wafer_config(seed);
    c.noise_sigma = 0.05 * kAmplitude;
    c.spike_rate = 0.02;
    c.spike_amplitude = 3.0 * kAmplitude;
    return c;
}

inline BinarizationParams binarization() {
    BinarizationParams p;
    p.window_count = kWindows;
    p.intensity_threshold = kThreshold;
    return p;
}

inline PhaseMapParams mapping(std::size_t ot = 5) {
    PhaseMapParams p;
    p.th = kTh;
    p.ot = ot;
    return p;
}

inline std::vector<SamplePattern> binarized(const SynthDataset& s, const BinarizationParams& p = binarization()) {
    const auto patterns = binarize_dataset(s.dataset.grid, s.dataset.samples, p);
    std::vector<SamplePattern> out;
    for (std::size_t i = 0; i < patterns.size(); ++i) out.push_back({s.dataset.samples[i].id, patterns[i]});
    return out;
}

inline PhaseMapResult run_pipeline(const SynthDataset& s, const PhaseMapParams& mp = mapping(),
                                   const BinarizationParams& bp = binarization()) {
    auto r = run_incremental_phase_mapping(binarized(s, bp), mp);
    r.params.binarization = bp;
    return r;
}

inline SynthConfig oversplit_config() {
    // Planted phase 0 duplicated as phase 3 with every peak one window later.
    SynthConfig c = wafer_config(7);
    c.phases.push_back(phase_at({11, 41}));
    c.boundary_band = 0.0;
    c.check_windows = 0;
    return c;
}

inline PhaseMapParams oversplit_mapping() {
    PhaseMapParams p;
    p.th = 0;
    p.ot = 2;
    return p;
}

/// Label sets of the result in dataset order, phase ids as labels.
inline std::vector<LabelSet> assigned_sets(const PhaseMapResult& r, const Dataset& d) {
    std::vector<LabelSet> out;
    for (const auto& s : d.samples) {
        LabelSet l;
        for (PhaseId id : r.memberships.at(s.id)) l.push_back(id.index);
        out.push_back(l);
    }
    return out;
}

/// Recovered phase -> planted phase, by majority over pure members.
inline std::map<std::size_t, std::size_t> recovered_to_planted(const std::vector<LabelSet>& assigned,
                                                               const std::vector<LabelSet>& truth) {
    std::map<std::size_t, std::map<std::size_t, std::size_t>> votes;
    for (std::size_t i = 0; i < truth.size(); ++i)
        if (assigned[i].size() == 1 && truth[i].size() == 1) ++votes[assigned[i][0]][truth[i][0]];
    std::map<std::size_t, std::size_t> out;
    for (const auto& [rec, row] : votes) {
        std::size_t best = 0, arg = 0;
        for (const auto& [pl, c] : row)
            if (c > best) {
                best = c;
                arg = pl;
            }
        out[rec] = arg;
    }
    return out;
}

/// Fraction of samples whose mapped assignment equals the planted set.
inline double correct_fraction(const std::vector<LabelSet>& assigned, const std::vector<LabelSet>& truth) {
    const auto map = recovered_to_planted(assigned, truth);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        LabelSet mapped;
        bool known = true;
        for (std::size_t l : assigned[i]) {
            auto it = map.find(l);
            if (it == map.end()) known = false;
            else mapped.push_back(it->second);
        }
        std::sort(mapped.begin(), mapped.end());
        if (known && mapped == truth[i]) ++ok;
    }
    return truth.empty() ? 1.0 : static_cast<double>(ok) / static_cast<double>(truth.size());
}

/// Random pattern of width w with up to max_peaks set bits.
inline BinaryPeakPattern random_pattern(std::mt19937_64& rng, std::size_t width, std::size_t max_peaks) {
    std::uniform_int_distribution<std::size_t> count(0, max_peaks), pos(0, width - 1);
    std::set<std::size_t> peaks;
    const std::size_t n = count(rng);
    while (peaks.size() < n) peaks.insert(pos(rng));
    std::vector<std::size_t> v(peaks.begin(), peaks.end());
    return BinaryPeakPattern::from_indices(width, v);
}

}  // namespace fixture
