// Command-line driver: synth -> binarize -> map -> merge -> plot, plus the
// baseline clusterers and the interactive service.
//
// Exit codes: 0 success, 1 validation error, 2 I/O error.

#include <xrdphase/baseline.hpp>
#include <xrdphase/core.hpp>
#include <xrdphase/io.hpp>
#include <xrdphase/merge.hpp>
#include <xrdphase/phasemap.hpp>
#include <xrdphase/service.hpp>
#include <xrdphase/signal.hpp>
#include <xrdphase/synth.hpp>

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace xrdphase;

constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;

// Output location: explicit flag, else $XRDPHASE_OUT_DIR/<fallback>, else ./<fallback>.
fs::path output_path(const std::string& flag, const std::string& fallback) {
    if (!flag.empty()) return flag;
    if (const char* dir = std::getenv("XRDPHASE_OUT_DIR"); dir && *dir) return fs::path(dir) / fallback;
    return fallback;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::vector<std::vector<double>> intensity_rows(const Dataset& d) {
    std::vector<std::vector<double>> rows;
    rows.reserve(d.samples.size());
    for (const auto& s : d.samples) rows.push_back(s.intensities);
    return rows;
}

struct SynthArgs {
    std::string config, out;
    std::optional<std::uint64_t> seed;
};

struct BinarizeArgs {
    std::string in, out, threshold;
    std::size_t windows = 200;
    int smooth_degree = 5, smooth_window = 21, baseline_degree = 1;
    unsigned threads = 0;
};

struct MapArgs {
    std::string in, out;
    std::size_t th = 2, ot = 2, max_mixed = 3;
    std::uint64_t seed = 0;
};

struct MergeArgs {
    std::string in, out, metric = "avg_peak_diff", ids, actor = "cli", timestamp;
    std::optional<double> cutoff;
};

struct BaselineArgs {
    std::string in, out, method = "hier", metric = "cosine", param, truth;
    std::uint64_t seed = 0;
};

struct PlotArgs {
    std::string result, dataset, out;
    bool show_outliers = false;
};

struct ServeArgs {
    std::string result, dataset, host = "127.0.0.1", static_dir;
    int port = 8080;
};

int run_synth(const SynthArgs& a) {
    const json j = detail::parse_json(detail::read_file(a.config), a.config);
    SynthConfig cfg = synth_config_from_json(j);
    if (a.seed) cfg.seed = *a.seed;
    const auto synth = generate(cfg);
    const fs::path dir = output_path(a.out, "synth");
    write_dataset(synth.dataset, dir / "dataset.csv");
    detail::write_file(dir / "truth.json", truth_to_json(synth).dump(1) + "\n");
    std::cout << "wrote " << synth.dataset.samples.size() << " samples to " << (dir / "dataset.csv").string() << "\n";
    return 0;
}

int run_binarize(const BinarizeArgs& a) {
    const auto loaded = load_dataset(a.in);
    for (const auto& w : loaded.warnings) std::cerr << "warning: " << w << "\n";
    const Dataset& d = loaded.dataset;

    BinarizationParams p;
    p.window_count = a.windows;
    p.smooth_degree = a.smooth_degree;
    p.smooth_window = a.smooth_window;
    p.baseline_degree = a.baseline_degree;
    PatternFile f;
    if (a.threshold == "auto") {
        p.intensity_threshold = estimate_threshold(d.grid, d.samples, p, a.threads);
        f.threshold_source = "auto";
    } else {
        try {
            std::size_t used = 0;
            p.intensity_threshold = std::stod(a.threshold, &used);
            if (used != a.threshold.size()) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
            throw ValidationError("--threshold must be a number or 'auto'");
        }
    }
    validate(p, d.grid.size());
    const auto patterns = binarize_dataset(d.grid, d.samples, p, a.threads);
    f.window_count = p.window_count;
    f.binarization = p;
    for (std::size_t i = 0; i < patterns.size(); ++i) f.patterns.push_back({d.samples[i].id, patterns[i]});
    const fs::path out = output_path(a.out, "patterns.json");
    write_patterns(f, out);
    std::cout << "binarized " << patterns.size() << " samples (threshold " << p.intensity_threshold << ") -> "
              << out.string() << "\n";
    return 0;
}

ResultFormat format_for(const fs::path& p) {
    return detail::lower_ext(p) == ".csv" ? ResultFormat::csv : ResultFormat::json;
}

int run_map(const MapArgs& a) {
    const PatternFile f = load_patterns(a.in);
    PhaseMapParams mp;
    mp.th = a.th;
    mp.ot = a.ot;
    mp.max_mixed_constituents = a.max_mixed;
    PhaseMapResult r = run_incremental_phase_mapping(f.patterns, mp);
    r.params.binarization = f.binarization;
    r.params.threshold_source = f.threshold_source;
    r.params.seed = a.seed;
    if (r.params.window_count == 0) r.params.window_count = f.window_count;
    const fs::path out = output_path(a.out, "result.json");
    export_result(r, out, format_for(out));
    std::cout << r.catalog.size() << " pure phases -> " << out.string() << "\n";
    return 0;
}

int run_merge(const MergeArgs& a) {
    PhaseMapResult r = import_result(a.in);
    const MergeContext ctx{a.actor, a.timestamp.empty() ? utc_timestamp_now() : a.timestamp};
    const std::size_t before = r.catalog.size();
    if (!a.ids.empty()) {
        if (a.cutoff) throw ValidationError("use either --ids or --cutoff, not both");
        std::vector<PhaseId> ids;
        for (const auto& s : split_list(a.ids)) ids.push_back(PhaseId::parse(s));
        r = manual_merge(std::move(r), ids, ctx);
    } else if (a.cutoff) {
        r = hierarchical_merge(std::move(r), parse_peak_metric(a.metric), *a.cutoff, ctx).result;
    } else {
        throw ValidationError("merge needs --ids or --cutoff");
    }
    const fs::path out = output_path(a.out, "result.json");
    export_result(r, out, format_for(out));
    std::cout << before << " -> " << r.catalog.size() << " pure phases -> " << out.string() << "\n";
    for (const auto& w : r.lineage.back().warnings) std::cerr << "warning: " << w << "\n";
    return 0;
}

int run_baseline(const BaselineArgs& a) {
    const auto loaded = load_dataset(a.in);
    const Dataset& d = loaded.dataset;
    const auto rows = intensity_rows(d);

    std::vector<LabelSet> truth;
    if (!a.truth.empty()) {
        std::unordered_map<std::string, LabelSet> by_id;
        for (auto& [id, set] : load_truth(a.truth)) by_id.emplace(id, set);
        for (const auto& s : d.samples) {
            auto it = by_id.find(s.id);
            if (it == by_id.end()) throw ValidationError("truth file lacks sample '" + s.id + "'");
            truth.push_back(it->second);
        }
    }

    SweepSpec spec;
    spec.seed = a.seed;
    std::vector<double> params;
    if (a.param.empty()) {
        if (a.method == "hier") params = geometric_grid(1000.0, 0.5, 50);
        else throw ValidationError("kmeans needs --param k");
    } else {
        for (const auto& s : split_list(a.param)) {
            try {
                params.push_back(std::stod(s));
            } catch (const std::exception&) {
                throw ValidationError("bad --param value '" + s + "'");
            }
        }
    }
    if (a.method == "hier") {
        spec.hierarchical.push_back({parse_vector_metric(a.metric), params});
    } else if (a.method == "kmeans") {
        for (double k : params) {
            if (k < 1 || k != std::floor(k)) throw ValidationError("k must be a positive integer");
            spec.kmeans_k.push_back(static_cast<std::size_t>(k));
        }
    } else {
        throw ValidationError("--method must be hier or kmeans");
    }
    const auto report = sweep(rows, truth, spec);
    const fs::path out = output_path(a.out, "baseline.json");
    write_sweep_report(report, out);
    std::cout << report.rows.size() << " settings -> " << out.string() << "\n";
    return 0;
}

int run_plot(const PlotArgs& a) {
    const auto r = import_result(a.result);
    const auto d = load_dataset(a.dataset).dataset;
    const auto files = render_plots(r, d, output_path(a.out, "plots"), a.show_outliers);
    std::cout << "wrote " << files.wafer.string() << ", " << files.ternary.string() << ", " << files.peaks.string()
              << ", " << files.data.string() << "\n";
    return 0;
}

int run_serve(const ServeArgs& a) {
    Session session(load_dataset(a.dataset).dataset, import_result(a.result));
    httplib::Server server;
    install_routes(server, session, a.static_dir);
    std::cout << "serving on http://" << a.host << ":" << a.port << "\n" << std::flush;
    if (!server.listen(a.host, a.port)) throw IoError("cannot listen on port " + std::to_string(a.port));
    return 0;
}

int report_error(bool as_json, std::string_view kind, const std::string& message, int code) {
    if (as_json) {
        std::cerr << json{{"error", {{"kind", kind}, {"message", message}, {"exit_code", code}}}}.dump() << "\n";
    } else {
        std::cerr << "error: " << message << "\n";
    }
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Phase mapping for composition-spread X-ray diffraction data"};
    app.require_subcommand(1);
    bool errors_json = false;
    app.add_flag("--errors-json", errors_json, "Print errors as JSON on stderr");
    app.fallthrough();

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic wafer dataset and its ground truth");
    synth->add_option("--config", synth_args.config, "Synthetic wafer config (JSON)")->required();
    synth->add_option("--seed", synth_args.seed, "Override the config seed");
    synth->add_option("--out", synth_args.out, "Output directory");

    BinarizeArgs bin_args;
    auto* binarize = app.add_subcommand("binarize", "Convert a dataset to binary peak patterns");
    binarize->add_option("--in", bin_args.in, "Dataset (CSV or JSON)")->required();
    binarize->add_option("--threshold", bin_args.threshold, "Intensity threshold in counts, or 'auto'")->required();
    binarize->add_option("--windows", bin_args.windows, "Window count W")->capture_default_str();
    binarize->add_option("--smooth-degree", bin_args.smooth_degree)->capture_default_str();
    binarize->add_option("--smooth-window", bin_args.smooth_window)->capture_default_str();
    binarize->add_option("--baseline-degree", bin_args.baseline_degree)->capture_default_str();
    binarize->add_option("--threads", bin_args.threads, "Worker threads (0 = all cores)");
    binarize->add_option("--out", bin_args.out, "Pattern file (JSON)");

    MapArgs map_args;
    auto* map = app.add_subcommand("map", "Run the incremental phase computation");
    map->add_option("--in", map_args.in, "Pattern file from 'binarize'")->required();
    map->add_option("--th", map_args.th, "Adjacency threshold in windows")->required();
    map->add_option("--ot", map_args.ot, "Minimum members per pure phase")->required();
    map->add_option("--max-mixed", map_args.max_mixed, "Largest mixed-phase combination")->capture_default_str();
    map->add_option("--seed", map_args.seed, "Recorded in the result params");
    map->add_option("--out", map_args.out, "Result file (.json or .csv)");

    MergeArgs merge_args;
    auto* merge = app.add_subcommand("merge", "Merge initial pure phases");
    merge->add_option("--in", merge_args.in, "Result file")->required();
    merge->add_option("--metric", merge_args.metric, "avg_peak_diff | max_peak_diff | sum_peak_diff")
        ->capture_default_str();
    merge->add_option("--cutoff", merge_args.cutoff, "Agglomerative cut distance");
    merge->add_option("--ids", merge_args.ids, "Comma-separated phase ids to merge, e.g. P1,P3");
    merge->add_option("--actor", merge_args.actor)->capture_default_str();
    merge->add_option("--timestamp", merge_args.timestamp, "Lineage timestamp (default: now, UTC)");
    merge->add_option("--out", merge_args.out, "Result file (.json or .csv)");

    BaselineArgs base_args;
    auto* baseline = app.add_subcommand("baseline", "Hard-clustering baselines on raw intensities");
    baseline->add_option("--in", base_args.in, "Dataset (CSV or JSON)")->required();
    baseline->add_option("--method", base_args.method, "hier | kmeans")->capture_default_str();
    baseline->add_option("--metric", base_args.metric, "euclidean | cosine | seuclidean | correlation | emd")
        ->capture_default_str();
    baseline->add_option("--param", base_args.param,
                         "Cutoff(s) for hier or k value(s) for kmeans, comma-separated "
                         "(hier default: 50 values from 1000 halving)");
    baseline->add_option("--truth", base_args.truth, "Ground-truth file from 'synth' for scoring");
    baseline->add_option("--seed", base_args.seed, "k-means seed");
    baseline->add_option("--out", base_args.out, "Report (.json or .csv)");

    PlotArgs plot_args;
    auto* plot = app.add_subcommand("plot", "Render wafer, ternary and peak-stack SVGs");
    plot->add_option("--result", plot_args.result)->required();
    plot->add_option("--dataset", plot_args.dataset)->required();
    plot->add_option("--out", plot_args.out, "Output directory");
    plot->add_flag("--show-outliers", plot_args.show_outliers, "Draw unassigned samples in grey");

    ServeArgs serve_args;
    auto* serve = app.add_subcommand("serve", "Start the interactive merge service");
    serve->add_option("--result", serve_args.result)->required();
    serve->add_option("--dataset", serve_args.dataset)->required();
    serve->add_option("--port", serve_args.port)->capture_default_str();
    serve->add_option("--host", serve_args.host)->capture_default_str();
    serve->add_option("--static", serve_args.static_dir, "Directory with UI files");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report_error(errors_json, "usage", e.what(), kExitValidation);
    }

    try {
        if (*synth) return run_synth(synth_args);
        if (*binarize) return run_binarize(bin_args);
        if (*map) return run_map(map_args);
        if (*merge) return run_merge(merge_args);
        if (*baseline) return run_baseline(base_args);
        if (*plot) return run_plot(plot_args);
        if (*serve) return run_serve(serve_args);
    } catch (const IoError& e) {
        return report_error(errors_json, "io", e.what(), kExitIo);
    } catch (const ValidationError& e) {
        return report_error(errors_json, "validation", e.what(), kExitValidation);
    } catch (const ParameterError& e) {
        return report_error(errors_json, "parameter", e.what(), kExitValidation);
    } catch (const ContractError& e) {
        return report_error(errors_json, "contract", e.what(), kExitValidation);
    } catch (const DatasetError& e) {
        return report_error(errors_json, "dataset", e.what(), kExitValidation);
    } catch (const ConfigError& e) {
        return report_error(errors_json, "config", e.what(), kExitValidation);
    } catch (const std::exception& e) {
        return report_error(errors_json, "internal", e.what(), kExitIo);
    }
    return 0;
}
