#pragma once
// Dataset ingestion, pattern and result files, and plot emission.
//
// Dataset CSV: header `id,x_mm,y_mm,frac_a,frac_b,frac_c,<q1>,...,<qM>`, one
// row per sample, Q values carried in the header cells. The `id` column is
// optional. Dataset JSON: {"grid": [...], "samples": [{"id", "x_mm", "y_mm",
// "composition": [a, b, c], "intensities": [...]}]}.

#include <xrdphase/baseline.hpp>
#include <xrdphase/core.hpp>
#include <xrdphase/synth.hpp>

#include <nlohmann/json.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

namespace xrdphase {

using json = nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Small file helpers
// ---------------------------------------------------------------------------

namespace detail {

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const fs::path& path, std::string_view content) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline json parse_json(const std::string& text, const fs::path& path) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw IoError("'" + path.string() + "' is not valid JSON: " + e.what());
    }
}

inline std::string lower_ext(const fs::path& p) {
    std::string e = p.extension().string();
    for (char& c : e) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return e;
}

// Splits one CSV line; handles double-quoted cells with "" escapes.
inline std::vector<std::string> split_csv(std::string_view line) {
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    cells.push_back(std::move(cur));
    return cells;
}

inline std::string csv_cell(std::string_view s) {
    if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

inline double parse_double(std::string_view s, std::size_t row, std::string_view what) {
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw DatasetError("row " + std::to_string(row) + ": cannot parse " + std::string(what) + " '" +
                           std::string(s) + "'");
    return v;
}

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string fmt_fixed(double v, int digits = 2) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    std::string s = buf;
    if (s == "-0.00" || s == "-0.0" || s == "-0") s.erase(0, 1);
    return s;
}

// Validates and, when needed, renormalises a composition read from a file.
inline Composition checked_composition(std::array<double, 3> f, std::size_t row,
                                       std::vector<std::string>& warnings) {
    for (double v : f)
        if (!(v >= 0.0) || !std::isfinite(v))
            throw DatasetError("row " + std::to_string(row) + ": composition entries must be >= 0");
    double sum = f[0] + f[1] + f[2];
    if (std::abs(sum - 100.0) <= 0.1) {  // percent input
        for (double& v : f) v /= 100.0;
        sum /= 100.0;
    }
    if (std::abs(sum - 1.0) > 1e-3)
        throw DatasetError("row " + std::to_string(row) + ": composition sums to " + fmt_double(sum));
    if (std::abs(sum - 1.0) > 1e-6) {
        for (double& v : f) v /= sum;
        warnings.push_back("row " + std::to_string(row) + ": composition renormalised from sum " +
                           fmt_double(sum));
    }
    return Composition{f};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

struct LoadedDataset {
    Dataset dataset;
    std::vector<std::string> warnings;
};

inline LoadedDataset parse_dataset_csv(const std::string& text) {
    LoadedDataset out;
    std::istringstream in(text);
    std::string line;
    std::size_t row = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++row;
        if (line.find_first_not_of(" \r\t") == std::string::npos) continue;
        header = detail::split_csv(line);
        break;
    }
    if (header.empty()) throw DatasetError("dataset file is empty");
    const bool has_id = !header.empty() && header[0] == "id";
    const std::size_t meta = has_id ? 6 : 5;
    const std::array<std::string, 5> expected{"x_mm", "y_mm", "frac_a", "frac_b", "frac_c"};
    if (header.size() < meta + 2) throw DatasetError("header must carry at least two Q columns");
    for (std::size_t k = 0; k < expected.size(); ++k)
        if (header[k + (has_id ? 1 : 0)] != expected[k])
            throw DatasetError("header column " + std::to_string(k + (has_id ? 2 : 1)) + " must be '" +
                               expected[k] + "'");
    std::vector<double> q;
    for (std::size_t k = meta; k < header.size(); ++k) q.push_back(detail::parse_double(header[k], 1, "Q value"));
    out.dataset.grid = QGrid(std::move(q));
    const std::size_t m = out.dataset.grid.size();

    std::size_t sample_row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (line.find_first_not_of(" \r\t") == std::string::npos) continue;
        const auto cells = detail::split_csv(line);
        if (cells.size() != header.size())
            throw DatasetError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                               " cells, found " + std::to_string(cells.size()));
        XrdSample s;
        std::size_t c = 0;
        s.id = has_id ? cells[c++] : std::string();
        if (s.id.empty()) s.id = default_sample_id(sample_row);
        s.wafer_pos.x_mm = detail::parse_double(cells[c++], row, "x_mm");
        s.wafer_pos.y_mm = detail::parse_double(cells[c++], row, "y_mm");
        std::array<double, 3> f{};
        for (double& v : f) v = detail::parse_double(cells[c++], row, "composition");
        s.composition = detail::checked_composition(f, row, out.warnings);
        s.intensities.reserve(m);
        for (; c < cells.size(); ++c) {
            const double v = detail::parse_double(cells[c], row, "intensity");
            if (v < 0.0 || !std::isfinite(v))
                throw DatasetError("row " + std::to_string(row) + ": intensities must be finite and >= 0");
            s.intensities.push_back(v);
        }
        out.dataset.samples.push_back(std::move(s));
        ++sample_row;
    }
    return out;
}

inline LoadedDataset parse_dataset_json(const json& j) {
    LoadedDataset out;
    try {
        out.dataset.grid = QGrid(j.at("grid").get<std::vector<double>>());
        std::size_t row = 0;
        for (const auto& js : j.value("samples", json::array())) {
            ++row;
            XrdSample s;
            s.id = js.value("id", std::string());
            if (s.id.empty()) s.id = default_sample_id(row - 1);
            s.wafer_pos = {js.value("x_mm", 0.0), js.value("y_mm", 0.0)};
            const auto f = js.at("composition").get<std::vector<double>>();
            if (f.size() != 3) throw DatasetError("sample " + std::to_string(row) + ": composition needs 3 entries");
            s.composition = detail::checked_composition({f[0], f[1], f[2]}, row, out.warnings);
            s.intensities = js.at("intensities").get<std::vector<double>>();
            if (s.intensities.size() != out.dataset.grid.size())
                throw DatasetError("sample " + std::to_string(row) + ": expected " +
                                   std::to_string(out.dataset.grid.size()) + " intensities, found " +
                                   std::to_string(s.intensities.size()));
            for (double v : s.intensities)
                if (v < 0.0 || !std::isfinite(v))
                    throw DatasetError("sample " + std::to_string(row) + ": intensities must be finite and >= 0");
            out.dataset.samples.push_back(std::move(s));
        }
    } catch (const json::exception& e) {
        throw DatasetError(std::string("malformed dataset JSON: ") + e.what());
    }
    return out;
}

/// Loads a CSV or JSON (by extension) dataset and validates it.
inline LoadedDataset load_dataset(const fs::path& path) {
    const std::string text = detail::read_file(path);
    if (detail::lower_ext(path) == ".json") return parse_dataset_json(detail::parse_json(text, path));
    return parse_dataset_csv(text);
}

inline std::string dataset_to_csv(const Dataset& d) {
    std::string out = "id,x_mm,y_mm,frac_a,frac_b,frac_c";
    for (double q : d.grid.values()) out += "," + detail::fmt_double(q);
    out += '\n';
    for (const auto& s : d.samples) {
        out += detail::csv_cell(s.id);
        out += "," + detail::fmt_double(s.wafer_pos.x_mm) + "," + detail::fmt_double(s.wafer_pos.y_mm);
        for (double f : s.composition.fractions) out += "," + detail::fmt_double(f);
        for (double v : s.intensities) out += "," + detail::fmt_double(v);
        out += '\n';
    }
    return out;
}

inline json dataset_to_json(const Dataset& d) {
    json j;
    j["grid"] = d.grid.values();
    j["samples"] = json::array();
    for (const auto& s : d.samples) {
        j["samples"].push_back({{"id", s.id},
                                {"x_mm", s.wafer_pos.x_mm},
                                {"y_mm", s.wafer_pos.y_mm},
                                {"composition", s.composition.fractions},
                                {"intensities", s.intensities}});
    }
    return j;
}

inline void write_dataset(const Dataset& d, const fs::path& path) {
    if (detail::lower_ext(path) == ".json") detail::write_file(path, dataset_to_json(d).dump() + "\n");
    else detail::write_file(path, dataset_to_csv(d));
}

// ---------------------------------------------------------------------------
// Ground truth (synthetic) files
// ---------------------------------------------------------------------------

inline json truth_to_json(const SynthDataset& s) {
    json j;
    j["samples"] = json::array();
    for (std::size_t i = 0; i < s.truth.size(); ++i)
        j["samples"].push_back({{"id", s.dataset.samples[i].id}, {"phases", s.truth[i]}});
    return j;
}

/// Sample id -> planted phase indices, in file order.
inline std::vector<std::pair<std::string, LabelSet>> load_truth(const fs::path& path) {
    const json j = detail::parse_json(detail::read_file(path), path);
    std::vector<std::pair<std::string, LabelSet>> out;
    try {
        for (const auto& s : j.at("samples")) out.emplace_back(s.at("id"), s.at("phases").get<LabelSet>());
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed truth file: ") + e.what());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Parameters, patterns and results
// ---------------------------------------------------------------------------

inline json to_json(const BinarizationParams& p) {
    return {{"smooth_degree", p.smooth_degree},
            {"smooth_window", p.smooth_window},
            {"baseline_degree", p.baseline_degree},
            {"intensity_threshold", p.intensity_threshold},
            {"window_count", p.window_count}};
}

inline BinarizationParams binarization_from_json(const json& j) {
    BinarizationParams p;
    p.smooth_degree = j.at("smooth_degree");
    p.smooth_window = j.at("smooth_window");
    p.baseline_degree = j.at("baseline_degree");
    p.intensity_threshold = j.at("intensity_threshold");
    p.window_count = j.at("window_count");
    return p;
}

inline json to_json(const ResultParams& p) {
    json j{{"th", p.mapping.th},
           {"ot", p.mapping.ot},
           {"max_mixed_constituents", p.mapping.max_mixed_constituents},
           {"window_count", p.window_count},
           {"threshold_source", p.threshold_source},
           {"seed", p.seed},
           {"outlier_filtering", p.outlier_filtering}};
    j["binarization"] = p.binarization ? to_json(*p.binarization) : json(nullptr);
    return j;
}

inline ResultParams result_params_from_json(const json& j) {
    ResultParams p;
    p.mapping.th = j.at("th");
    p.mapping.ot = j.at("ot");
    p.mapping.max_mixed_constituents = j.value("max_mixed_constituents", std::size_t{3});
    p.window_count = j.at("window_count");
    p.threshold_source = j.value("threshold_source", std::string("explicit"));
    p.seed = j.value("seed", std::uint64_t{0});
    p.outlier_filtering = j.value("outlier_filtering", std::string("per_group"));
    if (j.contains("binarization") && !j["binarization"].is_null())
        p.binarization = binarization_from_json(j["binarization"]);
    return p;
}

/// Output of the binarize step.
struct PatternFile {
    std::size_t window_count = 0;
    std::optional<BinarizationParams> binarization;
    std::string threshold_source = "explicit";
    std::vector<SamplePattern> patterns;
};

inline json to_json(const PatternFile& f) {
    json j{{"window_count", f.window_count}, {"threshold_source", f.threshold_source}};
    j["binarization"] = f.binarization ? to_json(*f.binarization) : json(nullptr);
    j["patterns"] = json::array();
    for (const auto& p : f.patterns) j["patterns"].push_back({{"id", p.id}, {"bits", p.pattern.to_bitstring()}});
    return j;
}

inline void write_patterns(const PatternFile& f, const fs::path& path) {
    detail::write_file(path, to_json(f).dump(1) + "\n");
}

inline PatternFile load_patterns(const fs::path& path) {
    const json j = detail::parse_json(detail::read_file(path), path);
    PatternFile f;
    try {
        f.window_count = j.value("window_count", std::size_t{0});
        f.threshold_source = j.value("threshold_source", std::string("explicit"));
        if (j.contains("binarization") && !j["binarization"].is_null())
            f.binarization = binarization_from_json(j["binarization"]);
        for (const auto& p : j.at("patterns"))
            f.patterns.push_back({p.at("id"), BinaryPeakPattern::from_bitstring(p.at("bits").get<std::string>())});
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed pattern file: ") + e.what());
    } catch (const ParameterError& e) {
        throw IoError(std::string("malformed pattern file: ") + e.what());
    }
    return f;
}

inline json to_json(const LineageEntry& e) {
    json ids = json::array();
    for (PhaseId id : e.ids) ids.push_back(id.str());
    return {{"op", e.op},         {"ids", ids},   {"metric", e.metric},     {"cutoff", e.cutoff},
            {"actor", e.actor},   {"timestamp", e.timestamp}, {"warnings", e.warnings}};
}

inline LineageEntry lineage_from_json(const json& j) {
    LineageEntry e;
    e.op = j.at("op");
    for (const auto& s : j.value("ids", json::array())) e.ids.push_back(PhaseId::parse(s.get<std::string>()));
    e.metric = j.value("metric", std::string());
    e.cutoff = j.value("cutoff", 0.0);
    e.actor = j.value("actor", std::string());
    e.timestamp = j.value("timestamp", std::string());
    e.warnings = j.value("warnings", std::vector<std::string>{});
    return e;
}

inline json to_json(const PhaseMapResult& r) {
    json j;
    j["params"] = to_json(r.params);
    j["next_phase_index"] = r.catalog.next_index();
    j["phases"] = json::array();
    for (const auto& p : r.catalog.phases()) {
        j["phases"].push_back({{"id", p.id.str()},
                               {"peak_count", p.representative.peak_count()},
                               {"peaks", peak_locations(p.representative)},
                               {"bits", p.representative.to_bitstring()},
                               {"members", p.members}});
    }
    j["memberships"] = json::array();
    for (const auto& [id, set] : r.memberships.entries()) {
        json ids = json::array();
        for (PhaseId p : set) ids.push_back(p.str());
        j["memberships"].push_back({{"id", id}, {"phases", ids}});
    }
    j["patterns"] = json::array();
    for (const auto& sp : r.patterns) j["patterns"].push_back({{"id", sp.id}, {"bits", sp.pattern.to_bitstring()}});
    j["lineage"] = json::array();
    for (const auto& e : r.lineage) j["lineage"].push_back(to_json(e));
    return j;
}

inline PhaseMapResult result_from_json(const json& j) {
    PhaseMapResult r;
    try {
        r.params = result_params_from_json(j.at("params"));
        for (const auto& p : j.at("phases")) {
            r.catalog.insert(PurePhase{PhaseId::parse(p.at("id").get<std::string>()),
                                       BinaryPeakPattern::from_bitstring(p.at("bits").get<std::string>()),
                                       p.value("members", std::vector<std::string>{})});
        }
        r.catalog.set_next_index(std::max(r.catalog.next_index(), j.value("next_phase_index", 0u)));
        for (const auto& m : j.at("memberships")) {
            PhaseSet set;
            for (const auto& s : m.at("phases")) set.push_back(PhaseId::parse(s.get<std::string>()));
            r.memberships.assign(m.at("id"), set);
        }
        for (const auto& p : j.value("patterns", json::array()))
            r.patterns.push_back({p.at("id"), BinaryPeakPattern::from_bitstring(p.at("bits").get<std::string>())});
        for (const auto& e : j.value("lineage", json::array())) r.lineage.push_back(lineage_from_json(e));
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed result JSON: ") + e.what());
    }
    return r;
}

// Result CSV: one row per record, `kind,id,phases,value`.
//   param   name         -            JSON value
//   phase   P3           -            representative bitstring, members ';'-joined in phases column
//   sample  sample id    "P0;P2"      input pattern bitstring
//   lineage index        -            JSON entry
inline std::string result_to_csv(const PhaseMapResult& r) {
    std::string out = "kind,id,phases,value\n";
    auto row = [&](std::string_view kind, std::string_view id, std::string_view phases, std::string_view value) {
        out += std::string(kind) + "," + detail::csv_cell(id) + "," + detail::csv_cell(phases) + "," +
               detail::csv_cell(value) + "\n";
    };
    row("param", "params", "", to_json(r.params).dump());
    row("param", "next_phase_index", "", std::to_string(r.catalog.next_index()));
    for (const auto& p : r.catalog.phases()) {
        std::string members;
        for (std::size_t i = 0; i < p.members.size(); ++i) members += (i ? ";" : "") + p.members[i];
        row("phase", p.id.str(), members, p.representative.to_bitstring());
    }
    for (const auto& [id, set] : r.memberships.entries()) {
        const auto* pat = r.pattern_of(id);
        row("sample", id, join_phase_set(set), pat ? pat->to_bitstring() : "");
    }
    for (std::size_t i = 0; i < r.lineage.size(); ++i) row("lineage", std::to_string(i), "", to_json(r.lineage[i]).dump());
    return out;
}

inline PhaseMapResult result_from_csv(const std::string& text) {
    PhaseMapResult r;
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    if (detail::split_csv(line) != std::vector<std::string>{"kind", "id", "phases", "value"})
        throw IoError("result CSV header must be kind,id,phases,value");
    auto split_semicolon = [](const std::string& s) {
        std::vector<std::string> out;
        std::string cur;
        for (char c : s) {
            if (c == ';') {
                out.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        if (!cur.empty()) out.push_back(cur);
        return out;
    };
    std::uint32_t next_index = 0;
    try {
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto c = detail::split_csv(line);
            if (c.size() != 4) throw IoError("result CSV row must have 4 cells");
            if (c[0] == "param" && c[1] == "params") {
                r.params = result_params_from_json(json::parse(c[3]));
            } else if (c[0] == "param" && c[1] == "next_phase_index") {
                next_index = static_cast<std::uint32_t>(std::stoul(c[3]));
            } else if (c[0] == "phase") {
                r.catalog.insert({PhaseId::parse(c[1]), BinaryPeakPattern::from_bitstring(c[3]), split_semicolon(c[2])});
            } else if (c[0] == "sample") {
                PhaseSet set;
                for (const auto& s : split_semicolon(c[2])) set.push_back(PhaseId::parse(s));
                r.memberships.assign(c[1], set);
                if (!c[3].empty()) r.patterns.push_back({c[1], BinaryPeakPattern::from_bitstring(c[3])});
            } else if (c[0] == "lineage") {
                r.lineage.push_back(lineage_from_json(json::parse(c[3])));
            } else {
                throw IoError("unknown result CSV row kind '" + c[0] + "'");
            }
        }
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed result CSV: ") + e.what());
    }
    r.catalog.set_next_index(std::max(r.catalog.next_index(), next_index));
    return r;
}

enum class ResultFormat { json, csv };

inline void export_result(const PhaseMapResult& r, const fs::path& path, ResultFormat format = ResultFormat::json) {
    if (format == ResultFormat::json) detail::write_file(path, to_json(r).dump(1) + "\n");
    else detail::write_file(path, result_to_csv(r));
}

/// Reads a result written by export_result (format chosen by extension).
inline PhaseMapResult import_result(const fs::path& path) {
    const std::string text = detail::read_file(path);
    if (detail::lower_ext(path) == ".csv") return result_from_csv(text);
    return result_from_json(detail::parse_json(text, path));
}

// ---------------------------------------------------------------------------
// Plotting
// ---------------------------------------------------------------------------

struct TernaryPoint {
    double x = 0.0;
    double y = 0.0;
};

/// Barycentric placement: A -> (0,0), B -> (1,0), C -> (1/2, sqrt(3)/2).
inline TernaryPoint ternary_coords(const Composition& c) {
    const double s = c.sum() > 0.0 ? c.sum() : 1.0;
    const double b = c.fractions[1] / s, cc = c.fractions[2] / s;
    return {b + 0.5 * cc, std::numbers::sqrt3 / 2.0 * cc};
}

/// Colour of a phase; a pure function of the id so it survives merges.
inline std::string phase_color(PhaseId id) {
    static const std::array<const char*, 20> palette{
        "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2",
        "#bcbd22", "#17becf", "#393b79", "#637939", "#8c6d31", "#843c39", "#7b4173",
        "#3182bd", "#e6550d", "#31a354", "#756bb1", "#636363", "#9c9ede"};
    return palette[id.index % palette.size()];
}

constexpr const char* kOutlierColor = "#bdbdbd";

/// Plot-data document shared by the SVG renderer and the HTTP service.
inline json plot_data(const PhaseMapResult& r, const Dataset& d, bool show_outliers = false) {
    json j;
    j["window_count"] = r.params.window_count;
    j["phases"] = json::array();
    std::map<PhaseId, std::size_t> member_count;
    for (const auto& [id, set] : r.memberships.entries())
        for (PhaseId p : set) ++member_count[p];
    for (const auto& p : r.catalog.phases()) {
        j["phases"].push_back({{"id", p.id.str()},
                               {"color", phase_color(p.id)},
                               {"peak_count", p.representative.peak_count()},
                               {"pure_members", p.members.size()},
                               {"member_count", member_count[p.id]},
                               {"peaks", peak_locations(p.representative)}});
    }
    j["samples"] = json::array();
    std::unordered_map<std::string, const XrdSample*> by_id;
    for (const auto& s : d.samples) by_id.emplace(s.id, &s);
    for (const auto& [id, set] : r.memberships.entries()) {
        if (set.empty() && !show_outliers) continue;
        auto it = by_id.find(id);
        if (it == by_id.end()) continue;
        const XrdSample& s = *it->second;
        const auto t = ternary_coords(s.composition);
        json phases = json::array();
        for (PhaseId p : set) phases.push_back(p.str());
        j["samples"].push_back({{"id", id},
                                {"x_mm", s.wafer_pos.x_mm},
                                {"y_mm", s.wafer_pos.y_mm},
                                {"ternary", {t.x, t.y}},
                                {"phases", phases},
                                {"outlier", set.empty()}});
    }
    return j;
}

namespace detail {

class Svg {
public:
    Svg(double w, double h) : w_(w), h_(h) {}
    void add(std::string element) { body_ += "  " + std::move(element) + "\n"; }
    [[nodiscard]] std::string str() const {
        return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" "
               "width=\"" + fmt_fixed(w_, 0) + "\" height=\"" + fmt_fixed(h_, 0) + "\" viewBox=\"0 0 " +
               fmt_fixed(w_, 0) + " " + fmt_fixed(h_, 0) + "\">\n" + body_ + "</svg>\n";
    }

private:
    double w_, h_;
    std::string body_;
};

inline std::string circle(double cx, double cy, double r, const std::string& fill, const char* cls = "marker") {
    return "<circle class=\"" + std::string(cls) + "\" cx=\"" + fmt_fixed(cx) + "\" cy=\"" + fmt_fixed(cy) +
           "\" r=\"" + fmt_fixed(r) + "\" fill=\"" + fill + "\" stroke=\"#222222\" stroke-width=\"0.4\"/>";
}

inline std::string line(double x1, double y1, double x2, double y2, const char* stroke = "#000000") {
    return "<line x1=\"" + fmt_fixed(x1) + "\" y1=\"" + fmt_fixed(y1) + "\" x2=\"" + fmt_fixed(x2) + "\" y2=\"" +
           fmt_fixed(y2) + "\" stroke=\"" + stroke + "\" stroke-width=\"1\"/>";
}

inline std::string text(double x, double y, const std::string& s, const char* anchor = "middle") {
    return "<text x=\"" + fmt_fixed(x) + "\" y=\"" + fmt_fixed(y) + "\" font-size=\"11\" font-family=\"sans-serif\" "
           "text-anchor=\"" + anchor + "\">" + s + "</text>";
}

// Concentric markers: one ring per constituent, shrinking inwards.
inline void sample_marker(Svg& svg, double cx, double cy, double r, const json& sample) {
    const auto& phases = sample.at("phases");
    if (phases.empty()) {
        svg.add(circle(cx, cy, r, kOutlierColor, "marker outlier"));
        return;
    }
    const double n = static_cast<double>(phases.size());
    for (std::size_t k = 0; k < phases.size(); ++k) {
        const double rk = r * (n - static_cast<double>(k)) / n;
        svg.add(circle(cx, cy, rk, phase_color(PhaseId::parse(phases[k].get<std::string>())),
                       phases.size() > 1 ? "marker mixed" : "marker"));
    }
}

}  // namespace detail

inline std::string render_wafer_svg(const json& data) {
    constexpr double size = 420.0, margin = 30.0;
    double radius = 0.0;
    for (const auto& s : data.at("samples"))
        radius = std::max(radius, std::hypot(s.at("x_mm").get<double>(), s.at("y_mm").get<double>()));
    radius = radius > 0.0 ? radius + 2.0 : 50.0;
    const double scale = (size / 2.0 - margin) / radius, c = size / 2.0;
    detail::Svg svg(size, size);
    svg.add("<circle class=\"wafer\" cx=\"" + detail::fmt_fixed(c) + "\" cy=\"" + detail::fmt_fixed(c) + "\" r=\"" +
            detail::fmt_fixed(radius * scale) + "\" fill=\"none\" stroke=\"#000000\" stroke-width=\"1\"/>");
    svg.add(detail::line(margin / 2, c, size - margin / 2, c, "#999999"));
    svg.add(detail::line(c, margin / 2, c, size - margin / 2, "#999999"));
    svg.add(detail::text(size - margin / 2, c - 4, "x (mm)", "end"));
    svg.add(detail::text(c + 4, margin / 2 + 10, "y (mm)", "start"));
    const double marker = std::max(1.5, 0.9 * scale);
    for (const auto& s : data.at("samples"))
        detail::sample_marker(svg, c + s.at("x_mm").get<double>() * scale, c - s.at("y_mm").get<double>() * scale,
                              marker, s);
    return svg.str();
}

inline std::string render_ternary_svg(const json& data) {
    constexpr double w = 440.0, h = 420.0, margin = 30.0;
    const double side = w - 2 * margin;
    auto px = [&](double x) { return margin + x * side; };
    auto py = [&](double y) { return h - margin - y * side; };
    detail::Svg svg(w, h);
    const double top = std::numbers::sqrt3 / 2.0;
    svg.add("<polygon class=\"axes\" points=\"" + detail::fmt_fixed(px(0)) + "," + detail::fmt_fixed(py(0)) + " " +
            detail::fmt_fixed(px(1)) + "," + detail::fmt_fixed(py(0)) + " " + detail::fmt_fixed(px(0.5)) + "," +
            detail::fmt_fixed(py(top)) + "\" fill=\"none\" stroke=\"#000000\" stroke-width=\"1\"/>");
    svg.add(detail::text(px(0), py(0) + 16, "A"));
    svg.add(detail::text(px(1), py(0) + 16, "B"));
    svg.add(detail::text(px(0.5), py(top) - 6, "C"));
    for (const auto& s : data.at("samples")) {
        const auto& t = s.at("ternary");
        detail::sample_marker(svg, px(t[0].get<double>()), py(t[1].get<double>()), 3.0, s);
    }
    return svg.str();
}

/// One row per pure phase, a tick per set window.
inline std::string render_peak_stack_svg(const json& data) {
    const auto& phases = data.at("phases");
    const double width_windows = std::max<double>(1.0, data.at("window_count").get<double>());
    constexpr double w = 520.0, margin = 40.0, row_h = 18.0;
    const double h = 2 * margin + row_h * static_cast<double>(std::max<std::size_t>(phases.size(), 1));
    const double plot_w = w - 2 * margin;
    detail::Svg svg(w, h);
    svg.add(detail::line(margin, h - margin, w - margin, h - margin));
    svg.add(detail::line(margin, margin, margin, h - margin));
    svg.add(detail::text(w / 2, h - margin / 4, "window index"));
    for (std::size_t r = 0; r < phases.size(); ++r) {
        const auto& p = phases[r];
        const double y0 = h - margin - row_h * static_cast<double>(r + 1);
        svg.add(detail::text(margin - 4, y0 + row_h * 0.7, p.at("id").get<std::string>(), "end"));
        for (const auto& k : p.at("peaks")) {
            const double x = margin + (k.get<double>() + 0.5) / width_windows * plot_w;
            svg.add("<line class=\"tick\" x1=\"" + detail::fmt_fixed(x) + "\" y1=\"" + detail::fmt_fixed(y0 + 2) +
                    "\" x2=\"" + detail::fmt_fixed(x) + "\" y2=\"" + detail::fmt_fixed(y0 + row_h - 2) +
                    "\" stroke=\"" + p.at("color").get<std::string>() + "\" stroke-width=\"2\"/>");
        }
    }
    return svg.str();
}

struct PlotFiles {
    fs::path wafer, ternary, peaks, data;
};

/// Writes wafer.svg, ternary.svg, peaks.svg and plot_data.json into out_dir.
inline PlotFiles render_plots(const PhaseMapResult& r, const Dataset& d, const fs::path& out_dir,
                              bool show_outliers = false) {
    const json data = plot_data(r, d, show_outliers);
    PlotFiles f{out_dir / "wafer.svg", out_dir / "ternary.svg", out_dir / "peaks.svg", out_dir / "plot_data.json"};
    detail::write_file(f.wafer, render_wafer_svg(data));
    detail::write_file(f.ternary, render_ternary_svg(data));
    detail::write_file(f.peaks, render_peak_stack_svg(data));
    detail::write_file(f.data, data.dump(1) + "\n");
    return f;
}

// ---------------------------------------------------------------------------
// Synthetic configs and sweep reports
// ---------------------------------------------------------------------------

inline SynthConfig synth_config_from_json(const json& j) {
    SynthConfig c;
    try {
        c.seed = j.value("seed", std::uint64_t{0});
        c.wafer_radius_mm = j.value("wafer_radius_mm", c.wafer_radius_mm);
        c.pitch_mm = j.value("pitch_mm", c.pitch_mm);
        c.max_samples = j.value("max_samples", c.max_samples);
        c.q_min = j.value("q_min", c.q_min);
        c.q_max = j.value("q_max", c.q_max);
        c.q_points = j.value("q_points", c.q_points);
        c.boundary_band = j.value("boundary_band", c.boundary_band);
        c.background_intercept = j.value("background_intercept", c.background_intercept);
        c.background_slope = j.value("background_slope", c.background_slope);
        c.spike_rate = j.value("spike_rate", c.spike_rate);
        c.spike_amplitude = j.value("spike_amplitude", c.spike_amplitude);
        c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
        c.check_windows = j.value("check_windows", c.check_windows);
        c.check_th = j.value("check_th", c.check_th);
        for (const auto& p : j.at("phases")) {
            PlantedPhase ph;
            ph.peak_q = p.at("peak_q").get<std::vector<double>>();
            ph.amplitudes = p.at("amplitudes").get<std::vector<double>>();
            ph.width = p.value("width", ph.width);
            c.phases.push_back(std::move(ph));
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed synth config: ") + e.what());
    }
    return c;
}

inline json to_json(const SweepReport& r) {
    json j;
    j["notes"] = r.notes;
    j["rows"] = json::array();
    for (const auto& row : r.rows) {
        j["rows"].push_back({{"method", row.method},
                             {"metric", row.metric},
                             {"param", row.param},
                             {"clusters", row.clusters},
                             {"purity", row.purity},
                             {"ari", row.ari},
                             {"mixed_separate", row.mixed_separate},
                             {"dual_recall", row.dual_recall},
                             {"labels", row.labels}});
    }
    return j;
}

inline std::string sweep_to_csv(const SweepReport& r) {
    std::string out = "method,metric,param,clusters,purity,ari,mixed_separate,dual_recall\n";
    for (const auto& row : r.rows) {
        out += row.method + "," + row.metric + "," + detail::fmt_double(row.param) + "," +
               std::to_string(row.clusters) + "," + detail::fmt_double(row.purity) + "," +
               detail::fmt_double(row.ari) + "," + detail::fmt_double(row.mixed_separate) + "," +
               detail::fmt_double(row.dual_recall) + "\n";
    }
    return out;
}

inline void write_sweep_report(const SweepReport& r, const fs::path& path) {
    if (detail::lower_ext(path) == ".csv") detail::write_file(path, sweep_to_csv(r));
    else detail::write_file(path, to_json(r).dump(1) + "\n");
}

}  // namespace xrdphase
