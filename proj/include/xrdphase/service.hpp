#pragma once
// Single-session HTTP service for interactive phase merging.
//
// Routes:
//   GET  /api/session        params + phase summaries
//   GET  /api/plot-data      plot document (see io.hpp plot_data)
//   POST /api/merge          {"ids": ["P0", "P3"]}
//   POST /api/undo
//   POST /api/recompute      {"th", "ot", "intensity_threshold", "windows"} -> {"job": id}
//   GET  /api/job/{id}       {"id", "status": running|done|failed, ...}
//   GET  /api/export         result JSON

#include <xrdphase/core.hpp>
#include <xrdphase/io.hpp>
#include <xrdphase/merge.hpp>
#include <xrdphase/phasemap.hpp>
#include <xrdphase/signal.hpp>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <condition_variable>
#include <functional>
#include <optional>
#include <map>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

namespace xrdphase {

/// A mutation arrived while a recompute job is running.
class ConflictError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NotFoundError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RecomputeRequest {
    std::optional<std::size_t> th;
    std::optional<std::size_t> ot;
    std::optional<double> intensity_threshold;  // nullopt + auto_threshold=false keeps the current value
    bool auto_threshold = false;
    std::optional<std::size_t> windows;
};

inline RecomputeRequest recompute_request_from_json(const json& j) {
    RecomputeRequest r;
    try {
        if (j.contains("th")) r.th = j["th"].get<std::size_t>();
        if (j.contains("ot")) r.ot = j["ot"].get<std::size_t>();
        if (j.contains("windows")) r.windows = j["windows"].get<std::size_t>();
        if (j.contains("intensity_threshold")) {
            const auto& t = j["intensity_threshold"];
            if (t.is_string() && t.get<std::string>() == "auto") r.auto_threshold = true;
            else r.intensity_threshold = t.get<double>();
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("bad recompute parameters: ") + e.what());
    }
    return r;
}

/// Re-binarizes the dataset and reruns the incremental mapping.
inline PhaseMapResult recompute_result(const Dataset& dataset, const ResultParams& current,
                                       const RecomputeRequest& req) {
    BinarizationParams bin = current.binarization.value_or(BinarizationParams{});
    if (!current.binarization && current.window_count > 0) bin.window_count = current.window_count;
    if (req.windows) bin.window_count = *req.windows;
    std::string source = current.threshold_source;
    if (req.intensity_threshold) {
        if (*req.intensity_threshold < 0.0) throw ValidationError("intensity_threshold must be >= 0");
        bin.intensity_threshold = *req.intensity_threshold;
        source = "explicit";
    }
    validate(bin, dataset.grid.size());
    if (req.auto_threshold) {
        bin.intensity_threshold = estimate_threshold(dataset.grid, dataset.samples, bin);
        source = "auto";
    }
    PhaseMapParams mp = current.mapping;
    if (req.th) mp.th = *req.th;
    if (req.ot) mp.ot = *req.ot;
    if (mp.ot < 1) throw ValidationError("ot must be at least 1");
    if (mp.th >= bin.window_count) throw ValidationError("th must be smaller than the window count");

    const auto patterns = binarize_dataset(dataset.grid, dataset.samples, bin);
    std::vector<SamplePattern> input;
    input.reserve(patterns.size());
    for (std::size_t i = 0; i < patterns.size(); ++i) input.push_back({dataset.samples[i].id, patterns[i]});
    PhaseMapResult r = run_incremental_phase_mapping(input, mp);
    r.params.binarization = bin;
    r.params.window_count = bin.window_count;
    r.params.threshold_source = source;
    r.params.seed = current.seed;
    return r;
}

/// Session state: one dataset, one result, a linear lineage.
class Session {
public:
    using Clock = std::function<std::string()>;

    Session(Dataset dataset, PhaseMapResult result, Clock clock = utc_timestamp_now)
        : dataset_(std::move(dataset)), result_(std::move(result)), clock_(std::move(clock)) {}

    ~Session() {
        std::vector<std::thread> workers;
        {
            std::lock_guard lock(jobs_mutex_);
            workers.swap(workers_);
        }
        for (auto& w : workers)
            if (w.joinable()) w.join();
    }

    Session(const Session&) = delete;
    Session& operator=(const Session&) = delete;

    [[nodiscard]] json session_json() const {
        std::shared_lock lock(state_mutex_);
        return summary(result_);
    }

    [[nodiscard]] json plot_data_json(bool show_outliers = false) const {
        std::shared_lock lock(state_mutex_);
        return plot_data(result_, dataset_, show_outliers);
    }

    [[nodiscard]] json export_json() const {
        std::shared_lock lock(state_mutex_);
        return to_json(result_);
    }

    [[nodiscard]] PhaseMapResult result() const {
        std::shared_lock lock(state_mutex_);
        return result_;
    }

    json merge(const std::vector<PhaseId>& ids, const std::string& actor = "ui") {
        std::unique_lock lock(state_mutex_);
        reject_if_busy();
        result_ = manual_merge(result_, ids, MergeContext{actor, clock_()});
        return summary(result_);
    }

    json undo() {
        std::unique_lock lock(state_mutex_);
        reject_if_busy();
        result_ = xrdphase::undo(result_);
        return summary(result_);
    }

    /// Starts a background recompute and returns its job id.
    std::string start_recompute(const RecomputeRequest& req) {
        ResultParams params;
        {
            std::unique_lock lock(state_mutex_);
            reject_if_busy();
            params = result_.params;
            // Validate synchronously so bad input is a 400, not a failed job.
            BinarizationParams bin = params.binarization.value_or(BinarizationParams{});
            if (!params.binarization && params.window_count > 0) bin.window_count = params.window_count;
            if (req.windows) bin.window_count = *req.windows;
            if (req.intensity_threshold && *req.intensity_threshold < 0.0)
                throw ValidationError("intensity_threshold must be >= 0");
            if (req.ot && *req.ot < 1) throw ValidationError("ot must be at least 1");
            try {
                validate(bin, dataset_.grid.size());
            } catch (const ParameterError& e) {
                throw ValidationError(e.what());
            }
            if (req.th.value_or(params.mapping.th) >= bin.window_count)
                throw ValidationError("th must be smaller than the window count");
            busy_ = true;
        }
        std::lock_guard jobs_lock(jobs_mutex_);
        const std::string id = "job" + std::to_string(++job_counter_);
        jobs_[id] = json{{"id", id}, {"status", "running"}};
        workers_.emplace_back([this, id, req, params] {
            json status{{"id", id}};
            std::optional<PhaseMapResult> next;
            try {
                next = recompute_result(dataset_, params, req);
                status["status"] = "done";
                status["phase_count"] = next->catalog.size();
            } catch (const std::exception& e) {
                status["status"] = "failed";
                status["error"] = e.what();
            }
            {
                std::unique_lock lock(state_mutex_);
                if (next) result_ = std::move(*next);
                busy_ = false;
                std::lock_guard jl(jobs_mutex_);
                jobs_[id] = status;
            }
            job_done_.notify_all();
        });
        return id;
    }

    [[nodiscard]] json job_status(const std::string& id) const {
        std::lock_guard lock(jobs_mutex_);
        auto it = jobs_.find(id);
        if (it == jobs_.end()) throw NotFoundError("unknown job '" + id + "'");
        return it->second;
    }

    /// Blocks until no recompute is running.
    void wait_idle() {
        std::unique_lock lock(state_mutex_);
        job_done_.wait(lock, [&] { return !busy_; });
    }

private:
    void reject_if_busy() const {
        if (busy_) throw ConflictError("a recompute job is running");
    }

    static json summary(const PhaseMapResult& r) {
        json phases = json::array();
        std::map<PhaseId, std::size_t> members;
        std::size_t outliers = 0;
        for (const auto& [id, set] : r.memberships.entries()) {
            if (set.empty()) ++outliers;
            for (PhaseId p : set) ++members[p];
        }
        for (const auto& p : r.catalog.phases()) {
            phases.push_back({{"id", p.id.str()},
                              {"peak_count", p.representative.peak_count()},
                              {"member_count", members[p.id]},
                              {"pure_members", p.members.size()},
                              {"peaks", peak_locations(p.representative)}});
        }
        json lineage = json::array();
        for (const auto& e : r.lineage) lineage.push_back(to_json(e));
        return {{"params", to_json(r.params)},
                {"phases", phases},
                {"sample_count", r.memberships.size()},
                {"outlier_count", outliers},
                {"lineage", lineage}};
    }

    Dataset dataset_;
    PhaseMapResult result_;
    Clock clock_;
    mutable std::shared_mutex state_mutex_;
    std::condition_variable_any job_done_;
    bool busy_ = false;

    mutable std::mutex jobs_mutex_;
    std::map<std::string, json> jobs_;
    std::vector<std::thread> workers_;
    std::size_t job_counter_ = 0;
};

namespace detail {

inline void send_json(httplib::Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

template <class F>
void guarded(httplib::Response& res, F&& f) {
    try {
        f();
    } catch (const ConflictError& e) {
        send_json(res, {{"error", e.what()}}, 409);
    } catch (const NotFoundError& e) {
        send_json(res, {{"error", e.what()}}, 404);
    } catch (const ValidationError& e) {
        send_json(res, {{"error", e.what()}}, 400);
    } catch (const ParameterError& e) {
        send_json(res, {{"error", e.what()}}, 400);
    } catch (const json::exception& e) {
        send_json(res, {{"error", std::string("bad request body: ") + e.what()}}, 400);
    } catch (const std::exception& e) {
        send_json(res, {{"error", e.what()}}, 500);
    }
}

inline json body_json(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    return json::parse(req.body);
}

}  // namespace detail

/// Registers the API routes (and optionally a static UI directory).
inline void install_routes(httplib::Server& server, Session& session, const std::string& static_dir = {}) {
    using detail::guarded;
    using detail::send_json;
    server.Get("/api/session", [&](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] { send_json(res, session.session_json()); });
    });
    server.Get("/api/plot-data", [&](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const bool show = req.has_param("show_outliers") && req.get_param_value("show_outliers") != "0";
            send_json(res, session.plot_data_json(show));
        });
    });
    server.Post("/api/merge", [&](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const json body = detail::body_json(req);
            if (!body.contains("ids") || !body["ids"].is_array()) throw ValidationError("body needs an 'ids' array");
            std::vector<PhaseId> ids;
            for (const auto& s : body["ids"]) ids.push_back(PhaseId::parse(s.get<std::string>()));
            send_json(res, session.merge(ids));
        });
    });
    server.Post("/api/undo", [&](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] { send_json(res, session.undo()); });
    });
    server.Post("/api/recompute", [&](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto id = session.start_recompute(recompute_request_from_json(detail::body_json(req)));
            send_json(res, {{"job", id}}, 202);
        });
    });
    server.Get(R"(/api/job/([A-Za-z0-9_-]+))", [&](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, session.job_status(req.matches[1])); });
    });
    server.Get("/api/export", [&](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] {
            res.set_header("Content-Disposition", "attachment; filename=\"result.json\"");
            res.status = 200;
            res.set_content(session.export_json().dump(1) + "\n", "application/json");
        });
    });
    if (!static_dir.empty()) server.set_mount_point("/", static_dir);
}

}  // namespace xrdphase
