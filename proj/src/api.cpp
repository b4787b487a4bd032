#include "hearlink/api.hpp"

#include <charconv>
#include <set>
#include <thread>

#include <httplib.h>

namespace hearlink {

using nlohmann::json;

namespace {

ApiResponse error(int status, const std::string& message) { return {status, {{"error", message}}}; }

std::optional<double> number_param(const ApiRequest& r, const std::string& key)
{
    auto it = r.params.find(key);
    if (it == r.params.end() || it->second.empty()) {
        return std::nullopt;
    }
    double v = 0.0;
    const auto& s = it->second;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw ValidationError("parameter '" + key + "' is not a number");
    }
    return v;
}

std::optional<TimeRange> range_param(const ApiRequest& r)
{
    auto from = number_param(r, "from");
    auto to = number_param(r, "to");
    if (!from && !to) {
        return std::nullopt;
    }
    TimeRange range;
    if (from) {
        range.from = *from;
    }
    if (to) {
        range.to = *to;
    }
    return range;
}

std::set<std::string> known_subjects(const Store& store)
{
    std::set<std::string> out;
    for (const auto& c : collection_names()) {
        for (auto& s : store.subjects(c)) {
            out.insert(std::move(s));
        }
    }
    return out;
}

/// The requested subject, or the only stored one. Throws NotFound / ValidationError.
std::string resolve_subject(const Store& store, const ApiRequest& r)
{
    const auto subjects = known_subjects(store);
    if (auto it = r.params.find("subject"); it != r.params.end() && !it->second.empty()) {
        if (subjects.count(it->second) == 0) {
            throw NotFound("unknown subject '" + it->second + "'");
        }
        return it->second;
    }
    if (subjects.empty()) {
        throw NotFound("no data");
    }
    if (subjects.size() > 1) {
        throw ValidationError("several subjects stored; pass ?subject=");
    }
    return *subjects.begin();
}

json indicator_json(const MetricRecord& r)
{
    const auto& d = r.detail;
    return {{"indicator", std::stoi(r.metric_name.substr(std::string("indicator_").size()))},
            {"score", r.value ? json(*r.value) : json(nullptr)},
            {"smoothed", d.value("smoothed", json(nullptr))},
            {"coverage", d.value("coverage", 0.0)},
            {"active", d.value("active", false)},
            {"theta", d.value("theta", 1.0)},
            {"beta", d.value("beta", 0.0)}};
}

}  // namespace

// --- registry ---------------------------------------------------------------------------

SessionRegistry::SessionRegistry(Store& store, MappingSpec spec, double origin_epoch, std::string writer_id)
    : store_(store), spec_(std::move(spec)), origin_epoch_(origin_epoch), writer_id_(std::move(writer_id))
{
}

Session* SessionRegistry::get(const std::string& subject)
{
    std::lock_guard lock(mutex_);
    if (auto it = sessions_.find(subject); it != sessions_.end()) {
        return it->second.get();
    }
    const auto subjects = store_.subjects(collections::aggregated_metrics);
    if (std::find(subjects.begin(), subjects.end(), subject) == subjects.end()) {
        return nullptr;
    }
    SessionOptions options;
    options.subject_id = subject;
    options.origin_epoch = origin_epoch_;
    options.writer_id = writer_id_;
    auto session = Session::restore(store_, spec_, options);
    auto* raw = session.get();
    sessions_.emplace(subject, std::move(session));
    return raw;
}

// --- service -----------------------------------------------------------------------------

ApiService::ApiService(const Store& store, SessionLookup sessions) : store_(store), sessions_(std::move(sessions)) {}

ApiResponse ApiService::handle(const ApiRequest& request) const
{
    try {
        const auto& p = request.path;
        if (p == "/phq9") {
            if (request.method != "POST") {
                return error(405, "use POST");
            }
            return phq9(request);
        }
        if (request.method != "GET") {
            return error(405, "read-only endpoint");
        }
        if (p == "/subjects") {
            const auto subjects = known_subjects(store_);
            return {200, {{"subjects", json(std::vector<std::string>(subjects.begin(), subjects.end()))}}};
        }
        if (p == "/metrics/raw") {
            return records(collections::raw_metrics, request);
        }
        if (p == "/metrics/aggregated") {
            return records(collections::aggregated_metrics, request);
        }
        if (p == "/metrics/contextual") {
            return records(collections::contextual_metrics, request);
        }
        if (p == "/indicators") {
            return indicators(request);
        }
        if (p == "/support") {
            return support(request);
        }
        if (p == "/baselines") {
            return baselines(request);
        }
        if (p.rfind("/trace/", 0) == 0) {
            return trace(p.substr(7), request);
        }
        return error(404, "no such endpoint " + p);
    } catch (const NotFound& e) {
        return error(404, e.what());
    } catch (const ValidationError& e) {
        return error(400, e.what());
    } catch (const Conflict& e) {
        return error(409, e.what());
    } catch (const std::exception& e) {
        return error(500, e.what());
    }
}

ApiResponse ApiService::records(const std::string& collection, const ApiRequest& request) const
{
    const auto subject = resolve_subject(store_, request);
    std::optional<std::string> metric;
    if (auto it = request.params.find("metric"); it != request.params.end() && !it->second.empty()) {
        metric = it->second;
    }
    auto found = store_.query(collection, subject, metric, range_param(request));
    const auto limit = number_param(request, "limit");
    std::size_t first = 0;
    if (limit && *limit >= 0 && found.size() > static_cast<std::size_t>(*limit)) {
        first = found.size() - static_cast<std::size_t>(*limit);  // newest records
    }
    json out = json::array();
    for (std::size_t i = first; i < found.size(); ++i) {
        out.push_back(found[i].to_json());
    }
    return {200, {{"subject", subject}, {"collection", collection}, {"count", out.size()}, {"records", out}}};
}

ApiResponse ApiService::indicators(const ApiRequest& request) const
{
    const auto subject = resolve_subject(store_, request);
    const auto range = range_param(request);
    std::map<double, json> windows;
    for (const auto& w : load_contextual(store_, subject)) {
        if (range && (w.window_start < range->from || w.window_start >= range->to)) {
            continue;
        }
        windows[w.window_start] = {{"window_start", w.window_start},
                                   {"index", w.index},
                                   {"status", std::string(to_string(w.status))},
                                   {"indicators", json::array()}};
    }
    for (const auto& r : store_.query(collections::analyzed_metrics, subject, std::nullopt, range)) {
        auto it = windows.find(r.window_start);
        if (it == windows.end()) {
            continue;
        }
        if (r.metric_name.rfind("indicator_", 0) == 0) {
            it->second["indicators"].push_back(indicator_json(r));
        } else if (r.metric_name == "mdd_support") {
            it->second["support"] = r.value.value_or(0.0) != 0.0;
            it->second["active_count"] = r.detail.value("active_count", 0);
        }
    }
    json out = json::array();
    for (auto& [start, w] : windows) {
        out.push_back(std::move(w));
    }
    return {200, {{"subject", subject}, {"windows", out}}};
}

ApiResponse ApiService::support(const ApiRequest& request) const
{
    const auto subject = resolve_subject(store_, request);
    json out = json::array();
    for (const auto& r : store_.query(collections::analyzed_metrics, subject, std::string("mdd_support"),
                                      range_param(request))) {
        out.push_back({{"window_start", r.window_start},
                       {"time", r.time},
                       {"index", r.detail.value("index", std::int64_t{0})},
                       {"support", r.value.value_or(0.0) != 0.0},
                       {"active_count", r.detail.value("active_count", 0)},
                       {"flags", r.detail.value("flags", std::string{})}});
    }
    return {200, {{"subject", subject}, {"windows", out}}};
}

ApiResponse ApiService::baselines(const ApiRequest& request) const
{
    const auto subject = resolve_subject(store_, request);
    const auto snapshots = store_.query(collections::baselines, subject);
    std::set<double> versions;
    for (const auto& r : snapshots) {
        versions.insert(r.window_start);
    }
    json metrics = json::object();
    json at = nullptr;
    if (!snapshots.empty()) {
        const double latest = *versions.rbegin();
        at = latest;
        for (const auto& r : snapshots) {
            if (r.window_start == latest) {
                metrics[r.metric_name] = {{"mu", r.detail.value("mu", 0.0)},
                                          {"sigma", r.detail.value("sigma", 0.0)},
                                          {"sample_count", r.detail.value("sample_count", std::int64_t{0})},
                                          {"last_update", r.detail.value("last_update", 0.0)}};
            }
        }
    }
    return {200,
            {{"subject", subject},
             {"status", snapshots.empty() ? "warmup" : "ready"},
             {"at", at},
             {"versions", versions.size()},
             {"metrics", metrics}}};
}

ApiResponse ApiService::trace(const std::string& window, const ApiRequest& request) const
{
    std::int64_t index = 0;
    auto [ptr, ec] = std::from_chars(window.data(), window.data() + window.size(), index);
    if (window.empty() || ec != std::errc{} || ptr != window.data() + window.size()) {
        throw ValidationError("window must be an integer index");
    }
    const auto subject = resolve_subject(store_, request);
    for (const auto& w : load_contextual(store_, subject)) {
        if (w.index != index) {
            continue;
        }
        json contextual = json::array();
        for (const auto& c : w.metrics) {
            contextual.push_back({{"metric", c.metric},
                                  {"raw", c.raw ? json(*c.raw) : json(nullptr)},
                                  {"mu", c.mean ? json(*c.mean) : json(nullptr)},
                                  {"sigma", c.sigma ? json(*c.sigma) : json(nullptr)},
                                  {"z", c.z ? json(*c.z) : json(nullptr)},
                                  {"z_tilde", c.z_tilde ? json(*c.z_tilde) : json(nullptr)},
                                  {"clipped", c.clipped},
                                  {"reason", c.absent_reason}});
        }
        json out = {{"subject", subject},
                    {"index", w.index},
                    {"window_start", w.window_start},
                    {"status", std::string(to_string(w.status))},
                    {"contextual", contextual},
                    {"indicators", json::array()}};
        if (w.status == WindowStatus::Warmup) {
            return {200, out};
        }
        for (const auto& r : store_.query(collections::analyzed_metrics, subject, std::nullopt,
                                          TimeRange{w.window_start, std::nextafter(w.window_start, 1e300)})) {
            if (r.metric_name.rfind("indicator_", 0) == 0) {
                auto entry = indicator_json(r);
                entry["trace"] = r.detail.value("trace", json::array());
                out["indicators"].push_back(std::move(entry));
            } else if (r.metric_name == "mdd_support") {
                out["support"] = r.value.value_or(0.0) != 0.0;
            }
        }
        return {200, out};
    }
    throw NotFound("no window " + window + " for subject '" + subject + "'");
}

ApiResponse ApiService::phq9(const ApiRequest& request) const
{
    json body;
    try {
        body = json::parse(request.body);
    } catch (const json::parse_error& e) {
        return error(400, std::string("body is not JSON: ") + e.what());
    }
    const auto response = Phq9Response::from_json(body);
    std::string subject;
    if (auto it = request.params.find("subject"); it != request.params.end() && !it->second.empty()) {
        subject = it->second;
    } else if (body.contains("subject_id") && body["subject_id"].is_string()) {
        subject = body["subject_id"].get<std::string>();
    } else {
        subject = resolve_subject(store_, request);
    }
    Session* session = sessions_ ? sessions_(subject) : nullptr;
    if (session == nullptr) {
        throw NotFound("unknown subject '" + subject + "'");
    }
    const auto outcome = session->submit_phq9(response);
    return {200,
            {{"subject", subject},
             {"timestamp", outcome.response.timestamp},
             {"total", outcome.response.total()},
             {"baseline_changed", outcome.baseline_changed},
             {"windows_absorbed", outcome.windows_absorbed},
             {"updated_metrics", outcome.updated_metrics}}};
}

// --- http ---------------------------------------------------------------------------------

struct ApiServer::Impl {
    const ApiService& service;
    httplib::Server server;
    std::thread thread;

    explicit Impl(const ApiService& s) : service(s)
    {
        auto handler = [this](const httplib::Request& req, httplib::Response& res) {
            ApiRequest r;
            r.method = req.method;
            r.path = req.path;
            r.body = req.body;
            for (const auto& [k, v] : req.params) {
                r.params[k] = v;
            }
            const auto out = service.handle(r);
            res.status = out.status;
            res.set_header("Access-Control-Allow-Origin", "*");
            res.set_content(out.body.dump(), "application/json");
        };
        server.Get(R"(/.*)", handler);
        server.Post(R"(/.*)", handler);
        server.Put(R"(/.*)", handler);
        server.Delete(R"(/.*)", handler);
        server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
            res.set_header("Access-Control-Allow-Origin", "*");
            res.set_header("Access-Control-Allow-Methods", "GET, POST");
            res.set_header("Access-Control-Allow-Headers", "Content-Type");
            res.status = 204;
        });
    }
};

ApiServer::ApiServer(const ApiService& service) : impl_(std::make_unique<Impl>(service)) {}

ApiServer::~ApiServer() { stop(); }

int ApiServer::start(const std::string& host, int port)
{
    int bound = port;
    if (port == 0) {
        bound = impl_->server.bind_to_any_port(host);
    } else if (!impl_->server.bind_to_port(host, port)) {
        bound = -1;
    }
    if (bound < 0) {
        throw IoError("cannot bind " + host + ":" + std::to_string(port));
    }
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return bound;
}

void ApiServer::run(const std::string& host, int port)
{
    if (!impl_->server.listen(host, port)) {
        throw IoError("cannot serve on " + host + ":" + std::to_string(port));
    }
}

void ApiServer::stop()
{
    if (!impl_) {
        return;
    }
    impl_->server.stop();
    if (impl_->thread.joinable()) {
        impl_->thread.join();
    }
}

}  // namespace hearlink
