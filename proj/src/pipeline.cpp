#include "hearlink/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <map>
#include <thread>

#include "hearlink/bounded_queue.hpp"

namespace hearlink {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> json_optional(const json& j, const char* key)
{
    if (!j.contains(key) || j.at(key).is_null()) {
        return std::nullopt;
    }
    return j.at(key).get<double>();
}

std::string indicator_metric(int i) { return "indicator_" + std::to_string(i); }

constexpr const char* kWindowStatusMetric = "window_status";
constexpr const char* kWindowQualityMetric = "voiced_fraction";
constexpr const char* kSupportMetric = "mdd_support";

}  // namespace

// --- front end -------------------------------------------------------------------------

FrontEnd::FrontEnd(int sample_rate, EnergyVadOptions vad)
    : sample_rate_(sample_rate),
      framer_(sample_rate),
      vad_(std::make_unique<EnergyVad>(vad)),
      gate_(*vad_),
      extractor_(sample_rate),
      assembler_(kWindowSeconds, sample_rate)
{
}

double FrontEnd::elapsed() const { return static_cast<double>(framer_.samples_seen()) / sample_rate_; }

std::vector<WindowBundle> FrontEnd::bundle(std::vector<HLDWindow> windows)
{
    std::vector<WindowBundle> out;
    for (auto& w : windows) {
        const double end = w.window_start + w.window_len;
        auto split = std::find_if(voiced_.begin(), voiced_.end(), [&](const FrameLLD& l) { return l.time >= end - 1e-9; });
        WindowBundle b;
        b.window = std::move(w);
        b.llds.assign(std::make_move_iterator(voiced_.begin()), std::make_move_iterator(split));
        voiced_.erase(voiced_.begin(), split);
        // drop descriptors that precede this window (partial tails are never emitted)
        std::erase_if(b.llds, [&](const FrameLLD& l) { return l.time < b.window.window_start - 1e-9; });
        out.push_back(std::move(b));
    }
    return out;
}

std::vector<WindowBundle> FrontEnd::feed(std::vector<Frame> frames)
{
    std::vector<HLDWindow> closed;
    for (auto& frame : frames) {
        auto t0 = Clock::now();
        auto lld = extractor_.extract(frame);
        times_.extract += seconds_since(t0);
        if (lld.voiced) {
            voiced_.push_back(lld);
        }
        t0 = Clock::now();
        auto windows = assembler_.push(std::move(frame), std::move(lld));
        times_.aggregate += seconds_since(t0);
        for (auto& w : windows) {
            closed.push_back(std::move(w));
        }
    }
    return bundle(std::move(closed));
}

std::vector<WindowBundle> FrontEnd::push(const Signal& chunk)
{
    auto t0 = Clock::now();
    std::vector<Frame> released;
    for (auto& frame : framer_.push(chunk)) {
        for (auto& f : gate_.push(std::move(frame))) {
            released.push_back(std::move(f));
        }
    }
    times_.ingest += seconds_since(t0);
    return feed(std::move(released));
}

std::vector<WindowBundle> FrontEnd::finish()
{
    auto t0 = Clock::now();
    auto released = gate_.finish();
    times_.ingest += seconds_since(t0);
    auto out = feed(std::move(released));
    t0 = Clock::now();
    auto tail = assembler_.finish(elapsed());
    times_.aggregate += seconds_since(t0);
    for (auto& b : bundle(std::move(tail))) {
        out.push_back(std::move(b));
    }
    voiced_.clear();
    return out;
}

// --- record layout -----------------------------------------------------------------------

std::vector<MetricRecord> raw_records(const std::string& subject, std::span<const FrameLLD> llds, double origin_epoch)
{
    std::vector<MetricRecord> out;
    out.reserve(llds.size());
    for (const auto& l : llds) {
        if (!l.voiced) {
            continue;
        }
        MetricRecord r;
        r.collection = collections::raw_metrics;
        r.subject_id = subject;
        r.metric_name = "f0";
        r.value = l.f0;
        r.window_start = l.time;
        r.time = iso8601(origin_epoch + l.time);
        r.quality_ok = l.quality_ok;
        r.provenance = "extract";
        r.detail = {{"frame", l.frame_index},
                    {"intensity_db", l.intensity_db},
                    {"spectral_flux", l.spectral_flux},
                    {"hnr_db", optional_json(l.hnr_db)}};
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<MetricRecord> aggregated_records(const std::string& subject, const HLDWindow& window, double origin_epoch)
{
    std::vector<MetricRecord> out;
    const auto base = [&](const std::string& metric, std::optional<double> value) {
        MetricRecord r;
        r.collection = collections::aggregated_metrics;
        r.subject_id = subject;
        r.metric_name = metric;
        r.value = value;
        r.window_start = window.window_start;
        r.time = iso8601(origin_epoch + window.window_start);
        r.quality_ok = window.quality_ok;
        r.provenance = "aggregate";
        return r;
    };
    auto quality = base(kWindowQualityMetric, window.voiced_fraction);
    quality.detail = {{"index", window.index}, {"window_len", window.window_len}};
    out.push_back(std::move(quality));
    for (const auto& [metric, value] : window.metrics) {
        out.push_back(base(metric, value));
    }
    return out;
}

std::vector<MetricRecord> contextual_records(const std::string& subject, const WindowAnalysis& analysis,
                                             double origin_epoch)
{
    std::vector<MetricRecord> out;
    const auto base = [&](const std::string& metric) {
        MetricRecord r;
        r.collection = collections::contextual_metrics;
        r.subject_id = subject;
        r.metric_name = metric;
        r.window_start = analysis.window_start;
        r.time = iso8601(origin_epoch + analysis.window_start);
        r.quality_ok = analysis.status != WindowStatus::LowQuality;
        r.provenance = "linkage";
        return r;
    };
    auto status = base(kWindowStatusMetric);
    status.value = static_cast<double>(analysis.index);
    status.detail = {{"status", std::string(to_string(analysis.status))}, {"index", analysis.index}};
    out.push_back(std::move(status));
    for (const auto& c : analysis.contextual) {
        auto r = base(c.metric);
        r.value = c.z_tilde;
        r.detail = {{"raw", optional_json(c.raw)},
                    {"mu", optional_json(c.mean)},
                    {"sigma", optional_json(c.sigma)},
                    {"z", optional_json(c.z)},
                    {"clipped", c.clipped}};
        if (!c.absent_reason.empty()) {
            r.detail["reason"] = c.absent_reason;
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<MetricRecord> analyzed_records(const std::string& subject, const WindowAnalysis& analysis,
                                           double origin_epoch, const std::string& provenance)
{
    std::vector<MetricRecord> out;
    if (analysis.status == WindowStatus::Warmup) {
        return out;
    }
    const auto base = [&](const std::string& metric) {
        MetricRecord r;
        r.collection = collections::analyzed_metrics;
        r.subject_id = subject;
        r.metric_name = metric;
        r.window_start = analysis.window_start;
        r.time = iso8601(origin_epoch + analysis.window_start);
        r.quality_ok = analysis.status == WindowStatus::Scored;
        r.provenance = provenance;
        return r;
    };
    for (const auto& s : analysis.indicators) {
        auto r = base(indicator_metric(s.indicator));
        r.value = s.score;
        json trace = json::array();
        for (const auto& c : s.trace) {
            trace.push_back({{"feature", c.feature},
                             {"biomarker", c.biomarker},
                             {"direction", std::string(to_string(c.direction))},
                             {"relationship", std::string(to_string(c.relationship))},
                             {"weight", c.weight},
                             {"available", c.available},
                             {"z_tilde", c.available ? json(c.z_tilde) : json(nullptr)},
                             {"psi", c.available ? json(c.psi) : json(nullptr)}});
        }
        r.detail = {{"index", analysis.index},
                    {"smoothed", optional_json(s.smoothed)},
                    {"coverage", s.coverage},
                    {"active", s.active},
                    {"theta", s.theta},
                    {"beta", s.beta},
                    {"nonlinear_as_gradual", s.nonlinear_as_gradual},
                    {"trace", std::move(trace)}};
        out.push_back(std::move(r));
    }
    auto support = base(kSupportMetric);
    support.value = analysis.support ? 1.0 : 0.0;
    std::string flags;
    for (const auto& s : analysis.indicators) {
        flags += s.active ? '1' : '0';
    }
    support.detail = {{"index", analysis.index}, {"active_count", analysis.active_count}, {"flags", flags}};
    out.push_back(std::move(support));
    return out;
}

std::vector<StoredContext> load_contextual(const Store& store, const std::string& subject)
{
    std::vector<StoredContext> out;
    std::map<double, std::size_t> by_start;
    for (const auto& r : store.query(collections::contextual_metrics, subject)) {
        auto [it, fresh] = by_start.try_emplace(r.window_start, out.size());
        if (fresh) {
            out.push_back({});
            out.back().window_start = r.window_start;
        }
        auto& w = out[it->second];
        try {
            if (r.metric_name == kWindowStatusMetric) {
                w.index = r.detail.at("index").get<std::int64_t>();
                w.status = parse_window_status(r.detail.at("status").get<std::string>());
                continue;
            }
            ContextualMetric c;
            c.metric = r.metric_name;
            c.z_tilde = r.value;
            c.raw = json_optional(r.detail, "raw");
            c.mean = json_optional(r.detail, "mu");
            c.sigma = json_optional(r.detail, "sigma");
            c.z = json_optional(r.detail, "z");
            c.clipped = r.detail.value("clipped", false);
            c.absent_reason = r.detail.value("reason", std::string{});
            w.metrics.push_back(std::move(c));
        } catch (const json::exception& e) {
            throw ValidationError("malformed contextual record " + r.metric_name + ": " + e.what());
        }
    }
    return out;
}

std::vector<HLDWindow> load_windows(const Store& store, const std::string& subject)
{
    std::vector<HLDWindow> out;
    std::map<double, std::size_t> by_start;
    for (const auto& r : store.query(collections::aggregated_metrics, subject)) {
        auto [it, fresh] = by_start.try_emplace(r.window_start, out.size());
        if (fresh) {
            out.push_back({});
            out.back().window_start = r.window_start;
        }
        auto& w = out[it->second];
        if (r.metric_name == kWindowQualityMetric) {
            w.voiced_fraction = r.value.value_or(0.0);
            w.quality_ok = r.quality_ok;
            w.index = r.detail.value("index", std::int64_t{0});
            w.window_len = r.detail.value("window_len", kWindowSeconds);
        } else if (r.value) {
            w.metrics[r.metric_name] = *r.value;
        }
    }
    return out;
}

// --- session ------------------------------------------------------------------------------

Session::Session(Store& store, MappingSpec spec, SessionOptions options)
    : store_(store), options_(std::move(options)), engine_(std::move(spec))
{
    raw_ = store_.register_writer(collections::raw_metrics, options_.writer_id);
    aggregated_ = store_.register_writer(collections::aggregated_metrics, options_.writer_id);
    contextual_ = store_.register_writer(collections::contextual_metrics, options_.writer_id);
    analyzed_ = store_.register_writer(collections::analyzed_metrics, options_.writer_id);
    baselines_ = store_.register_writer(collections::baselines, options_.writer_id);
    phq9_ = store_.register_writer(collections::phq9_responses, options_.writer_id);
}

std::unique_ptr<Session> Session::restore(Store& store, MappingSpec spec, SessionOptions options)
{
    auto session = std::make_unique<Session>(store, std::move(spec), std::move(options));
    const auto& subject = session->options_.subject_id;
    const auto windows = load_windows(store, subject);
    session->windows_ = windows.size();
    if (!windows.empty()) {
        session->last_window_end_ = windows.back().window_start + windows.back().window_len;
    }
    if (auto latest = latest_baseline(store, subject)) {
        session->engine_.set_baseline(latest->second);
        session->engine_.mark_warmed_up();
        // Windows after the newest snapshot have not been absorbed yet.
        std::vector<HLDWindow> recent;
        for (const auto& w : windows) {
            if (w.quality_ok && w.window_start >= latest->first - 1e-9) {
                recent.push_back(w);
            }
        }
        session->engine_.set_recent_windows(std::move(recent));
    }
    return session;
}

WindowAnalysis Session::link(const HLDWindow& window)
{
    std::lock_guard lock(mutex_);
    const bool was_warm = engine_.warmed_up();
    auto analysis = engine_.process_window(window);
    ++windows_;
    last_window_end_ = window.window_start + window.window_len;
    if (!was_warm && engine_.warmed_up()) {
        snapshot_baselines(store_, baselines_, options_.subject_id, engine_.baseline(), *last_window_end_,
                           options_.origin_epoch);
    }
    return analysis;
}

void Session::persist(const WindowBundle& bundle, const WindowAnalysis& analysis)
{
    const auto& subject = options_.subject_id;
    if (options_.persist_raw) {
        auto raw = raw_records(subject, bundle.llds, options_.origin_epoch);
        if (!raw.empty()) {
            store_.append_batch(raw_, std::move(raw));
        }
    }
    store_.append_batch(aggregated_, aggregated_records(subject, bundle.window, options_.origin_epoch));
    store_.append_batch(contextual_, contextual_records(subject, analysis, options_.origin_epoch));
    auto analyzed = analyzed_records(subject, analysis, options_.origin_epoch, "linkage");
    if (!analyzed.empty()) {
        store_.append_batch(analyzed_, std::move(analyzed));
    }
}

WindowAnalysis Session::process(const WindowBundle& bundle)
{
    auto analysis = link(bundle.window);
    persist(bundle, analysis);
    return analysis;
}

Phq9Outcome Session::submit_phq9(Phq9Response response)
{
    std::lock_guard lock(mutex_);
    if (!engine_.warmed_up()) {
        throw Conflict("baseline warmup in progress (" + std::to_string(engine_.warmup_seen()) + " of " +
                       std::to_string(engine_.spec().warmup_windows) + " windows)");
    }
    if (engine_.recent_windows().empty() || !last_window_end_) {
        throw Conflict("no new quality windows since the previous response");
    }
    response.timestamp = *last_window_end_;
    Phq9Outcome outcome;
    outcome.windows_absorbed = engine_.recent_windows().size();
    const auto before = engine_.baseline();
    outcome.baseline_changed = engine_.apply_phq9(response);
    for (const auto& [metric, b] : engine_.baseline().metrics) {
        auto it = before.metrics.find(metric);
        if (it == before.metrics.end() || !(it->second == b)) {
            outcome.updated_metrics.push_back(metric);
        }
    }
    store_phq9(store_, phq9_, options_.subject_id, response, options_.origin_epoch);
    snapshot_baselines(store_, baselines_, options_.subject_id, engine_.baseline(), response.timestamp,
                       options_.origin_epoch);
    outcome.response = response;
    return outcome;
}

std::size_t Session::windows_processed() const
{
    std::lock_guard lock(mutex_);
    return windows_;
}

std::optional<double> Session::last_window_end() const
{
    std::lock_guard lock(mutex_);
    return last_window_end_;
}

bool Session::warmed_up() const
{
    std::lock_guard lock(mutex_);
    return engine_.warmed_up();
}

// --- continuous side ---------------------------------------------------------------------

ChunkSource wav_source(const SampleBuffer& buffer, double chunk_seconds)
{
    const auto step = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::llround(chunk_seconds * buffer.sample_rate)));
    auto offset = std::make_shared<Eigen::Index>(0);
    const Signal* samples = &buffer.samples;
    return [samples, step, offset]() -> std::optional<Signal> {
        if (*offset >= samples->size()) {
            return std::nullopt;
        }
        const auto n = std::min(step, samples->size() - *offset);
        Signal chunk = samples->segment(*offset, n);
        *offset += n;
        return chunk;
    };
}

ChunkSource stream_source(std::istream& in)
{
    auto reader = std::make_shared<ChunkReader>(in);
    return [reader]() { return reader->next(); };
}

StreamReport run_stream(const ChunkSource& source, Session& session, const StreamOptions& options)
{
    BoundedQueue<Signal> chunks(options.queue_capacity);
    BoundedQueue<WindowBundle> windows(options.queue_capacity);
    StreamReport report;
    std::exception_ptr reader_error;
    std::exception_ptr front_error;
    double audio_seconds = 0.0;
    std::size_t chunk_count = 0;

    std::thread reader([&] {
        try {
            while (auto chunk = source()) {
                audio_seconds += static_cast<double>(chunk->size()) / kCanonicalSampleRate;
                ++chunk_count;
                if (!chunks.push(std::move(*chunk))) {
                    break;
                }
            }
        } catch (...) {
            reader_error = std::current_exception();
        }
        chunks.close();
    });

    std::thread front([&] {
        try {
            FrontEnd fe;
            while (auto chunk = chunks.pop()) {
                for (auto& b : fe.push(*chunk)) {
                    if (!windows.push(std::move(b))) {
                        chunks.close();
                        return;
                    }
                }
            }
            for (auto& b : fe.finish()) {
                windows.push(std::move(b));
            }
        } catch (...) {
            front_error = std::current_exception();
            chunks.close();
        }
        windows.close();
    });

    std::exception_ptr link_error;
    try {
        while (auto bundle = windows.pop()) {
            auto analysis = session.process(*bundle);
            ++report.windows;
            if (analysis.status == WindowStatus::Scored) {
                ++report.scored_windows;
            }
            if (options.on_window) {
                options.on_window(analysis);
            }
        }
    } catch (...) {
        link_error = std::current_exception();
        windows.close();
        chunks.close();
    }
    reader.join();
    front.join();
    for (const auto& e : {reader_error, front_error, link_error}) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
    report.chunks = chunk_count;
    report.audio_seconds = audio_seconds;
    report.chunk_queue_high_water = chunks.high_water();
    report.window_queue_high_water = windows.high_water();
    return report;
}

// --- triggered side -----------------------------------------------------------------------

AnalysisReport run_analysis(const std::filesystem::path& data_dir, const MappingSpec& spec, double origin_epoch)
{
    auto store = Store::open(data_dir);
    AnalysisReport report;
    for (const auto& name : collection_names()) {
        report.corrupt_lines += store->corrupt_lines(name);
    }
    const auto subjects = store->subjects(collections::contextual_metrics);
    if (subjects.empty()) {
        throw NoData("no contextual metrics in " + data_dir.string());
    }
    const auto handle = store->register_writer(collections::analyzed_metrics, "analysis");
    report.subjects = subjects.size();
    for (const auto& subject : subjects) {
        std::map<std::pair<std::string, double>, MetricRecord> stored;
        for (auto& r : store->query(collections::analyzed_metrics, subject)) {
            stored.emplace(std::pair{r.metric_name, r.window_start}, std::move(r));
        }
        LinkageEngine engine(spec);
        std::vector<MetricRecord> pending;
        for (auto& w : load_contextual(*store, subject)) {
            if (w.status == WindowStatus::Warmup) {
                continue;
            }
            ++report.windows;
            const auto analysis = engine.score_contextual(w.index, w.window_start, w.status, std::move(w.metrics));
            for (auto& r : analyzed_records(subject, analysis, origin_epoch, "analysis")) {
                auto it = stored.find({r.metric_name, r.window_start});
                if (it == stored.end()) {
                    pending.push_back(std::move(r));
                } else if (it->second.value == r.value && it->second.detail == r.detail &&
                           it->second.quality_ok == r.quality_ok) {
                    ++report.identical;
                } else {
                    ++report.mismatched;
                }
            }
        }
        report.appended += pending.size();
        if (!pending.empty()) {
            store->append_batch(handle, std::move(pending));
        }
    }
    return report;
}

// --- benchmark --------------------------------------------------------------------------------

std::string_view to_string(Stage s)
{
    switch (s) {
    case Stage::Ingest:
        return "ingest";
    case Stage::Extract:
        return "extract";
    case Stage::Aggregate:
        return "aggregate";
    case Stage::Link:
        return "link";
    case Stage::Persist:
        return "persist";
    }
    return "unknown";
}

double WindowTiming::stage_sum() const
{
    double s = 0.0;
    for (double v : stages) {
        s += v;
    }
    return s;
}

std::vector<StageTiming> BenchmarkRun::stage_timings() const
{
    std::vector<StageTiming> out;
    for (const auto& w : windows) {
        for (std::size_t s = 0; s < w.stages.size(); ++s) {
            out.push_back({static_cast<Stage>(s), w.window_index, w.stages[s], w.audio_time});
        }
    }
    return out;
}

namespace {

double median(std::vector<double> v)
{
    if (v.empty()) {
        return 0.0;
    }
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

json BenchmarkReport::to_json() const
{
    json windows = json::array();
    for (std::size_t i = 0; i < median_total.size(); ++i) {
        windows.push_back({{"window_index", i}, {"median_wall_time", median_total[i]},
                           {"median_rtf", median_total[i] / kWindowSeconds}});
    }
    json stages = json::array();
    if (!runs.empty()) {
        for (const auto& t : runs.front().stage_timings()) {
            stages.push_back({{"stage", std::string(hearlink::to_string(t.stage))},
                              {"window_index", t.window_index},
                              {"wall_time", t.wall_time},
                              {"audio_time", t.audio_time},
                              {"rtf", t.rtf()}});
        }
    }
    return {{"runs", runs.size()},
            {"steady_state_from_window", kSteadyStateWindow},
            {"steady_state_rtf", steady_state_rtf},
            {"real_time", real_time},
            {"warmup_excess_windows", warmup_excess},
            {"max_accounting_error", max_accounting_error},
            {"windows", windows},
            {"first_run_stages", stages}};
}

BenchmarkReport benchmark(const SampleBuffer& buffer, const MappingSpec& spec, const std::filesystem::path& data_dir,
                          int runs)
{
    BenchmarkReport report;
    const auto chunk_len = static_cast<Eigen::Index>(std::llround(kWindowSeconds * buffer.sample_rate));
    for (int run = 0; run < std::max(1, runs); ++run) {
        const auto dir = data_dir / ("run_" + std::to_string(run));
        std::filesystem::remove_all(dir);
        auto store = Store::open(dir);
        Session session(*store, spec, SessionOptions{});
        FrontEnd fe(buffer.sample_rate);
        BenchmarkRun result;

        std::int64_t index = 0;
        for (Eigen::Index offset = 0; offset < buffer.samples.size(); offset += chunk_len, ++index) {
            const auto n = std::min(chunk_len, buffer.samples.size() - offset);
            WindowTiming timing;
            timing.window_index = index;
            timing.audio_time = static_cast<double>(n) / buffer.sample_rate;
            const auto before = fe.times();
            const auto t_total = Clock::now();

            auto bundles = fe.push(buffer.samples.segment(offset, n));
            if (offset + n >= buffer.samples.size()) {
                for (auto& b : fe.finish()) {
                    bundles.push_back(std::move(b));
                }
            }
            double link = 0.0;
            double persist = 0.0;
            for (const auto& b : bundles) {
                auto t0 = Clock::now();
                const auto analysis = session.link(b.window);
                link += seconds_since(t0);
                t0 = Clock::now();
                session.persist(b, analysis);
                persist += seconds_since(t0);
            }
            timing.total = seconds_since(t_total);
            const auto& after = fe.times();
            timing.stages = {after.ingest - before.ingest, after.extract - before.extract,
                             after.aggregate - before.aggregate, link, persist};
            result.windows.push_back(timing);
        }
        report.runs.push_back(std::move(result));
    }

    const std::size_t count = report.runs.front().windows.size();
    std::vector<double> steady;
    for (std::size_t i = 0; i < count; ++i) {
        std::vector<double> totals;
        double audio = kWindowSeconds;
        for (const auto& run : report.runs) {
            if (i < run.windows.size()) {
                totals.push_back(run.windows[i].total);
                audio = run.windows[i].audio_time;
                const auto& w = run.windows[i];
                if (w.total > 0.0) {
                    report.max_accounting_error =
                        std::max(report.max_accounting_error, std::abs(w.stage_sum() - w.total) / w.total);
                }
            }
        }
        const double m = median(totals);
        report.median_total.push_back(m);
        if (static_cast<std::int64_t>(i) >= kSteadyStateWindow) {
            steady.push_back(m / audio);
        } else if (m / audio > 1.0) {
            report.warmup_excess.push_back(static_cast<std::int64_t>(i));
        }
    }
    report.steady_state_rtf = median(steady);
    report.real_time = !steady.empty() && report.steady_state_rtf < 1.0;
    return report;
}

}  // namespace hearlink
