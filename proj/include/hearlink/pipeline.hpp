#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <istream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "hearlink/aggregation.hpp"
#include "hearlink/audio.hpp"
#include "hearlink/features.hpp"
#include "hearlink/linkage.hpp"
#include "hearlink/store.hpp"

namespace hearlink {

/// A closed window with the voiced frame descriptors that fell inside it.
struct WindowBundle {
    HLDWindow window;
    std::vector<FrameLLD> llds;
};

struct FrontEndTimes {
    double ingest = 0.0;     // framing and voice gating
    double extract = 0.0;    // frame descriptors
    double aggregate = 0.0;  // window functionals
};

/// Audio chunks in, closed windows out: Framer -> VadGate -> LldExtractor -> WindowAssembler.
class FrontEnd {
public:
    explicit FrontEnd(int sample_rate = kCanonicalSampleRate, EnergyVadOptions vad = {});

    std::vector<WindowBundle> push(const Signal& chunk);
    std::vector<WindowBundle> finish();

    [[nodiscard]] double elapsed() const;
    /// Cumulative stage wall times since construction.
    [[nodiscard]] const FrontEndTimes& times() const { return times_; }

private:
    std::vector<WindowBundle> feed(std::vector<Frame> frames);
    std::vector<WindowBundle> bundle(std::vector<HLDWindow> windows);

    int sample_rate_;
    Framer framer_;
    std::unique_ptr<EnergyVad> vad_;
    VadGate gate_;
    LldExtractor extractor_;
    WindowAssembler assembler_;
    std::vector<FrameLLD> voiced_;
    FrontEndTimes times_;
};

struct SessionOptions {
    std::string subject_id = "subject";
    double origin_epoch = 0.0;  // wall-clock epoch of stream time 0, for ISO timestamps
    std::string writer_id = "pipeline";
    bool persist_raw = true;
};

struct Phq9Outcome {
    Phq9Response response;
    bool baseline_changed = false;
    std::vector<std::string> updated_metrics;
    std::size_t windows_absorbed = 0;
};

/// One subject's linkage state bound to the store. Window processing and PHQ-9
/// submissions are serialized on an internal mutex.
class Session {
public:
    Session(Store& store, MappingSpec spec, SessionOptions options = {});

    /// Rebuilds baseline, warmup status and unabsorbed windows from stored records.
    static std::unique_ptr<Session> restore(Store& store, MappingSpec spec, SessionOptions options);

    WindowAnalysis link(const HLDWindow& window);
    void persist(const WindowBundle& bundle, const WindowAnalysis& analysis);
    WindowAnalysis process(const WindowBundle& bundle);

    /// Stamps the response at the end of the newest window, recalibrates and
    /// snapshots the baseline. Throws Conflict during warmup or when no quality
    /// window arrived since the previous response.
    Phq9Outcome submit_phq9(Phq9Response response);

    [[nodiscard]] const std::string& subject_id() const { return options_.subject_id; }
    [[nodiscard]] std::size_t windows_processed() const;
    [[nodiscard]] std::optional<double> last_window_end() const;
    [[nodiscard]] bool warmed_up() const;

private:
    Store& store_;
    SessionOptions options_;
    LinkageEngine engine_;
    mutable std::mutex mutex_;
    CollectionHandle raw_;
    CollectionHandle aggregated_;
    CollectionHandle contextual_;
    CollectionHandle analyzed_;
    CollectionHandle baselines_;
    CollectionHandle phq9_;
    std::size_t windows_ = 0;
    std::optional<double> last_window_end_;
};

// --- record layout -----------------------------------------------------------------

std::vector<MetricRecord> raw_records(const std::string& subject, std::span<const FrameLLD> llds, double origin_epoch);
std::vector<MetricRecord> aggregated_records(const std::string& subject, const HLDWindow& window, double origin_epoch);
std::vector<MetricRecord> contextual_records(const std::string& subject, const WindowAnalysis& analysis,
                                             double origin_epoch);
std::vector<MetricRecord> analyzed_records(const std::string& subject, const WindowAnalysis& analysis,
                                           double origin_epoch, const std::string& provenance);

/// One stored window of contextual metrics.
struct StoredContext {
    std::int64_t index = 0;
    double window_start = 0.0;
    WindowStatus status = WindowStatus::Warmup;
    std::vector<ContextualMetric> metrics;
};

/// Groups a subject's contextual records back into windows, in time order.
std::vector<StoredContext> load_contextual(const Store& store, const std::string& subject);

/// Windows rebuilt from aggregated records, in time order.
std::vector<HLDWindow> load_windows(const Store& store, const std::string& subject);

// --- continuous side --------------------------------------------------------------

/// Pulls the next chunk of canonical audio; nullopt at end of stream.
using ChunkSource = std::function<std::optional<Signal>()>;

ChunkSource wav_source(const SampleBuffer& buffer, double chunk_seconds = 1.0);
ChunkSource stream_source(std::istream& in);

struct StreamReport {
    std::size_t chunks = 0;
    std::size_t windows = 0;
    std::size_t scored_windows = 0;
    double audio_seconds = 0.0;
    std::size_t chunk_queue_high_water = 0;
    std::size_t window_queue_high_water = 0;
};

struct StreamOptions {
    std::size_t queue_capacity = 8;
    std::function<void(const WindowAnalysis&)> on_window;
};

/// Reader, front end and linkage/persistence run as three threads joined by
/// bounded queues. Errors in any stage stop the chain and are rethrown.
StreamReport run_stream(const ChunkSource& source, Session& session, const StreamOptions& options = {});

// --- triggered side ---------------------------------------------------------------

struct AnalysisReport {
    std::size_t subjects = 0;
    std::size_t windows = 0;          // non-warmup windows replayed
    std::size_t appended = 0;         // analyzed records written
    std::size_t identical = 0;        // records already stored with the same content
    std::size_t mismatched = 0;       // stored records that disagree with the replay
    std::size_t corrupt_lines = 0;    // unreadable lines skipped across collections
};

/// Replays stored contextual metrics through the scoring chain and fills in the
/// analyzed collection. Throws NoData when the store holds no contextual records.
AnalysisReport run_analysis(const std::filesystem::path& data_dir, const MappingSpec& spec = default_mapping_spec(),
                            double origin_epoch = 0.0);

// --- benchmark ------------------------------------------------------------------------

enum class Stage { Ingest, Extract, Aggregate, Link, Persist };
std::string_view to_string(Stage s);

inline constexpr std::int64_t kSteadyStateWindow = 5;

struct StageTiming {
    Stage stage = Stage::Ingest;
    std::int64_t window_index = 0;
    double wall_time = 0.0;
    double audio_time = kWindowSeconds;
    [[nodiscard]] double rtf() const { return wall_time / audio_time; }
};

struct WindowTiming {
    std::int64_t window_index = 0;
    double audio_time = kWindowSeconds;
    double total = 0.0;  // measured independently of the stage clocks
    std::array<double, 5> stages{};
    [[nodiscard]] double rtf() const { return total / audio_time; }
    [[nodiscard]] double stage_sum() const;
};

struct BenchmarkRun {
    std::vector<WindowTiming> windows;
    [[nodiscard]] std::vector<StageTiming> stage_timings() const;
};

struct BenchmarkReport {
    std::vector<BenchmarkRun> runs;
    std::vector<double> median_total;      // per window index
    double steady_state_rtf = 0.0;         // median total / audio over windows >= kSteadyStateWindow
    std::vector<std::int64_t> warmup_excess;  // windows whose median rtf exceeded 1.0
    bool real_time = false;                // steady_state_rtf < 1.0
    double max_accounting_error = 0.0;     // max |stage sum - total| / total
    [[nodiscard]] nlohmann::json to_json() const;
};

/// Feeds the buffer in window-sized chunks through every stage, persisting into
/// `data_dir` (fresh per run), and times each stage per window.
BenchmarkReport benchmark(const SampleBuffer& buffer, const MappingSpec& spec, const std::filesystem::path& data_dir,
                          int runs = 1);

}  // namespace hearlink
