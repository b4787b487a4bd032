#pragma once

#include <array>
#include <bitset>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hearlink/aggregation.hpp"
#include "hearlink/errors.hpp"

namespace hearlink {

inline constexpr int kIndicatorCount = 9;

enum class Relationship { Gradual, Nonlinear };
enum class Direction { Positive, Negative, Both };
enum class Descriptor { LLD, HLD };
enum class SignalGroup { Prosodic, Formant, Source, Spectral };

std::string_view to_string(Relationship r);
std::string_view to_string(Direction d);
std::string_view to_string(Descriptor d);
std::string_view to_string(SignalGroup g);
Direction parse_direction(std::string_view text);

/// One row of the feature -> biomarker -> indicator table.
struct MappingEntry {
    std::string feature;
    std::string biomarker;
    int indicator = 1;
    Relationship relationship = Relationship::Gradual;
    Direction direction = Direction::Positive;
    double weight = 1.0;
    Descriptor descriptor = Descriptor::HLD;
    SignalGroup signal_group = SignalGroup::Prosodic;

    bool operator==(const MappingEntry&) const = default;
};

struct IndicatorParams {
    double beta = 0.7;   // EMA smoothing, [0, 1)
    double theta = 1.0;  // presence threshold

    bool operator==(const IndicatorParams&) const = default;
};

/// Default smoothing for indicator `i` (1-based) when the config leaves it out:
/// 0.9 for slowly developing indicators (1, 2, 6), 0.5 for those that can change
/// abruptly (5, 8), 0.7 otherwise.
double default_beta(int indicator);

struct MappingSpec {
    std::vector<MappingEntry> entries;
    std::array<IndicatorParams, kIndicatorCount> indicators{};
    std::map<std::string, double> clip;  // per-metric cap overrides
    double default_clip = 3.0;
    double epsilon = 1e-6;
    int warmup_windows = 30;

    [[nodiscard]] double tau(const std::string& metric) const;
    [[nodiscard]] const IndicatorParams& params(int indicator) const { return indicators.at(indicator - 1); }
    /// Sorted, de-duplicated feature names referenced by any entry.
    [[nodiscard]] std::vector<std::string> features() const;
    [[nodiscard]] std::vector<const MappingEntry*> entries_for(int indicator) const;

    bool operator==(const MappingSpec&) const = default;
};

MappingSpec load_mapping_config(const nlohmann::json& document);
MappingSpec load_mapping_config(std::string_view document);
MappingSpec load_mapping_file(const std::string& path);

/// The bundled table, as shipped in config/config.json.
std::string_view default_mapping_document();
const MappingSpec& default_mapping_spec();

// --- baseline ------------------------------------------------------------------

struct MetricBaseline {
    double mean = 0.0;
    double m2 = 0.0;  // sum of squared deviations
    std::int64_t count = 0;
    double last_update = 0.0;

    /// Population standard deviation.
    [[nodiscard]] double sigma() const;

    void add(double x, double time);
    /// Chan et al. merge of a batch with `n` samples, mean `batch_mean` and squared deviations `batch_m2`.
    void merge(std::int64_t n, double batch_mean, double batch_m2, double time);

    bool operator==(const MetricBaseline&) const = default;
};

struct BaselineProfile {
    std::map<std::string, MetricBaseline> metrics;

    /// Throws MissingBaseline when the metric has no samples yet.
    [[nodiscard]] const MetricBaseline& at(const std::string& metric) const;

    bool operator==(const BaselineProfile&) const = default;
};

// --- scoring chain ---------------------------------------------------------------

struct Standardized {
    double z = 0.0;        // before clipping
    double z_tilde = 0.0;  // clipped to +-tau
    bool clipped = false;
};

Standardized standardize_detail(double x, const MetricBaseline& baseline, double tau, double epsilon = 1e-6);

inline double standardize(double x, const MetricBaseline& baseline, double tau, double epsilon = 1e-6)
{
    return standardize_detail(x, baseline, tau, epsilon).z_tilde;
}

inline double apply_direction(double z_tilde, Direction direction)
{
    switch (direction) {
    case Direction::Positive:
        return z_tilde;
    case Direction::Negative:
        return -z_tilde;
    case Direction::Both:
        return std::abs(z_tilde);
    }
    return z_tilde;
}

/// One mapped feature's part in an indicator score.
struct Contribution {
    std::string feature;
    std::string biomarker;
    Direction direction = Direction::Positive;
    Relationship relationship = Relationship::Gradual;
    double weight = 1.0;
    bool available = false;
    double z_tilde = 0.0;
    double psi = 0.0;
};

struct IndicatorScore {
    std::optional<double> score;  // weighted mean of available psi
    double coverage = 0.0;        // available weight / mapped weight
};

IndicatorScore indicator_score(std::span<const Contribution> contributions);

/// Exponential smoothing; an absent score holds the previous value, an absent
/// history starts from the score itself.
std::optional<double> ema_update(std::optional<double> score, std::optional<double> previous, double beta);

inline bool binarize(std::optional<double> smoothed, double theta) { return smoothed && *smoothed >= theta; }

/// Bit i holds indicator i + 1.
using IndicatorFlags = std::bitset<kIndicatorCount>;

/// At least five indicators present, one of them (1) or (2).
inline bool mdd_support(const IndicatorFlags& flags) { return flags.count() >= 5 && (flags[0] || flags[1]); }

struct IndicatorState {
    int indicator = 1;
    std::optional<double> score;
    std::optional<double> smoothed;
    double coverage = 0.0;
    bool active = false;
    double theta = 1.0;
    double beta = 0.7;
    bool nonlinear_as_gradual = false;  // a nonlinear entry was scored as gradual
    std::vector<Contribution> trace;
};

// --- questionnaire -----------------------------------------------------------------

/// PHQ item k (Q1..Q9) -> DSM-5 indicator.
inline constexpr std::array<int, kIndicatorCount> kPhqItemIndicator = {2, 1, 4, 6, 3, 7, 5, 8, 9};

struct Phq9Response {
    double timestamp = 0.0;
    std::array<int, kIndicatorCount> items{};

    /// Validates `{"timestamp"?, "items": {"Q1": 0..3, ... "Q9": 0..3}}`; throws ValidationError.
    static Phq9Response from_json(const nlohmann::json& body);
    [[nodiscard]] nlohmann::json to_json() const;
    [[nodiscard]] int total() const;
};

/// Absorbs the windows since the previous response into the baselines of every
/// metric mapped to an indicator whose PHQ item was answered 0.
BaselineProfile update_baseline(const BaselineProfile& baseline, const Phq9Response& response,
                                std::span<const HLDWindow> recent, const MappingSpec& spec);

// --- engine ------------------------------------------------------------------------

enum class WindowStatus { Warmup, LowQuality, Scored };
std::string_view to_string(WindowStatus s);
WindowStatus parse_window_status(std::string_view text);

struct ContextualMetric {
    std::string metric;
    std::optional<double> raw;
    std::optional<double> mean;
    std::optional<double> sigma;
    std::optional<double> z;
    std::optional<double> z_tilde;
    bool clipped = false;
    std::string absent_reason;  // empty when z_tilde is present
};

struct WindowAnalysis {
    std::int64_t index = 0;
    double window_start = 0.0;
    WindowStatus status = WindowStatus::Warmup;
    std::vector<ContextualMetric> contextual;
    std::array<IndicatorState, kIndicatorCount> indicators{};
    bool support = false;
    int active_count = 0;
};

/// Per-subject scoring state: baseline, smoothed indicator scores, and the windows
/// collected since the last questionnaire.
class LinkageEngine {
public:
    explicit LinkageEngine(MappingSpec spec = default_mapping_spec());

    WindowAnalysis process_window(const HLDWindow& window);

    /// Runs direction -> score -> smoothing -> presence -> support on already
    /// standardized metrics. Used for live scoring and for replay from storage.
    WindowAnalysis score_contextual(std::int64_t index, double window_start, WindowStatus status,
                                    std::vector<ContextualMetric> contextual);

    /// Returns true when any baseline changed.
    bool apply_phq9(const Phq9Response& response);

    [[nodiscard]] const MappingSpec& spec() const { return spec_; }
    [[nodiscard]] const BaselineProfile& baseline() const { return baseline_; }
    void set_baseline(BaselineProfile baseline) { baseline_ = std::move(baseline); }
    [[nodiscard]] bool warmed_up() const { return warmup_seen_ >= spec_.warmup_windows; }
    [[nodiscard]] int warmup_seen() const { return warmup_seen_; }
    void mark_warmed_up() { warmup_seen_ = spec_.warmup_windows; }
    [[nodiscard]] const std::vector<HLDWindow>& recent_windows() const { return recent_; }
    void set_recent_windows(std::vector<HLDWindow> recent) { recent_ = std::move(recent); }

private:
    MappingSpec spec_;
    std::vector<std::string> features_;
    BaselineProfile baseline_;
    std::array<std::optional<double>, kIndicatorCount> smoothed_{};
    int warmup_seen_ = 0;
    std::vector<HLDWindow> recent_;
};

}  // namespace hearlink
