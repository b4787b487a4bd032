#include "hearlink/linkage.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

namespace hearlink {

using nlohmann::json;

namespace {

std::string lower(std::string_view text)
{
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

Relationship parse_relationship(std::string_view text)
{
    const auto t = lower(text);
    if (t == "gradual") {
        return Relationship::Gradual;
    }
    if (t == "nonlinear" || t == "non-linear") {
        return Relationship::Nonlinear;
    }
    throw ConfigError("unknown relationship '" + std::string(text) + "'");
}

Descriptor parse_descriptor(std::string_view text)
{
    const auto t = lower(text);
    if (t == "lld") {
        return Descriptor::LLD;
    }
    if (t == "hld") {
        return Descriptor::HLD;
    }
    throw ConfigError("unknown descriptor '" + std::string(text) + "'");
}

SignalGroup parse_signal_group(std::string_view text)
{
    const auto t = lower(text);
    if (t == "prosodic") {
        return SignalGroup::Prosodic;
    }
    if (t == "formant") {
        return SignalGroup::Formant;
    }
    if (t == "source") {
        return SignalGroup::Source;
    }
    if (t == "spectral") {
        return SignalGroup::Spectral;
    }
    throw ConfigError("unknown signal group '" + std::string(text) + "'");
}

template <typename T>
T field(const json& object, const char* key, const std::string& where)
{
    if (!object.contains(key)) {
        throw ConfigError(where + ": missing '" + key + "'");
    }
    try {
        return object.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + ": bad '" + key + "': " + e.what());
    }
}

double finite_number(const json& value, const std::string& where)
{
    if (!value.is_number()) {
        throw ConfigError(where + " must be a number");
    }
    const double v = value.get<double>();
    if (!std::isfinite(v)) {
        throw ConfigError(where + " must be finite");
    }
    return v;
}

}  // namespace

std::string_view to_string(Relationship r) { return r == Relationship::Gradual ? "gradual" : "nonlinear"; }

std::string_view to_string(Direction d)
{
    switch (d) {
    case Direction::Positive:
        return "positive";
    case Direction::Negative:
        return "negative";
    case Direction::Both:
        return "both";
    }
    return "positive";
}

std::string_view to_string(Descriptor d) { return d == Descriptor::LLD ? "LLD" : "HLD"; }

std::string_view to_string(SignalGroup g)
{
    switch (g) {
    case SignalGroup::Prosodic:
        return "prosodic";
    case SignalGroup::Formant:
        return "formant";
    case SignalGroup::Source:
        return "source";
    case SignalGroup::Spectral:
        return "spectral";
    }
    return "prosodic";
}

Direction parse_direction(std::string_view text)
{
    const auto t = lower(text);
    if (t == "positive") {
        return Direction::Positive;
    }
    if (t == "negative") {
        return Direction::Negative;
    }
    if (t == "both") {
        return Direction::Both;
    }
    throw ConfigError("unknown direction '" + std::string(text) + "'");
}

double default_beta(int indicator)
{
    switch (indicator) {
    case 1:
    case 2:
    case 6:
        return 0.9;
    case 5:
    case 8:
        return 0.5;
    default:
        return 0.7;
    }
}

double MappingSpec::tau(const std::string& metric) const
{
    if (auto it = clip.find(metric); it != clip.end()) {
        return it->second;
    }
    return default_clip;
}

std::vector<std::string> MappingSpec::features() const
{
    std::set<std::string> names;
    for (const auto& e : entries) {
        names.insert(e.feature);
    }
    return {names.begin(), names.end()};
}

std::vector<const MappingEntry*> MappingSpec::entries_for(int indicator) const
{
    std::vector<const MappingEntry*> out;
    for (const auto& e : entries) {
        if (e.indicator == indicator) {
            out.push_back(&e);
        }
    }
    return out;
}

MappingSpec load_mapping_config(const json& document)
{
    if (!document.is_object()) {
        throw ConfigError("mapping config must be a JSON object");
    }
    MappingSpec spec;
    for (int i = 1; i <= kIndicatorCount; ++i) {
        spec.indicators[static_cast<std::size_t>(i - 1)].beta = default_beta(i);
    }

    if (document.contains("entries")) {
        const auto& entries = document.at("entries");
        if (!entries.is_array()) {
            throw ConfigError("'entries' must be an array");
        }
        std::set<std::tuple<std::string, std::string, int>> seen;
        for (std::size_t k = 0; k < entries.size(); ++k) {
            const auto& row = entries[k];
            const std::string where = "entries[" + std::to_string(k) + "]";
            if (!row.is_object()) {
                throw ConfigError(where + " must be an object");
            }
            MappingEntry e;
            e.feature = field<std::string>(row, "feature", where);
            e.biomarker = field<std::string>(row, "biomarker", where);
            e.indicator = field<int>(row, "indicator", where);
            e.relationship = parse_relationship(field<std::string>(row, "relationship", where));
            e.direction = parse_direction(field<std::string>(row, "direction", where));
            e.weight = row.contains("weight") ? finite_number(row.at("weight"), where + ".weight") : 1.0;
            e.descriptor = parse_descriptor(field<std::string>(row, "descriptor", where));
            e.signal_group = parse_signal_group(field<std::string>(row, "signal_group", where));
            if (e.feature.empty()) {
                throw ConfigError(where + ": empty feature name");
            }
            if (e.indicator < 1 || e.indicator > kIndicatorCount) {
                throw ConfigError(where + ": indicator " + std::to_string(e.indicator) + " outside 1-9");
            }
            if (e.weight < 0.0) {
                throw ConfigError(where + ": negative weight");
            }
            if (!seen.emplace(e.feature, e.biomarker, e.indicator).second) {
                throw ConfigError(where + ": duplicate entry (" + e.feature + ", " + e.biomarker + ", " +
                                  std::to_string(e.indicator) + ")");
            }
            spec.entries.push_back(std::move(e));
        }
    }

    if (document.contains("indicators")) {
        const auto& block = document.at("indicators");
        if (!block.is_object()) {
            throw ConfigError("'indicators' must be an object");
        }
        for (const auto& [key, params] : block.items()) {
            int id = 0;
            try {
                std::size_t used = 0;
                id = std::stoi(key, &used);
                if (used != key.size()) {
                    throw std::invalid_argument(key);
                }
            } catch (const std::exception&) {
                throw ConfigError("indicator key '" + key + "' is not an integer");
            }
            if (id < 1 || id > kIndicatorCount) {
                throw ConfigError("indicator key " + key + " outside 1-9");
            }
            auto& p = spec.indicators[static_cast<std::size_t>(id - 1)];
            if (params.contains("beta")) {
                p.beta = finite_number(params.at("beta"), "indicators." + key + ".beta");
            }
            if (params.contains("theta")) {
                p.theta = finite_number(params.at("theta"), "indicators." + key + ".theta");
            }
            if (p.beta < 0.0 || p.beta >= 1.0) {
                throw ConfigError("indicators." + key + ".beta must lie in [0, 1)");
            }
        }
    }

    if (document.contains("clip")) {
        const auto& block = document.at("clip");
        if (!block.is_object()) {
            throw ConfigError("'clip' must be an object");
        }
        for (const auto& [metric, value] : block.items()) {
            const double tau = finite_number(value, "clip." + metric);
            if (tau <= 0.0) {
                throw ConfigError("clip." + metric + " must be positive");
            }
            if (metric == "default") {
                spec.default_clip = tau;
            } else {
                spec.clip[metric] = tau;
            }
        }
    }
    if (document.contains("epsilon")) {
        spec.epsilon = finite_number(document.at("epsilon"), "epsilon");
        if (spec.epsilon <= 0.0) {
            throw ConfigError("epsilon must be positive");
        }
    }
    if (document.contains("warmup_windows")) {
        const auto& w = document.at("warmup_windows");
        if (!w.is_number_integer() || w.get<int>() < 1) {
            throw ConfigError("warmup_windows must be a positive integer");
        }
        spec.warmup_windows = w.get<int>();
    }
    return spec;
}

MappingSpec load_mapping_config(std::string_view document)
{
    json parsed;
    try {
        parsed = json::parse(document);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("malformed mapping config: ") + e.what());
    }
    return load_mapping_config(parsed);
}

MappingSpec load_mapping_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config " + path);
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return load_mapping_config(std::string_view(ss.str()));
}

const MappingSpec& default_mapping_spec()
{
    static const MappingSpec spec = load_mapping_config(default_mapping_document());
    return spec;
}

// --- baseline ------------------------------------------------------------------

double MetricBaseline::sigma() const
{
    return count > 0 ? std::sqrt(std::max(m2, 0.0) / static_cast<double>(count)) : 0.0;
}

void MetricBaseline::add(double x, double time)
{
    ++count;
    const double delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (x - mean);
    last_update = time;
}

void MetricBaseline::merge(std::int64_t n, double batch_mean, double batch_m2, double time)
{
    if (n <= 0) {
        return;
    }
    const double total = static_cast<double>(count + n);
    const double delta = batch_mean - mean;
    mean += delta * static_cast<double>(n) / total;
    m2 += batch_m2 + delta * delta * static_cast<double>(count) * static_cast<double>(n) / total;
    count += n;
    last_update = time;
}

const MetricBaseline& BaselineProfile::at(const std::string& metric) const
{
    auto it = metrics.find(metric);
    if (it == metrics.end() || it->second.count == 0) {
        throw MissingBaseline("no baseline for metric '" + metric + "'");
    }
    return it->second;
}

// --- scoring chain ---------------------------------------------------------------

Standardized standardize_detail(double x, const MetricBaseline& baseline, double tau, double epsilon)
{
    Standardized s;
    s.z = (x - baseline.mean) / std::max(baseline.sigma(), epsilon);
    const double magnitude = std::min(std::abs(s.z), tau);
    s.clipped = std::abs(s.z) > tau;
    s.z_tilde = s.z > 0.0 ? magnitude : (s.z < 0.0 ? -magnitude : 0.0);
    return s;
}

IndicatorScore indicator_score(std::span<const Contribution> contributions)
{
    double weighted = 0.0;
    double available_weight = 0.0;
    double mapped_weight = 0.0;
    for (const auto& c : contributions) {
        mapped_weight += c.weight;
        if (c.available) {
            weighted += c.weight * c.psi;
            available_weight += c.weight;
        }
    }
    IndicatorScore result;
    if (mapped_weight > 0.0) {
        result.coverage = available_weight / mapped_weight;
    }
    if (result.coverage > 0.0) {
        result.score = weighted / available_weight;
    }
    return result;
}

std::optional<double> ema_update(std::optional<double> score, std::optional<double> previous, double beta)
{
    if (!score) {
        return previous;
    }
    if (!previous) {
        return score;
    }
    return (1.0 - beta) * *score + beta * *previous;
}

// --- questionnaire -----------------------------------------------------------------

Phq9Response Phq9Response::from_json(const json& body)
{
    if (!body.is_object()) {
        throw ValidationError("PHQ-9 response must be an object");
    }
    Phq9Response r;
    if (body.contains("timestamp")) {
        if (!body.at("timestamp").is_number()) {
            throw ValidationError("timestamp must be a number of seconds");
        }
        r.timestamp = body.at("timestamp").get<double>();
    }
    if (!body.contains("items") || !body.at("items").is_object()) {
        throw ValidationError("PHQ-9 response needs an 'items' object keyed Q1..Q9");
    }
    const auto& items = body.at("items");
    if (items.size() != kIndicatorCount) {
        throw ValidationError("PHQ-9 response needs exactly 9 items, got " + std::to_string(items.size()));
    }
    for (int k = 1; k <= kIndicatorCount; ++k) {
        const std::string key = "Q" + std::to_string(k);
        if (!items.contains(key)) {
            throw ValidationError("missing item " + key);
        }
        const auto& v = items.at(key);
        if (!v.is_number_integer()) {
            throw ValidationError(key + " must be an integer 0-3");
        }
        const int score = v.get<int>();
        if (score < 0 || score > 3) {
            throw ValidationError(key + " must be within 0-3");
        }
        r.items[static_cast<std::size_t>(k - 1)] = score;
    }
    return r;
}

json Phq9Response::to_json() const
{
    json items = json::object();
    for (int k = 1; k <= kIndicatorCount; ++k) {
        items["Q" + std::to_string(k)] = this->items[static_cast<std::size_t>(k - 1)];
    }
    return {{"timestamp", timestamp}, {"items", items}};
}

int Phq9Response::total() const
{
    int sum = 0;
    for (int v : items) {
        sum += v;
    }
    return sum;
}

BaselineProfile update_baseline(const BaselineProfile& baseline, const Phq9Response& response,
                                std::span<const HLDWindow> recent, const MappingSpec& spec)
{
    for (int v : response.items) {
        if (v < 0 || v > 3) {
            throw ValidationError("PHQ-9 items must be within 0-3");
        }
    }

    std::set<std::string> absorb;
    for (std::size_t k = 0; k < response.items.size(); ++k) {
        if (response.items[k] != 0) {
            continue;
        }
        for (const auto* e : spec.entries_for(kPhqItemIndicator[k])) {
            absorb.insert(e->feature);
        }
    }

    BaselineProfile updated = baseline;
    for (const auto& metric : absorb) {
        std::vector<double> values;
        double last_time = 0.0;
        for (const auto& w : recent) {
            if (!w.quality_ok) {
                continue;
            }
            if (auto v = w.metric(metric)) {
                values.push_back(*v);
                last_time = w.window_start + w.window_len;
            }
        }
        if (values.empty()) {
            continue;
        }
        const Eigen::Map<const Eigen::ArrayXd> x(values.data(), static_cast<Eigen::Index>(values.size()));
        const double batch_mean = x.mean();
        const double batch_m2 = (x - batch_mean).square().sum();
        updated.metrics[metric].merge(static_cast<std::int64_t>(values.size()), batch_mean, batch_m2, last_time);
    }
    return updated;
}

// --- engine ------------------------------------------------------------------------

std::string_view to_string(WindowStatus s)
{
    switch (s) {
    case WindowStatus::Warmup:
        return "warmup";
    case WindowStatus::LowQuality:
        return "low_quality";
    case WindowStatus::Scored:
        return "scored";
    }
    return "warmup";
}

WindowStatus parse_window_status(std::string_view text)
{
    if (text == "warmup") {
        return WindowStatus::Warmup;
    }
    if (text == "low_quality") {
        return WindowStatus::LowQuality;
    }
    if (text == "scored") {
        return WindowStatus::Scored;
    }
    throw ValidationError("unknown window status '" + std::string(text) + "'");
}

LinkageEngine::LinkageEngine(MappingSpec spec) : spec_(std::move(spec)), features_(spec_.features()) {}

WindowAnalysis LinkageEngine::process_window(const HLDWindow& window)
{
    const double window_end = window.window_start + window.window_len;
    if (!warmed_up()) {
        WindowAnalysis warmup;
        warmup.index = window.index;
        warmup.window_start = window.window_start;
        warmup.status = WindowStatus::Warmup;
        if (window.quality_ok) {
            for (const auto& [metric, value] : window.metrics) {
                baseline_.metrics[metric].add(value, window_end);
            }
            ++warmup_seen_;
        }
        for (int i = 1; i <= kIndicatorCount; ++i) {
            auto& s = warmup.indicators[static_cast<std::size_t>(i - 1)];
            s.indicator = i;
            s.theta = spec_.params(i).theta;
            s.beta = spec_.params(i).beta;
        }
        return warmup;
    }

    std::vector<ContextualMetric> contextual;
    contextual.reserve(features_.size());
    for (const auto& feature : features_) {
        ContextualMetric c;
        c.metric = feature;
        if (!window.quality_ok) {
            c.absent_reason = "low_quality";
        } else if (auto raw = window.metric(feature)) {
            c.raw = raw;
            auto it = baseline_.metrics.find(feature);
            if (it == baseline_.metrics.end() || it->second.count == 0) {
                c.absent_reason = "missing_baseline";
            } else {
                const auto& b = it->second;
                const auto s = standardize_detail(*raw, b, spec_.tau(feature), spec_.epsilon);
                c.mean = b.mean;
                c.sigma = b.sigma();
                c.z = s.z;
                c.z_tilde = s.z_tilde;
                c.clipped = s.clipped;
            }
        } else {
            c.absent_reason = "missing_metric";
        }
        contextual.push_back(std::move(c));
    }
    if (window.quality_ok) {
        recent_.push_back(window);
    }
    return score_contextual(window.index, window.window_start,
                            window.quality_ok ? WindowStatus::Scored : WindowStatus::LowQuality,
                            std::move(contextual));
}

WindowAnalysis LinkageEngine::score_contextual(std::int64_t index, double window_start, WindowStatus status,
                                               std::vector<ContextualMetric> contextual)
{
    std::map<std::string, double> z_tilde;
    for (const auto& c : contextual) {
        if (c.z_tilde) {
            z_tilde[c.metric] = *c.z_tilde;
        }
    }

    WindowAnalysis out;
    out.index = index;
    out.window_start = window_start;
    out.status = status;
    IndicatorFlags flags;
    for (int i = 1; i <= kIndicatorCount; ++i) {
        auto& state = out.indicators[static_cast<std::size_t>(i - 1)];
        const auto& params = spec_.params(i);
        state.indicator = i;
        state.theta = params.theta;
        state.beta = params.beta;
        for (const auto* e : spec_.entries_for(i)) {
            Contribution c;
            c.feature = e->feature;
            c.biomarker = e->biomarker;
            c.direction = e->direction;
            c.relationship = e->relationship;
            c.weight = e->weight;
            if (auto it = z_tilde.find(e->feature); it != z_tilde.end()) {
                c.available = true;
                c.z_tilde = it->second;
                c.psi = apply_direction(it->second, e->direction);
                // nonlinear curves are not modelled yet
                state.nonlinear_as_gradual |= e->relationship == Relationship::Nonlinear;
            }
            state.trace.push_back(std::move(c));
        }
        const auto score = indicator_score(state.trace);
        state.score = score.score;
        state.coverage = score.coverage;
        auto& smoothed = smoothed_[static_cast<std::size_t>(i - 1)];
        smoothed = ema_update(state.score, smoothed, params.beta);
        state.smoothed = smoothed;
        state.active = binarize(state.smoothed, params.theta);
        flags[static_cast<std::size_t>(i - 1)] = state.active;
    }
    out.active_count = static_cast<int>(flags.count());
    out.support = mdd_support(flags);
    out.contextual = std::move(contextual);
    return out;
}

bool LinkageEngine::apply_phq9(const Phq9Response& response)
{
    auto updated = update_baseline(baseline_, response, recent_, spec_);
    const bool changed = !(updated == baseline_);
    baseline_ = std::move(updated);
    recent_.clear();
    return changed;
}

}  // namespace hearlink
