#pragma once

#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "hearlink/errors.hpp"
#include "hearlink/linkage.hpp"

namespace hearlink {

namespace collections {
inline constexpr const char* raw_metrics = "raw_metrics";
inline constexpr const char* aggregated_metrics = "aggregated_metrics";
inline constexpr const char* contextual_metrics = "contextual_metrics";
inline constexpr const char* analyzed_metrics = "analyzed_metrics";
inline constexpr const char* baselines = "baselines";
inline constexpr const char* phq9_responses = "phq9_responses";
}  // namespace collections

const std::vector<std::string>& collection_names();

/// One value of one metric for one subject at one window (or frame) start.
struct MetricRecord {
    std::string collection;
    std::string subject_id;
    std::string metric_name;
    std::optional<double> value;  // nullopt is the explicit absent marker
    double window_start = 0.0;
    std::string time;             // ISO-8601, UTC
    bool quality_ok = true;
    std::string provenance;
    nlohmann::json detail;        // stage-specific extras, null when unused

    [[nodiscard]] nlohmann::json to_json() const;
    /// Throws ValidationError on a malformed line.
    static MetricRecord from_json(const nlohmann::json& j);

    bool operator==(const MetricRecord&) const = default;
};

/// `epoch_seconds` rendered as YYYY-MM-DDThh:mm:ss.mmmZ.
std::string iso8601(double epoch_seconds);

struct CollectionHandle {
    std::string name;
    std::string writer_id;  // empty for reader handles
    bool writer = false;
};

struct TimeRange {
    double from = -std::numeric_limits<double>::infinity();
    double to = std::numeric_limits<double>::infinity();  // exclusive
};

/// Append-only NDJSON collections under one data directory, one file per
/// collection, with an in-memory index rebuilt on open. One registered writer per
/// collection; any number of readers.
class Store {
public:
    /// Creates the directory and empty collection files when missing.
    static std::unique_ptr<Store> open(const std::filesystem::path& data_dir);

    Store(const Store&) = delete;
    Store& operator=(const Store&) = delete;
    ~Store();

    CollectionHandle register_writer(const std::string& collection, const std::string& writer_id);
    CollectionHandle open_reader(const std::string& collection);

    void append(const CollectionHandle& handle, MetricRecord record);
    void append_batch(const CollectionHandle& handle, std::vector<MetricRecord> records);

    /// Records sorted by window_start (insertion order among ties).
    [[nodiscard]] std::vector<MetricRecord> query(const std::string& collection, const std::string& subject_id,
                                                  const std::optional<std::string>& metric_name = std::nullopt,
                                                  const std::optional<TimeRange>& range = std::nullopt) const;

    [[nodiscard]] std::vector<std::string> subjects(const std::string& collection) const;
    [[nodiscard]] std::size_t size(const std::string& collection) const;
    [[nodiscard]] std::size_t corrupt_lines(const std::string& collection) const;
    [[nodiscard]] std::size_t reader_count(const std::string& collection) const;
    [[nodiscard]] const std::filesystem::path& path() const { return dir_; }

    /// Re-reads files written by another process.
    void reload();

private:
    struct Collection;
    explicit Store(std::filesystem::path dir);
    Collection& find(const std::string& name);
    const Collection& find(const std::string& name) const;
    void load(Collection& c);

    std::filesystem::path dir_;
    std::map<std::string, std::unique_ptr<Collection>> collections_;
};

// --- typed helpers over the plumbing collections ---------------------------------------

void snapshot_baselines(Store& store, const CollectionHandle& handle, const std::string& subject_id,
                        const BaselineProfile& baseline, double at, double origin_epoch = 0.0);

/// Latest snapshot version for the subject, with its stream time.
std::optional<std::pair<double, BaselineProfile>> latest_baseline(const Store& store, const std::string& subject_id);

void store_phq9(Store& store, const CollectionHandle& handle, const std::string& subject_id,
                const Phq9Response& response, double origin_epoch = 0.0);

std::vector<Phq9Response> load_phq9(const Store& store, const std::string& subject_id);

}  // namespace hearlink
