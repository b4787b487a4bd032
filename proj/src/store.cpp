#include "hearlink/store.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <mutex>
#include <set>

namespace hearlink {

using nlohmann::json;

const std::vector<std::string>& collection_names()
{
    static const std::vector<std::string> names = {
        collections::raw_metrics, collections::aggregated_metrics, collections::contextual_metrics,
        collections::analyzed_metrics, collections::baselines, collections::phq9_responses};
    return names;
}

std::string iso8601(double epoch_seconds)
{
    const auto total_ms = static_cast<long long>(std::llround(epoch_seconds * 1000.0));
    auto seconds = static_cast<std::time_t>(total_ms / 1000);
    auto ms = total_ms % 1000;
    if (ms < 0) {
        ms += 1000;
        --seconds;
    }
    std::tm tm{};
    gmtime_r(&seconds, &tm);
    char buf[96];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03lldZ", tm.tm_year + 1900, tm.tm_mon + 1,
                  tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<long long>(ms));
    return buf;
}

json MetricRecord::to_json() const
{
    json j = {{"collection", collection},
              {"subject_id", subject_id},
              {"metric", metric_name},
              {"absent", !value.has_value()},
              {"window_start", window_start},
              {"time", time},
              {"quality_ok", quality_ok},
              {"provenance", provenance}};
    j["value"] = value ? json(*value) : json(nullptr);
    if (!detail.is_null()) {
        j["detail"] = detail;
    }
    return j;
}

MetricRecord MetricRecord::from_json(const json& j)
{
    try {
        if (!j.is_object()) {
            throw ValidationError("record is not an object");
        }
        MetricRecord r;
        r.collection = j.at("collection").get<std::string>();
        r.subject_id = j.at("subject_id").get<std::string>();
        r.metric_name = j.at("metric").get<std::string>();
        const auto& v = j.at("value");
        if (v.is_number()) {
            r.value = v.get<double>();
        } else if (!v.is_null()) {
            throw ValidationError("value must be a number or null");
        }
        if (j.value("absent", false) == r.value.has_value()) {
            throw ValidationError("absent marker disagrees with value");
        }
        r.window_start = j.at("window_start").get<double>();
        r.time = j.value("time", std::string{});
        r.quality_ok = j.value("quality_ok", true);
        r.provenance = j.value("provenance", std::string{});
        if (j.contains("detail")) {
            r.detail = j.at("detail");
        }
        return r;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed record: ") + e.what());
    }
}

namespace {

void validate(const MetricRecord& r)
{
    if (r.subject_id.empty()) {
        throw ValidationError("record has no subject_id");
    }
    if (r.metric_name.empty()) {
        throw ValidationError("record has no metric name");
    }
    if (!std::isfinite(r.window_start)) {
        throw ValidationError("record window_start must be finite");
    }
    if (r.value && !std::isfinite(*r.value)) {
        throw ValidationError("record value must be finite or absent");
    }
}

std::string record_key(const MetricRecord& r)
{
    char start[40];
    std::snprintf(start, sizeof start, "%a", r.window_start);
    return r.subject_id + '\x1f' + r.metric_name + '\x1f' + start;
}

}  // namespace

struct Store::Collection {
    std::string name;
    std::filesystem::path file;
    mutable std::shared_mutex mutex;
    std::vector<MetricRecord> records;
    std::unordered_set<std::string> keys;
    std::ofstream out;
    std::string writer_id;
    std::size_t readers = 0;
    std::size_t corrupt = 0;
};

Store::Store(std::filesystem::path dir) : dir_(std::move(dir)) {}

Store::~Store() = default;

std::unique_ptr<Store> Store::open(const std::filesystem::path& data_dir)
{
    std::error_code ec;
    std::filesystem::create_directories(data_dir, ec);
    if (ec || !std::filesystem::is_directory(data_dir)) {
        throw IoError("cannot create data directory " + data_dir.string() + (ec ? ": " + ec.message() : ""));
    }
    std::unique_ptr<Store> store(new Store(data_dir));
    for (const auto& name : collection_names()) {
        auto c = std::make_unique<Collection>();
        c->name = name;
        c->file = data_dir / (name + ".ndjson");
        store->load(*c);
        c->out.open(c->file, std::ios::app | std::ios::binary);
        if (!c->out) {
            throw IoError("cannot open " + c->file.string() + " for appending");
        }
        store->collections_.emplace(name, std::move(c));
    }
    return store;
}

void Store::load(Collection& c)
{
    c.records.clear();
    c.keys.clear();
    c.corrupt = 0;
    std::ifstream in(c.file, std::ios::binary);
    if (!in) {
        return;
    }
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        try {
            auto record = MetricRecord::from_json(json::parse(line));
            validate(record);
            if (record.collection != c.name || !c.keys.insert(record_key(record)).second) {
                throw ValidationError("foreign or duplicate record");
            }
            c.records.push_back(std::move(record));
        } catch (const std::exception&) {
            ++c.corrupt;
        }
    }
}

void Store::reload()
{
    for (auto& [name, c] : collections_) {
        std::unique_lock lock(c->mutex);
        load(*c);
    }
}

Store::Collection& Store::find(const std::string& name)
{
    auto it = collections_.find(name);
    if (it == collections_.end()) {
        throw NotFound("unknown collection '" + name + "'");
    }
    return *it->second;
}

const Store::Collection& Store::find(const std::string& name) const
{
    auto it = collections_.find(name);
    if (it == collections_.end()) {
        throw NotFound("unknown collection '" + name + "'");
    }
    return *it->second;
}

CollectionHandle Store::register_writer(const std::string& collection, const std::string& writer_id)
{
    auto& c = find(collection);
    std::unique_lock lock(c.mutex);
    if (writer_id.empty()) {
        throw WriterViolation("writer id must not be empty");
    }
    if (!c.writer_id.empty() && c.writer_id != writer_id) {
        throw WriterViolation("collection '" + collection + "' already has writer '" + c.writer_id + "'");
    }
    c.writer_id = writer_id;
    return {collection, writer_id, true};
}

CollectionHandle Store::open_reader(const std::string& collection)
{
    auto& c = find(collection);
    std::unique_lock lock(c.mutex);
    ++c.readers;
    return {collection, {}, false};
}

void Store::append(const CollectionHandle& handle, MetricRecord record)
{
    std::vector<MetricRecord> one;
    one.push_back(std::move(record));
    append_batch(handle, std::move(one));
}

void Store::append_batch(const CollectionHandle& handle, std::vector<MetricRecord> records)
{
    auto& c = find(handle.name);
    std::unique_lock lock(c.mutex);
    if (!handle.writer || handle.writer_id.empty() || handle.writer_id != c.writer_id) {
        throw WriterViolation("caller is not the registered writer of '" + handle.name + "'");
    }

    std::vector<std::string> keys;
    keys.reserve(records.size());
    std::set<std::string> batch_keys;
    for (auto& r : records) {
        if (r.collection.empty()) {
            r.collection = c.name;
        }
        if (r.collection != c.name) {
            throw ValidationError("record for '" + r.collection + "' appended to '" + c.name + "'");
        }
        validate(r);
        auto key = record_key(r);
        if (c.keys.count(key) != 0 || !batch_keys.insert(key).second) {
            throw DuplicateRecord("duplicate record " + r.subject_id + "/" + r.metric_name + " at " +
                                  std::to_string(r.window_start) + " in " + c.name);
        }
        keys.push_back(std::move(key));
    }

    std::string lines;
    for (const auto& r : records) {
        lines += r.to_json().dump();
        lines += '\n';
    }
    c.out.write(lines.data(), static_cast<std::streamsize>(lines.size()));
    c.out.flush();
    if (!c.out) {
        throw IoError("write to " + c.file.string() + " failed");
    }
    for (std::size_t i = 0; i < records.size(); ++i) {
        c.keys.insert(std::move(keys[i]));
        c.records.push_back(std::move(records[i]));
    }
}

std::vector<MetricRecord> Store::query(const std::string& collection, const std::string& subject_id,
                                       const std::optional<std::string>& metric_name,
                                       const std::optional<TimeRange>& range) const
{
    const auto& c = find(collection);
    std::shared_lock lock(c.mutex);
    std::vector<MetricRecord> out;
    for (const auto& r : c.records) {
        if (r.subject_id != subject_id) {
            continue;
        }
        if (metric_name && r.metric_name != *metric_name) {
            continue;
        }
        if (range && (r.window_start < range->from || r.window_start >= range->to)) {
            continue;
        }
        out.push_back(r);
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const MetricRecord& a, const MetricRecord& b) { return a.window_start < b.window_start; });
    return out;
}

std::vector<std::string> Store::subjects(const std::string& collection) const
{
    const auto& c = find(collection);
    std::shared_lock lock(c.mutex);
    std::set<std::string> names;
    for (const auto& r : c.records) {
        names.insert(r.subject_id);
    }
    return {names.begin(), names.end()};
}

std::size_t Store::size(const std::string& collection) const
{
    const auto& c = find(collection);
    std::shared_lock lock(c.mutex);
    return c.records.size();
}

std::size_t Store::corrupt_lines(const std::string& collection) const
{
    const auto& c = find(collection);
    std::shared_lock lock(c.mutex);
    return c.corrupt;
}

std::size_t Store::reader_count(const std::string& collection) const
{
    const auto& c = find(collection);
    std::shared_lock lock(c.mutex);
    return c.readers;
}

// --- typed helpers -----------------------------------------------------------------

void snapshot_baselines(Store& store, const CollectionHandle& handle, const std::string& subject_id,
                        const BaselineProfile& baseline, double at, double origin_epoch)
{
    std::vector<MetricRecord> records;
    for (const auto& [metric, b] : baseline.metrics) {
        MetricRecord r;
        r.collection = collections::baselines;
        r.subject_id = subject_id;
        r.metric_name = metric;
        r.value = b.mean;
        r.window_start = at;
        r.time = iso8601(origin_epoch + at);
        r.provenance = "linkage";
        r.detail = {{"mu", b.mean},
                    {"sigma", b.sigma()},
                    {"m2", b.m2},
                    {"sample_count", b.count},
                    {"last_update", b.last_update}};
        records.push_back(std::move(r));
    }
    if (!records.empty()) {
        store.append_batch(handle, std::move(records));
    }
}

std::optional<std::pair<double, BaselineProfile>> latest_baseline(const Store& store, const std::string& subject_id)
{
    const auto records = store.query(collections::baselines, subject_id);
    if (records.empty()) {
        return std::nullopt;
    }
    const double latest = records.back().window_start;
    BaselineProfile profile;
    for (const auto& r : records) {
        if (r.window_start != latest) {
            continue;
        }
        try {
            MetricBaseline b;
            b.mean = r.detail.at("mu").get<double>();
            b.m2 = r.detail.at("m2").get<double>();
            b.count = r.detail.at("sample_count").get<std::int64_t>();
            b.last_update = r.detail.at("last_update").get<double>();
            profile.metrics[r.metric_name] = b;
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError("malformed baseline snapshot for " + r.metric_name + ": " + e.what());
        }
    }
    return std::pair{latest, profile};
}

void store_phq9(Store& store, const CollectionHandle& handle, const std::string& subject_id,
                const Phq9Response& response, double origin_epoch)
{
    // Round-trip through the validator so a corrupt payload never lands on disk.
    const auto checked = Phq9Response::from_json(response.to_json());
    MetricRecord r;
    r.collection = collections::phq9_responses;
    r.subject_id = subject_id;
    r.metric_name = "phq9";
    r.value = checked.total();
    r.window_start = checked.timestamp;
    r.time = iso8601(origin_epoch + checked.timestamp);
    r.provenance = "api";
    r.detail = checked.to_json();
    store.append(handle, std::move(r));
}

std::vector<Phq9Response> load_phq9(const Store& store, const std::string& subject_id)
{
    std::vector<Phq9Response> out;
    for (const auto& r : store.query(collections::phq9_responses, subject_id, std::string("phq9"))) {
        out.push_back(Phq9Response::from_json(r.detail));
    }
    return out;
}

}  // namespace hearlink
