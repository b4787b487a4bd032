#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include <json.hpp>

#include "hearlink/linkage.hpp"
#include "hearlink/pipeline.hpp"
#include "hearlink/store.hpp"

namespace hearlink {

struct ApiRequest {
    std::string method = "GET";
    std::string path;
    std::map<std::string, std::string> params;
    std::string body;
};

struct ApiResponse {
    int status = 200;
    nlohmann::json body;
};

/// Resolves the live session that accepts PHQ-9 submissions for a subject, or
/// nullptr when the subject is unknown.
using SessionLookup = std::function<Session*(const std::string& subject)>;

/// Lazily restores sessions from a store for the standalone server.
class SessionRegistry {
public:
    SessionRegistry(Store& store, MappingSpec spec, double origin_epoch = 0.0, std::string writer_id = "api");

    Session* get(const std::string& subject);

private:
    Store& store_;
    MappingSpec spec_;
    double origin_epoch_;
    std::string writer_id_;
    std::mutex mutex_;
    std::map<std::string, std::unique_ptr<Session>> sessions_;
};

/// Read endpoints over the store plus the PHQ-9 write endpoint:
///   GET  /subjects
///   GET  /metrics/raw | /metrics/aggregated | /metrics/contextual  ?subject&metric&from&to&limit
///   GET  /indicators ?subject&from&to
///   GET  /support ?subject&from&to
///   GET  /baselines ?subject
///   GET  /trace/{window index} ?subject
///   POST /phq9 ?subject   body: {"items": {"Q1": 0..3, ..., "Q9": 0..3}}
class ApiService {
public:
    ApiService(const Store& store, SessionLookup sessions);

    [[nodiscard]] ApiResponse handle(const ApiRequest& request) const;

private:
    ApiResponse records(const std::string& collection, const ApiRequest& request) const;
    ApiResponse indicators(const ApiRequest& request) const;
    ApiResponse support(const ApiRequest& request) const;
    ApiResponse baselines(const ApiRequest& request) const;
    ApiResponse trace(const std::string& window, const ApiRequest& request) const;
    ApiResponse phq9(const ApiRequest& request) const;

    const Store& store_;
    SessionLookup sessions_;
};

/// HTTP front for an ApiService on a background thread.
class ApiServer {
public:
    explicit ApiServer(const ApiService& service);
    ~ApiServer();
    ApiServer(const ApiServer&) = delete;
    ApiServer& operator=(const ApiServer&) = delete;

    /// Binds and starts serving; port 0 picks a free port. Returns the bound port.
    int start(const std::string& host, int port);
    /// Serves on the calling thread until `stop`.
    void run(const std::string& host, int port);
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace hearlink
