#include <doctest.h>

#include "hearlink/api.hpp"
#include "hearlink/pipeline.hpp"
#include "hearlink/synth.hpp"
#include "support.hpp"

// after Eigen: resolv.h defines a macro that clashes with Eigen internals
#include <httplib.h>

using namespace hearlink;
using nlohmann::json;

namespace {

const char* kAllZero =
    R"({"items": {"Q1": 0, "Q2": 0, "Q3": 0, "Q4": 0, "Q5": 0, "Q6": 0, "Q7": 0, "Q8": 0, "Q9": 0}})";

// One subject streamed for 30 s with a two-window warmup: windows 0-1 warmup, 2 scored.
struct Fixture {
    testsupport::TempDir dir{"api"};
    std::unique_ptr<Store> store;
    std::unique_ptr<Session> session;
    std::unique_ptr<ApiService> service;

    Fixture()
    {
        auto spec = default_mapping_spec();
        spec.warmup_windows = 2;
        store = Store::open(dir.path());
        session = std::make_unique<Session>(*store, spec);
        SynthProfile p;
        p.phases = {baseline_phase(30.0)};
        SampleBuffer audio;
        audio.samples = synthesize(p, 4);
        run_stream(wav_source(audio), *session);
        service = std::make_unique<ApiService>(
            *store, [this](const std::string& s) { return s == "subject" ? session.get() : nullptr; });
    }

    ApiResponse get(const std::string& path, std::map<std::string, std::string> params = {}) const
    {
        return service->handle({"GET", path, std::move(params), ""});
    }

    ApiResponse post(const std::string& path, const std::string& body,
                     std::map<std::string, std::string> params = {}) const
    {
        return service->handle({"POST", path, std::move(params), body});
    }
};

}  // namespace

TEST_SUITE("api")
{
    TEST_CASE("subjects")
    {
        Fixture f;
        const auto r = f.get("/subjects");
        CHECK(r.status == 200);
        CHECK(r.body.at("subjects") == json::array({"subject"}));
    }

    TEST_CASE("metric records with filters")
    {
        Fixture f;
        auto r = f.get("/metrics/aggregated", {{"metric", "f0_avg"}});
        REQUIRE(r.status == 200);
        CHECK(r.body.at("count") == 3);
        CHECK(r.body.at("records")[0].at("metric") == "f0_avg");

        r = f.get("/metrics/aggregated", {{"metric", "f0_avg"}, {"from", "10"}, {"to", "20"}});
        CHECK(r.body.at("count") == 1);
        CHECK(r.body.at("records")[0].at("window_start") == 10.0);

        r = f.get("/metrics/raw", {{"limit", "5"}});
        REQUIRE(r.body.at("count") == 5);
        CHECK(r.body.at("records")[4].at("window_start").get<double>() > 29.0);

        r = f.get("/metrics/contextual", {{"subject", "subject"}, {"metric", "window_status"}});
        CHECK(r.body.at("count") == 3);

        CHECK(f.get("/metrics/raw", {{"from", "abc"}}).status == 400);
    }

    TEST_CASE("indicator windows and support")
    {
        Fixture f;
        auto r = f.get("/indicators");
        REQUIRE(r.status == 200);
        const auto& windows = r.body.at("windows");
        REQUIRE(windows.size() == 3);
        CHECK(windows[0].at("status") == "warmup");
        CHECK(windows[0].at("indicators").empty());
        CHECK(windows[2].at("status") == "scored");
        CHECK(windows[2].at("indicators").size() == 9);
        CHECK(windows[2].contains("support"));

        r = f.get("/support");
        REQUIRE(r.body.at("windows").size() == 1);
        CHECK(r.body.at("windows")[0].at("window_start") == 20.0);
        CHECK(r.body.at("windows")[0].at("flags").get<std::string>().size() == 9);
    }

    TEST_CASE("baselines")
    {
        Fixture f;
        const auto r = f.get("/baselines");
        REQUIRE(r.status == 200);
        CHECK(r.body.at("status") == "ready");
        CHECK(r.body.at("at") == 20.0);
        CHECK(r.body.at("versions") == 1);
        CHECK(r.body.at("metrics").at("f0_std").at("sample_count") == 2);
    }

    TEST_CASE("trace of a scored window")
    {
        Fixture f;
        auto r = f.get("/trace/2");
        REQUIRE(r.status == 200);
        CHECK(r.body.at("status") == "scored");
        CHECK(r.body.at("indicators").size() == 9);
        for (const auto& ind : r.body.at("indicators")) {
            // recompute the score from the trace
            double num = 0.0;
            double den = 0.0;
            for (const auto& c : ind.at("trace")) {
                if (c.at("available").get<bool>()) {
                    num += c.at("weight").get<double>() * c.at("psi").get<double>();
                    den += c.at("weight").get<double>();
                }
            }
            if (den > 0.0) {
                CHECK(ind.at("score").get<double>() == num / den);
            } else {
                CHECK(ind.at("score").is_null());
            }
        }
        r = f.get("/trace/0");
        CHECK(r.status == 200);
        CHECK(r.body.at("status") == "warmup");
        CHECK(f.get("/trace/99").status == 404);
        CHECK(f.get("/trace/x").status == 400);
    }

    TEST_CASE("questionnaire recalibrates the baseline")
    {
        Fixture f;
        const auto r = f.post("/phq9", kAllZero);
        REQUIRE(r.status == 200);
        CHECK(r.body.at("baseline_changed") == true);
        CHECK(r.body.at("windows_absorbed") == 1);
        CHECK(r.body.at("total") == 0);
        const auto b = f.get("/baselines");
        CHECK(b.body.at("versions") == 2);
        CHECK(b.body.at("metrics").at("f0_std").at("sample_count") == 3);
        CHECK(f.post("/phq9", kAllZero).status == 409);
    }

    TEST_CASE("questionnaire validation and routing errors")
    {
        Fixture f;
        auto eight = json::parse(kAllZero);
        eight["items"].erase("Q9");
        CHECK(f.post("/phq9", eight.dump()).status == 400);
        CHECK(f.post("/phq9", "{not json").status == 400);
        CHECK(f.post("/phq9", kAllZero, {{"subject", "ghost"}}).status == 404);
        CHECK(f.get("/phq9").status == 405);
        CHECK(f.post("/subjects", "").status == 405);
        CHECK(f.get("/nowhere").status == 404);
        CHECK(f.get("/indicators", {{"subject", "ghost"}}).status == 404);
    }

    TEST_CASE("subject resolution on an empty store")
    {
        testsupport::TempDir dir("api-empty");
        auto store = Store::open(dir.path());
        ApiService service(*store, nullptr);
        CHECK(service.handle({"GET", "/indicators", {}, ""}).status == 404);
        CHECK(service.handle({"GET", "/subjects", {}, ""}).body.at("subjects").empty());
    }

    TEST_CASE("HTTP round trip")
    {
        Fixture f;
        ApiServer server(*f.service);
        const int port = server.start("127.0.0.1", 0);
        REQUIRE(port > 0);
        httplib::Client client("127.0.0.1", port);
        auto res = client.Get("/support?subject=subject");
        REQUIRE(res);
        CHECK(res->status == 200);
        CHECK(json::parse(res->body).at("windows").size() == 1);
        CHECK(res->get_header_value("Access-Control-Allow-Origin") == "*");
        res = client.Post("/phq9?subject=subject", kAllZero, "application/json");
        REQUIRE(res);
        CHECK(res->status == 200);
        res = client.Get("/trace/abc");
        REQUIRE(res);
        CHECK(res->status == 400);
        CHECK(json::parse(res->body).contains("error"));
        server.stop();
    }
}
