#include <doctest.h>

#include <sstream>

#include "hearlink/errors.hpp"
#include "hearlink/pipeline.hpp"
#include "hearlink/synth.hpp"
#include "support.hpp"

using namespace hearlink;
namespace fs = std::filesystem;

namespace {

SampleBuffer baseline_audio(double seconds, std::uint64_t seed = 7)
{
    SynthProfile p;
    p.phases = {baseline_phase(seconds)};
    SampleBuffer b;
    b.samples = synthesize(p, seed);
    return b;
}

MappingSpec short_warmup(int windows)
{
    auto spec = default_mapping_spec();
    spec.warmup_windows = windows;
    return spec;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

StreamReport stream_into(const fs::path& dir, const SampleBuffer& audio, const MappingSpec& spec,
                         double chunk_seconds = 1.0)
{
    auto store = Store::open(dir);
    Session session(*store, spec);
    return run_stream(wav_source(audio, chunk_seconds), session);
}

}  // namespace

TEST_SUITE("pipeline")
{
    TEST_CASE("sixty seconds of speech give six warmup windows")
    {
        testsupport::TempDir dir("pipe60");
        const auto report = stream_into(dir.path(), baseline_audio(60.0), default_mapping_spec());
        CHECK(report.windows == 6);
        CHECK(report.scored_windows == 0);
        CHECK(report.audio_seconds == doctest::Approx(60.0));

        auto store = Store::open(dir.path());
        const auto status = store->query(collections::contextual_metrics, "subject", "window_status");
        REQUIRE(status.size() == 6);
        for (const auto& r : status) {
            CHECK(r.detail.at("status") == "warmup");
        }
        CHECK(load_windows(*store, "subject").size() == 6);
        CHECK(store->size(collections::analyzed_metrics) == 0);
        CHECK(store->size(collections::raw_metrics) > 0);
        CHECK(store->size(collections::baselines) == 0);
        CHECK(store->query(collections::aggregated_metrics, "subject", "voiced_fraction").size() == 6);
    }

    TEST_CASE("empty input leaves clean empty collections")
    {
        testsupport::TempDir dir("pipe-empty");
        SampleBuffer empty;
        const auto report = stream_into(dir.path(), empty, default_mapping_spec());
        CHECK(report.windows == 0);
        auto store = Store::open(dir.path());
        for (const auto& name : collection_names()) {
            CHECK(store->size(name) == 0);
            CHECK(store->corrupt_lines(name) == 0);
            CHECK(fs::file_size(dir.path() / (name + ".ndjson")) == 0);
        }
    }

    TEST_CASE("unwritable data directory")
    {
        testsupport::TempDir dir("pipe-io");
        std::ofstream(dir / "blocker") << "x";
        CHECK_THROWS_AS(stream_into(dir / "blocker" / "data", baseline_audio(1.0), default_mapping_spec()), IoError);
    }

    TEST_CASE("warmup completion snapshots the baseline and scoring starts")
    {
        testsupport::TempDir dir("pipe-warm");
        const auto spec = short_warmup(2);
        const auto report = stream_into(dir.path(), baseline_audio(30.0), spec);
        CHECK(report.windows == 3);
        CHECK(report.scored_windows == 1);
        auto store = Store::open(dir.path());
        const auto latest = latest_baseline(*store, "subject");
        REQUIRE(latest);
        CHECK(latest->first == 20.0);
        CHECK(store->query(collections::analyzed_metrics, "subject").size() == 10);
        const auto support = store->query(collections::analyzed_metrics, "subject", "mdd_support");
        REQUIRE(support.size() == 1);
        CHECK(support[0].window_start == 20.0);
    }

    TEST_CASE("triggered analysis with one post-warmup window")
    {
        testsupport::TempDir dir("pipe-analysis");
        const auto spec = short_warmup(2);
        stream_into(dir.path(), baseline_audio(30.0), spec);
        fs::remove(dir / "analyzed_metrics.ndjson");

        const auto first = run_analysis(dir.path(), spec);
        CHECK(first.subjects == 1);
        CHECK(first.windows == 1);
        CHECK(first.appended == 10);
        CHECK(first.mismatched == 0);
        const auto bytes = slurp(dir / "analyzed_metrics.ndjson");

        const auto second = run_analysis(dir.path(), spec);
        CHECK(second.appended == 0);
        CHECK(second.identical == 10);
        CHECK(second.mismatched == 0);
        CHECK(slurp(dir / "analyzed_metrics.ndjson") == bytes);
    }

    TEST_CASE("triggered analysis agrees with live scoring")
    {
        testsupport::TempDir dir("pipe-agree");
        const auto spec = short_warmup(3);
        stream_into(dir.path(), baseline_audio(80.0), spec);
        const auto report = run_analysis(dir.path(), spec);
        CHECK(report.windows == 5);
        CHECK(report.appended == 0);
        CHECK(report.identical == 50);
        CHECK(report.mismatched == 0);
    }

    TEST_CASE("triggered analysis on an empty store")
    {
        testsupport::TempDir dir("pipe-nodata");
        CHECK_THROWS_AS(run_analysis(dir.path()), NoData);
    }

    TEST_CASE("triggered analysis counts corrupt lines")
    {
        testsupport::TempDir dir("pipe-corrupt");
        const auto spec = short_warmup(2);
        stream_into(dir.path(), baseline_audio(30.0), spec);
        std::ofstream(dir / "contextual_metrics.ndjson", std::ios::app) << "{\"subject_id\": \n";
        const auto report = run_analysis(dir.path(), spec);
        CHECK(report.corrupt_lines == 1);
        CHECK(report.mismatched == 0);
    }

    TEST_CASE("chunk size does not change the stored records")
    {
        testsupport::TempDir a("pipe-chunk-a");
        testsupport::TempDir b("pipe-chunk-b");
        const auto audio = baseline_audio(30.0, 3);
        const auto spec = short_warmup(2);
        stream_into(a.path(), audio, spec, 0.37);
        stream_into(b.path(), audio, spec, 10.0);
        for (const auto& name : collection_names()) {
            CHECK_MESSAGE(slurp(a / (name + ".ndjson")) == slurp(b / (name + ".ndjson")), name);
        }
    }

    TEST_CASE("streaming equals batch processing")
    {
        testsupport::TempDir a("pipe-stream");
        testsupport::TempDir b("pipe-batch");
        const auto audio = baseline_audio(30.0, 5);
        const auto spec = short_warmup(2);
        stream_into(a.path(), audio, spec);
        {
            auto store = Store::open(b.path());
            Session session(*store, spec);
            FrontEnd fe;
            auto bundles = fe.push(audio.samples);
            for (auto& x : fe.finish()) {
                bundles.push_back(std::move(x));
            }
            for (const auto& bundle : bundles) {
                session.process(bundle);
            }
        }
        for (const auto& name : collection_names()) {
            CHECK_MESSAGE(slurp(a / (name + ".ndjson")) == slurp(b / (name + ".ndjson")), name);
        }
    }

    TEST_CASE("stream input framed as length-prefixed chunks")
    {
        testsupport::TempDir a("pipe-wire-a");
        testsupport::TempDir b("pipe-wire-b");
        const auto audio = baseline_audio(20.0, 9);
        std::string wire;
        for (Eigen::Index at = 0; at < audio.samples.size(); at += 4000) {
            const auto n = std::min<Eigen::Index>(4000, audio.samples.size() - at);
            const auto bytes = encode_chunk(audio.samples.segment(at, n));
            wire.append(bytes.begin(), bytes.end());
        }
        std::istringstream in(wire);
        {
            auto store = Store::open(a.path());
            Session session(*store, default_mapping_spec());
            const auto report = run_stream(stream_source(in), session);
            CHECK(report.windows == 2);
        }
        stream_into(b.path(), audio, default_mapping_spec());
        // 16-bit transport quantizes samples, so compare window counts and metric names
        auto sa = Store::open(a.path());
        auto sb = Store::open(b.path());
        CHECK(sa->size(collections::aggregated_metrics) == sb->size(collections::aggregated_metrics));
    }

    TEST_CASE("source errors stop the chain and are rethrown")
    {
        testsupport::TempDir dir("pipe-throw");
        auto store = Store::open(dir.path());
        Session session(*store, default_mapping_spec());
        int calls = 0;
        ChunkSource failing = [&]() -> std::optional<Signal> {
            if (++calls > 3) {
                throw DecodeError("truncated chunk");
            }
            return Signal(Signal::Zero(16000));
        };
        CHECK_THROWS_AS(run_stream(failing, session), DecodeError);
    }

    TEST_CASE("restored session continues from stored state")
    {
        testsupport::TempDir dir("pipe-restore");
        const auto spec = short_warmup(2);
        const auto audio = baseline_audio(30.0, 2);
        stream_into(dir.path(), audio, spec);
        auto store = Store::open(dir.path());
        SessionOptions options;
        auto session = Session::restore(*store, spec, options);
        REQUIRE(session);
        CHECK(session->warmed_up());
        Phq9Response zero;
        const auto outcome = session->submit_phq9(zero);
        CHECK(outcome.baseline_changed);
        CHECK(outcome.windows_absorbed == 1);
        CHECK(outcome.response.timestamp == 30.0);
        CHECK(load_phq9(*store, "subject").size() == 1);
        CHECK_THROWS_AS(session->submit_phq9(zero), Conflict);
        CHECK(latest_baseline(*store, "subject")->first == 30.0);
    }

    TEST_CASE("questionnaire during warmup is a conflict")
    {
        testsupport::TempDir dir("pipe-early");
        auto store = Store::open(dir.path());
        Session session(*store, default_mapping_spec());
        CHECK_THROWS_AS(session.submit_phq9(Phq9Response{}), Conflict);
    }

    TEST_CASE("benchmark stage times account for the window total")
    {
        testsupport::TempDir dir("pipe-bench");
        const auto report = benchmark(baseline_audio(60.0), short_warmup(2), dir.path(), 1);
        REQUIRE(report.runs.size() == 1);
        CHECK(report.runs[0].windows.size() == 6);
        CHECK(report.max_accounting_error <= 0.05);
        for (const auto& w : report.runs[0].windows) {
            CHECK(w.total > 0.0);
            CHECK(std::abs(w.stage_sum() - w.total) <= 0.05 * w.total);
        }
        CHECK(report.runs[0].stage_timings().size() == 30);
        const auto j = report.to_json();
        CHECK(j.contains("steady_state_rtf"));
        CHECK(report.real_time == (report.steady_state_rtf < 1.0));
    }
}
