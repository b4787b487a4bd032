#include <doctest.h>

#include "hearlink/audio.hpp"
#include "hearlink/errors.hpp"
#include "hearlink/pipeline.hpp"
#include "hearlink/synth.hpp"

using namespace hearlink;
using doctest::Approx;

namespace {

std::map<std::string, double> phase_means(const SynthPhase& phase, std::uint64_t seed)
{
    SynthProfile p;
    p.phases = {phase};
    FrontEnd fe;
    auto out = fe.push(synthesize(p, seed));
    for (auto& b : fe.finish()) {
        out.push_back(std::move(b));
    }
    std::vector<HLDWindow> windows;
    for (auto& b : out) {
        windows.push_back(b.window);
    }
    std::map<std::string, double> sum;
    std::map<std::string, int> n;
    for (const auto& w : windows) {
        if (!w.quality_ok) {
            continue;
        }
        for (const auto& [k, v] : w.metrics) {
            sum[k] += v;
            ++n[k];
        }
    }
    for (auto& [k, v] : sum) {
        v /= n[k];
    }
    return sum;
}

}  // namespace

TEST_SUITE("synth")
{
    TEST_CASE("depressed phase is flatter, slower and more paused than baseline")
    {
        const auto base = phase_means(baseline_phase(60.0), 11);
        const auto low = phase_means(depressed_phase(60.0), 11);
        CHECK(base.at("f0_std") > low.at("f0_std"));
        CHECK(base.at("f0_avg") > low.at("f0_avg"));
        CHECK(base.at("articulation_rate") > low.at("articulation_rate"));
        CHECK(low.at("pause_frequency") > base.at("pause_frequency"));
        CHECK(low.at("pause_duration") > base.at("pause_duration"));
        CHECK(base.at("f0_avg") == Approx(180.0).epsilon(0.05));
        CHECK(low.at("f0_avg") == Approx(150.0).epsilon(0.05));
    }

    TEST_CASE("same seed gives identical bytes")
    {
        SynthProfile p;
        p.phases = {baseline_phase(5.0), depressed_phase(5.0)};
        const auto a = encode_wav(synthesize(p, 42), p.sample_rate);
        const auto b = encode_wav(synthesize(p, 42), p.sample_rate);
        CHECK(a == b);
        CHECK(a != encode_wav(synthesize(p, 43), p.sample_rate));
        CHECK(synthesize(p, 42).size() == 160000);
        CHECK(synthesize(p, 42).cwiseAbs().maxCoeff() < 1.0);
    }

    TEST_CASE("profile validation")
    {
        SynthProfile p;
        p.phases = {baseline_phase(0.0)};
        CHECK_THROWS_AS(p.validate(), ValidationError);
        CHECK_THROWS_AS(synthesize(p, 1), ValidationError);
        p.phases = {baseline_phase(10.0)};
        CHECK_NOTHROW(p.validate());
        p.phases[0].f0_mean = 40.0;
        CHECK_THROWS_AS(p.validate(), ValidationError);
        p.phases = {baseline_phase(10.0)};
        p.phases[0].name = "manic";
        CHECK_THROWS_AS(p.validate(), ValidationError);
        p.phases = {baseline_phase(10.0)};
        p.phases[0].amplitude = 0.0;
        CHECK_THROWS_AS(p.validate(), ValidationError);
        p.phases.clear();
        CHECK_THROWS_AS(p.validate(), ValidationError);
    }

    TEST_CASE("profile JSON round trip and phase spans")
    {
        SynthProfile p;
        p.phases = {baseline_phase(400.0), depressed_phase(200.0), recovery_phase(200.0)};
        const auto q = SynthProfile::from_json(p.to_json());
        CHECK(q.to_json() == p.to_json());
        CHECK(q.total_duration() == 800.0);
        const auto spans = phase_spans(q);
        REQUIRE(spans.size() == 3);
        CHECK(spans[1].name == "depressed");
        CHECK(spans[1].start == 400.0);
        CHECK(spans[2].end == 800.0);

        const auto partial = SynthProfile::from_json(
            nlohmann::json::parse(R"({"phases": [{"name": "depressed", "duration": 30, "f0_mean": 140}]})"));
        CHECK(partial.phases[0].f0_mean == 140.0);
        CHECK(partial.phases[0].f0_std == SynthPhase{}.f0_std);
        CHECK_THROWS_AS(SynthProfile::from_json(nlohmann::json::parse(R"({"phases": [{"duration": "long"}]})")),
                        ValidationError);
    }
}
