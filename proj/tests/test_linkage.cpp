#include <doctest.h>

#include <random>
#include <set>

#include "hearlink/errors.hpp"
#include "hearlink/linkage.hpp"

using namespace hearlink;
using doctest::Approx;

namespace {

MetricBaseline baseline_of(double mean, double sigma, std::int64_t n = 30)
{
    MetricBaseline b;
    b.mean = mean;
    b.m2 = sigma * sigma * static_cast<double>(n);
    b.count = n;
    return b;
}

Contribution contribution(double psi, double weight, bool available)
{
    Contribution c;
    c.psi = psi;
    c.weight = weight;
    c.available = available;
    return c;
}

HLDWindow window_with(std::int64_t index, const std::map<std::string, double>& metrics, bool quality = true)
{
    HLDWindow w;
    w.index = index;
    w.window_start = 10.0 * static_cast<double>(index);
    w.metrics = metrics;
    w.quality_ok = quality;
    w.voiced_fraction = quality ? 0.6 : 0.0;
    return w;
}

// Warmup windows alternate mean +- spread per metric so every sigma is positive.
std::map<std::string, double> jittered(const std::vector<std::string>& features, int k, double spread = 1.0)
{
    std::map<std::string, double> m;
    for (std::size_t f = 0; f < features.size(); ++f) {
        m[features[f]] = 10.0 + static_cast<double>(f) + (k % 2 == 0 ? spread : -spread);
    }
    return m;
}

LinkageEngine warmed_engine(const MappingSpec& spec)
{
    LinkageEngine engine(spec);
    const auto features = spec.features();
    for (int k = 0; k < spec.warmup_windows; ++k) {
        const auto a = engine.process_window(window_with(k, jittered(features, k)));
        REQUIRE(a.status == WindowStatus::Warmup);
    }
    REQUIRE(engine.warmed_up());
    return engine;
}

std::map<std::string, double> centered(const LinkageEngine& engine)
{
    std::map<std::string, double> m;
    for (const auto& [name, b] : engine.baseline().metrics) {
        m[name] = b.mean;
    }
    return m;
}

}  // namespace

TEST_SUITE("linkage")
{
    TEST_CASE("support rule over all 512 indicator vectors")
    {
        for (unsigned bits = 0; bits < 512; ++bits) {
            const IndicatorFlags flags(bits);
            const bool expected = std::popcount(bits) >= 5 && ((bits & 1U) != 0 || (bits & 2U) != 0);
            CHECK(mdd_support(flags) == expected);
        }
    }

    TEST_CASE("support rule is monotone in added indicators")
    {
        for (unsigned bits = 0; bits < 512; ++bits) {
            if (!mdd_support(IndicatorFlags(bits))) {
                continue;
            }
            for (unsigned i = 0; i < 9; ++i) {
                CHECK(mdd_support(IndicatorFlags(bits | (1U << i))));
            }
        }
    }

    TEST_CASE("support rule examples")
    {
        CHECK_FALSE(mdd_support(IndicatorFlags(0b111111100)));
        CHECK(mdd_support(IndicatorFlags(0b000111101)));
        CHECK_FALSE(mdd_support(IndicatorFlags(0b000011101)));
        CHECK_FALSE(mdd_support(IndicatorFlags(0)));
    }

    TEST_CASE("standardize examples")
    {
        CHECK(standardize(7.0, baseline_of(7.0, 2.0), 3.0) == 0.0);
        CHECK(standardize(20.0, baseline_of(10.0, 2.0), 3.0) == 3.0);
        CHECK(standardize(0.0, baseline_of(10.0, 2.0), 3.0) == -3.0);
        const auto s = standardize_detail(1e-3, baseline_of(0.0, 0.0), 3.0, 1e-6);
        CHECK(s.z == Approx(1000.0));
        CHECK(s.z_tilde == 3.0);
        CHECK(s.clipped);
        CHECK(standardize(12.0, baseline_of(10.0, 2.0), 3.0) == Approx(1.0));
    }

    TEST_CASE("clipped value never exceeds the cap")
    {
        std::mt19937_64 rng(5);
        std::normal_distribution<double> big(0.0, 1e3);
        std::uniform_real_distribution<double> tau(0.1, 5.0);
        std::uniform_real_distribution<double> sigma(0.0, 3.0);
        for (int i = 0; i < 10000; ++i) {
            const double t = tau(rng);
            const double sd = i % 3 == 0 ? 0.0 : sigma(rng);
            CHECK(std::abs(standardize(big(rng), baseline_of(big(rng), sd), t)) <= t);
        }
    }

    TEST_CASE("direction modifiers")
    {
        CHECK(apply_direction(-1.5, Direction::Negative) == 1.5);
        CHECK(apply_direction(-2.0, Direction::Both) == 2.0);
        CHECK(apply_direction(0.7, Direction::Positive) == 0.7);
        for (double z : {-3.0, -0.2, 0.0, 0.4, 2.9}) {
            CHECK(apply_direction(z, Direction::Both) >= 0.0);
            CHECK(apply_direction(-z, Direction::Positive) == -apply_direction(z, Direction::Positive));
            CHECK(apply_direction(-z, Direction::Negative) == -apply_direction(z, Direction::Negative));
        }
        CHECK(parse_direction("positive") == Direction::Positive);
        CHECK(parse_direction("negative") == Direction::Negative);
        CHECK(parse_direction("both") == Direction::Both);
        CHECK_THROWS_AS(parse_direction("sideways"), ConfigError);
    }

    TEST_CASE("indicator score examples")
    {
        const std::vector<Contribution> uniform = {contribution(1.0, 1.0, true), contribution(1.0, 1.0, true)};
        auto s = indicator_score(uniform);
        CHECK(s.score == 1.0);
        CHECK(s.coverage == 1.0);

        const std::vector<Contribution> mean = {contribution(2.0, 1.0, true), contribution(0.0, 1.0, true)};
        CHECK(indicator_score(mean).score == 1.0);

        const std::vector<Contribution> partial = {contribution(3.0, 1.0, true), contribution(0.0, 1.0, false),
                                                   contribution(0.0, 1.0, false), contribution(0.0, 1.0, false)};
        s = indicator_score(partial);
        CHECK(s.score == 3.0);
        CHECK(s.coverage == 0.25);

        const std::vector<Contribution> none = {contribution(1.0, 1.0, false)};
        s = indicator_score(none);
        CHECK_FALSE(s.score);
        CHECK(s.coverage == 0.0);
        CHECK_FALSE(indicator_score({}).score);

        const std::vector<Contribution> weighted = {contribution(3.0, 2.0, true), contribution(0.0, 1.0, true)};
        CHECK(*indicator_score(weighted).score == Approx(2.0));
    }

    TEST_CASE("smoothing examples")
    {
        CHECK(ema_update(1.7, 0.3, 0.0) == 1.7);
        CHECK(ema_update(1.0, 0.0, 0.5) == 0.5);
        CHECK(ema_update(2.0, std::nullopt, 0.9) == 2.0);
        CHECK(ema_update(std::nullopt, 0.4, 0.9) == 0.4);
        CHECK_FALSE(ema_update(std::nullopt, std::nullopt, 0.9));
    }

    TEST_CASE("smoothing converges geometrically")
    {
        for (double beta : {0.0, 0.5, 0.9, 0.99}) {
            const double c = 2.5;
            const double s0 = -1.0;
            std::optional<double> s = s0;
            for (int n = 1; n <= 200; ++n) {
                s = ema_update(c, s, beta);
                const double expected = std::pow(beta, n) * std::abs(s0 - c);
                // rounding error measured against the initial gap
                CHECK(std::abs(std::abs(*s - c) - expected) <= 1e-12 * std::abs(s0 - c));
            }
        }
    }

    TEST_CASE("smoothed value stays within the range of its inputs")
    {
        std::mt19937_64 rng(99);
        std::normal_distribution<double> score(0.0, 2.0);
        std::uniform_real_distribution<double> beta(0.0, 0.999);
        std::bernoulli_distribution absent(0.2);
        for (int trial = 0; trial < 10000; ++trial) {
            const double b = beta(rng);
            std::optional<double> s;
            double lo = std::numeric_limits<double>::infinity();
            double hi = -lo;
            for (int t = 0; t < 20; ++t) {
                std::optional<double> x;
                if (!absent(rng)) {
                    x = score(rng);
                    lo = std::min(lo, *x);
                    hi = std::max(hi, *x);
                }
                s = ema_update(x, s, b);
                if (s) {
                    CHECK(*s >= lo);
                    CHECK(*s <= hi);
                }
            }
        }
    }

    TEST_CASE("presence threshold is inclusive")
    {
        CHECK(binarize(1.0, 1.0));
        CHECK_FALSE(binarize(1.0 - 1e-9, 1.0));
        CHECK_FALSE(binarize(std::nullopt, 1.0));
    }

    TEST_CASE("bundled mapping table")
    {
        const auto& spec = default_mapping_spec();
        CHECK(spec.entries.size() == 54);
        std::set<std::tuple<std::string, std::string, int>> unique;
        for (const auto& e : spec.entries) {
            CHECK(e.indicator >= 1);
            CHECK(e.indicator <= 9);
            CHECK(e.weight == 1.0);
            CHECK(e.relationship == Relationship::Gradual);
            unique.emplace(e.feature, e.biomarker, e.indicator);
        }
        CHECK(unique.size() == spec.entries.size());
        CHECK(spec.default_clip == 3.0);
        CHECK(spec.epsilon == 1e-6);
        CHECK(spec.warmup_windows == 30);
        CHECK(spec.params(5).beta == 0.5);
        CHECK(spec.params(1).beta == 0.9);
        CHECK(spec.params(3).beta == 0.7);
        CHECK(load_mapping_config(default_mapping_document()) == spec);

        bool f0_std_on_5 = false;
        for (const auto* e : spec.entries_for(5)) {
            f0_std_on_5 |= e->feature == "f0_std" && e->direction == Direction::Negative;
        }
        CHECK(f0_std_on_5);
    }

    TEST_CASE("mapping config validation")
    {
        const std::string row =
            R"({"feature": "f0_std", "biomarker": "b", "indicator": 5, "relationship": "gradual", "direction": "DIR", "weight": 1.0, "descriptor": "HLD", "signal_group": "prosodic"})";
        auto with = [&](const std::string& dir, const std::string& indicator = "5") {
            std::string r = row;
            r.replace(r.find("DIR"), 3, dir);
            r.replace(r.find("\"indicator\": 5"), 14, "\"indicator\": " + indicator);
            return r;
        };
        CHECK_THROWS_AS(load_mapping_config(std::string_view("{\"entries\": [" + with("sideways") + "]}")),
                        ConfigError);
        CHECK_THROWS_AS(load_mapping_config(std::string_view("{\"entries\": [" + with("positive", "10") + "]}")),
                        ConfigError);
        CHECK_THROWS_AS(load_mapping_config(std::string_view("{\"entries\": [" + with("positive", "0") + "]}")),
                        ConfigError);
        CHECK_THROWS_AS(load_mapping_config(std::string_view("{\"entries\": [" + with("positive") + ", " +
                                                             with("negative") + "]}")),
                        ConfigError);
        CHECK_THROWS_AS(load_mapping_config(std::string_view(R"({"indicators": {"3": {"beta": 1.0}}})")),
                        ConfigError);
        CHECK_THROWS_AS(load_mapping_config(std::string_view("not json")), ConfigError);
        CHECK_THROWS_AS(load_mapping_config(std::string_view("[]")), ConfigError);

        const auto one = load_mapping_config(std::string_view("{\"entries\": [" + with("both") + "]}"));
        REQUIRE(one.entries.size() == 1);
        CHECK(one.entries[0].direction == Direction::Both);

        const auto tuned = load_mapping_config(
            std::string_view(R"({"entries": [], "indicators": {"5": {"beta": 0.9, "theta": 1.5}}, "clip": {"default": 2.0, "f0_std": 4.0}})"));
        CHECK(tuned.params(5).beta == 0.9);
        CHECK(tuned.params(5).theta == 1.5);
        CHECK(tuned.tau("f0_std") == 4.0);
        CHECK(tuned.tau("jitter") == 2.0);
    }

    TEST_CASE("empty mapping table gives zero coverage everywhere")
    {
        auto spec = load_mapping_config(std::string_view(R"({"entries": [], "warmup_windows": 2})"));
        CHECK(spec.entries.empty());
        LinkageEngine engine(spec);
        engine.process_window(window_with(0, {{"f0_std", 10.0}}));
        engine.process_window(window_with(1, {{"f0_std", 12.0}}));
        const auto a = engine.process_window(window_with(2, {{"f0_std", 11.0}}));
        CHECK(a.status == WindowStatus::Scored);
        for (const auto& s : a.indicators) {
            CHECK(s.coverage == 0.0);
            CHECK_FALSE(s.score);
            CHECK_FALSE(s.active);
        }
        CHECK_FALSE(a.support);
    }

    TEST_CASE("incremental baseline statistics")
    {
        MetricBaseline b;
        for (double x : {2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0}) {
            b.add(x, 1.0);
        }
        CHECK(b.mean == Approx(5.0));
        CHECK(b.sigma() == Approx(2.0));
        MetricBaseline merged;
        for (double x : {2.0, 4.0, 4.0}) {
            merged.add(x, 1.0);
        }
        merged.merge(5, 6.0, 16.0, 2.0);  // {4, 5, 5, 7, 9}: mean 6, m2 16
        CHECK(merged.mean == Approx(5.0));
        CHECK(merged.sigma() == Approx(2.0));
        CHECK(merged.count == 8);
        CHECK(merged.last_update == 2.0);
        CHECK_THROWS_AS(static_cast<void>(BaselineProfile{}.at("f0_std")), MissingBaseline);
    }

    TEST_CASE("questionnaire parsing")
    {
        auto body = nlohmann::json::parse(
            R"({"timestamp": 12.5, "items": {"Q1": 0, "Q2": 1, "Q3": 2, "Q4": 3, "Q5": 0, "Q6": 0, "Q7": 0, "Q8": 0, "Q9": 0}})");
        const auto r = Phq9Response::from_json(body);
        CHECK(r.timestamp == 12.5);
        CHECK(r.total() == 6);
        CHECK(Phq9Response::from_json(r.to_json()).items == r.items);

        auto missing = body;
        missing["items"].erase("Q9");
        CHECK_THROWS_AS(Phq9Response::from_json(missing), ValidationError);
        auto high = body;
        high["items"]["Q3"] = 4;
        CHECK_THROWS_AS(Phq9Response::from_json(high), ValidationError);
        auto text = body;
        text["items"]["Q3"] = "2";
        CHECK_THROWS_AS(Phq9Response::from_json(text), ValidationError);
        auto extra = body;
        extra["items"]["Q10"] = 1;
        CHECK_THROWS_AS(Phq9Response::from_json(extra), ValidationError);
        CHECK_THROWS_AS(Phq9Response::from_json(nlohmann::json::array()), ValidationError);
    }

    TEST_CASE("questionnaire items map to indicators")
    {
        const std::array<int, 9> expected = {2, 1, 4, 6, 3, 7, 5, 8, 9};
        CHECK(kPhqItemIndicator == expected);
    }

    TEST_CASE("baseline recalibration by questionnaire")
    {
        const auto& spec = default_mapping_spec();
        const auto features = spec.features();
        BaselineProfile base;
        for (std::size_t f = 0; f < features.size(); ++f) {
            base.metrics[features[f]] = baseline_of(10.0, 1.0, 30);
        }
        std::vector<HLDWindow> recent;
        for (int k = 0; k < 4; ++k) {
            std::map<std::string, double> m;
            for (const auto& f : features) {
                m[f] = 14.0 + k;  // batch mean 15.5
            }
            recent.push_back(window_with(40 + k, m));
        }
        recent.push_back(window_with(44, {{"f0_std", 1000.0}}, false));  // low quality, ignored
        const MappingSpec before = spec;

        SUBCASE("all items zero")
        {
            Phq9Response r;
            const auto updated = update_baseline(base, r, recent, spec);
            for (const auto& f : features) {
                const auto& b = updated.metrics.at(f);
                CHECK(b.count == 34);
                CHECK(b.mean == Approx(10.0 + (15.5 - 10.0) * 4.0 / 34.0));
                CHECK(b.mean > 10.0);
            }
        }
        SUBCASE("all items three")
        {
            Phq9Response r;
            r.items.fill(3);
            CHECK(update_baseline(base, r, recent, spec) == base);
        }
        SUBCASE("only Q7 answered zero")
        {
            Phq9Response r;
            r.items.fill(2);
            r.items[6] = 0;
            const auto updated = update_baseline(base, r, recent, spec);
            std::set<std::string> on5;
            for (const auto* e : spec.entries_for(5)) {
                on5.insert(e->feature);
            }
            for (const auto& f : features) {
                const bool changed = !(updated.metrics.at(f) == base.metrics.at(f));
                CHECK_MESSAGE(changed == (on5.count(f) == 1), f);
            }
        }
        SUBCASE("out-of-range item")
        {
            Phq9Response r;
            r.items[0] = 5;
            CHECK_THROWS_AS(update_baseline(base, r, recent, spec), ValidationError);
        }
        CHECK(spec == before);
    }

    TEST_CASE("engine keeps the mapping unchanged through recalibration")
    {
        auto engine = warmed_engine(default_mapping_spec());
        engine.process_window(window_with(30, jittered(default_mapping_spec().features(), 3, 4.0)));
        CHECK(engine.recent_windows().size() == 1);
        Phq9Response r;
        CHECK(engine.apply_phq9(r));
        CHECK(engine.spec() == default_mapping_spec());
        CHECK(engine.recent_windows().empty());
        CHECK_FALSE(engine.apply_phq9(r));
    }

    TEST_CASE("cold start emits no scores until thirty quality windows")
    {
        LinkageEngine engine;
        const auto features = engine.spec().features();
        int k = 0;
        for (; k < 10; ++k) {
            engine.process_window(window_with(k, jittered(features, k)));
        }
        const auto low = engine.process_window(window_with(k++, {}, false));
        CHECK(low.status == WindowStatus::Warmup);
        CHECK(engine.warmup_seen() == 10);
        for (; engine.warmup_seen() < 30; ++k) {
            const auto a = engine.process_window(window_with(k, jittered(features, k)));
            CHECK(a.status == WindowStatus::Warmup);
            for (const auto& s : a.indicators) {
                CHECK_FALSE(s.score);
                CHECK_FALSE(s.smoothed);
            }
            CHECK_FALSE(a.support);
        }
        CHECK(k == 31);
        const auto first = engine.process_window(window_with(k, jittered(features, k)));
        CHECK(first.status == WindowStatus::Scored);
    }

    TEST_CASE("a window at the baseline means scores zero")
    {
        auto engine = warmed_engine(default_mapping_spec());
        const auto a = engine.process_window(window_with(30, centered(engine)));
        REQUIRE(a.status == WindowStatus::Scored);
        for (const auto& c : a.contextual) {
            if (c.z_tilde) {
                CHECK(*c.z_tilde == 0.0);
            }
        }
        for (const auto& s : a.indicators) {
            if (s.score) {
                CHECK(*s.score == 0.0);
            }
            CHECK_FALSE(s.active);
        }
        CHECK_FALSE(a.support);
        CHECK(a.active_count == 0);
    }

    TEST_CASE("absent reasons are reported")
    {
        auto engine = warmed_engine(default_mapping_spec());
        auto m = centered(engine);
        m.erase("jitter");
        auto a = engine.process_window(window_with(30, m));
        for (const auto& c : a.contextual) {
            if (c.metric == "jitter") {
                CHECK(c.absent_reason == "missing_metric");
            }
        }
        a = engine.process_window(window_with(31, {}, false));
        CHECK(a.status == WindowStatus::LowQuality);
        for (const auto& c : a.contextual) {
            CHECK(c.absent_reason == "low_quality");
        }

        LinkageEngine partial(default_mapping_spec());
        for (int k = 0; k < 30; ++k) {
            partial.process_window(window_with(k, {{"f0_std", 20.0 + k % 2}}));
        }
        a = partial.process_window(window_with(30, {{"f0_std", 20.5}, {"jitter", 0.01}}));
        for (const auto& c : a.contextual) {
            if (c.metric == "jitter") {
                CHECK(c.absent_reason == "missing_baseline");
                CHECK(c.raw == 0.01);
            }
        }
    }

    TEST_CASE("low-quality windows hold the smoothed scores")
    {
        auto engine = warmed_engine(default_mapping_spec());
        auto m = centered(engine);
        m["f0_std"] -= 10.0;
        const auto a = engine.process_window(window_with(30, m));
        const auto b = engine.process_window(window_with(31, {}, false));
        for (std::size_t i = 0; i < a.indicators.size(); ++i) {
            CHECK(b.indicators[i].smoothed == a.indicators[i].smoothed);
            CHECK_FALSE(b.indicators[i].score);
            CHECK(b.indicators[i].coverage == 0.0);
        }
    }

    TEST_CASE("sustained drop in pitch variability raises indicator 5 monotonically")
    {
        auto engine = warmed_engine(default_mapping_spec());
        const auto& b = engine.baseline().metrics.at("f0_std");
        auto m = centered(engine);
        m["f0_std"] = b.mean - 3.0 * b.sigma();
        double previous = -1.0;
        double last = 0.0;
        for (int k = 30; k < 60; ++k) {
            const auto a = engine.process_window(window_with(k, m));
            const auto& s5 = a.indicators[4];
            REQUIRE(s5.smoothed);
            CHECK(*s5.smoothed >= previous);
            previous = *s5.smoothed;
            last = *s5.score;
        }
        CHECK(previous == Approx(last).epsilon(1e-9));
        CHECK(last > 0.0);
    }

    TEST_CASE("a single-window spike moves the smoothed score by at most a tenth")
    {
        auto spec = default_mapping_spec();
        for (auto& p : spec.indicators) {
            p.beta = 0.9;
        }
        auto engine = warmed_engine(spec);
        const auto base = centered(engine);
        for (int k = 30; k < 35; ++k) {
            engine.process_window(window_with(k, base));
        }
        auto spike = base;
        for (auto& [name, v] : spike) {
            v += 100.0;
        }
        const auto s = engine.process_window(window_with(35, spike));
        const auto after = engine.process_window(window_with(36, base));
        for (const auto& state : s.indicators) {
            if (!state.score) {
                continue;
            }
            CHECK(std::abs(*state.smoothed) <= 0.1 * std::abs(*state.score) + 1e-9);
            const auto& next = after.indicators[static_cast<std::size_t>(state.indicator - 1)];
            CHECK(std::abs(*next.smoothed) <= std::abs(*state.smoothed));
        }
    }

    TEST_CASE("trace reproduces every indicator score")
    {
        auto engine = warmed_engine(default_mapping_spec());
        std::mt19937_64 rng(3);
        std::normal_distribution<double> noise(0.0, 2.0);
        for (int k = 30; k < 60; ++k) {
            auto m = centered(engine);
            for (auto& [name, v] : m) {
                v += noise(rng);
            }
            const auto a = engine.process_window(window_with(k, m));
            for (const auto& s : a.indicators) {
                CHECK(indicator_score(s.trace).score == s.score);
                for (const auto& c : s.trace) {
                    if (c.available) {
                        CHECK(c.psi == apply_direction(c.z_tilde, c.direction));
                    }
                }
            }
        }
    }

    TEST_CASE("replay from contextual values matches live scoring")
    {
        auto live = warmed_engine(default_mapping_spec());
        LinkageEngine replay(default_mapping_spec());
        replay.mark_warmed_up();
        std::mt19937_64 rng(8);
        std::normal_distribution<double> noise(0.0, 1.5);
        for (int k = 30; k < 50; ++k) {
            auto m = centered(live);
            for (auto& [name, v] : m) {
                v += noise(rng);
            }
            const auto a = live.process_window(window_with(k, m, k % 7 != 0));
            const auto b = replay.score_contextual(a.index, a.window_start, a.status, a.contextual);
            for (std::size_t i = 0; i < a.indicators.size(); ++i) {
                CHECK(a.indicators[i].score == b.indicators[i].score);
                CHECK(a.indicators[i].smoothed == b.indicators[i].smoothed);
                CHECK(a.indicators[i].active == b.indicators[i].active);
            }
            CHECK(a.support == b.support);
        }
    }

    TEST_CASE("window status names round trip")
    {
        for (auto s : {WindowStatus::Warmup, WindowStatus::LowQuality, WindowStatus::Scored}) {
            CHECK(parse_window_status(to_string(s)) == s);
        }
        CHECK_THROWS_AS(parse_window_status("other"), ValidationError);
    }
}
