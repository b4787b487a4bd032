#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "hearlink/api.hpp"
#include "hearlink/pipeline.hpp"
#include "hearlink/stats.hpp"
#include "hearlink/synth.hpp"

namespace {

using namespace hearlink;
using nlohmann::json;

constexpr int kExitError = 1;
constexpr int kExitNoData = 3;
constexpr int kExitIo = 4;
constexpr int kExitNotRealTime = 5;

std::string data_dir(const std::string& flag)
{
    if (const char* env = std::getenv("HEARLINK_DATA"); env != nullptr && *env != '\0') {
        return env;
    }
    if (flag.empty()) {
        throw ConfigError("no data directory: pass --data or set HEARLINK_DATA");
    }
    return flag;
}

MappingSpec mapping(const std::string& path)
{
    return path.empty() ? default_mapping_spec() : load_mapping_file(path);
}

json read_json_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path);
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError(path + ": " + e.what());
    }
}

SynthProfile default_profile()
{
    SynthProfile p;
    p.phases = {baseline_phase(400.0), depressed_phase(200.0), recovery_phase(200.0)};
    return p;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"hearlink: streaming speech descriptors linked to depressive-indicator scores"};
    app.require_subcommand(1);

    std::string input;
    std::string config_path;
    std::string data_flag;
    std::string subject = "subject";
    double origin = 0.0;
    int serve_port = -1;
    bool keep_serving = false;
    bool no_raw = false;
    double chunk_seconds = 1.0;
    auto* run = app.add_subcommand("run", "Stream audio through the full pipeline into the data directory");
    run->add_option("--input", input, "WAV file, or - for length-prefixed PCM16 chunks on stdin")->required();
    run->add_option("--config", config_path, "Mapping config (JSON); defaults to the bundled table");
    run->add_option("--data", data_flag, "Data directory (HEARLINK_DATA overrides)");
    run->add_option("--subject", subject, "Subject id");
    run->add_option("--origin", origin, "Epoch seconds of stream time 0, used for ISO timestamps");
    run->add_option("--serve-port", serve_port, "Serve the API on this port while streaming");
    run->add_flag("--keep-serving", keep_serving, "Keep the API up after the stream ends");
    run->add_flag("--no-raw", no_raw, "Skip per-frame raw_metrics records");
    run->add_option("--chunk-seconds", chunk_seconds, "Chunk length when reading a WAV file")->check(CLI::PositiveNumber);

    auto* analyze = app.add_subcommand("analyze", "Recompute indicator trajectories from stored contextual metrics");
    analyze->add_option("--data", data_flag, "Data directory (HEARLINK_DATA overrides)");
    analyze->add_option("--config", config_path, "Mapping config (JSON)");
    analyze->add_option("--origin", origin, "Epoch seconds of stream time 0");

    int runs = 1;
    std::string report_path;
    auto* bench = app.add_subcommand("bench", "Per-stage real-time benchmark");
    bench->add_option("--input", input, "WAV file (at least 60 s)")->required();
    bench->add_option("--runs", runs, "Repetitions")->check(CLI::PositiveNumber);
    bench->add_option("--config", config_path, "Mapping config (JSON)");
    bench->add_option("--data", data_flag, "Scratch directory for persisted records");
    bench->add_option("--report", report_path, "Write the JSON report here");

    std::string profile_path;
    std::uint64_t seed = 1;
    std::string out_path;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic speech-like WAV stream");
    synth->add_option("--profile", profile_path, "Phase profile (JSON); defaults to baseline/depressed/recovery");
    synth->add_option("--seed", seed, "Random seed");
    synth->add_option("--out", out_path, "Output WAV")->required();

    std::string manifest_path;
    std::string stats_config;
    std::string method;
    auto* stats_cmd = app.add_subcommand("stats", "Feature-indicator association protocol over a subject manifest");
    stats_cmd->add_option("--manifest", manifest_path, "Tab-separated manifest")->required();
    stats_cmd->add_option("--out", out_path, "Export directory")->required();
    stats_cmd->add_option("--config", stats_config, "Protocol config (JSON)");
    stats_cmd->add_option("--method", method, "pearson or spearman")->check(CLI::IsMember({"pearson", "spearman"}));

    std::string host = "127.0.0.1";
    int port = 8080;
    auto* serve = app.add_subcommand("serve", "Serve the dashboard API over a data directory");
    serve->add_option("--data", data_flag, "Data directory (HEARLINK_DATA overrides)");
    serve->add_option("--port", port, "Port");
    serve->add_option("--host", host, "Bind address");
    serve->add_option("--config", config_path, "Mapping config (JSON)");
    serve->add_option("--origin", origin, "Epoch seconds of stream time 0");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            const auto spec = mapping(config_path);
            auto store = Store::open(data_dir(data_flag));
            SessionOptions options;
            options.subject_id = subject;
            options.origin_epoch = origin;
            options.persist_raw = !no_raw;
            Session session(*store, spec, options);

            std::unique_ptr<ApiService> service;
            std::unique_ptr<ApiServer> server;
            if (serve_port >= 0) {
                service = std::make_unique<ApiService>(*store, [&](const std::string& s) {
                    return s == subject ? &session : nullptr;
                });
                server = std::make_unique<ApiServer>(*service);
                const int bound = server->start("127.0.0.1", serve_port);
                std::cerr << "api listening on 127.0.0.1:" << bound << "\n";
            }

            std::optional<SampleBuffer> buffer;
            ChunkSource source;
            if (input == "-") {
                source = stream_source(std::cin);
            } else {
                buffer = read_wav_file(input);
                source = wav_source(*buffer, chunk_seconds);
            }
            const auto report = run_stream(source, session);
            std::cout << json{{"subject", subject},
                              {"audio_seconds", report.audio_seconds},
                              {"chunks", report.chunks},
                              {"windows", report.windows},
                              {"scored_windows", report.scored_windows},
                              {"warmed_up", session.warmed_up()}}
                             .dump()
                      << "\n";
            if (server && keep_serving) {
                std::cerr << "stream finished; serving until interrupted\n";
                for (;;) {
                    std::this_thread::sleep_for(std::chrono::hours(1));
                }
            }
            return 0;
        }
        if (*analyze) {
            const auto report = run_analysis(data_dir(data_flag), mapping(config_path), origin);
            std::cout << json{{"subjects", report.subjects},
                              {"windows", report.windows},
                              {"appended", report.appended},
                              {"identical", report.identical},
                              {"mismatched", report.mismatched},
                              {"corrupt_lines_skipped", report.corrupt_lines}}
                             .dump()
                      << "\n";
            if (report.corrupt_lines > 0) {
                std::cerr << "warning: skipped " << report.corrupt_lines << " unreadable record line(s)\n";
            }
            return report.mismatched == 0 ? 0 : kExitError;
        }
        if (*bench) {
            const auto buffer = read_wav_file(input);
            const std::filesystem::path scratch =
                data_flag.empty() ? std::filesystem::temp_directory_path() / "hearlink-bench" : std::filesystem::path(data_flag);
            const auto report = benchmark(buffer, mapping(config_path), scratch, runs);
            std::printf("%-7s %-12s %-8s\n", "window", "median_s", "rtf");
            for (std::size_t i = 0; i < report.median_total.size(); ++i) {
                const double rtf = report.median_total[i] / kWindowSeconds;
                std::printf("%-7zu %-12.6f %-8.5f%s\n", i, report.median_total[i], rtf,
                            rtf > 1.0 ? "  warmup excess" : "");
            }
            std::printf("steady-state rtf (windows >= %lld): %.5f  %s\n",
                        static_cast<long long>(kSteadyStateWindow), report.steady_state_rtf,
                        report.real_time ? "real-time" : "NOT real-time");
            if (!report_path.empty()) {
                std::ofstream(report_path) << report.to_json().dump(2) << "\n";
            }
            return report.real_time ? 0 : kExitNotRealTime;
        }
        if (*synth) {
            const auto profile =
                profile_path.empty() ? default_profile() : SynthProfile::from_json(read_json_file(profile_path));
            write_wav_file(out_path, synthesize(profile, seed), profile.sample_rate);
            json spans = json::array();
            for (const auto& s : phase_spans(profile)) {
                spans.push_back({{"phase", s.name}, {"start", s.start}, {"end", s.end}});
            }
            std::cout << json{{"out", out_path}, {"seed", seed}, {"phases", spans}}.dump() << "\n";
            return 0;
        }
        if (*stats_cmd) {
            auto config = stats_config.empty() ? stats::ProtocolConfig{}
                                               : stats::ProtocolConfig::from_json(read_json_file(stats_config));
            if (method == "spearman") {
                config.method = stats::Method::Spearman;
            } else if (method == "pearson") {
                config.method = stats::Method::Pearson;
            }
            const auto manifest = stats::Manifest::load(manifest_path);
            const auto result = stats::run_protocol(manifest, config);
            stats::export_protocol(result, out_path);
            std::cout << json{{"subjects", manifest.rows.size()},
                              {"tests", result.results.size()},
                              {"skipped", result.skipped.size()},
                              {"rejections", result.rejections},
                              {"out", out_path}}
                             .dump()
                      << "\n";
            return 0;
        }
        if (*serve) {
            auto store = Store::open(data_dir(data_flag));
            SessionRegistry registry(*store, mapping(config_path), origin);
            ApiService service(*store, [&](const std::string& s) { return registry.get(s); });
            ApiServer server(service);
            std::cerr << "serving " << store->path() << " on " << host << ":" << port << "\n";
            server.run(host, port);
            return 0;
        }
    } catch (const NoData& e) {
        std::cerr << "no data: " << e.what() << "\n";
        return kExitNoData;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
    return 0;
}
