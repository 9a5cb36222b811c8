#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "crowd/pipeline.hpp"
#include "crowd/report.hpp"
#include "crowd/service.hpp"
#include "crowd/simulator.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitMisaligned = 2;

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return json::parse(in);
}

std::ofstream open_output(const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

// --- simulate -------------------------------------------------------------

struct SimulateArgs {
    std::string preset;
    std::optional<std::uint64_t> seed;
    std::optional<double> days;
    std::string out;
    std::optional<int> shift_day;
    double shift_carry = 1.0;
    double shift_passerby = 1.0;
};

int run_simulate(const SimulateArgs& a) {
    auto config = crowd::sim::preset(a.preset);
    if (a.seed) config.seed = *a.seed;
    if (a.days) config.duration_hours = *a.days * 24.0;
    if (a.shift_day) config.regime_shift = crowd::sim::RegimeShift{*a.shift_day, a.shift_carry, a.shift_passerby};
    const auto output = crowd::sim::simulate(config);
    crowd::sim::write_logs(output, config.topology, a.out);
    open_output(fs::path(a.out) / "scenario.json") << crowd::sim::to_json(config).dump(2) << '\n';
    std::cerr << "simulate: " << output.probes.size() << " probes, " << output.camera.size()
              << " camera events, " << output.window_count << " windows -> " << a.out << '\n';
    return 0;
}

// --- replay ---------------------------------------------------------------

struct ReplayArgs {
    std::string probes;
    std::string camera;
    std::string topology;
    std::string config;
    std::vector<std::string> algorithms;
    std::optional<std::size_t> q;
    std::string out;
    std::string store;
    bool lenient = false;
    std::optional<std::int64_t> windows;
    std::optional<std::int64_t> window_seconds;
    std::string epoch_origin;
};

crowd::PipelineConfig load_pipeline_config(const std::string& path) {
    crowd::PipelineConfig config;
    if (!path.empty()) config = crowd::pipeline_config_from_json(read_json_file(path));
    crowd::apply_environment(config);
    return config;
}

int run_replay_command(const ReplayArgs& a) {
    auto config = load_pipeline_config(a.config);
    const std::size_t q = a.q.value_or(config.calibrations.front().q);
    if (!a.algorithms.empty()) {
        config.calibrations.clear();
        for (const auto& name : a.algorithms) config.calibrations.push_back(crowd::parse_calibration_spec(name, q));
    } else if (a.q) {
        config.calibrations.front().q = *a.q;
    }
    if (a.window_seconds) config.window = std::chrono::seconds{*a.window_seconds};
    if (!a.epoch_origin.empty()) config.epoch_origin = crowd::parse_timestamp(a.epoch_origin);
    if (!a.store.empty()) config.store_path = a.store;
    if (config.salt.salt.empty()) config.salt = crowd::random_salt();

    const auto topology = crowd::validate_topology(crowd::load_topology(a.topology));
    crowd::ReplayOptions options;
    options.strict = !a.lenient;
    options.window_count = a.windows;
    const auto result = crowd::run_replay(a.probes, a.camera, config, topology, options);

    fs::create_directories(a.out);
    auto estimates = open_output(fs::path(a.out) / "estimates.csv");
    crowd::write_estimates_csv(estimates, result.history.estimates);
    auto coefficients = open_output(fs::path(a.out) / "coefficients.csv");
    crowd::write_coefficients_csv(coefficients, result.history.coefficients);
    json summary{{"finalized_windows", result.finalized_windows},
                 {"skipped_lines", result.skipped_lines},
                 {"ingest", crowd::to_json(result.ingest)}};
    json algorithms = json::array();
    for (const auto& spec : config.calibrations) algorithms.push_back(spec.label());
    summary["algorithms"] = algorithms;
    if (result.finalized_windows > 0) summary["epoch_origin"] = crowd::format_timestamp(result.origin);
    open_output(fs::path(a.out) / "replay.json") << summary.dump(2) << '\n';
    std::cerr << "replay: " << result.finalized_windows << " windows finalized, " << result.skipped_lines
              << " lines skipped -> " << a.out << '\n';
    return 0;
}

// --- evaluate -------------------------------------------------------------

struct EvaluateArgs {
    std::string estimates;
    std::string truth;
    std::string topology;
    std::vector<std::string> zones;
    bool include_choke = false;
    bool per_zone = false;
    std::string out;
    bool json_stdout = false;
    std::string errors_out;
    std::string truth_camera;
    std::vector<std::string> truth_camera_ids;
    std::string truth_zone;
};

/// Reads a camera NDJSON log; a malformed line is an error naming its line number.
std::vector<crowd::CameraEvent> load_camera_log(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<crowd::CameraEvent> events;
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        if (line.empty()) continue;
        try {
            events.push_back(crowd::camera_event_from_json(json::parse(line)));
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(n) + ": " + e.what());
        }
    }
    return events;
}

std::vector<crowd::ZoneEstimate> load_estimates(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    try {
        return crowd::read_estimates_csv(in);
    } catch (const std::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

int run_evaluate(const EvaluateArgs& a) {
    const auto estimates = load_estimates(a.estimates);
    const auto window = estimates.empty() ? std::chrono::seconds{900} : estimates.front().window.duration;
    crowd::EvaluationOptions options;
    options.per_zone = a.per_zone;
    options.zones = a.zones;
    options.window_errors = !a.errors_out.empty();

    std::vector<crowd::TruthRecord> truth;
    if (!a.truth_camera.empty()) {
        if (a.truth_zone.empty() || a.truth_camera_ids.empty()) {
            throw std::runtime_error("--truth-camera needs --truth-zone and at least one --truth-camera-id");
        }
        if (estimates.empty()) throw std::runtime_error("no estimates to evaluate");
        std::int64_t first = estimates.front().window.index, last = first;
        for (const auto& e : estimates) {
            first = std::min(first, e.window.index);
            last = std::max(last, e.window.index);
        }
        const auto& e0 = estimates.front();
        const crowd::WindowGrid grid{e0.window.start - e0.window.duration * e0.window.index, window};
        const std::set<std::string> ids(a.truth_camera_ids.begin(), a.truth_camera_ids.end());
        truth = crowd::truth_from_camera_events(load_camera_log(a.truth_camera), ids, a.truth_zone, grid, first, last);
        options.zones = {a.truth_zone};
    } else if (!a.truth.empty()) {
        truth = crowd::load_truth(a.truth, window);
    } else {
        throw std::runtime_error("either --truth or --truth-camera is required");
    }
    if (options.zones.empty() && !a.topology.empty()) {
        const auto topology = crowd::validate_topology(crowd::load_topology(a.topology));
        std::set<std::string> present;
        for (const auto& e : estimates) present.insert(e.zone_id);
        for (const auto& zone : topology.zones()) {
            if ((a.include_choke || !zone.is_choke_point) && present.count(zone.zone_id)) {
                options.zones.push_back(zone.zone_id);
            }
        }
    }

    crowd::EvaluationSummary summary;
    try {
        summary = crowd::evaluate_history(estimates, truth, options);
    } catch (const crowd::MisalignedWindowError& e) {
        std::cerr << "evaluate: misaligned windows: " << e.what() << '\n';
        return kExitMisaligned;
    }

    if (!a.out.empty()) {
        fs::create_directories(a.out);
        open_output(fs::path(a.out) / "evaluation.json") << crowd::to_json(summary).dump(2) << '\n';
        auto csv = open_output(fs::path(a.out) / "evaluation.csv");
        crowd::write_summary_csv(csv, summary);
    }
    if (!a.errors_out.empty()) {
        auto out = open_output(a.errors_out);
        crowd::write_window_errors_csv(out, summary.window_errors);
    }
    if (a.json_stdout) {
        std::cout << crowd::to_json(summary).dump(2) << '\n';
    } else {
        std::cout << crowd::format_table(summary);
        if (summary.mean_rmse_reduction) {
            std::cout << "mean RMSE reduction across algorithms: " << 100.0 * *summary.mean_rmse_reduction
                      << "%\n";
        }
    }
    return 0;
}

// --- export ---------------------------------------------------------------

struct ExportArgs {
    std::string history;
    std::string zone;
    std::string algorithm;
    std::string format = "csv";
    std::string topology;
    std::string out;
};

int run_export(const ExportArgs& a) {
    const auto estimates = load_estimates(a.history);

    std::set<std::string> known;
    if (!a.topology.empty()) {
        for (const auto& z : crowd::load_topology(a.topology).zones) known.insert(z.zone_id);
    } else {
        for (const auto& e : estimates) known.insert(e.zone_id);
    }
    if (!a.zone.empty() && !known.empty() && !known.count(a.zone)) {
        std::cerr << "export: unknown zone '" << a.zone << "'\n";
        return kExitFailure;
    }

    std::string algorithm = a.algorithm;
    if (algorithm.empty() && !estimates.empty()) algorithm = estimates.front().label();

    std::vector<const crowd::ZoneEstimate*> rows;
    for (const auto& e : estimates) {
        if (e.label() != algorithm) continue;
        if (!a.zone.empty() && e.zone_id != a.zone) continue;
        rows.push_back(&e);
    }
    if (!a.algorithm.empty() && rows.empty() && !estimates.empty()) {
        std::cerr << "export: no estimates for algorithm '" << a.algorithm << "'\n";
        return kExitFailure;
    }

    std::ofstream file;
    if (!a.out.empty()) file = open_output(a.out);
    std::ostream& out = a.out.empty() ? std::cout : file;

    if (a.format == "csv") {
        out << "zone_id,window_start,raw,calibrated,coefficient,fallback\n";
        for (const auto* e : rows) {
            out << e->zone_id << ',' << crowd::format_timestamp(e->window.start) << ',' << e->raw_count << ','
                << crowd::format_double(e->calibrated) << ',' << crowd::format_double(e->coefficient_used) << ','
                << (e->fallback ? "true" : "false") << '\n';
        }
    } else {
        json by_zone = json::object();
        for (const auto* e : rows) {
            by_zone[e->zone_id].push_back({{"window_start", crowd::format_timestamp(e->window.start)},
                                           {"raw", e->raw_count},
                                           {"calibrated", e->calibrated},
                                           {"coefficient", e->coefficient_used},
                                           {"fallback", e->fallback}});
        }
        out << by_zone.dump(2) << '\n';
    }
    return 0;
}

// --- serve ----------------------------------------------------------------

struct ServeArgs {
    std::string config;
    std::string topology;
    std::string host = "0.0.0.0";
    int port = 8080;
    std::string probe_log;
    std::string camera_log;
};

int run_serve(const ServeArgs& a) {
    auto config = load_pipeline_config(a.config);
    if (config.salt.salt.empty()) {
        std::cerr << "serve: no SALT configured; using a random salt for this process\n";
        config.salt = crowd::random_salt();
    }
    crowd::Service::Options options;
    options.host = a.host;
    options.port = a.port;
    crowd::Service service(config, crowd::load_topology(a.topology), options);
    if (!a.probe_log.empty()) {
        service.add_source(std::make_unique<crowd::NdjsonTailSource>(a.probe_log, crowd::RecordKind::Probe));
    }
    if (!a.camera_log.empty()) {
        service.add_source(std::make_unique<crowd::NdjsonTailSource>(a.camera_log, crowd::RecordKind::Camera));
    }

    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    const int port = service.start();
    std::cerr << "serve: listening on " << a.host << ':' << port << '\n';
    int received = 0;
    sigwait(&signals, &received);
    std::cerr << "serve: shutting down\n";
    service.stop();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Crowd-size estimation from Wi-Fi probes calibrated at a camera choke point"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Generate probe, camera and truth logs from a preset");
    simulate->add_option("--preset", sim.preset, "restart_mall or railway_station")->required();
    simulate->add_option("--seed", sim.seed, "RNG seed (defaults to the preset's)");
    simulate->add_option("--days", sim.days, "Simulated days (defaults to 7)");
    simulate->add_option("--out", sim.out, "Output directory")->required();
    simulate->add_option("--shift-day", sim.shift_day, "Day (0-based) on which a regime shift starts");
    simulate->add_option("--shift-carry-factor", sim.shift_carry, "Device carry rate multiplier after the shift");
    simulate->add_option("--shift-passerby-factor", sim.shift_passerby, "Passer-by rate multiplier after the shift");

    ReplayArgs rep;
    auto* replay = app.add_subcommand("replay", "Replay NDJSON logs through the pipeline on a virtual clock");
    replay->add_option("--probes", rep.probes, "Probe log (NDJSON)")->required();
    replay->add_option("--camera", rep.camera, "Camera log (NDJSON)")->required();
    replay->add_option("--topology", rep.topology, "Topology JSON")->required();
    replay->add_option("--config", rep.config, "Pipeline config JSON");
    replay->add_option("--algorithm", rep.algorithms,
                       "proportional | adaptive_linear | adaptive_linear:<q>; repeat to record several, "
                       "the first is the published one");
    replay->add_option("--q", rep.q, "Training-set size for adaptive_linear without an explicit q");
    replay->add_option("--out", rep.out, "Output directory")->required();
    replay->add_option("--store", rep.store, "Persist the event store in this directory");
    replay->add_flag("--lenient", rep.lenient, "Skip and count corrupt lines instead of aborting");
    replay->add_option("--windows", rep.windows, "Number of windows to finalize from the origin");
    replay->add_option("--window-seconds", rep.window_seconds, "Window duration");
    replay->add_option("--epoch-origin", rep.epoch_origin, "Window grid origin (ISO 8601)");

    EvaluateArgs ev;
    auto* evaluate = app.add_subcommand("evaluate", "Compare estimates with ground truth");
    evaluate->add_option("--estimates", ev.estimates, "estimates.csv from replay")->required();
    evaluate->add_option("--truth", ev.truth, "Truth as NDJSON or CSV");
    evaluate->add_option("--truth-camera", ev.truth_camera,
                         "Camera NDJSON log used as near ground truth instead of --truth");
    evaluate->add_option("--truth-camera-id", ev.truth_camera_ids, "Camera ids counted as truth (repeatable)");
    evaluate->add_option("--truth-zone", ev.truth_zone, "Zone the truth cameras observe");
    evaluate->add_option("--errors-out", ev.errors_out, "Write per-window errors as CSV");
    evaluate->add_option("--topology", ev.topology, "Topology JSON; its choke zone is left out");
    evaluate->add_option("--zone", ev.zones, "Restrict to these zones (repeatable)");
    evaluate->add_flag("--include-choke", ev.include_choke, "Keep the choke zone when --topology is given");
    evaluate->add_flag("--per-zone", ev.per_zone, "Also report each zone separately");
    evaluate->add_option("--out", ev.out, "Directory for evaluation.json and evaluation.csv");
    evaluate->add_flag("--json", ev.json_stdout, "Print the JSON report instead of the table");

    ExportArgs ex;
    auto* exporter = app.add_subcommand("export", "Export per-zone estimate series");
    exporter->add_option("--history", ex.history, "estimates.csv from replay")->required();
    exporter->add_option("--zone", ex.zone, "Only this zone");
    exporter->add_option("--algorithm", ex.algorithm, "Algorithm label (defaults to the first in the file)");
    exporter->add_option("--format", ex.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    exporter->add_option("--topology", ex.topology, "Topology JSON used to validate --zone");
    exporter->add_option("--out", ex.out, "Output file (stdout by default)");

    ServeArgs sv;
    auto* serve = app.add_subcommand("serve", "Run the ingestion, pipeline and broker service");
    serve->add_option("--config", sv.config, "Service config JSON");
    serve->add_option("--topology", sv.topology, "Topology JSON")->required();
    serve->add_option("--host", sv.host, "Bind address");
    serve->add_option("--port", sv.port, "Bind port");
    serve->add_option("--probe-log", sv.probe_log, "NDJSON probe file to follow");
    serve->add_option("--camera-log", sv.camera_log, "NDJSON camera file to follow");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*simulate) return run_simulate(sim);
        if (*replay) return run_replay_command(rep);
        if (*evaluate) return run_evaluate(ev);
        if (*exporter) return run_export(ex);
        if (*serve) return run_serve(sv);
    } catch (const std::exception& e) {
        std::cerr << app.get_subcommands().front()->get_name() << ": " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitFailure;
}
