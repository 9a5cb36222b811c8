#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "crowd/pipeline.hpp"
#include "crowd/simulator.hpp"
#include "support.hpp"

using namespace crowd;
using std::chrono::seconds;
using testing::device;
using testing::origin;

namespace {

struct RecordingPublisher : ContextPublisher {
    std::vector<ContextEntity> published;
    int fail_remaining = 0;

    void publish(const ContextEntity& entity) override {
        if (fail_remaining > 0) {
            --fail_remaining;
            throw std::runtime_error("broker unavailable");
        }
        published.push_back(entity);
    }

    std::vector<ContextEntity> for_entity(const std::string& id) const {
        std::vector<ContextEntity> out;
        for (const auto& e : published) {
            if (e.id == id) out.push_back(e);
        }
        return out;
    }
};

PipelineConfig config_with(std::vector<CalibrationSpec> tracks) {
    PipelineConfig c;
    c.calibrations = std::move(tracks);
    c.salt = testing::salt();
    c.epoch_origin = origin();
    return c;
}

/// Store and topology wiring shared by the finalization tests.
struct Fixture {
    ValidatedTopology topology = validate_topology(testing::five_zones());
    EventStore store;
    WindowGrid grid{origin(), seconds{900}};
    int next_device = 0;

    void devices(const std::string& zone, std::int64_t window, int count) {
        const auto& z = *topology.zone_by_id(zone);
        const Instant start = grid.at(window).start;
        for (int i = 0; i < count; ++i) {
            const ProbeRecord p{device(next_device++), z.sniffer_id, start + seconds{i % 900}, i, std::nullopt};
            store.append_probe(p, zone, window);
        }
    }

    void people(std::int64_t window, std::int64_t count) {
        const CameraEvent e{"C1", Direction::MoveIn, grid.at(window).start + seconds{5}, count, std::nullopt};
        store.append_camera(e, window);
    }
};

std::string estimates_csv(const EstimateHistory& h) {
    std::ostringstream out;
    write_estimates_csv(out, h.estimates);
    write_coefficients_csv(out, h.coefficients);
    return out.str();
}

}  // namespace

TEST_SUITE("finalization") {
    TEST_CASE("choke d0 200, y0 100 and M2 d 400 publish 200 for M2 under proportional") {
        Fixture f;
        f.devices("M1", 0, 200);
        f.people(0, 100);
        f.devices("M2", 0, 400);
        RecordingPublisher pub;
        Pipeline p(config_with({{CalibrationMode::Proportional, 10}}), f.topology, f.store, &pub, origin());
        p.finalize_window(0);
        REQUIRE(pub.published.size() == 5);
        CHECK(pub.published[0].id == "sniffer-M1");
        CHECK(pub.published[0].attribute->context_value == 100);
        const auto m2 = pub.for_entity("sniffer-M2");
        REQUIRE(m2.size() == 1);
        CHECK(m2[0].attribute->context_value == 200);
        CHECK(*m2[0].attribute->estimated_value == doctest::Approx(200.0).epsilon(1e-12));
        CHECK(m2[0].attribute->start_time == origin());
        CHECK(m2[0].attribute->end_time - m2[0].attribute->start_time == seconds{900});
        CHECK(pub.for_entity("sniffer-M3")[0].attribute->context_value == 0);
    }

    TEST_CASE("a window without probes publishes zeros for every zone") {
        for (const auto& spec : {CalibrationSpec{CalibrationMode::Proportional, 10},
                                 CalibrationSpec{CalibrationMode::AdaptiveLinear, 3}}) {
            Fixture f;
            RecordingPublisher pub;
            Pipeline p(config_with({spec}), f.topology, f.store, &pub, origin());
            p.finalize_window(0);
            REQUIRE(pub.published.size() == 5);
            for (const auto& e : pub.published) CHECK(e.attribute->context_value == 0);
        }
    }

    TEST_CASE("each window is finalized exactly once and in order") {
        Fixture f;
        Pipeline p(config_with({{CalibrationMode::Proportional, 10}}), f.topology, f.store, nullptr, origin());
        CHECK_THROWS_AS(p.finalize_window(1), std::logic_error);
        p.finalize_window(0);
        CHECK_THROWS_AS(p.finalize_window(0), std::logic_error);
        CHECK(p.finalize_through(3) == 3);
        CHECK(p.finalize_through(3) == 0);
        CHECK(p.next_window() == 4);
        CHECK(f.store.finalized_windows() == std::vector<std::int64_t>{0, 1, 2, 3});
        CHECK(p.metrics().finalized_windows == 4);
    }

    TEST_CASE("a store finalized elsewhere refuses a second finalization") {
        Fixture f;
        f.store.mark_finalized(0);
        Pipeline p(config_with({{CalibrationMode::Proportional, 10}}), f.topology, f.store, nullptr, origin());
        CHECK_THROWS_AS(p.finalize_window(0), std::logic_error);
    }

    TEST_CASE("windows wait for the grace period") {
        Fixture f;
        auto c = config_with({{CalibrationMode::Proportional, 10}});
        c.finalization_grace = seconds{30};
        Pipeline p(c, f.topology, f.store, nullptr, origin());
        CHECK(p.advance_to(origin() + seconds{900 + 29}) == 0);
        CHECK(p.advance_to(origin() + seconds{900 + 30}) == 1);
        CHECK(p.advance_to(origin() + seconds{4 * 900 + 30}) == 3);
        CHECK(p.next_window() == 4);
    }

    TEST_CASE("updates for one entity go out in strictly increasing window order") {
        Fixture f;
        for (int w = 0; w < 12; ++w) {
            f.devices("M1", w, 10 + w);
            f.people(w, 5 + w);
            f.devices("M3", w, 3 * w);
        }
        RecordingPublisher pub;
        Pipeline p(config_with({{CalibrationMode::AdaptiveLinear, 4}}), f.topology, f.store, &pub, origin());
        p.advance_to(origin() + seconds{12 * 900 + 60});
        for (const auto& zone : f.topology.zones()) {
            const auto seq = pub.for_entity(zone.sniffer_id);
            REQUIRE(seq.size() == 12);
            for (std::size_t i = 1; i < seq.size(); ++i) {
                CHECK(seq[i - 1].attribute->start_time < seq[i].attribute->start_time);
            }
        }
    }

    TEST_CASE("adaptive bootstrap windows carry the fallback flag") {
        Fixture f;
        for (int w = 0; w < 6; ++w) {
            f.devices("M1", w, 20);
            f.people(w, 10);
            f.devices("M2", w, 40);
        }
        RecordingPublisher pub;
        Pipeline p(config_with({{CalibrationMode::AdaptiveLinear, 3}}), f.topology, f.store, &pub, origin());
        p.finalize_through(5);
        const auto m2 = pub.for_entity("sniffer-M2");
        REQUIRE(m2.size() == 6);
        CHECK(*m2[0].attribute->fallback);
        CHECK(*m2[1].attribute->fallback);
        CHECK(m2[1].attribute->context_value == 40);
        CHECK_FALSE(*m2[2].attribute->fallback);
        CHECK(m2[2].attribute->context_value == 20);
        CHECK_FALSE(*m2[5].attribute->fallback);
    }

    TEST_CASE("shadow tracks are recorded but only the first track is published") {
        Fixture f;
        for (int w = 0; w < 3; ++w) {
            f.devices("M1", w, 20);
            f.people(w, 30);
            f.devices("M4", w, 10);
        }
        RecordingPublisher pub;
        Pipeline p(config_with({{CalibrationMode::Proportional, 10},
                                {CalibrationMode::AdaptiveLinear, 2},
                                {CalibrationMode::AdaptiveLinear, 100}}),
                   f.topology, f.store, &pub, origin());
        p.finalize_through(2);
        CHECK(pub.published.size() == 15);
        const auto h = p.history();
        CHECK(h.estimates.size() == 45);
        CHECK(h.coefficients.size() == 9);
        std::set<std::string> labels;
        for (const auto& e : h.estimates) labels.insert(e.label());
        CHECK(labels == std::set<std::string>{"proportional", "adaptive_linear_q2", "adaptive_linear_q100"});
        for (const auto& e : pub.published) CHECK(e.attribute->estimated_value);
        CHECK(pub.for_entity("sniffer-M4").back().attribute->context_value == 15);
    }

    TEST_CASE("a failing publisher is counted without blocking finalization") {
        Fixture f;
        RecordingPublisher pub;
        pub.fail_remaining = 2;
        Pipeline p(config_with({{CalibrationMode::Proportional, 10}}), f.topology, f.store, &pub, origin());
        p.finalize_through(1);
        CHECK(p.metrics().publish_failures == 2);
        CHECK(pub.published.size() == 8);
        CHECK(p.next_window() == 2);
    }

    TEST_CASE("late records leave published values alone but enter a recomputation") {
        Fixture f;
        f.devices("M1", 0, 10);
        f.people(0, 20);
        f.devices("M2", 0, 5);
        RecordingPublisher pub;
        Pipeline p(config_with({{CalibrationMode::Proportional, 10}}), f.topology, f.store, &pub, origin());
        p.finalize_window(0);
        CHECK(pub.for_entity("sniffer-M2")[0].attribute->context_value == 10);

        const ProbeRecord late{device(9999), "sniffer-M2", origin() + seconds{100}, 1, std::nullopt};
        CHECK(f.store.append_probe(late, "M2", 0).late);
        const auto redo = p.recompute(0);
        const auto m2 = std::find_if(redo.begin(), redo.end(), [](const ZoneEstimate& e) { return e.zone_id == "M2"; });
        REQUIRE(m2 != redo.end());
        CHECK(m2->raw_count == 6);
        CHECK(m2->calibrated == doctest::Approx(12.0));
        CHECK(pub.published.size() == 5);
        const auto h = p.history();
        CHECK(std::count_if(h.estimates.begin(), h.estimates.end(),
                            [](const ZoneEstimate& e) { return e.zone_id == "M2" && e.raw_count == 5; }) == 1);
        CHECK_THROWS_AS(p.recompute(1), std::logic_error);
    }

    TEST_CASE("the published entity rounds half up and clamps at zero") {
        const auto zone = testing::five_zones().zones[2];
        ZoneEstimate e;
        e.zone_id = zone.zone_id;
        e.window = TimeWindow{0, origin(), seconds{900}};
        e.calibrated = 12.5;
        CHECK(entity_for_estimate(zone, e).attribute->context_value == 13);
        e.calibrated = 12.49;
        CHECK(entity_for_estimate(zone, e).attribute->context_value == 12);
        e.calibrated = -0.4;
        CHECK(entity_for_estimate(zone, e).attribute->context_value == 0);
    }
}

TEST_SUITE("configuration") {
    TEST_CASE("calibration specs parse with and without q") {
        CHECK(parse_calibration_spec("proportional").mode == CalibrationMode::Proportional);
        const auto a = parse_calibration_spec("adaptive_linear", 25);
        CHECK(a.mode == CalibrationMode::AdaptiveLinear);
        CHECK(a.q == 25);
        CHECK(parse_calibration_spec("adaptive_linear:100").q == 100);
        CHECK_THROWS(parse_calibration_spec("kalman"));
        CHECK_THROWS(parse_calibration_spec("adaptive_linear:0"));
    }

    TEST_CASE("config files fill every documented key") {
        const auto c = pipeline_config_from_json(nlohmann::json::parse(R"({
            "window_seconds": 600, "algorithm": "proportional", "q": 12,
            "shadow_algorithms": ["adaptive_linear:5"], "finalization_grace_seconds": 10,
            "broker_endpoint": "http://localhost:1026", "store_path": "/tmp/x",
            "epoch_origin": "2017-04-10T00:00:00Z", "salt": "00ff", "poll_interval_ms": 250})"));
        CHECK(c.window == seconds{600});
        REQUIRE(c.calibrations.size() == 2);
        CHECK(c.calibrations[0].mode == CalibrationMode::Proportional);
        CHECK(c.calibrations[1].q == 5);
        CHECK(c.finalization_grace == seconds{10});
        CHECK(c.broker_endpoint == "http://localhost:1026");
        CHECK(c.store_path == "/tmp/x");
        CHECK(*c.epoch_origin == origin());
        CHECK(c.poll_interval == std::chrono::milliseconds{250});
    }

    TEST_CASE("invalid settings are rejected") {
        PipelineConfig c;
        c.window = seconds{0};
        CHECK_THROWS_AS(validate(c), std::invalid_argument);
        c = PipelineConfig{};
        c.finalization_grace = seconds{-1};
        CHECK_THROWS_AS(validate(c), std::invalid_argument);
    }
}

TEST_SUITE("replay") {
    struct Logs {
        testing::TempDir dir;
        sim::ScenarioConfig scenario;
        sim::SimulationOutput output;

        explicit Logs(double hours) {
            scenario = sim::preset(sim::Preset::RailwayStation);
            scenario.duration_hours = hours;
            output = sim::simulate(scenario);
            sim::write_logs(output, scenario.topology, dir.path());
        }
        std::filesystem::path probes() const { return dir / "probes.ndjson"; }
        std::filesystem::path camera() const { return dir / "camera.ndjson"; }
    };

    TEST_CASE("replaying the same logs twice gives byte-identical histories") {
        Logs logs(24);
        const auto topo = validate_topology(logs.scenario.topology);
        auto c = config_with({{CalibrationMode::AdaptiveLinear, 10}, {CalibrationMode::Proportional, 10}});
        c.epoch_origin = logs.scenario.start;
        const auto a = run_replay(logs.probes(), logs.camera(), c, topo);
        const auto b = run_replay(logs.probes(), logs.camera(), c, topo);
        CHECK(a.finalized_windows == 96);
        CHECK(estimates_csv(a.history) == estimates_csv(b.history));
        CHECK(a.history.estimates.size() == 96 * 5 * 2);
    }

    TEST_CASE("seven days finalize 672 windows") {
        Logs logs(24 * 7);
        const auto topo = validate_topology(logs.scenario.topology);
        auto c = config_with({{CalibrationMode::Proportional, 10}});
        c.epoch_origin.reset();
        const auto r = run_replay(logs.probes(), logs.camera(), c, topo);
        CHECK(r.origin == logs.scenario.start);
        CHECK(r.finalized_windows == 672);
        CHECK(r.ingest.rejected_total() == 0);
    }

    TEST_CASE("empty logs produce an empty history") {
        testing::TempDir dir;
        std::ofstream(dir / "p.ndjson").close();
        std::ofstream(dir / "c.ndjson").close();
        const auto topo = validate_topology(testing::five_zones());
        auto c = config_with({{CalibrationMode::Proportional, 10}});
        c.epoch_origin.reset();
        const auto r = run_replay(dir / "p.ndjson", dir / "c.ndjson", c, topo);
        CHECK(r.finalized_windows == 0);
        CHECK(r.history.estimates.empty());
    }

    TEST_CASE("a corrupt line fails strict replay with its line number and is skipped otherwise") {
        testing::TempDir dir;
        {
            std::ofstream p(dir / "p.ndjson");
            p << R"({"mac":"AC:DE:48:00:11:22","sniffer_id":"sniffer-M2","timestamp":"2017-04-10T00:01:00Z","sequence_number":1})"
              << "\n"
              << R"({"mac":"AC:DE:48:00:11:23","sniffer_id":"sniffer-M2","timestamp":"2017-04-10T00:02:00Z","sequence_number":2})"
              << "\n{\"mac\": truncated\n"
              << R"({"mac":"AC:DE:48:00:11:24","sniffer_id":"sniffer-M2","timestamp":"2017-04-10T00:03:00Z","sequence_number":3})"
              << "\n";
        }
        std::ofstream(dir / "c.ndjson").close();
        const auto topo = validate_topology(testing::five_zones());
        auto c = config_with({{CalibrationMode::Proportional, 10}});
        try {
            run_replay(dir / "p.ndjson", dir / "c.ndjson", c, topo);
            FAIL("strict replay accepted a corrupt line");
        } catch (const ReplayError& e) {
            CHECK(e.line() == 3);
            CHECK(std::string(e.what()).find("p.ndjson:3") != std::string::npos);
        }
        ReplayOptions lenient;
        lenient.strict = false;
        const auto r = run_replay(dir / "p.ndjson", dir / "c.ndjson", c, topo, lenient);
        CHECK(r.skipped_lines == 1);
        CHECK(r.finalized_windows == 1);
        const auto m2 = std::find_if(r.history.estimates.begin(), r.history.estimates.end(),
                                     [](const ZoneEstimate& e) { return e.zone_id == "M2"; });
        REQUIRE(m2 != r.history.estimates.end());
        CHECK(m2->raw_count == 3);
    }

    TEST_CASE("a persisted replay writes the same estimates it returns") {
        Logs logs(6);
        const auto topo = validate_topology(logs.scenario.topology);
        testing::TempDir store;
        auto c = config_with({{CalibrationMode::AdaptiveLinear, 10}});
        c.store_path = store.path().string();
        c.epoch_origin = logs.scenario.start;
        const auto r = run_replay(logs.probes(), logs.camera(), c, topo);
        CHECK(r.finalized_windows == 24);
        std::ifstream in(store / "estimates.csv");
        const auto persisted = read_estimates_csv(in);
        std::ostringstream a, b;
        write_estimates_csv(a, persisted);
        write_estimates_csv(b, r.history.estimates);
        CHECK(a.str() == b.str());
        CHECK(persisted.size() == 24 * 5);
    }
}
