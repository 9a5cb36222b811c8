#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "crowd/history.hpp"
#include "crowd/ingest.hpp"
#include "crowd/model.hpp"
#include "crowd/time.hpp"
#include "crowd/topology.hpp"

namespace crowd::sim {

enum class IntervalShape { Uniform, LogUniform };

/// Bounds of a positive random duration in seconds.
struct IntervalSpec {
    double min_s = 2.0;
    double max_s = 120.0;
    IntervalShape shape = IntervalShape::Uniform;
};

enum class TransitSpeed { Stroll, Commute };

struct HourlyRate {
    int hour = 0;
    double mean_per_window = 0.0;
};

/// From the start of `day` (0-based, counted from the scenario start) the
/// device carry rate and the passer-by rate are scaled.
struct RegimeShift {
    int day = 3;
    double carry_rate_factor = 1.0;
    double passerby_factor = 1.0;
};

struct ScenarioConfig {
    std::uint64_t seed = 1;
    double duration_hours = 24.0;
    Instant start{};
    std::chrono::seconds window{900};
    ZoneTopology topology;
    // Fraction of the shared arrival stream that traverses each zone, in
    // topology order. Zones absent from the list use 1.
    std::vector<double> zone_share;
    // Mean arrivals per window at share 1, for each hour of day; values are
    // placed at the hour centre and interpolated linearly.
    std::vector<HourlyRate> arrival_profile;
    double weekend_scale = 1.0;
    IntervalSpec probe_interval{2.0, 120.0, IntervalShape::Uniform};
    double device_carry_rate = 0.9;
    // Mean passers-by per window at share 1 (inside sniffer range, never counted).
    double passerby_rate = 0.0;
    IntervalSpec passerby_dwell{60.0, 300.0, IntervalShape::Uniform};
    TransitSpeed transit_speed = TransitSpeed::Stroll;
    // Overrides the dwell implied by transit_speed.
    std::optional<IntervalSpec> dwell;
    double camera_accuracy = 0.85;
    double camera_false_rate = 0.0;
    std::optional<RegimeShift> regime_shift;
    // Hours of day (weekdays) treated as peak by the preset's shape checks.
    std::vector<int> peak_hours;
};

/// Throws std::invalid_argument naming the first bad field.
void validate(const ScenarioConfig& config);

IntervalSpec dwell_for(const ScenarioConfig& config);

/// Mean base arrivals per window for a window starting at `window_start`.
double arrival_rate(const ScenarioConfig& config, Instant window_start);

enum class Preset { RestartMall, RailwayStation };

Preset parse_preset(std::string_view name);
ScenarioConfig preset(Preset which);
ScenarioConfig preset(std::string_view name);

/// One stay of a pedestrian or passer-by inside a sniffer's range.
struct Visit {
    std::optional<std::string> mac;
    std::string zone_id;
    Instant enter{};
    Instant exit{};
    bool passerby = false;
};

struct SimulationOutput {
    WindowGrid grid;
    std::vector<RawProbeReport> probes;   // ascending timestamp
    std::vector<CameraEvent> camera;      // ascending timestamp
    std::vector<TruthRecord> truth;       // window-major, topology zone order
    std::vector<Visit> visits;
    std::int64_t window_count = 0;
};

SimulationOutput simulate(const ScenarioConfig& config);

/// Camera events produced for `true_passages` real crossings in one window:
/// binomial detection at camera_accuracy plus Poisson false events.
std::int64_t camera_observe(std::int64_t true_passages, const ScenarioConfig& config,
                            std::mt19937_64& rng);

/// Writes probes.ndjson, camera.ndjson and truth.ndjson (plus topology.json).
void write_logs(const SimulationOutput& output, const ZoneTopology& topology,
                const std::filesystem::path& directory);

nlohmann::json to_json(const ScenarioConfig& config);

}  // namespace crowd::sim
