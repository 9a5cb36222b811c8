#include "crowd/simulator.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>
#include <unordered_map>

namespace crowd::sim {

namespace {

using std::chrono::duration_cast;

Millis to_millis(double seconds) {
    return Millis{static_cast<std::int64_t>(std::llround(seconds * 1000.0))};
}

double draw(const IntervalSpec& spec, std::mt19937_64& rng) {
    if (spec.shape == IntervalShape::LogUniform) {
        std::uniform_real_distribution<double> u(std::log(spec.min_s), std::log(spec.max_s));
        return std::exp(u(rng));
    }
    std::uniform_real_distribution<double> u(spec.min_s, spec.max_s);
    return u(rng);
}

void check_interval(const IntervalSpec& spec, const char* name) {
    if (!(spec.min_s > 0.0) || !(spec.max_s >= spec.min_s) || !std::isfinite(spec.max_s)) {
        throw std::invalid_argument(std::string(name) + " must satisfy 0 < min <= max");
    }
}

std::string random_mac(std::mt19937_64& rng) {
    // Locally administered unicast prefix, like a randomized phone MAC.
    std::uniform_int_distribution<int> byte(0, 255);
    char buf[18];
    std::snprintf(buf, sizeof buf, "%02X:%02X:%02X:%02X:%02X:%02X", 0x02 | (byte(rng) & 0xfc),
                  byte(rng), byte(rng), byte(rng), byte(rng), byte(rng));
    return buf;
}

Instant default_start() { return parse_timestamp("2017-04-10T00:00:00Z"); }  // a Monday

std::vector<HourlyRate> profile(std::initializer_list<double> values) {
    std::vector<HourlyRate> out;
    int hour = 0;
    for (double v : values) out.push_back({hour++, v});
    return out;
}

ZoneTopology railway_topology() {
    const double lat = -41.2790, lon = 174.7805;
    ZoneTopology t;
    t.zones.push_back({"M1", "sniffer-M1", {lat, lon}, true, {"C1", "C2", "C3", "C4"}, "B8:27:EB:10:00:01"});
    t.zones.push_back({"M2", "sniffer-M2", {lat + 0.0003, lon + 0.0002}, false, {}, "B8:27:EB:10:00:02"});
    t.zones.push_back({"M3", "sniffer-M3", {lat + 0.0006, lon - 0.0001}, false, {}, "B8:27:EB:10:00:03"});
    t.zones.push_back({"M4", "sniffer-M4", {lat - 0.0004, lon + 0.0004}, false, {}, "B8:27:EB:10:00:04"});
    t.zones.push_back({"M5", "sniffer-M5", {lat - 0.0002, lon - 0.0005}, false, {}, "B8:27:EB:10:00:05"});
    return t;
}

ZoneTopology mall_topology() {
    const double lat = -43.5335, lon = 172.6366;
    ZoneTopology t;
    t.zones.push_back({"W2", "sniffer-W2", {lat, lon}, true, {"CAM1"}, "B8:27:EB:20:00:02"});
    t.zones.push_back({"W1", "sniffer-W1", {lat + 0.0004, lon - 0.0003}, false, {}, "B8:27:EB:20:00:01"});
    t.zones.push_back({"W3", "sniffer-W3", {lat - 0.0002, lon + 0.0004}, false, {}, "B8:27:EB:20:00:03"});
    t.zones.push_back({"W4", "sniffer-W4", {lat - 0.0005, lon + 0.0001}, false, {}, "B8:27:EB:20:00:04"});
    t.zones.push_back({"W5", "sniffer-W5", {lat + 0.0001, lon + 0.0007}, false, {}, "B8:27:EB:20:00:05"});
    return t;
}

double share_of(const ScenarioConfig& c, std::size_t zone) {
    return zone < c.zone_share.size() ? c.zone_share[zone] : 1.0;
}

bool shifted(const ScenarioConfig& c, Instant t) {
    if (!c.regime_shift) return false;
    return t >= c.start + std::chrono::days{c.regime_shift->day};
}

}  // namespace

void validate(const ScenarioConfig& c) {
    if (!(c.duration_hours > 0.0)) throw std::invalid_argument("duration must be positive");
    if (c.window.count() <= 0) throw std::invalid_argument("window must be positive");
    if (auto report = check_topology(c.topology); !report.ok()) throw TopologyError(std::move(report));
    for (double s : c.zone_share) {
        if (s < 0.0 || s > 1.0) throw std::invalid_argument("zone_share entries must lie in [0, 1]");
    }
    bool hours[24] = {};
    for (const auto& h : c.arrival_profile) {
        if (h.hour < 0 || h.hour > 23) throw std::invalid_argument("arrival_profile hour out of range");
        if (h.mean_per_window < 0.0) throw std::invalid_argument("arrival rates must be non-negative");
        hours[h.hour] = true;
    }
    if (!std::all_of(std::begin(hours), std::end(hours), [](bool b) { return b; })) {
        throw std::invalid_argument("arrival_profile must cover all 24 hours");
    }
    if (c.weekend_scale < 0.0) throw std::invalid_argument("weekend_scale must be non-negative");
    check_interval(c.probe_interval, "probe_interval");
    check_interval(c.passerby_dwell, "passerby_dwell");
    if (c.dwell) check_interval(*c.dwell, "dwell");
    if (c.device_carry_rate < 0.0 || c.device_carry_rate > 1.0) {
        throw std::invalid_argument("device_carry_rate must lie in [0, 1]");
    }
    if (c.passerby_rate < 0.0) throw std::invalid_argument("passerby_rate must be non-negative");
    if (!(c.camera_accuracy > 0.0) || c.camera_accuracy > 1.0) {
        throw std::invalid_argument("camera_accuracy must lie in (0, 1]");
    }
    if (c.camera_false_rate < 0.0) throw std::invalid_argument("camera_false_rate must be non-negative");
    if (c.regime_shift) {
        const auto& r = *c.regime_shift;
        if (r.day < 0 || r.carry_rate_factor < 0.0 || r.passerby_factor < 0.0 ||
            c.device_carry_rate * r.carry_rate_factor > 1.0) {
            throw std::invalid_argument("regime_shift fields out of range");
        }
    }
}

IntervalSpec dwell_for(const ScenarioConfig& c) {
    if (c.dwell) return *c.dwell;
    return c.transit_speed == TransitSpeed::Commute ? IntervalSpec{15.0, 25.0}
                                                    : IntervalSpec{180.0, 600.0};
}

double arrival_rate(const ScenarioConfig& c, Instant window_start) {
    std::array<double, 24> by_hour{};
    for (const auto& h : c.arrival_profile) by_hour[static_cast<std::size_t>(h.hour)] = h.mean_per_window;
    const Instant mid = window_start + c.window / 2;
    // Hour values sit at hour centres; interpolate cyclically between them.
    const double pos = utc_hour_of_day(mid) - 0.5;
    const double base = std::floor(pos);
    const double frac = pos - base;
    const auto lo = static_cast<std::size_t>((static_cast<int>(base) + 24) % 24);
    const auto hi = (lo + 1) % 24;
    double rate = by_hour[lo] + frac * (by_hour[hi] - by_hour[lo]);
    if (utc_weekday(mid) >= 5) rate *= c.weekend_scale;
    return rate;
}

Preset parse_preset(std::string_view name) {
    if (name == "restart_mall") return Preset::RestartMall;
    if (name == "railway_station") return Preset::RailwayStation;
    throw std::invalid_argument("unknown preset '" + std::string(name) +
                                "' (expected restart_mall or railway_station)");
}

ScenarioConfig preset(std::string_view name) { return preset(parse_preset(name)); }

ScenarioConfig preset(Preset which) {
    ScenarioConfig c;
    c.start = default_start();
    c.duration_hours = 7 * 24;
    c.camera_accuracy = 0.85;
    c.camera_false_rate = 0.5;
    if (which == Preset::RailwayStation) {
        // Commuter peak every weekday morning, smaller one in the afternoon,
        // quiet weekends; a constant background of passers-by and staff.
        c.seed = 20170410;
        c.topology = railway_topology();
        c.zone_share = {1.0, 0.7, 0.5, 0.35, 0.6};
        c.arrival_profile = profile({3, 3, 3, 3, 3, 20, 120, 450, 500, 200, 90, 90,
                                     90, 90, 90, 90, 260, 320, 150, 60, 60, 60, 15, 15});
        c.weekend_scale = 0.3;
        c.transit_speed = TransitSpeed::Commute;
        c.device_carry_rate = 0.9;
        c.passerby_rate = 25.0;
        c.peak_hours = {7, 8, 16, 17};
    } else {
        // Lunch and dinner peaks, busier weekends, and many devices in range
        // around the clock (shops, street traffic) that never enter.
        c.seed = 20170412;
        c.topology = mall_topology();
        c.zone_share = {1.0, 0.6, 0.8, 0.5, 0.4};
        c.arrival_profile = profile({2, 2, 2, 2, 2, 2, 2, 10, 30, 60, 100, 150,
                                     220, 200, 150, 140, 150, 180, 210, 160, 90, 40, 15, 5});
        c.weekend_scale = 1.3;
        c.transit_speed = TransitSpeed::Stroll;
        c.device_carry_rate = 0.95;
        c.passerby_rate = 80.0;
        c.peak_hours = {12, 13, 18};
    }
    return c;
}

std::int64_t camera_observe(std::int64_t true_passages, const ScenarioConfig& config,
                            std::mt19937_64& rng) {
    std::int64_t events = 0;
    if (true_passages > 0) {
        std::binomial_distribution<std::int64_t> detect(true_passages, config.camera_accuracy);
        events += detect(rng);
    }
    if (config.camera_false_rate > 0.0) {
        std::poisson_distribution<std::int64_t> noise(config.camera_false_rate);
        events += noise(rng);
    }
    return events;
}

SimulationOutput simulate(const ScenarioConfig& config) {
    validate(config);
    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> rssi(-90, -40);

    const auto& zones = config.topology.zones;
    const auto choke_it = std::find_if(zones.begin(), zones.end(),
                                       [](const Zone& z) { return z.is_choke_point; });
    const auto choke_index = static_cast<std::size_t>(choke_it - zones.begin());
    const auto& cameras = choke_it->camera_ids;
    std::uniform_int_distribution<std::size_t> pick_camera(0, cameras.size() - 1);

    SimulationOutput out;
    out.grid = WindowGrid{config.start, config.window};
    const auto total = duration_cast<Millis>(std::chrono::duration<double, std::ratio<3600>>(config.duration_hours));
    const auto window_ms = duration_cast<Millis>(config.window);
    out.window_count = (total.count() + window_ms.count() - 1) / window_ms.count();

    const Instant horizon = out.grid.at(out.window_count).start;
    const IntervalSpec dwell = dwell_for(config);
    std::unordered_map<std::string, std::int64_t> sequence;
    std::map<std::string, std::int64_t> camera_sequence;

    const auto emit_probes = [&](const Visit& v, const std::string& sniffer) {
        // Stationary renewal start: first probe uniform within one full gap.
        double t = draw(config.probe_interval, rng) * unit(rng);
        const double stay = std::chrono::duration<double>(v.exit - v.enter).count();
        while (t < stay && v.enter + to_millis(t) < horizon) {
            auto& seq = sequence[*v.mac];
            out.probes.push_back({*v.mac, sniffer, v.enter + to_millis(t), seq, rssi(rng)});
            seq = (seq + 1) % 4096;
            t += draw(config.probe_interval, rng);
        }
    };

    const auto add_camera_event = [&](Instant at) {
        const auto& cam = cameras[pick_camera(rng)];
        CameraEvent e;
        e.camera_id = cam;
        e.direction = unit(rng) < 0.5 ? Direction::MoveIn : Direction::MoveOut;
        e.timestamp = at;
        e.count = 1;
        e.event_id = cam + "-" + std::to_string(camera_sequence[cam]++);
        out.camera.push_back(std::move(e));
    };

    for (std::int64_t w = 0; w < out.window_count; ++w) {
        const TimeWindow window = out.grid.at(w);
        const bool shift = shifted(config, window.start);
        const double carry = config.device_carry_rate *
                             (shift ? config.regime_shift->carry_rate_factor : 1.0);
        const double passerby = config.passerby_rate *
                                (shift ? config.regime_shift->passerby_factor : 1.0);
        const auto at_offset = [&] {
            return window.start + Millis{static_cast<std::int64_t>(unit(rng) * static_cast<double>(window_ms.count()))};
        };

        std::vector<std::int64_t> passages(zones.size(), 0);
        std::poisson_distribution<std::int64_t> arrivals(std::max(arrival_rate(config, window.start), 1e-12));
        const std::int64_t n = arrivals(rng);
        for (std::int64_t i = 0; i < n; ++i) {
            const Instant t = at_offset();
            std::optional<std::string> mac;
            if (unit(rng) < carry) mac = random_mac(rng);
            for (std::size_t k = 0; k < zones.size(); ++k) {
                if (unit(rng) >= share_of(config, k)) continue;
                Visit v{mac, zones[k].zone_id, t, t + to_millis(draw(dwell, rng)), false};
                ++passages[k];
                if (k == choke_index && unit(rng) < config.camera_accuracy) add_camera_event(t);
                if (v.mac) emit_probes(v, zones[k].sniffer_id);
                out.visits.push_back(std::move(v));
            }
        }

        for (std::size_t k = 0; k < zones.size(); ++k) {
            std::poisson_distribution<std::int64_t> passers(std::max(passerby * share_of(config, k), 1e-12));
            const std::int64_t m = passers(rng);
            for (std::int64_t i = 0; i < m; ++i) {
                const Instant t = at_offset();
                Visit v{std::nullopt, zones[k].zone_id, t,
                        t + to_millis(draw(config.passerby_dwell, rng)), true};
                if (unit(rng) < carry) {
                    v.mac = random_mac(rng);
                    emit_probes(v, zones[k].sniffer_id);
                }
                out.visits.push_back(std::move(v));
            }
        }

        if (config.camera_false_rate > 0.0) {
            std::poisson_distribution<std::int64_t> noise(config.camera_false_rate);
            const std::int64_t f = noise(rng);
            for (std::int64_t i = 0; i < f; ++i) add_camera_event(at_offset());
        }

        for (std::size_t k = 0; k < zones.size(); ++k) {
            out.truth.push_back({window, zones[k].zone_id, passages[k]});
        }
    }

    std::stable_sort(out.probes.begin(), out.probes.end(),
                     [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
    std::stable_sort(out.camera.begin(), out.camera.end(),
                     [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
    return out;
}

void write_logs(const SimulationOutput& output, const ZoneTopology& topology,
                const std::filesystem::path& directory) {
    std::filesystem::create_directories(directory);
    const auto open = [&](const char* name) {
        std::ofstream f(directory / name, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write " + (directory / name).string());
        return f;
    };
    {
        auto f = open("probes.ndjson");
        for (const auto& p : output.probes) f << to_json(p).dump() << '\n';
    }
    {
        auto f = open("camera.ndjson");
        for (const auto& c : output.camera) f << to_json(c).dump() << '\n';
    }
    {
        auto f = open("truth.ndjson");
        for (const auto& t : output.truth) f << to_json(t).dump() << '\n';
    }
    {
        auto f = open("topology.json");
        f << to_json(topology).dump(2) << '\n';
    }
}

nlohmann::json to_json(const ScenarioConfig& c) {
    nlohmann::json profile = nlohmann::json::array();
    for (const auto& h : c.arrival_profile) profile.push_back({h.hour, h.mean_per_window});
    const auto interval = [](const IntervalSpec& s) {
        return nlohmann::json{{"min_s", s.min_s},
                              {"max_s", s.max_s},
                              {"shape", s.shape == IntervalShape::Uniform ? "uniform" : "log_uniform"}};
    };
    nlohmann::json j{{"seed", c.seed},
                     {"duration_hours", c.duration_hours},
                     {"start", format_timestamp(c.start)},
                     {"window_seconds", c.window.count()},
                     {"zones", to_json(c.topology)["zones"]},
                     {"zone_share", c.zone_share},
                     {"arrival_profile", profile},
                     {"weekend_scale", c.weekend_scale},
                     {"probe_interval", interval(c.probe_interval)},
                     {"device_carry_rate", c.device_carry_rate},
                     {"passerby_rate", c.passerby_rate},
                     {"passerby_dwell", interval(c.passerby_dwell)},
                     {"transit_speed", c.transit_speed == TransitSpeed::Stroll ? "stroll" : "commute"},
                     {"camera_accuracy", c.camera_accuracy},
                     {"camera_false_rate", c.camera_false_rate},
                     {"peak_hours", c.peak_hours}};
    if (c.dwell) j["dwell"] = interval(*c.dwell);
    if (c.regime_shift) {
        j["regime_shift"] = {{"day", c.regime_shift->day},
                             {"carry_rate_factor", c.regime_shift->carry_rate_factor},
                             {"passerby_factor", c.regime_shift->passerby_factor}};
    }
    return j;
}

}  // namespace crowd::sim
