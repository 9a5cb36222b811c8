#include "crowd/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>

#include "crowd/counting.hpp"

namespace crowd {

namespace {

template <typename F>
void with_store_retry(F&& write, std::uint64_t& retries) {
    constexpr int kAttempts = 5;
    for (int attempt = 1;; ++attempt) {
        try {
            write();
            return;
        } catch (const std::exception& e) {
            if (attempt == kAttempts) throw;
            ++retries;
            std::cerr << "pipeline: store write failed (" << e.what() << "), retrying\n";
            std::this_thread::sleep_for(std::chrono::milliseconds{50} * (1 << (attempt - 1)));
        }
    }
}

const char* env(const char* name) {
    const char* v = std::getenv(name);
    return v && *v ? v : nullptr;
}

}  // namespace

CalibrationSpec parse_calibration_spec(std::string_view text, std::size_t default_q) {
    const auto colon = text.find(':');
    const auto mode = parse_calibration_mode(text.substr(0, colon));
    CalibrationSpec spec{mode, mode == CalibrationMode::AdaptiveLinear ? default_q : 1};
    if (colon != std::string_view::npos) {
        if (mode != CalibrationMode::AdaptiveLinear) {
            throw std::invalid_argument("only adaptive_linear takes a q");
        }
        const std::string digits(text.substr(colon + 1));
        std::size_t used = 0;
        const long q = std::stol(digits, &used);
        if (used != digits.size() || q < 1) throw std::invalid_argument("q must be a positive integer");
        spec.q = static_cast<std::size_t>(q);
    }
    return spec;
}

void validate(const PipelineConfig& c) {
    if (c.window.count() <= 0) throw std::invalid_argument("window_seconds must be positive");
    if (c.finalization_grace.count() < 0) throw std::invalid_argument("finalization_grace must be >= 0");
    if (c.calibrations.empty()) throw std::invalid_argument("at least one calibration algorithm is required");
    for (const auto& spec : c.calibrations) {
        if (spec.q < 1) throw std::invalid_argument("q must be a positive integer");
    }
    if (c.poll_interval.count() <= 0) throw std::invalid_argument("poll_interval_ms must be positive");
}

PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
    PipelineConfig c;
    c.window = std::chrono::seconds{j.value("window_seconds", std::int64_t{900})};
    const auto q = j.value("q", std::size_t{10});
    c.calibrations = {parse_calibration_spec(j.value("algorithm", std::string{"adaptive_linear"}), q)};
    for (const auto& extra : j.value("shadow_algorithms", std::vector<std::string>{})) {
        c.calibrations.push_back(parse_calibration_spec(extra, q));
    }
    c.finalization_grace = std::chrono::seconds{j.value("finalization_grace_seconds", std::int64_t{30})};
    c.broker_endpoint = j.value("broker_endpoint", std::string{});
    c.store_path = j.value("store_path", std::string{});
    if (j.contains("epoch_origin") && !j["epoch_origin"].is_null()) {
        c.epoch_origin = parse_timestamp(j["epoch_origin"].get<std::string>());
    }
    if (j.contains("salt")) c.salt = salt_from_hex(j["salt"].get<std::string>());
    c.poll_interval = std::chrono::milliseconds{j.value("poll_interval_ms", std::int64_t{100})};
    return c;
}

void apply_environment(PipelineConfig& c) {
    if (const char* v = env("SALT")) c.salt = salt_from_hex(v);
    if (const char* v = env("POLL_INTERVAL_MS")) c.poll_interval = std::chrono::milliseconds{std::stol(v)};
    if (const char* v = env("WINDOW_SECONDS")) c.window = std::chrono::seconds{std::stol(v)};
    const char* algo = env("ALGORITHM");
    const char* q = env("Q");
    if (algo || q) {
        auto& primary = c.calibrations.front();
        if (algo) primary.mode = parse_calibration_mode(algo);
        if (q) primary.q = static_cast<std::size_t>(std::stoul(q));
    }
}

HttpBrokerPublisher::HttpBrokerPublisher(std::string endpoint)
    : endpoint_(std::move(endpoint)), sender_(http_sender()) {
    while (!endpoint_.empty() && endpoint_.back() == '/') endpoint_.pop_back();
}

void HttpBrokerPublisher::publish(const ContextEntity& entity) {
    const nlohmann::json body{{"contextElements", nlohmann::json::array({to_json(entity)})},
                              {"updateAction", "UPDATE"}};
    if (!sender_(endpoint_ + "/ngsi10/updateContext", body.dump())) {
        throw std::runtime_error("broker at " + endpoint_ + " rejected or missed the update");
    }
}

ContextEntity entity_for_estimate(const Zone& zone, const ZoneEstimate& estimate) {
    ContextEntity entity = entity_for_zone(zone);
    CrowdEstimationAttribute attr;
    attr.context_value = std::max<std::int64_t>(0, estimate.rounded());
    attr.start_time = estimate.window.start;
    attr.end_time = estimate.window.end();
    attr.estimated_value = estimate.calibrated;
    attr.fallback = estimate.fallback;
    entity.attribute = attr;
    return entity;
}

Pipeline::Pipeline(PipelineConfig config, const ValidatedTopology& topology, EventStore& store,
                   ContextPublisher* publisher, Instant origin, std::int64_t first_window)
    : config_(std::move(config)),
      topology_(topology),
      store_(store),
      publisher_(publisher),
      grid_{origin, config_.window},
      next_window_(first_window) {
    validate(config_);
    for (const auto& spec : config_.calibrations) tracks_.emplace_back(spec.mode, spec.q);
}

std::vector<WindowMeasurement> Pipeline::measure(std::int64_t index, bool include_late) const {
    const TimeWindow window = grid_.at(index);
    std::vector<WindowMeasurement> out;
    for (const auto& zone : topology_.zones()) {
        WindowMeasurement m;
        m.window = window;
        m.zone_id = zone.zone_id;
        const auto probes = store_.probes(zone.zone_id, index, include_late);
        m.device_count = count_devices(WindowProbeSet(window, zone.zone_id, zone.sniffer_id, probes));
        if (zone.is_choke_point) {
            const auto events = store_.camera_events(index, include_late);
            m.camera_total = camera_total(events, window);
        }
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<ZoneEstimate> Pipeline::finalize_window(std::int64_t index) {
    std::lock_guard lock(mutex_);
    if (index != next_window_) {
        throw std::logic_error("window " + std::to_string(index) + " finalized out of order (next is " +
                               std::to_string(next_window_) + ")");
    }
    if (store_.is_finalized(index)) {
        throw std::logic_error("window " + std::to_string(index) + " was already finalized");
    }
    const auto measurements = measure(index, false);
    const std::span<const WindowMeasurement> others(measurements.begin() + 1, measurements.end());

    std::vector<std::vector<ZoneEstimate>> per_track;
    std::vector<CalibrationState> next_tracks;
    std::vector<CoefficientRecord> coefficients;
    for (const auto& state : tracks_) {
        auto [next, estimates] = update_and_calibrate(state, measurements.front(), others);
        coefficients.push_back({measurements.front().window, next.mode(),
                                next.mode() == CalibrationMode::AdaptiveLinear ? next.q() : 0,
                                next.coefficient().value_or(1.0), next.training_set().size(),
                                !next.coefficient_valid()});
        next_tracks.push_back(std::move(next));
        per_track.push_back(std::move(estimates));
    }

    for (std::size_t t = 0; t < per_track.size(); ++t) {
        with_store_retry([&] { store_.append_estimates(per_track[t]); }, metrics_.store_retries);
        with_store_retry([&] { store_.append_coefficient(coefficients[t]); }, metrics_.store_retries);
    }
    with_store_retry([&] { store_.mark_finalized(index); }, metrics_.store_retries);

    tracks_ = std::move(next_tracks);
    ++next_window_;
    ++metrics_.finalized_windows;
    for (std::size_t t = 0; t < per_track.size(); ++t) {
        history_.estimates.insert(history_.estimates.end(), per_track[t].begin(), per_track[t].end());
        history_.coefficients.push_back(coefficients[t]);
    }

    if (publisher_) {
        for (const auto& estimate : per_track.front()) {
            try {
                publisher_->publish(entity_for_estimate(*topology_.zone_by_id(estimate.zone_id), estimate));
            } catch (const std::exception& e) {
                ++metrics_.publish_failures;
                std::cerr << "pipeline: publishing " << estimate.zone_id << " window " << index
                          << " failed: " << e.what() << '\n';
            }
        }
    }
    return per_track.front();
}

std::size_t Pipeline::advance_to(Instant now) {
    std::size_t done = 0;
    while (true) {
        const std::int64_t index = next_window();
        if (grid_.at(index).end() + config_.finalization_grace > now) break;
        finalize_window(index);
        ++done;
    }
    return done;
}

std::size_t Pipeline::finalize_through(std::int64_t last_index) {
    std::size_t done = 0;
    while (next_window() <= last_index) {
        finalize_window(next_window());
        ++done;
    }
    return done;
}

std::vector<ZoneEstimate> Pipeline::recompute(std::int64_t index) const {
    std::lock_guard lock(mutex_);
    if (index >= next_window_ || !store_.is_finalized(index)) {
        throw std::logic_error("window " + std::to_string(index) + " has not been finalized");
    }
    const auto& spec = config_.calibrations.front();
    const auto it = std::find_if(history_.coefficients.begin(), history_.coefficients.end(),
                                 [&](const CoefficientRecord& c) {
                                     return c.window.index == index && c.algorithm == spec.mode &&
                                            c.q == (spec.mode == CalibrationMode::AdaptiveLinear ? spec.q : 0);
                                 });
    if (it == history_.coefficients.end()) {
        throw std::logic_error("no coefficient recorded for window " + std::to_string(index));
    }
    std::vector<ZoneEstimate> out;
    for (const auto& m : measure(index, true)) {
        ZoneEstimate e;
        e.zone_id = m.zone_id;
        e.window = m.window;
        e.raw_count = m.device_count;
        e.algorithm = it->algorithm;
        e.q = it->q;
        e.fallback = it->fallback;
        e.coefficient_used = it->fallback ? 1.0 : it->coefficient;
        e.calibrated = e.coefficient_used * static_cast<double>(m.device_count);
        out.push_back(std::move(e));
    }
    return out;
}

std::int64_t Pipeline::next_window() const {
    std::lock_guard lock(mutex_);
    return next_window_;
}

EstimateHistory Pipeline::history() const {
    std::lock_guard lock(mutex_);
    return history_;
}

PipelineMetrics Pipeline::metrics() const {
    std::lock_guard lock(mutex_);
    return metrics_;
}

ReplayError::ReplayError(const std::string& file, std::size_t line, const std::string& what)
    : std::runtime_error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}

namespace {

struct ReplayRecord {
    Instant timestamp;
    std::optional<RawProbeReport> probe;
    std::optional<CameraEvent> camera;
};

template <typename Parse>
void load_log(const std::filesystem::path& path, bool strict, std::size_t& skipped,
              std::vector<ReplayRecord>& out, Parse parse) {
    if (path.empty()) return;
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open log " + path.string());
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        try {
            out.push_back(parse(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            if (strict) throw ReplayError(path.string(), n, e.what());
            ++skipped;
        }
    }
}

}  // namespace

ReplayResult run_replay(const std::filesystem::path& probe_log, const std::filesystem::path& camera_log,
                        const PipelineConfig& config, const ValidatedTopology& topology,
                        const ReplayOptions& options) {
    validate(config);
    ReplayResult result;
    std::vector<ReplayRecord> records;
    load_log(probe_log, options.strict, result.skipped_lines, records, [](const nlohmann::json& j) {
        auto report = raw_probe_from_json(j);
        const auto t = report.timestamp;
        return ReplayRecord{t, std::move(report), std::nullopt};
    });
    load_log(camera_log, options.strict, result.skipped_lines, records, [](const nlohmann::json& j) {
        auto event = camera_event_from_json(j);
        const auto t = event.timestamp;
        return ReplayRecord{t, std::nullopt, std::move(event)};
    });
    if (records.empty() && !config.epoch_origin) return result;

    std::stable_sort(records.begin(), records.end(),
                     [](const ReplayRecord& a, const ReplayRecord& b) { return a.timestamp < b.timestamp; });
    result.origin = config.epoch_origin ? *config.epoch_origin : utc_midnight(records.front().timestamp);

    std::unique_ptr<EventStore> store =
        config.store_path.empty()
            ? std::make_unique<EventStore>()
            : std::make_unique<EventStore>(config.store_path, EventStore::OpenMode::Truncate);
    const WindowGrid grid{result.origin, config.window};
    Ingestor ingestor(topology, config.salt, grid, *store);
    Pipeline pipeline(config, topology, *store, options.publisher, result.origin);

    for (const auto& r : records) {
        if (r.timestamp >= result.origin) pipeline.advance_to(r.timestamp);
        if (r.probe) {
            ingestor.ingest_probe(*r.probe);
        } else {
            ingestor.ingest_camera_event(*r.camera);
        }
    }

    std::int64_t last = -1;
    if (options.window_count) {
        last = *options.window_count - 1;
    } else if (!records.empty() && records.back().timestamp >= result.origin) {
        last = grid.window_for(records.back().timestamp).index;
    }
    pipeline.finalize_through(last);
    store->flush();

    result.history = pipeline.history();
    result.ingest = ingestor.metrics();
    result.finalized_windows = static_cast<std::size_t>(pipeline.metrics().finalized_windows);
    return result;
}

}  // namespace crowd
