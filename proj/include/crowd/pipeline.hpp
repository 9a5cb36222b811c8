#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "crowd/anonymize.hpp"
#include "crowd/broker.hpp"
#include "crowd/calibration.hpp"
#include "crowd/history.hpp"
#include "crowd/ingest.hpp"
#include "crowd/store.hpp"
#include "crowd/topology.hpp"

namespace crowd {

struct CalibrationSpec {
    CalibrationMode mode = CalibrationMode::AdaptiveLinear;
    std::size_t q = 10;

    std::string label() const { return algorithm_label(mode, q); }
};

/// Parses "proportional", "adaptive_linear" (q from default_q) or "adaptive_linear:<q>".
CalibrationSpec parse_calibration_spec(std::string_view text, std::size_t default_q = 10);

struct PipelineConfig {
    std::chrono::seconds window{900};
    // The first entry is published to the broker; the others are recorded in
    // the history only, for side-by-side evaluation.
    std::vector<CalibrationSpec> calibrations{{CalibrationMode::AdaptiveLinear, 10}};
    std::chrono::seconds finalization_grace{30};
    std::string broker_endpoint;
    std::string store_path;
    std::optional<Instant> epoch_origin;
    SaltConfig salt;
    std::chrono::milliseconds poll_interval{100};
};

/// Throws std::invalid_argument for a negative grace or a non-positive window.
void validate(const PipelineConfig& config);

/// Reads the service config file. Keys: window_seconds, algorithm, q,
/// shadow_algorithms, finalization_grace_seconds, broker_endpoint,
/// store_path, epoch_origin, salt (hex), poll_interval_ms.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);

/// Applies SALT, POLL_INTERVAL_MS, WINDOW_SECONDS, ALGORITHM and Q overrides.
void apply_environment(PipelineConfig& config);

/// Receives every published entity update, in window order per entity.
class ContextPublisher {
public:
    virtual ~ContextPublisher() = default;
    virtual void publish(const ContextEntity& entity) = 0;
};

class LocalBrokerPublisher : public ContextPublisher {
public:
    explicit LocalBrokerPublisher(ContextBroker& broker) : broker_(broker) {}
    void publish(const ContextEntity& entity) override { broker_.update(entity); }

private:
    ContextBroker& broker_;
};

/// Posts NGSI updateContext requests to a remote broker.
class HttpBrokerPublisher : public ContextPublisher {
public:
    explicit HttpBrokerPublisher(std::string endpoint);
    void publish(const ContextEntity& entity) override;

private:
    std::string endpoint_;
    NotificationSender sender_;
};

/// Builds the broker entity for one zone estimate.
ContextEntity entity_for_estimate(const Zone& zone, const ZoneEstimate& estimate);

struct PipelineMetrics {
    std::uint64_t finalized_windows = 0;
    std::uint64_t publish_failures = 0;
    std::uint64_t store_retries = 0;
};

/// Finalizes windows in order: counts devices per zone, totals the choke
/// camera, advances every calibration track once, persists and publishes.
class Pipeline {
public:
    Pipeline(PipelineConfig config, const ValidatedTopology& topology, EventStore& store,
             ContextPublisher* publisher, Instant origin, std::int64_t first_window = 0);

    /// Finalizes the next window, which must be `index`. Returns the estimates
    /// of the published track. Throws std::logic_error for an out-of-order or
    /// already finalized window.
    std::vector<ZoneEstimate> finalize_window(std::int64_t index);

    /// Finalizes every pending window whose end plus grace is at or before `now`.
    std::size_t advance_to(Instant now);

    /// Finalizes every pending window up to and including `last_index`.
    std::size_t finalize_through(std::int64_t last_index);

    /// Estimates for an already finalized window including late records, using
    /// the coefficients in force at the time. Nothing is published.
    std::vector<ZoneEstimate> recompute(std::int64_t index) const;

    std::int64_t next_window() const;
    const WindowGrid& grid() const { return grid_; }
    EstimateHistory history() const;
    PipelineMetrics metrics() const;

private:
    std::vector<WindowMeasurement> measure(std::int64_t index, bool include_late) const;

    PipelineConfig config_;
    const ValidatedTopology& topology_;
    EventStore& store_;
    ContextPublisher* publisher_;
    WindowGrid grid_;

    mutable std::mutex mutex_;
    std::vector<CalibrationState> tracks_;
    std::int64_t next_window_;
    EstimateHistory history_;
    PipelineMetrics metrics_;
};

struct ReplayOptions {
    bool strict = true;
    // Windows to finalize counted from the origin; defaults to the window of
    // the last record.
    std::optional<std::int64_t> window_count;
    ContextPublisher* publisher = nullptr;
};

struct ReplayResult {
    EstimateHistory history;
    IngestMetrics ingest;
    std::size_t finalized_windows = 0;
    std::size_t skipped_lines = 0;
    Instant origin{};
};

/// A corrupt replay line in strict mode.
class ReplayError : public std::runtime_error {
public:
    ReplayError(const std::string& file, std::size_t line, const std::string& what);
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// Replays NDJSON probe and camera logs through ingestion and the pipeline on
/// a virtual clock.
ReplayResult run_replay(const std::filesystem::path& probe_log, const std::filesystem::path& camera_log,
                        const PipelineConfig& config, const ValidatedTopology& topology,
                        const ReplayOptions& options = {});

}  // namespace crowd
