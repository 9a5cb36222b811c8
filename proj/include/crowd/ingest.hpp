#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include <json.hpp>

#include "crowd/anonymize.hpp"
#include "crowd/model.hpp"
#include "crowd/store.hpp"
#include "crowd/topology.hpp"

namespace crowd {

/// A probe as reported by a sniffer, still carrying the raw MAC.
struct RawProbeReport {
    std::string mac;
    std::string sniffer_id;
    Instant timestamp{};
    std::int64_t sequence_number = 0;
    std::optional<int> rssi;
};

nlohmann::json to_json(const RawProbeReport& report);
/// Throws on missing fields or a malformed timestamp.
RawProbeReport raw_probe_from_json(const nlohmann::json& j);

enum class RejectReason {
    MalformedRecord,
    MalformedMac,
    MalformedTimestamp,
    UnknownSniffer,
    UnknownCamera,
    InvalidCount,
    BeforeOrigin,
};

std::string_view to_string(RejectReason reason);

struct Rejection {
    RejectReason reason;
    std::string detail;
};

struct IngestedProbe {
    ProbeRecord record;
    std::string zone_id;
    std::int64_t window_index = 0;
    bool duplicate = false;
    bool late = false;
};

struct IngestedCamera {
    CameraEvent event;
    std::int64_t window_index = 0;
    bool duplicate = false;
    bool late = false;
};

template <typename T>
using IngestResult = std::variant<T, Rejection>;

struct IngestMetrics {
    std::uint64_t accepted_probes = 0;
    std::uint64_t accepted_camera_events = 0;
    std::uint64_t duplicates = 0;
    std::uint64_t late = 0;
    std::map<std::string, std::uint64_t> rejected;
    std::uint64_t rejected_total() const;
};

nlohmann::json to_json(const IngestMetrics& m);

/// Validates reports against the topology, anonymizes MACs and appends to the
/// store. The raw MAC never reaches the store. Safe for concurrent producers.
class Ingestor {
public:
    Ingestor(const ValidatedTopology& topology, SaltConfig salt, WindowGrid grid, EventStore& store);

    IngestResult<IngestedProbe> ingest_probe(const RawProbeReport& report);
    IngestResult<IngestedProbe> ingest_probe(const nlohmann::json& body);
    IngestResult<IngestedCamera> ingest_camera_event(const CameraEvent& event);
    IngestResult<IngestedCamera> ingest_camera_event(const nlohmann::json& body);

    IngestMetrics metrics() const;
    const WindowGrid& grid() const { return grid_; }

private:
    Rejection reject(RejectReason reason, std::string detail);

    const ValidatedTopology& topology_;
    SaltConfig salt_;
    WindowGrid grid_;
    EventStore& store_;

    mutable std::mutex metrics_mutex_;
    IngestMetrics metrics_;
};

}  // namespace crowd
