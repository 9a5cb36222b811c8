#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "crowd/time.hpp"

namespace crowd {

/// Anonymized device identifier: 64 lowercase hex characters.
class DeviceId {
public:
    /// Throws std::invalid_argument for anything other than 64 hex chars.
    explicit DeviceId(std::string value);

    const std::string& str() const { return value_; }

    friend bool operator==(const DeviceId&, const DeviceId&) = default;
    friend auto operator<=>(const DeviceId&, const DeviceId&) = default;

private:
    std::string value_;
};

struct ProbeRecord {
    DeviceId device;
    std::string sniffer_id;
    Instant timestamp{};
    std::int64_t sequence_number = 0;
    std::optional<int> rssi;
};

enum class Direction { MoveIn, MoveOut };

std::string_view to_string(Direction d);
Direction parse_direction(std::string_view text);

struct CameraEvent {
    std::string camera_id;
    Direction direction = Direction::MoveIn;
    Instant timestamp{};
    std::int64_t count = 1;
    // Optional source-assigned id; when present it makes redelivery idempotent.
    std::optional<std::string> event_id;
};

/// Throws std::invalid_argument when count < 1.
void validate(const CameraEvent& event);

struct WindowMeasurement {
    TimeWindow window;
    std::string zone_id;
    std::int64_t device_count = 0;
    std::optional<std::int64_t> camera_total;
};

// NDJSON wire forms shared by the replay source, the store and the simulator.
nlohmann::json to_json(const CameraEvent& event);
CameraEvent camera_event_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ProbeRecord& record);
ProbeRecord probe_record_from_json(const nlohmann::json& j);

}  // namespace crowd

template <>
struct std::hash<crowd::DeviceId> {
    std::size_t operator()(const crowd::DeviceId& id) const noexcept {
        return std::hash<std::string>{}(id.str());
    }
};
