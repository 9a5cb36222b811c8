#include "crowd/model.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace crowd {

DeviceId::DeviceId(std::string value) : value_(std::move(value)) {
    const bool hex = std::all_of(value_.begin(), value_.end(), [](char c) {
        return std::isdigit(static_cast<unsigned char>(c)) || (c >= 'a' && c <= 'f');
    });
    if (value_.size() != 64 || !hex) {
        throw std::invalid_argument("device id must be 64 lowercase hex characters");
    }
}

std::string_view to_string(Direction d) {
    return d == Direction::MoveIn ? "MoveIn" : "MoveOut";
}

Direction parse_direction(std::string_view text) {
    if (text == "MoveIn") return Direction::MoveIn;
    if (text == "MoveOut") return Direction::MoveOut;
    throw std::invalid_argument("direction must be MoveIn or MoveOut, got '" +
                                std::string(text) + "'");
}

void validate(const CameraEvent& event) {
    if (event.count < 1) {
        throw std::invalid_argument("camera event count must be >= 1");
    }
    if (event.camera_id.empty()) {
        throw std::invalid_argument("camera event lacks camera_id");
    }
}

nlohmann::json to_json(const CameraEvent& event) {
    nlohmann::json j{{"camera_id", event.camera_id},
                     {"direction", to_string(event.direction)},
                     {"timestamp", format_timestamp(event.timestamp)},
                     {"count", event.count}};
    if (event.event_id) j["event_id"] = *event.event_id;
    return j;
}

CameraEvent camera_event_from_json(const nlohmann::json& j) {
    CameraEvent event;
    event.camera_id = j.at("camera_id").get<std::string>();
    event.direction = parse_direction(j.at("direction").get<std::string>());
    event.timestamp = parse_timestamp(j.at("timestamp").get<std::string>());
    event.count = j.value("count", std::int64_t{1});
    if (j.contains("event_id") && !j["event_id"].is_null()) {
        event.event_id = j["event_id"].get<std::string>();
    }
    return event;
}

nlohmann::json to_json(const ProbeRecord& record) {
    nlohmann::json j{{"device", record.device.str()},
                     {"sniffer_id", record.sniffer_id},
                     {"timestamp", format_timestamp(record.timestamp)},
                     {"sequence_number", record.sequence_number}};
    if (record.rssi) j["rssi"] = *record.rssi;
    return j;
}

ProbeRecord probe_record_from_json(const nlohmann::json& j) {
    ProbeRecord record{DeviceId(j.at("device").get<std::string>()),
                       j.at("sniffer_id").get<std::string>(),
                       parse_timestamp(j.at("timestamp").get<std::string>()),
                       j.at("sequence_number").get<std::int64_t>(),
                       std::nullopt};
    if (j.contains("rssi") && !j["rssi"].is_null()) record.rssi = j["rssi"].get<int>();
    return record;
}

}  // namespace crowd
