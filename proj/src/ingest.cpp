#include "crowd/ingest.hpp"

#include <stdexcept>

namespace crowd {

nlohmann::json to_json(const RawProbeReport& report) {
    nlohmann::json j{{"mac", report.mac},
                     {"sniffer_id", report.sniffer_id},
                     {"timestamp", format_timestamp(report.timestamp)},
                     {"sequence_number", report.sequence_number}};
    if (report.rssi) j["rssi"] = *report.rssi;
    return j;
}

RawProbeReport raw_probe_from_json(const nlohmann::json& j) {
    RawProbeReport r;
    r.mac = j.at("mac").get<std::string>();
    r.sniffer_id = j.at("sniffer_id").get<std::string>();
    r.timestamp = parse_timestamp(j.at("timestamp").get<std::string>());
    r.sequence_number = j.at("sequence_number").get<std::int64_t>();
    if (j.contains("rssi") && !j["rssi"].is_null()) r.rssi = j["rssi"].get<int>();
    return r;
}

std::string_view to_string(RejectReason reason) {
    switch (reason) {
        case RejectReason::MalformedRecord: return "malformed_record";
        case RejectReason::MalformedMac: return "malformed_mac";
        case RejectReason::MalformedTimestamp: return "malformed_timestamp";
        case RejectReason::UnknownSniffer: return "unknown_sniffer";
        case RejectReason::UnknownCamera: return "unknown_camera";
        case RejectReason::InvalidCount: return "invalid_count";
        case RejectReason::BeforeOrigin: return "before_origin";
    }
    return "unknown";
}

std::uint64_t IngestMetrics::rejected_total() const {
    std::uint64_t total = 0;
    for (const auto& [_, n] : rejected) total += n;
    return total;
}

nlohmann::json to_json(const IngestMetrics& m) {
    return {{"accepted_probes", m.accepted_probes},
            {"accepted_camera_events", m.accepted_camera_events},
            {"duplicates", m.duplicates},
            {"late", m.late},
            {"rejected", m.rejected},
            {"rejected_total", m.rejected_total()}};
}

Ingestor::Ingestor(const ValidatedTopology& topology, SaltConfig salt, WindowGrid grid,
                   EventStore& store)
    : topology_(topology), salt_(std::move(salt)), grid_(grid), store_(store) {
    validate(salt_, grid_.duration);
}

Rejection Ingestor::reject(RejectReason reason, std::string detail) {
    std::lock_guard lock(metrics_mutex_);
    ++metrics_.rejected[std::string(to_string(reason))];
    return {reason, std::move(detail)};
}

IngestResult<IngestedProbe> Ingestor::ingest_probe(const RawProbeReport& report) {
    const Zone* zone = topology_.zone_by_sniffer(report.sniffer_id);
    if (!zone) return reject(RejectReason::UnknownSniffer, "unknown sniffer_id '" + report.sniffer_id + "'");
    if (!is_mac_address(report.mac)) return reject(RejectReason::MalformedMac, "mac is not six hex octets");
    if (report.timestamp < grid_.origin) {
        return reject(RejectReason::BeforeOrigin, "timestamp precedes the window origin");
    }
    IngestedProbe out{ProbeRecord{anonymize(report.mac, salt_, report.timestamp), report.sniffer_id,
                                  report.timestamp, report.sequence_number, report.rssi},
                      zone->zone_id, grid_.window_for(report.timestamp).index};
    const auto result = store_.append_probe(out.record, out.zone_id, out.window_index);
    out.duplicate = !result.stored;
    out.late = result.late;
    std::lock_guard lock(metrics_mutex_);
    if (out.duplicate) {
        ++metrics_.duplicates;
    } else {
        ++metrics_.accepted_probes;
        if (out.late) ++metrics_.late;
    }
    return out;
}

IngestResult<IngestedProbe> Ingestor::ingest_probe(const nlohmann::json& body) {
    RawProbeReport report;
    std::string timestamp;
    try {
        timestamp = body.at("timestamp").get<std::string>();
        report.mac = body.at("mac").get<std::string>();
        report.sniffer_id = body.at("sniffer_id").get<std::string>();
        report.sequence_number = body.at("sequence_number").get<std::int64_t>();
        if (body.contains("rssi") && !body["rssi"].is_null()) report.rssi = body["rssi"].get<int>();
    } catch (const std::exception& e) {
        return reject(RejectReason::MalformedRecord, e.what());
    }
    try {
        report.timestamp = parse_timestamp(timestamp);
    } catch (const std::exception& e) {
        return reject(RejectReason::MalformedTimestamp, e.what());
    }
    return ingest_probe(report);
}

IngestResult<IngestedCamera> Ingestor::ingest_camera_event(const CameraEvent& event) {
    if (!topology_.is_choke_camera(event.camera_id)) {
        return reject(RejectReason::UnknownCamera, "unknown camera_id '" + event.camera_id + "'");
    }
    if (event.count < 1) return reject(RejectReason::InvalidCount, "count must be >= 1");
    if (event.timestamp < grid_.origin) {
        return reject(RejectReason::BeforeOrigin, "timestamp precedes the window origin");
    }
    IngestedCamera out{event, grid_.window_for(event.timestamp).index};
    const auto result = store_.append_camera(event, out.window_index);
    out.duplicate = !result.stored;
    out.late = result.late;
    std::lock_guard lock(metrics_mutex_);
    if (out.duplicate) {
        ++metrics_.duplicates;
    } else {
        ++metrics_.accepted_camera_events;
        if (out.late) ++metrics_.late;
    }
    return out;
}

IngestResult<IngestedCamera> Ingestor::ingest_camera_event(const nlohmann::json& body) {
    CameraEvent event;
    std::string timestamp;
    try {
        timestamp = body.at("timestamp").get<std::string>();
        event.camera_id = body.at("camera_id").get<std::string>();
        event.direction = parse_direction(body.at("direction").get<std::string>());
        event.count = body.value("count", std::int64_t{1});
        if (body.contains("event_id") && !body["event_id"].is_null()) {
            event.event_id = body["event_id"].get<std::string>();
        }
    } catch (const std::exception& e) {
        return reject(RejectReason::MalformedRecord, e.what());
    }
    try {
        event.timestamp = parse_timestamp(timestamp);
    } catch (const std::exception& e) {
        return reject(RejectReason::MalformedTimestamp, e.what());
    }
    return ingest_camera_event(event);
}

IngestMetrics Ingestor::metrics() const {
    std::lock_guard lock(metrics_mutex_);
    return metrics_;
}

}  // namespace crowd
