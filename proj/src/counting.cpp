#include "crowd/counting.hpp"

#include <stdexcept>
#include <unordered_set>

namespace crowd {

WindowProbeSet::WindowProbeSet(TimeWindow window, std::string zone_id, std::string sniffer_id,
                               std::vector<ProbeRecord> probes)
    : window_(window), zone_id_(std::move(zone_id)), probes_(std::move(probes)) {
    for (const auto& p : probes_) {
        if (!window_.contains(p.timestamp)) {
            throw std::invalid_argument("probe at " + format_timestamp(p.timestamp) +
                                        " lies outside window " + std::to_string(window_.index));
        }
        if (p.sniffer_id != sniffer_id) {
            throw std::invalid_argument("probe from sniffer '" + p.sniffer_id +
                                        "' does not belong to zone '" + zone_id_ + "'");
        }
    }
}

std::int64_t count_devices(std::span<const ProbeRecord> probes) {
    std::unordered_set<std::string_view> seen;
    seen.reserve(probes.size());
    std::int64_t count = 0;
    for (const auto& p : probes) {
        if (seen.insert(p.device.str()).second) ++count;
    }
    return count;
}

std::int64_t count_devices(const WindowProbeSet& set) { return count_devices(set.probes()); }

std::int64_t camera_total(std::span<const CameraEvent> events, const TimeWindow& window) {
    std::int64_t move_in = 0;
    std::int64_t move_out = 0;
    for (const auto& e : events) {
        if (!window.contains(e.timestamp)) {
            throw std::invalid_argument("camera event at " + format_timestamp(e.timestamp) +
                                        " lies outside window " + std::to_string(window.index));
        }
        // Pedestrians cross the choke point in both directions.
        (e.direction == Direction::MoveIn ? move_in : move_out) += e.count;
    }
    return move_in + move_out;
}

}  // namespace crowd
