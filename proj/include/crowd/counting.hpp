#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "crowd/model.hpp"
#include "crowd/time.hpp"

namespace crowd {

/// The probes one sniffer captured during one window.
class WindowProbeSet {
public:
    /// Throws std::invalid_argument if a probe lies outside the window or
    /// was captured by a different sniffer.
    WindowProbeSet(TimeWindow window, std::string zone_id, std::string sniffer_id,
                   std::vector<ProbeRecord> probes);

    const TimeWindow& window() const { return window_; }
    const std::string& zone_id() const { return zone_id_; }
    std::span<const ProbeRecord> probes() const { return probes_; }

private:
    TimeWindow window_;
    std::string zone_id_;
    std::vector<ProbeRecord> probes_;
};

/// Number of distinct devices among the probes.
std::int64_t count_devices(std::span<const ProbeRecord> probes);
std::int64_t count_devices(const WindowProbeSet& set);

/// Move-in plus move-out counts over every choke-point camera. Throws
/// std::invalid_argument for an event outside the window.
std::int64_t camera_total(std::span<const CameraEvent> events, const TimeWindow& window);

}  // namespace crowd
