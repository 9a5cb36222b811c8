#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace crowd {

struct GeoLocation {
    double latitude = 0.0;
    double longitude = 0.0;
};

struct Zone {
    std::string zone_id;
    std::string sniffer_id;
    GeoLocation geolocation;
    bool is_choke_point = false;
    std::vector<std::string> camera_ids;
    // MAC of the sniffer hardware itself, published as broker domain metadata.
    std::string sniffer_mac;
};

struct ZoneTopology {
    std::vector<Zone> zones;
};

struct TopologyReport {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

/// Checks every invariant and lists each violation found.
TopologyReport check_topology(const ZoneTopology& topology);

/// A topology that passed validation. The choke point is always zone index 0.
class ValidatedTopology {
public:
    const std::vector<Zone>& zones() const { return zones_; }
    const Zone& choke() const { return zones_.front(); }

    const Zone* zone_by_id(const std::string& zone_id) const;
    const Zone* zone_by_sniffer(const std::string& sniffer_id) const;
    bool is_choke_camera(const std::string& camera_id) const;

private:
    friend ValidatedTopology validate_topology(const ZoneTopology&);
    std::vector<Zone> zones_;
};

/// Throws TopologyError carrying the full report when any invariant fails.
ValidatedTopology validate_topology(const ZoneTopology& topology);

class TopologyError : public std::runtime_error {
public:
    explicit TopologyError(TopologyReport report);
    const TopologyReport& report() const { return report_; }

private:
    TopologyReport report_;
};

ZoneTopology topology_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ZoneTopology& topology);
ZoneTopology load_topology(const std::string& path);

}  // namespace crowd
