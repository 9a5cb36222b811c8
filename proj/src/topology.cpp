#include "crowd/topology.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

namespace crowd {

namespace {

std::string join(const std::vector<std::string>& parts) {
    std::string out;
    for (const auto& p : parts) {
        if (!out.empty()) out += "; ";
        out += p;
    }
    return out;
}

}  // namespace

TopologyError::TopologyError(TopologyReport report)
    : std::runtime_error("invalid topology: " + join(report.violations)),
      report_(std::move(report)) {}

TopologyReport check_topology(const ZoneTopology& topology) {
    TopologyReport report;
    const auto chokes = std::count_if(topology.zones.begin(), topology.zones.end(),
                                      [](const Zone& z) { return z.is_choke_point; });
    if (chokes == 0) report.violations.emplace_back("no choke point");
    if (chokes > 1) report.violations.emplace_back("multiple choke points");

    std::set<std::string> zone_ids;
    std::set<std::string> sniffer_ids;
    std::set<std::string> camera_ids;
    for (const auto& zone : topology.zones) {
        if (zone.zone_id.empty()) report.violations.emplace_back("zone with empty zone_id");
        if (!zone_ids.insert(zone.zone_id).second) {
            report.violations.push_back("duplicate zone_id '" + zone.zone_id + "'");
        }
        if (zone.sniffer_id.empty()) {
            report.violations.push_back("zone '" + zone.zone_id + "' lacks sniffer_id");
        } else if (!sniffer_ids.insert(zone.sniffer_id).second) {
            report.violations.push_back("duplicate sniffer_id '" + zone.sniffer_id + "'");
        }
        if (zone.is_choke_point && zone.camera_ids.empty()) {
            report.violations.push_back("choke point lacks camera");
        }
        if (!zone.is_choke_point && !zone.camera_ids.empty()) {
            report.violations.push_back("non-choke zone '" + zone.zone_id + "' has cameras");
        }
        for (const auto& cam : zone.camera_ids) {
            if (!camera_ids.insert(cam).second) {
                report.violations.push_back("duplicate camera_id '" + cam + "'");
            }
        }
    }
    return report;
}

ValidatedTopology validate_topology(const ZoneTopology& topology) {
    auto report = check_topology(topology);
    if (!report.ok()) throw TopologyError(std::move(report));
    ValidatedTopology out;
    out.zones_ = topology.zones;
    std::stable_partition(out.zones_.begin(), out.zones_.end(),
                          [](const Zone& z) { return z.is_choke_point; });
    return out;
}

const Zone* ValidatedTopology::zone_by_id(const std::string& zone_id) const {
    auto it = std::find_if(zones_.begin(), zones_.end(),
                           [&](const Zone& z) { return z.zone_id == zone_id; });
    return it == zones_.end() ? nullptr : &*it;
}

const Zone* ValidatedTopology::zone_by_sniffer(const std::string& sniffer_id) const {
    auto it = std::find_if(zones_.begin(), zones_.end(),
                           [&](const Zone& z) { return z.sniffer_id == sniffer_id; });
    return it == zones_.end() ? nullptr : &*it;
}

bool ValidatedTopology::is_choke_camera(const std::string& camera_id) const {
    const auto& cams = choke().camera_ids;
    return std::find(cams.begin(), cams.end(), camera_id) != cams.end();
}

ZoneTopology topology_from_json(const nlohmann::json& j) {
    ZoneTopology topology;
    for (const auto& jz : j.at("zones")) {
        Zone zone;
        zone.zone_id = jz.at("zone_id").get<std::string>();
        zone.sniffer_id = jz.at("sniffer_id").get<std::string>();
        if (jz.contains("geolocation")) {
            zone.geolocation.latitude = jz["geolocation"].at("latitude").get<double>();
            zone.geolocation.longitude = jz["geolocation"].at("longitude").get<double>();
        }
        zone.is_choke_point = jz.value("is_choke_point", false);
        zone.camera_ids = jz.value("camera_ids", std::vector<std::string>{});
        zone.sniffer_mac = jz.value("sniffer_mac", std::string{});
        topology.zones.push_back(std::move(zone));
    }
    return topology;
}

nlohmann::json to_json(const ZoneTopology& topology) {
    nlohmann::json zones = nlohmann::json::array();
    for (const auto& z : topology.zones) {
        zones.push_back({{"zone_id", z.zone_id},
                         {"sniffer_id", z.sniffer_id},
                         {"geolocation",
                          {{"latitude", z.geolocation.latitude},
                           {"longitude", z.geolocation.longitude}}},
                         {"is_choke_point", z.is_choke_point},
                         {"camera_ids", z.camera_ids},
                         {"sniffer_mac", z.sniffer_mac}});
    }
    return {{"zones", zones}};
}

ZoneTopology load_topology(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open topology file " + path);
    return topology_from_json(nlohmann::json::parse(in));
}

}  // namespace crowd
