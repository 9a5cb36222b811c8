#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "crowd/anonymize.hpp"
#include "crowd/model.hpp"
#include "crowd/time.hpp"
#include "crowd/topology.hpp"

namespace testing {

inline crowd::Instant at(const char* iso) { return crowd::parse_timestamp(iso); }

inline crowd::Instant origin() { return at("2017-04-10T00:00:00.000+00:00"); }

/// Deterministic DeviceId for a small integer.
inline crowd::DeviceId device(int n) { return crowd::DeviceId(crowd::sha256_hex("device-" + std::to_string(n))); }

inline crowd::SaltConfig salt(const char* hex = "00112233445566778899aabbccddeeff") {
    return crowd::salt_from_hex(hex);
}

/// Choke zone M1 with cameras C1..C4, then M2..M5.
inline crowd::ZoneTopology five_zones() {
    crowd::ZoneTopology t;
    for (int i = 1; i <= 5; ++i) {
        crowd::Zone z;
        z.zone_id = "M" + std::to_string(i);
        z.sniffer_id = "sniffer-M" + std::to_string(i);
        z.geolocation = {-41.2789 + 0.0001 * i, 174.7806};
        z.sniffer_mac = "B8:27:EB:00:00:0" + std::to_string(i);
        if (i == 1) {
            z.is_choke_point = true;
            z.camera_ids = {"C1", "C2", "C3", "C4"};
        }
        t.zones.push_back(z);
    }
    return t;
}

/// Temporary directory removed on scope exit.
class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("crowd-test-" + std::to_string(rd()) + "-" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace testing
