#include "crowd/store.hpp"

#include <stdexcept>

#include "crowd/anonymize.hpp"

namespace crowd {

namespace fs = std::filesystem;

namespace {

constexpr const char* kProbesFile = "probes.ndjson";
constexpr const char* kCameraFile = "camera.ndjson";
constexpr const char* kFinalizedFile = "finalized.ndjson";
constexpr const char* kEstimatesFile = "estimates.csv";
constexpr const char* kCoefficientsFile = "coefficients.csv";

std::string camera_key(const CameraEvent& e) {
    return e.camera_id + '|' + *e.event_id;
}

std::ofstream open_append(const fs::path& path, const char* header) {
    const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
    std::ofstream out(path, std::ios::app | std::ios::binary);
    if (!out) throw std::runtime_error("cannot open store file " + path.string());
    if (fresh && header) out << header << '\n';
    return out;
}

}  // namespace

std::string EventStore::probe_key(const ProbeRecord& r) {
    return sha256_hex(r.sniffer_id + '|' + r.device.str() + '|' +
                      std::to_string(r.timestamp.time_since_epoch().count()) + '|' +
                      std::to_string(r.sequence_number));
}

EventStore::EventStore(fs::path directory, OpenMode mode) : directory_(std::move(directory)) {
    fs::create_directories(*directory_);
    if (mode == OpenMode::Truncate) {
        for (const char* name :
             {kProbesFile, kCameraFile, kFinalizedFile, kEstimatesFile, kCoefficientsFile}) {
            fs::remove(*directory_ / name);
        }
    } else {
        reload();
    }
    probes_out_ = open_append(*directory_ / kProbesFile, nullptr);
    camera_out_ = open_append(*directory_ / kCameraFile, nullptr);
    finalized_out_ = open_append(*directory_ / kFinalizedFile, nullptr);
    estimates_out_ = open_append(*directory_ / kEstimatesFile, kEstimatesHeader);
    coefficients_out_ = open_append(*directory_ / kCoefficientsFile, kCoefficientsHeader);
}

void EventStore::reload() {
    std::string line;
    if (std::ifstream in(*directory_ / kProbesFile); in) {
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto j = nlohmann::json::parse(line);
            auto record = probe_record_from_json(j);
            probe_keys_.insert(probe_key(record));
            const bool late = j.value("late", false);
            late_total_ += late ? 1 : 0;
            ++probe_total_;
            probes_[{j.at("zone_id").get<std::string>(), j.at("window_index").get<std::int64_t>()}]
                .push_back({std::move(record), late});
        }
    }
    if (std::ifstream in(*directory_ / kCameraFile); in) {
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto j = nlohmann::json::parse(line);
            auto event = camera_event_from_json(j);
            if (event.event_id) camera_keys_.insert(camera_key(event));
            const bool late = j.value("late", false);
            late_total_ += late ? 1 : 0;
            ++camera_total_;
            camera_[j.at("window_index").get<std::int64_t>()].push_back({std::move(event), late});
        }
    }
    if (std::ifstream in(*directory_ / kFinalizedFile); in) {
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            finalized_.insert(nlohmann::json::parse(line).at("window_index").get<std::int64_t>());
        }
    }
}

void EventStore::write_line(std::ofstream& out, const std::string& line) {
    if (!directory_) return;
    out << line << '\n';
    if (!out) throw std::runtime_error("store write failed");
}

EventStore::AppendResult EventStore::append_probe(const ProbeRecord& record,
                                                  const std::string& zone_id,
                                                  std::int64_t window_index) {
    std::lock_guard lock(mutex_);
    if (!probe_keys_.insert(probe_key(record)).second) return {false, false};
    const bool late = finalized_.count(window_index) > 0;
    if (directory_) {
        auto j = to_json(record);
        j["zone_id"] = zone_id;
        j["window_index"] = window_index;
        j["late"] = late;
        write_line(probes_out_, j.dump());
    }
    probes_[{zone_id, window_index}].push_back({record, late});
    ++probe_total_;
    late_total_ += late ? 1 : 0;
    return {true, late};
}

EventStore::AppendResult EventStore::append_camera(const CameraEvent& event,
                                                   std::int64_t window_index) {
    std::lock_guard lock(mutex_);
    if (event.event_id && !camera_keys_.insert(camera_key(event)).second) return {false, false};
    const bool late = finalized_.count(window_index) > 0;
    if (directory_) {
        auto j = to_json(event);
        j["window_index"] = window_index;
        j["late"] = late;
        write_line(camera_out_, j.dump());
    }
    camera_[window_index].push_back({event, late});
    ++camera_total_;
    late_total_ += late ? 1 : 0;
    return {true, late};
}

std::vector<ProbeRecord> EventStore::probes(const std::string& zone_id, std::int64_t window_index,
                                            bool include_late) const {
    std::lock_guard lock(mutex_);
    std::vector<ProbeRecord> out;
    if (auto it = probes_.find({zone_id, window_index}); it != probes_.end()) {
        for (const auto& p : it->second) {
            if (include_late || !p.late) out.push_back(p.record);
        }
    }
    return out;
}

std::vector<CameraEvent> EventStore::camera_events(std::int64_t window_index,
                                                   bool include_late) const {
    std::lock_guard lock(mutex_);
    std::vector<CameraEvent> out;
    if (auto it = camera_.find(window_index); it != camera_.end()) {
        for (const auto& c : it->second) {
            if (include_late || !c.late) out.push_back(c.event);
        }
    }
    return out;
}

std::size_t EventStore::probe_count() const {
    std::lock_guard lock(mutex_);
    return probe_total_;
}

std::size_t EventStore::camera_count() const {
    std::lock_guard lock(mutex_);
    return camera_total_;
}

std::size_t EventStore::late_count() const {
    std::lock_guard lock(mutex_);
    return late_total_;
}

bool EventStore::mark_finalized(std::int64_t window_index) {
    std::lock_guard lock(mutex_);
    if (!finalized_.insert(window_index).second) return false;
    write_line(finalized_out_, nlohmann::json{{"window_index", window_index}}.dump());
    return true;
}

bool EventStore::is_finalized(std::int64_t window_index) const {
    std::lock_guard lock(mutex_);
    return finalized_.count(window_index) > 0;
}

std::vector<std::int64_t> EventStore::finalized_windows() const {
    std::lock_guard lock(mutex_);
    return {finalized_.begin(), finalized_.end()};
}

void EventStore::append_estimates(const std::vector<ZoneEstimate>& estimates) {
    std::lock_guard lock(mutex_);
    for (const auto& e : estimates) write_line(estimates_out_, estimate_csv_row(e));
}

void EventStore::append_coefficient(const CoefficientRecord& record) {
    std::lock_guard lock(mutex_);
    write_line(coefficients_out_, coefficient_csv_row(record));
}

void EventStore::flush() {
    std::lock_guard lock(mutex_);
    if (!directory_) return;
    for (auto* out : {&probes_out_, &camera_out_, &finalized_out_, &estimates_out_,
                      &coefficients_out_}) {
        out->flush();
    }
}

}  // namespace crowd
