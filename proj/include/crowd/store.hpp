#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "crowd/history.hpp"
#include "crowd/model.hpp"

namespace crowd {

/// Append-only event store: anonymized probes and camera events indexed by
/// (zone, window), the finalized-window log, and derived estimate tables.
/// Without a directory everything stays in memory.
class EventStore {
public:
    enum class OpenMode { Resume, Truncate };

    EventStore() = default;
    explicit EventStore(std::filesystem::path directory, OpenMode mode = OpenMode::Resume);

    EventStore(const EventStore&) = delete;
    EventStore& operator=(const EventStore&) = delete;

    struct AppendResult {
        bool stored = false;  // false for a duplicate delivery
        bool late = false;    // the window was already finalized
    };

    AppendResult append_probe(const ProbeRecord& record, const std::string& zone_id,
                              std::int64_t window_index);
    AppendResult append_camera(const CameraEvent& event, std::int64_t window_index);

    std::vector<ProbeRecord> probes(const std::string& zone_id, std::int64_t window_index,
                                    bool include_late = false) const;
    std::vector<CameraEvent> camera_events(std::int64_t window_index,
                                           bool include_late = false) const;

    std::size_t probe_count() const;
    std::size_t camera_count() const;
    std::size_t late_count() const;

    /// Returns false when the window had already been finalized.
    bool mark_finalized(std::int64_t window_index);
    bool is_finalized(std::int64_t window_index) const;
    std::vector<std::int64_t> finalized_windows() const;

    void append_estimates(const std::vector<ZoneEstimate>& estimates);
    void append_coefficient(const CoefficientRecord& record);

    const std::optional<std::filesystem::path>& directory() const { return directory_; }
    void flush();

    static std::string probe_key(const ProbeRecord& record);

private:
    struct StoredProbe {
        ProbeRecord record;
        bool late;
    };
    struct StoredCamera {
        CameraEvent event;
        bool late;
    };

    void reload();
    void write_line(std::ofstream& out, const std::string& line);

    mutable std::mutex mutex_;
    std::optional<std::filesystem::path> directory_;
    std::ofstream probes_out_;
    std::ofstream camera_out_;
    std::ofstream finalized_out_;
    std::ofstream estimates_out_;
    std::ofstream coefficients_out_;

    std::map<std::pair<std::string, std::int64_t>, std::vector<StoredProbe>> probes_;
    std::map<std::int64_t, std::vector<StoredCamera>> camera_;
    std::unordered_set<std::string> probe_keys_;
    std::unordered_set<std::string> camera_keys_;
    std::set<std::int64_t> finalized_;
    std::size_t probe_total_ = 0;
    std::size_t camera_total_ = 0;
    std::size_t late_total_ = 0;
};

}  // namespace crowd
