#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "crowd/evaluation.hpp"
#include "crowd/history.hpp"
#include "crowd/model.hpp"

namespace crowd {

inline constexpr const char* kWifiOnlyLabel = "wifi_only";

/// One row of the comparison table: an algorithm label and its report.
struct AlgorithmRow {
    std::string algorithm;
    EvaluationReport report;
    // 1 - rmse / rmse(wifi_only); absent on the baseline row itself.
    std::optional<double> rmse_reduction;
    // improvement_ratio against the baseline; absent when undefined.
    std::optional<double> mean_error_reduction;
};

struct ZoneRows {
    std::string zone_id;
    std::vector<AlgorithmRow> rows;
};

/// One joined (estimate, truth) pair, for plotting error series.
struct WindowError {
    std::string algorithm;
    std::string zone_id;
    TimeWindow window;
    double estimate = 0.0;
    double truth = 0.0;

    double error() const { return estimate - truth; }
};

struct EvaluationSummary {
    std::vector<std::string> zones;
    std::vector<AlgorithmRow> rows;       // pooled over `zones`
    std::vector<ZoneRows> per_zone;       // filled when requested
    std::optional<double> mean_rmse_reduction;
    std::optional<double> mean_error_reduction;
    std::vector<WindowError> window_errors;  // filled when requested
};

/// An estimate whose (zone, window) has no matching truth record.
class MisalignedWindowError : public std::runtime_error {
public:
    MisalignedWindowError(std::int64_t window_index, const std::string& zone_id, const std::string& what)
        : std::runtime_error(what), window_index_(window_index), zone_id_(zone_id) {}
    std::int64_t window_index() const { return window_index_; }
    const std::string& zone_id() const { return zone_id_; }

private:
    std::int64_t window_index_;
    std::string zone_id_;
};

struct EvaluationOptions {
    // Zones to evaluate; empty means every zone present in the estimates.
    std::vector<std::string> zones;
    bool per_zone = false;
    bool window_errors = false;
};

/// Joins estimates with truth per (zone, window) and evaluates the Wi-Fi-only
/// raw counts plus every algorithm found in the estimates. Rows are ordered
/// wifi_only, proportional, then adaptive_linear by ascending q.
EvaluationSummary evaluate_history(std::span<const ZoneEstimate> estimates,
                                   std::span<const TruthRecord> truth,
                                   const EvaluationOptions& options = {});

const AlgorithmRow* find_row(const std::vector<AlgorithmRow>& rows, const std::string& algorithm);

nlohmann::json to_json(const EvaluationSummary& summary);

inline constexpr const char* kSummaryCsvHeader =
    "algorithm,zone_id,n_windows,rmse,nrmse,mean,std_dev,min,q1,median,q3,max";

/// Pooled rows use zone_id "all".
void write_summary_csv(std::ostream& out, const EvaluationSummary& summary);

inline constexpr const char* kWindowErrorsCsvHeader =
    "algorithm,zone_id,window_index,window_start,estimate,truth,error";

void write_window_errors_csv(std::ostream& out, const std::vector<WindowError>& errors);

/// Near-ground-truth series for one zone built from designated camera events:
/// per window of `grid`, the summed counts of events from `camera_ids`, for
/// windows first..last inclusive (windows without events count zero).
std::vector<TruthRecord> truth_from_camera_events(std::span<const CameraEvent> events,
                                                  const std::set<std::string>& camera_ids,
                                                  const std::string& zone_id, const WindowGrid& grid,
                                                  std::int64_t first, std::int64_t last);

/// Fixed-width table of the pooled rows for terminals.
std::string format_table(const EvaluationSummary& summary);

}  // namespace crowd
