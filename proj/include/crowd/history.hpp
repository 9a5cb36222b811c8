#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "crowd/calibration.hpp"
#include "crowd/time.hpp"

namespace crowd {

/// Coefficient in force after a window was finalized.
struct CoefficientRecord {
    TimeWindow window;
    CalibrationMode algorithm = CalibrationMode::Proportional;
    std::size_t q = 0;
    double coefficient = 1.0;
    std::size_t training_size = 0;
    bool fallback = true;
};

struct EstimateHistory {
    std::vector<ZoneEstimate> estimates;
    std::vector<CoefficientRecord> coefficients;
};

struct TruthRecord {
    TimeWindow window;
    std::string zone_id;
    std::int64_t true_passages = 0;
};

// CSV layouts. Doubles are written with 17 significant digits so a written
// history reads back bit-identically.
inline constexpr const char* kEstimatesHeader =
    "window_index,window_start,window_seconds,zone_id,algorithm,raw,calibrated,rounded,coefficient,fallback";
inline constexpr const char* kCoefficientsHeader =
    "window_index,window_start,algorithm,a,training_size,fallback";
inline constexpr const char* kTruthHeader = "window_index,window_start,zone_id,true_passages";

std::string estimate_csv_row(const ZoneEstimate& e);
std::string coefficient_csv_row(const CoefficientRecord& c);
std::string truth_csv_row(const TruthRecord& t);

void write_estimates_csv(std::ostream& out, const std::vector<ZoneEstimate>& estimates);
void write_coefficients_csv(std::ostream& out, const std::vector<CoefficientRecord>& coefficients);
void write_truth_csv(std::ostream& out, const std::vector<TruthRecord>& truth);

// Readers throw std::runtime_error naming the offending line.
std::vector<ZoneEstimate> read_estimates_csv(std::istream& in);
std::vector<TruthRecord> read_truth_csv(std::istream& in);
std::vector<TruthRecord> read_truth_csv(std::istream& in, std::chrono::seconds window_duration);

nlohmann::json to_json(const TruthRecord& t);
TruthRecord truth_from_json(const nlohmann::json& j, std::chrono::seconds window_duration);

/// Reads truth as CSV or NDJSON depending on the file extension.
std::vector<TruthRecord> load_truth(const std::string& path, std::chrono::seconds window_duration);

std::string format_double(double v);

}  // namespace crowd
