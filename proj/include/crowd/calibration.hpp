#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "crowd/model.hpp"
#include "crowd/time.hpp"

namespace crowd {

enum class CalibrationMode { Proportional, AdaptiveLinear };

std::string_view to_string(CalibrationMode mode);
CalibrationMode parse_calibration_mode(std::string_view text);

/// One choke-point observation: devices seen by the sniffer (x) against the
/// camera total (y).
struct TrainingPoint {
    std::int64_t x = 0;
    std::int64_t y = 0;
    std::int64_t window_index = 0;
};

class CalibrationState {
public:
    /// Proportional mode ignores q. Throws std::invalid_argument if q < 1.
    explicit CalibrationState(CalibrationMode mode, std::size_t q = 10);

    CalibrationMode mode() const { return mode_; }
    std::size_t q() const { return q_; }
    const std::deque<TrainingPoint>& training_set() const { return training_; }
    std::optional<double> coefficient() const { return coefficient_; }
    bool coefficient_valid() const { return coefficient_.has_value(); }

    /// Appends a point, evicting the oldest beyond q. Window indices must be
    /// strictly increasing.
    void push(TrainingPoint point);
    void set_coefficient(double a);

    /// Discards training data and the coefficient and switches mode.
    void reset(CalibrationMode mode, std::size_t q);

private:
    CalibrationMode mode_;
    std::size_t q_;
    std::deque<TrainingPoint> training_;
    std::optional<double> coefficient_;
};

struct ZoneEstimate {
    std::string zone_id;
    TimeWindow window;
    std::int64_t raw_count = 0;
    double calibrated = 0.0;
    CalibrationMode algorithm = CalibrationMode::Proportional;
    std::size_t q = 0;  // training-set bound; 0 for proportional
    double coefficient_used = 1.0;
    bool fallback = true;

    /// Half-up rounding of the calibrated value.
    std::int64_t rounded() const;
    std::string label() const;
};

/// "proportional" or "adaptive_linear_q<q>".
std::string algorithm_label(CalibrationMode mode, std::size_t q);
/// Inverse of algorithm_label; also accepts a bare "adaptive_linear" (q = 10).
std::pair<CalibrationMode, std::size_t> parse_algorithm_label(std::string_view label);

/// a = y0 / d0, or nothing when d0 = 0 (the caller keeps its previous value).
std::optional<double> proportional_coefficient(std::int64_t d0, std::int64_t y0);

/// Least-squares slope through the origin, a = sum(x*y) / sum(x*x), or
/// nothing when sum(x*x) = 0.
std::optional<double> linear_coefficient(std::span<const TrainingPoint> points);
std::optional<double> linear_coefficient(const std::deque<TrainingPoint>& points);

/// Advances the calibration state with the choke-point measurement and
/// calibrates every zone, choke point first. Throws std::invalid_argument when
/// the choke measurement lacks a camera total or the windows differ.
std::pair<CalibrationState, std::vector<ZoneEstimate>> update_and_calibrate(
    CalibrationState state, const WindowMeasurement& choke,
    std::span<const WindowMeasurement> others);

}  // namespace crowd
