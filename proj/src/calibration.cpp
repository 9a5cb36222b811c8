#include "crowd/calibration.hpp"

#include <cmath>
#include <stdexcept>

namespace crowd {

std::string_view to_string(CalibrationMode mode) {
    return mode == CalibrationMode::Proportional ? "proportional" : "adaptive_linear";
}

CalibrationMode parse_calibration_mode(std::string_view text) {
    if (text == "proportional") return CalibrationMode::Proportional;
    if (text == "adaptive_linear") return CalibrationMode::AdaptiveLinear;
    throw std::invalid_argument("unknown algorithm '" + std::string(text) +
                                "' (expected proportional or adaptive_linear)");
}

CalibrationState::CalibrationState(CalibrationMode mode, std::size_t q) : mode_(mode), q_(q) {
    if (q_ < 1) throw std::invalid_argument("q must be a positive integer");
}

void CalibrationState::push(TrainingPoint point) {
    if (!training_.empty() && point.window_index <= training_.back().window_index) {
        throw std::invalid_argument("training points must arrive in increasing window order");
    }
    training_.push_back(point);
    if (training_.size() > q_) training_.pop_front();
}

void CalibrationState::set_coefficient(double a) {
    if (!std::isfinite(a) || a < 0.0) {
        throw std::invalid_argument("calibration coefficient must be finite and non-negative");
    }
    coefficient_ = a;
}

void CalibrationState::reset(CalibrationMode mode, std::size_t q) { *this = CalibrationState(mode, q); }

std::int64_t ZoneEstimate::rounded() const {
    return static_cast<std::int64_t>(std::floor(calibrated + 0.5));
}

std::string ZoneEstimate::label() const { return algorithm_label(algorithm, q); }

std::string algorithm_label(CalibrationMode mode, std::size_t q) {
    if (mode == CalibrationMode::Proportional) return "proportional";
    return "adaptive_linear_q" + std::to_string(q);
}

std::pair<CalibrationMode, std::size_t> parse_algorithm_label(std::string_view label) {
    constexpr std::string_view prefix = "adaptive_linear_q";
    if (label.substr(0, prefix.size()) == prefix) {
        const auto digits = label.substr(prefix.size());
        std::size_t q = 0;
        for (char c : digits) {
            if (c < '0' || c > '9') throw std::invalid_argument("bad algorithm label");
            q = q * 10 + static_cast<std::size_t>(c - '0');
        }
        if (digits.empty() || q == 0) throw std::invalid_argument("bad algorithm label");
        return {CalibrationMode::AdaptiveLinear, q};
    }
    const auto mode = parse_calibration_mode(label);
    return {mode, mode == CalibrationMode::Proportional ? 0 : 10};
}

std::optional<double> proportional_coefficient(std::int64_t d0, std::int64_t y0) {
    if (d0 <= 0) return std::nullopt;
    return static_cast<double>(y0) / static_cast<double>(d0);
}

namespace {

template <typename Range>
std::optional<double> slope_through_origin(const Range& points) {
    long double sxy = 0.0L;
    long double sxx = 0.0L;
    for (const auto& p : points) {
        sxy += static_cast<long double>(p.x) * static_cast<long double>(p.y);
        sxx += static_cast<long double>(p.x) * static_cast<long double>(p.x);
    }
    if (sxx == 0.0L) return std::nullopt;
    return static_cast<double>(sxy / sxx);
}

}  // namespace

std::optional<double> linear_coefficient(std::span<const TrainingPoint> points) {
    return slope_through_origin(points);
}

std::optional<double> linear_coefficient(const std::deque<TrainingPoint>& points) {
    return slope_through_origin(points);
}

std::pair<CalibrationState, std::vector<ZoneEstimate>> update_and_calibrate(
    CalibrationState state, const WindowMeasurement& choke,
    std::span<const WindowMeasurement> others) {
    if (!choke.camera_total) {
        throw std::invalid_argument("choke-point measurement lacks a camera total");
    }
    for (const auto& m : others) {
        if (m.window != choke.window) {
            throw std::invalid_argument("measurement for zone '" + m.zone_id +
                                        "' belongs to a different window");
        }
        if (m.camera_total) {
            throw std::invalid_argument("only the choke point carries a camera total");
        }
    }

    const std::int64_t d0 = choke.device_count;
    const std::int64_t y0 = *choke.camera_total;
    bool exact_choke = false;

    switch (state.mode()) {
        case CalibrationMode::Proportional:
            if (auto a = proportional_coefficient(d0, y0)) {
                state.set_coefficient(*a);
                exact_choke = true;
            }
            break;
        case CalibrationMode::AdaptiveLinear:
            state.push({d0, y0, choke.window.index});
            if (state.training_set().size() == state.q()) {
                if (auto a = linear_coefficient(state.training_set())) state.set_coefficient(*a);
            }
            break;
    }

    const auto make = [&](const WindowMeasurement& m) {
        ZoneEstimate e;
        e.zone_id = m.zone_id;
        e.window = m.window;
        e.raw_count = m.device_count;
        e.algorithm = state.mode();
        e.q = state.mode() == CalibrationMode::AdaptiveLinear ? state.q() : 0;
        if (auto a = state.coefficient()) {
            e.coefficient_used = *a;
            e.calibrated = *a * static_cast<double>(m.device_count);
            e.fallback = false;
        } else {
            e.coefficient_used = 1.0;
            e.calibrated = static_cast<double>(m.device_count);
            e.fallback = true;
        }
        return e;
    };

    std::vector<ZoneEstimate> estimates;
    estimates.reserve(others.size() + 1);
    estimates.push_back(make(choke));
    // (y0 / d0) * d0 can miss y0 by an ulp; the proportional fit is exact there.
    if (exact_choke) estimates.back().calibrated = static_cast<double>(y0);
    for (const auto& m : others) estimates.push_back(make(m));
    return {std::move(state), std::move(estimates)};
}

}  // namespace crowd
