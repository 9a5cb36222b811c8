#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>

#include <json.hpp>

namespace crowd {

struct ErrorStatistics {
    double mean = 0.0;
    double std_dev = 0.0;  // population form
    double min = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double max = 0.0;
};

struct EvaluationReport {
    double rmse = 0.0;
    // Absent when the truth series is constant.
    std::optional<double> nrmse;
    ErrorStatistics error_stats;
    std::size_t n_windows = 0;
};

// All functions below throw std::invalid_argument on empty or unequal-length input.

double rmse(std::span<const double> estimates, std::span<const double> truth);

/// RMSE divided by the range of the truth series. Throws std::domain_error
/// when the truth series is constant.
double nrmse(std::span<const double> estimates, std::span<const double> truth);

/// Statistics of signed errors (estimate - truth); quartiles interpolate
/// linearly between order statistics.
ErrorStatistics error_statistics(std::span<const double> estimates, std::span<const double> truth);

/// Linear-interpolation quantile of an ascending-sorted sample, p in [0, 1].
double quantile_sorted(std::span<const double> sorted, double p);

EvaluationReport evaluate(std::span<const double> estimates, std::span<const double> truth);

/// 1 - |calibrated mean error| / |baseline mean error|. Throws
/// std::domain_error when the baseline mean error is zero, and
/// std::invalid_argument when the window counts differ.
double improvement_ratio(const EvaluationReport& baseline, const EvaluationReport& calibrated);

nlohmann::json to_json(const ErrorStatistics& stats);
nlohmann::json to_json(const EvaluationReport& report);

}  // namespace crowd
