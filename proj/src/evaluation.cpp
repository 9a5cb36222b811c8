#include "crowd/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace crowd {

namespace {

void check_pair(std::span<const double> estimates, std::span<const double> truth) {
    if (estimates.empty() || truth.empty()) {
        throw std::invalid_argument("evaluation needs at least one window");
    }
    if (estimates.size() != truth.size()) {
        throw std::invalid_argument("estimate and truth series differ in length (" +
                                    std::to_string(estimates.size()) + " vs " +
                                    std::to_string(truth.size()) + ")");
    }
}

}  // namespace

double rmse(std::span<const double> estimates, std::span<const double> truth) {
    check_pair(estimates, truth);
    double sum = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double e = estimates[i] - truth[i];
        sum += e * e;
    }
    return std::sqrt(sum / static_cast<double>(truth.size()));
}

double nrmse(std::span<const double> estimates, std::span<const double> truth) {
    const double r = rmse(estimates, truth);
    const auto [lo, hi] = std::minmax_element(truth.begin(), truth.end());
    const double range = *hi - *lo;
    if (range <= 0.0) throw std::domain_error("truth series is constant; NRMSE undefined");
    return r / range;
}

double quantile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw std::invalid_argument("quantile of empty sample");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

ErrorStatistics error_statistics(std::span<const double> estimates, std::span<const double> truth) {
    check_pair(estimates, truth);
    std::vector<double> errors(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) errors[i] = estimates[i] - truth[i];

    const double n = static_cast<double>(errors.size());
    double mean = 0.0;
    for (double e : errors) mean += e;
    mean /= n;
    double var = 0.0;
    for (double e : errors) var += (e - mean) * (e - mean);

    std::sort(errors.begin(), errors.end());
    ErrorStatistics s;
    s.mean = mean;
    s.std_dev = std::sqrt(var / n);
    s.min = errors.front();
    s.q1 = quantile_sorted(errors, 0.25);
    s.median = quantile_sorted(errors, 0.5);
    s.q3 = quantile_sorted(errors, 0.75);
    s.max = errors.back();
    return s;
}

EvaluationReport evaluate(std::span<const double> estimates, std::span<const double> truth) {
    EvaluationReport report;
    report.rmse = rmse(estimates, truth);
    try {
        report.nrmse = nrmse(estimates, truth);
    } catch (const std::domain_error&) {
        report.nrmse.reset();
    }
    report.error_stats = error_statistics(estimates, truth);
    report.n_windows = truth.size();
    return report;
}

double improvement_ratio(const EvaluationReport& baseline, const EvaluationReport& calibrated) {
    if (baseline.n_windows != calibrated.n_windows) {
        throw std::invalid_argument("reports cover different window counts");
    }
    const double base = std::abs(baseline.error_stats.mean);
    if (base == 0.0) throw std::domain_error("baseline mean error is zero");
    return 1.0 - std::abs(calibrated.error_stats.mean) / base;
}

nlohmann::json to_json(const ErrorStatistics& s) {
    return {{"mean", s.mean}, {"std_dev", s.std_dev}, {"min", s.min}, {"q1", s.q1},
            {"median", s.median}, {"q3", s.q3}, {"max", s.max}};
}

nlohmann::json to_json(const EvaluationReport& r) {
    nlohmann::json j{{"rmse", r.rmse},
                     {"error_stats", to_json(r.error_stats)},
                     {"n_windows", r.n_windows}};
    j["nrmse"] = r.nrmse ? nlohmann::json(*r.nrmse) : nlohmann::json(nullptr);
    return j;
}

}  // namespace crowd
