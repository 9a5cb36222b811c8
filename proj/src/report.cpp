#include "crowd/report.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>
#include <tuple>

namespace crowd {

namespace {

using Key = std::pair<std::string, std::int64_t>;

struct LabelOrder {
    bool operator()(const std::pair<CalibrationMode, std::size_t>& a,
                    const std::pair<CalibrationMode, std::size_t>& b) const {
        return std::tie(a.first, a.second) < std::tie(b.first, b.second);
    }
};

struct Series {
    std::vector<double> estimate;
    std::vector<double> truth;
};

std::vector<AlgorithmRow> rows_for(const std::vector<std::string>& labels,
                                   const std::map<std::string, Series>& series,
                                   const Series& baseline) {
    std::vector<AlgorithmRow> rows;
    AlgorithmRow base{kWifiOnlyLabel, evaluate(baseline.estimate, baseline.truth), std::nullopt, std::nullopt};
    rows.push_back(base);
    for (const auto& label : labels) {
        const Series& s = series.at(label);
        AlgorithmRow row{label, evaluate(s.estimate, s.truth), std::nullopt, std::nullopt};
        if (base.report.rmse > 0.0) row.rmse_reduction = 1.0 - row.report.rmse / base.report.rmse;
        try {
            row.mean_error_reduction = improvement_ratio(base.report, row.report);
        } catch (const std::exception&) {
            row.mean_error_reduction.reset();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::optional<double> mean_of(const std::vector<AlgorithmRow>& rows,
                              std::optional<double> AlgorithmRow::*field) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& row : rows) {
        if (row.*field) {
            sum += *(row.*field);
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

nlohmann::json optional_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

nlohmann::json rows_json(const std::vector<AlgorithmRow>& rows) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& row : rows) {
        nlohmann::json j = to_json(row.report);
        j["algorithm"] = row.algorithm;
        j["rmse_reduction"] = optional_json(row.rmse_reduction);
        j["mean_error_reduction"] = optional_json(row.mean_error_reduction);
        out.push_back(std::move(j));
    }
    return out;
}

void csv_rows(std::ostream& out, const std::vector<AlgorithmRow>& rows, const std::string& zone) {
    for (const auto& row : rows) {
        const auto& r = row.report;
        const auto& s = r.error_stats;
        out << row.algorithm << ',' << zone << ',' << r.n_windows << ',' << format_double(r.rmse) << ','
            << (r.nrmse ? format_double(*r.nrmse) : std::string{}) << ',' << format_double(s.mean) << ','
            << format_double(s.std_dev) << ',' << format_double(s.min) << ',' << format_double(s.q1) << ','
            << format_double(s.median) << ',' << format_double(s.q3) << ',' << format_double(s.max) << '\n';
    }
}

}  // namespace

EvaluationSummary evaluate_history(std::span<const ZoneEstimate> estimates,
                                   std::span<const TruthRecord> truth, const EvaluationOptions& options) {
    std::map<Key, const TruthRecord*> truth_index;
    for (const auto& t : truth) truth_index[{t.zone_id, t.window.index}] = &t;

    std::map<std::pair<CalibrationMode, std::size_t>, std::map<Key, const ZoneEstimate*>, LabelOrder> by_label;
    std::set<std::string> estimate_zones;
    for (const auto& e : estimates) {
        auto& slot = by_label[{e.algorithm, e.q}][{e.zone_id, e.window.index}];
        if (slot) {
            throw std::runtime_error("duplicate estimate for zone " + e.zone_id + " window " +
                                     std::to_string(e.window.index) + " (" + e.label() + ")");
        }
        slot = &e;
        estimate_zones.insert(e.zone_id);
    }

    EvaluationSummary summary;
    if (options.zones.empty()) {
        summary.zones.assign(estimate_zones.begin(), estimate_zones.end());
    } else {
        for (const auto& z : options.zones) {
            if (!estimate_zones.count(z)) throw std::invalid_argument("unknown zone '" + z + "'");
        }
        summary.zones = options.zones;
    }
    if (by_label.empty()) throw std::invalid_argument("no estimates to evaluate");
    const std::set<std::string> selected(summary.zones.begin(), summary.zones.end());

    std::vector<std::string> labels;
    std::map<std::string, Series> pooled;
    std::map<std::string, std::map<std::string, Series>> zoned;
    Series pooled_base;
    std::map<std::string, Series> zoned_base;
    bool first = true;
    for (const auto& [mode_q, cells] : by_label) {
        const std::string label = algorithm_label(mode_q.first, mode_q.second);
        labels.push_back(label);
        for (const auto& [key, e] : cells) {
            if (!selected.count(key.first)) continue;
            const auto it = truth_index.find(key);
            if (it == truth_index.end()) {
                throw MisalignedWindowError(key.second, key.first,
                                            "truth has no record for window " + std::to_string(key.second) +
                                                " in zone " + key.first);
            }
            const TruthRecord& t = *it->second;
            if (t.window.start != e->window.start) {
                throw MisalignedWindowError(key.second, key.first,
                                            "window " + std::to_string(key.second) + " in zone " + key.first +
                                                " starts at " + format_timestamp(e->window.start) +
                                                " in the estimates but " + format_timestamp(t.window.start) +
                                                " in the truth");
            }
            const double g = static_cast<double>(t.true_passages);
            for (Series* s : {&pooled[label], &zoned[key.first][label]}) {
                s->estimate.push_back(e->calibrated);
                s->truth.push_back(g);
            }
            if (options.window_errors) {
                summary.window_errors.push_back({label, key.first, e->window, e->calibrated, g});
            }
            if (first) {
                if (options.window_errors) {
                    summary.window_errors.push_back(
                        {kWifiOnlyLabel, key.first, e->window, static_cast<double>(e->raw_count), g});
                }
                for (Series* s : {&pooled_base, &zoned_base[key.first]}) {
                    s->estimate.push_back(static_cast<double>(e->raw_count));
                    s->truth.push_back(g);
                }
            }
        }
        first = false;
    }

    summary.rows = rows_for(labels, pooled, pooled_base);
    if (options.per_zone) {
        for (const auto& zone : summary.zones) {
            summary.per_zone.push_back({zone, rows_for(labels, zoned.at(zone), zoned_base.at(zone))});
        }
    }
    summary.mean_rmse_reduction = mean_of(summary.rows, &AlgorithmRow::rmse_reduction);
    summary.mean_error_reduction = mean_of(summary.rows, &AlgorithmRow::mean_error_reduction);
    return summary;
}

const AlgorithmRow* find_row(const std::vector<AlgorithmRow>& rows, const std::string& algorithm) {
    const auto it = std::find_if(rows.begin(), rows.end(),
                                 [&](const AlgorithmRow& r) { return r.algorithm == algorithm; });
    return it == rows.end() ? nullptr : &*it;
}

nlohmann::json to_json(const EvaluationSummary& summary) {
    nlohmann::json j{{"zones", summary.zones},
                     {"rows", rows_json(summary.rows)},
                     {"mean_rmse_reduction", optional_json(summary.mean_rmse_reduction)},
                     {"mean_error_reduction", optional_json(summary.mean_error_reduction)}};
    if (!summary.per_zone.empty()) {
        nlohmann::json zones = nlohmann::json::object();
        for (const auto& z : summary.per_zone) zones[z.zone_id] = rows_json(z.rows);
        j["per_zone"] = std::move(zones);
    }
    return j;
}

void write_summary_csv(std::ostream& out, const EvaluationSummary& summary) {
    out << kSummaryCsvHeader << '\n';
    csv_rows(out, summary.rows, "all");
    for (const auto& z : summary.per_zone) csv_rows(out, z.rows, z.zone_id);
}

void write_window_errors_csv(std::ostream& out, const std::vector<WindowError>& errors) {
    out << kWindowErrorsCsvHeader << '\n';
    for (const auto& e : errors) {
        out << e.algorithm << ',' << e.zone_id << ',' << e.window.index << ',' << format_timestamp(e.window.start)
            << ',' << format_double(e.estimate) << ',' << format_double(e.truth) << ',' << format_double(e.error())
            << '\n';
    }
}

std::vector<TruthRecord> truth_from_camera_events(std::span<const CameraEvent> events,
                                                  const std::set<std::string>& camera_ids,
                                                  const std::string& zone_id, const WindowGrid& grid,
                                                  std::int64_t first, std::int64_t last) {
    if (camera_ids.empty()) throw std::invalid_argument("no truth cameras named");
    std::map<std::int64_t, std::int64_t> totals;
    for (const auto& e : events) {
        if (!camera_ids.count(e.camera_id) || e.timestamp < grid.origin) continue;
        const auto w = grid.window_for(e.timestamp).index;
        if (w >= first && w <= last) totals[w] += e.count;
    }
    std::vector<TruthRecord> out;
    for (std::int64_t w = first; w <= last; ++w) {
        const auto it = totals.find(w);
        out.push_back({grid.at(w), zone_id, it == totals.end() ? 0 : it->second});
    }
    return out;
}

std::string format_table(const EvaluationSummary& summary) {
    std::string out;
    char line[256];
    std::snprintf(line, sizeof line, "%-22s %7s %9s %7s %9s %9s %9s %9s %9s %9s %9s %8s\n", "algorithm", "n",
                  "rmse", "nrmse", "mean", "std_dev", "min", "q1", "median", "q3", "max", "rmse_red");
    out += line;
    for (const auto& row : summary.rows) {
        const auto& r = row.report;
        const auto& s = r.error_stats;
        char nrmse[16] = "-";
        if (r.nrmse) std::snprintf(nrmse, sizeof nrmse, "%.4f", *r.nrmse);
        char reduction[16] = "-";
        if (row.rmse_reduction) std::snprintf(reduction, sizeof reduction, "%.1f%%", 100.0 * *row.rmse_reduction);
        std::snprintf(line, sizeof line, "%-22s %7zu %9.3f %7s %9.3f %9.3f %9.3f %9.3f %9.3f %9.3f %9.3f %8s\n",
                      row.algorithm.c_str(), r.n_windows, r.rmse, nrmse, s.mean, s.std_dev, s.min, s.q1,
                      s.median, s.q3, s.max, reduction);
        out += line;
    }
    return out;
}

}  // namespace crowd
