#include "crowd/history.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace crowd {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

std::int64_t to_int(const std::string& s, std::size_t line) {
    std::int64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw std::runtime_error("line " + std::to_string(line) + ": bad integer '" + s + "'");
    }
    return v;
}

double to_double(const std::string& s, std::size_t line) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("line " + std::to_string(line) + ": bad number '" + s + "'");
    }
}

bool to_bool(const std::string& s, std::size_t line) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw std::runtime_error("line " + std::to_string(line) + ": bad boolean '" + s + "'");
}

void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string estimate_csv_row(const ZoneEstimate& e) {
    std::ostringstream out;
    out << e.window.index << ',' << format_timestamp(e.window.start) << ','
        << e.window.duration.count() << ',' << e.zone_id << ',' << e.label() << ','
        << e.raw_count << ',' << format_double(e.calibrated) << ',' << e.rounded() << ','
        << format_double(e.coefficient_used) << ',' << (e.fallback ? "true" : "false");
    return out.str();
}

std::string coefficient_csv_row(const CoefficientRecord& c) {
    std::ostringstream out;
    out << c.window.index << ',' << format_timestamp(c.window.start) << ','
        << algorithm_label(c.algorithm, c.q) << ',' << format_double(c.coefficient) << ','
        << c.training_size << ',' << (c.fallback ? "true" : "false");
    return out.str();
}

std::string truth_csv_row(const TruthRecord& t) {
    std::ostringstream out;
    out << t.window.index << ',' << format_timestamp(t.window.start) << ',' << t.zone_id << ','
        << t.true_passages;
    return out.str();
}

void write_estimates_csv(std::ostream& out, const std::vector<ZoneEstimate>& estimates) {
    out << kEstimatesHeader << '\n';
    for (const auto& e : estimates) out << estimate_csv_row(e) << '\n';
}

void write_coefficients_csv(std::ostream& out, const std::vector<CoefficientRecord>& coefficients) {
    out << kCoefficientsHeader << '\n';
    for (const auto& c : coefficients) out << coefficient_csv_row(c) << '\n';
}

void write_truth_csv(std::ostream& out, const std::vector<TruthRecord>& truth) {
    out << kTruthHeader << '\n';
    for (const auto& t : truth) out << truth_csv_row(t) << '\n';
}

std::vector<ZoneEstimate> read_estimates_csv(std::istream& in) {
    std::vector<ZoneEstimate> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        strip_cr(line);
        if (line.empty()) continue;
        if (n == 1) {
            if (line != kEstimatesHeader) throw std::runtime_error("line 1: unexpected estimates header");
            continue;
        }
        const auto f = split_csv(line);
        if (f.size() != 10) {
            throw std::runtime_error("line " + std::to_string(n) + ": expected 10 fields");
        }
        ZoneEstimate e;
        e.window.index = to_int(f[0], n);
        e.window.start = parse_timestamp(f[1]);
        e.window.duration = std::chrono::seconds{to_int(f[2], n)};
        e.zone_id = f[3];
        try {
            std::tie(e.algorithm, e.q) = parse_algorithm_label(f[4]);
        } catch (const std::exception&) {
            throw std::runtime_error("line " + std::to_string(n) + ": unknown algorithm '" + f[4] + "'");
        }
        e.raw_count = to_int(f[5], n);
        e.calibrated = to_double(f[6], n);
        e.coefficient_used = to_double(f[8], n);
        e.fallback = to_bool(f[9], n);
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<TruthRecord> read_truth_csv(std::istream& in, std::chrono::seconds window_duration) {
    std::vector<TruthRecord> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        strip_cr(line);
        if (line.empty()) continue;
        if (n == 1) {
            if (line != kTruthHeader) throw std::runtime_error("line 1: unexpected truth header");
            continue;
        }
        const auto f = split_csv(line);
        if (f.size() != 4) throw std::runtime_error("line " + std::to_string(n) + ": expected 4 fields");
        TruthRecord t;
        t.window.index = to_int(f[0], n);
        t.window.start = parse_timestamp(f[1]);
        t.window.duration = window_duration;
        t.zone_id = f[2];
        t.true_passages = to_int(f[3], n);
        out.push_back(std::move(t));
    }
    return out;
}

std::vector<TruthRecord> read_truth_csv(std::istream& in) {
    return read_truth_csv(in, std::chrono::seconds{900});
}

nlohmann::json to_json(const TruthRecord& t) {
    return {{"window_index", t.window.index},
            {"window_start", format_timestamp(t.window.start)},
            {"window_seconds", t.window.duration.count()},
            {"zone_id", t.zone_id},
            {"true_passages", t.true_passages}};
}

TruthRecord truth_from_json(const nlohmann::json& j, std::chrono::seconds window_duration) {
    TruthRecord t;
    t.window.index = j.at("window_index").get<std::int64_t>();
    t.window.start = parse_timestamp(j.at("window_start").get<std::string>());
    t.window.duration = std::chrono::seconds{j.value("window_seconds", window_duration.count())};
    t.zone_id = j.at("zone_id").get<std::string>();
    t.true_passages = j.at("true_passages").get<std::int64_t>();
    return t;
}

std::vector<TruthRecord> load_truth(const std::string& path, std::chrono::seconds window_duration) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open truth file " + path);
    const bool csv = path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0;
    if (csv) return read_truth_csv(in, window_duration);
    std::vector<TruthRecord> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        try {
            out.push_back(truth_from_json(nlohmann::json::parse(line), window_duration));
        } catch (const std::exception& e) {
            throw std::runtime_error(path + " line " + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace crowd
