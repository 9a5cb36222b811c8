#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "crowd/evaluation.hpp"
#include "crowd/report.hpp"
#include "support.hpp"

using namespace crowd;
using std::chrono::seconds;
using V = std::vector<double>;

namespace {

EvaluationReport report_with_mean(double mean, std::size_t n = 4) {
    EvaluationReport r;
    r.error_stats.mean = mean;
    r.n_windows = n;
    return r;
}

TimeWindow window(std::int64_t i) { return {i, testing::origin() + seconds{900 * i}, seconds{900}}; }

ZoneEstimate estimate(std::int64_t i, const char* zone, CalibrationMode mode, std::size_t q, std::int64_t raw,
                      double calibrated) {
    ZoneEstimate e;
    e.zone_id = zone;
    e.window = window(i);
    e.raw_count = raw;
    e.calibrated = calibrated;
    e.algorithm = mode;
    e.q = q;
    e.fallback = false;
    return e;
}

}  // namespace

TEST_SUITE("rmse") {
    TEST_CASE("identical series give zero") {
        const V t{4, 8, 15, 16, 23, 42};
        CHECK(rmse(t, t) == 0.0);
        CHECK(nrmse(t, t) == 0.0);
    }

    TEST_CASE("[3,5] against [1,2] gives sqrt(6.5), checked by a summation loop") {
        const V e{3, 5}, g{1, 2};
        double sum = 0;
        for (std::size_t i = 0; i < e.size(); ++i) sum += (e[i] - g[i]) * (e[i] - g[i]);
        const double loop = std::sqrt(sum / static_cast<double>(e.size()));
        CHECK(rmse(e, g) == doctest::Approx(2.54951).epsilon(1e-5));
        CHECK(rmse(e, g) == doctest::Approx(loop).epsilon(1e-15));
        CHECK(nrmse(e, g) == doctest::Approx(2.54951).epsilon(1e-5));
    }

    TEST_CASE("a constant offset c gives exactly |c|") {
        std::mt19937_64 rng(1);
        for (const double c : {0.5, -3.0, 12.25, -0.125}) {
            V g, e;
            for (int i = 0; i < 64; ++i) {
                g.push_back(std::uniform_int_distribution<int>(0, 500)(rng));
                e.push_back(g.back() + c);
            }
            CHECK(rmse(e, g) == std::abs(c));
        }
    }

    TEST_CASE("rmse bounds the absolute mean error") {
        std::mt19937_64 rng(2);
        std::normal_distribution<double> noise(3.0, 10.0);
        for (int round = 0; round < 100; ++round) {
            V g, e;
            for (int i = 0; i < 30; ++i) {
                g.push_back(i);
                e.push_back(i + noise(rng));
            }
            CHECK(rmse(e, g) >= std::abs(error_statistics(e, g).mean) - 1e-12);
        }
    }

    TEST_CASE("nrmse is invariant under a shared positive affine map") {
        std::mt19937_64 rng(3);
        std::uniform_real_distribution<double> u(0, 100);
        V g, e;
        for (int i = 0; i < 40; ++i) {
            g.push_back(u(rng));
            e.push_back(u(rng));
        }
        const double base = nrmse(e, g);
        for (const auto& [scale, shift] : {std::pair{2.0, 5.0}, {0.3, -7.0}, {17.0, 0.0}}) {
            V g2, e2;
            for (double v : g) g2.push_back(scale * v + shift);
            for (double v : e) e2.push_back(scale * v + shift);
            CHECK(nrmse(e2, g2) == doctest::Approx(base).epsilon(1e-12));
        }
    }

    TEST_CASE("errors: empty, mismatched, constant truth") {
        CHECK_THROWS_AS(rmse(V{}, V{}), std::invalid_argument);
        CHECK_THROWS_AS(rmse(V{1, 2}, V{1}), std::invalid_argument);
        CHECK_THROWS_AS(nrmse(V{1, 2}, V{3, 3}), std::domain_error);
        CHECK_FALSE(evaluate(V{1, 2}, V{3, 3}).nrmse.has_value());
    }
}

TEST_SUITE("error statistics") {
    TEST_CASE("zero errors give all-zero statistics") {
        const V t{1, 2, 3};
        const auto s = error_statistics(t, t);
        for (double v : {s.mean, s.std_dev, s.min, s.q1, s.median, s.q3, s.max}) CHECK(v == 0.0);
    }

    TEST_CASE("errors [-2, 0, 2]") {
        const auto s = error_statistics(V{-2, 0, 2}, V{0, 0, 0});
        CHECK(s.mean == 0.0);
        CHECK(s.min == -2.0);
        CHECK(s.median == 0.0);
        CHECK(s.max == 2.0);
    }

    TEST_CASE("errors [1,2,3,4] give q1 1.75, median 2.5, q3 3.25") {
        const auto s = error_statistics(V{1, 2, 3, 4}, V{0, 0, 0, 0});
        CHECK(s.q1 == 1.75);
        CHECK(s.median == 2.5);
        CHECK(s.q3 == 3.25);
    }

    TEST_CASE("matches numpy quantile (linear) and population std on an irregular sample") {
        // numpy.quantile(e, [.25, .5, .75]) = [0.5, 2.75, 6.625]; mean 3.525; std (ddof=0) 4.458769449074486
        const V e{3.5, -1, 7, 2, 2, 9.25, -4, 0, 11, 5.5};
        const auto s = error_statistics(e, V(e.size(), 0.0));
        CHECK(s.q1 == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(s.median == doctest::Approx(2.75).epsilon(1e-15));
        CHECK(s.q3 == doctest::Approx(6.625).epsilon(1e-15));
        CHECK(s.mean == doctest::Approx(3.525).epsilon(1e-15));
        CHECK(s.std_dev == doctest::Approx(4.458769449074486).epsilon(1e-14));
        CHECK(s.min == -4.0);
        CHECK(s.max == 11.0);
    }

    TEST_CASE("quartiles are monotone") {
        std::mt19937_64 rng(4);
        std::normal_distribution<double> n(0, 50);
        for (int round = 0; round < 200; ++round) {
            V e;
            const int size = std::uniform_int_distribution<int>(1, 60)(rng);
            for (int i = 0; i < size; ++i) e.push_back(n(rng));
            const auto s = error_statistics(e, V(e.size(), 0.0));
            CHECK(s.min <= s.q1);
            CHECK(s.q1 <= s.median);
            CHECK(s.median <= s.q3);
            CHECK(s.q3 <= s.max);
        }
    }

    TEST_CASE("signed errors are estimate minus truth") {
        CHECK(error_statistics(V{5}, V{7}).mean == -2.0);
    }
}

TEST_SUITE("improvement ratio") {
    TEST_CASE("baseline mean 1303, calibrated mean 659") {
        const double r = improvement_ratio(report_with_mean(1303), report_with_mean(659));
        CHECK(r == doctest::Approx(1.0 - 659.0 / 1303.0).epsilon(1e-15));
        CHECK(std::abs(r - 0.4942) < 1e-4);
    }

    TEST_CASE("equal reports give zero, a zero calibrated mean gives one") {
        CHECK(improvement_ratio(report_with_mean(10), report_with_mean(10)) == 0.0);
        CHECK(improvement_ratio(report_with_mean(-10), report_with_mean(0)) == 1.0);
    }

    TEST_CASE("a zero baseline mean is an error") {
        CHECK_THROWS_AS(improvement_ratio(report_with_mean(0), report_with_mean(1)), std::domain_error);
        CHECK_THROWS_AS(improvement_ratio(report_with_mean(1, 3), report_with_mean(1, 4)), std::invalid_argument);
    }
}

TEST_SUITE("evaluation table") {
    std::vector<ZoneEstimate> sample_estimates() {
        std::vector<ZoneEstimate> out;
        for (std::int64_t i = 0; i < 4; ++i) {
            for (const char* z : {"M2", "M3"}) {
                const std::int64_t raw = 10 + i;
                out.push_back(estimate(i, z, CalibrationMode::AdaptiveLinear, 100, raw, raw * 1.5));
                out.push_back(estimate(i, z, CalibrationMode::Proportional, 0, raw, raw * 2.0));
                out.push_back(estimate(i, z, CalibrationMode::AdaptiveLinear, 10, raw, raw * 1.9));
            }
        }
        return out;
    }

    std::vector<TruthRecord> sample_truth() {
        std::vector<TruthRecord> out;
        for (std::int64_t i = 0; i < 4; ++i) {
            for (const char* z : {"M2", "M3"}) out.push_back({window(i), z, 2 * (10 + i)});
        }
        return out;
    }

    TEST_CASE("rows are wifi_only, proportional, q10, q100 with the expected values") {
        const auto est = sample_estimates();
        const auto truth = sample_truth();
        const auto s = evaluate_history(est, truth);
        REQUIRE(s.rows.size() == 4);
        CHECK(s.rows[0].algorithm == "wifi_only");
        CHECK(s.rows[1].algorithm == "proportional");
        CHECK(s.rows[2].algorithm == "adaptive_linear_q10");
        CHECK(s.rows[3].algorithm == "adaptive_linear_q100");
        CHECK(s.rows[1].report.rmse == 0.0);
        CHECK(s.rows[1].rmse_reduction == 1.0);
        CHECK(s.rows[0].report.n_windows == 8);
        CHECK(s.rows[0].report.error_stats.mean == doctest::Approx(-11.5));
        CHECK_FALSE(s.rows[0].rmse_reduction.has_value());
        CHECK(find_row(s.rows, "adaptive_linear_q100") == &s.rows[3]);
        CHECK(find_row(s.rows, "nope") == nullptr);
    }

    TEST_CASE("identical estimates and truth give zero error") {
        std::vector<ZoneEstimate> est;
        std::vector<TruthRecord> truth;
        for (std::int64_t i = 0; i < 5; ++i) {
            est.push_back(estimate(i, "M2", CalibrationMode::Proportional, 0, i, static_cast<double>(i)));
            truth.push_back({window(i), "M2", i});
        }
        const auto s = evaluate_history(est, truth);
        for (const auto& row : s.rows) CHECK(row.report.rmse == 0.0);
    }

    TEST_CASE("a missing truth window is reported by index") {
        const auto est = sample_estimates();
        auto truth = sample_truth();
        truth.erase(truth.begin() + 4);  // window 2, M2
        try {
            evaluate_history(est, truth);
            FAIL("expected a misaligned-window error");
        } catch (const MisalignedWindowError& e) {
            CHECK(e.window_index() == 2);
            CHECK(e.zone_id() == "M2");
            CHECK(std::string(e.what()).find("window 2") != std::string::npos);
        }
    }

    TEST_CASE("per-zone rows and zone filters") {
        const auto est = sample_estimates();
        const auto truth = sample_truth();
        EvaluationOptions opts;
        opts.zones = {"M3"};
        opts.per_zone = true;
        const auto s = evaluate_history(est, truth, opts);
        CHECK(s.zones == std::vector<std::string>{"M3"});
        REQUIRE(s.per_zone.size() == 1);
        CHECK(s.per_zone[0].rows.size() == 4);
        CHECK(s.rows[0].report.n_windows == 4);
        opts.zones = {"M9"};
        CHECK_THROWS_AS(evaluate_history(est, truth, opts), std::invalid_argument);
    }

    TEST_CASE("the CSV and JSON carry the seven error statistics for every row") {
        const auto est = sample_estimates();
        const auto truth = sample_truth();
        const auto s = evaluate_history(est, truth);
        std::ostringstream csv;
        write_summary_csv(csv, s);
        std::istringstream lines(csv.str());
        std::string line;
        std::getline(lines, line);
        CHECK(line == "algorithm,zone_id,n_windows,rmse,nrmse,mean,std_dev,min,q1,median,q3,max");
        int rows = 0;
        while (std::getline(lines, line)) ++rows;
        CHECK(rows == 4);

        const auto j = to_json(s);
        REQUIRE(j["rows"].size() == 4);
        for (const auto& row : j["rows"]) {
            for (const char* key : {"mean", "std_dev", "min", "q1", "median", "q3", "max"}) {
                CHECK(row["error_stats"].contains(key));
            }
        }
        CHECK(format_table(s).find("adaptive_linear_q100") != std::string::npos);
    }

    TEST_CASE("window errors list every joined pair with estimate minus truth") {
        const auto est = sample_estimates();
        const auto truth = sample_truth();
        EvaluationOptions opts;
        opts.window_errors = true;
        const auto s = evaluate_history(est, truth, opts);
        CHECK(s.window_errors.size() == 4 * 8);
        for (const auto& e : s.window_errors) {
            const double g = 2.0 * (10 + e.window.index);
            CHECK(e.truth == g);
            CHECK(e.error() == e.estimate - g);
            if (e.algorithm == "wifi_only") CHECK(e.estimate == 10.0 + e.window.index);
            if (e.algorithm == "proportional") CHECK(e.error() == 0.0);
        }
        std::ostringstream csv;
        write_window_errors_csv(csv, s.window_errors);
        CHECK(csv.str().rfind("algorithm,zone_id,window_index,window_start,estimate,truth,error\n", 0) == 0);
        CHECK(evaluate_history(est, truth).window_errors.empty());
    }

    TEST_CASE("camera events designated as truth sum per window, zero when silent") {
        const WindowGrid grid{testing::origin(), seconds{900}};
        auto ev = [&](const char* cam, int offset_s, std::int64_t count) {
            return CameraEvent{cam, Direction::MoveIn, testing::origin() + seconds{offset_s}, count, std::nullopt};
        };
        const std::vector<CameraEvent> events{ev("C101", 10, 1), ev("C101", 899, 2), ev("C102", 20, 5),
                                              ev("C101", 1800, 4), ev("C200", 30, 7)};
        const auto truth = truth_from_camera_events(events, {"C101", "C102"}, "M2", grid, 0, 3);
        REQUIRE(truth.size() == 4);
        CHECK(truth[0].true_passages == 8);
        CHECK(truth[1].true_passages == 0);
        CHECK(truth[2].true_passages == 4);
        CHECK(truth[3].true_passages == 0);
        CHECK(truth[2].window.start == testing::origin() + seconds{1800});
        CHECK(truth[0].zone_id == "M2");
        CHECK_THROWS_AS(truth_from_camera_events(events, {}, "M2", grid, 0, 3), std::invalid_argument);
    }
}
