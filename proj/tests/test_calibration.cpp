#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "crowd/calibration.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace crowd;
using std::chrono::seconds;

namespace {

TimeWindow window(std::int64_t i) { return {i, testing::origin() + seconds{900 * i}, seconds{900}}; }

WindowMeasurement choke(std::int64_t i, std::int64_t d0, std::int64_t y0) {
    return {window(i), "M1", d0, y0};
}

WindowMeasurement zone(std::int64_t i, const char* id, std::int64_t d) { return {window(i), id, d, std::nullopt}; }

std::vector<TrainingPoint> points(std::initializer_list<std::pair<std::int64_t, std::int64_t>> xy) {
    std::vector<TrainingPoint> out;
    std::int64_t i = 0;
    for (const auto& [x, y] : xy) out.push_back({x, y, i++});
    return out;
}

}  // namespace

TEST_SUITE("proportional coefficient") {
    TEST_CASE("d0 = 200, y0 = 100 gives 0.5") { CHECK(proportional_coefficient(200, 100) == 0.5); }
    TEST_CASE("d0 = 0 signals no update") { CHECK_FALSE(proportional_coefficient(0, 37).has_value()); }
    TEST_CASE("y0 = 0 gives zero") { CHECK(proportional_coefficient(3, 0) == 0.0); }
}

TEST_SUITE("linear coefficient") {
    TEST_CASE("an exact line through the origin is recovered") {
        CHECK(linear_coefficient(points({{1, 2}, {2, 4}})) == 2.0);
    }

    TEST_CASE("{(1,1), (2,3)} gives 7/5, matching a grid search over [0, 5]") {
        const auto o = points({{1, 1}, {2, 3}});
        CHECK(*linear_coefficient(o) == doctest::Approx(1.4).epsilon(1e-15));
        CHECK(oracle::grid_slope(o, 0.0, 5.0, 1e-4) == doctest::Approx(1.4).epsilon(1e-4));
    }

    TEST_CASE("zero x everywhere signals no update") {
        CHECK_FALSE(linear_coefficient(points({{0, 5}, {0, 7}})).has_value());
    }

    TEST_CASE("matches a golden-section minimiser on random training sets") {
        std::mt19937_64 rng(2);
        for (int round = 0; round < 200; ++round) {
            const int q = std::uniform_int_distribution<int>(2, 100)(rng);
            std::vector<TrainingPoint> o;
            std::uniform_int_distribution<std::int64_t> v(0, 10'000);
            for (int i = 0; i < q; ++i) o.push_back({v(rng), v(rng), i});
            if (o.front().x == 0) o.front().x = 1;
            const double a = *linear_coefficient(o);
            const double ref = oracle::golden_section_slope(o);
            CHECK(std::abs(a - ref) <= 1e-9 * std::max(std::abs(ref), 1e-300));
        }
    }

    TEST_CASE("scale equivariance") {
        std::mt19937_64 rng(5);
        std::uniform_int_distribution<std::int64_t> v(0, 500);
        for (int round = 0; round < 100; ++round) {
            std::vector<TrainingPoint> o;
            for (int i = 0; i < 10; ++i) o.push_back({1 + v(rng), v(rng), i});
            const double a = *linear_coefficient(o);
            for (const std::int64_t c : {2, 4, 8}) {
                auto ys = o;
                auto xs = o;
                for (auto& p : ys) p.y *= c;
                for (auto& p : xs) p.x *= c;
                CHECK(*linear_coefficient(ys) == a * static_cast<double>(c));
                CHECK(*linear_coefficient(xs) == a / static_cast<double>(c));
            }
            for (const std::int64_t c : {3, 7, 13}) {
                auto ys = o;
                for (auto& p : ys) p.y *= c;
                CHECK(*linear_coefficient(ys) == doctest::Approx(a * static_cast<double>(c)).epsilon(1e-14));
            }
        }
    }

    TEST_CASE("the coefficient is never negative for non-negative data") {
        std::mt19937_64 rng(9);
        std::uniform_int_distribution<std::int64_t> v(0, 50);
        for (int round = 0; round < 500; ++round) {
            std::vector<TrainingPoint> o;
            for (int i = 0; i < 5; ++i) o.push_back({v(rng), v(rng), i});
            if (const auto a = linear_coefficient(o)) CHECK(*a >= 0.0);
        }
    }
}

TEST_SUITE("calibration state") {
    TEST_CASE("q must be positive") { CHECK_THROWS_AS(CalibrationState(CalibrationMode::AdaptiveLinear, 0), std::invalid_argument); }

    TEST_CASE("the training set slides and keeps the last q windows in order") {
        CalibrationState s(CalibrationMode::AdaptiveLinear, 4);
        for (std::int64_t m = 1; m <= 11; ++m) {
            s.push({m, 2 * m, m});
            CHECK(s.training_set().size() == static_cast<std::size_t>(std::min<std::int64_t>(m, 4)));
            if (m >= 4) {
                for (std::int64_t k = 0; k < 4; ++k) CHECK(s.training_set()[k].window_index == m - 3 + k);
            }
        }
    }

    TEST_CASE("window indices must increase") {
        CalibrationState s(CalibrationMode::AdaptiveLinear, 4);
        s.push({1, 1, 5});
        CHECK_THROWS(s.push({1, 1, 5}));
        CHECK_THROWS(s.push({1, 1, 4}));
    }

    TEST_CASE("coefficients must be finite and non-negative") {
        CalibrationState s(CalibrationMode::Proportional);
        CHECK_THROWS(s.set_coefficient(-0.1));
        CHECK_THROWS(s.set_coefficient(NAN));
        CHECK_THROWS(s.set_coefficient(INFINITY));
        s.set_coefficient(0.0);
        CHECK(s.coefficient_valid());
    }

    TEST_CASE("switching mode resets everything") {
        CalibrationState s(CalibrationMode::AdaptiveLinear, 2);
        s.push({1, 2, 0});
        s.set_coefficient(2.0);
        s.reset(CalibrationMode::Proportional, 1);
        CHECK(s.mode() == CalibrationMode::Proportional);
        CHECK(s.training_set().empty());
        CHECK_FALSE(s.coefficient_valid());
    }

    TEST_CASE("labels round-trip") {
        CHECK(algorithm_label(CalibrationMode::Proportional, 0) == "proportional");
        CHECK(algorithm_label(CalibrationMode::AdaptiveLinear, 100) == "adaptive_linear_q100");
        CHECK(parse_algorithm_label("adaptive_linear_q10") == std::pair{CalibrationMode::AdaptiveLinear, std::size_t{10}});
        CHECK(parse_algorithm_label("adaptive_linear").second == 10);
        CHECK(parse_algorithm_label("proportional").first == CalibrationMode::Proportional);
        CHECK_THROWS(parse_algorithm_label("adaptive_linear_q"));
        CHECK_THROWS(parse_algorithm_label("adaptive_linear_q0"));
        CHECK_THROWS(parse_algorithm_label("magic"));
    }
}

TEST_SUITE("update_and_calibrate") {
    TEST_CASE("proportional: d0 = 200, y0 = 100, M2 d = 400 gives 200") {
        const auto others = std::vector{zone(0, "M2", 400)};
        const auto [s, est] = update_and_calibrate(CalibrationState(CalibrationMode::Proportional), choke(0, 200, 100), others);
        REQUIRE(est.size() == 2);
        CHECK(est[0].zone_id == "M1");
        CHECK(est[0].calibrated == 100.0);
        CHECK(est[1].zone_id == "M2");
        CHECK(est[1].calibrated == 200.0);
        CHECK(est[1].coefficient_used == 0.5);
        CHECK_FALSE(est[1].fallback);
        CHECK(s.coefficient() == 0.5);
    }

    TEST_CASE("proportional: an empty choke window keeps the previous coefficient") {
        CalibrationState s(CalibrationMode::Proportional);
        const auto others = std::vector{zone(0, "M2", 40)};
        auto [s1, e1] = update_and_calibrate(s, choke(0, 20, 30), others);
        const auto others2 = std::vector{zone(1, "M2", 10)};
        auto [s2, e2] = update_and_calibrate(s1, choke(1, 0, 37), others2);
        CHECK(s2.coefficient() == 1.5);
        CHECK(e2[1].calibrated == 15.0);
        CHECK_FALSE(e2[1].fallback);
    }

    TEST_CASE("proportional: no coefficient yet falls back to the raw count") {
        const auto others = std::vector{zone(0, "M2", 12)};
        const auto [s, est] = update_and_calibrate(CalibrationState(CalibrationMode::Proportional), choke(0, 0, 5), others);
        CHECK(est[1].calibrated == 12.0);
        CHECK(est[1].fallback);
        CHECK(est[1].coefficient_used == 1.0);
    }

    TEST_CASE("proportional: the choke estimate equals y0 exactly") {
        std::mt19937_64 rng(4);
        std::uniform_int_distribution<std::int64_t> v(1, 100'000);
        CalibrationState s(CalibrationMode::Proportional);
        for (std::int64_t i = 0; i < 2000; ++i) {
            const auto d0 = v(rng), y0 = v(rng) - 1;
            auto [next, est] = update_and_calibrate(s, choke(i, d0, y0), {});
            CHECK(est[0].calibrated == static_cast<double>(y0));
            s = next;
        }
    }

    TEST_CASE("adaptive: bootstrap windows publish raw counts flagged as fallback") {
        CalibrationState s(CalibrationMode::AdaptiveLinear, 3);
        for (std::int64_t i = 0; i < 3; ++i) {
            const auto others = std::vector{zone(i, "M2", 7 + i)};
            auto [next, est] = update_and_calibrate(s, choke(i, 10, 20), others);
            if (i < 2) {
                CHECK(est[1].fallback);
                CHECK(est[1].calibrated == static_cast<double>(7 + i));
                CHECK(est[0].calibrated == 10.0);
            } else {
                CHECK_FALSE(est[1].fallback);
                CHECK(est[1].calibrated == 2.0 * static_cast<double>(7 + i));
                CHECK(est[0].calibrated == 20.0);
            }
            s = next;
        }
    }

    TEST_CASE("adaptive: a degenerate training set keeps the previous coefficient") {
        CalibrationState s(CalibrationMode::AdaptiveLinear, 2);
        auto [s1, e1] = update_and_calibrate(s, choke(0, 4, 8), {});
        auto [s2, e2] = update_and_calibrate(s1, choke(1, 4, 8), {});
        CHECK(s2.coefficient() == 2.0);
        auto [s3, e3] = update_and_calibrate(s2, choke(2, 0, 8), {});
        auto [s4, e4] = update_and_calibrate(s3, choke(3, 0, 9), {});
        CHECK(s4.coefficient() == 2.0);
        CHECK_FALSE(e4[0].fallback);
    }

    TEST_CASE("adaptive: the coefficient equals the closed form over the latest q points") {
        std::mt19937_64 rng(8);
        std::uniform_int_distribution<std::int64_t> v(0, 300);
        CalibrationState s(CalibrationMode::AdaptiveLinear, 5);
        std::vector<TrainingPoint> seen;
        for (std::int64_t i = 0; i < 40; ++i) {
            const auto d0 = v(rng), y0 = v(rng);
            seen.push_back({d0, y0, i});
            auto [next, est] = update_and_calibrate(s, choke(i, d0, y0), {});
            if (i >= 4) {
                const std::span<const TrainingPoint> last(seen.end() - 5, seen.end());
                if (const auto a = linear_coefficient(last)) CHECK(next.coefficient() == *a);
            }
            s = next;
        }
    }

    TEST_CASE("calibrated values stay non-negative and match coefficient times raw") {
        std::mt19937_64 rng(6);
        std::uniform_int_distribution<std::int64_t> v(0, 80);
        for (const auto mode : {CalibrationMode::Proportional, CalibrationMode::AdaptiveLinear}) {
            CalibrationState s(mode, 4);
            for (std::int64_t i = 0; i < 300; ++i) {
                const auto others = std::vector{zone(i, "M2", v(rng)), zone(i, "M3", v(rng))};
                auto [next, est] = update_and_calibrate(s, choke(i, v(rng), v(rng)), others);
                for (std::size_t k = 1; k < est.size(); ++k) {
                    CHECK(est[k].calibrated >= 0.0);
                    if (!est[k].fallback) {
                        CHECK(est[k].calibrated == est[k].coefficient_used * static_cast<double>(est[k].raw_count));
                    }
                }
                CHECK(est[0].calibrated >= 0.0);
                s = next;
            }
        }
    }

    TEST_CASE("contract violations") {
        CalibrationState s(CalibrationMode::Proportional);
        CHECK_THROWS(update_and_calibrate(s, zone(0, "M1", 3), {}));
        const auto wrong_window = std::vector{zone(1, "M2", 3)};
        CHECK_THROWS(update_and_calibrate(s, choke(0, 1, 1), wrong_window));
        const auto with_camera = std::vector{choke(0, 1, 1)};
        CHECK_THROWS(update_and_calibrate(s, choke(0, 1, 1), with_camera));
    }

    TEST_CASE("rounding is half up") {
        ZoneEstimate e;
        e.calibrated = 2.5;
        CHECK(e.rounded() == 3);
        e.calibrated = 2.4999;
        CHECK(e.rounded() == 2);
        e.calibrated = 0.0;
        CHECK(e.rounded() == 0);
    }
}
