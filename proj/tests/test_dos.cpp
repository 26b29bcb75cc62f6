#include "oracles.hpp"

#include <catch_amalgamated.hpp>

#include <random>

using namespace swingcert;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

DoSSchedule make(std::vector<DosInterval> iv, double kappa, double tau) {
    DoSSchedule s;
    s.intervals = std::move(iv);
    s.kappa = kappa;
    s.tau = tau;
    return s;
}

}  // namespace

TEST_CASE("outage measure examples", "[dos]") {
    const DoSSchedule empty = make({}, 1.0, 2.0);
    for (double t : {0.0, 1.0, 100.0}) CHECK(dos_measure(empty, t) == 0.0);
    CHECK(dos_measure(make({{0, 10}}, 10, 1.5), 7.0) == 7.0);
    CHECK(dos_measure(make({{0, 10}, {20, 5}}, 10, 1.5), 22.0) == 12.0);
}

TEST_CASE("outage measure is nondecreasing and 1-Lipschitz", "[dos]") {
    const auto s = generate_schedule(3.0, 2.0, 200.0, 99, DosPolicy::random);
    double prev = 0.0;
    for (int k = 1; k <= 4000; ++k) {
        const double t = 0.05 * k;
        const double m = dos_measure(s, t);
        CHECK(m >= prev);
        CHECK(m - prev <= 0.05 + 1e-12);
        prev = m;
    }
}

TEST_CASE("outage indicator uses half-open intervals", "[dos]") {
    const auto s = make({{1, 2}, {5, 1}}, 10, 1.5);
    CHECK_FALSE(dos_active(s, 0.999));
    CHECK(dos_active(s, 1.0));
    CHECK(dos_active(s, 2.999));
    CHECK_FALSE(dos_active(s, 3.0));
    CHECK(dos_active(s, 5.5));
    CHECK_FALSE(dos_active(s, 6.0));
}

TEST_CASE("budget validator examples", "[dos]") {
    CHECK(validate_schedule(make({}, 0.0, 1.5)).valid);
    CHECK(validate_schedule(make({}, 7.0, 3.0)).valid);

    const auto ok = validate_schedule(make({{0, 10}}, 10, 1.5));
    CHECK(ok.valid);
    CHECK_FALSE(ok.first_violation);
    CHECK_THAT(ok.max_excess, WithinAbs(10.0 - 10.0 / 1.5 - 10.0, 1e-12));

    const auto bad = validate_schedule(make({{0, 10}}, 1, 2));
    CHECK_FALSE(bad.valid);
    REQUIRE(bad.first_violation);
    CHECK(*bad.first_violation == 10.0);
    CHECK_THAT(bad.max_excess, WithinAbs(4.0, 1e-12));
}

TEST_CASE("validator reports the first violating endpoint", "[dos]") {
    // budget 1 + t/2: 1 <= 1.5 at t=1, 3 <= 3 at t=4, 5 > 4.5 at t=7
    const auto r = validate_schedule(make({{0, 1}, {2, 2}, {5, 2}}, 1.0, 2.0));
    CHECK_FALSE(r.valid);
    CHECK(*r.first_violation == 7.0);
}

TEST_CASE("malformed schedules are rejected", "[dos]") {
    CHECK_THROWS_AS(validate_schedule(make({{0, 5}, {3, 1}}, 1, 2)), InputError);
    CHECK_THROWS_AS(validate_schedule(make({{5, 1}, {0, 1}}, 1, 2)), InputError);
    CHECK_THROWS_AS(validate_schedule(make({{0, 1}, {1, 1}}, 1, 2)), InputError);  // no gap
    CHECK_THROWS_AS(validate_schedule(make({{0, 0}}, 1, 2)), InputError);
    CHECK_THROWS_AS(validate_schedule(make({}, -1, 2)), InputError);
    CHECK_THROWS_AS(validate_schedule(make({}, 1, 1)), InputError);
}

TEST_CASE("greedy schedule reproduces the 30 s initial outage", "[dos]") {
    const auto s = generate_schedule(10.0, 1.5, 600.0, 0, DosPolicy::greedy);
    REQUIRE(!s.intervals.empty());
    CHECK(s.intervals[0].start == 0.0);
    CHECK_THAT(s.intervals[0].duration, WithinRel(30.0, 1e-12));
    // tight at the end of the first outage
    CHECK_THAT(dos_measure(s, 30.0), WithinRel(10.0 + 30.0 / 1.5, 1e-12));
    // then 1 s outages after 0.5 s communication windows
    REQUIRE(s.intervals.size() > 3);
    CHECK_THAT(s.intervals[1].start, WithinAbs(30.5, 1e-9));
    CHECK_THAT(s.intervals[1].duration, WithinAbs(1.0, 1e-12));
    CHECK_THAT(s.intervals[2].start - s.intervals[1].end(), WithinAbs(0.5, 1e-9));
    CHECK(s.intervals.back().end() <= 600.0 + 1e-9);
    CHECK(validate_schedule(s).valid);
    CHECK(validate_schedule(s).max_excess <= 1e-9);
}

TEST_CASE("greedy schedule with kappa = 0 starts with communication", "[dos]") {
    const auto s = generate_schedule(0.0, 2.0, 20.0, 0, DosPolicy::greedy);
    REQUIRE(!s.intervals.empty());
    CHECK(s.intervals[0].start > 0.0);
    CHECK_THAT(s.intervals[0].start, WithinAbs(1.0, 1e-12));  // 2 (0 + 1 - 0) - 1
    CHECK(validate_schedule(s).valid);
}

TEST_CASE("generated schedules always validate", "[dos]") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> k(0.0, 20.0), t(1.01, 6.0);
    for (int i = 0; i < 200; ++i) {
        const double kappa = k(rng), tau = t(rng);
        for (auto policy : {DosPolicy::greedy, DosPolicy::random}) {
            const auto s = generate_schedule(kappa, tau, 300.0, static_cast<std::uint64_t>(i), policy);
            CHECK(validate_schedule(s).valid);
        }
    }
}

TEST_CASE("random schedules are reproducible from the seed", "[dos]") {
    const auto a = generate_schedule(5.0, 2.0, 500.0, 42, DosPolicy::random);
    const auto b = generate_schedule(5.0, 2.0, 500.0, 42, DosPolicy::random);
    const auto c = generate_schedule(5.0, 2.0, 500.0, 43, DosPolicy::random);
    CHECK(schedule_to_json(a) == schedule_to_json(b));
    CHECK(schedule_to_json(a) != schedule_to_json(c));
    CHECK_FALSE(a.intervals.empty());
}

TEST_CASE("schedule JSON round trip", "[dos]") {
    const auto s = generate_schedule(10.0, 1.5, 60.0, 0, DosPolicy::greedy);
    const auto j = schedule_to_json(s);
    CHECK(j["kappa"] == 10.0);
    CHECK(j["tau"] == 1.5);
    CHECK(j["intervals"][0][1] == s.intervals[0].duration);
    const auto back = schedule_from_json(j);
    CHECK(schedule_to_json(back) == j);
    CHECK_THROWS_AS(schedule_from_json(nlohmann::json{{"kappa", 1}}), InputError);
    CHECK(parse_policy("greedy") == DosPolicy::greedy);
    CHECK_THROWS_AS(parse_policy("bursty"), InputError);
}
