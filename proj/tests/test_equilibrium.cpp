#include "oracles.hpp"

#include <catch_amalgamated.hpp>

#include <random>

using namespace swingcert;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("case-study optimal dispatch", "[equilibrium]") {
    const auto m = fixture::case_study();
    const Vec u = optimal_dispatch(m.ctrl, m.net.load);
    const double expect[] = {0.192, 0.256, 0.128, 0.384};
    for (int i = 0; i < 4; ++i) CHECK_THAT(u(i), WithinAbs(expect[i], 1e-12));
    CHECK_THAT(m.ctrl.mu(), WithinRel(5.0, 1e-15));
    CHECK(std::abs((u - m.net.load).sum()) <= 1e-12);
    const Vec marginal = m.ctrl.cost.cwiseProduct(u);
    CHECK(marginal.maxCoeff() - marginal.minCoeff() <= 1e-12);

    const Vec brute = oracle::brute_force_dispatch(m.ctrl.cost, m.net.load.sum());
    CHECK((brute - u).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("dispatch trivial cases", "[equilibrium]") {
    const auto m = fixture::case_study();
    CHECK(optimal_dispatch(m.ctrl, Vec::Zero(4)).isZero(0.0));
    ControllerSetup unit = m.ctrl;
    unit.cost = Vec::Ones(4);
    const Vec u = optimal_dispatch(unit, m.net.load);
    for (int i = 0; i < 4; ++i) CHECK_THAT(u(i), WithinRel(0.24, 1e-14));
}

TEST_CASE("dispatch matches brute force on random costs", "[equilibrium]") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> q(0.2, 3.0), p(-1.0, 1.0);
    for (int trial = 0; trial < 5; ++trial) {
        ControllerSetup c;
        c.cost = Vec(4);
        Vec load(4);
        for (int i = 0; i < 4; ++i) {
            c.cost(i) = q(rng);
            load(i) = p(rng);
        }
        CHECK((oracle::brute_force_dispatch(c.cost, load.sum()) - optimal_dispatch(c, load)).cwiseAbs().maxCoeff() <=
              1e-6);
    }
}

TEST_CASE("zero load gives zero angles and rho = pi/4", "[equilibrium]") {
    auto cfg = case_study_config();
    cfg.erase("loads");
    const auto m = build_network(cfg);
    const Equilibrium eq = solve_equilibrium(m.net, m.ctrl);
    CHECK(eq.delta_bar.cwiseAbs().maxCoeff() <= 1e-15);
    CHECK_THAT(eq.rho, WithinAbs(kPi / 4, 1e-15));
}

TEST_CASE("two-bus equilibrium at pi/6", "[equilibrium]") {
    const auto m = fixture::two_bus();
    const NewtonResult r = newton_equilibrium(m.net, Vec{{0.5, -0.5}}, Vec::Zero(2));
    REQUIRE(r.converged);
    CHECK_THAT(r.delta(0), WithinAbs(kPi / 12, 1e-12));
    CHECK_THAT(r.delta(1), WithinAbs(-kPi / 12, 1e-12));
    CHECK_THAT(security_margin(m.net, r.delta), WithinAbs(kPi / 6, 1e-12));
}

TEST_CASE("case-study equilibrium", "[equilibrium]") {
    const auto m = fixture::case_study();
    const Equilibrium eq = solve_equilibrium(m.net, m.ctrl);
    CHECK(equilibrium_residual(m.net, eq.delta_bar, eq.u_star - m.net.load).norm() <= 1e-12);
    CHECK(eq.residual <= 1e-12);
    CHECK(std::abs(eq.delta_bar.sum()) <= 1e-12);
    CHECK(m.net.edge_angles(eq.delta_bar).cwiseAbs().maxCoeff() < kHalfPi);
    CHECK(eq.rho > 0.0);
    CHECK_FALSE(eq.used_homotopy);
    // Regression fixture from the first verified run.
    const double expect[] = {0.009019980161998753, 0.0011301444661758603, -0.018077647823937715, 0.007927523195763102};
    for (int i = 0; i < 4; ++i) CHECK_THAT(eq.delta_bar(i), WithinAbs(expect[i], 1e-12));
    CHECK_THAT(eq.rho, WithinAbs(0.7757942672523915, 1e-12));
}

TEST_CASE("multi-start Newton finds a single equilibrium", "[equilibrium]") {
    const auto m = fixture::case_study();
    const Equilibrium eq = solve_equilibrium(m.net, m.ctrl);
    std::mt19937_64 rng(23);
    for (int i = 0; i < 10; ++i) {
        const Vec start = oracle::random_delta_in_theta(m.net, eq.rho, rng);
        const NewtonResult r = newton_equilibrium(m.net, eq.u_star - m.net.load, start);
        REQUIRE(r.converged);
        CHECK((r.delta - eq.delta_bar).cwiseAbs().maxCoeff() <= 1e-8);
    }
}

TEST_CASE("equilibrium is invariant under bus relabelling", "[equilibrium]") {
    auto cfg = case_study_config();
    const auto buses = cfg["buses"];
    cfg["buses"] = {buses[0], buses[1], buses[3], buses[2]};
    const auto m = build_network(cfg);
    const auto ref = fixture::case_study();
    const Equilibrium a = solve_equilibrium(m.net, m.ctrl), b = solve_equilibrium(ref.net, ref.ctrl);
    for (std::size_t i = 0; i < 4; ++i) {
        const auto j = static_cast<Eigen::Index>(m.net.labels[i] - 1);
        CHECK_THAT(a.delta_bar(static_cast<Eigen::Index>(i)), WithinAbs(b.delta_bar(j), 1e-8));
        CHECK_THAT(a.u_star(static_cast<Eigen::Index>(i)), WithinAbs(b.u_star(j), 1e-12));
    }
}

TEST_CASE("edge angles grow monotonically with the load scale", "[equilibrium]") {
    const auto m = fixture::case_study();
    double prev = 0.0;
    for (int k = 1; k <= 10; ++k) {
        NetworkModel scaled = m;
        scaled.net.load *= k / 10.0;
        const Equilibrium eq = solve_equilibrium(scaled.net, scaled.ctrl);
        const double worst = scaled.net.edge_angles(eq.delta_bar).cwiseAbs().maxCoeff();
        CHECK(worst >= prev);
        prev = worst;
    }
}

TEST_CASE("security margin edge cases", "[equilibrium]") {
    const auto m = fixture::two_bus();
    CHECK_THAT(security_margin(m.net, Vec::Zero(2)), WithinAbs(kPi / 4, 1e-15));
    CHECK_THROWS_WITH(security_margin(m.net, Vec{{kPi / 4, -kPi / 4}}), ContainsSubstring("on boundary"));
}

TEST_CASE("infeasible demand is reported", "[equilibrium]") {
    const auto m = fixture::two_bus(5.0);
    CHECK_THROWS_WITH(solve_equilibrium(m.net, m.ctrl), ContainsSubstring("infeasible"));
}

TEST_CASE("equilibrium close to the line limit", "[equilibrium]") {
    const auto m = fixture::two_bus(1.98);
    const Equilibrium eq = solve_equilibrium(m.net, m.ctrl);
    CHECK_THAT(std::sin(m.net.edge_angles(eq.delta_bar)(0)), WithinAbs(0.99, 1e-12));
    CHECK(eq.residual <= 1e-12);
}

TEST_CASE("equilibrium JSON report", "[equilibrium]") {
    const auto m = fixture::case_study();
    const auto j = equilibrium_json(m.net, solve_equilibrium(m.net, m.ctrl));
    for (const char* key : {"delta_bar", "u_star", "rho", "mu", "residual"}) CHECK(j.contains(key));
    CHECK(j["u_star"].size() == 4);
}
