#pragma once

// Independent reference computations used by the tests. Nothing here calls
// the routine it is meant to check.

#include "swingcert/swingcert.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

namespace oracle {

using swingcert::Mat;
using swingcert::Vec;

/// Minimizes 1/2 u^T Q u over 1^T u = total by coarse-to-fine grid search on
/// the first n-1 coordinates (the last one absorbs the constraint).
inline Vec brute_force_dispatch(const Vec& q, double total) {
    const auto n = q.size();
    const auto k = n - 1;
    Vec center = Vec::Constant(k, total / static_cast<double>(n));
    double half = std::max(1.0, std::abs(total));
    auto cost = [&](const Vec& head) {
        const double last = total - head.sum();
        return 0.5 * (q.head(k).cwiseProduct(head).dot(head) + q(n - 1) * last * last);
    };
    const int pts = 21;
    while (half > 1e-10) {
        Vec best = center;
        double best_cost = cost(center);
        std::vector<int> idx(static_cast<std::size_t>(k), 0);
        while (true) {
            Vec trial(k);
            for (Eigen::Index i = 0; i < k; ++i) {
                trial(i) = center(i) - half + 2.0 * half * idx[static_cast<std::size_t>(i)] / (pts - 1);
            }
            const double c = cost(trial);
            if (c < best_cost) {
                best_cost = c;
                best = trial;
            }
            std::size_t d = 0;
            while (d < idx.size() && ++idx[d] == pts) idx[d++] = 0;
            if (d == idx.size()) break;
        }
        center = best;
        half *= 0.25;
    }
    Vec u(n);
    u << center, total - center.sum();
    return u;
}

/// Central-difference gradient.
inline Vec gradient(const std::function<double(const Vec&)>& f, const Vec& x, double h = 1e-6) {
    Vec g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Vec a = x, b = x;
        a(i) += h;
        b(i) -= h;
        g(i) = (f(a) - f(b)) / (2.0 * h);
    }
    return g;
}

/// min over a uniform grid of `pts` points per axis of the cosine box
/// [lo, 1]^3 of lambda_min of K, rebuilt from scratch at every point with
/// a dense self-adjoint solver.
inline double grid_min_k(const swingcert::PowerNetwork& net, const swingcert::ControllerSetup& ctrl,
                         const swingcert::Epsilons& eps, double lo, bool comm_on, int pts = 50) {
    const auto tr = swingcert::controller_transform(ctrl);
    double best = std::numeric_limits<double>::infinity();
    Vec c(3);
    for (int i = 0; i < pts; ++i) {
        for (int j = 0; j < pts; ++j) {
            for (int k = 0; k < pts; ++k) {
                c << lo + (1.0 - lo) * i / (pts - 1), lo + (1.0 - lo) * j / (pts - 1), lo + (1.0 - lo) * k / (pts - 1);
                const Mat K = swingcert::k_matrix_from_cosines(net, ctrl, tr, eps, c, comm_on);
                Eigen::SelfAdjointEigenSolver<Mat> es(K, Eigen::EigenvaluesOnly);
                best = std::min(best, es.eigenvalues().minCoeff());
            }
        }
    }
    return best;
}

/// Random angles delta (1^T delta = 0) with every edge angle in
/// [-(pi/2 - rho), pi/2 - rho], by rejection.
inline Vec random_delta_in_theta(const swingcert::PowerNetwork& net, double rho, std::mt19937_64& rng) {
    const double lim = swingcert::kHalfPi - rho;
    std::uniform_real_distribution<double> u(-lim, lim);
    const auto n = static_cast<Eigen::Index>(net.n);
    for (;;) {
        Vec d(n);
        for (Eigen::Index i = 0; i < n; ++i) d(i) = 0.5 * u(rng);
        d = swingcert::project_mean_zero(d);
        if ((net.edge_angles(d).cwiseAbs().array() <= lim).all()) return d;
    }
}

inline Vec random_vec(Eigen::Index n, double scale, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-scale, scale);
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = u(rng);
    return v;
}

inline Mat random_mat(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Mat m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = g(rng);
    return m;
}

struct KeystoneResult {
    double rel_error = 0.0;  // max |fd - analytic| / max |analytic|
    std::size_t points = 0;
    bool completed = false;
};

/// Compares a central difference of W along a simulated trajectory with
/// the analytic derivative -y^T K y, with communication held on or off.
inline KeystoneResult keystone(const swingcert::NetworkModel& m, const swingcert::Equilibrium& eq,
                               const swingcert::Epsilons& eps, bool comm_on, double t_end, double dt) {
    using namespace swingcert;
    DoSSchedule s;
    if (!comm_on) {
        s.kappa = 2.0 * t_end;
        s.tau = 2.0;
        s.intervals = {{0.0, 2.0 * t_end}};
    }
    const Trajectory tr = simulate(m.net, m.ctrl, zero_state(m.net), s, {dt, t_end, 1});
    KeystoneResult r;
    r.completed = tr.completed;
    const auto ng = static_cast<Eigen::Index>(m.net.n_g);
    const auto tf = controller_transform(m.ctrl);
    std::vector<double> w;
    for (const auto& x : tr.samples) w.push_back(lyapunov_value(m.net, m.ctrl, eq, eps, x.delta, x.omega.head(ng), x.xi));
    double num = 0.0, den = 0.0;
    for (std::size_t k = 1; k + 1 < tr.samples.size(); ++k) {
        const auto& x = tr.samples[k];
        const SystemState st{x.delta, x.omega.head(ng), x.xi, x.t};
        const double an = lyapunov_derivative(m.net, m.ctrl, eq, tf, eps, st, comm_on);
        const double fd = (w[k + 1] - w[k - 1]) / (2.0 * dt);
        num = std::max(num, std::abs(fd - an));
        den = std::max(den, std::abs(an));
        ++r.points;
    }
    r.rel_error = num / den;
    return r;
}

}  // namespace oracle

namespace fixture {

inline swingcert::NetworkModel case_study() { return swingcert::build_network(swingcert::case_study_config()); }

/// Two buses joined by one line of unit weight; bus 1 a generator, bus 2 a load.
inline nlohmann::json two_bus_config(double load2 = 0.0) {
    return {{"buses",
             {{{"id", 1}, {"voltage", 1.0}, {"inertia", 1.0}, {"damping", 1.0}},
              {{"id", 2}, {"voltage", 1.0}, {"damping", 1.0}}}},
            {"generators", {1}},
            {"lines", {{{"from", 1}, {"to", 2}, {"susceptance", 1.0}}}},
            {"comm_edges", {{1, 2}}},
            {"costs", {1.0, 1.0}},
            {"loads", {0.0, load2}}};
}

inline swingcert::NetworkModel two_bus(double load2 = 0.0) { return swingcert::build_network(two_bus_config(load2)); }

}  // namespace fixture
