#pragma once

// Optimal dispatch and the synchronous equilibrium it induces.

#include "swingcert/dynamics.hpp"
#include "swingcert/error.hpp"
#include "swingcert/linalg.hpp"
#include "swingcert/network.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <optional>
#include <string>

namespace swingcert {

struct Equilibrium {
    Vec delta_bar;
    Vec u_star;
    double rho = 0.0;
    double mu = 0.0;
    double residual = 0.0;
    int iterations = 0;
    bool used_homotopy = false;
};

/// u* = Q^{-1} 1 (1^T P) / (1^T Q^{-1} 1): the minimizer of (1/2) u^T Q u
/// subject to 1^T (u - P) = 0. Every bus ends at the same marginal cost.
inline Vec optimal_dispatch(const ControllerSetup& ctrl, const Vec& load) {
    if (ctrl.cost.size() != load.size()) throw InputError("optimal_dispatch: cost and load sizes differ");
    const Vec qinv = ctrl.cost.cwiseInverse();
    return qinv * (load.sum() / qinv.sum());
}

/// -B Gamma sin(B^T delta) + injection
inline Vec equilibrium_residual(const PowerNetwork& net, const Vec& delta, const Vec& injection) {
    return injection - potential_gradient(net, delta);
}

struct NewtonOptions {
    int max_iterations = 60;
    double tolerance = 1e-12;
};

struct NewtonResult {
    Vec delta;
    double residual = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Damped Newton on r(x) = injection - B Gamma sin(B^T x) over 1^T x = 0.
/// The step solves (H + 11^T/n) dx = r, whose solution is orthogonal to 1
/// whenever r is, so iterates stay on the mean-zero subspace.
inline NewtonResult newton_equilibrium(const PowerNetwork& net, const Vec& injection, const Vec& start,
                                       const NewtonOptions& opt = {}) {
    const auto n = static_cast<Eigen::Index>(net.n);
    const Mat ones = Mat::Constant(n, n, 1.0 / static_cast<double>(n));
    const double scale = std::max(1.0, injection.cwiseAbs().maxCoeff());

    NewtonResult res;
    res.delta = project_mean_zero(start);
    Vec r = equilibrium_residual(net, res.delta, injection);
    double norm = r.norm();
    for (res.iterations = 0; res.iterations < opt.max_iterations; ++res.iterations) {
        // Polish a few ulps below the requested tolerance before stopping.
        if (norm <= 1e-3 * opt.tolerance * scale) break;
        Eigen::FullPivLU<Mat> lu(potential_hessian(net, res.delta) + ones);
        if (!lu.isInvertible()) break;
        const Vec step = project_mean_zero(lu.solve(r));
        double alpha = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 30; ++ls, alpha *= 0.5) {
            const Vec trial = project_mean_zero(res.delta + alpha * step);
            const Vec rt = equilibrium_residual(net, trial, injection);
            if (rt.norm() < norm * (1.0 - 1e-4 * alpha) || (rt.norm() <= norm && norm < 1e-10 * scale)) {
                res.delta = trial;
                r = rt;
                norm = rt.norm();
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
    }
    res.residual = norm;
    res.converged = norm <= opt.tolerance * scale;
    return res;
}

/// rho = min_k (pi/2 - |B^T delta_bar|_k) / 2, so that B^T delta_bar lies
/// strictly inside [rho - pi/2, pi/2 - rho]^m.
inline double security_margin(const PowerNetwork& net, const Vec& delta_bar) {
    const double worst = net.edge_angles(delta_bar).cwiseAbs().maxCoeff();
    if (!(worst < kHalfPi)) {
        throw NumericError("equilibrium on boundary: an edge angle reaches pi/2 (|angle| = " + std::to_string(worst) +
                           ")");
    }
    return 0.5 * (kHalfPi - worst);
}

inline bool in_security_region(const PowerNetwork& net, const Vec& delta, double rho) {
    return net.edge_angles(delta).cwiseAbs().maxCoeff() <= kHalfPi - rho;
}

namespace detail {

inline bool secure(const PowerNetwork& net, const NewtonResult& r) {
    return r.converged && net.edge_angles(r.delta).cwiseAbs().maxCoeff() < kHalfPi;
}

}  // namespace detail

/// Solves for the synchronous equilibrium under optimal dispatch. A plain
/// Newton solve from delta = 0 is tried first; on failure the load is
/// ramped from 0 to 1 in ten steps with warm starts.
inline Equilibrium solve_equilibrium(const PowerNetwork& net, const ControllerSetup& ctrl,
                                     const NewtonOptions& opt = {}) {
    Equilibrium eq;
    eq.u_star = optimal_dispatch(ctrl, net.load);
    eq.mu = ctrl.mu();
    const Vec injection = eq.u_star - net.load;
    const auto n = static_cast<Eigen::Index>(net.n);

    NewtonResult r = newton_equilibrium(net, injection, Vec::Zero(n), opt);
    int iterations = r.iterations;
    if (!detail::secure(net, r)) {
        eq.used_homotopy = true;
        Vec x = Vec::Zero(n);
        for (int step = 1; step <= 10; ++step) {
            r = newton_equilibrium(net, injection * (static_cast<double>(step) / 10.0), x, opt);
            iterations += r.iterations;
            if (!detail::secure(net, r)) {
                throw NumericError("infeasible: no secure equilibrium found (load ramp failed at " +
                                   std::to_string(step * 10) + "%, residual " + std::to_string(r.residual) + ")");
            }
            x = r.delta;
        }
    }
    eq.delta_bar = r.delta;
    eq.residual = r.residual;
    eq.iterations = iterations;
    eq.rho = security_margin(net, eq.delta_bar);
    return eq;
}

inline nlohmann::json equilibrium_json(const PowerNetwork& net, const Equilibrium& eq) {
    nlohmann::json j;
    j["bus_ids"] = net.labels;
    j["delta_bar"] = std::vector<double>(eq.delta_bar.data(), eq.delta_bar.data() + eq.delta_bar.size());
    j["u_star"] = std::vector<double>(eq.u_star.data(), eq.u_star.data() + eq.u_star.size());
    j["rho"] = eq.rho;
    j["mu"] = eq.mu;
    j["residual"] = eq.residual;
    j["newton_iterations"] = eq.iterations;
    j["used_homotopy"] = eq.used_homotopy;
    return j;
}

}  // namespace swingcert
