#pragma once

// Closed-loop swing dynamics under distributed averaging integral control.
//
// State: projected angles delta (1^T delta = 0), generator frequencies
// omega_g and controller states xi. Load-bus frequencies are algebraic and
// eliminated in closed form, which leaves an explicit ODE.

#include "swingcert/dos.hpp"
#include "swingcert/error.hpp"
#include "swingcert/linalg.hpp"
#include "swingcert/network.hpp"

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace swingcert {

struct SystemState {
    Vec delta;
    Vec omega_g;
    Vec xi;
    double t = 0.0;
};

struct StateDerivative {
    Vec delta;
    Vec omega_g;
    Vec xi;
};

/// The steady state of a network without load: all-zero angles,
/// frequencies and controller states.
inline SystemState zero_state(const PowerNetwork& net) {
    const auto n = static_cast<Eigen::Index>(net.n);
    return {Vec::Zero(n), Vec::Zero(static_cast<Eigen::Index>(net.n_g)), Vec::Zero(n), 0.0};
}

/// U(delta) = -1^T Gamma cos(B^T delta)
inline double potential(const PowerNetwork& net, const Vec& delta) {
    return -net.gamma.dot(net.edge_angles(delta).array().cos().matrix());
}

/// B Gamma sin(B^T delta)
inline Vec potential_gradient(const PowerNetwork& net, const Vec& delta) {
    const Vec s = net.gamma.cwiseProduct(net.edge_angles(delta).array().sin().matrix());
    return net.incidence * s;
}

/// B Gamma diag(cos(B^T delta)) B^T
inline Mat potential_hessian(const PowerNetwork& net, const Vec& delta) {
    const Vec w = net.gamma.cwiseProduct(net.edge_angles(delta).array().cos().matrix());
    return net.incidence * w.asDiagonal() * net.incidence.transpose();
}

/// Solves the load-bus balance 0 = -D_L w_L - grad U_L + xi_L - P_L for w_L.
inline Vec load_frequency(const PowerNetwork& net, const Vec& delta, const Vec& xi) {
    const auto nl = static_cast<Eigen::Index>(net.n_l);
    if (nl == 0) return Vec{};
    const Vec grad = potential_gradient(net, delta);
    return (-grad.tail(nl) + xi.tail(nl) - net.load.tail(nl)).cwiseQuotient(net.damping.tail(nl));
}

/// Full frequency vector (omega_g, omega_l).
inline Vec full_frequency(const PowerNetwork& net, const SystemState& x) {
    Vec omega(static_cast<Eigen::Index>(net.n));
    omega << x.omega_g, load_frequency(net, x.delta, x.xi);
    return omega;
}

inline StateDerivative vector_field(const PowerNetwork& net, const ControllerSetup& ctrl, const SystemState& x,
                                    bool comm_on) {
    const auto ng = static_cast<Eigen::Index>(net.n_g);
    const auto nl = static_cast<Eigen::Index>(net.n_l);
    const Vec grad = potential_gradient(net, x.delta);

    Vec omega(static_cast<Eigen::Index>(net.n));
    omega.head(ng) = x.omega_g;
    if (nl > 0) {
        omega.tail(nl) =
            (-grad.tail(nl) + x.xi.tail(nl) - net.load.tail(nl)).cwiseQuotient(net.damping.tail(nl));
    }

    StateDerivative d;
    d.delta = project_mean_zero(omega);
    d.omega_g = (-net.damping.head(ng).cwiseProduct(x.omega_g) - grad.head(ng) + x.xi.head(ng) -
                 net.load.head(ng))
                    .cwiseQuotient(net.inertia);
    d.xi = -omega.cwiseQuotient(ctrl.cost);
    if (comm_on) d.xi -= ctrl.comm_laplacian * ctrl.cost.cwiseProduct(x.xi);
    return d;
}

// ---------------------------------------------------------------------------
// Trajectories

struct TrajectorySample {
    double t = 0.0;
    Vec delta;
    Vec omega;  // full n-vector, loads included
    Vec xi;
    double W = std::numeric_limits<double>::quiet_NaN();
    double z_norm = std::numeric_limits<double>::quiet_NaN();
    bool dos_active = false;  // mode of the step leaving this sample
    bool in_theta = true;     // edge angles within the certified security region
};

struct Trajectory {
    std::vector<TrajectorySample> samples;
    double dt = 0.0;           // integrator step
    std::size_t stride = 1;    // integrator steps between recorded samples
    bool completed = true;     // false if the run left the security region
    std::string diagnostic;

    [[nodiscard]] double sample_period() const { return dt * static_cast<double>(stride); }
    [[nodiscard]] bool annotated() const { return !samples.empty() && !std::isnan(samples.front().W); }
};

struct SimulationOptions {
    double dt = 1e-3;
    double t_end = 10.0;
    std::size_t record_every = 1;
};

/// Communication mode for the integrator step [t, t + dt]. Outage
/// boundaries inside a step round to the nearest step edge.
inline bool step_dos_active(const DoSSchedule& schedule, double t, double dt) {
    return dos_active(schedule, t + 0.5 * dt);
}

/// Fixed-step classical RK4. Angles are re-projected onto 1^T delta = 0
/// after every step. The run halts (completed = false) before accepting a
/// step that would put any edge angle outside (-pi/2, pi/2).
inline Trajectory simulate(const PowerNetwork& net, const ControllerSetup& ctrl, const SystemState& x0,
                           const DoSSchedule& schedule, const SimulationOptions& opt) {
    if (!(opt.dt > 0.0)) throw InputError("simulate: dt must be positive");
    if (!(opt.t_end >= 0.0)) throw InputError("simulate: t_end must be nonnegative");
    if (opt.record_every == 0) throw InputError("simulate: record_every must be at least 1");
    if (x0.delta.size() != static_cast<Eigen::Index>(net.n) || x0.xi.size() != static_cast<Eigen::Index>(net.n) ||
        x0.omega_g.size() != static_cast<Eigen::Index>(net.n_g)) {
        throw InputError("simulate: initial state dimensions do not match the network");
    }
    if (std::abs(x0.delta.sum()) > 1e-9) throw InputError("simulate: initial angles must satisfy 1^T delta = 0");
    check_well_formed(schedule);

    const double dt = opt.dt;
    const std::size_t stride = opt.record_every;
    std::size_t steps = static_cast<std::size_t>(std::ceil(opt.t_end / dt - 1e-9));
    steps = (steps + stride - 1) / stride * stride;

    Trajectory traj;
    traj.dt = dt;
    traj.stride = stride;
    traj.samples.reserve(steps / stride + 1);

    SystemState x = x0;
    x.t = 0.0;
    auto record = [&](std::size_t k) {
        TrajectorySample s;
        s.t = static_cast<double>(k) * dt;
        s.delta = x.delta;
        s.omega = full_frequency(net, x);
        s.xi = x.xi;
        s.dos_active = step_dos_active(schedule, s.t, dt);
        traj.samples.push_back(std::move(s));
    };
    auto axpy = [](const SystemState& base, double h, const StateDerivative& d) {
        return SystemState{base.delta + h * d.delta, base.omega_g + h * d.omega_g, base.xi + h * d.xi, base.t};
    };

    record(0);
    for (std::size_t k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) * dt;
        const bool comm = !step_dos_active(schedule, t, dt);
        const StateDerivative k1 = vector_field(net, ctrl, x, comm);
        const StateDerivative k2 = vector_field(net, ctrl, axpy(x, 0.5 * dt, k1), comm);
        const StateDerivative k3 = vector_field(net, ctrl, axpy(x, 0.5 * dt, k2), comm);
        const StateDerivative k4 = vector_field(net, ctrl, axpy(x, dt, k3), comm);
        SystemState next = x;
        next.delta += dt / 6.0 * (k1.delta + 2.0 * k2.delta + 2.0 * k3.delta + k4.delta);
        next.omega_g += dt / 6.0 * (k1.omega_g + 2.0 * k2.omega_g + 2.0 * k3.omega_g + k4.omega_g);
        next.xi += dt / 6.0 * (k1.xi + 2.0 * k2.xi + 2.0 * k3.xi + k4.xi);
        next.delta = project_mean_zero(next.delta);
        next.t = static_cast<double>(k + 1) * dt;

        const Vec eta = net.edge_angles(next.delta);
        Eigen::Index worst = 0;
        if (eta.cwiseAbs().maxCoeff(&worst) >= kHalfPi) {
            const auto [a, b] = net.edges[static_cast<std::size_t>(worst)];
            traj.completed = false;
            char buf[200];
            std::snprintf(buf, sizeof buf, "left the security region at t=%.6g: edge %d-%d angle %.6g rad", next.t,
                          net.labels[a], net.labels[b], eta(worst));
            traj.diagnostic = buf;
            break;
        }
        x = std::move(next);
        if ((k + 1) % stride == 0) record(k + 1);
    }
    return traj;
}

/// CSV with header t,delta_<id>...,omega_<id>...,xi_<id>...,W,z_norm,dos_active
/// and 12 significant digits.
inline void write_trajectory_csv(std::ostream& out, const Trajectory& traj, const PowerNetwork& net) {
    out << "t";
    for (const char* name : {"delta", "omega", "xi"}) {
        for (int id : net.labels) out << ',' << name << '_' << id;
    }
    out << ",W,z_norm,dos_active\n";
    char buf[40];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.12g", v);
        out << buf;
    };
    for (const auto& s : traj.samples) {
        put(s.t);
        for (const Vec* v : {&s.delta, &s.omega, &s.xi}) {
            for (Eigen::Index i = 0; i < v->size(); ++i) {
                out << ',';
                put((*v)(i));
            }
        }
        out << ',';
        put(s.W);
        out << ',';
        put(s.z_norm);
        out << ',' << (s.dos_active ? 1 : 0) << '\n';
    }
}

}  // namespace swingcert
