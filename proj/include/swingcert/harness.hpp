#pragma once

// End-to-end verification: simulate, annotate with W, and check every
// certificate inequality sample by sample.

#include "swingcert/dos.hpp"
#include "swingcert/dynamics.hpp"
#include "swingcert/equilibrium.hpp"
#include "swingcert/error.hpp"
#include "swingcert/lyapunov.hpp"
#include "swingcert/network.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace swingcert {

enum class CheckStatus { pass, fail, not_applicable };

inline const char* to_string(CheckStatus s) {
    switch (s) {
        case CheckStatus::pass: return "pass";
        case CheckStatus::fail: return "fail";
        case CheckStatus::not_applicable: return "not_applicable";
    }
    return "?";
}

struct CheckResult {
    std::string name;
    CheckStatus status = CheckStatus::pass;
    std::optional<double> first_violation;  // time of the first failing sample
    // max over samples of log(observed / allowed); negative means slack
    double worst_log_ratio = -std::numeric_limits<double>::infinity();
    std::size_t evaluated = 0;
    std::string detail;

    [[nodiscard]] bool passed() const { return status == CheckStatus::pass; }
};

inline nlohmann::json check_json(const CheckResult& r) {
    nlohmann::json j;
    j["name"] = r.name;
    j["status"] = to_string(r.status);
    j["first_violation"] = r.first_violation ? nlohmann::json(*r.first_violation) : nlohmann::json(nullptr);
    j["worst_log_ratio"] = detail::finite_or_null(r.worst_log_ratio);
    j["evaluated"] = r.evaluated;
    j["detail"] = r.detail;
    return j;
}

struct CheckOptions {
    double rel_tol = 1e-6;
    double w_floor = 0.0;  // absolute slack on W for roundoff near the equilibrium
    double z_floor = 0.0;  // absolute slack on |z|
};

/// Size of the roundoff ball around the equilibrium that a double-precision
/// trajectory cannot resolve.
inline double roundoff_radius(const Equilibrium& eq) {
    const double scale = std::max({1.0, eq.delta_bar.cwiseAbs().maxCoeff(), eq.u_star.cwiseAbs().maxCoeff()});
    return 1e3 * std::numeric_limits<double>::epsilon() * scale;
}

inline CheckOptions default_check_options(const Certificate& cert, const Equilibrium& eq) {
    const double r = roundoff_radius(eq);
    const double dim = 3.0 * static_cast<double>(eq.delta_bar.size());
    CheckOptions o;
    o.w_floor = cert.c2 * dim * r * r;
    o.z_floor = std::sqrt(dim) * r;
    return o;
}

namespace detail {

/// log(exp(log_bound) * (1 + tol) + floor)
inline double log_allowed(double log_bound, double tol, double floor) {
    const double a = log_bound + std::log1p(tol);
    if (!(floor > 0.0)) return a;
    const double b = std::log(floor);
    if (a == -std::numeric_limits<double>::infinity()) return b;
    return std::max(a, b) + std::log1p(std::exp(-std::abs(a - b)));
}

/// Records one comparison; returns false on violation.
inline bool record(CheckResult& r, double t, double observed, double log_bound, double tol, double floor) {
    ++r.evaluated;
    if (observed <= 0.0) return true;
    const double ratio = std::log(observed) - log_allowed(log_bound, tol, floor);
    r.worst_log_ratio = std::max(r.worst_log_ratio, ratio);
    if (ratio > 0.0) {
        if (r.status == CheckStatus::pass) {
            r.status = CheckStatus::fail;
            r.first_violation.emplace(t);
        }
        return false;
    }
    return true;
}

inline std::optional<std::string> inapplicable(const Trajectory& traj) {
    if (!traj.annotated()) throw InputError("trajectory is not annotated with W");
    if (!traj.completed) return "trajectory did not complete: " + traj.diagnostic;
    for (const auto& s : traj.samples) {
        if (!s.in_theta) {
            char buf[120];
            std::snprintf(buf, sizeof buf, "trajectory left the security region at t=%.6g", s.t);
            return std::string(buf);
        }
    }
    return std::nullopt;
}

}  // namespace detail

struct DecayReport {
    CheckResult nominal;   // intervals with communication throughout
    CheckResult dos;       // intervals touching an outage
    CheckResult envelope;  // W(t) <= W(0) exp((c+d) kappa) exp(-t (c - (c+d)/tau))

    [[nodiscard]] bool passed() const { return nominal.passed() && dos.passed() && envelope.passed(); }
};

/// Sample-to-sample decay of W. Between consecutive samples the allowed
/// exponent is -c (nominal time) + d (outage time), with outage time
/// counted per integrator step exactly as the simulator switched modes.
inline DecayReport check_decay(const Trajectory& traj, const Certificate& cert, const DoSSchedule& schedule,
                               const CheckOptions& opt = {}) {
    DecayReport rep;
    rep.nominal.name = "decay_nominal";
    rep.dos.name = "decay_dos";
    rep.envelope.name = "decay_envelope";
    if (const auto why = detail::inapplicable(traj)) {
        for (CheckResult* r : {&rep.nominal, &rep.dos, &rep.envelope}) {
            r->status = CheckStatus::not_applicable;
            r->detail = *why;
        }
        return rep;
    }

    const auto& S = traj.samples;
    for (std::size_t k = 0; k + 1 < S.size(); ++k) {
        std::size_t outage_steps = 0;
        for (std::size_t j = 0; j < traj.stride; ++j) {
            if (step_dos_active(schedule, S[k].t + static_cast<double>(j) * traj.dt, traj.dt)) ++outage_steps;
        }
        const double span = S[k + 1].t - S[k].t;
        const double off = static_cast<double>(outage_steps) * traj.dt;
        const double exponent = -cert.c * (span - off) + cert.d * off;
        CheckResult& r = outage_steps == 0 ? rep.nominal : rep.dos;
        const double log_prev = S[k].W > 0.0 ? std::log(S[k].W) : -std::numeric_limits<double>::infinity();
        detail::record(r, S[k + 1].t, S[k + 1].W, log_prev + exponent, opt.rel_tol, opt.w_floor);
    }

    const double inv_tau = std::isfinite(schedule.tau) ? 1.0 / schedule.tau : 0.0;
    const double cd = cert.c + cert.d;
    const double log_w0 = S.front().W > 0.0 ? std::log(S.front().W) : -std::numeric_limits<double>::infinity();
    for (const auto& s : S) {
        detail::record(rep.envelope, s.t, s.W, log_w0 + cd * schedule.kappa - s.t * (cert.c - cd * inv_tau),
                       opt.rel_tol, opt.w_floor);
    }
    for (CheckResult* r : {&rep.nominal, &rep.dos}) {
        if (r->evaluated == 0) r->detail = "no intervals of this kind";
    }
    return rep;
}

/// |z(t)| <= alpha exp(-beta t) |z(0)|, with alpha given by its logarithm.
inline CheckResult check_state_envelope(const Trajectory& traj, double log_alpha, double beta,
                                        const CheckOptions& opt = {}) {
    CheckResult r;
    r.name = "state_envelope";
    if (const auto why = detail::inapplicable(traj)) {
        r.status = CheckStatus::not_applicable;
        r.detail = *why;
        return r;
    }
    const double z0 = traj.samples.front().z_norm;
    const double log_z0 = z0 > 0.0 ? std::log(z0) : -std::numeric_limits<double>::infinity();
    for (const auto& s : traj.samples) {
        detail::record(r, s.t, s.z_norm, log_alpha - beta * s.t + log_z0, opt.rel_tol, opt.z_floor);
    }
    return r;
}

/// Uses the DoS pair (alpha_dos, beta_dos) when the run had outages and the
/// nominal pair otherwise.
inline CheckResult check_state_envelope(const Trajectory& traj, const Certificate& cert, bool with_dos,
                                        const CheckOptions& opt = {}) {
    CheckResult r = with_dos ? check_state_envelope(traj, cert.log_alpha_dos, cert.beta_dos, opt)
                             : check_state_envelope(traj, std::log(cert.alpha_nom), cert.beta_nom, opt);
    r.name = with_dos ? "state_envelope_dos" : "state_envelope_nominal";
    return r;
}

// ---------------------------------------------------------------------------
// Comparison with the published case-study constants

struct PublishedValues {
    double eps1 = 0.025, eps2 = 0.030;
    double c1 = 0.010, c2 = 6.073, c3 = 0.012;
    double c = 4.120e-4, alpha = 173.5, beta = 1.291e-4;
};

inline bool within_order_of_magnitude(double computed, double published) {
    if (!(computed > 0.0) || !(published > 0.0)) return false;
    const double r = computed / published;
    return r >= 0.1 && r <= 10.0;
}

struct ReferenceComparison {
    CertificateParts parts;  // at the published epsilons
    Certificate at_published;
    bool c1_positive = false;
    bool c3_positive = false;
    bool all_within_order = false;
    std::string statement;
    nlohmann::json json;
};

inline ReferenceComparison compare_with_published(const PowerNetwork& net, const ControllerSetup& ctrl,
                                                  const Equilibrium& eq, const Certificate& selected, double kappa,
                                                  double tau, const ThetaSearchOptions& theta = {}) {
    const PublishedValues pub;
    ReferenceComparison cmp;
    cmp.parts = certificate_parts(net, ctrl, eq.rho, {pub.eps1, pub.eps2}, theta);
    cmp.at_published = assemble_certificate(cmp.parts, kappa, tau);
    const Certificate& a = cmp.at_published;
    cmp.c1_positive = a.c1 > 0.0;
    cmp.c3_positive = a.c3 > 0.0;

    using detail::finite_or_null;
    struct Row {
        const char* key;
        double published, computed, selected;
    };
    const Row rows[] = {
        {"c1", pub.c1, a.c1, selected.c1},           {"c2", pub.c2, a.c2, selected.c2},
        {"c3", pub.c3, a.c3, selected.c3},           {"c", pub.c, a.c, selected.c},
        {"alpha", pub.alpha, a.alpha_nom, selected.alpha_nom}, {"beta", pub.beta, a.beta_nom, selected.beta_nom},
    };
    nlohmann::json table = nlohmann::json::array();
    cmp.all_within_order = true;
    for (const auto& row : rows) {
        const bool ok = within_order_of_magnitude(row.computed, row.published);
        cmp.all_within_order = cmp.all_within_order && ok;
        table.push_back({{"quantity", row.key},
                         {"published", row.published},
                         {"computed_at_published_epsilons", finite_or_null(row.computed)},
                         {"computed_at_selected_epsilons", finite_or_null(row.selected)},
                         {"within_one_order_of_magnitude", ok}});
    }

    std::string s =
        "Exact reproduction of the published constants is not claimed: the published security margin rho and the "
        "minimization over the security region are not specified. ";
    if (!cmp.c1_positive || !cmp.c3_positive) {
        char buf[320];
        std::snprintf(buf, sizeof buf,
                      "At the published epsilons (%.3g, %.3g) the recomputed bounds give c1 = %.6g and c3 = %.6g; a "
                      "nonpositive value means no certificate exists for that pair under the bounds used here, so "
                      "the published pair is not reproduced. ",
                      pub.eps1, pub.eps2, a.c1, a.c3);
        s += buf;
    }
    s += cmp.all_within_order ? "All compared constants agree with the published ones within one order of magnitude."
                              : "Some compared constants differ from the published ones by more than one order of "
                                "magnitude (see the table).";
    cmp.statement = s;

    nlohmann::json j;
    j["published_epsilons"] = {{"eps1", pub.eps1}, {"eps2", pub.eps2}};
    j["selected_epsilons"] = {{"eps1", selected.eps1}, {"eps2", selected.eps2}};
    j["rho"] = eq.rho;
    j["c1_positive_at_published_epsilons"] = cmp.c1_positive;
    j["c3_positive_at_published_epsilons"] = cmp.c3_positive;
    j["all_within_one_order_of_magnitude"] = cmp.all_within_order;
    j["table"] = table;
    j["discrepancy"] = cmp.statement;
    cmp.json = j;
    return cmp;
}

// ---------------------------------------------------------------------------
// Verification runs

struct VerificationSetup {
    NetworkModel model;
    DoSSchedule schedule;
    std::optional<SystemState> initial;  // default: the all-zero state
    SimulationOptions sim;
    std::optional<Epsilons> eps;  // default: grid search
    ThetaSearchOptions theta;
    bool convergence_check = false;  // final max|omega| and |xi - u*| below 1e-3
};

struct VerificationResult {
    Equilibrium eq;
    Certificate cert;
    Trajectory traj;
    DoSSchedule schedule;
    std::vector<CheckResult> checks;
    bool passed = false;
    nlohmann::json certificate;  // certificate.json
    nlohmann::json report;       // report.json
};

inline nlohmann::json certificate_document(const PowerNetwork& net, const ControllerSetup& ctrl,
                                           const Equilibrium& eq, const Certificate& cert,
                                           const ThetaSearchOptions& theta = {}) {
    nlohmann::json j;
    j["certificate"] = certificate_json(cert);
    j["equilibrium"] = equilibrium_json(net, eq);
    j["reference_comparison"] = compare_with_published(net, ctrl, eq, cert, cert.kappa, cert.tau, theta).json;
    return j;
}

inline CheckResult check_convergence(const Trajectory& traj, const Equilibrium& eq, double tol = 1e-3) {
    CheckResult r;
    r.name = "convergence";
    if (traj.samples.empty() || !traj.completed) {
        r.status = CheckStatus::not_applicable;
        r.detail = traj.completed ? "empty trajectory" : "trajectory did not complete: " + traj.diagnostic;
        return r;
    }
    const auto& last = traj.samples.back();
    const double w = last.omega.cwiseAbs().maxCoeff();
    const double x = (last.xi - eq.u_star).norm();
    r.evaluated = 1;
    r.worst_log_ratio = std::log(std::max(w, x) / tol);
    char buf[160];
    std::snprintf(buf, sizeof buf, "at t=%.6g: max|omega| = %.3e, |xi - u*| = %.3e", last.t, w, x);
    r.detail = buf;
    if (!(w < tol && x < tol)) {
        r.status = CheckStatus::fail;
        r.first_violation = last.t;
    }
    return r;
}

inline VerificationResult run_verification(const VerificationSetup& setup) {
    const PowerNetwork& net = setup.model.net;
    const ControllerSetup& ctrl = setup.model.ctrl;

    const BudgetCheck budget = validate_schedule(setup.schedule);
    if (!budget.valid) {
        char buf[120];
        std::snprintf(buf, sizeof buf, "schedule violates DoS budget at t=%.12g", *budget.first_violation);
        throw InputError(buf);
    }

    VerificationResult res;
    res.schedule = setup.schedule;
    res.eq = solve_equilibrium(net, ctrl);
    res.cert = build_certificate(net, ctrl, res.eq, setup.schedule.kappa, setup.schedule.tau, setup.eps, setup.theta);
    const SystemState x0 = setup.initial ? *setup.initial : zero_state(net);
    res.traj = simulate(net, ctrl, x0, setup.schedule, setup.sim);
    annotate_trajectory(res.traj, net, ctrl, res.eq, {res.cert.eps1, res.cert.eps2});

    const CheckOptions opt = default_check_options(res.cert, res.eq);
    const DecayReport decay = check_decay(res.traj, res.cert, setup.schedule, opt);
    res.checks = {decay.nominal, decay.dos, decay.envelope,
                  check_state_envelope(res.traj, res.cert, !setup.schedule.empty(), opt)};
    if (setup.convergence_check) res.checks.push_back(check_convergence(res.traj, res.eq));
    res.passed = std::all_of(res.checks.begin(), res.checks.end(), [](const CheckResult& c) { return c.passed(); });

    res.certificate = certificate_document(net, ctrl, res.eq, res.cert, setup.theta);

    nlohmann::json rep;
    rep["passed"] = res.passed;
    rep["checks"] = nlohmann::json::array();
    for (const auto& c : res.checks) rep["checks"].push_back(check_json(c));
    rep["tolerance"] = {{"relative", opt.rel_tol}, {"w_floor", opt.w_floor}, {"z_floor", opt.z_floor}};
    rep["trajectory"] = {{"completed", res.traj.completed},
                         {"diagnostic", res.traj.diagnostic},
                         {"samples", res.traj.samples.size()},
                         {"dt", res.traj.dt},
                         {"record_every", res.traj.stride},
                         {"t_end", res.traj.samples.empty() ? 0.0 : res.traj.samples.back().t}};
    rep["schedule"] = schedule_to_json(setup.schedule);
    rep["dos_stable"] = res.cert.dos_stable;
    res.report = rep;
    return res;
}

/// gnuplot-ready columns: t, |z|, envelope, log10 |z|, log10 envelope, dos_active.
inline void write_envelope(std::ostream& out, const Trajectory& traj, const Certificate& cert, bool with_dos) {
    const double log_alpha = with_dos ? cert.log_alpha_dos : std::log(cert.alpha_nom);
    const double beta = with_dos ? cert.beta_dos : cert.beta_nom;
    out << "# t z_norm envelope log10_z_norm log10_envelope dos_active\n";
    if (traj.samples.empty()) return;
    const double z0 = traj.samples.front().z_norm;
    char buf[200];
    for (const auto& s : traj.samples) {
        const double log_env = log_alpha - beta * s.t + std::log(z0);
        std::snprintf(buf, sizeof buf, "%.12g %.12g %.12g %.12g %.12g %d\n", s.t, s.z_norm, std::exp(log_env),
                      std::log10(s.z_norm), log_env / std::log(10.0), s.dos_active ? 1 : 0);
        out << buf;
    }
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

inline void write_artifacts(const VerificationResult& res, const PowerNetwork& net, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "trajectory.csv");
        if (!out) throw InputError("cannot write " + (dir / "trajectory.csv").string());
        write_trajectory_csv(out, res.traj, net);
    }
    {
        std::ofstream out(dir / "envelope.dat");
        if (!out) throw InputError("cannot write " + (dir / "envelope.dat").string());
        write_envelope(out, res.traj, res.cert, !res.schedule.empty());
    }
    write_json(dir / "certificate.json", res.certificate);
    write_json(dir / "report.json", res.report);
}

// ---------------------------------------------------------------------------
// Four-bus case study

inline nlohmann::json case_study_config() {
    return nlohmann::json::parse(R"({
  "buses": [
    {"id": 1, "voltage": 0.98, "inertia": 3.26, "damping": 1.0, "self_susceptance": -46.60},
    {"id": 2, "voltage": 0.97, "inertia": 3.26, "damping": 1.0, "self_susceptance": -79.70},
    {"id": 3, "voltage": 0.96, "damping": 1.0, "self_susceptance": -33.10},
    {"id": 4, "voltage": 1.04, "damping": 1.0, "self_susceptance": -21.00}
  ],
  "generators": [1, 2],
  "lines": [
    {"from": 1, "to": 2, "susceptance": 25.6},
    {"from": 2, "to": 3, "susceptance": 33.1},
    {"from": 2, "to": 4, "susceptance": 21.0}
  ],
  "comm_edges": [[1, 4], [2, 3], [3, 4], [1, 3]],
  "costs": {"1": 1.00, "2": 0.75, "3": 1.50, "4": 0.50},
  "loads": {"3": 0.72, "4": 0.24}
})");
}

struct CaseStudyOptions {
    double kappa = 10.0;
    double tau = 1.5;
    double t_end = 600.0;
    double dt = 1e-3;
    std::size_t record_every = 10;
    ThetaSearchOptions theta;
};

inline VerificationSetup case_study_setup(const CaseStudyOptions& opt = {}) {
    VerificationSetup s;
    s.model = build_network(case_study_config());
    s.schedule = generate_schedule(opt.kappa, opt.tau, opt.t_end, 0, DosPolicy::greedy);
    s.sim = {opt.dt, opt.t_end, opt.record_every};
    s.theta = opt.theta;
    s.convergence_check = true;
    return s;
}

inline VerificationResult run_case_study(const std::optional<std::filesystem::path>& out_dir,
                                         const CaseStudyOptions& opt = {}) {
    const VerificationSetup setup = case_study_setup(opt);
    VerificationResult res = run_verification(setup);
    if (out_dir) write_artifacts(res, setup.model.net, *out_dir);
    return res;
}

}  // namespace swingcert
