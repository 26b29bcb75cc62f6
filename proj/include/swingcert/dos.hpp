#pragma once

// Denial-of-service outage schedules.
//
// A schedule is a sorted list of disjoint half-open outage intervals
// [T_i, T_i + D_i) together with the budget (kappa, tau) that bounds the
// accumulated outage: |Xi(t)| <= kappa + t / tau for all t >= 0.

#include "swingcert/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace swingcert {

struct DosInterval {
    double start = 0.0;
    double duration = 0.0;
    [[nodiscard]] double end() const { return start + duration; }
};

struct DoSSchedule {
    std::vector<DosInterval> intervals;
    double kappa = 0.0;
    double tau = std::numeric_limits<double>::infinity();

    [[nodiscard]] bool empty() const { return intervals.empty(); }
};

enum class DosPolicy { greedy, random };

/// Throws InputError unless intervals are sorted, disjoint and of positive
/// length, and (kappa, tau) is an admissible budget.
inline void check_well_formed(const DoSSchedule& s) {
    if (!(s.kappa >= 0.0) || !std::isfinite(s.kappa)) throw InputError("DoS budget: kappa must be >= 0");
    if (!(s.tau > 1.0)) throw InputError("DoS budget: tau must be > 1");
    double prev_end = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < s.intervals.size(); ++i) {
        const auto& iv = s.intervals[i];
        if (!std::isfinite(iv.start) || !std::isfinite(iv.duration)) {
            throw InputError("DoS interval " + std::to_string(i) + " is not finite");
        }
        if (iv.start < 0.0) throw InputError("DoS interval " + std::to_string(i) + " starts before t=0");
        if (!(iv.duration > 0.0)) throw InputError("DoS interval " + std::to_string(i) + " has non-positive duration");
        if (!(iv.start > prev_end)) {
            throw InputError("DoS intervals overlap or are unsorted at interval " + std::to_string(i));
        }
        prev_end = iv.end();
    }
}

/// Accumulated outage |Xi(t)| on [0, t].
inline double dos_measure(const DoSSchedule& s, double t) {
    double total = 0.0;
    for (const auto& iv : s.intervals) {
        if (iv.start >= t) break;
        total += std::min(iv.end(), t) - iv.start;
    }
    return total;
}

inline bool dos_active(const DoSSchedule& s, double t) {
    // Intervals are sorted; first interval whose end lies beyond t.
    auto it = std::upper_bound(s.intervals.begin(), s.intervals.end(), t,
                               [](double x, const DosInterval& iv) { return x < iv.end(); });
    return it != s.intervals.end() && it->start <= t;
}

struct BudgetCheck {
    bool valid = true;
    std::optional<double> first_violation;  // time of the first violating right endpoint
    double max_excess = -std::numeric_limits<double>::infinity();  // sup_t |Xi(t)| - kappa - t/tau
};

/// Checks the outage budget. |Xi(t)| - t/tau only increases inside an
/// interval, so its supremum is attained at right endpoints.
inline BudgetCheck validate_schedule(const DoSSchedule& s) {
    check_well_formed(s);
    BudgetCheck out;
    double accumulated = 0.0;
    for (const auto& iv : s.intervals) {
        accumulated += iv.duration;
        const double t = iv.end();
        const double allowance = s.kappa + t / s.tau;
        const double excess = accumulated - allowance;
        out.max_excess = std::max(out.max_excess, excess);
        // Relative slack for budget-tight schedules assembled in floating point.
        const double tol = 1e-12 * std::max(1.0, std::abs(allowance));
        if (excess > tol && out.valid) {
            out.valid = false;
            out.first_violation = t;
        }
    }
    if (s.intervals.empty()) out.max_excess = -s.kappa;
    return out;
}

/// Builds a schedule that satisfies the budget by construction.
///
/// greedy: an initial outage of length kappa*tau/(tau-1), which makes the
///   budget tight at its end, followed by outages of length `quantum`
///   separated by the shortest communication windows that keep the budget.
/// random: outages with random gaps and durations drawn from `seed`; a
///   candidate outage is kept only if the budget holds at its end.
inline DoSSchedule generate_schedule(double kappa, double tau, double t_end, std::uint64_t seed, DosPolicy policy,
                                     double quantum = 1.0) {
    DoSSchedule s;
    s.kappa = kappa;
    s.tau = tau;
    check_well_formed(s);
    if (!(t_end > 0.0)) throw InputError("generate_schedule: t_end must be positive");
    if (!(quantum > 0.0)) throw InputError("generate_schedule: outage quantum must be positive");

    double accumulated = 0.0;
    double t = 0.0;  // end of the last outage
    auto push = [&](double start, double duration) {
        duration = std::min(duration, t_end - start);
        if (duration <= 0.0) return false;
        s.intervals.push_back({start, duration});
        accumulated += duration;
        t = start + duration;
        return true;
    };

    if (policy == DosPolicy::greedy) {
        if (!std::isfinite(tau)) {
            // No budget growth: a single outage of length kappa.
            if (kappa > 0.0) push(0.0, kappa);
            return s;
        }
        if (kappa > 0.0) push(0.0, kappa * tau / (tau - 1.0));
        while (t < t_end) {
            // Earliest start with accumulated + q <= kappa + (start + q) / tau.
            double start = std::max(tau * (accumulated + quantum - kappa) - quantum, t);
            if (!s.intervals.empty() && start <= t) start = t + (tau - 1.0) * quantum;
            if (start >= t_end || !push(start, quantum)) break;
        }
    } else {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> gap_dist(0.1, 5.0 * quantum);
        std::uniform_real_distribution<double> len_dist(0.1 * quantum, 5.0 * quantum);
        double cursor = 0.0;
        while (true) {
            const double start = cursor + gap_dist(rng);
            if (start >= t_end) break;
            const double duration = std::min(len_dist(rng), t_end - start);
            const double end = start + duration;
            const double allowance = kappa + end / tau;
            if (accumulated + duration <= allowance) {
                push(start, duration);
                cursor = end;
            } else {
                cursor = start;
            }
        }
    }
    if (!validate_schedule(s).valid) {
        throw NumericError("generate_schedule produced a schedule violating its budget");
    }
    return s;
}

inline nlohmann::json schedule_to_json(const DoSSchedule& s) {
    nlohmann::json j;
    j["kappa"] = s.kappa;
    j["tau"] = std::isfinite(s.tau) ? nlohmann::json(s.tau) : nlohmann::json(nullptr);
    auto& iv = j["intervals"] = nlohmann::json::array();
    for (const auto& i : s.intervals) iv.push_back({i.start, i.duration});
    return j;
}

inline DoSSchedule schedule_from_json(const nlohmann::json& j) {
    try {
        DoSSchedule s;
        s.kappa = j.at("kappa").get<double>();
        s.tau = j.at("tau").is_null() ? std::numeric_limits<double>::infinity() : j.at("tau").get<double>();
        for (const auto& e : j.at("intervals")) {
            if (!e.is_array() || e.size() != 2) throw InputError("DoS intervals must be [start, duration] pairs");
            s.intervals.push_back({e[0].get<double>(), e[1].get<double>()});
        }
        check_well_formed(s);
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed DoS schedule: ") + e.what());
    }
}

inline DosPolicy parse_policy(const std::string& name) {
    if (name == "greedy") return DosPolicy::greedy;
    if (name == "random") return DosPolicy::random;
    throw InputError("unknown DoS policy '" + name + "' (expected greedy or random)");
}

}  // namespace swingcert
