#pragma once

// Strict Lyapunov function for the closed loop, its dissipation matrix K,
// and the constants that turn both into exponential-convergence
// certificates with and without controller communication.
//
// Conventions
//   s        = grad U(delta) - grad U(delta_bar)
//   xi~      = xi - u*
//   (xi1, xi2) = T^{-1} xi, with T = Q^{-1/2} [V | Q^{-1/2} 1 / sqrt(mu)]
//   y        = (s, omega, xi1 - xi1_bar, xi2 - xi2_bar)          (3n entries)
//   z_G      = (delta - delta_bar, omega_g, xi~)
//   z        = (delta - delta_bar, omega, xi~)
//
//   W = Bregman(delta, delta_bar) + 1/2 omega_g^T M_g omega_g + 1/2 xi~^T Q xi~
//       + eps1 s^T Q M omega - (eps2 / mu) (1^T xi~)(1^T M omega)
//
// The last term equals -eps2/sqrt(mu) (xi2 - xi2_bar) 1^T M omega, which is
// the normalization under which dW/dt = -y^T K y holds with K as assembled
// by k_matrix().

#include "swingcert/dynamics.hpp"
#include "swingcert/equilibrium.hpp"
#include "swingcert/error.hpp"
#include "swingcert/linalg.hpp"
#include "swingcert/network.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace swingcert {

struct Epsilons {
    double eps1 = 0.0;
    double eps2 = 0.0;
};

// ---------------------------------------------------------------------------
// Potential-energy terms

/// U(delta) - U(delta_bar) - grad U(delta_bar)^T (delta - delta_bar), summed
/// edge by edge in a form that does not cancel near delta_bar.
inline double bregman_distance(const PowerNetwork& net, const Vec& delta, const Vec& delta_bar) {
    const Vec eta_bar = net.edge_angles(delta_bar);
    const Vec h = net.edge_angles(delta - delta_bar);
    double sum = 0.0;
    for (Eigen::Index k = 0; k < h.size(); ++k) {
        const double half = std::sin(0.5 * h(k));
        sum += net.gamma(k) * (2.0 * std::cos(eta_bar(k)) * half * half - std::sin(eta_bar(k)) * x_minus_sin(h(k)));
    }
    return sum;
}

/// grad U(delta) - grad U(delta_bar), via sin a - sin b = 2 cos((a+b)/2) sin((a-b)/2).
inline Vec gradient_difference(const PowerNetwork& net, const Vec& delta, const Vec& delta_bar) {
    const Vec eta = net.edge_angles(delta);
    const Vec eta_bar = net.edge_angles(delta_bar);
    const Vec h = net.edge_angles(delta - delta_bar);
    Vec w(eta.size());
    for (Eigen::Index k = 0; k < eta.size(); ++k) {
        w(k) = net.gamma(k) * 2.0 * std::cos(0.5 * (eta(k) + eta_bar(k))) * std::sin(0.5 * h(k));
    }
    return net.incidence * w;
}

// ---------------------------------------------------------------------------
// Controller coordinates

struct ControllerTransform {
    Mat v_bar;  // n x (n-1), orthonormal columns orthogonal to Q^{-1/2} 1
    Mat T;      // xi = T (xi1, xi2)
    Mat T_inv;
    Vec anchor;  // Q^{-1/2} 1 / sqrt(mu), unit length
};

inline ControllerTransform controller_transform(const ControllerSetup& ctrl) {
    const Vec& q = ctrl.cost;
    if ((q.array() <= 0.0).any()) throw InputError("controller_transform: costs must be positive");
    const auto n = q.size();
    const double mu = ctrl.mu();
    const Vec q_isqrt = q.cwiseSqrt().cwiseInverse();
    const Vec q_sqrt = q.cwiseSqrt();

    ControllerTransform tr;
    tr.anchor = q_isqrt / std::sqrt(mu);
    // Householder QR of the anchor: the trailing n-1 columns of the
    // orthogonal factor span its orthogonal complement.
    Eigen::HouseholderQR<Mat> qr(Mat(tr.anchor));
    const Mat full = qr.householderQ() * Mat::Identity(n, n);
    tr.v_bar = full.rightCols(n - 1);
    for (Eigen::Index j = 0; j < tr.v_bar.cols(); ++j) {
        // Sign convention: first entry that is nonzero (beyond roundoff) is positive.
        for (Eigen::Index i = 0; i < n; ++i) {
            if (std::abs(tr.v_bar(i, j)) > 1e-12) {
                if (tr.v_bar(i, j) < 0.0) tr.v_bar.col(j) *= -1.0;
                break;
            }
        }
    }
    Mat basis(n, n);
    basis << tr.v_bar, tr.anchor;
    tr.T = q_isqrt.asDiagonal() * basis;
    tr.T_inv = basis.transpose() * q_sqrt.asDiagonal();
    return tr;
}

// ---------------------------------------------------------------------------
// Lyapunov function

inline Vec inertia_full(const PowerNetwork& net) {
    Vec m = Vec::Zero(static_cast<Eigen::Index>(net.n));
    m.head(static_cast<Eigen::Index>(net.n_g)) = net.inertia;
    return m;
}

inline double lyapunov_value(const PowerNetwork& net, const ControllerSetup& ctrl, const Equilibrium& eq,
                             const Epsilons& eps, const Vec& delta, const Vec& omega_g, const Vec& xi) {
    const auto ng = static_cast<Eigen::Index>(net.n_g);
    const Vec xi_t = xi - eq.u_star;
    const Vec m_omega = net.inertia.cwiseProduct(omega_g);  // M omega restricted to generators
    const Vec s = gradient_difference(net, delta, eq.delta_bar);

    double w = bregman_distance(net, delta, eq.delta_bar);
    w += 0.5 * omega_g.dot(m_omega);
    w += 0.5 * xi_t.dot(ctrl.cost.cwiseProduct(xi_t));
    w += eps.eps1 * s.head(ng).dot(ctrl.cost.head(ng).cwiseProduct(m_omega));
    w -= eps.eps2 / eq.mu * xi_t.sum() * m_omega.sum();
    return w;
}

inline double lyapunov_value(const PowerNetwork& net, const ControllerSetup& ctrl, const Equilibrium& eq,
                             const Epsilons& eps, const SystemState& x) {
    return lyapunov_value(net, ctrl, eq, eps, x.delta, x.omega_g, x.xi);
}

/// The same function written in transformed controller coordinates
/// (xi1, xi2) = T^{-1} xi.
inline double lyapunov_value_transformed(const PowerNetwork& net, const ControllerSetup& ctrl,
                                         const Equilibrium& eq, const Epsilons& eps, const ControllerTransform& tr,
                                         const Vec& delta, const Vec& omega_g, const Vec& xi1, double xi2) {
    const auto n = static_cast<Eigen::Index>(net.n);
    const Vec bar = tr.T_inv * eq.u_star;
    const Vec d1 = xi1 - bar.head(n - 1);
    const double d2 = xi2 - bar(n - 1);
    const Vec m = inertia_full(net);
    Vec omega = Vec::Zero(n);
    omega.head(static_cast<Eigen::Index>(net.n_g)) = omega_g;
    const Vec m_omega = m.cwiseProduct(omega);
    const Vec s = gradient_difference(net, delta, eq.delta_bar);

    double w = bregman_distance(net, delta, eq.delta_bar);
    w += 0.5 * omega.dot(m_omega) + 0.5 * d1.squaredNorm() + 0.5 * d2 * d2;
    w += eps.eps1 * m_omega.dot(ctrl.cost.cwiseProduct(s));
    w -= eps.eps2 / std::sqrt(eq.mu) * m_omega.sum() * d2;
    return w;
}

/// y = (s, omega, xi1 - xi1_bar, xi2 - xi2_bar)
inline Vec incremental_y(const PowerNetwork& net, const Equilibrium& eq, const ControllerTransform& tr,
                         const Vec& delta, const Vec& omega, const Vec& xi) {
    const auto n = static_cast<Eigen::Index>(net.n);
    Vec y(3 * n);
    y << gradient_difference(net, delta, eq.delta_bar), omega, tr.T_inv * (xi - eq.u_star);
    return y;
}

inline double z_norm(const Equilibrium& eq, const Vec& delta, const Vec& omega, const Vec& xi) {
    return std::sqrt((delta - eq.delta_bar).squaredNorm() + omega.squaredNorm() + (xi - eq.u_star).squaredNorm());
}

// ---------------------------------------------------------------------------
// Dissipation matrix

/// K as a function of the edge cosines cos(B^T delta), on which it depends
/// affinely. Blocks ordered (s, omega, xi1, xi2).
inline Mat k_matrix_from_cosines(const PowerNetwork& net, const ControllerSetup& ctrl, const ControllerTransform& tr,
                                 const Epsilons& eps, const Vec& cosines, bool comm_on) {
    const auto n = static_cast<Eigen::Index>(net.n);
    const double mu = ctrl.mu();
    const Vec& q = ctrl.cost;
    const Mat Q = q.asDiagonal();
    const Mat D = net.damping.asDiagonal();
    const Mat M = inertia_full(net).asDiagonal();
    const Mat H = net.incidence * net.gamma.cwiseProduct(cosines).asDiagonal() * net.incidence.transpose();
    const Vec ones = Vec::Ones(n);
    const Vec q_sqrt = q.cwiseSqrt();
    const Vec q_isqrt = q_sqrt.cwiseInverse();
    const double e1 = eps.eps1;
    const double e2 = eps.eps2;

    const Eigen::Index o1 = 0, o2 = n, o3 = 2 * n, o4 = 3 * n - 1;
    Mat u = Mat::Zero(3 * n, 3 * n);
    u.block(o1, o1, n, n) = e1 * Q;
    u.block(o1, o2, n, n) = e1 * Q * D;
    u.block(o1, o3, n, n - 1) = -e1 * q_sqrt.asDiagonal() * tr.v_bar;
    u.block(o2, o2, n, n) = D - e1 * M * Q * H - (e2 / mu) * M * ones * q.cwiseInverse().transpose();
    u.block(o2, o4, n, 1) = -(e2 / std::sqrt(mu)) * D * ones;
    if (comm_on) {
        u.block(o3, o3, n - 1, n - 1) =
            tr.v_bar.transpose() * q_sqrt.asDiagonal() * ctrl.comm_laplacian * q_sqrt.asDiagonal() * tr.v_bar;
    }
    u.block(o3, o4, n - 1, 1) = (e2 / std::sqrt(mu)) * tr.v_bar.transpose() * q_isqrt;
    u(o4, o4) = e2;
    return symm(u);
}

inline Mat k_matrix(const PowerNetwork& net, const ControllerSetup& ctrl, const ControllerTransform& tr,
                    const Epsilons& eps, const Vec& delta, bool comm_on) {
    return k_matrix_from_cosines(net, ctrl, tr, eps, net.edge_angles(delta).array().cos().matrix(), comm_on);
}

inline Mat k_matrix(const PowerNetwork& net, const ControllerSetup& ctrl, const Epsilons& eps, const Vec& delta,
                    bool comm_on) {
    return k_matrix(net, ctrl, controller_transform(ctrl), eps, delta, comm_on);
}

/// Directional derivative of W along the closed-loop field, -y^T K(delta) y.
inline double lyapunov_derivative(const PowerNetwork& net, const ControllerSetup& ctrl, const Equilibrium& eq,
                                  const ControllerTransform& tr, const Epsilons& eps, const SystemState& x,
                                  bool comm_on) {
    const Vec omega = full_frequency(net, x);
    const Vec y = incremental_y(net, eq, tr, x.delta, omega, x.xi);
    return -y.dot(k_matrix(net, ctrl, tr, eps, x.delta, comm_on) * y);
}

// ---------------------------------------------------------------------------
// Cross-term elimination: [[a, b^T c], [c^T b, d]] >= blkdiag(a - b^T b, d - c^T c)

inline Mat cross_term_matrix(const Mat& a, const Mat& b, const Mat& c, const Mat& d) {
    if (a.rows() != a.cols() || d.rows() != d.cols() || b.cols() != a.rows() || c.cols() != d.rows() ||
        b.rows() != c.rows()) {
        throw InputError("cross_term_matrix: blocks are not conformable");
    }
    const Eigen::Index p = a.rows(), r = d.rows();
    Mat m(p + r, p + r);
    m << a, b.transpose() * c, c.transpose() * b, d;
    return m;
}

inline Mat cross_term_bound(const Mat& a, const Mat& b, const Mat& c, const Mat& d) {
    if (a.rows() != a.cols() || d.rows() != d.cols() || b.cols() != a.rows() || c.cols() != d.rows() ||
        b.rows() != c.rows()) {
        throw InputError("cross_term_bound: blocks are not conformable");
    }
    const Eigen::Index p = a.rows(), r = d.rows();
    Mat m = Mat::Zero(p + r, p + r);
    m.topLeftCorner(p, p) = a - b.transpose() * b;
    m.bottomRightCorner(r, r) = d - c.transpose() * c;
    return m;
}

// ---------------------------------------------------------------------------
// Sector bounds over Theta(rho) = [rho - pi/2, pi/2 - rho]^m
//
// Every mean-value cosine lies in [sin rho, 1], and Laplacian eigenvalues
// are monotone in the edge weights, so the extreme Laplacians are
// L(gamma sin rho) and L(gamma).

struct SectorBounds {
    double alpha1 = 0.0;  // alpha1 |dd|^2 <= |s|^2
    double alpha2 = 0.0;  // |s|^2 <= alpha2 |dd|^2
    double beta1 = 0.0;   // beta1 |dd|^2 <= Bregman
    double beta2 = 0.0;   // Bregman <= beta2 |dd|^2
};

inline SectorBounds sector_bounds(const PowerNetwork& net, double rho) {
    if (!(rho > 0.0 && rho < kHalfPi)) throw InputError("sector_bounds: rho must lie in (0, pi/2)");
    const double lo = lambda_second(weighted_laplacian(net.incidence, net.gamma * std::sin(rho)));
    const double hi = lambda_max(weighted_laplacian(net.incidence, net.gamma));
    // The Bregman distance is a second-order Taylor remainder, hence the 1/2.
    return {lo * lo, hi * hi, 0.5 * lo, 0.5 * hi};
}

/// |z|^2 <= gamma |z_G|^2, from D_L omega_L = -s_L + xi~_L.
inline double gamma_ratio(const PowerNetwork& net, double alpha2) {
    if (net.n_l == 0) return 1.0;
    const double r = (std::sqrt(alpha2) + 1.0) / diag_min(net.damping_l());
    return 1.0 + r * r;
}

struct WBounds {
    double c1 = 0.0;
    double c2 = 0.0;
};

/// Sandwich constants c1 |z_G|^2 <= W <= c2 |z_G|^2 on Theta(rho), from
/// Young's inequality on the two cross terms:
///   2|s^T Q M omega|            <= lmax(Q)^2 alpha2 |dd|^2 + lmax(M_g)^2 |omega_g|^2
///   2|xi~^T 1 1^T M omega|      <= n^2 |xi~|^2 + lmax(M_g)^2 |omega_g|^2
/// Values are returned as computed; c1 may be nonpositive.
inline WBounds w_bounds_raw(const PowerNetwork& net, const ControllerSetup& ctrl, const Epsilons& eps,
                            const SectorBounds& sb) {
    const double e1 = eps.eps1;
    const double e2 = eps.eps2 / ctrl.mu();
    const double m_lo = diag_min(net.inertia), m_hi = diag_max(net.inertia);
    const double q_lo = diag_min(ctrl.cost), q_hi = diag_max(ctrl.cost);
    const double n2 = static_cast<double>(net.n * net.n);
    WBounds b;
    b.c1 = 0.5 * std::min({m_lo - (e1 + e2) * m_hi * m_hi, q_lo - e2 * n2, 2.0 * sb.beta1 - e1 * sb.alpha2 * q_hi * q_hi});
    b.c2 = 0.5 * std::max({m_hi + (e1 + e2) * m_hi * m_hi, q_hi + e2 * n2, 2.0 * sb.beta2 + e1 * sb.alpha2 * q_hi * q_hi});
    return b;
}

inline WBounds w_bounds(const PowerNetwork& net, const ControllerSetup& ctrl, const Epsilons& eps,
                        const SectorBounds& sb) {
    if (eps.eps1 < 0.0 || eps.eps2 < 0.0) throw InputError("w_bounds: epsilons must be nonnegative");
    const WBounds b = w_bounds_raw(net, ctrl, eps, sb);
    if (!(b.c1 > 0.0)) throw NumericError("c1 nonpositive (c1 = " + std::to_string(b.c1) + "): epsilons too large");
    return b;
}

// ---------------------------------------------------------------------------
// Minimum of lambda_min(K(delta)) over Theta(rho)
//
// K is affine in the cosine vector, which ranges over the box
// [sin rho, 1]^m; lambda_min is concave, so the minimum sits at a vertex.

struct ThetaSearchOptions {
    unsigned threads = 0;  // 0 = hardware concurrency
    std::size_t max_exact_edges = 20;
    std::size_t samples = 10000;
    std::uint64_t seed = 1;
};

struct ThetaMinimum {
    double value = 0.0;
    bool exact = true;
    std::size_t points = 0;
};

/// Thread cap from SWINGCERT_THREADS (unset or 0 = automatic).
inline unsigned threads_from_env() {
    const char* v = std::getenv("SWINGCERT_THREADS");
    if (v == nullptr || *v == '\0') return 0;
    char* end = nullptr;
    const long parsed = std::strtol(v, &end, 10);
    if (*end != '\0' || parsed < 0) throw InputError(std::string("SWINGCERT_THREADS must be a nonnegative integer, got '") + v + "'");
    return static_cast<unsigned>(parsed);
}

namespace detail {

template <class F>
double parallel_min(std::size_t count, unsigned threads, F&& f) {
    unsigned hw = threads != 0 ? threads : std::max(1u, std::thread::hardware_concurrency());
    const std::size_t workers = std::min<std::size_t>(hw, std::max<std::size_t>(1, count / 64));
    if (workers <= 1) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < count; ++i) best = std::min(best, f(i));
        return best;
    }
    std::vector<double> partial(workers, std::numeric_limits<double>::infinity());
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < count; i += workers) partial[w] = std::min(partial[w], f(i));
        });
    }
    for (auto& t : pool) t.join();
    return *std::min_element(partial.begin(), partial.end());
}

}  // namespace detail

inline ThetaMinimum min_k_eigenvalue(const PowerNetwork& net, const ControllerSetup& ctrl,
                                     const ControllerTransform& tr, const Epsilons& eps, double rho, bool comm_on,
                                     const ThetaSearchOptions& opt = {}) {
    if (!(rho > 0.0 && rho < kHalfPi)) throw InputError("k_lower_bound: rho must lie in (0, pi/2)");
    const std::size_t m = net.num_edges();
    const double lo = std::sin(rho);
    ThetaMinimum out;
    if (m <= opt.max_exact_edges) {
        const std::size_t count = std::size_t{1} << m;
        out.points = count;
        out.value = detail::parallel_min(count, opt.threads, [&](std::size_t v) {
            Vec c(static_cast<Eigen::Index>(m));
            for (std::size_t k = 0; k < m; ++k) c(static_cast<Eigen::Index>(k)) = (v >> k) & 1u ? 1.0 : lo;
            return lambda_min(k_matrix_from_cosines(net, ctrl, tr, eps, c, comm_on));
        });
        return out;
    }
    // Latin-hypercube sample of the box, plus its two extreme corners.
    out.exact = false;
    const std::size_t count = opt.samples;
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Mat pts(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(count + 2));
    std::vector<std::size_t> strata(count);
    for (std::size_t k = 0; k < m; ++k) {
        for (std::size_t i = 0; i < count; ++i) strata[i] = i;
        std::shuffle(strata.begin(), strata.end(), rng);
        for (std::size_t i = 0; i < count; ++i) {
            const double u = (static_cast<double>(strata[i]) + unit(rng)) / static_cast<double>(count);
            pts(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = lo + u * (1.0 - lo);
        }
    }
    pts.col(static_cast<Eigen::Index>(count)).setConstant(lo);
    pts.col(static_cast<Eigen::Index>(count + 1)).setConstant(1.0);
    out.points = count + 2;
    out.value = detail::parallel_min(count + 2, opt.threads, [&](std::size_t i) {
        return lambda_min(k_matrix_from_cosines(net, ctrl, tr, eps, pts.col(static_cast<Eigen::Index>(i)), comm_on));
    });
    return out;
}

/// c3 = min lambda_min K over Theta (communication on; must be positive),
/// or c_DoS = -min lambda_min K over Theta with communication removed.
inline double k_lower_bound(const PowerNetwork& net, const ControllerSetup& ctrl, const Epsilons& eps, double rho,
                            bool comm_on, const ThetaSearchOptions& opt = {}) {
    const ThetaMinimum r = min_k_eigenvalue(net, ctrl, controller_transform(ctrl), eps, rho, comm_on, opt);
    if (comm_on) {
        if (!(r.value > 0.0)) {
            throw NumericError("K not positive definite over the security region (min eigenvalue " +
                               std::to_string(r.value) + "): epsilons too large");
        }
        return r.value;
    }
    return std::max(0.0, -r.value);
}

// ---------------------------------------------------------------------------
// Certificates

struct Certificate {
    double eps1 = 0.0, eps2 = 0.0;
    double alpha1 = 0.0, alpha2 = 0.0, beta1 = 0.0, beta2 = 0.0;
    double gamma_ratio = 1.0;
    double c1 = 0.0, c2 = 0.0, c3 = 0.0;
    double c = 0.0;
    double c_dos = 0.0, d = 0.0;
    double alpha_nom = 0.0, beta_nom = 0.0;
    double log_alpha_dos = 0.0, alpha_dos = 0.0, beta_dos = 0.0;
    bool dos_stable = false;
    double kappa = 0.0, tau = std::numeric_limits<double>::infinity();
    double rho = 0.0, mu = 0.0;
    bool theta_exact = true;
    std::size_t theta_points = 0;
    double rate_factor = 1.0;    // lower bound of |y|^2 / |z|^2
    double growth_factor = 1.0;  // upper bound of |y|^2 / |z|^2
};

/// Inputs to the rate arithmetic, each already established on Theta(rho).
struct CertificateParts {
    Epsilons eps;
    SectorBounds sector;
    double gamma_ratio = 1.0;
    WBounds w;
    double c3 = 0.0;
    double c_dos = 0.0;
    double q_min = 1.0, q_max = 1.0;  // extreme entries of Q
    double rho = 0.0, mu = 0.0;
    bool theta_exact = true;
    std::size_t theta_points = 0;
};

/// Rate arithmetic:
///   dW/dt <= -c3 |y|^2,  |y|^2 >= min(alpha1, 1, qmin) |z|^2,  |z_G|^2 >= W / c2
///   dW/dt <= c_dos |y|^2, |y|^2 <= max(alpha2, 1, qmax) |z|^2 <= .. gamma W / c1
/// (|y|^2 carries xi~^T Q xi~ in the controller block.)
inline Certificate assemble_certificate(const CertificateParts& p, double kappa, double tau) {
    if (!(kappa >= 0.0)) throw InputError("certificate: kappa must be >= 0");
    if (!(tau > 1.0)) throw InputError("certificate: tau must be > 1");
    Certificate k;
    k.eps1 = p.eps.eps1;
    k.eps2 = p.eps.eps2;
    k.alpha1 = p.sector.alpha1;
    k.alpha2 = p.sector.alpha2;
    k.beta1 = p.sector.beta1;
    k.beta2 = p.sector.beta2;
    k.gamma_ratio = p.gamma_ratio;
    k.c1 = p.w.c1;
    k.c2 = p.w.c2;
    k.c3 = p.c3;
    k.c_dos = p.c_dos;
    k.rho = p.rho;
    k.mu = p.mu;
    k.theta_exact = p.theta_exact;
    k.theta_points = p.theta_points;
    k.kappa = kappa;
    k.tau = tau;

    k.rate_factor = std::min({k.alpha1, 1.0, p.q_min});
    k.growth_factor = std::max({k.alpha2, 1.0, p.q_max});
    k.c = k.c3 * k.rate_factor / k.c2;
    k.d = k.c_dos * k.growth_factor * k.gamma_ratio / k.c1;

    k.alpha_nom = std::sqrt(k.gamma_ratio * k.c2 / k.c1);
    k.beta_nom = 0.5 * k.c;

    const double inv_tau = std::isfinite(tau) ? 1.0 / tau : 0.0;
    k.beta_dos = 0.5 * (k.c - (k.c + k.d) * inv_tau);
    k.log_alpha_dos = 0.5 * (std::log(k.gamma_ratio) + kappa * (k.c + k.d) + std::log(k.c2) - std::log(k.c1));
    k.alpha_dos = std::exp(k.log_alpha_dos);
    k.dos_stable = tau > 1.0 + k.d / k.c;
    return k;
}

/// Evaluates every ingredient for fixed epsilons without enforcing
/// positivity; c3 is the raw minimum eigenvalue and may be negative.
inline CertificateParts certificate_parts(const PowerNetwork& net, const ControllerSetup& ctrl, double rho,
                                          const Epsilons& eps, const ThetaSearchOptions& opt = {}) {
    CertificateParts p;
    p.eps = eps;
    p.rho = rho;
    p.mu = ctrl.mu();
    p.sector = sector_bounds(net, rho);
    p.gamma_ratio = gamma_ratio(net, p.sector.alpha2);
    p.w = w_bounds_raw(net, ctrl, eps, p.sector);
    const ControllerTransform tr = controller_transform(ctrl);
    const ThetaMinimum on = min_k_eigenvalue(net, ctrl, tr, eps, rho, true, opt);
    const ThetaMinimum off = min_k_eigenvalue(net, ctrl, tr, eps, rho, false, opt);
    p.c3 = on.value;
    p.c_dos = std::max(0.0, -off.value);
    p.theta_exact = on.exact && off.exact;
    p.theta_points = on.points;
    p.q_min = diag_min(ctrl.cost);
    p.q_max = diag_max(ctrl.cost);
    return p;
}

struct EpsilonChoice {
    Epsilons eps;
    double c = 0.0;
    std::size_t feasible = 0;
    std::size_t candidates = 0;
};

/// Grid eps1, eps2 in {10^k : k = -4, -4 + 1/8, ..., -0.5}; keeps pairs with
/// c1 > 0 and c3 > 0 and returns the one with the largest nominal rate c.
/// Ties go to the smaller eps2, then the smaller eps1.
inline EpsilonChoice select_epsilons(const PowerNetwork& net, const ControllerSetup& ctrl, double rho,
                                     const ThetaSearchOptions& opt = {}) {
    std::vector<double> grid;
    for (int j = 0; j <= 28; ++j) grid.push_back(std::pow(10.0, -4.0 + j / 8.0));

    const SectorBounds sb = sector_bounds(net, rho);
    const ControllerTransform tr = controller_transform(ctrl);
    const double rate_factor = std::min({sb.alpha1, 1.0, diag_min(ctrl.cost)});

    EpsilonChoice best;
    best.c = -1.0;
    for (double e2 : grid) {
        for (double e1 : grid) {
            ++best.candidates;
            const Epsilons eps{e1, e2};
            const WBounds w = w_bounds_raw(net, ctrl, eps, sb);
            if (!(w.c1 > 0.0)) continue;
            const double c3 = min_k_eigenvalue(net, ctrl, tr, eps, rho, true, opt).value;
            if (!(c3 > 0.0)) continue;
            ++best.feasible;
            const double c = c3 * rate_factor / w.c2;
            if (c > best.c * (1.0 + 1e-12)) {
                best.c = c;
                best.eps = eps;
            }
        }
    }
    if (best.feasible == 0) throw NumericError("no feasible epsilons on the search grid");
    return best;
}

inline Certificate build_certificate(const PowerNetwork& net, const ControllerSetup& ctrl, const Equilibrium& eq,
                                     double kappa, double tau, std::optional<Epsilons> eps = std::nullopt,
                                     const ThetaSearchOptions& opt = {}) {
    if (!eps) eps = select_epsilons(net, ctrl, eq.rho, opt).eps;
    const CertificateParts p = certificate_parts(net, ctrl, eq.rho, *eps, opt);
    if (!(p.w.c1 > 0.0)) throw NumericError("c1 nonpositive (c1 = " + std::to_string(p.w.c1) + "): epsilons too large");
    if (!(p.c3 > 0.0)) {
        throw NumericError("K not positive definite over the security region (min eigenvalue " +
                           std::to_string(p.c3) + "): epsilons too large");
    }
    return assemble_certificate(p, kappa, tau);
}

namespace detail {

inline nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace detail

inline nlohmann::json certificate_json(const Certificate& k) {
    using detail::finite_or_null;
    nlohmann::json j;
    j["eps1"] = k.eps1;
    j["eps2"] = k.eps2;
    j["alpha1"] = k.alpha1;
    j["alpha2"] = k.alpha2;
    j["beta1"] = k.beta1;
    j["beta2"] = k.beta2;
    j["gamma_ratio"] = k.gamma_ratio;
    j["c1"] = k.c1;
    j["c2"] = k.c2;
    j["c3"] = k.c3;
    j["c"] = k.c;
    j["c_dos"] = k.c_dos;
    j["d"] = k.d;
    j["alpha_nom"] = k.alpha_nom;
    j["beta_nom"] = k.beta_nom;
    j["alpha_dos"] = finite_or_null(k.alpha_dos);
    j["log_alpha_dos"] = k.log_alpha_dos;
    j["beta_dos"] = k.beta_dos;
    j["dos_stable"] = k.dos_stable;
    j["kappa"] = k.kappa;
    j["tau"] = finite_or_null(k.tau);
    j["rho"] = k.rho;
    j["mu"] = k.mu;
    j["rate_factor"] = k.rate_factor;
    j["growth_factor"] = k.growth_factor;
    j["theta_minimum"] = {{"method", k.theta_exact ? "exact vertex enumeration" : "sampled, not exact"},
                          {"exact", k.theta_exact},
                          {"points", k.theta_points}};
    return j;
}

/// Fills W, |z| and security-region membership on every sample.
inline void annotate_trajectory(Trajectory& traj, const PowerNetwork& net, const ControllerSetup& ctrl,
                                const Equilibrium& eq, const Epsilons& eps) {
    const auto ng = static_cast<Eigen::Index>(net.n_g);
    for (auto& s : traj.samples) {
        s.W = lyapunov_value(net, ctrl, eq, eps, s.delta, s.omega.head(ng), s.xi);
        s.z_norm = z_norm(eq, s.delta, s.omega, s.xi);
        s.in_theta = in_security_region(net, s.delta, eq.rho);
    }
}

}  // namespace swingcert
