#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>

namespace swingcert {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kHalfPi = kPi / 2.0;

/// Ascending eigenvalues of the symmetric part of `m`.
inline Vec sym_eigenvalues(const Mat& m) {
    if (m.size() == 0) return Vec{};
    const Mat s = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(s, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

inline double lambda_min(const Mat& m) { return sym_eigenvalues(m)(0); }

inline double lambda_max(const Mat& m) {
    const Vec ev = sym_eigenvalues(m);
    return ev(ev.size() - 1);
}

/// Second-smallest eigenvalue (algebraic connectivity for a Laplacian).
inline double lambda_second(const Mat& m) {
    const Vec ev = sym_eigenvalues(m);
    return ev.size() > 1 ? ev(1) : 0.0;
}

inline double diag_min(const Vec& d) { return d.size() ? d.minCoeff() : 0.0; }
inline double diag_max(const Vec& d) { return d.size() ? d.maxCoeff() : 0.0; }

/// Projector onto the complement of the all-ones vector, I - (1/n) 11^T.
inline Mat averaging_projector(Eigen::Index n) {
    return Mat::Identity(n, n) - Mat::Constant(n, n, 1.0 / static_cast<double>(n));
}

inline Vec project_mean_zero(const Vec& x) {
    if (x.size() == 0) return x;
    return x.array() - x.mean();
}

/// Symmetric part (A + A^T) / 2.
inline Mat symm(const Mat& a) { return 0.5 * (a + a.transpose()); }

/// x - sin(x), accurate for small |x| where direct evaluation cancels.
inline double x_minus_sin(double x) {
    if (std::abs(x) < 0.25) {
        // x^3/3! - x^5/5! + ... ; 8 terms reach full precision for |x| < 1/4.
        const double x2 = x * x;
        double term = x * x2 / 6.0;
        double sum = term;
        for (int k = 2; k <= 8; ++k) {
            term *= -x2 / static_cast<double>((2 * k) * (2 * k + 1));
            sum += term;
        }
        return sum;
    }
    return x - std::sin(x);
}

}  // namespace swingcert
