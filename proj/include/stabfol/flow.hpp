// Independent ODE oracle: adaptive embedded Dormand-Prince 5(4) integration
// with cubic Hermite dense output, decay-exponent fits, and omega-limit
// extraction on the zero subspace. Deliberately a different discretization and
// code path from the path-space quadrature.
#ifndef STABFOL_FLOW_HPP
#define STABFOL_FLOW_HPP

#include <vector>

#include "stabfol/field.hpp"

namespace stabfol {

struct Trajectory {
    std::vector<double> times;
    std::vector<VectorXd> states;
    std::vector<VectorXd> derivs; // field values at the nodes (dense output)
    double tolerance = 0.0;
    VectorXd mu;

    double t_end() const { return times.back(); }
    const VectorXd& final_state() const { return states.back(); }

    // Cubic Hermite interpolation between accepted steps.
    VectorXd sample(double t) const {
        if (t <= times.front()) return states.front();
        if (t >= times.back()) return states.back();
        std::size_t lo = 0, hi = times.size() - 1;
        while (hi - lo > 1) {
            std::size_t mid = (lo + hi) / 2;
            (times[mid] <= t ? lo : hi) = mid;
        }
        double h = times[lo + 1] - times[lo];
        double s = (t - times[lo]) / h;
        double s2 = s * s, s3 = s2 * s;
        return (2 * s3 - 3 * s2 + 1) * states[lo] + (s3 - 2 * s2 + s) * h * derivs[lo] +
               (-2 * s3 + 3 * s2) * states[lo + 1] + (s3 - s2) * h * derivs[lo + 1];
    }
};

// Explicit adaptive Dormand-Prince 5(4) with FSAL and PI-free standard step
// control. Deterministic.
inline Trajectory integrate(const FieldFamily& f, const VectorXd& x0, const VectorXd& mu,
                            double t_end, double tol) {
    if (!(t_end > 0.0)) throw std::invalid_argument("integrate: t_end must be positive");
    if (!(tol > 0.0)) throw std::invalid_argument("integrate: tol must be positive");

    // Autonomous fields: the stage times c_i are not needed.
    static const double a21 = 1.0 / 5;
    static const double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static const double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static const double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                        a54 = -212.0 / 729;
    static const double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                        a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static const double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                        b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static const double e1 = 35.0 / 384 - 5179.0 / 57600, e3 = 500.0 / 1113 - 7571.0 / 16695,
                        e4 = 125.0 / 192 - 393.0 / 640, e5 = -2187.0 / 6784 + 92097.0 / 339200,
                        e6 = 11.0 / 84 - 187.0 / 2100, e7 = -1.0 / 40;

    auto rhs = [&](const VectorXd& y) { return f.eval(y, mu); };

    Trajectory traj;
    traj.tolerance = tol;
    traj.mu = mu;

    double t = 0.0;
    VectorXd y = x0;
    VectorXd k1 = rhs(y);
    traj.times.push_back(t);
    traj.states.push_back(y);
    traj.derivs.push_back(k1);

    double h = 0.01 * std::max(1e-6, y.norm() / std::max(k1.norm(), 1e-8));
    h = std::min({h, t_end, 0.1});
    const double atol = 1e-2 * tol;

    while (t < t_end) {
        h = std::min(h, t_end - t);
        if (h < 1e-14 * std::max(1.0, t_end))
            throw ConvergenceError("integrate: step-size underflow (stiff blowup) at t = " +
                                   std::to_string(t));
        VectorXd k2 = rhs(y + h * (a21 * k1));
        VectorXd k3 = rhs(y + h * (a31 * k1 + a32 * k2));
        VectorXd k4 = rhs(y + h * (a41 * k1 + a42 * k2 + a43 * k3));
        VectorXd k5 = rhs(y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
        VectorXd k6 = rhs(y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
        VectorXd ynew = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
        VectorXd k7 = rhs(ynew); // FSAL
        VectorXd err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

        double err_norm = 0.0;
        for (int i = 0; i < y.size(); ++i) {
            double sc = atol + tol * std::max(std::abs(y[i]), std::abs(ynew[i]));
            err_norm += std::pow(err[i] / sc, 2);
        }
        err_norm = std::sqrt(err_norm / std::max<int>(1, static_cast<int>(y.size())));

        if (err_norm <= 1.0) {
            t += h;
            y = ynew;
            k1 = k7;
            traj.times.push_back(t);
            traj.states.push_back(y);
            traj.derivs.push_back(k1);
            if (!y.allFinite())
                throw ConvergenceError("integrate: state blew up at t = " + std::to_string(t));
        }
        double fac = 0.9 * std::pow(std::max(err_norm, 1e-10), -0.2);
        h *= std::clamp(fac, 0.2, 5.0);
    }
    return traj;
}

// Least-squares slope of ln |state(t)| over [t1, t2].
inline double decay_exponent(const Trajectory& traj, double t1, double t2, int samples = 200) {
    if (!(t2 > t1)) throw std::domain_error("decay_exponent: degenerate window");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int i = 0; i < samples; ++i) {
        double t = t1 + (t2 - t1) * i / (samples - 1);
        double nrm = traj.sample(t).norm();
        if (nrm <= 0.0) throw std::domain_error("decay_exponent: state vanishes on the window");
        double x = t, yv = std::log(nrm);
        sx += x; sy += yv; sxx += x * x; sxy += x * yv;
    }
    double denom = samples * sxx - sx * sx;
    return (samples * sxy - sx * sy) / denom;
}

struct OmegaLimit {
    VectorXd point;   // orthogonal projection of the final state onto G
    bool converged = false;
    double cauchy_gap = 0.0;
};

// Brute-force leaf oracle: integrate until t_end and read off the limit on the
// zero subspace G, with a Cauchy check between t_end/2 and t_end.
inline OmegaLimit omega_limit_on_G(const FieldFamily& Y, const MatrixXd& G_basis,
                                   const VectorXd& x0, double t_end, double tol) {
    Trajectory traj = integrate(Y, x0, VectorXd(0), t_end, tol);
    OmegaLimit lim;
    lim.cauchy_gap = (traj.final_state() - traj.sample(0.5 * t_end)).norm();
    lim.converged = lim.cauchy_gap <= 10.0 * tol;
    lim.point = G_basis * (G_basis.transpose() * traj.final_state());
    return lim;
}

} // namespace stabfol

#endif
