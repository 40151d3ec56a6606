// Discretized weighted path space H^gamma on [0, T]: the gamma-norm, the
// variation-of-constants operator whose fixed points are the gamma-decaying
// orbits, Picard iteration, the first-order variational equation, and an
// empirical contraction probe.
#ifndef STABFOL_PATHSPACE_HPP
#define STABFOL_PATHSPACE_HPP

#include <ostream>

#include "stabfol/field.hpp"
#include "stabfol/splitting.hpp"

namespace stabfol {

// Uniformly sampled curve (z, v) : [0, T] -> R^p x R^q with decay rate gamma.
struct DiscretePath {
    double h = 0.0, T = 0.0, gamma = 0.0;
    MatrixXd zs; // p x (N+1), column per node
    MatrixXd vs; // q x (N+1)

    int nodes() const { return static_cast<int>(zs.cols()); }
    double time_at(int i) const { return h * i; }
};

inline double gamma_norm(const DiscretePath& path) {
    if (path.nodes() == 0) throw std::invalid_argument("gamma_norm: empty path");
    double best = 0.0;
    for (int i = 0; i < path.nodes(); ++i) {
        double w = std::exp(-path.gamma * path.time_at(i));
        best = std::max(best, std::max(path.zs.col(i).norm(), path.vs.col(i).norm()) * w);
    }
    return best;
}

inline double gamma_norm_difference(const DiscretePath& a, const DiscretePath& b) {
    double best = 0.0;
    for (int i = 0; i < a.nodes(); ++i) {
        double w = std::exp(-a.gamma * a.time_at(i));
        best = std::max(best, std::max((a.zs.col(i) - b.zs.col(i)).norm(),
                                       (a.vs.col(i) - b.vs.col(i)).norm()) * w);
    }
    return best;
}

inline void write_path_csv(const DiscretePath& path, std::ostream& os) {
    os << "t";
    for (int j = 0; j < path.zs.rows(); ++j) os << ",z" << j + 1;
    for (int j = 0; j < path.vs.rows(); ++j) os << ",v" << j + 1;
    os << "\n";
    os.precision(17);
    for (int i = 0; i < path.nodes(); ++i) {
        os << path.time_at(i);
        for (int j = 0; j < path.zs.rows(); ++j) os << "," << path.zs(j, i);
        for (int j = 0; j < path.vs.rows(); ++j) os << "," << path.vs(j, i);
        os << "\n";
    }
}

enum class GateMode { enforce, record };

struct ContextOptions {
    int grid_n = 4096;          // number of grid intervals
    double horizon = 0.0;       // 0 -> automatic from tail_tol
    double tail_tol = 1e-12;
    GateMode gate = GateMode::enforce;
    double gate_sample_radius = 0.0; // 0 -> truncation support (or 1.0)
    int gate_budget = 1000;
    std::uint64_t gate_seed = 0xA11CEull;
};

// Conjugated problem data: straightening isomorphism L, diagonal blocks of the
// linearization, grid, per-step exponential factors, and the admissibility
// margin of the smallness gate.
struct OperatorContext {
    FieldFamily field;
    Splitting split;
    SpectralAnalysis sa;
    int p = 0, q = 0;
    double gamma = 0.0, alpha = 0.0, beta = 0.0;
    MatrixXd L, Linv;   // L maps ambient to straightened (z, v) coordinates
    MatrixXd A1, A2;    // conjugated diagonal blocks
    MatrixXd E1, E2m;   // e^{h A1}, e^{-h A2}
    int grid_n = 0;
    double T = 0.0, h = 0.0, tail_tol = 0.0;
    double d_Agamma = 0.0;
    double gate_bound = 0.0, gate_measured = 0.0, gate_margin = 0.0;
    double growth_bound = 0.0; // B with sup_t |path(t)| <= B |path(0)|

    VectorXd ambient(const VectorXd& z, const VectorXd& v) const {
        VectorXd w(p + q);
        w << z, v;
        return Linv * w;
    }

    // (f, g)(z, v, mu): nonlinear part of the conjugated field.
    VectorXd nonlinearity(const VectorXd& z, const VectorXd& v, const VectorXd& mu) const {
        VectorXd val = L * field.eval(ambient(z, v), mu);
        val.head(p) -= A1 * z;
        val.tail(q) -= A2 * v;
        return val;
    }
};

inline OperatorContext make_context(const FieldFamily& f, const Splitting& split,
                                    const SpectralAnalysis& sa, double gamma,
                                    const ContextOptions& opt = {}) {
    if (!split.contains_gamma(gamma))
        throw std::domain_error("make_context: gamma outside I_A");
    if (opt.grid_n < 16) throw std::invalid_argument("make_context: grid_n must be >= 16");
    if (f.n() != sa.n) throw std::invalid_argument("make_context: field/matrix dimension mismatch");

    OperatorContext ctx;
    ctx.field = f;
    ctx.split = split;
    ctx.sa = sa;
    ctx.p = split.p;
    ctx.q = split.q;
    ctx.gamma = gamma;
    ctx.alpha = 0.5 * (gamma + split.M_AF);
    ctx.beta = 0.5 * (gamma + split.m_AG);
    ctx.tail_tol = opt.tail_tol;

    const int n = sa.n;
    MatrixXd B(n, n);
    B << split.F_basis, split.G_basis;
    ctx.Linv = B;
    ctx.L = B.partialPivLu().inverse();
    // |L| <= c(F,G) and |L^-1| <= sqrt(2), verified numerically.
    if (operator_norm(ctx.L) > split.c_FG * (1.0 + 1e-8) ||
        operator_norm(ctx.Linv) > std::sqrt(2.0) * (1.0 + 1e-8))
        throw NumericalError("make_context: conjugation norm bounds violated");

    MatrixXd At = ctx.L * sa.matrix * ctx.Linv;
    double off = std::max(At.topRightCorner(ctx.p, ctx.q).norm(),
                          At.bottomLeftCorner(ctx.q, ctx.p).norm());
    if (off > 1e-7 * std::max(1.0, sa.op_norm))
        throw NumericalError("make_context: conjugated matrix not block-diagonal");
    ctx.A1 = At.topLeftCorner(ctx.p, ctx.p);
    ctx.A2 = At.bottomRightCorner(ctx.q, ctx.q);

    ctx.d_Agamma = std::pow(std::min(1.0, spectrum_real_distance(sa, gamma)), n - 1);

    // Admissibility gate: sampled sup |d/dx X - A| against the closed-form bound.
    ctx.gate_bound = ctx.d_Agamma / (graph_gate_constant(n) * sa.K_A);
    double radius = opt.gate_sample_radius;
    if (radius <= 0.0)
        radius = f.kind() == FieldKind::truncated ? f.truncation_size() * std::sqrt(2.0) * 1.05
                                                  : 1.0;
    ctx.gate_measured = sampled_norms(f, radius, 1, opt.gate_budget, opt.gate_seed).M1_loc;
    ctx.gate_margin = ctx.gate_bound - ctx.gate_measured;
    if (opt.gate == GateMode::enforce && ctx.gate_margin < 0.0)
        throw GateViolation("make_context: smallness condition violated (measured M1 " +
                                std::to_string(ctx.gate_measured) + " > bound " +
                                std::to_string(ctx.gate_bound) + ")",
                            ctx.gate_margin);

    // Fixed-point growth control coefficient.
    SpectralAnalysis sa1 = analyze_matrix(ctx.A1);
    ctx.growth_bound = 2.0 * std::sqrt(2.0) * sa1.Kp_A /
                       std::pow(ctx.d_Agamma, double(ctx.p - 1) / double(n - 1));

    double T = opt.horizon;
    if (T <= 0.0)
        T = std::ceil(std::log(1.0 / opt.tail_tol) /
                      std::min(std::abs(gamma), ctx.beta - gamma));
    ctx.T = T;
    ctx.grid_n = opt.grid_n;
    ctx.h = T / opt.grid_n;
    ctx.E1 = matrix_exponential(ctx.A1, ctx.h);
    ctx.E2m = matrix_exponential(ctx.A2, -ctx.h);
    return ctx;
}

// One application of the operator: z-part e^{tA1} w + int_0^t e^{(t-s)A1} f ds,
// v-part -int_t^T e^{-(s-t)A2} g ds (the [T, inf) tail is dropped). Composite
// trapezoid with incremental exponential recurrences, O(N) per call.
inline DiscretePath apply_T(const OperatorContext& ctx, const DiscretePath& path,
                            const VectorXd& omega, const VectorXd& mu) {
    const int N = ctx.grid_n;
    const double h = ctx.h;
    MatrixXd fs(ctx.p, N + 1), gs(ctx.q, N + 1);
    for (int i = 0; i <= N; ++i) {
        VectorXd fg = ctx.nonlinearity(path.zs.col(i), path.vs.col(i), mu);
        fs.col(i) = fg.head(ctx.p);
        gs.col(i) = fg.tail(ctx.q);
    }

    DiscretePath out;
    out.h = h;
    out.T = ctx.T;
    out.gamma = ctx.gamma;
    out.zs.resize(ctx.p, N + 1);
    out.vs.resize(ctx.q, N + 1);

    VectorXd w = omega, S = VectorXd::Zero(ctx.p);
    out.zs.col(0) = omega;
    for (int i = 0; i < N; ++i) {
        S = ctx.E1 * (S + 0.5 * h * fs.col(i)) + 0.5 * h * fs.col(i + 1);
        w = ctx.E1 * w;
        out.zs.col(i + 1) = w + S;
    }
    VectorXd J = VectorXd::Zero(ctx.q);
    out.vs.col(N) = -J;
    for (int i = N - 1; i >= 0; --i) {
        J = ctx.E2m * (J + 0.5 * h * gs.col(i + 1)) + 0.5 * h * gs.col(i);
        out.vs.col(i) = -J;
    }
    return out;
}

// The affine seed Gamma(omega) = (e^{t A1} omega, 0): the exact fixed point for
// linear fields.
inline DiscretePath affine_seed(const OperatorContext& ctx, const VectorXd& omega) {
    DiscretePath path;
    path.h = ctx.h;
    path.T = ctx.T;
    path.gamma = ctx.gamma;
    path.zs.resize(ctx.p, ctx.grid_n + 1);
    path.vs = MatrixXd::Zero(ctx.q, ctx.grid_n + 1);
    VectorXd w = omega;
    path.zs.col(0) = w;
    for (int i = 1; i <= ctx.grid_n; ++i) {
        w = ctx.E1 * w;
        path.zs.col(i) = w;
    }
    return path;
}

struct FixedPointResult {
    DiscretePath path;
    int iterations = 0;
    double final_diff = 0.0;
    double growth_ratio = 0.0; // sup_t |path(t)| / |path(0)|
};

inline FixedPointResult solve_fixed_point(const OperatorContext& ctx, const VectorXd& omega,
                                          const VectorXd& mu, double tol = 1e-12,
                                          int max_iter = 200) {
    DiscretePath cur = affine_seed(ctx, omega);
    FixedPointResult res;
    for (int it = 1; it <= max_iter; ++it) {
        DiscretePath next = apply_T(ctx, cur, omega, mu);
        double diff = gamma_norm_difference(next, cur);
        cur = std::move(next);
        if (!std::isfinite(diff) || diff > 1e12)
            throw ConvergenceError("solve_fixed_point: iteration diverged");
        if (diff <= tol) {
            res.iterations = it;
            res.final_diff = diff;
            break;
        }
        if (it == max_iter)
            throw ConvergenceError("solve_fixed_point: no convergence within max_iter "
                                   "(grid/horizon too coarse or gate violated)");
    }
    res.path = std::move(cur);
    double at0 = std::hypot(res.path.zs.col(0).norm(), res.path.vs.col(0).norm());
    if (at0 > 0.0) {
        double sup = 0.0;
        for (int i = 0; i < res.path.nodes(); ++i)
            sup = std::max(sup, std::hypot(res.path.zs.col(i).norm(), res.path.vs.col(i).norm()));
        res.growth_ratio = sup / at0;
    }
    return res;
}

// Directional derivative of the fixed point: the linear fixed-point equation
// for D(z*, v*) . (dw, dmu), solved by the same Picard scheme with the field
// linearized along the base orbit (mu is the parameter of the base solve).
inline FixedPointResult solve_variational(const OperatorContext& ctx, const DiscretePath& base,
                                          const VectorXd& mu, const VectorXd& domega,
                                          const VectorXd& dmu, double tol = 1e-12,
                                          int max_iter = 200) {
    const int N = ctx.grid_n;
    const int p = ctx.p, q = ctx.q, n = p + q, s = ctx.field.s();

    // Precompute the linearization of (f, g) along the base path.
    std::vector<MatrixXd> Mzv(N + 1);
    MatrixXd At(n, n);
    At.setZero();
    At.topLeftCorner(p, p) = ctx.A1;
    At.bottomRightCorner(q, q) = ctx.A2;
    std::vector<MatrixXd> Mmu(N + 1);
    for (int i = 0; i <= N; ++i) {
        VectorXd x = ctx.ambient(base.zs.col(i), base.vs.col(i));
        MatrixXd Jfull = ctx.field.jacobian_full(x, mu);
        Mzv[i] = ctx.L * Jfull.leftCols(n) * ctx.Linv - At;
        Mmu[i] = s > 0 ? MatrixXd(ctx.L * Jfull.rightCols(s)) : MatrixXd(n, 0);
    }

    DiscretePath u = affine_seed(ctx, domega);
    for (int it = 1; it <= max_iter; ++it) {
        MatrixXd fs(p, N + 1), gs(q, N + 1);
        for (int i = 0; i <= N; ++i) {
            VectorXd ui(n);
            ui << u.zs.col(i), u.vs.col(i);
            VectorXd rhs = Mzv[i] * ui;
            if (s > 0) rhs += Mmu[i] * dmu;
            fs.col(i) = rhs.head(p);
            gs.col(i) = rhs.tail(q);
        }
        DiscretePath next = u;
        VectorXd w = domega, S = VectorXd::Zero(p);
        next.zs.col(0) = domega;
        for (int i = 0; i < N; ++i) {
            S = ctx.E1 * (S + 0.5 * ctx.h * fs.col(i)) + 0.5 * ctx.h * fs.col(i + 1);
            w = ctx.E1 * w;
            next.zs.col(i + 1) = w + S;
        }
        VectorXd J = VectorXd::Zero(q);
        next.vs.col(N) = -J;
        for (int i = N - 1; i >= 0; --i) {
            J = ctx.E2m * (J + 0.5 * ctx.h * gs.col(i + 1)) + 0.5 * ctx.h * gs.col(i);
            next.vs.col(i) = -J;
        }
        double diff = gamma_norm_difference(next, u);
        u = std::move(next);
        if (!std::isfinite(diff) || diff > 1e12)
            throw ConvergenceError("solve_variational: iteration diverged");
        if (diff <= tol) {
            FixedPointResult res;
            res.path = std::move(u);
            res.iterations = it;
            res.final_diff = diff;
            return res;
        }
    }
    throw ConvergenceError("solve_variational: no convergence within max_iter");
}

namespace detail {

// Random smooth path with gamma-norm exactly `rho`: low-frequency cosine mix
// under the e^{gamma t} envelope.
inline DiscretePath random_unit_path(const OperatorContext& ctx, double rho,
                                     std::mt19937_64& rng) {
    std::uniform_real_distribution<double> amp(-1.0, 1.0);
    std::uniform_real_distribution<double> freq(0.0, 3.0 * std::abs(ctx.gamma));
    std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
    DiscretePath path;
    path.h = ctx.h;
    path.T = ctx.T;
    path.gamma = ctx.gamma;
    path.zs.resize(ctx.p, ctx.grid_n + 1);
    path.vs.resize(ctx.q, ctx.grid_n + 1);
    for (int block = 0; block < 2; ++block) {
        MatrixXd& m = block == 0 ? path.zs : path.vs;
        for (int j = 0; j < m.rows(); ++j) {
            double a[3], w[3], ph[3];
            for (int t = 0; t < 3; ++t) { a[t] = amp(rng); w[t] = freq(rng); ph[t] = phase(rng); }
            for (int i = 0; i <= ctx.grid_n; ++i) {
                double t = ctx.h * i, v = 0.0;
                for (int c = 0; c < 3; ++c) v += a[c] * std::cos(w[c] * t + ph[c]);
                m(j, i) = std::exp(ctx.gamma * t) * v;
            }
        }
    }
    double nrm = gamma_norm(path);
    if (nrm < 1e-12) {
        path.zs.setZero();
        path.zs(0, 0) = rho;
        return path;
    }
    path.zs *= rho / nrm;
    path.vs *= rho / nrm;
    return path;
}

} // namespace detail

// Empirical Lipschitz constant of the operator: the max over random path pairs
// (gamma-norm <= 1) of |T(u1) - T(u2)|_gamma / |u1 - u2|_gamma. Both wide and
// derivative-scale separations are probed.
inline double estimate_contraction(const OperatorContext& ctx, int trials, std::uint64_t seed) {
    auto rng = make_rng(seed);
    const VectorXd omega = VectorXd::Zero(ctx.p);
    const VectorXd mu = VectorXd::Zero(ctx.field.s());
    std::uniform_real_distribution<double> rho_dist(0.1, 0.5);
    const double eps_ladder[3] = {1.0, 0.1, 0.01};
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) {
        DiscretePath u1 = detail::random_unit_path(ctx, rho_dist(rng), rng);
        DiscretePath w = detail::random_unit_path(ctx, rho_dist(rng), rng);
        double eps = eps_ladder[t % 3];
        DiscretePath u2 = u1;
        u2.zs += eps * w.zs;
        u2.vs += eps * w.vs;
        double denom = gamma_norm_difference(u1, u2);
        if (denom < 1e-10) continue;
        DiscretePath T1 = apply_T(ctx, u1, omega, mu);
        DiscretePath T2 = apply_T(ctx, u2, omega, mu);
        worst = std::max(worst, gamma_norm_difference(T1, T2) / denom);
    }
    return worst;
}

} // namespace stabfol

#endif
