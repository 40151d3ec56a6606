// The stable-manifold graph map phi(z, mu) = v*(0): evaluation through the
// contraction solver with automatic (adapted-size) truncation, derivative jets,
// verification of the bound forms, and the flow-invariance residual.
#ifndef STABFOL_GRAPH_HPP
#define STABFOL_GRAPH_HPP

#include <cmath>
#include <map>
#include <memory>

#include "stabfol/flow.hpp"
#include "stabfol/pathspace.hpp"

namespace stabfol {

enum class TruncationMode { none, fixed, adapted };

struct GraphOptions {
    double gamma = std::numeric_limits<double>::quiet_NaN(); // NaN -> gap midpoint
    double cut = 0.0;
    TruncationMode truncation = TruncationMode::adapted;
    double xi = 0.0;      // truncation size for the fixed mode
    double xi_cap = 0.0;  // 0 -> min(1, r/sqrt(2))
    double r = 1.0;
    int grid_n = 8192;
    double horizon = 0.0; // 0 -> automatic
    double picard_tol = 1e-12;
    double tail_tol = 1e-12;
    int max_iter = 300;
    GateMode gate = GateMode::record;
    ConstantSet constants;
    int norm_budget = 1000;
    std::uint64_t seed = 1234;
};

// Holds the analyzed field, splitting, thresholds and a cache of operator
// contexts keyed by truncation size. Immutable from the caller's viewpoint.
class GraphContext {
public:
    GraphContext(FieldFamily field, GraphOptions opt)
        : field_(std::move(field)), opt_(std::move(opt)) {
        sa_ = analyze_matrix(field_.origin_diff());
        split_ = build_splitting(sa_, opt_.cut);
        gamma_ = std::isnan(opt_.gamma)
                     ? 0.5 * (split_.M_AF + std::min(0.0, split_.m_AG))
                     : opt_.gamma;
        if (!split_.contains_gamma(gamma_))
            throw std::domain_error("GraphContext: gamma outside I_A");
        norms_ = sampled_norms(field_, opt_.r, 2, opt_.norm_budget, opt_.seed);
        thresholds_ = smallness_thresholds(split_, sa_, gamma_, norms_.Mhat(2), opt_.r,
                                           opt_.constants);
        if (opt_.xi_cap <= 0.0) opt_.xi_cap = std::min(1.0, opt_.r / std::sqrt(2.0));
        if (opt_.truncation == TruncationMode::fixed) {
            if (!(opt_.xi > 0.0) || opt_.xi > std::min(1.0, opt_.r / std::sqrt(2.0)))
                throw std::domain_error("GraphContext: fixed truncation size out of range");
        }
    }

    const FieldFamily& field() const { return field_; }
    const SpectralAnalysis& spectral() const { return sa_; }
    const Splitting& splitting() const { return split_; }
    const Thresholds& thresholds() const { return thresholds_; }
    const NormTable& norms() const { return norms_; }
    double gamma() const { return gamma_; }
    const GraphOptions& options() const { return opt_; }

    GraphContext refined(int grid_n) const {
        GraphOptions o = opt_;
        o.grid_n = grid_n;
        return GraphContext(field_, o);
    }

    // Truncation size adapted to the evaluation point, paper style:
    // xi(z, mu) = 4 C K g ((1 + C0 / (2^{n-1} C1)) |z| + |mu|), capped.
    double adapted_xi(double z_norm, double mu_norm) const {
        const double C = opt_.constants.get("C");
        const double C0 = opt_.constants.get("C0");
        const double C1 = graph_gate_constant(sa_.n);
        double raw = 4.0 * C * sa_.K_A * split_.g_A *
                     ((1.0 + C0 / (std::pow(2.0, sa_.n - 1) * C1)) * z_norm + mu_norm);
        return std::min(raw, opt_.xi_cap);
    }

    // Operator context for the point; contexts are cached per quantized
    // truncation size (quantization rounds xi upward, which never shrinks the
    // region where the truncated field matches the raw one).
    const OperatorContext& context_for(double z_norm, double mu_norm) const {
        double key = 0.0;
        switch (opt_.truncation) {
            case TruncationMode::none: key = 0.0; break;
            case TruncationMode::fixed: key = opt_.xi; break;
            case TruncationMode::adapted: {
                double xi = adapted_xi(z_norm, mu_norm);
                if (xi <= 0.0) xi = std::min(thresholds_.xi_tilde, opt_.xi_cap);
                key = std::min(opt_.xi_cap,
                               std::pow(2.0, std::ceil(4.0 * std::log2(xi)) / 4.0));
                break;
            }
        }
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;

        ContextOptions copt;
        copt.grid_n = opt_.grid_n;
        copt.horizon = opt_.horizon;
        copt.tail_tol = opt_.tail_tol;
        copt.gate = opt_.gate;
        copt.gate_seed = opt_.seed;
        FieldFamily f = key > 0.0 ? truncate_family(field_, key, opt_.r) : field_;
        auto [pos, inserted] = cache_.emplace(key, make_context(f, split_, sa_, gamma_, copt));
        return pos->second;
    }

    double last_xi(double z_norm, double mu_norm) const {
        switch (opt_.truncation) {
            case TruncationMode::none: return 0.0;
            case TruncationMode::fixed: return opt_.xi;
            case TruncationMode::adapted: {
                double xi = adapted_xi(z_norm, mu_norm);
                if (xi <= 0.0) xi = std::min(thresholds_.xi_tilde, opt_.xi_cap);
                return std::min(opt_.xi_cap,
                                std::pow(2.0, std::ceil(4.0 * std::log2(xi)) / 4.0));
            }
        }
        return 0.0;
    }

private:
    FieldFamily field_;
    GraphOptions opt_;
    SpectralAnalysis sa_;
    Splitting split_;
    double gamma_ = 0.0;
    NormTable norms_;
    Thresholds thresholds_;
    mutable std::map<double, OperatorContext> cache_;
};

// phi(z, mu): the G-component of the stable-manifold point above z. Ambient
// vectors; z must lie in F.
inline VectorXd phi(const GraphContext& gctx, const VectorXd& z, const VectorXd& mu) {
    const OperatorContext& ctx = gctx.context_for(z.norm(), mu.norm());
    VectorXd zc = ctx.L * z;
    if (zc.tail(ctx.q).norm() > 1e-8 * std::max(1.0, z.norm()))
        throw std::invalid_argument("phi: z does not lie in F");
    VectorXd omega = zc.head(ctx.p);
    if (omega.norm() == 0.0) return VectorXd::Zero(gctx.field().n()); // phi(0, mu) = 0
    auto res = solve_fixed_point(ctx, omega, mu, gctx.options().picard_tol,
                                 gctx.options().max_iter);
    VectorXd w = VectorXd::Zero(ctx.p + ctx.q);
    w.tail(ctx.q) = res.path.vs.col(0);
    return ctx.Linv * w;
}

struct PhiJet {
    VectorXd value;  // ambient in G
    MatrixXd d_z;    // n x p, ambient G-vector per orthonormal F direction
    MatrixXd d_mu;   // n x s
    // Order-2/3 entries by central differences of the order-1 jet; directions
    // indexed over the F basis followed by the parameter basis.
    std::vector<MatrixXd> d2;              // d2[a].col(b) = D^2 phi . (e_a, e_b)
    std::vector<std::vector<MatrixXd>> d3; // d3[a][b].col(c)
};

namespace detail {

inline std::pair<MatrixXd, MatrixXd> phi_first_jet(const GraphContext& gctx,
                                                   const OperatorContext& ctx,
                                                   const VectorXd& z, const VectorXd& mu) {
    const int n = gctx.field().n(), s = gctx.field().s();
    VectorXd omega = (ctx.L * z).head(ctx.p);
    auto base = solve_fixed_point(ctx, omega, mu, gctx.options().picard_tol,
                                  gctx.options().max_iter);
    MatrixXd dz(n, ctx.p), dmu(n, s);
    for (int a = 0; a < ctx.p; ++a) {
        VectorXd dir_f = gctx.splitting().F_basis.col(a);
        VectorXd domega = (ctx.L * dir_f).head(ctx.p);
        auto var = solve_variational(ctx, base.path, mu, domega, VectorXd::Zero(s),
                                     gctx.options().picard_tol, gctx.options().max_iter);
        VectorXd w = VectorXd::Zero(ctx.p + ctx.q);
        w.tail(ctx.q) = var.path.vs.col(0);
        dz.col(a) = ctx.Linv * w;
    }
    for (int b = 0; b < s; ++b) {
        VectorXd dmu_dir = VectorXd::Unit(s, b);
        auto var = solve_variational(ctx, base.path, mu, VectorXd::Zero(ctx.p), dmu_dir,
                                     gctx.options().picard_tol, gctx.options().max_iter);
        VectorXd w = VectorXd::Zero(ctx.p + ctx.q);
        w.tail(ctx.q) = var.path.vs.col(0);
        dmu.col(b) = ctx.Linv * w;
    }
    return {dz, dmu};
}

} // namespace detail

// Derivative tensors of phi up to k_max <= 3. Order 1 comes from the
// variational equation; orders 2 and 3 from central differences of the order-1
// jet with step scaled to |z| + |mu| + 0.01, all stencil points sharing one
// operator context.
inline PhiJet phi_jet(const GraphContext& gctx, const VectorXd& z, const VectorXd& mu,
                      int k_max) {
    if (k_max < 1 || k_max > 3) throw std::invalid_argument("phi_jet: k_max must be 1..3");
    const int s = gctx.field().s();
    const int p = gctx.splitting().p;
    const double step = 1e-3 * (z.norm() + mu.norm() + 0.01);
    if (step < 1e-9) throw NumericalError("phi_jet: finite-difference step underflow");

    // One shared context sized for the widest stencil point.
    const OperatorContext& ctx =
        gctx.context_for(z.norm() + 2 * step, mu.norm() + 2 * step);

    PhiJet jet;
    {
        VectorXd omega = (ctx.L * z).head(ctx.p);
        auto res = solve_fixed_point(ctx, omega, mu, gctx.options().picard_tol,
                                     gctx.options().max_iter);
        VectorXd w = VectorXd::Zero(ctx.p + ctx.q);
        w.tail(ctx.q) = res.path.vs.col(0);
        jet.value = ctx.Linv * w;
    }
    auto [dz, dmu] = detail::phi_first_jet(gctx, ctx, z, mu);
    jet.d_z = dz;
    jet.d_mu = dmu;
    if (k_max == 1) return jet;

    const int dims = p + s;
    auto offset_point = [&](int dir, double sign, VectorXd& z_out, VectorXd& mu_out) {
        z_out = z;
        mu_out = mu;
        if (dir < p)
            z_out += sign * step * gctx.splitting().F_basis.col(dir);
        else
            mu_out[dir - p] += sign * step;
    };
    auto first_jet_at = [&](const VectorXd& zz, const VectorXd& mm) {
        auto [a, b] = detail::phi_first_jet(gctx, ctx, zz, mm);
        MatrixXd joined(a.rows(), dims);
        joined << a, b;
        return joined;
    };

    std::vector<MatrixXd> jp(dims), jm(dims);
    for (int d = 0; d < dims; ++d) {
        VectorXd zz, mm;
        offset_point(d, +1.0, zz, mm);
        jp[d] = first_jet_at(zz, mm);
        offset_point(d, -1.0, zz, mm);
        jm[d] = first_jet_at(zz, mm);
    }
    jet.d2.resize(dims);
    for (int a = 0; a < dims; ++a) {
        jet.d2[a].resize(jet.value.size(), dims);
        for (int b = 0; b < dims; ++b)
            jet.d2[a].col(b) = (jp[b].col(a) - jm[b].col(a)) / (2.0 * step);
    }
    if (k_max == 2) return jet;

    // Third order: second differences of the order-1 jet.
    auto shift = [&](VectorXd& zz, VectorXd& mm, int dir, double sign) {
        if (dir < p)
            zz += sign * step * gctx.splitting().F_basis.col(dir);
        else
            mm[dir - p] += sign * step;
    };
    MatrixXd center = first_jet_at(z, mu);
    jet.d3.assign(dims, std::vector<MatrixXd>(dims));
    for (int b = 0; b < dims; ++b) {
        for (int c = b; c < dims; ++c) {
            MatrixXd H;
            if (b == c) {
                H = (jp[b] - 2.0 * center + jm[b]) / (step * step);
            } else {
                MatrixXd quad[4];
                const double signs[4][2] = {{1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
                for (int k = 0; k < 4; ++k) {
                    VectorXd zz = z, mm = mu;
                    shift(zz, mm, b, signs[k][0]);
                    shift(zz, mm, c, signs[k][1]);
                    quad[k] = first_jet_at(zz, mm);
                }
                H = (quad[0] - quad[1] - quad[2] + quad[3]) / (4.0 * step * step);
            }
            jet.d3[b][c] = H;
            jet.d3[c][b] = H;
        }
    }
    return jet;
}

struct PhiBoundRow {
    double z_norm = 0.0, mu_norm = 0.0;
    double measured_k0 = 0.0, bound_k0 = 0.0, ratio_k0 = 0.0;
    double measured_dz = 0.0, bound_dz = 0.0, ratio_dz = 0.0;
    double measured_dmu = 0.0, bound_dmu = 0.0, ratio_dmu = 0.0;
    double measured_k2 = 0.0, bound_k2 = 0.0, ratio_k2 = 0.0;
};

struct PhiBoundReport {
    std::vector<PhiBoundRow> rows;
    double max_ratio_k0 = 0.0, max_ratio_dz = 0.0, max_ratio_dmu = 0.0, max_ratio_k2 = 0.0;
};

// Ratios of measured |phi|, |D phi|, |D^2 phi| against the theorem's bound
// forms with unit implicit constants. Only boundedness and stability of the
// ratios is a claim; the max ratio is the empirical constant.
inline PhiBoundReport check_phi_bounds(const GraphContext& gctx,
                                       const std::vector<std::pair<VectorXd, VectorXd>>& grid) {
    PhiBoundReport rep;
    const auto& sp = gctx.splitting();
    const auto& sa = gctx.spectral();
    const double Mhat2 = gctx.norms().Mhat(2);
    const double r = gctx.options().r;
    const ConstantSet unit; // ratios are always against C'_k = 1
    for (const auto& [z, mu] : grid) {
        PhiJet jet = phi_jet(gctx, z, mu, 2);
        PhiBoundRow row;
        row.z_norm = z.norm();
        row.mu_norm = mu.norm();

        row.measured_k0 = jet.value.norm();
        row.bound_k0 = phi_bound_rhs(sp, sa, Mhat2, Mhat2, row.z_norm, row.mu_norm, 0,
                                     PhiDeriv::value, r, unit);
        row.measured_dz = operator_norm(jet.d_z);
        row.bound_dz = phi_bound_rhs(sp, sa, Mhat2, Mhat2, row.z_norm, row.mu_norm, 1,
                                     PhiDeriv::d_z, r, unit);
        if (jet.d_mu.cols() > 0) {
            row.measured_dmu = operator_norm(jet.d_mu);
            row.bound_dmu = phi_bound_rhs(sp, sa, Mhat2, Mhat2, row.z_norm, row.mu_norm, 1,
                                          PhiDeriv::d_mu, r, unit);
        }
        for (const auto& block : jet.d2)
            for (int b = 0; b < block.cols(); ++b)
                row.measured_k2 = std::max(row.measured_k2, block.col(b).norm());
        double Mhat3 = Mhat2;
        if (gctx.norms().Mk_loc.count(3)) Mhat3 = gctx.norms().Mhat(3);
        row.bound_k2 = phi_bound_rhs(sp, sa, Mhat2, Mhat3, row.z_norm, row.mu_norm, 2,
                                     PhiDeriv::higher, r, unit);

        auto ratio = [](double m, double b) { return m == 0.0 ? 0.0 : m / b; };
        row.ratio_k0 = ratio(row.measured_k0, row.bound_k0);
        row.ratio_dz = ratio(row.measured_dz, row.bound_dz);
        row.ratio_dmu = ratio(row.measured_dmu, row.bound_dmu);
        row.ratio_k2 = ratio(row.measured_k2, row.bound_k2);
        rep.max_ratio_k0 = std::max(rep.max_ratio_k0, row.ratio_k0);
        rep.max_ratio_dz = std::max(rep.max_ratio_dz, row.ratio_dz);
        rep.max_ratio_dmu = std::max(rep.max_ratio_dmu, row.ratio_dmu);
        rep.max_ratio_k2 = std::max(rep.max_ratio_k2, row.ratio_k2);
        rep.rows.push_back(row);
    }
    return rep;
}

// Flow-invariance defect of the graph: integrate the raw field from
// (z, phi(z, mu)) and measure |v(t) - phi(z(t), mu)| at sampled times. The
// integrator is the independent oracle; the graph side goes through the
// contraction solver.
inline double graph_invariance_residual(const GraphContext& gctx, const VectorXd& z,
                                        const VectorXd& mu, double horizon, double tol,
                                        int samples = 25) {
    const OperatorContext& ctx = gctx.context_for(z.norm(), mu.norm());
    VectorXd start = z + phi(gctx, z, mu);
    Trajectory traj = integrate(gctx.field(), start, mu, horizon, tol);
    double worst = 0.0;
    for (int i = 0; i < samples; ++i) {
        double t = horizon * (i + 1) / samples;
        VectorXd y = traj.sample(t);
        VectorXd c = ctx.L * y;
        VectorXd zc = VectorXd::Zero(ctx.p + ctx.q), vc = VectorXd::Zero(ctx.p + ctx.q);
        zc.head(ctx.p) = c.head(ctx.p);
        vc.tail(ctx.q) = c.tail(ctx.q);
        VectorXd z_t = ctx.Linv * zc, v_t = ctx.Linv * vc;
        worst = std::max(worst, (v_t - phi(gctx, z_t, mu)).norm());
    }
    return worst;
}

} // namespace stabfol

#endif
