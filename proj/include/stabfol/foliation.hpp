// Straightening charts for the stable foliation of a field vanishing on a
// subspace G: the forward chart maps each stable leaf onto its affine slice
// mu + F, built from the graph map of the translated family and inverted by
// Newton iteration.
#ifndef STABFOL_FOLIATION_HPP
#define STABFOL_FOLIATION_HPP

#include "stabfol/graph.hpp"

namespace stabfol {

struct ChartOptions {
    double r = 1.0;
    int grid_n = 8192;
    double picard_tol = 1e-12;
    double tail_tol = 1e-12;
    double newton_tol = 1e-12;
    int newton_max_iter = 50;
    TruncationMode truncation = TruncationMode::adapted;
    double xi = 0.0; // for the fixed mode
    GateMode gate = GateMode::record;
    ConstantSet constants;
    int norm_budget = 1000;
    std::uint64_t seed = 1234;
};

// ksi_{mu0}: local coordinate system on the ball B(mu0, R) sending each stable
// leaf S(mu, Y) onto the affine slice mu + F_{mu0}.
class Chart {
public:
    Chart(FieldFamily Y, MatrixXd G_basis, VectorXd mu0, ChartOptions opt)
        : Y_(std::move(Y)), mu0_(std::move(mu0)), opt_(std::move(opt)) {
        const int n = Y_.n();
        if (Y_.s() != 0) throw std::invalid_argument("Chart: Y must be parameter-free");
        Eigen::HouseholderQR<MatrixXd> qr(G_basis);
        QG_ = qr.householderQ() * MatrixXd::Identity(n, G_basis.cols());

        MatrixXd A = Y_.jacobian_x(mu0_, VectorXd(0));
        if (operator_norm(A * QG_) > 1e-8 * std::max(1.0, operator_norm(A)))
            throw NumericalError("Chart: G is not annihilated by DY(mu0) (G not invariant)");

        // The translated family X(x, mu) = Y(mu0 + x + QG mu); its construction
        // verifies that Y vanishes on mu0 + G by sampling.
        FieldFamily X = FieldFamily::translated(Y_, QG_, mu0_);

        GraphOptions gopt;
        gopt.cut = 0.0;
        gopt.truncation = opt_.truncation;
        gopt.xi = opt_.xi;
        gopt.r = opt_.r;
        gopt.grid_n = opt_.grid_n;
        gopt.picard_tol = opt_.picard_tol;
        gopt.tail_tol = opt_.tail_tol;
        gopt.gate = opt_.gate;
        gopt.constants = opt_.constants;
        gopt.norm_budget = opt_.norm_budget;
        gopt.seed = opt_.seed;
        try {
            GraphContext probe(X, gopt); // gamma defaults to the gap midpoint
            gamma_ = -0.5 * std::abs(probe.splitting().M_AF);
            gopt.gamma = gamma_;
            gctx_ = std::make_shared<GraphContext>(std::move(X), gopt);
        } catch (const std::invalid_argument& e) {
            throw NumericalError(std::string("Chart: splitting failure: ") + e.what());
        }

        const Splitting& sp = gctx_->splitting();
        if (!(sp.M_AF < 0.0))
            throw NumericalError("Chart: stable block not contracting (M(A|F) >= 0)");
        // The center side of the splitting must be exactly G.
        if (sp.q != QG_.cols() ||
            operator_norm(sp.G_basis - QG_ * (QG_.transpose() * sp.G_basis)) > 1e-8)
            throw NumericalError("Chart: center subspace of DY(mu0) differs from G");
        QF_ = sp.F_basis;
        p_ = sp.p;
        q_ = sp.q;

        Lmat_.resize(n, n);
        Lmat_ << QF_, QG_;
        Lmat_inv_ = Lmat_.partialPivLu().inverse();

        lambda_ = std::pow(std::min(1.0, std::abs(sp.M_AF)), n - 1);

        // Chart radius from the Y-norms over the r-ball around mu0.
        FieldFamily Yc = FieldFamily::translated(Y_, MatrixXd(n, 0), mu0_);
        NormTable ynorm = sampled_norms(Yc, opt_.r, 2, opt_.norm_budget, opt_.seed);
        const SpectralAnalysis& sa = gctx_->spectral();
        double c2 = sp.c_FG * sp.c_FG;
        double C3 = opt_.constants.get("C3");
        R_ = lambda_ / (C3 * c2 * sa.K_A) *
             std::min(lambda_ / (sa.K_A * ynorm.Mhat(2)), opt_.r);
        y_norms_ = ynorm;
    }

    const FieldFamily& base_field() const { return Y_; }
    const GraphContext& graph() const { return *gctx_; }
    const VectorXd& mu0() const { return mu0_; }
    const MatrixXd& F_basis() const { return QF_; }
    const MatrixXd& G_basis() const { return QG_; }
    double radius() const { return R_; }
    double lambda() const { return lambda_; }
    double gamma() const { return gamma_; }
    const NormTable& field_norms() const { return y_norms_; }
    const ChartOptions& options() const { return opt_; }

    // phi in chart coordinates: z, mu are (F, G)-coordinate vectors.
    VectorXd phi_coords(const VectorXd& z_coord, const VectorXd& mu_coord) const {
        VectorXd val = phi(*gctx_, QF_ * z_coord, mu_coord);
        return QG_.transpose() * val;
    }

    // Forward map psi(z, mu) = (z, mu + phi(z, mu)) in coordinates.
    VectorXd psi_coords(const VectorXd& z_coord, const VectorXd& mu_coord) const {
        VectorXd out(p_ + q_);
        out.head(p_) = z_coord;
        out.tail(q_) = mu_coord + phi_coords(z_coord, mu_coord);
        return out;
    }

    // The linear projection along G onto F_{mu0} (ambient to ambient).
    VectorXd project_along_G(const VectorXd& y) const {
        VectorXd c = Lmat_inv_ * y;
        return QF_ * c.head(p_);
    }

private:
    FieldFamily Y_;
    VectorXd mu0_;
    ChartOptions opt_;
    MatrixXd QF_, QG_, Lmat_, Lmat_inv_;
    std::shared_ptr<GraphContext> gctx_;
    int p_ = 0, q_ = 0;
    double lambda_ = 1.0, R_ = 0.0, gamma_ = 0.0;
    NormTable y_norms_;

    friend VectorXd eval_chart(const Chart&, const VectorXd&, bool);
};

// direction forward = the chart itself (leaf -> affine slice); inverse = its
// inverse (slice -> leaf). Forward solves psi(z, mu) = coords(point) for mu by
// Newton iteration seeded at the identity.
inline VectorXd eval_chart(const Chart& chart, const VectorXd& point, bool forward) {
    VectorXd c = chart.Lmat_inv_ * (point - chart.mu0());
    VectorXd z_c = c.head(chart.p_), mu_c = c.tail(chart.q_);
    if (!forward) {
        VectorXd mu_img = mu_c + chart.phi_coords(z_c, mu_c);
        return chart.mu0() + chart.QF_ * z_c + chart.QG_ * mu_img;
    }
    // Newton on r(mu) = mu + phi(z_c, mu) - mu_c.
    VectorXd mu = mu_c;
    double resid = std::numeric_limits<double>::infinity();
    for (int it = 0; it < chart.options().newton_max_iter; ++it) {
        VectorXd r = mu + chart.phi_coords(z_c, mu) - mu_c;
        resid = r.norm();
        if (resid <= chart.options().newton_tol)
            return chart.mu0() + chart.QF_ * z_c + chart.QG_ * mu;
        PhiJet jet = phi_jet(chart.graph(), chart.QF_ * z_c, mu, 1);
        MatrixXd J = MatrixXd::Identity(chart.q_, chart.q_) +
                     chart.QG_.transpose() * jet.d_mu;
        VectorXd step = J.partialPivLu().solve(r);
        if (!step.allFinite() || step.norm() > 1e6)
            break;
        mu -= step;
    }
    throw ConvergenceError("eval_chart: Newton did not converge (point outside the "
                           "invertibility ball), last residual " + std::to_string(resid));
}

struct StraighteningReport {
    struct Row {
        VectorXd mu_coord;
        double limit_residual = 0.0; // |flow(t_end) - leaf base|
        double decay_slope = 0.0;    // fitted exponent of the approach
    };
    std::vector<Row> rows;
    double max_limit_residual = 0.0;
    double max_decay_slope = 0.0;      // most pessimistic fitted slope
    double min_slice_separation = 0.0; // disjointness of distinct leaves
};

// For each mu-slice: map points of the affine slice through the inverse chart,
// integrate the flow, and check convergence to the leaf base point, the decay
// rate against gamma, and pairwise disjointness of the mapped slices.
inline StraighteningReport straightening_residual(const Chart& chart,
                                                  const std::vector<VectorXd>& mu_coords,
                                                  double t_end, double integrator_tol,
                                                  int points_per_slice = 5) {
    StraighteningReport rep;
    rep.min_slice_separation = std::numeric_limits<double>::infinity();
    const double rho = 0.9 * chart.radius();
    std::vector<std::vector<VectorXd>> mapped(mu_coords.size());

    for (std::size_t m = 0; m < mu_coords.size(); ++m) {
        const VectorXd& mu = mu_coords[m];
        VectorXd target = chart.mu0() + chart.G_basis() * mu;
        StraighteningReport::Row row;
        row.mu_coord = mu;
        double worst_slope = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < points_per_slice; ++k) {
            double frac = (k + 1.0) / points_per_slice;
            for (int a = 0; a < chart.F_basis().cols(); ++a) {
                VectorXd w = target + chart.F_basis().col(a) * (frac * rho) * (k % 2 ? -1.0 : 1.0);
                if ((w - chart.mu0()).norm() > chart.radius()) continue;
                VectorXd y = eval_chart(chart, w, false);
                mapped[m].push_back(y);
                Trajectory traj = integrate(chart.base_field(), y, VectorXd(0), t_end,
                                            integrator_tol);
                row.limit_residual = std::max(row.limit_residual,
                                              (traj.final_state() - target).norm());
                // Fit the approach rate on the early window, before the
                // integrator noise floor.
                Trajectory shifted = traj;
                for (auto& st : shifted.states) st -= target;
                double slope = decay_exponent(shifted, 0.05 * t_end, 0.5 * t_end);
                worst_slope = std::max(worst_slope, slope);
            }
        }
        row.decay_slope = worst_slope;
        rep.max_limit_residual = std::max(rep.max_limit_residual, row.limit_residual);
        rep.max_decay_slope = std::max(rep.max_decay_slope, worst_slope);
        rep.rows.push_back(std::move(row));
    }
    for (std::size_t a = 0; a < mapped.size(); ++a)
        for (std::size_t b = a + 1; b < mapped.size(); ++b)
            for (const auto& ya : mapped[a])
                for (const auto& yb : mapped[b])
                    rep.min_slice_separation = std::min(rep.min_slice_separation,
                                                        (ya - yb).norm());
    return rep;
}

// (ksi_0 - ksi_1)(point) - (pi_0 - pi_1)(point): zero when the two charts agree
// modulo the projection direction.
inline VectorXd overlap_defect(const Chart& chart0, const Chart& chart1, const VectorXd& point) {
    if ((point - chart0.mu0()).norm() > chart0.radius() ||
        (point - chart1.mu0()).norm() > chart1.radius())
        throw std::domain_error("overlap_defect: point outside a chart ball");
    VectorXd lhs = eval_chart(chart0, point, true) - eval_chart(chart1, point, true);
    VectorXd rhs = chart0.project_along_G(point) - chart1.project_along_G(point);
    return lhs - rhs;
}

} // namespace stabfol

#endif
