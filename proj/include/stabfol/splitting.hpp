// Partially hyperbolic splittings F + G, the admissible decay interval I_A,
// the spectral gap g(A), and the closed-form thresholds and graph bounds of
// the quantitative stable manifold theorem.
#ifndef STABFOL_SPLITTING_HPP
#define STABFOL_SPLITTING_HPP

#include <map>
#include <string>
#include <vector>

#include "stabfol/spectral.hpp"

namespace stabfol {

// Implicit constants of the theorem statements. Every name defaults to 1;
// reports surface each value actually used.
struct ConstantSet {
    std::map<std::string, double> overrides;

    double get(const std::string& name) const {
        auto it = overrides.find(name);
        if (it == overrides.end()) return 1.0;
        if (!(it->second > 0.0))
            throw std::invalid_argument("constant override must be positive: " + name);
        return it->second;
    }
};

// The closed-form constant of the graph-structure admissibility condition,
// C1 = 2^{2n} (n-1)^{n-1} sqrt(2).
inline double graph_gate_constant(int n) {
    return std::pow(2.0, 2 * n) * dim_power(n) * std::sqrt(2.0);
}

struct Splitting {
    MatrixXd F_basis, G_basis; // orthonormal
    int p = 0, q = 0;
    double M_AF = 0.0; // max Re spectrum on F
    double m_AG = 0.0; // min Re spectrum on G
    double I_lo = 0.0, I_hi = 0.0; // I_A = (M_AF, min(0, m_AG))
    double g_A = 1.0;
    double c_FG = 1.0;

    bool contains_gamma(double gamma) const { return gamma > I_lo && gamma < I_hi; }
};

// Split along the real-part cut: F collects the generalized eigenspaces with
// Re(lambda) < cut, G the rest.
inline Splitting build_splitting(const SpectralAnalysis& sa, double cut = 0.0) {
    const int n = sa.n;
    std::vector<int> f_clusters, g_clusters;
    for (int c = 0; c < sa.cluster_count(); ++c) {
        bool below = true, above = true;
        for (int idx : sa.cluster_members[c]) {
            (sa.eigenvalues[idx].real() < cut ? above : below) = false;
        }
        if (below)
            f_clusters.push_back(c);
        else if (above)
            g_clusters.push_back(c);
        else
            throw std::invalid_argument("build_splitting: cut passes through an eigenvalue cluster");
    }
    if (f_clusters.empty())
        throw std::invalid_argument("build_splitting: empty stable side (no eigenvalue below cut)");
    if (g_clusters.empty())
        throw std::invalid_argument("build_splitting: empty center-unstable side");

    auto stack_orthonormal = [&](const std::vector<int>& ids) {
        int dim = 0;
        for (int c : ids) dim += static_cast<int>(sa.gen_eigenspaces[c].cols());
        MatrixXd B(n, dim);
        int col = 0;
        for (int c : ids) {
            B.middleCols(col, sa.gen_eigenspaces[c].cols()) = sa.gen_eigenspaces[c];
            col += static_cast<int>(sa.gen_eigenspaces[c].cols());
        }
        Eigen::HouseholderQR<MatrixXd> qr(B);
        return MatrixXd(qr.householderQ() * MatrixXd::Identity(n, dim));
    };

    Splitting sp;
    sp.F_basis = stack_orthonormal(f_clusters);
    sp.G_basis = stack_orthonormal(g_clusters);
    sp.p = static_cast<int>(sp.F_basis.cols());
    sp.q = static_cast<int>(sp.G_basis.cols());

    sp.M_AF = -std::numeric_limits<double>::infinity();
    sp.m_AG = std::numeric_limits<double>::infinity();
    for (int c : f_clusters)
        for (int idx : sa.cluster_members[c]) sp.M_AF = std::max(sp.M_AF, sa.eigenvalues[idx].real());
    for (int c : g_clusters)
        for (int idx : sa.cluster_members[c]) sp.m_AG = std::min(sp.m_AG, sa.eigenvalues[idx].real());

    sp.I_lo = sp.M_AF;
    sp.I_hi = std::min(0.0, sp.m_AG);
    if (!(sp.M_AF < sp.I_hi))
        throw std::invalid_argument("build_splitting: not partially hyperbolic (M(A|F) >= min(0, m(A|G)))");
    sp.g_A = std::pow(std::min(1.0, sp.I_hi - sp.M_AF), -(n - 1));
    sp.c_FG = principal_angle(sp.F_basis, sp.G_basis).c;

    // Invariance residual.
    const MatrixXd& A = sa.matrix;
    double scale = std::max(1e-14, sa.op_norm);
    for (const MatrixXd* Q : {&sp.F_basis, &sp.G_basis}) {
        MatrixXd AQ = A * (*Q);
        MatrixXd resid = AQ - (*Q) * (Q->transpose() * AQ);
        if (operator_norm(resid) > 1e-8 * scale)
            throw NumericalError("build_splitting: subspace not A-invariant within tolerance");
    }
    return sp;
}

struct Thresholds {
    double gamma = 0.0;
    double d_Agamma = 0.0;      // min(1, dist(gamma, Re Sp A))^{n-1}
    double hyp3_bound = 0.0;    // global first-derivative smallness bound
    double prop_eps1_bound = 0.0; // admissibility gate for the graph structure
    double xi_gamma = 0.0;      // truncation size admissible for this gamma
    double gamma_tilde = 0.0;   // gap midpoint, maximizer of d(A, .)
    double xi_tilde = 0.0;      // canonical truncation size
    double eta_tilde = 0.0;     // local-manifold neighbourhood size
    double delta_tilde = 0.0;   // validity radius of the graph bounds
    double R_mu0 = 0.0;         // straightening chart radius
    double lambda_mu0 = 1.0;    // min(1, |M(A|F)|)^{n-1}
    std::map<std::string, double> constants_used;

    // Which named constants enter each derived value.
    static const std::map<std::string, std::vector<std::string>>& constant_map() {
        static const std::map<std::string, std::vector<std::string>> m = {
            {"hyp3_bound", {}},
            {"prop_eps1_bound", {}},
            {"xi_gamma", {"c1"}},
            {"xi_tilde", {"c1"}},
            {"eta_tilde", {"C2"}},
            {"delta_tilde", {"C2", "C2p"}},
            {"R_mu0", {"C3"}},
        };
        return m;
    }
};

// Every closed-form threshold of the local theorem at a given admissible gamma.
// M2_loc is the max(1, sup of derivative orders >= 2) estimate over the r-ball.
inline Thresholds smallness_thresholds(const Splitting& sp, const SpectralAnalysis& sa,
                                       double gamma, double M2_loc, double r,
                                       const ConstantSet& constants = {}) {
    if (!sp.contains_gamma(gamma))
        throw std::domain_error("smallness_thresholds: gamma outside I_A");
    if (!(r > 0.0)) throw std::invalid_argument("smallness_thresholds: r must be positive");
    const int n = sa.n;
    const double M2 = std::max(1.0, M2_loc);
    const double C1 = graph_gate_constant(n);
    const double c1 = constants.get("c1");
    const double C2 = constants.get("C2");
    const double C2p = constants.get("C2p");
    const double C3 = constants.get("C3");

    Thresholds th;
    th.gamma = gamma;
    th.d_Agamma = std::pow(std::min(1.0, spectrum_real_distance(sa, gamma)), n - 1);
    th.hyp3_bound =
        1.0 / (std::pow(2.0, 3 * n - 1) * dim_power(n) * std::sqrt(2.0) * sa.K_A * sp.g_A);
    th.prop_eps1_bound = th.d_Agamma / (C1 * sa.K_A);
    th.xi_gamma = std::min(th.d_Agamma / (c1 * C1 * sa.K_A * M2), r / std::sqrt(2.0));
    th.gamma_tilde = 0.5 * (sp.M_AF + std::min(0.0, sp.m_AG));
    th.xi_tilde = std::min(
        1.0 / (c1 * C1 * std::pow(2.0, n - 1) * sp.g_A * sa.K_A * M2), r / std::sqrt(2.0));
    th.eta_tilde = (1.0 / C2) * std::min(1.0 / (sp.g_A * sa.K_A * M2), r);
    th.delta_tilde = th.eta_tilde / (C2p * sp.g_A * sa.K_A);
    th.lambda_mu0 = std::pow(std::min(1.0, std::abs(sp.M_AF)), n - 1);
    th.R_mu0 = th.lambda_mu0 / (C3 * sp.c_FG * sp.c_FG * sa.K_A) *
               std::min(th.lambda_mu0 / (sa.K_A * M2), r);
    th.constants_used = {{"c1", c1}, {"C2", C2}, {"C2p", C2p}, {"C3", C3}};
    return th;
}

enum class PhiDeriv { value, d_z, d_mu, higher };

// Right-hand side of the order-k control on the graph map phi, with the
// order-k implicit constant taken from the overrides (default 1). For k = 1
// the direction selects the z- or mu-derivative bound.
inline double phi_bound_rhs(const Splitting& sp, const SpectralAnalysis& sa, double Mhat2,
                            double Mhat_kp1, double z_norm, double mu_norm, int k,
                            PhiDeriv dir, double r, const ConstantSet& constants = {}) {
    if (k < 0) throw std::invalid_argument("phi_bound_rhs: negative order");
    if (!(r > 0.0)) throw std::invalid_argument("phi_bound_rhs: r must be positive");
    const double g = sp.g_A, K = sa.K_A;
    const double M2 = std::max(1.0, Mhat2), Mk1 = std::max(1.0, Mhat_kp1);
    const double Ck = constants.get("Cp" + std::to_string(k));
    switch (k) {
        case 0:
            return Ck * g * g * K * K * M2 * (z_norm + mu_norm) * z_norm;
        case 1:
            if (dir == PhiDeriv::d_mu) return Ck * g * K * M2 * z_norm;
            return Ck * g * g * K * K * M2 * (z_norm + mu_norm);
        default: {
            double core = g * g * K * K * std::pow(std::max(g * K * M2, 1.0 / r), k - 1) * Mk1;
            return Ck * std::pow(core, 2 * k - 1);
        }
    }
}

} // namespace stabfol

#endif
