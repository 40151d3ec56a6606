// Eigenstructure of real matrices: generalized eigenspaces via Schur reordering,
// subspace angles, and the explicit constants c(A), K(A), K'(A), M(A), m(A)
// together with the matrix-exponential growth coefficient.
#ifndef STABFOL_SPECTRAL_HPP
#define STABFOL_SPECTRAL_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <vector>

#include <lapacke.h>
#include <unsupported/Eigen/MatrixFunctions>

#include "stabfol/common.hpp"

namespace stabfol {

// (n-1)^(n-1), reading 0^0 as 1 so the n = 1 formulas degenerate gracefully.
inline double dim_power(int n) {
    if (n <= 1) return 1.0;
    return std::pow(static_cast<double>(n - 1), static_cast<double>(n - 1));
}

inline double operator_norm(const MatrixXd& A) {
    if (A.rows() == 0 || A.cols() == 0) return 0.0;
    Eigen::JacobiSVD<MatrixXd> svd(A);
    return svd.singularValues()(0);
}

struct PrincipalAngle {
    double angle; // radians in (0, pi/2]
    double c;     // (2 / (1 - cos angle))^(1/2)
};

// Minimal unsigned angle between two subspaces given by spanning sets: the
// cosine is the largest singular value of the product of orthonormalized
// bases. Throws when the spaces (numerically) intersect.
inline PrincipalAngle principal_angle(const MatrixXd& F, const MatrixXd& G,
                                      double angle_floor = 1e-10) {
    if (F.cols() == 0 || G.cols() == 0)
        throw std::invalid_argument("principal_angle: empty spanning set");
    Eigen::HouseholderQR<MatrixXd> qf(F), qg(G);
    MatrixXd QF = qf.householderQ() * MatrixXd::Identity(F.rows(), F.cols());
    MatrixXd QG = qg.householderQ() * MatrixXd::Identity(G.rows(), G.cols());
    double cosang = std::clamp(operator_norm(QF.transpose() * QG), 0.0, 1.0);
    double angle = std::acos(cosang);
    if (angle < angle_floor)
        throw NumericalError("principal_angle: degenerate intersection (angle below floor)");
    return PrincipalAngle{angle, std::sqrt(2.0 / (1.0 - cosang))};
}

struct SpectralAnalysis {
    int n = 0;
    MatrixXd matrix;                               // the analyzed matrix
    std::vector<std::complex<double>> eigenvalues; // all n, algebraic multiplicity by repetition
    std::vector<MatrixXd> gen_eigenspaces;         // orthonormal basis per real cluster
    std::vector<std::vector<int>> cluster_members; // eigenvalue indices per cluster
    double op_norm = 0.0;
    double family_angle = M_PI / 2.0;
    double c_A = 1.0;
    double K_A = 1.0;
    double Kp_A = 1.0;
    double M_A = 0.0;
    double m_A = 0.0;

    int cluster_count() const { return static_cast<int>(gen_eigenspaces.size()); }
};

namespace detail {

// Invariant subspace of the eigenvalue cluster `members`: real Schur form of A
// reordered (LAPACK dtrsen) so the selected eigenvalues lead; the first d
// Schur vectors then span the generalized eigenspace sum. `members` index the
// Schur diagonal (dgees eigenvalue order).
inline MatrixXd cluster_invariant_subspace(const MatrixXd& T0, const MatrixXd& Q0,
                                           const std::vector<int>& members) {
    const int n = static_cast<int>(T0.rows());
    MatrixXd T = T0, Q = Q0;
    std::vector<lapack_logical> select(n, 0);
    for (int idx : members) select[idx] = 1;

    std::vector<double> wr(n), wi(n);
    lapack_int m = 0;
    double s_cond = 0.0, sep = 0.0;
    lapack_int info = LAPACKE_dtrsen(LAPACK_COL_MAJOR, 'N', 'V', select.data(), n,
                                     T.data(), n, Q.data(), n, wr.data(), wi.data(),
                                     &m, &s_cond, &sep);
    if (info != 0) throw NumericalError("analyze_matrix: Schur reordering failed");
    if (m != static_cast<lapack_int>(members.size()))
        throw NumericalError("analyze_matrix: reordered cluster dimension mismatch");
    return Q.leftCols(m);
}

} // namespace detail

// Full spectral analysis: eigenvalues clustered within cluster_tol * max(1, |A|)
// are merged (conjugate pairs always together), each cluster carrying an
// orthonormal basis of the corresponding real invariant subspace.
inline SpectralAnalysis analyze_matrix(const MatrixXd& A, double cluster_tol = 1e-9) {
    const int n = static_cast<int>(A.rows());
    if (n < 1 || A.cols() != n) throw std::invalid_argument("analyze_matrix: square matrix required");
    if (!A.allFinite()) throw std::invalid_argument("analyze_matrix: non-finite entries");

    SpectralAnalysis sa;
    sa.n = n;
    sa.matrix = A;
    sa.op_norm = operator_norm(A);

    // Real Schur decomposition A = Q T Q^T.
    MatrixXd T = A, Q(n, n);
    std::vector<double> wr(n), wi(n);
    lapack_int sdim = 0;
    lapack_int info = LAPACKE_dgees(LAPACK_COL_MAJOR, 'V', 'N', nullptr, n, T.data(), n,
                                    &sdim, wr.data(), wi.data(), Q.data(), n);
    if (info != 0) throw NumericalError("analyze_matrix: eigen decomposition did not converge");

    sa.eigenvalues.resize(n);
    for (int i = 0; i < n; ++i) sa.eigenvalues[i] = {wr[i], wi[i]};
    sa.M_A = -std::numeric_limits<double>::infinity();
    sa.m_A = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
        sa.M_A = std::max(sa.M_A, wr[i]);
        sa.m_A = std::min(sa.m_A, wr[i]);
    }

    // Union-find clustering: close eigenvalues merge, conjugate pairs merge.
    const double tol = cluster_tol * std::max(1.0, sa.op_norm);
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int i) {
        while (parent[i] != i) { parent[i] = parent[parent[i]]; i = parent[i]; }
        return i;
    };
    auto unite = [&](int i, int j) { parent[find(i)] = find(j); };
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            if (std::abs(sa.eigenvalues[i] - sa.eigenvalues[j]) <= tol) unite(i, j);
            if (std::abs(sa.eigenvalues[i] - std::conj(sa.eigenvalues[j])) <= tol) unite(i, j);
        }
    // dgees stores a conjugate pair adjacently; keep them in one cluster.
    for (int i = 0; i + 1 < n; ++i)
        if (wi[i] > 0.0 && wi[i + 1] < 0.0) unite(i, i + 1);

    std::vector<std::vector<int>> clusters;
    std::vector<int> root_of(n, -1);
    for (int i = 0; i < n; ++i) {
        int r = find(i);
        if (root_of[r] < 0) {
            root_of[r] = static_cast<int>(clusters.size());
            clusters.emplace_back();
        }
        clusters[root_of[r]].push_back(i);
    }

    for (const auto& members : clusters) {
        MatrixXd basis = (static_cast<int>(members.size()) == n)
                             ? MatrixXd::Identity(n, n)
                             : detail::cluster_invariant_subspace(T, Q, members);
        sa.gen_eigenspaces.push_back(basis);
        sa.cluster_members.push_back(members);
    }

    int dim_sum = 0;
    for (const auto& E : sa.gen_eigenspaces) dim_sum += static_cast<int>(E.cols());
    if (dim_sum != n) throw NumericalError("analyze_matrix: cluster dimensions do not sum to n");

    const int r = sa.cluster_count();
    if (r > 1) {
        // Direct-sum residual check: the concatenated bases must be invertible.
        MatrixXd B(n, n);
        int col = 0;
        for (const auto& E : sa.gen_eigenspaces) {
            B.middleCols(col, E.cols()) = E;
            col += static_cast<int>(E.cols());
        }
        Eigen::JacobiSVD<MatrixXd> svd(B);
        if (svd.singularValues()(n - 1) < 1e-10)
            throw NumericalError("analyze_matrix: clustered spaces fail the direct-sum check");

        double min_angle = M_PI / 2.0;
        for (int j = 0; j < r; ++j) {
            MatrixXd rest(n, n - sa.gen_eigenspaces[j].cols());
            int c = 0;
            for (int i = 0; i < r; ++i) {
                if (i == j) continue;
                rest.middleCols(c, sa.gen_eigenspaces[i].cols()) = sa.gen_eigenspaces[i];
                c += static_cast<int>(sa.gen_eigenspaces[i].cols());
            }
            min_angle = std::min(min_angle, principal_angle(sa.gen_eigenspaces[j], rest).angle);
        }
        sa.family_angle = min_angle;
        sa.c_A = std::pow(2.0 / (1.0 - std::cos(min_angle)), 0.5 * (r - 1));
    } else {
        sa.family_angle = M_PI / 2.0; // single-block convention
        sa.c_A = 1.0;
    }

    sa.K_A = std::pow(std::max(1.0, sa.op_norm), n - 1) * sa.c_A;
    sa.Kp_A = std::pow(2.0, 2 * n - 2) * dim_power(n) * sa.K_A;
    return sa;
}

// e^{sA} by scaling-and-squaring (Eigen's Pade-based expm). Exact identity at
// s = 0. Throws when e^{s M(A)} would overflow.
inline MatrixXd matrix_exponential(const MatrixXd& A, double s) {
    const int n = static_cast<int>(A.rows());
    if (!A.allFinite() || !std::isfinite(s))
        throw std::invalid_argument("matrix_exponential: non-finite input");
    if (s == 0.0) return MatrixXd::Identity(n, n);
    if (s * A.norm() > 700.0) {
        // Only now pay for the spectrum: overflow is governed by e^{s M(A)}.
        Eigen::EigenSolver<MatrixXd> es(A, false);
        double MA = es.eigenvalues().real().maxCoeff();
        if (s * MA > 709.0)
            throw NumericalError("matrix_exponential: e^{s M(A)} exceeds floating-point range");
    }
    MatrixXd sA = s * A;
    MatrixXd E = sA.exp();
    if (!E.allFinite()) throw NumericalError("matrix_exponential: overflow in exponential");
    return E;
}

// Coefficient B(A, alpha) with |e^{sA}| <= B e^{alpha s} for all s >= 0,
// valid for any alpha > M(A).
inline double exp_growth_coefficient(const SpectralAnalysis& sa, double alpha) {
    if (!(alpha > sa.M_A))
        throw std::domain_error("exp_growth_coefficient: alpha must exceed M(A)");
    const int n = sa.n;
    double denom = std::pow(std::min(1.0, alpha - sa.M_A), n - 1);
    return std::pow(2.0, n - 1) * dim_power(n) * std::pow(std::max(1.0, sa.op_norm), n - 1) *
           sa.c_A / denom;
}

// min over the spectrum of |gamma - Re(lambda)|.
inline double spectrum_real_distance(const SpectralAnalysis& sa, double gamma) {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& ev : sa.eigenvalues) d = std::min(d, std::abs(gamma - ev.real()));
    return d;
}

} // namespace stabfol

#endif
