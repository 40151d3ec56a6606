// Smooth families X(x, mu): polynomial term lists with exact multilinear
// derivatives of all orders, families translated from a field vanishing on a
// subspace, and plateau-truncated families. Includes sampled sup-norm tables
// over balls.
#ifndef STABFOL_FIELD_HPP
#define STABFOL_FIELD_HPP

#include <functional>
#include <map>
#include <memory>
#include <sstream>
#include <vector>

#include "stabfol/common.hpp"
#include "stabfol/plateau.hpp"
#include "stabfol/spectral.hpp"

namespace stabfol {

struct PolyTerm {
    int out = 0;                // output coordinate
    std::vector<int> exps;      // monomial exponents over (x, mu)
    double coef = 0.0;
};

enum class FieldKind { polynomial, translated, truncated };

// A smooth family of vector fields on R^n with parameters in R^s. Immutable
// after construction; all jets are exact (differentiation of the term list,
// chain rule through the translation, Leibniz through the plateau factor).
class FieldFamily {
public:
    int n() const { return n_; }
    int s() const { return s_; }
    FieldKind kind() const { return kind_; }
    double truncation_size() const { return xi_; }
    const MatrixXd& origin_diff() const { return A_; }

    static FieldFamily polynomial(int n, int s, std::vector<PolyTerm> terms) {
        FieldFamily f;
        f.n_ = n;
        f.s_ = s;
        f.kind_ = FieldKind::polynomial;
        for (const auto& t : terms) {
            if (t.out < 0 || t.out >= n || static_cast<int>(t.exps.size()) != n + s)
                throw std::invalid_argument("FieldFamily: malformed polynomial term");
        }
        f.terms_ = std::move(terms);
        f.A_ = f.jacobian_x(VectorXd::Zero(n), VectorXd::Zero(s));
        f.check_hypothesis1();
        return f;
    }

    // X(x, mu) = Y(offset + x + B mu) with mu ranging over the subspace spanned
    // by the columns of B. Y must vanish on that subspace through the offset.
    static FieldFamily translated(FieldFamily base, MatrixXd param_map, VectorXd offset) {
        if (base.s() != 0)
            throw std::invalid_argument("FieldFamily::translated: base must be parameter-free");
        if (param_map.rows() != base.n() || offset.size() != base.n())
            throw std::invalid_argument("FieldFamily::translated: dimension mismatch");
        FieldFamily f;
        f.n_ = base.n();
        f.s_ = static_cast<int>(param_map.cols());
        f.kind_ = FieldKind::translated;
        f.base_ = std::make_shared<FieldFamily>(std::move(base));
        f.param_map_ = std::move(param_map);
        f.offset_ = std::move(offset);
        f.A_ = f.jacobian_x(VectorXd::Zero(f.n_), VectorXd::Zero(f.s_));
        f.check_hypothesis1();
        return f;
    }

    VectorXd eval(const VectorXd& x, const VectorXd& mu) const {
        switch (kind_) {
            case FieldKind::polynomial: {
                VectorXd y(n_ + s_);
                y << x, mu;
                VectorXd out = VectorXd::Zero(n_);
                for (const auto& t : terms_) out[t.out] += t.coef * monomial(t.exps, y);
                return out;
            }
            case FieldKind::translated:
                return base_->eval(offset_ + x + param_map_ * mu, VectorXd(0));
            case FieldKind::truncated: {
                VectorXd lin = A_ * x;
                double nsq = (x.squaredNorm() + mu.squaredNorm()) / (xi_ * xi_);
                if (nsq >= 2.0) return lin;
                double chi = plateau_jet(nsq, 0)[0];
                VectorXd theta = base_->eval(x, mu) - A_ * x;
                return lin + chi * theta;
            }
        }
        throw std::logic_error("unreachable");
    }

    // Exact order-k multilinear derivative applied to the given directions
    // (each of length n + s). k = 0 returns the value.
    VectorXd derivative(const VectorXd& x, const VectorXd& mu,
                        const std::vector<VectorXd>& dirs) const {
        const int k = static_cast<int>(dirs.size());
        if (k == 0) return eval(x, mu);
        switch (kind_) {
            case FieldKind::polynomial: {
                VectorXd y(n_ + s_);
                y << x, mu;
                std::vector<PolyTerm> cur = terms_;
                for (const auto& d : dirs) cur = differentiate(cur, d);
                VectorXd out = VectorXd::Zero(n_);
                for (const auto& t : cur) out[t.out] += t.coef * monomial(t.exps, y);
                return out;
            }
            case FieldKind::translated: {
                std::vector<VectorXd> inner(dirs.size());
                for (std::size_t i = 0; i < dirs.size(); ++i)
                    inner[i] = dirs[i].head(n_) + param_map_ * dirs[i].tail(s_);
                return base_->derivative(offset_ + x + param_map_ * mu, VectorXd(0), inner);
            }
            case FieldKind::truncated:
                return truncated_derivative(x, mu, dirs);
        }
        throw std::logic_error("unreachable");
    }

    // d/dx block of the first derivative, as an n x n matrix.
    MatrixXd jacobian_x(const VectorXd& x, const VectorXd& mu) const {
        MatrixXd J(n_, n_);
        VectorXd d = VectorXd::Zero(n_ + s_);
        for (int i = 0; i < n_; ++i) {
            d[i] = 1.0;
            J.col(i) = derivative(x, mu, {d});
            d[i] = 0.0;
        }
        return J;
    }

    // Full first derivative in (x, mu), n x (n+s).
    MatrixXd jacobian_full(const VectorXd& x, const VectorXd& mu) const {
        MatrixXd J(n_, n_ + s_);
        VectorXd d = VectorXd::Zero(n_ + s_);
        for (int i = 0; i < n_ + s_; ++i) {
            d[i] = 1.0;
            J.col(i) = derivative(x, mu, {d});
            d[i] = 0.0;
        }
        return J;
    }

    friend FieldFamily truncate_family(const FieldFamily& f, double xi, double r);

private:
    int n_ = 0, s_ = 0;
    FieldKind kind_ = FieldKind::polynomial;
    std::vector<PolyTerm> terms_;
    std::shared_ptr<const FieldFamily> base_;
    MatrixXd param_map_;
    VectorXd offset_;
    MatrixXd A_;
    double xi_ = 0.0;

    static double monomial(const std::vector<int>& exps, const VectorXd& y) {
        double v = 1.0;
        for (std::size_t i = 0; i < exps.size(); ++i)
            for (int e = 0; e < exps[i]; ++e) v *= y[static_cast<int>(i)];
        return v;
    }

    static std::vector<PolyTerm> differentiate(const std::vector<PolyTerm>& terms,
                                               const VectorXd& d) {
        std::vector<PolyTerm> out;
        out.reserve(terms.size() * 2);
        for (const auto& t : terms) {
            for (std::size_t i = 0; i < t.exps.size(); ++i) {
                if (t.exps[i] == 0 || d[static_cast<int>(i)] == 0.0) continue;
                PolyTerm nt = t;
                nt.coef = t.coef * t.exps[i] * d[static_cast<int>(i)];
                nt.exps[i] -= 1;
                out.push_back(std::move(nt));
            }
        }
        return out;
    }

    // theta = base - A x and its exact derivatives.
    VectorXd theta_derivative(const VectorXd& x, const VectorXd& mu,
                              const std::vector<VectorXd>& dirs) const {
        VectorXd v = base_->derivative(x, mu, dirs);
        if (dirs.empty()) return v - A_ * x;
        if (dirs.size() == 1) return v - A_ * dirs[0].head(n_);
        return v;
    }

    // Leibniz over direction subsets combined with the chain rule for
    // chi(|y|^2 / xi^2); N is quadratic so its derivative tree is shallow.
    VectorXd truncated_derivative(const VectorXd& x, const VectorXd& mu,
                                  const std::vector<VectorXd>& dirs) const {
        const int k = static_cast<int>(dirs.size());
        VectorXd y(n_ + s_);
        y << x, mu;
        const double inv_xi2 = 1.0 / (xi_ * xi_);
        const double nsq = y.squaredNorm() * inv_xi2;

        VectorXd out = VectorXd::Zero(n_);
        if (k == 1) out += A_ * dirs[0].head(n_);
        if (nsq >= 2.0) return out; // chi and all its derivatives vanish

        auto jet = plateau_jet(nsq, k);

        // D^j(chi o N) applied to a direction subset: sum over partitions of
        // the subset into singletons (DN . d) and pairs (D2N . (d, d')).
        auto chi_term = [&](const std::vector<int>& idx) {
            double total = 0.0;
            std::vector<int> rem = idx;
            // recursive enumeration of partitions into blocks of size <= 2
            std::function<void(std::vector<int>&, int, double)> rec =
                [&](std::vector<int>& pool, int blocks, double factor) {
                    if (pool.empty()) {
                        total += jet[blocks] * factor;
                        return;
                    }
                    int first = pool.front();
                    std::vector<int> rest(pool.begin() + 1, pool.end());
                    double dn = 2.0 * y.dot(dirs[first]) * inv_xi2;
                    rec(rest, blocks + 1, factor * dn);
                    for (std::size_t j = 0; j < rest.size(); ++j) {
                        double d2n = 2.0 * dirs[first].dot(dirs[rest[j]]) * inv_xi2;
                        std::vector<int> rest2 = rest;
                        rest2.erase(rest2.begin() + static_cast<long>(j));
                        rec(rest2, blocks + 1, factor * d2n);
                    }
                };
            rec(rem, 0, 1.0);
            return total;
        };

        for (unsigned mask = 0; mask < (1u << k); ++mask) {
            std::vector<int> chi_idx;
            std::vector<VectorXd> theta_dirs;
            for (int i = 0; i < k; ++i) {
                if (mask & (1u << i))
                    chi_idx.push_back(i);
                else
                    theta_dirs.push_back(dirs[i]);
            }
            double cfac = chi_idx.empty() ? jet[0] : chi_term(chi_idx);
            if (cfac == 0.0) continue;
            out += cfac * theta_derivative(x, mu, theta_dirs);
        }
        return out;
    }

    void check_hypothesis1() const {
        auto rng = make_rng(0x5f1d);
        const VectorXd zero = VectorXd::Zero(n_);
        for (int i = 0; i < 64; ++i) {
            VectorXd mu = s_ > 0 ? VectorXd(random_unit_vector(s_, rng) *
                                            std::pow(10.0, (i % 5) - 2))
                                 : VectorXd(0);
            double v = eval(zero, mu).norm();
            if (v > 1e-12) {
                std::ostringstream os;
                os << "FieldFamily: X(0, mu) != 0 (norm " << v << ") at mu = ["
                   << mu.transpose() << "]";
                throw std::invalid_argument(os.str());
            }
        }
    }
};

// The truncated family A x + chi(|(x, mu)|^2 / xi^2) (X - A x): coincides with
// f on the xi-ball and with the linear field beyond xi * sqrt(2).
inline FieldFamily truncate_family(const FieldFamily& f, double xi, double r) {
    if (!(xi > 0.0) || xi > std::min(1.0, r / std::sqrt(2.0)))
        throw std::domain_error("truncate_family: xi must lie in (0, min(1, r/sqrt(2))]");
    FieldFamily out;
    out.n_ = f.n();
    out.s_ = f.s();
    out.kind_ = FieldKind::truncated;
    out.base_ = std::make_shared<FieldFamily>(f);
    out.A_ = f.origin_diff();
    out.xi_ = xi;
    return out;
}

struct NormTable {
    double ball_radius = 0.0;
    double M1_loc = 0.0;                 // sup |d/dx X - A| over the ball
    std::map<int, double> Mk_loc;        // k >= 2, running sup over orders 2..k
    int sample_budget = 0;
    bool is_lower_bound = true;          // sampled sup, always a lower bound

    double Mhat(int k) const {
        if (k < 2) throw std::invalid_argument("NormTable::Mhat: order must be >= 2");
        auto it = Mk_loc.find(k);
        if (it == Mk_loc.end()) throw std::invalid_argument("NormTable::Mhat: order not sampled");
        return std::max(1.0, it->second);
    }
};

namespace detail {

// Lower bound for the subordinate norm of the order-k derivative tensor at a
// point: alternating power iteration over the direction slots (each slot
// update is an exact singular-vector step).
inline double tensor_norm_lower_bound(const FieldFamily& f, const VectorXd& x,
                                      const VectorXd& mu, int k, std::mt19937_64& rng) {
    const int dim = f.n() + f.s();
    double best = 0.0;
    for (int restart = 0; restart < 2; ++restart) {
        std::vector<VectorXd> dirs(k);
        for (auto& d : dirs) d = random_unit_vector(dim, rng);
        double val = 0.0;
        for (int sweep = 0; sweep < 4; ++sweep) {
            for (int slot = 0; slot < k; ++slot) {
                MatrixXd M(f.n(), dim);
                VectorXd probe = VectorXd::Zero(dim);
                for (int j = 0; j < dim; ++j) {
                    probe[j] = 1.0;
                    dirs[slot] = probe;
                    M.col(j) = f.derivative(x, mu, dirs);
                    probe[j] = 0.0;
                }
                Eigen::JacobiSVD<MatrixXd> svd(M, Eigen::ComputeThinV);
                val = svd.singularValues()(0);
                dirs[slot] = svd.matrixV().col(0);
            }
        }
        best = std::max(best, val);
    }
    return best;
}

} // namespace detail

// Sampled sup-norms of the derivatives over the closed ball of radius r in
// (x, mu)-space: quasi-random points, deterministic given the seed, flagged as
// lower bounds of the true sup.
inline NormTable sampled_norms(const FieldFamily& f, double r, int k_max, int budget,
                               std::uint64_t seed) {
    if (!(r > 0.0)) throw std::invalid_argument("sampled_norms: r must be positive");
    if (budget < 1000) throw std::invalid_argument("sampled_norms: budget must be >= 1000");
    NormTable table;
    table.ball_radius = r;
    table.sample_budget = budget;

    const MatrixXd& A = f.origin_diff();
    std::vector<double> m1(budget, 0.0);
    std::vector<std::vector<double>> mk(std::max(0, k_max - 1),
                                        std::vector<double>(budget, 0.0));

    parallel_for(static_cast<std::size_t>(budget), [&](std::size_t i) {
        VectorXd y = ball_point(f.n() + f.s(), r, i, seed);
        VectorXd x = y.head(f.n()), mu = y.tail(f.s());
        m1[i] = operator_norm(f.jacobian_x(x, mu) - A);
        auto rng = make_rng(seed ^ (0x9e3779b97f4a7c15ull * (i + 1)));
        for (int k = 2; k <= k_max; ++k)
            mk[k - 2][i] = detail::tensor_norm_lower_bound(f, x, mu, k, rng);
    });

    for (int i = 0; i < budget; ++i) table.M1_loc = std::max(table.M1_loc, m1[i]);
    double running = 0.0;
    for (int k = 2; k <= k_max; ++k) {
        for (int i = 0; i < budget; ++i) running = std::max(running, mk[k - 2][i]);
        table.Mk_loc[k] = running;
    }
    return table;
}

} // namespace stabfol

#endif
