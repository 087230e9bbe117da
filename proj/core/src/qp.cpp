#include "raps/qp.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "raps/error.hpp"

namespace raps {
namespace {

using Triplet = Eigen::Triplet<double>;

double inf_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

double finite_inf_norm(const Vector& v) {
    double out = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (std::isfinite(v(i))) out = std::max(out, std::abs(v(i)));
    return out;
}

Vector col_inf_norms(const SparseMatrix& m) {
    Vector out = Vector::Zero(m.cols());
    for (Eigen::Index j = 0; j < m.outerSize(); ++j)
        for (SparseMatrix::InnerIterator it(m, j); it; ++it)
            out(j) = std::max(out(j), std::abs(it.value()));
    return out;
}

Vector row_inf_norms(const SparseMatrix& m) {
    Vector out = Vector::Zero(m.rows());
    for (Eigen::Index j = 0; j < m.outerSize(); ++j)
        for (SparseMatrix::InnerIterator it(m, j); it; ++it)
            out(it.row()) = std::max(out(it.row()), std::abs(it.value()));
    return out;
}

double clamp_scale(double norm) {
    constexpr double kMin = 1e-4, kMax = 1e4;
    if (norm < kMin) return 1.0;
    return 1.0 / std::sqrt(std::min(norm, kMax));
}

// Projects a multiplier onto the sides of [l, u] that are finite.
double clean_dual(double y, double l, double u) {
    if (!std::isfinite(u) && y > 0.0) return 0.0;
    if (!std::isfinite(l) && y < 0.0) return 0.0;
    return y;
}

}  // namespace

std::string_view to_string(QpStatus s) {
    switch (s) {
        case QpStatus::Solved: return "Solved";
        case QpStatus::MaxIter: return "MaxIter";
        case QpStatus::Infeasible: return "Infeasible";
        case QpStatus::Unbounded: return "Unbounded";
        case QpStatus::Cutoff: return "Cutoff";
    }
    return "Unknown";
}

void QpProblem::validate() const {
    const auto n = linear.size();
    if (hessian.rows() != n || hessian.cols() != n || lower.size() != n || upper.size() != n ||
        (ineq.rows() > 0 && ineq.cols() != n) || ineq_upper.size() != ineq.rows()) {
        throw Error(ErrorCode::InvalidProblem, "QpProblem: inconsistent dimensions");
    }
    if (n == 0) return;
    if ((hessian - hessian.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
        throw Error(ErrorCode::InvalidProblem, "QpProblem: hessian is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(hessian, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-8) {
        throw Error(ErrorCode::InvalidProblem, "QpProblem: hessian is indefinite");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        if (std::isnan(lower(i)) || std::isnan(upper(i))) {
            throw Error(ErrorCode::InvalidProblem, "QpProblem: NaN bound");
        }
    }
}

QpEngine::QpEngine(SparseQp problem, QpSettings settings)
    : problem_(std::move(problem)), settings_(settings) {
    const auto n = problem_.num_vars();
    const auto rows = problem_.num_rows();
    if (problem_.hessian.rows() != n || problem_.hessian.cols() != n ||
        (rows > 0 && problem_.constraints.cols() != n) || problem_.row_lower.size() != rows ||
        problem_.row_upper.size() != rows || problem_.var_lower.size() != n ||
        problem_.var_upper.size() != n) {
        throw Error(ErrorCode::InvalidProblem, "SparseQp: inconsistent dimensions");
    }
    if (problem_.constraints.cols() != n) problem_.constraints.resize(rows, n);
    setup();
}

void QpEngine::setup() {
    const auto n = problem_.num_vars();
    const auto mc = problem_.num_rows();

    boxed_vars_.clear();
    for (Eigen::Index j = 0; j < n; ++j)
        if (std::isfinite(problem_.var_lower(j)) || std::isfinite(problem_.var_upper(j)))
            boxed_vars_.push_back(j);
    const auto nb = static_cast<Eigen::Index>(boxed_vars_.size());
    const auto rows = mc + nb;

    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(problem_.constraints.nonZeros() + nb));
    for (Eigen::Index j = 0; j < problem_.constraints.outerSize(); ++j)
        for (SparseMatrix::InnerIterator it(problem_.constraints, j); it; ++it)
            trips.emplace_back(it.row(), it.col(), it.value());
    for (Eigen::Index k = 0; k < nb; ++k) trips.emplace_back(mc + k, boxed_vars_[static_cast<std::size_t>(k)], 1.0);
    a_stack_.resize(rows, n);
    a_stack_.setFromTriplets(trips.begin(), trips.end());
    a_stack_.makeCompressed();

    l_stack_.resize(rows);
    u_stack_.resize(rows);
    l_stack_.head(mc) = problem_.row_lower;
    u_stack_.head(mc) = problem_.row_upper;
    for (Eigen::Index k = 0; k < nb; ++k) {
        l_stack_(mc + k) = problem_.var_lower(boxed_vars_[static_cast<std::size_t>(k)]);
        u_stack_(mc + k) = problem_.var_upper(boxed_vars_[static_cast<std::size_t>(k)]);
    }

    // Ruiz equilibration of [P A^T; A 0] plus cost scaling.
    pbar_ = problem_.hessian;
    abar_ = a_stack_;
    qbar_ = problem_.linear;
    d_ = Vector::Ones(n);
    e_ = Vector::Ones(rows);
    cost_scale_ = 1.0;
    if (settings_.scaling) {
        for (int iter = 0; iter < 10; ++iter) {
            const Vector pc = col_inf_norms(pbar_);
            const Vector ac = col_inf_norms(abar_);
            const Vector ar = row_inf_norms(abar_);
            Vector dt(n), et(rows);
            for (Eigen::Index j = 0; j < n; ++j) dt(j) = clamp_scale(std::max(pc(j), ac(j)));
            for (Eigen::Index i = 0; i < rows; ++i) et(i) = clamp_scale(ar(i));
            pbar_ = dt.asDiagonal() * pbar_ * dt.asDiagonal();
            abar_ = et.asDiagonal() * abar_ * dt.asDiagonal();
            qbar_ = dt.cwiseProduct(qbar_);
            d_ = d_.cwiseProduct(dt);
            e_ = e_.cwiseProduct(et);

            const Vector pn = col_inf_norms(pbar_);
            const double mean_p = n > 0 ? pn.mean() : 0.0;
            double gamma = std::max(mean_p, inf_norm(qbar_));
            gamma = gamma < 1e-4 ? 1.0 : 1.0 / std::min(gamma, 1e4);
            pbar_ *= gamma;
            qbar_ *= gamma;
            cost_scale_ *= gamma;
        }
    }
    abar_.makeCompressed();
    pbar_.makeCompressed();
    abar_t_ = abar_.transpose();
    lbar_ = e_.cwiseProduct(l_stack_);
    ubar_ = e_.cwiseProduct(u_stack_);

    rho_ = settings_.rho;
    rho_vec_.resize(rows);
    x_ = Vector::Zero(n);
    z_ = Vector::Zero(rows);
    y_ = Vector::Zero(rows);
    for (Eigen::Index i = 0; i < rows; ++i) z_(i) = std::clamp(0.0, lbar_(i), ubar_(i));
    factorize();

    // Variables with a structurally zero Hessian column are handled through their
    // box in the dual bound; the rest need a positive-definite block.
    quad_vars_.clear();
    lin_vars_.clear();
    const Vector pcols = col_inf_norms(problem_.hessian);
    for (Eigen::Index j = 0; j < n; ++j) (pcols(j) > 0.0 ? quad_vars_ : lin_vars_).push_back(j);
    const auto nq = static_cast<Eigen::Index>(quad_vars_.size());
    Matrix pqq(nq, nq);
    const Matrix pdense = Matrix(problem_.hessian);
    for (Eigen::Index a = 0; a < nq; ++a)
        for (Eigen::Index b = 0; b < nq; ++b)
            pqq(a, b) = pdense(quad_vars_[static_cast<std::size_t>(a)], quad_vars_[static_cast<std::size_t>(b)]);
    quad_factor_.compute(pqq);
    quad_factor_ok_ = quad_factor_.info() == Eigen::Success;
    if (quad_factor_ok_) {
        const auto diag = quad_factor_.matrixLLT().diagonal();
        for (Eigen::Index a = 0; a < nq; ++a) quad_factor_ok_ = quad_factor_ok_ && diag(a) > 1e-12;
    }
}

void QpEngine::factorize() {
    const auto rows = abar_.rows();
    for (Eigen::Index i = 0; i < rows; ++i) {
        const bool lo = std::isfinite(lbar_(i)), hi = std::isfinite(ubar_(i));
        if (!lo && !hi) {
            rho_vec_(i) = 1e-6;
        } else if (lo && hi && std::abs(ubar_(i) - lbar_(i)) < 1e-12) {
            rho_vec_(i) = 1e3 * rho_;
        } else {
            rho_vec_(i) = rho_;
        }
    }
    const auto n = pbar_.rows();
    SparseMatrix ident(n, n);
    ident.setIdentity();
    SparseMatrix k = pbar_ + settings_.sigma * ident + SparseMatrix(abar_t_ * rho_vec_.asDiagonal() * abar_);
    k.makeCompressed();
    if (!analyzed_) {
        kkt_.analyzePattern(k);
        analyzed_ = true;
    }
    kkt_.factorize(k);
    if (kkt_.info() != Eigen::Success) {
        throw Error(ErrorCode::InvalidProblem, "QpEngine: KKT factorization failed");
    }
}

void QpEngine::warm_start(const Vector& x, const Vector& row_dual, const Vector& var_dual) {
    const auto n = problem_.num_vars();
    const auto mc = problem_.num_rows();
    if (x.size() != n || row_dual.size() != mc || var_dual.size() != n) {
        throw Error(ErrorCode::DimensionMismatch, "QpEngine::warm_start: shape mismatch");
    }
    x_ = x.cwiseQuotient(d_);
    Vector y(a_stack_.rows());
    y.head(mc) = row_dual;
    for (std::size_t k = 0; k < boxed_vars_.size(); ++k)
        y(mc + static_cast<Eigen::Index>(k)) = var_dual(boxed_vars_[k]);
    y_ = cost_scale_ * y.cwiseQuotient(e_);
    const Vector ax = abar_ * x_;
    for (Eigen::Index i = 0; i < ax.size(); ++i) z_(i) = std::clamp(ax(i), lbar_(i), ubar_(i));
}

void QpEngine::unscaled_iterates(Vector& x, Vector& y) const {
    x = d_.cwiseProduct(x_);
    y = e_.cwiseProduct(y_) / cost_scale_;
}

QpEngine::Residuals QpEngine::residuals(const Vector& x, const Vector& y) const {
    Residuals r;
    const Vector ax = a_stack_ * x;
    for (Eigen::Index i = 0; i < ax.size(); ++i) {
        const double viol = std::max({0.0, l_stack_(i) - ax(i), ax(i) - u_stack_(i)});
        r.primal = std::max(r.primal, viol);
        if (y(i) > 0.0 && std::isfinite(u_stack_(i)))
            r.complementarity = std::max(r.complementarity, y(i) * std::abs(u_stack_(i) - ax(i)));
        if (y(i) < 0.0 && std::isfinite(l_stack_(i)))
            r.complementarity = std::max(r.complementarity, -y(i) * std::abs(ax(i) - l_stack_(i)));
        // Wrong-signed multipliers count against complementarity.
        if ((y(i) > 0.0 && !std::isfinite(u_stack_(i))) || (y(i) < 0.0 && !std::isfinite(l_stack_(i))))
            r.complementarity = std::max(r.complementarity, std::abs(y(i)));
    }
    const Vector grad = problem_.hessian * x + problem_.linear + a_stack_.transpose() * y;
    r.dual = inf_norm(grad);
    return r;
}

bool QpEngine::converged(const Vector& x, const Vector& y) const {
    const double tol = settings_.tol;
    const Vector ax = a_stack_ * x;
    Vector z(ax.size());
    for (Eigen::Index i = 0; i < ax.size(); ++i) z(i) = std::clamp(ax(i), l_stack_(i), u_stack_(i));
    const double prim = inf_norm(ax - z);
    const Vector px = problem_.hessian * x;
    const Vector aty = a_stack_.transpose() * y;
    const double dual = inf_norm(px + problem_.linear + aty);
    const double prim_scale = std::max(inf_norm(ax), inf_norm(z));
    const double dual_scale = std::max({inf_norm(px), inf_norm(aty), inf_norm(problem_.linear)});
    return prim <= tol + tol * prim_scale && dual <= tol + tol * dual_scale;
}

bool QpEngine::primal_infeasible(const Vector& dy) const {
    const double eps = settings_.infeasibility_tol;
    const double norm = inf_norm(dy);
    if (norm < 1e-12) return false;
    if (inf_norm(a_stack_.transpose() * dy) > eps * norm) return false;
    double support = 0.0;
    for (Eigen::Index i = 0; i < dy.size(); ++i) {
        if (dy(i) > 0.0) {
            if (!std::isfinite(u_stack_(i))) {
                if (dy(i) > eps * norm) return false;
                continue;
            }
            support += u_stack_(i) * dy(i);
        } else if (dy(i) < 0.0) {
            if (!std::isfinite(l_stack_(i))) {
                if (-dy(i) > eps * norm) return false;
                continue;
            }
            support += l_stack_(i) * dy(i);
        }
    }
    return support < -eps * norm;
}

bool QpEngine::dual_infeasible(const Vector& dx) const {
    const double eps = settings_.infeasibility_tol;
    const double norm = inf_norm(dx);
    if (norm < 1e-12) return false;
    if (inf_norm(problem_.hessian * dx) > eps * norm) return false;
    if (problem_.linear.dot(dx) > -eps * norm) return false;
    const Vector adx = a_stack_ * dx;
    for (Eigen::Index i = 0; i < adx.size(); ++i) {
        const bool lo = std::isfinite(l_stack_(i)), hi = std::isfinite(u_stack_(i));
        if (hi && adx(i) > eps * norm) return false;
        if (lo && adx(i) < -eps * norm) return false;
    }
    return true;
}

double QpEngine::dual_bound(const Vector& row_dual, const Vector& var_dual) const {
    const auto n = problem_.num_vars();
    const auto mc = problem_.num_rows();
    Vector c = problem_.linear;
    double support = 0.0;
    if (mc > 0) {
        Vector y(mc);
        for (Eigen::Index i = 0; i < mc; ++i) {
            y(i) = clean_dual(row_dual(i), problem_.row_lower(i), problem_.row_upper(i));
            if (y(i) > 0.0) support += y(i) * problem_.row_upper(i);
            if (y(i) < 0.0) support += y(i) * problem_.row_lower(i);
        }
        c.noalias() += problem_.constraints.transpose() * y;
    }
    if (!quad_factor_ok_) return -kInf;

    double value = 0.0;
    // Boxed quadratic variables contribute through their multipliers.
    for (Eigen::Index j : quad_vars_) {
        const double yj = clean_dual(var_dual(j), problem_.var_lower(j), problem_.var_upper(j));
        c(j) += yj;
        if (yj > 0.0) support += yj * problem_.var_upper(j);
        if (yj < 0.0) support += yj * problem_.var_lower(j);
    }
    // Linear variables minimize over their box directly.
    for (Eigen::Index j : lin_vars_) {
        if (c(j) > 0.0) {
            if (!std::isfinite(problem_.var_lower(j))) return -kInf;
            value += c(j) * problem_.var_lower(j);
        } else if (c(j) < 0.0) {
            if (!std::isfinite(problem_.var_upper(j))) return -kInf;
            value += c(j) * problem_.var_upper(j);
        }
    }
    const auto nq = static_cast<Eigen::Index>(quad_vars_.size());
    if (nq > 0) {
        Vector cq(nq);
        for (Eigen::Index a = 0; a < nq; ++a) cq(a) = c(quad_vars_[static_cast<std::size_t>(a)]);
        value -= 0.5 * cq.dot(quad_factor_.solve(cq));
    }
    (void)n;
    return value - support;
}

void QpEngine::fill_solution(const Vector& x, const Vector& y, QpSolution& out) const {
    const auto n = problem_.num_vars();
    const auto mc = problem_.num_rows();
    out.minimizer = x;
    out.objective = 0.5 * x.dot(problem_.hessian * x) + problem_.linear.dot(x);
    out.ineq_dual = y.head(mc);
    out.box_dual = Vector::Zero(n);
    for (std::size_t k = 0; k < boxed_vars_.size(); ++k)
        out.box_dual(boxed_vars_[k]) = y(mc + static_cast<Eigen::Index>(k));
    const Residuals r = residuals(x, y);
    out.primal_residual = r.primal;
    out.dual_residual = r.dual;
    out.complementarity = r.complementarity;
    out.dual_objective = dual_bound(out.ineq_dual, out.box_dual);
}

bool QpEngine::polish(const Vector& x, const Vector& y, QpSolution& out) const {
    const auto n = problem_.num_vars();
    const auto rows = a_stack_.rows();
    const Vector ax = a_stack_ * x;

    // Active set guess from the ADMM iterate.
    std::vector<Eigen::Index> active;
    std::vector<double> target;
    std::vector<int> side;  // -1 lower, +1 upper, 0 equality
    for (Eigen::Index i = 0; i < rows; ++i) {
        const double l = l_stack_(i), u = u_stack_(i);
        const double z = std::clamp(ax(i), l, u);
        if (std::isfinite(l) && std::isfinite(u) && std::abs(u - l) < 1e-12) {
            active.push_back(i);
            target.push_back(u);
            side.push_back(0);
        } else if (std::isfinite(l) && z - l < -y(i)) {
            active.push_back(i);
            target.push_back(l);
            side.push_back(-1);
        } else if (std::isfinite(u) && u - z < y(i)) {
            active.push_back(i);
            target.push_back(u);
            side.push_back(1);
        }
    }
    const auto na = static_cast<Eigen::Index>(active.size());
    constexpr double kDelta = 1e-9;

    std::vector<Triplet> trips;
    std::vector<Triplet> trips0;
    for (Eigen::Index j = 0; j < problem_.hessian.outerSize(); ++j)
        for (SparseMatrix::InnerIterator it(problem_.hessian, j); it; ++it)
            trips0.emplace_back(it.row(), it.col(), it.value());
    std::vector<Eigen::Index> slot(static_cast<std::size_t>(rows), -1);
    for (Eigen::Index k = 0; k < na; ++k) slot[static_cast<std::size_t>(active[static_cast<std::size_t>(k)])] = k;
    for (Eigen::Index j = 0; j < a_stack_.outerSize(); ++j) {
        for (SparseMatrix::InnerIterator it(a_stack_, j); it; ++it) {
            const Eigen::Index k = slot[static_cast<std::size_t>(it.row())];
            if (k < 0) continue;
            trips0.emplace_back(n + k, it.col(), it.value());
            trips0.emplace_back(it.col(), n + k, it.value());
        }
    }
    trips = trips0;
    for (Eigen::Index j = 0; j < n; ++j) trips.emplace_back(j, j, kDelta);
    for (Eigen::Index k = 0; k < na; ++k) trips.emplace_back(n + k, n + k, -kDelta);

    SparseMatrix kreg(n + na, n + na), k0(n + na, n + na);
    kreg.setFromTriplets(trips.begin(), trips.end());
    k0.setFromTriplets(trips0.begin(), trips0.end());
    Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt(kreg);
    if (ldlt.info() != Eigen::Success) return false;

    Vector rhs(n + na);
    rhs.head(n) = -problem_.linear;
    for (Eigen::Index k = 0; k < na; ++k) rhs(n + k) = target[static_cast<std::size_t>(k)];
    Vector sol = ldlt.solve(rhs);
    for (int refine = 0; refine < 10; ++refine) {
        const Vector res = rhs - k0 * sol;
        if (inf_norm(res) < 1e-14 * (1.0 + inf_norm(rhs))) break;
        sol += ldlt.solve(res);
    }
    if (!sol.allFinite()) return false;

    Vector xp = sol.head(n);
    Vector yp = Vector::Zero(rows);
    for (Eigen::Index k = 0; k < na; ++k) {
        const double v = sol(n + k);
        const int s = side[static_cast<std::size_t>(k)];
        yp(active[static_cast<std::size_t>(k)]) = s < 0 ? std::min(v, 0.0) : (s > 0 ? std::max(v, 0.0) : v);
    }
    const Residuals r = residuals(xp, yp);
    const double tol = settings_.tol;
    const double bound_scale = 1.0 + std::max(finite_inf_norm(l_stack_), finite_inf_norm(u_stack_));
    const double grad_scale = 1.0 + inf_norm(problem_.linear);
    if (r.primal > tol * bound_scale || r.dual > tol * grad_scale || r.complementarity > tol * bound_scale) {
        return false;
    }
    fill_solution(xp, yp, out);
    out.polished = true;
    return true;
}

QpSolution QpEngine::solve() {
    const auto n = problem_.num_vars();
    const auto rows = a_stack_.rows();
    QpSolution out;
    const double alpha = settings_.alpha;
    const double sigma = settings_.sigma;

    if (n == 0) {
        out.status = QpStatus::Solved;
        out.minimizer = Vector::Zero(0);
        out.ineq_dual = Vector::Zero(problem_.num_rows());
        out.box_dual = Vector::Zero(0);
        out.dual_objective = 0.0;
        return out;
    }

    // Box/row contradictions are immediate certificates.
    for (Eigen::Index i = 0; i < rows; ++i) {
        if (l_stack_(i) > u_stack_(i)) {
            out.status = QpStatus::Infeasible;
            out.diagnostic = "bound contradiction on row " + std::to_string(i);
            fill_solution(d_.cwiseProduct(x_), Vector::Zero(rows), out);
            out.dual_objective = kInf;
            return out;
        }
    }

    Vector rhs(n), xt(n), zt(rows), zhat(rows), x_prev(n), y_prev(rows);
    Vector xu, yu;
    std::size_t iter = 0;
    bool done = false;
    for (iter = 1; iter <= settings_.max_iter; ++iter) {
        x_prev = x_;
        y_prev = y_;
        rhs = sigma * x_ - qbar_ + abar_t_ * (rho_vec_.cwiseProduct(z_) - y_);
        xt = kkt_.solve(rhs);
        zt = abar_ * xt;
        x_ = alpha * xt + (1.0 - alpha) * x_;
        zhat = alpha * zt + (1.0 - alpha) * z_;
        for (Eigen::Index i = 0; i < rows; ++i) {
            const double zn = std::clamp(zhat(i) + y_(i) / rho_vec_(i), lbar_(i), ubar_(i));
            y_(i) += rho_vec_(i) * (zhat(i) - zn);
            z_(i) = zn;
        }

        if (iter % settings_.check_interval == 0 || iter == settings_.max_iter) {
            unscaled_iterates(xu, yu);
            if (converged(xu, yu)) {
                done = true;
                break;
            }
            if (std::isfinite(settings_.cutoff)) {
                const double lb = dual_bound(yu.head(problem_.num_rows()), [&] {
                    Vector vd = Vector::Zero(n);
                    for (std::size_t k = 0; k < boxed_vars_.size(); ++k)
                        vd(boxed_vars_[k]) = yu(problem_.num_rows() + static_cast<Eigen::Index>(k));
                    return vd;
                }());
                if (lb >= settings_.cutoff) {
                    fill_solution(xu, yu, out);
                    out.dual_objective = lb;
                    out.iterations = iter;
                    out.status = QpStatus::Cutoff;
                    return out;
                }
            }
            const Vector dy = e_.cwiseProduct(y_ - y_prev) / cost_scale_;
            if (primal_infeasible(dy)) {
                fill_solution(xu, yu, out);
                out.iterations = iter;
                out.status = QpStatus::Infeasible;
                out.diagnostic = "primal infeasibility certificate (unbounded dual direction)";
                out.dual_objective = kInf;
                return out;
            }
            const Vector dx = d_.cwiseProduct(x_ - x_prev);
            if (dual_infeasible(dx)) {
                fill_solution(xu, yu, out);
                out.iterations = iter;
                out.status = QpStatus::Unbounded;
                out.diagnostic = "dual infeasibility certificate (unbounded primal ray)";
                return out;
            }
        }

        if (settings_.adaptive_rho && iter % settings_.adaptive_rho_interval == 0) {
            const Vector ax = abar_ * x_;
            const Vector px = pbar_ * x_;
            const Vector aty = abar_t_ * y_;
            const double prim = inf_norm(ax - z_) / std::max({inf_norm(ax), inf_norm(z_), 1e-12});
            const double dual = inf_norm(px + qbar_ + aty) /
                                std::max({inf_norm(px), inf_norm(aty), inf_norm(qbar_), 1e-12});
            double rho_new = rho_ * std::sqrt(prim / std::max(dual, 1e-30));
            rho_new = std::clamp(rho_new, 1e-6, 1e6);
            if (rho_new > 5.0 * rho_ || rho_new < 0.2 * rho_) {
                rho_ = rho_new;
                factorize();
            }
        }
    }
    unscaled_iterates(xu, yu);
    out.iterations = std::min(iter, settings_.max_iter);
    if (settings_.polish && polish(xu, yu, out)) {
        out.iterations = std::min(iter, settings_.max_iter);
        out.status = QpStatus::Solved;
        return out;
    }
    fill_solution(xu, yu, out);
    out.status = done ? QpStatus::Solved : QpStatus::MaxIter;
    return out;
}

namespace {

SparseQp to_sparse(const QpProblem& p) {
    SparseQp s;
    s.hessian = p.hessian.sparseView();
    s.linear = p.linear;
    s.constraints = p.ineq.sparseView();
    s.constraints.resize(p.ineq.rows(), p.linear.size());
    if (p.ineq.rows() > 0) s.constraints = p.ineq.sparseView();
    s.row_lower = Vector::Constant(p.ineq.rows(), -kInf);
    s.row_upper = p.ineq_upper;
    s.var_lower = p.lower;
    s.var_upper = p.upper;
    return s;
}

}  // namespace

QpSolution solve_qp(const QpProblem& p, const QpSettings& settings) {
    p.validate();
    QpEngine engine(to_sparse(p), settings);
    return engine.solve();
}

QpSolution solve_qp(const QpProblem& p, double tol, std::size_t max_iter) {
    QpSettings s;
    s.tol = tol;
    s.max_iter = max_iter;
    return solve_qp(p, s);
}

}  // namespace raps
