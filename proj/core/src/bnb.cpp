#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <vector>

#include "raps/error.hpp"
#include "raps/qp.hpp"
#include "raps/selector.hpp"

namespace raps {
namespace {

using Clock = std::chrono::steady_clock;
using Index = Eigen::Index;

constexpr double kInfinity = std::numeric_limits<double>::infinity();
constexpr double kFeasTol = 1e-9;
constexpr double kCutTol = 1e-8;
constexpr double kIntegralTol = 1e-6;

// Selection state per measurement inside a node.
enum : std::int8_t { kOut = 0, kIn = 1, kFree = -1 };
using State = std::vector<std::int8_t>;

// The measurement terms only involve the columns of H that are not
// identically zero. The prior is marginalized onto those columns, which
// leaves every selection's risk unchanged.
struct Problem {
    RapsMode mode = RapsMode::Diag;
    Index n = 0, m = 0, k = 0;
    std::vector<Index> cols;
    Matrix hr;        // m x k
    Vector inv_var;   // 1 / sigma_i^2
    Vector nu0;       // y - H xbar
    Matrix jprior;    // k x k marginal prior information
    Vector prior_innov_sd;  // sqrt(h P- h^T + sigma^2)
    Matrix base;      // J- - J_d_matrix (n x n)
    Vector diag_slack;  // diag(base)
    Matrix w;         // m x n, h_ij^2 / sigma_i^2
};

Problem build_problem(const RapsInstance& inst, RapsMode mode) {
    Problem p;
    p.mode = mode;
    p.n = inst.state_dim();
    p.m = inst.size();
    const Matrix& h = inst.batch.rows;
    for (Index j = 0; j < p.n; ++j) {
        if (p.m > 0 && h.col(j).cwiseAbs().maxCoeff() > 0.0) p.cols.push_back(j);
    }
    p.k = static_cast<Index>(p.cols.size());
    p.hr = Matrix(p.m, p.k);
    for (Index c = 0; c < p.k; ++c) p.hr.col(c) = h.col(p.cols[static_cast<std::size_t>(c)]);
    p.inv_var = inst.batch.weights();
    p.nu0 = p.m > 0 ? Vector(inst.batch.values - h * inst.prior_mean) : Vector(0);

    const Matrix prior_cov = spd_inverse(inst.prior_information);
    Matrix pcc(p.k, p.k);
    for (Index a = 0; a < p.k; ++a)
        for (Index b = 0; b < p.k; ++b)
            pcc(a, b) = prior_cov(p.cols[static_cast<std::size_t>(a)], p.cols[static_cast<std::size_t>(b)]);
    p.jprior = p.k > 0 ? spd_inverse(pcc) : Matrix(0, 0);

    p.prior_innov_sd = Vector(p.m);
    for (Index i = 0; i < p.m; ++i) {
        const Vector hi = p.hr.row(i).transpose();
        p.prior_innov_sd(i) = std::sqrt(hi.dot(pcc * hi) + 1.0 / p.inv_var(i));
    }

    const Matrix jd = inst.spec.matrix();
    p.base = symmetrize(inst.prior_information - jd);
    if (mode == RapsMode::Diag) p.base = Matrix(p.base.diagonal().eval().asDiagonal());
    p.diag_slack = p.base.diagonal();
    p.w = Matrix::Zero(p.m, p.n);
    for (Index i = 0; i < p.m; ++i)
        for (Index j = 0; j < p.n; ++j) p.w(i, j) = h(i, j) * h(i, j) * p.inv_var(i);
    return p;
}

// Spec test for J- + sum_S contributions, given as the k x k accumulated
// measurement information `acc` and its diagonal in full coordinates.
bool feasible(const Problem& p, const Matrix& acc, const Vector& diag_acc) {
    if (((p.diag_slack + diag_acc).array() < -kFeasTol).any()) return false;
    if (p.mode == RapsMode::Diag || p.n == 0) return true;
    Matrix a = p.base;
    for (Index r = 0; r < p.k; ++r)
        for (Index c = 0; c < p.k; ++c)
            a(p.cols[static_cast<std::size_t>(r)], p.cols[static_cast<std::size_t>(c)]) += acc(r, c);
    a.diagonal().array() += kFeasTol;
    Eigen::LLT<Matrix> llt(a);
    return llt.info() == Eigen::Success;
}

Matrix embed(const Problem& p, const Matrix& acc) {
    Matrix a = p.base;
    for (Index r = 0; r < p.k; ++r)
        for (Index c = 0; c < p.k; ++c)
            a(p.cols[static_cast<std::size_t>(r)], p.cols[static_cast<std::size_t>(c)]) += acc(r, c);
    return a;
}

void add_measurement(const Problem& p, Index i, double weight, Matrix& acc, Vector& diag_acc) {
    const auto hi = p.hr.row(i);
    acc.noalias() += (weight * p.inv_var(i)) * hi.transpose() * hi;
    diag_acc += weight * p.w.row(i).transpose();
}

// Closed-form quantities of the fixed-in set F1 of a node.
struct Eval {
    double risk = 0.0;
    Vector delta;    // estimate minus prior mean on the active columns
    Matrix acc;      // sum_F1 h h^T / sigma^2
    Vector diag_acc;
    Vector nu;       // residuals at the F1 estimate
    Vector s;        // h P_F1 h^T
    Vector inc;      // exact risk increase of adding one measurement
};

Eval evaluate(const Problem& p, const State& st) {
    Eval e;
    e.acc = Matrix::Zero(p.k, p.k);
    e.diag_acc = Vector::Zero(p.n);
    Vector g = Vector::Zero(p.k);
    for (Index i = 0; i < p.m; ++i) {
        if (st[static_cast<std::size_t>(i)] != kIn) continue;
        add_measurement(p, i, 1.0, e.acc, e.diag_acc);
        g.noalias() += (p.inv_var(i) * p.nu0(i)) * p.hr.row(i).transpose();
    }
    if (p.k > 0) {
        const Matrix jf1 = p.jprior + e.acc;
        Eigen::LLT<Matrix> llt(jf1);
        if (llt.info() != Eigen::Success) {
            throw Error(ErrorCode::NotPositiveDefinite, "selector: posterior information is singular");
        }
        e.delta = llt.solve(g);
        const Matrix lh = llt.matrixL().solve(p.hr.transpose());
        e.s = lh.colwise().squaredNorm().transpose();
        e.nu = p.nu0 - p.hr * e.delta;
    } else {
        e.delta = Vector(0);
        e.s = Vector::Zero(p.m);
        e.nu = p.nu0;
    }
    double risk = p.k > 0 ? e.delta.dot(p.jprior * e.delta) : 0.0;
    for (Index i = 0; i < p.m; ++i) {
        if (st[static_cast<std::size_t>(i)] == kIn) risk += p.inv_var(i) * e.nu(i) * e.nu(i);
    }
    e.risk = std::max(risk, 0.0);
    e.inc = Vector(p.m);
    for (Index i = 0; i < p.m; ++i) e.inc(i) = e.nu(i) * e.nu(i) / (1.0 / p.inv_var(i) + e.s(i));
    return e;
}

Vector selection_from_state(const State& st) {
    Vector b(static_cast<Index>(st.size()));
    for (std::size_t i = 0; i < st.size(); ++i) b(static_cast<Index>(i)) = st[i] == kIn ? 1.0 : 0.0;
    return b;
}

bool set_feasible(const Problem& p, const State& st) {
    Matrix acc = Matrix::Zero(p.k, p.k);
    Vector diag_acc = Vector::Zero(p.n);
    for (Index i = 0; i < p.m; ++i)
        if (st[static_cast<std::size_t>(i)] == kIn) add_measurement(p, i, 1.0, acc, diag_acc);
    return feasible(p, acc, diag_acc);
}

// Spec violation used by the greedy repair: summed diagonal shortfall (Diag)
// or -lambda_min(J - J_d) (Full).
double violation(const Problem& p, const Matrix& acc, const Vector& diag_acc) {
    if (p.mode == RapsMode::Diag) return (-(p.diag_slack + diag_acc).array()).max(0.0).sum();
    if (p.n == 0) return 0.0;
    return std::max(0.0, -min_eigenvalue(symmetrize(embed(p, acc))));
}

bool preferred(const Vector& a, const Vector& b) {
    const double ca = a.sum(), cb = b.sum();
    if (ca != cb) return ca < cb;
    for (Index i = 0; i < a.size(); ++i)
        if (a(i) != b(i)) return a(i) < b(i);
    return false;
}

double subset_risk(const Problem& p, const State& st) {
    Matrix j = p.jprior;
    Vector g = Vector::Zero(p.k);
    double sq = 0.0;
    for (Index i = 0; i < p.m; ++i) {
        if (st[static_cast<std::size_t>(i)] != kIn) continue;
        const auto hi = p.hr.row(i);
        j.noalias() += p.inv_var(i) * hi.transpose() * hi;
        g.noalias() += (p.inv_var(i) * p.nu0(i)) * hi.transpose();
        sq += p.inv_var(i) * p.nu0(i) * p.nu0(i);
    }
    if (p.k == 0) return sq;
    Eigen::LLT<Matrix> llt(j);
    if (llt.info() != Eigen::Success) {
        throw Error(ErrorCode::NotPositiveDefinite, "selector: posterior information is singular");
    }
    const Vector delta = llt.solve(g);
    double risk = delta.dot(p.jprior * delta);
    for (Index i = 0; i < p.m; ++i) {
        if (st[static_cast<std::size_t>(i)] != kIn) continue;
        const double r = p.nu0(i) - p.hr.row(i).dot(delta);
        risk += p.inv_var(i) * r * r;
    }
    return std::max(risk, 0.0);
}

struct Node {
    double bound = 0.0;
    std::uint64_t seq = 0;
    State st;
};

struct BestBoundOrder {
    bool operator()(const Node& a, const Node& b) const {
        if (a.bound != b.bound) return a.bound > b.bound;
        return a.seq > b.seq;
    }
};

enum class NodeOutcome { Pruned, Closed, Branch };

struct NodeResult {
    NodeOutcome outcome = NodeOutcome::Pruned;
    double bound = kInfinity;
    Index branch_var = -1;
    State st;  // including fixings made while bounding
};

class Solver {
public:
    Solver(const RapsInstance& inst, RapsMode mode, const BnbOptions& opts)
        : inst_(inst), opts_(opts), p_(build_problem(inst, mode)) {
        big_m_scale_ = Vector::Ones(p_.m);
    }

    SolveReport run();
    double probe(const State& st, double upper);

private:
    double cutoff() const { return best_risk_ + opts_.gap; }
    void offer(const State& st, double risk);
    bool greedy_complete(State& st, const State& allowed);
    void drop_redundant(State& st);
    void local_search(State& st);
    void try_incumbent(State st, const State& allowed);

    NodeResult process(State st, double upper);
    NodeResult process_combinatorial(State st, const Eval& e, double upper);
    NodeResult process_qp(State st, const Eval& e, double upper);
    double combinatorial_bound(const Eval& e, const std::vector<Index>& free) const;
    bool completable(const Eval& e, const std::vector<Index>& free) const;
    Index cheapest(const Eval& e, const std::vector<Index>& free) const;

    const RapsInstance& inst_;
    BnbOptions opts_;
    Problem p_;

    double best_risk_ = kInfinity;
    Vector incumbent_;
    double incumbent_risk_ = kInfinity;
    Vector big_m_scale_;
    std::vector<Vector> cuts_;  // unit vectors in full coordinates
    std::size_t doublings_ = 0;
};

void Solver::offer(const State& st, double risk) {
    const Vector b = selection_from_state(st);
    if (risk < best_risk_) best_risk_ = risk;
    if (incumbent_.size() == 0) {
        incumbent_ = b;
        incumbent_risk_ = risk;
        return;
    }
    const bool cand_ok = risk <= best_risk_ + opts_.gap;
    const bool inc_ok = incumbent_risk_ <= best_risk_ + opts_.gap;
    if (!inc_ok || (cand_ok && preferred(b, incumbent_))) {
        incumbent_ = b;
        incumbent_risk_ = risk;
    }
}

// Switch on measurements from `allowed` (entries kFree) until the requirement holds,
// each time taking the largest violation reduction per unit risk increase.
bool Solver::greedy_complete(State& st, const State& allowed) {
    Matrix acc = Matrix::Zero(p_.k, p_.k);
    Vector diag_acc = Vector::Zero(p_.n);
    for (Index i = 0; i < p_.m; ++i)
        if (st[static_cast<std::size_t>(i)] == kIn) add_measurement(p_, i, 1.0, acc, diag_acc);
    while (!feasible(p_, acc, diag_acc)) {
        const Eval e = evaluate(p_, st);
        const double v0 = violation(p_, acc, diag_acc);
        Index pick = -1;
        double best_score = 0.0;
        for (Index j = 0; j < p_.m; ++j) {
            const auto sj = static_cast<std::size_t>(j);
            if (allowed[sj] != kFree || st[sj] == kIn) continue;
            Matrix a2 = acc;
            Vector d2 = diag_acc;
            add_measurement(p_, j, 1.0, a2, d2);
            const double red = v0 - violation(p_, a2, d2);
            if (red <= 1e-15) continue;
            const double score = red / std::max(e.inc(j), 1e-12);
            if (score > best_score) {
                best_score = score;
                pick = j;
            }
        }
        if (pick < 0) {
            // No single measurement lowers the violation measure; add the most
            // informative one along the weakest direction.
            Vector dir = Vector::Zero(p_.n);
            if (p_.mode == RapsMode::Full) {
                dir = sym_eig_min(symmetrize(embed(p_, acc))).vector;
            } else {
                for (Index c = 0; c < p_.n; ++c)
                    if (p_.diag_slack(c) + diag_acc(c) < -kFeasTol) dir(c) = 1.0;
            }
            double best_gain = 0.0;
            for (Index j = 0; j < p_.m; ++j) {
                const auto sj = static_cast<std::size_t>(j);
                if (allowed[sj] != kFree || st[sj] == kIn) continue;
                double proj = 0.0;
                for (Index c = 0; c < p_.k; ++c) proj += p_.hr(j, c) * dir(p_.cols[static_cast<std::size_t>(c)]);
                const double gain = proj * proj * p_.inv_var(j);
                if (gain > best_gain) {
                    best_gain = gain;
                    pick = j;
                }
            }
        }
        if (pick < 0) return false;
        st[static_cast<std::size_t>(pick)] = kIn;
        add_measurement(p_, pick, 1.0, acc, diag_acc);
    }
    return true;
}

// Remove selected measurements that the requirement does not need, largest risk
// reduction first.
void Solver::drop_redundant(State& st) {
    for (;;) {
        const double r0 = subset_risk(p_, st);
        Index pick = -1;
        double best = r0;
        for (Index i = 0; i < p_.m; ++i) {
            auto& si = st[static_cast<std::size_t>(i)];
            if (si != kIn) continue;
            si = kOut;
            if (set_feasible(p_, st)) {
                const double r = subset_risk(p_, st);
                if (r <= best) {
                    best = r;
                    pick = i;
                }
            }
            si = kIn;
        }
        if (pick < 0) return;
        st[static_cast<std::size_t>(pick)] = kOut;
    }
}

// Best-improvement drop/swap search over feasible selections.
void Solver::local_search(State& st) {
    drop_redundant(st);
    for (int iter = 0; iter < 200; ++iter) {
        const double r0 = subset_risk(p_, st);
        double best = r0 - 1e-12;
        Index out = -1, in = -1;
        for (Index i = 0; i < p_.m; ++i) {
            auto& si = st[static_cast<std::size_t>(i)];
            if (si != kIn) continue;
            si = kOut;
            for (Index j = 0; j < p_.m; ++j) {
                auto& sj = st[static_cast<std::size_t>(j)];
                if (j == i || sj == kIn) continue;
                sj = kIn;
                if (set_feasible(p_, st)) {
                    const double r = subset_risk(p_, st);
                    if (r < best) {
                        best = r;
                        out = i;
                        in = j;
                    }
                }
                sj = kOut;
            }
            si = kIn;
        }
        if (out < 0) return;
        st[static_cast<std::size_t>(out)] = kOut;
        st[static_cast<std::size_t>(in)] = kIn;
        drop_redundant(st);
    }
}

void Solver::try_incumbent(State st, const State& allowed) {
    for (auto& s : st)
        if (s == kFree) s = kOut;
    if (!greedy_complete(st, allowed)) return;
    drop_redundant(st);
    offer(st, subset_risk(p_, st));
}

bool Solver::completable(const Eval& e, const std::vector<Index>& free) const {
    Matrix acc = e.acc;
    Vector diag_acc = e.diag_acc;
    for (Index i : free) add_measurement(p_, i, 1.0, acc, diag_acc);
    return feasible(p_, acc, diag_acc);
}

Index Solver::cheapest(const Eval& e, const std::vector<Index>& free) const {
    Index pick = -1;
    for (Index i : free)
        if (pick < 0 || e.inc(i) < e.inc(pick)) pick = i;
    return pick;
}

// Lower bound on risk(F1 u T) over spec-completing T within `free`:
//  - bottleneck: with free measurements sorted by their single-measurement
//    increase, T must contain an element at or beyond the first prefix that
//    completes the requirement, and risk is monotone in the selection;
//  - split prior: splitting J_F1 evenly over the t = |T| new terms gives
//    risk(F1 u T) >= risk(F1) + sum_T nu_i^2 / (sigma_i^2 + t s_i).
double Solver::combinatorial_bound(const Eval& e, const std::vector<Index>& free) const {
    std::vector<Index> order = free;
    std::sort(order.begin(), order.end(), [&](Index a, Index b) {
        if (e.inc(a) != e.inc(b)) return e.inc(a) < e.inc(b);
        return a < b;
    });
    Matrix acc = e.acc;
    Vector diag_acc = e.diag_acc;
    double bottleneck = kInfinity;
    for (Index i : order) {
        add_measurement(p_, i, 1.0, acc, diag_acc);
        if (feasible(p_, acc, diag_acc)) {
            bottleneck = e.inc(i);
            break;
        }
    }
    if (!std::isfinite(bottleneck)) return kInfinity;

    std::size_t kmin = 1;
    std::vector<double> ws;
    for (Index c = 0; c < p_.n; ++c) {
        double deficit = -(p_.diag_slack(c) + e.diag_acc(c));
        if (deficit <= kFeasTol) continue;
        ws.clear();
        for (Index i : free) ws.push_back(p_.w(i, c));
        std::sort(ws.begin(), ws.end(), std::greater<>());
        std::size_t need = 0;
        while (need < ws.size() && deficit > kFeasTol) deficit -= ws[need++];
        kmin = std::max(kmin, need);
    }
    double split = kInfinity;
    std::vector<double> c(free.size());
    for (std::size_t t = kmin; t <= free.size(); ++t) {
        for (std::size_t q = 0; q < free.size(); ++q) {
            const Index i = free[q];
            c[q] = e.nu(i) * e.nu(i) / (1.0 / p_.inv_var(i) + static_cast<double>(t) * e.s(i));
        }
        std::nth_element(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(t - 1), c.end());
        double sum = 0.0;
        for (std::size_t q = 0; q < t; ++q) sum += c[q];
        split = std::min(split, sum);
    }
    return e.risk + std::max(bottleneck, split);
}

NodeResult Solver::process(State st, double upper) {
    const Eval e = evaluate(p_, st);
    if (feasible(p_, e.acc, e.diag_acc)) {
        // Risk is monotone in the selection: F1 is optimal for its subtree.
        State leaf = st;
        for (auto& s : leaf)
            if (s == kFree) s = kOut;
        offer(leaf, e.risk);
        NodeResult r;
        r.outcome = NodeOutcome::Closed;
        r.bound = e.risk;
        return r;
    }
    if (opts_.relaxation == Relaxation::BigMQp) return process_qp(std::move(st), e, upper);
    return process_combinatorial(std::move(st), e, upper);
}

NodeResult Solver::process_combinatorial(State st, const Eval& e, double upper) {
    NodeResult r;
    std::vector<Index> free;
    for (Index i = 0; i < p_.m; ++i) {
        auto& s = st[static_cast<std::size_t>(i)];
        if (s != kFree) continue;
        if (e.risk + e.inc(i) > upper) {
            s = kOut;  // any completion using i is already worse than the cutoff
        } else {
            free.push_back(i);
        }
    }
    if (free.empty() || !completable(e, free)) return r;
    r.bound = combinatorial_bound(e, free);
    if (!(r.bound <= upper)) {
        r.bound = kInfinity;
        return r;
    }
    r.outcome = NodeOutcome::Branch;
    r.branch_var = opts_.branching == Branching::LowestIndex ? free.front() : cheapest(e, free);
    r.st = std::move(st);
    return r;
}

NodeResult Solver::process_qp(State st, const Eval& e, double upper) {
    NodeResult r;
    std::vector<Index> free;
    for (Index i = 0; i < p_.m; ++i)
        if (st[static_cast<std::size_t>(i)] == kFree) free.push_back(i);
    if (free.empty() || !completable(e, free)) return r;

    const Index k = p_.k;
    const auto f = static_cast<Index>(free.size());
    const Index nv = k + 2 * f;
    const Matrix jf1 = p_.jprior + e.acc;
    Vector local_scale = Vector::Ones(f);
    const double gap_to_cut = upper - e.risk;
    const bool incumbent_rule =
        opts_.big_m_rule == BigMRule::IncumbentBound && std::isfinite(gap_to_cut) && !opts_.fixed_big_m;

    auto big_m = [&](Index t) {
        const Index i = free[static_cast<std::size_t>(t)];
        if (opts_.fixed_big_m) return *opts_.fixed_big_m;
        if (incumbent_rule) {
            const double reach = std::sqrt(std::max(gap_to_cut, 0.0) * e.s(i));
            return local_scale(t) * ((std::abs(e.nu(i)) + reach) * (1.0 + 1e-6) + 1e-9);
        }
        return opts_.big_m_multiplier * p_.prior_innov_sd(i) * big_m_scale_(i);
    };

    QpSolution sol;
    Vector mvals(f);
    double lam_prev = -kInfinity;
    int stall = 0;
    const std::size_t cut_cap = static_cast<std::size_t>(50 * std::max<Index>(p_.n, 1));
    r.bound = e.risk;  // trivial bound, valid even if the loop below runs out of rounds
    for (int round = 0; round < 200; ++round) {
        for (Index t = 0; t < f; ++t) mvals(t) = big_m(t);

        std::vector<Eigen::Triplet<double>> ph, ac;
        for (Index a = 0; a < k; ++a)
            for (Index b = 0; b < k; ++b)
                if (jf1(a, b) != 0.0) ph.emplace_back(a, b, 2.0 * jf1(a, b));
        for (Index t = 0; t < f; ++t) ph.emplace_back(k + t, k + t, 2.0 * p_.inv_var(free[static_cast<std::size_t>(t)]));

        std::vector<double> lo, hi;
        Index row = 0;
        for (Index t = 0; t < f; ++t) {
            const Index i = free[static_cast<std::size_t>(t)];
            const Index zc = k + t, bc = k + f + t;
            const double mm = mvals(t), nu = e.nu(i);
            // z <= M b, z >= -M b
            ac.emplace_back(row, zc, 1.0);
            ac.emplace_back(row, bc, -mm);
            lo.push_back(-kInfinity);
            hi.push_back(0.0);
            ++row;
            ac.emplace_back(row, zc, 1.0);
            ac.emplace_back(row, bc, mm);
            lo.push_back(0.0);
            hi.push_back(kInfinity);
            ++row;
            // |r - z| <= M (1 - b) with r = nu - h u
            for (Index c = 0; c < k; ++c)
                if (p_.hr(i, c) != 0.0) ac.emplace_back(row, c, -p_.hr(i, c));
            ac.emplace_back(row, zc, -1.0);
            ac.emplace_back(row, bc, mm);
            lo.push_back(-kInfinity);
            hi.push_back(mm - nu);
            ++row;
            for (Index c = 0; c < k; ++c)
                if (p_.hr(i, c) != 0.0) ac.emplace_back(row, c, -p_.hr(i, c));
            ac.emplace_back(row, zc, -1.0);
            ac.emplace_back(row, bc, -mm);
            lo.push_back(-mm - nu);
            hi.push_back(kInfinity);
            ++row;
        }
        for (Index c = 0; c < p_.n; ++c) {
            const double deficit = -(p_.diag_slack(c) + e.diag_acc(c));
            if (deficit <= kFeasTol) continue;
            for (Index t = 0; t < f; ++t) {
                const double wv = p_.w(free[static_cast<std::size_t>(t)], c);
                if (wv != 0.0) ac.emplace_back(row, k + f + t, wv);
            }
            lo.push_back(deficit);
            hi.push_back(kInfinity);
            ++row;
        }
        if (p_.mode == RapsMode::Full) {
            const Matrix cur = embed(p_, e.acc);
            for (const Vector& v : cuts_) {
                for (Index t = 0; t < f; ++t) {
                    const Index i = free[static_cast<std::size_t>(t)];
                    double proj = 0.0;
                    for (Index c = 0; c < k; ++c) proj += p_.hr(i, c) * v(p_.cols[static_cast<std::size_t>(c)]);
                    const double coef = p_.inv_var(i) * proj * proj;
                    if (coef != 0.0) ac.emplace_back(row, k + f + t, coef);
                }
                lo.push_back(-v.dot(cur * v));
                hi.push_back(kInfinity);
                ++row;
            }
        }

        SparseQp qp;
        qp.hessian = SparseMatrix(nv, nv);
        qp.hessian.setFromTriplets(ph.begin(), ph.end());
        qp.constraints = SparseMatrix(row, nv);
        qp.constraints.setFromTriplets(ac.begin(), ac.end());
        qp.linear = Vector::Zero(nv);
        qp.row_lower = Eigen::Map<Vector>(lo.data(), row);
        qp.row_upper = Eigen::Map<Vector>(hi.data(), row);
        qp.var_lower = Vector::Constant(nv, -kInfinity);
        qp.var_upper = Vector::Constant(nv, kInfinity);
        qp.var_lower.tail(f).setZero();
        qp.var_upper.tail(f).setOnes();

        QpSettings settings;
        settings.tol = 1e-8;
        settings.max_iter = 20000;
        // Early cutoff is only sound when every M is certified for the subtree.
        if (incumbent_rule || opts_.fixed_big_m) settings.cutoff = upper - e.risk;
        QpEngine engine(std::move(qp), settings);
        sol = engine.solve();

        // With an uncertified M, a residual pinned at its M (or an infeasible
        // relaxation) means M may be cutting off the optimum: enlarge and re-solve.
        if (!opts_.fixed_big_m && sol.status != QpStatus::Cutoff) {
            bool enlarged = false;
            for (Index t = 0; t < f; ++t) {
                const Index i = free[static_cast<std::size_t>(t)];
                bool pinned = sol.status == QpStatus::Infeasible && !incumbent_rule;
                if (!pinned && sol.minimizer.size() == nv) {
                    double hu = 0.0;
                    for (Index c = 0; c < k; ++c) hu += p_.hr(i, c) * sol.minimizer(c);
                    pinned = std::abs(e.nu(i) - hu) >= 0.99 * mvals(t);
                }
                if (!pinned) continue;
                if (incumbent_rule) {
                    local_scale(t) *= 2.0;
                } else {
                    big_m_scale_(i) *= 2.0;
                }
                ++doublings_;
                enlarged = true;
            }
            if (enlarged) continue;
        }

        if (sol.status == QpStatus::Cutoff) return r;
        if (sol.status == QpStatus::Infeasible) {
            // Certified M (or the test hook): the subtree has no feasible point
            // under the current cuts, or M is deliberately wrong. Use the trivial bound.
            sol.dual_objective = 0.0;
        }
        double value = std::isfinite(sol.dual_objective) ? std::max(sol.dual_objective, 0.0) : 0.0;
        r.bound = e.risk + value;
        if (r.bound > upper) {
            r.bound = kInfinity;
            return r;
        }

        if (p_.mode == RapsMode::Full && sol.minimizer.size() == nv) {
            Matrix acc = e.acc;
            Vector diag_acc = e.diag_acc;
            for (Index t = 0; t < f; ++t)
                add_measurement(p_, free[static_cast<std::size_t>(t)], std::clamp(sol.minimizer(k + f + t), 0.0, 1.0),
                                acc, diag_acc);
            const EigenPair ep = sym_eig_min(symmetrize(embed(p_, acc)));
            if (ep.value < -kCutTol && cuts_.size() < cut_cap) {
                stall = (ep.value - lam_prev < 1e-10) ? stall + 1 : 0;
                lam_prev = ep.value;
                if (stall < 3) {
                    cuts_.push_back(ep.vector.normalized());
                    continue;
                }
            }
        }
        break;
    }

    // Incumbent from rounding at 1/2, repaired within this subtree.
    const Vector bx = sol.minimizer.size() == nv ? Vector(sol.minimizer.tail(f)) : Vector::Zero(f);
    State rounded = st;
    for (Index t = 0; t < f; ++t) rounded[static_cast<std::size_t>(free[static_cast<std::size_t>(t)])] = bx(t) > 0.5 ? kIn : kFree;
    try_incumbent(rounded, st);

    Index frac = -1;
    double most = kIntegralTol;
    for (Index t = 0; t < f; ++t) {
        const double d = std::min(bx(t), 1.0 - bx(t));
        if (d > most) {
            most = d;
            frac = t;
        }
    }
    if (frac < 0) {
        // Integral relaxation: its rounding is optimal for the subtree when feasible.
        State leaf = st;
        for (Index t = 0; t < f; ++t) leaf[static_cast<std::size_t>(free[static_cast<std::size_t>(t)])] = bx(t) > 0.5 ? kIn : kOut;
        if (set_feasible(p_, leaf) && !opts_.fixed_big_m) {
            offer(leaf, subset_risk(p_, leaf));
            r.outcome = NodeOutcome::Closed;
            return r;
        }
    }
    r.outcome = NodeOutcome::Branch;
    switch (opts_.branching) {
        case Branching::LowestIndex: r.branch_var = free.front(); break;
        case Branching::CheapestIncrement: r.branch_var = cheapest(e, free); break;
        default: r.branch_var = frac >= 0 ? free[static_cast<std::size_t>(frac)] : free.front(); break;
    }
    r.st = std::move(st);
    return r;
}

SolveReport make_report(const RapsInstance& inst, const Vector& b, SolveStatus status) {
    SolveReport rep;
    rep.selection = SelectionVector(b);
    const SelectionRisk sr = optimal_risk_for_selection(inst, rep.selection);
    rep.estimate = sr.estimate;
    rep.risk = sr.risk;
    rep.posterior_information = posterior_information(inst, rep.selection);
    rep.status = status;
    return rep;
}

SolveReport Solver::run() {
    const auto start = Clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(Clock::now() - start).count(); };
    const auto m = static_cast<std::size_t>(p_.m);

    const State all_in(m, kIn);
    if (!set_feasible(p_, all_in)) {
        SolveReport rep = make_report(inst_, Vector::Ones(p_.m), SolveStatus::InfeasibleSpec);
        rep.wall_time = elapsed();
        rep.gap = kInfinity;
        return rep;
    }

    const State all_free(m, kFree);
    {
        State st(m, kOut);
        if (greedy_complete(st, all_free)) {
            if (opts_.local_search) {
                local_search(st);
            } else {
                drop_redundant(st);
            }
            offer(st, subset_risk(p_, st));
        }
        offer(all_in, subset_risk(p_, all_in));
    }

    const bool timed = opts_.time_limit > 0.0 && std::isfinite(opts_.time_limit);
    std::priority_queue<Node, std::vector<Node>, BestBoundOrder> heap;
    std::vector<Node> stack;
    const bool dfs = opts_.order == NodeOrder::DepthFirst;
    std::uint64_t seq = 0;
    auto push = [&](Node node) {
        node.seq = seq++;
        if (dfs) {
            stack.push_back(std::move(node));
        } else {
            heap.push(std::move(node));
        }
    };
    auto empty = [&] { return dfs ? stack.empty() : heap.empty(); };
    auto pop = [&] {
        Node node;
        if (dfs) {
            node = std::move(stack.back());
            stack.pop_back();
        } else {
            node = heap.top();
            heap.pop();
        }
        return node;
    };

    push(Node{0.0, 0, all_free});
    std::size_t processed = 0;
    bool limit_hit = false;
    std::vector<Node> open;
    while (!empty()) {
        Node node = pop();
        if (node.bound > cutoff()) continue;
        if (processed >= opts_.node_limit || (timed && elapsed() > opts_.time_limit)) {
            limit_hit = true;
            open.push_back(std::move(node));
            break;
        }
        ++processed;
        NodeResult res = process(std::move(node.st), cutoff());
        if (res.outcome != NodeOutcome::Branch) continue;
        const auto j = static_cast<std::size_t>(res.branch_var);
        Node in{res.bound, 0, res.st};
        in.st[j] = kIn;
        Node out{res.bound, 0, std::move(res.st)};
        out.st[j] = kOut;
        if (dfs) {
            push(std::move(out));
            push(std::move(in));
        } else {
            push(std::move(in));
            push(std::move(out));
        }
    }

    SolveReport rep = make_report(inst_, incumbent_, SolveStatus::Optimal);
    rep.nodes_explored = processed;
    rep.big_m_doublings = doublings_;
    rep.cuts_added = cuts_.size();
    if (limit_hit) {
        double lowest = kInfinity;
        for (const Node& nd : open) lowest = std::min(lowest, nd.bound);
        while (!empty()) {
            const Node nd = pop();
            if (nd.bound <= cutoff()) lowest = std::min(lowest, nd.bound);
        }
        if (std::isfinite(lowest)) {
            rep.status = SolveStatus::IterationLimit;
            rep.gap = std::max(0.0, best_risk_ - lowest);
        }
    }
    rep.wall_time = elapsed();
    return rep;
}

double Solver::probe(const State& st, double upper) {
    const NodeResult r = process(st, upper);
    if (r.outcome == NodeOutcome::Pruned) return kInfinity;
    return r.bound;
}

}  // namespace

SolveReport solve_raps(const RapsInstance& inst, RapsMode mode, const BnbOptions& opts) {
    inst.validate();
    opts.validate();
    Solver solver(inst, mode, opts);
    return solver.run();
}

double node_lower_bound(const RapsInstance& inst, RapsMode mode, const std::vector<Index>& fixed_one,
                        const std::vector<Index>& fixed_zero, double upper_bound, const BnbOptions& opts) {
    inst.validate();
    opts.validate();
    State st(static_cast<std::size_t>(inst.size()), kFree);
    for (Index i : fixed_one) {
        if (i < 0 || i >= inst.size()) throw Error(ErrorCode::DimensionMismatch, "node_lower_bound: bad index");
        st[static_cast<std::size_t>(i)] = kIn;
    }
    for (Index i : fixed_zero) {
        if (i < 0 || i >= inst.size()) throw Error(ErrorCode::DimensionMismatch, "node_lower_bound: bad index");
        st[static_cast<std::size_t>(i)] = kOut;
    }
    Solver solver(inst, mode, opts);
    return solver.probe(st, upper_bound);
}

}  // namespace raps
