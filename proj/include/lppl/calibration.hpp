#pragma once

// Calibration of the LPPL model (plain JLS or Zipf-augmented) on one fit window.
//
// The linear parameters (gamma, A, B, C) are slaved to the nonlinear ones
// (tc, m, omega, phi) by least squares, so every optimizer below works in the
// four-dimensional nonlinear space:
//   1. heuristic_search: multi-start random local search with taboo balls,
//   2. refine: Levenberg-Marquardt on the residual vector in box-free coordinates,
//   3. fit_window: refine the best candidates and keep the best distinct fits.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lppl/error.hpp"
#include "lppl/market_data.hpp"
#include "lppl/model.hpp"
#include "lppl/random.hpp"

namespace lppl {

struct CalibrationConfig {
    int n_starts = 200;         // uniform draws seeding the heuristic search
    int local_moves = 80;       // consecutive rejected proposals ending a local search
    double local_step = 0.05;   // initial proposal std-dev, box-normalized
    double taboo_radius = 0.02; // L-infinity radius of taboo balls, box-normalized
    int search_budget = 5000;   // cost evaluations per heuristic search
    int lm_max_iter = 500;
    double lm_tol = 1e-10;      // relative RSS improvement and normalized step tolerance
    std::uint64_t seed = 20100601;
    int keep_best = 10;
    int min_window = 30;        // minimum t2 - t1 in trading days
    int n_refine = 20;          // candidates always refined before stopping early
    int max_refine = 60;        // refinement cap while looking for keep_best distinct fits
    bool qualified_only = false; // restrict scan aggregates to qualified fits
};

// Nonlinear coordinates in the order (tc, m, omega, phi).
using NonlinearVector = std::array<double, 4>;

inline NonlinearVector to_array(const NonlinearParams& p) { return {p.tc, p.m, p.omega, p.phi}; }
inline NonlinearParams from_array(const NonlinearVector& a) { return {a[0], a[1], a[2], a[3]}; }

struct SearchBounds {
    NonlinearVector lower;
    NonlinearVector upper;

    bool contains(const NonlinearParams& p) const {
        const NonlinearVector x = to_array(p);
        for (std::size_t k = 0; k < 4; ++k)
            if (!(x[k] >= lower[k] && x[k] <= upper[k])) return false;
        return true;
    }

    NonlinearVector normalize(const NonlinearParams& p) const {
        NonlinearVector x = to_array(p);
        for (std::size_t k = 0; k < 4; ++k) x[k] = (x[k] - lower[k]) / (upper[k] - lower[k]);
        return x;
    }

    NonlinearParams denormalize(const NonlinearVector& unit) const {
        NonlinearVector x;
        for (std::size_t k = 0; k < 4; ++k) x[k] = lower[k] + unit[k] * (upper[k] - lower[k]);
        return from_array(x);
    }
};

inline SearchBounds search_bounds(double t1, double t2) {
    if (!(t2 > t1)) throw InputError("search bounds need t2 > t1");
    return {{t2, 1e-5, 0.01, 0.0},
            {t2 + 0.375 * (t2 - t1), 1.0 - 1e-5, 40.0, 2.0 * std::numbers::pi - 1e-5}};
}

// ---------------------------------------------------------------------------------------
// Linear slaving

struct SlavedFit {
    LinearParams lin;
    std::vector<double> residuals; // ln p(t) - RHS(t)
    double rss = 0.0;
};

// Least-squares (gamma, A, B, C) for fixed nonlinear parameters; gamma stays 0 for jls.
// Solves the normal equations through a column-pivoted QR of the (column-equilibrated)
// design matrix, which has the same solution with better conditioning.
inline SlavedFit slave_fit(const FactorSeries& s, const NonlinearParams& nl, ModelKind kind) {
    const auto n = static_cast<Eigen::Index>(s.size());
    const Eigen::Index p = kind == ModelKind::zipf ? 4 : 3;
    if (n < p) throw InputError("series shorter than the number of linear parameters");
    if (!(nl.tc > static_cast<double>(s.t2())))
        throw DomainError("tc must lie after the last point of the window");

    Eigen::MatrixXd X(n, p);
    Eigen::VectorXd y(n);
    std::vector<Basis> basis(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        basis[k] = basis_functions(static_cast<double>(s.t[k]), nl);
        Eigen::Index c = 0;
        if (kind == ModelKind::zipf) X(i, c++) = s.zeta[k];
        X(i, c++) = 1.0;
        X(i, c++) = basis[k].f;
        X(i, c) = basis[k].g;
        y(i) = s.ln_p[k];
    }
    Eigen::VectorXd scale(p);
    for (Eigen::Index c = 0; c < p; ++c) {
        scale(c) = X.col(c).norm();
        if (!(scale(c) > 0.0) || !std::isfinite(scale(c)))
            throw RankDeficientError("linear system has a vanishing regressor column");
        X.col(c) /= scale(c);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-11);
    if (qr.rank() < p) throw RankDeficientError("linear system is numerically rank deficient");
    const Eigen::VectorXd coef = qr.solve(y).cwiseQuotient(scale);

    SlavedFit fit;
    Eigen::Index c = 0;
    if (kind == ModelKind::zipf) fit.lin.gamma = coef(c++);
    fit.lin.A = coef(c++);
    fit.lin.B = coef(c++);
    fit.lin.C = coef(c);
    fit.residuals.resize(static_cast<std::size_t>(n));
    for (std::size_t k = 0; k < fit.residuals.size(); ++k) {
        const double rhs =
            fit.lin.gamma * s.zeta[k] + fit.lin.A + fit.lin.B * basis[k].f + fit.lin.C * basis[k].g;
        fit.residuals[k] = s.ln_p[k] - rhs;
        fit.rss += fit.residuals[k] * fit.residuals[k];
    }
    if (!std::isfinite(fit.rss)) throw NumericalError("non-finite residuals");
    return fit;
}

inline LinearParams slave_linear(const FactorSeries& s, const NonlinearParams& nl, ModelKind kind) {
    return slave_fit(s, nl, kind).lin;
}

struct CostValue {
    double rss;
    LinearParams lin;
};

inline CostValue cost(const FactorSeries& s, const NonlinearParams& nl, ModelKind kind) {
    SlavedFit fit = slave_fit(s, nl, kind);
    return {fit.rss, fit.lin};
}

// ---------------------------------------------------------------------------------------
// Heuristic search

struct Candidate {
    NonlinearParams nl;
    double rss;
};

namespace detail {

inline double cost_or_inf(const FactorSeries& s, const NonlinearParams& nl, ModelKind kind) {
    try {
        return slave_fit(s, nl, kind).rss;
    } catch (const NumericalError&) {
        return std::numeric_limits<double>::infinity();
    } catch (const DomainError&) {
        return std::numeric_limits<double>::infinity();
    }
}

inline double reflect_unit(double x) {
    x = std::fmod(std::abs(x), 2.0);
    return x > 1.0 ? 2.0 - x : x;
}

inline double wrap_unit(double x) {
    x -= std::floor(x);
    return std::min(x, 1.0);
}

// phi enters only through cos(. - phi), so its box coordinate is periodic.
inline constexpr std::size_t phase_index = 3;

inline double move_unit(std::size_t k, double x) {
    return k == phase_index ? wrap_unit(x) : reflect_unit(x);
}

// (1+1) evolution strategy constants for dimension 4 (success-rule step control and
// rank-one covariance update along successful steps).
namespace es {
inline constexpr double target_success = 2.0 / 11.0;
inline constexpr double c_p = 1.0 / 12.0;
inline constexpr double damping = 3.0;
inline constexpr double c_c = 1.0 / 3.0;
inline constexpr double c_cov = 2.0 / 22.0;
inline constexpr double p_thresh = 0.44;
} // namespace es

inline bool in_ball(const NonlinearVector& x, const NonlinearVector& centre, double radius) {
    for (std::size_t k = 0; k < 4; ++k)
        if (std::abs(x[k] - centre[k]) >= radius) return false;
    return true;
}

} // namespace detail

// Multi-start taboo search. Uniform starts are ranked by cost; from each start that is
// not inside a taboo ball, a Gaussian local search (reflected at the box) runs with a
// step halved after `local_moves` consecutive rejections. Proposals inside the taboo
// ball of an earlier local minimum are refused. Every local minimum becomes a taboo
// centre. Returns the local minima followed by the unexplored starts, each group sorted
// by cost. Deterministic for a given seed.
inline std::vector<Candidate> heuristic_search(const FactorSeries& s, const SearchBounds& box,
                                               int budget, std::uint64_t seed, ModelKind kind,
                                               const CalibrationConfig& cfg = {}) {
    if (budget < 100) throw InputError("heuristic search budget must be at least 100");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    int remaining = budget;
    const auto eval = [&](const NonlinearVector& x) {
        --remaining;
        return detail::cost_or_inf(s, box.denormalize(x), kind);
    };

    struct Point {
        NonlinearVector x;
        double cost;
        std::size_t order;
    };
    const int n_starts = std::max(1, std::min(cfg.n_starts, budget / 2));
    std::vector<Point> starts;
    starts.reserve(static_cast<std::size_t>(n_starts));
    for (int i = 0; i < n_starts; ++i) {
        NonlinearVector x;
        for (double& v : x) v = unit(rng);
        starts.push_back({x, eval(x), starts.size()});
    }
    const auto by_cost = [](const Point& a, const Point& b) {
        return a.cost != b.cost ? a.cost < b.cost : a.order < b.order;
    };
    std::sort(starts.begin(), starts.end(), by_cost);

    std::vector<Point> minima;
    std::vector<bool> explored(starts.size(), false);
    const auto taboo = [&](const NonlinearVector& x) {
        return std::any_of(minima.begin(), minima.end(), [&](const Point& m) {
            return detail::in_ball(x, m.x, cfg.taboo_radius);
        });
    };
    constexpr double min_step = 1e-9;

    for (std::size_t si = 0; si < starts.size() && remaining > 0; ++si) {
        if (!std::isfinite(starts[si].cost) || taboo(starts[si].x)) continue;
        explored[si] = true;
        NonlinearVector x = starts[si].x;
        double fx = starts[si].cost;
        double sigma = cfg.local_step;
        Eigen::Matrix4d cov = Eigen::Matrix4d::Identity();
        Eigen::Matrix4d chol = Eigen::Matrix4d::Identity();
        Eigen::Vector4d path = Eigen::Vector4d::Zero();
        double success_rate = detail::es::target_success;
        // Each local search may spend a third of what is left, so early (best) starts get
        // most of the budget.
        const int per_search = std::max(10, remaining / 3);
        int fails = 0;
        int moves = 0;
        while (remaining > 0 && moves < per_search && fails < cfg.local_moves &&
               sigma >= min_step) {
            ++moves;
            Eigen::Vector4d z;
            for (Eigen::Index k = 0; k < 4; ++k) z(k) = gauss(rng);
            const Eigen::Vector4d dz = chol * z;
            NonlinearVector y;
            for (std::size_t k = 0; k < 4; ++k)
                y[k] = detail::move_unit(k, x[k] + sigma * dz(static_cast<Eigen::Index>(k)));
            bool improved = false;
            if (!taboo(y)) {
                const double fy = eval(y);
                if (fy < fx) {
                    x = y;
                    fx = fy;
                    improved = true;
                }
            }
            success_rate = (1.0 - detail::es::c_p) * success_rate + (improved ? detail::es::c_p : 0.0);
            sigma *= std::exp((success_rate - detail::es::target_success) /
                              (detail::es::damping * (1.0 - detail::es::target_success)));
            if (!improved) {
                ++fails;
                continue;
            }
            fails = 0;
            if (success_rate < detail::es::p_thresh) {
                path = (1.0 - detail::es::c_c) * path + std::sqrt(detail::es::c_c * (2.0 - detail::es::c_c)) * dz;
                cov = (1.0 - detail::es::c_cov) * cov + detail::es::c_cov * path * path.transpose();
            } else {
                path = (1.0 - detail::es::c_c) * path;
                cov = (1.0 - detail::es::c_cov) * cov +
                      detail::es::c_cov * (path * path.transpose() + detail::es::c_c * (2.0 - detail::es::c_c) * cov);
            }
            Eigen::LLT<Eigen::Matrix4d> llt(cov);
            if (llt.info() == Eigen::Success) chol = llt.matrixL();
        }
        minima.push_back({x, fx, minima.size()});
    }

    std::sort(minima.begin(), minima.end(), by_cost);
    std::vector<Candidate> out;
    for (const Point& m : minima) out.push_back({box.denormalize(m.x), m.cost});
    for (std::size_t si = 0; si < starts.size(); ++si)
        if (!explored[si] && std::isfinite(starts[si].cost))
            out.push_back({box.denormalize(starts[si].x), starts[si].cost});
    return out;
}

// ---------------------------------------------------------------------------------------
// Levenberg-Marquardt refinement

struct FitResult {
    NonlinearParams nl;
    LinearParams lin;
    double rss = std::numeric_limits<double>::infinity();
    std::vector<double> residuals;
    QualificationFlags flags;
    ModelKind model_kind = ModelKind::zipf;
    bool converged = false;
    int iterations = 0;
    bool distinct = true; // false for a fill-in duplicate of a better fit's basin
};

namespace detail {

// Logistic bijection between R and the open interval (lo, hi).
inline double to_unconstrained(double x, double lo, double hi) {
    const double s = std::clamp((x - lo) / (hi - lo), 1e-12, 1.0 - 1e-12);
    return std::log(s) - std::log1p(-s);
}

inline double from_unconstrained(double u, double lo, double hi) {
    return lo + (hi - lo) / (1.0 + std::exp(-u));
}

// Free coordinates for LM: logistic for tc, m, omega; phi itself, wrapped into the box.
inline Eigen::Vector4d free_point(const NonlinearParams& p, const SearchBounds& box) {
    const NonlinearVector x = to_array(p);
    Eigen::Vector4d u;
    for (std::size_t k = 0; k < 4; ++k)
        u(static_cast<Eigen::Index>(k)) =
            k == phase_index ? x[k] : to_unconstrained(x[k], box.lower[k], box.upper[k]);
    return u;
}

inline NonlinearParams box_point(const Eigen::Vector4d& u, const SearchBounds& box) {
    NonlinearVector x;
    for (std::size_t k = 0; k < 4; ++k) {
        const double v = u(static_cast<Eigen::Index>(k));
        if (k == phase_index) {
            const double two_pi = 2.0 * std::numbers::pi;
            x[k] = std::min(v - two_pi * std::floor(v / two_pi), box.upper[k]);
        } else {
            x[k] = from_unconstrained(v, box.lower[k], box.upper[k]);
        }
    }
    return from_array(x);
}

inline FitResult make_result(const NonlinearParams& nl, SlavedFit&& fit, ModelKind kind) {
    FitResult r;
    r.nl = nl;
    r.lin = fit.lin;
    r.rss = fit.rss;
    r.residuals = std::move(fit.residuals);
    r.flags = qualify(nl, fit.lin);
    r.model_kind = kind;
    return r;
}

} // namespace detail

// Levenberg-Marquardt over (tc, m, omega, phi) with the linear parameters re-slaved at
// every iterate. tc, m and omega are mapped through a logistic bijection onto the search
// box and phi is wrapped modulo 2 pi, so every iterate is feasible. Central-difference
// Jacobian; Marquardt damping starting at 1e-3, scaled by 10 on rejection and 0.1 on
// acceptance. The RSS never increases.
inline FitResult refine(const FactorSeries& s, const NonlinearParams& start, const SearchBounds& box,
                        ModelKind kind, const CalibrationConfig& cfg = {}) {
    Eigen::Vector4d u = detail::free_point(start, box);

    NonlinearParams nl = detail::box_point(u, box);
    SlavedFit current = slave_fit(s, nl, kind);
    const auto n = static_cast<Eigen::Index>(current.residuals.size());
    const auto as_vector = [n](const std::vector<double>& r) {
        return Eigen::Map<const Eigen::VectorXd>(r.data(), n);
    };

    double lambda = 1e-3;
    bool converged = false;
    int iter = 0;
    Eigen::MatrixXd J(n, 4);
    for (; iter < cfg.lm_max_iter; ++iter) {
        if (current.rss == 0.0) {
            converged = true;
            break;
        }
        bool jacobian_ok = true;
        for (Eigen::Index k = 0; k < 4 && jacobian_ok; ++k) {
            const double h = 1e-6 * (1.0 + std::abs(u(k)));
            Eigen::Vector4d up = u, down = u;
            up(k) += h;
            down(k) -= h;
            try {
                const SlavedFit fp = slave_fit(s, detail::box_point(up, box), kind);
                const SlavedFit fm = slave_fit(s, detail::box_point(down, box), kind);
                // d(residual)/du; residual = y - model
                J.col(k) = (as_vector(fp.residuals) - as_vector(fm.residuals)) / (2.0 * h);
            } catch (const NumericalError&) {
                jacobian_ok = false;
            } catch (const DomainError&) {
                jacobian_ok = false;
            }
        }
        if (!jacobian_ok) break;

        const Eigen::Matrix4d H = J.transpose() * J;
        const Eigen::Vector4d g = J.transpose() * as_vector(current.residuals);
        const double diag_floor = 1e-12 * std::max(H.diagonal().maxCoeff(), 1e-300);
        bool accepted = false;
        bool stalled = false;
        while (!accepted && !stalled) {
            Eigen::Matrix4d A = H;
            for (Eigen::Index k = 0; k < 4; ++k) A(k, k) += lambda * std::max(H(k, k), diag_floor);
            const Eigen::Vector4d delta = A.ldlt().solve(-g);
            double trial_rss = std::numeric_limits<double>::infinity();
            SlavedFit trial;
            if (delta.allFinite()) {
                try {
                    trial = slave_fit(s, detail::box_point(u + delta, box), kind);
                    trial_rss = trial.rss;
                } catch (const NumericalError&) {
                } catch (const DomainError&) {
                }
            }
            if (trial_rss < current.rss) {
                const double improvement = (current.rss - trial_rss) / current.rss;
                u += delta;
                current = std::move(trial);
                lambda = std::max(lambda * 0.1, 1e-15);
                accepted = true;
                if (improvement < cfg.lm_tol || delta.cwiseAbs().maxCoeff() < cfg.lm_tol)
                    converged = true;
            } else {
                lambda *= 10.0;
                // No descent direction left at machine precision: a local minimum.
                if (lambda > 1e16) stalled = converged = true;
            }
        }
        if (converged) {
            ++iter;
            break;
        }
    }

    FitResult r = detail::make_result(detail::box_point(u, box), std::move(current), kind);
    r.converged = converged;
    r.iterations = iter;
    return r;
}

// ---------------------------------------------------------------------------------------
// Ensembles of best fits

struct FitWindow {
    long t1 = 0;
    long t2 = 0;
    FactorSeries series; // restricted to [t1, t2], zeta normalized on t1-1
};

inline FitWindow make_fit_window(const FactorSeries& s, long t1, long t2, int min_window) {
    if (t2 - t1 < min_window)
        throw InputError("window [" + std::to_string(t1) + ", " + std::to_string(t2) +
                         "] is shorter than the minimum of " + std::to_string(min_window) +
                         " trading days");
    return {t1, t2, restrict_window(s, t1, t2)};
}

struct FitEnsemble {
    long t1 = 0;
    long t2 = 0;
    ModelKind model_kind = ModelKind::zipf;
    std::vector<FitResult> results; // ascending rss, pairwise distinct
};

// Two fits describe the same basin when tc, m and omega all nearly coincide.
inline bool same_basin(const FitResult& a, const FitResult& b) {
    return std::abs(a.nl.tc - b.nl.tc) < 1.0 && std::abs(a.nl.m - b.nl.m) < 0.01 &&
           std::abs(a.nl.omega - b.nl.omega) < 0.1;
}

namespace detail {

// Refined fits of one model: the best fit of each basin, and the displaced duplicates.
struct FitPool {
    std::vector<FitResult> best;
    std::vector<FitResult> spare;
};

inline void merge_result(FitPool& pool, FitResult&& r) {
    if (r.nl.omega > max_qualified_omega || !std::isfinite(r.rss)) return;
    for (FitResult& b : pool.best) {
        if (same_basin(b, r)) {
            if (r.rss < b.rss) std::swap(b, r);
            pool.spare.push_back(std::move(r));
            return;
        }
    }
    pool.best.push_back(std::move(r));
}

inline void sort_by_rss(std::vector<FitResult>& v) {
    std::stable_sort(v.begin(), v.end(), [](const FitResult& a, const FitResult& b) { return a.rss < b.rss; });
}

inline std::size_t count_basins(const std::vector<FitResult>& fits) {
    std::vector<const FitResult*> seen;
    for (const FitResult& r : fits)
        if (std::none_of(seen.begin(), seen.end(), [&](const FitResult* d) { return same_basin(*d, r); }))
            seen.push_back(&r);
    return seen.size();
}

// Keeps the lowest-rss fits of at most `max_distinct` basins. Remaining slots up to
// keep_best take the lowest-rss duplicates of kept basins, then any other leftover fit.
// `distinct` marks the best fit of each basin in the returned ensemble.
inline std::vector<FitResult> select_ensemble(FitPool pool, int keep_best, std::size_t max_distinct) {
    const auto keep = static_cast<std::size_t>(keep_best);
    std::vector<FitResult> all = std::move(pool.best);
    all.insert(all.end(), std::make_move_iterator(pool.spare.begin()), std::make_move_iterator(pool.spare.end()));
    sort_by_rss(all);
    std::vector<FitResult> chosen;
    std::vector<bool> used(all.size(), false);
    const auto in_chosen_basin = [&](const FitResult& r) {
        return std::any_of(chosen.begin(), chosen.end(), [&](const FitResult& c) { return same_basin(c, r); });
    };
    std::size_t basins = 0;
    for (std::size_t i = 0; i < all.size() && basins < std::min(keep, max_distinct); ++i) {
        if (in_chosen_basin(all[i])) continue;
        chosen.push_back(all[i]);
        used[i] = true;
        ++basins;
    }
    for (std::size_t i = 0; i < all.size() && chosen.size() < keep; ++i) {
        if (used[i] || !in_chosen_basin(all[i])) continue;
        chosen.push_back(all[i]);
        used[i] = true;
    }
    for (std::size_t i = 0; i < all.size() && chosen.size() < keep; ++i) {
        if (used[i]) continue;
        chosen.push_back(all[i]);
        used[i] = true;
    }
    sort_by_rss(chosen);
    for (std::size_t i = 0; i < chosen.size(); ++i)
        chosen[i].distinct = std::none_of(chosen.begin(), chosen.begin() + static_cast<std::ptrdiff_t>(i),
                                          [&](const FitResult& c) { return same_basin(c, chosen[i]); });
    return chosen;
}

inline void refine_candidates(const FitWindow& w, const SearchBounds& box,
                              const std::vector<Candidate>& candidates, ModelKind kind,
                              const CalibrationConfig& cfg, FitPool& pool) {
    int refined = 0;
    for (const Candidate& c : candidates) {
        const auto found = static_cast<int>(pool.best.size());
        if (refined >= cfg.max_refine || (refined >= cfg.n_refine && found >= cfg.keep_best)) break;
        ++refined;
        try {
            merge_result(pool, refine(w.series, c.nl, box, kind, cfg));
        } catch (const NumericalError&) {
        } catch (const DomainError&) {
        }
    }
}

inline std::uint64_t model_seed(std::uint64_t seed, ModelKind kind) {
    return derive_seed(seed, {kind == ModelKind::zipf ? 2u : 1u});
}

inline FitEnsemble make_ensemble(const FitWindow& w, ModelKind kind, const FitPool& pool, int keep_best,
                                 std::size_t max_distinct) {
    std::vector<FitResult> results = select_ensemble(pool, keep_best, max_distinct);
    if (std::none_of(results.begin(), results.end(), [](const FitResult& r) { return r.converged; }))
        throw NumericalError("no convergent " + std::string(to_string(kind)) + " fit on window [" +
                             std::to_string(w.t1) + ", " + std::to_string(w.t2) + "]");
    return {w.t1, w.t2, kind, std::move(results)};
}

} // namespace detail

// Heuristic search, LM refinement of the best candidates, and retention of the
// `keep_best` lowest-rss distinct fits. Fits with omega > 20 are discarded; other
// non-qualified fits are kept and flagged.
inline FitEnsemble fit_window(const FitWindow& w, const CalibrationConfig& cfg, ModelKind kind) {
    const SearchBounds box = search_bounds(static_cast<double>(w.t1), static_cast<double>(w.t2));
    const auto candidates = heuristic_search(w.series, box, cfg.search_budget,
                                             detail::model_seed(cfg.seed, kind), kind, cfg);
    detail::FitPool pool;
    detail::refine_candidates(w, box, candidates, kind, cfg, pool);
    return detail::make_ensemble(w, kind, pool, cfg.keep_best, static_cast<std::size_t>(cfg.keep_best));
}

struct NestedFit {
    FitEnsemble jls;
    FitEnsemble zipf;
};

// Fits both models on one window. The best zipf fits seed extra jls refinements, then
// every kept jls fit seeds a zipf refinement, so that min rss(zipf) <= min rss(jls)
// and the zipf ensemble holds a counterpart of each jls fit. Both ensembles are
// truncated to the same size.
inline NestedFit fit_nested(const FitWindow& w, const CalibrationConfig& cfg) {
    const SearchBounds box = search_bounds(static_cast<double>(w.t1), static_cast<double>(w.t2));
    detail::FitPool jls;
    detail::FitPool zipf;
    for (const ModelKind kind : {ModelKind::jls, ModelKind::zipf}) {
        const auto candidates = heuristic_search(w.series, box, cfg.search_budget,
                                                 detail::model_seed(cfg.seed, kind), kind, cfg);
        detail::refine_candidates(w, box, candidates, kind, cfg,
                                  kind == ModelKind::jls ? jls : zipf);
    }
    CalibrationConfig cross = cfg;
    cross.n_refine = cross.max_refine = cfg.keep_best;
    const auto keep = static_cast<std::size_t>(cfg.keep_best);
    std::vector<FitResult> zipf_best = zipf.best;
    detail::sort_by_rss(zipf_best);
    std::vector<Candidate> seeds;
    for (std::size_t k = 0; k < zipf_best.size() && k < keep; ++k)
        seeds.push_back({zipf_best[k].nl, zipf_best[k].rss});
    detail::refine_candidates(w, box, seeds, ModelKind::jls, cross, jls);
    const FitEnsemble jls_first = detail::make_ensemble(w, ModelKind::jls, jls, cfg.keep_best, keep);

    // Every kept jls fit seeds a zipf refinement, whose rss can only be lower.
    seeds.clear();
    for (const FitResult& r : jls_first.results) seeds.push_back({r.nl, r.rss});
    cross.n_refine = cross.max_refine = static_cast<int>(seeds.size());
    detail::refine_candidates(w, box, seeds, ModelKind::zipf, cross, zipf);

    // Both ensembles keep the same number of distinct basins so the pooled residual
    // samples have the same composition.
    const std::size_t basins = std::min({keep, detail::count_basins(jls.best), detail::count_basins(zipf.best)});
    NestedFit out{detail::make_ensemble(w, ModelKind::jls, jls, cfg.keep_best, basins),
                  detail::make_ensemble(w, ModelKind::zipf, zipf, cfg.keep_best, basins)};
    const std::size_t common = std::min(out.jls.results.size(), out.zipf.results.size());
    out.jls.results.resize(common);
    out.zipf.results.resize(common);
    return out;
}

} // namespace lppl
