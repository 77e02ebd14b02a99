#pragma once

// Nested-model comparison (Wilks likelihood ratio with a chi-square(1) reference),
// pooled best-fit residual tests, window scans and their summary statistics.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "lppl/calibration.hpp"
#include "lppl/error.hpp"
#include "lppl/random.hpp"

namespace lppl {

// Survival function of the chi-square distribution with one degree of freedom.
inline double sf_chi2_1(double w) {
    if (std::isnan(w) || w < 0.0) throw DomainError("chi-square statistic must be non-negative");
    return std::erfc(std::sqrt(0.5 * w));
}

struct WilksReport {
    double W = 0.0;
    int dof = 1;
    double p_value = 1.0;
    std::size_t T = 0;
    bool reject_at_5pct = false;
    bool clamped = false;   // rss_zipf > rss_jls: optimizer failure, W forced to 0
    bool exact_fit = false; // rss_zipf == 0 < rss_jls: W infinite, p = 0
};

namespace detail {

inline double sum_squares(std::span<const double> r) {
    double s = 0.0;
    for (const double x : r) s += x * x;
    return s;
}

inline WilksReport wilks_from_rss(double rss_jls, double rss_zipf, std::size_t T) {
    WilksReport rep;
    rep.T = T;
    if (rss_zipf == 0.0 && rss_jls > 0.0) {
        rep.W = std::numeric_limits<double>::infinity();
        rep.p_value = 0.0;
        rep.exact_fit = true;
    } else if (rss_zipf > rss_jls) {
        rep.W = 0.0;
        rep.p_value = 1.0;
        rep.clamped = true;
    } else if (rss_zipf == rss_jls) {
        rep.W = 0.0;
        rep.p_value = 1.0;
    } else {
        // With MLE variances rss/T, both normalized quadratic terms equal T and cancel.
        rep.W = static_cast<double>(T) * std::log(rss_jls / rss_zipf);
        rep.p_value = sf_chi2_1(rep.W);
    }
    rep.reject_at_5pct = rep.p_value < 0.05;
    return rep;
}

} // namespace detail

inline WilksReport wilks_statistic(std::span<const double> res_jls, std::span<const double> res_zipf) {
    if (res_jls.size() != res_zipf.size())
        throw InputError("Wilks test needs residual vectors of equal length");
    if (res_jls.size() < 10) throw InputError("Wilks test needs at least 10 residuals");
    return detail::wilks_from_rss(detail::sum_squares(res_jls), detail::sum_squares(res_zipf),
                                  res_jls.size());
}

// Wilks test on the concatenated residuals of all kept fits of each model.
inline WilksReport pooled_wilks(const FitEnsemble& jls, const FitEnsemble& zipf) {
    if (jls.t1 != zipf.t1 || jls.t2 != zipf.t2)
        throw InputError("pooled Wilks test needs ensembles fitted on the same window");
    if (jls.results.size() != zipf.results.size() || jls.results.empty())
        throw InputError("pooled Wilks test needs ensembles with the same number of fits");
    std::vector<double> pooled_jls;
    std::vector<double> pooled_zipf;
    for (std::size_t k = 0; k < jls.results.size(); ++k) {
        const auto& rj = jls.results[k].residuals;
        const auto& rz = zipf.results[k].residuals;
        pooled_jls.insert(pooled_jls.end(), rj.begin(), rj.end());
        pooled_zipf.insert(pooled_zipf.end(), rz.begin(), rz.end());
    }
    return wilks_statistic(pooled_jls, pooled_zipf);
}

struct SummaryStats {
    double mean = 0.0;
    double median = 0.0;
    double std = 0.0; // sample standard deviation (n-1); NaN for a single value
    std::size_t n = 0;
};

inline SummaryStats aggregate_stats(std::span<const double> values) {
    if (values.empty()) throw InputError("statistics of an empty sample");
    SummaryStats st;
    st.n = values.size();
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    // Summing in sorted order makes the result independent of the input order.
    st.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(st.n);
    const std::size_t mid = st.n / 2;
    st.median = st.n % 2 == 1 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
    if (st.n < 2) {
        st.std = std::numeric_limits<double>::quiet_NaN();
    } else {
        double ss = 0.0;
        for (const double v : sorted) ss += (v - st.mean) * (v - st.mean);
        st.std = std::sqrt(ss / static_cast<double>(st.n - 1));
    }
    return st;
}

struct WindowFit {
    long t1 = 0;
    long t2 = 0;
    bool ok = false;
    std::string error;
    NestedFit fits;
};

struct ScanResult {
    std::vector<WindowFit> windows; // canonical (t1, t2) order
    SummaryStats tc_jls;
    SummaryStats tc_zipf;
    SummaryStats gamma_zipf;
    std::size_t failures = 0;
};

inline std::uint64_t window_seed(std::uint64_t master, long t1, long t2) {
    return derive_seed(master, {static_cast<std::uint64_t>(t1), static_cast<std::uint64_t>(t2)});
}

// Summary statistics over the kept fits of every successful window.
inline void aggregate_scan(ScanResult& scan, bool qualified_only) {
    std::vector<double> tc_j;
    std::vector<double> tc_z;
    std::vector<double> gamma;
    const auto keep = [&](const FitResult& r) { return !qualified_only || r.flags.is_bubble(); };
    for (const WindowFit& w : scan.windows) {
        if (!w.ok) continue;
        for (const FitResult& r : w.fits.jls.results)
            if (keep(r)) tc_j.push_back(r.nl.tc);
        for (const FitResult& r : w.fits.zipf.results) {
            if (!keep(r)) continue;
            tc_z.push_back(r.nl.tc);
            gamma.push_back(r.lin.gamma);
        }
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const SummaryStats empty{nan, nan, nan, 0};
    scan.tc_jls = tc_j.empty() ? empty : aggregate_stats(tc_j);
    scan.tc_zipf = tc_z.empty() ? empty : aggregate_stats(tc_z);
    scan.gamma_zipf = gamma.empty() ? empty : aggregate_stats(gamma);
}

// Fits both models on every window (base_t1 + i*step, base_t2 + j*step), i < n_t1, j < n_t2.
// Window seeds are derive_seed(cfg.seed, {t1, t2}); results do not depend on `jobs`.
// A failing window is recorded and excluded from the aggregates.
inline ScanResult scan_windows(const FactorSeries& series, long base_t1, long base_t2, int n_t1,
                               int n_t2, int step, const CalibrationConfig& cfg, int jobs = 1) {
    if (n_t1 < 1 || n_t2 < 1 || step < 1) throw InputError("scan needs n_t1, n_t2, step >= 1");
    ScanResult scan;
    for (int i = 0; i < n_t1; ++i) {
        for (int j = 0; j < n_t2; ++j) {
            WindowFit w;
            w.t1 = base_t1 + static_cast<long>(i) * step;
            w.t2 = base_t2 + static_cast<long>(j) * step;
            if (w.t2 - w.t1 < cfg.min_window)
                throw InputError("scan window [" + std::to_string(w.t1) + ", " + std::to_string(w.t2) +
                                 "] is shorter than the minimum window");
            if (w.t1 - 1 < series.t0 || w.t2 > series.t2())
                throw InputError("scan window [" + std::to_string(w.t1) + ", " + std::to_string(w.t2) +
                                 "] is not covered by the factor series");
            scan.windows.push_back(std::move(w));
        }
    }

    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t k = next++; k < scan.windows.size(); k = next++) {
            WindowFit& w = scan.windows[k];
            CalibrationConfig local = cfg;
            local.seed = window_seed(cfg.seed, w.t1, w.t2);
            try {
                w.fits = fit_nested(make_fit_window(series, w.t1, w.t2, cfg.min_window), local);
                w.ok = true;
            } catch (const std::exception& e) {
                w.error = e.what();
            }
        }
    };
    const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(scan.windows.size())));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    scan.failures = static_cast<std::size_t>(
        std::count_if(scan.windows.begin(), scan.windows.end(), [](const WindowFit& w) { return !w.ok; }));
    aggregate_scan(scan, cfg.qualified_only);
    return scan;
}

} // namespace lppl
