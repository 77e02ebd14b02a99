#pragma once

// Ground-truth generators: LPPL + Zipf log-price series and heavy-tailed
// capitalization panels. Used by tests, the Monte-Carlo studies and `lppl synth`.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "lppl/csv.hpp"
#include "lppl/error.hpp"
#include "lppl/market_data.hpp"
#include "lppl/model.hpp"

namespace lppl {

enum class ZetaModelKind { zero, linear_drift, supplied };

struct ZetaModel {
    ZetaModelKind kind = ZetaModelKind::zero;
    double rate = 0.0;             // per trading day, for linear_drift
    std::vector<double> supplied;  // zeta(t1..t2), for supplied
};

struct SynthSpec {
    NonlinearParams nl;
    LinearParams lin;
    long t1 = 1;
    long t2 = 100;
    double noise_sigma = 0.0;
    ZetaModel zeta;
    std::uint64_t seed = 1;
    std::string start_date = "2005-01-03"; // calendar date of trading day 0
};

inline void validate(const SynthSpec& spec) {
    if (spec.t1 < 1) throw InputError("synthetic spec needs t1 >= 1 (t0 = t1 - 1 must exist)");
    if (spec.t2 <= spec.t1) throw InputError("synthetic spec needs t2 > t1");
    if (!(spec.nl.tc > static_cast<double>(spec.t2)))
        throw InputError("synthetic spec needs tc > t2");
    if (!(spec.noise_sigma >= 0.0)) throw InputError("noise_sigma must be non-negative");
    if (spec.zeta.kind == ZetaModelKind::supplied &&
        spec.zeta.supplied.size() != static_cast<std::size_t>(spec.t2 - spec.t1 + 1))
        throw InputError("supplied zeta must have one value per day of [t1, t2]");
    if (!csv::parse_iso_date(spec.start_date))
        throw InputError("invalid start_date '" + spec.start_date + "'");
}

// Monday-Friday calendar for trading days 0..last_day starting at `start_date`.
inline std::vector<std::string> trading_calendar(const std::string& start_date, long last_day) {
    auto ymd = csv::parse_iso_date(start_date);
    if (!ymd) throw InputError("invalid start date '" + start_date + "'");
    std::vector<std::string> dates;
    dates.reserve(static_cast<std::size_t>(last_day + 1));
    for (long d = 0; d <= last_day; ++d) {
        dates.push_back(csv::format_iso_date(*ymd));
        *ymd = csv::next_weekday(*ymd);
    }
    return dates;
}

inline double synth_zeta(const SynthSpec& spec, long day) {
    switch (spec.zeta.kind) {
    case ZetaModelKind::zero: return 0.0;
    case ZetaModelKind::linear_drift: return spec.zeta.rate * static_cast<double>(day - (spec.t1 - 1));
    case ZetaModelKind::supplied:
        return day < spec.t1 ? 0.0 : spec.zeta.supplied[static_cast<std::size_t>(day - spec.t1)];
    }
    return 0.0;
}

// ln p(t) = gamma zeta(t) + LPPL(t) + eps_t with eps_t ~ N(0, noise_sigma^2) i.i.d.,
// on t0 = t1-1 .. t2. zeta(t0) = 0.
inline FactorSeries generate_series(const SynthSpec& spec) {
    validate(spec);
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    const auto dates = trading_calendar(spec.start_date, spec.t2);
    const auto draw = [&] { return spec.noise_sigma > 0.0 ? spec.noise_sigma * noise(rng) : 0.0; };

    FactorSeries s;
    s.t0 = spec.t1 - 1;
    s.t0_date = dates[static_cast<std::size_t>(s.t0)];
    s.ln_p0 = lppl_log_price(static_cast<double>(s.t0), spec.nl, spec.lin, 0.0) + draw();
    for (long day = spec.t1; day <= spec.t2; ++day) {
        const double z = synth_zeta(spec, day);
        const double lp = lppl_log_price(static_cast<double>(day), spec.nl, spec.lin, z) + draw();
        s.t.push_back(day);
        s.dates.push_back(dates[static_cast<std::size_t>(day)]);
        s.ln_p.push_back(lp);
        s.ln_pe.push_back(lp - z);
        s.zeta.push_back(z);
    }
    return s;
}

enum class PanelEventKind { suspend, delist, list };

// Scripted listing change for firm `firm` at panel day `day`. A suspension lasts `length` days.
struct PanelEvent {
    std::size_t firm = 0;
    std::size_t day = 0;
    PanelEventKind kind = PanelEventKind::suspend;
    std::size_t length = 1;
};

struct PanelOptions {
    double drift = 0.0005;     // daily log drift
    double vol = 0.02;         // idiosyncratic daily log volatility
    double market_vol = 0.01;  // common daily log volatility
    double size_tilt = 0.0;    // extra drift per unit of log initial size (demeaned)
    bool identical = false;    // same initial cap and return path for every firm
    double min_cap = 1e8;      // Pareto scale
    std::string start_date = "2005-01-03";
    std::vector<PanelEvent> events;
};

// Panel over days t0..t2 (panel day 0 is t0). Initial capitalizations are Pareto with the
// given tail exponent, then per-firm geometric random walks.
inline ConstituentPanel generate_panel(std::size_t n_firms, long t0, long t2, double tail_exponent,
                                       std::uint64_t seed, const PanelOptions& opt = {}) {
    if (n_firms < 2) throw InputError("panel generator needs at least 2 firms");
    if (t2 <= t0) throw InputError("panel generator needs t2 > t0");
    if (!(tail_exponent > 0.0)) throw InputError("tail exponent must be positive");
    const auto n_days = static_cast<std::size_t>(t2 - t0 + 1);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    ConstituentPanel panel;
    panel.dates = trading_calendar(opt.start_date, static_cast<long>(n_days) - 1);
    for (std::size_t j = 0; j < n_firms; ++j) {
        char name[32];
        std::snprintf(name, sizeof name, "F%05zu", j);
        panel.firms.emplace_back(name);
    }
    std::vector<double> log_cap(n_firms);
    double mean_log = 0.0;
    for (std::size_t j = 0; j < n_firms; ++j) {
        const double u = opt.identical ? 0.5 : 1.0 - unit(rng); // (0, 1]
        log_cap[j] = std::log(opt.min_cap) - std::log(u) / tail_exponent;
        mean_log += log_cap[j] / static_cast<double>(n_firms);
    }
    std::vector<double> tilt(n_firms);
    for (std::size_t j = 0; j < n_firms; ++j) tilt[j] = opt.size_tilt * (log_cap[j] - mean_log);

    panel.cap.assign(n_firms, std::vector<double>(n_days));
    panel.status.assign(n_firms, std::vector<ListingStatus>(n_days, ListingStatus::active));
    for (std::size_t i = 0; i < n_days; ++i) {
        const double market = opt.market_vol * gauss(rng);
        const double shared = opt.vol * gauss(rng);
        for (std::size_t j = 0; j < n_firms; ++j) {
            if (i > 0) {
                const double idio = opt.identical ? shared : opt.vol * gauss(rng);
                log_cap[j] += opt.drift + tilt[j] + market + idio;
            }
            panel.cap[j][i] = std::exp(log_cap[j]);
        }
    }

    for (const PanelEvent& e : opt.events) {
        if (e.firm >= n_firms || e.day >= n_days) throw InputError("panel event out of range");
        auto& status = panel.status[e.firm];
        auto& cap = panel.cap[e.firm];
        switch (e.kind) {
        case PanelEventKind::delist:
            for (std::size_t i = e.day; i < n_days; ++i) {
                status[i] = ListingStatus::delisted;
                cap[i] = std::numeric_limits<double>::quiet_NaN();
            }
            break;
        case PanelEventKind::list:
            for (std::size_t i = 0; i < e.day; ++i) {
                status[i] = ListingStatus::unlisted;
                cap[i] = std::numeric_limits<double>::quiet_NaN();
            }
            break;
        case PanelEventKind::suspend: {
            if (e.day == 0) throw InputError("a suspension needs a prior active day");
            const double frozen = cap[e.day - 1];
            for (std::size_t i = e.day; i < std::min(n_days, e.day + e.length); ++i) {
                if (status[i] != ListingStatus::active) break;
                status[i] = ListingStatus::suspended;
                cap[i] = frozen;
            }
            break;
        }
        }
    }
    validate(panel);
    return panel;
}

} // namespace lppl
