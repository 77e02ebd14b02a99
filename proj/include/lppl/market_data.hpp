#pragma once

// Constituent capitalization panels, the capitalization-weighted index, the
// equal-weighted portfolio and the integrated Zipf factor built from them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lppl/csv.hpp"
#include "lppl/error.hpp"

namespace lppl {

enum class ListingStatus : unsigned char { unlisted, active, suspended, delisted };

inline char status_code(ListingStatus s) {
    switch (s) {
    case ListingStatus::active: return 'A';
    case ListingStatus::suspended: return 'S';
    case ListingStatus::delisted: return 'D';
    case ListingStatus::unlisted: break;
    }
    return '-';
}

// Per-firm total capitalization per trading day. Day indices are positions in `dates`;
// calendar dates are metadata only. cap is NaN wherever no quote exists.
struct ConstituentPanel {
    std::vector<std::string> dates;
    std::vector<std::string> firms;
    std::vector<std::vector<double>> cap;             // [firm][day]
    std::vector<std::vector<ListingStatus>> status;   // [firm][day]

    std::size_t num_days() const { return dates.size(); }
    std::size_t num_firms() const { return firms.size(); }

    // Trading with a fresh quote on `day`.
    bool quoted(std::size_t firm, std::size_t day) const {
        return status[firm][day] == ListingStatus::active;
    }
};

// Throws InputError naming firm and date on the first broken invariant.
inline void validate(const ConstituentPanel& panel) {
    const std::size_t n_days = panel.num_days();
    if (n_days == 0 || panel.num_firms() == 0) throw InputError("panel is empty");
    if (panel.cap.size() != panel.num_firms() || panel.status.size() != panel.num_firms())
        throw InputError("panel firm dimension mismatch");
    for (std::size_t i = 0; i < n_days; ++i) {
        if (!csv::parse_iso_date(panel.dates[i]))
            throw InputError("invalid ISO-8601 date '" + panel.dates[i] + "'");
        if (i > 0 && !(panel.dates[i - 1] < panel.dates[i]))
            throw InputError("dates not strictly increasing at '" + panel.dates[i] + "'");
    }
    for (std::size_t j = 0; j < panel.num_firms(); ++j) {
        if (panel.cap[j].size() != n_days || panel.status[j].size() != n_days)
            throw InputError("panel day dimension mismatch for firm " + panel.firms[j]);
        bool delisted = false;
        for (std::size_t i = 0; i < n_days; ++i) {
            const ListingStatus s = panel.status[j][i];
            const std::string where = "firm " + panel.firms[j] + " on " + panel.dates[i];
            if (delisted && s != ListingStatus::delisted && s != ListingStatus::unlisted)
                throw InputError("firm reappears after delisting: " + where);
            if (s == ListingStatus::delisted) delisted = true;
            if (s == ListingStatus::active || s == ListingStatus::suspended) {
                const double k = panel.cap[j][i];
                if (!(k > 0.0) || !std::isfinite(k))
                    throw InputError("non-positive capitalization " + csv::format_double(k) +
                                     " for listed " + where);
            }
        }
    }
}

enum class PanelFormat { csv };

// Long-format CSV with header `date,firm,cap,status`, one row per firm-day, status in {A,S,D}.
// Row order is free; missing firm-days are unlisted (or data holes).
inline ConstituentPanel parse_panel_csv(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!csv::trim(line).empty()) break;
    }
    const auto header = csv::split(line);
    if (header.size() != 4 || header[0] != "date" || header[1] != "firm" || header[2] != "cap" ||
        header[3] != "status")
        throw InputError("line " + std::to_string(line_no) +
                         ": expected header 'date,firm,cap,status'");

    struct Row {
        double cap;
        ListingStatus status;
    };
    std::map<std::pair<std::string, std::string>, Row> rows; // (firm, date) -> row
    std::set<std::string> dates;
    std::set<std::string> firms;
    while (std::getline(in, line)) {
        ++line_no;
        if (csv::trim(line).empty()) continue;
        const auto f = csv::split(line);
        const auto fail = [&](const std::string& why) {
            throw InputError("line " + std::to_string(line_no) + ": " + why);
        };
        if (f.size() != 4) fail("expected 4 fields, got " + std::to_string(f.size()));
        if (!csv::parse_iso_date(f[0])) fail("invalid date '" + std::string(f[0]) + "'");
        if (f[1].empty()) fail("empty firm identifier");
        ListingStatus status{};
        if (f[3] == "A") status = ListingStatus::active;
        else if (f[3] == "S") status = ListingStatus::suspended;
        else if (f[3] == "D") status = ListingStatus::delisted;
        else fail("unknown status '" + std::string(f[3]) + "' (expected A, S or D)");
        double cap = std::numeric_limits<double>::quiet_NaN();
        if (status != ListingStatus::delisted || !f[2].empty()) {
            const auto parsed = csv::parse_double(f[2]);
            if (!parsed) fail("malformed capitalization '" + std::string(f[2]) + "'");
            cap = *parsed;
        }
        if (status != ListingStatus::delisted && !(cap > 0.0))
            fail("non-positive capitalization " + std::string(f[2]) + " for firm " +
                 std::string(f[1]) + " on " + std::string(f[0]));
        auto key = std::make_pair(std::string(f[1]), std::string(f[0]));
        if (rows.count(key)) fail("duplicate row for firm " + key.first + " on " + key.second);
        dates.insert(key.second);
        firms.insert(key.first);
        rows.emplace(std::move(key), Row{status == ListingStatus::delisted
                                             ? std::numeric_limits<double>::quiet_NaN()
                                             : cap,
                                         status});
    }
    if (rows.empty()) throw InputError("panel CSV has no data rows");

    ConstituentPanel panel;
    panel.dates.assign(dates.begin(), dates.end());
    panel.firms.assign(firms.begin(), firms.end());
    std::map<std::string, std::size_t> day_of;
    for (std::size_t i = 0; i < panel.dates.size(); ++i) day_of[panel.dates[i]] = i;
    panel.cap.assign(panel.num_firms(),
                     std::vector<double>(panel.num_days(), std::numeric_limits<double>::quiet_NaN()));
    panel.status.assign(panel.num_firms(),
                        std::vector<ListingStatus>(panel.num_days(), ListingStatus::unlisted));
    std::size_t j = 0;
    std::string current_firm;
    for (const auto& [key, row] : rows) {
        if (key.first != current_firm) {
            current_firm = key.first;
            j = static_cast<std::size_t>(
                std::lower_bound(panel.firms.begin(), panel.firms.end(), current_firm) -
                panel.firms.begin());
        }
        const std::size_t i = day_of[key.second];
        panel.cap[j][i] = row.cap;
        panel.status[j][i] = row.status;
    }
    validate(panel);
    return panel;
}

inline ConstituentPanel load_panel(const std::string& path, PanelFormat format = PanelFormat::csv) {
    (void)format;
    std::ifstream in(path);
    if (!in) throw InputError("cannot open panel file '" + path + "'");
    return parse_panel_csv(in);
}

inline void write_panel_csv(std::ostream& out, const ConstituentPanel& panel) {
    out << "date,firm,cap,status\n";
    for (std::size_t i = 0; i < panel.num_days(); ++i) {
        for (std::size_t j = 0; j < panel.num_firms(); ++j) {
            const ListingStatus s = panel.status[j][i];
            if (s == ListingStatus::unlisted) continue;
            out << panel.dates[i] << ',' << panel.firms[j] << ',';
            if (s != ListingStatus::delisted) out << csv::format_double(panel.cap[j][i]);
            out << ',' << status_code(s) << '\n';
        }
    }
}

// K(i): active firms at their current capitalization, suspended firms frozen at their
// last active capitalization, delisted and unlisted firms excluded.
inline std::vector<double> total_capitalization(const ConstituentPanel& panel) {
    std::vector<double> total(panel.num_days(), 0.0);
    std::vector<std::size_t> members(panel.num_days(), 0);
    for (std::size_t j = 0; j < panel.num_firms(); ++j) {
        double last_active = std::numeric_limits<double>::quiet_NaN();
        for (std::size_t i = 0; i < panel.num_days(); ++i) {
            switch (panel.status[j][i]) {
            case ListingStatus::active:
                last_active = panel.cap[j][i];
                total[i] += last_active;
                ++members[i];
                break;
            case ListingStatus::suspended:
                total[i] += std::isnan(last_active) ? panel.cap[j][i] : last_active;
                ++members[i];
                break;
            case ListingStatus::delisted:
            case ListingStatus::unlisted:
                break;
            }
        }
    }
    for (std::size_t i = 0; i < panel.num_days(); ++i)
        if (members[i] == 0)
            throw InputError("no constituents on " + panel.dates[i]);
    return total;
}

// p(i) = K(i) / base_cap * base_value for every day of the panel.
inline std::vector<double> index_price(const ConstituentPanel& panel, double base_cap,
                                       double base_value = 100.0) {
    if (!(base_cap > 0.0)) throw InputError("base capitalization must be positive");
    std::vector<double> p = total_capitalization(panel);
    for (double& v : p) v = v / base_cap * base_value;
    return p;
}

// Equal-weighted log-return r_e(i) averaged over the firms quoted on both i-1 and i.
inline double equal_weighted_return(const ConstituentPanel& panel, std::size_t day) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t j = 0; j < panel.num_firms(); ++j) {
        if (panel.quoted(j, day) && panel.quoted(j, day - 1)) {
            sum += std::log(panel.cap[j][day]) - std::log(panel.cap[j][day - 1]);
            ++count;
        }
    }
    if (count == 0)
        throw InputError("no firm quoted on both " + panel.dates[day - 1] + " and " +
                         panel.dates[day]);
    return sum / static_cast<double>(count);
}

// p_e over days t0 = t1-1 .. t2 (first element is p_t0).
inline std::vector<double> equal_weighted_price(const ConstituentPanel& panel, double p_t0,
                                                std::size_t t1, std::size_t t2) {
    if (!(p_t0 > 0.0)) throw InputError("equal-weighted base price must be positive");
    if (t1 < 1 || t2 < t1 || t2 >= panel.num_days())
        throw InputError("window [" + std::to_string(t1) + ", " + std::to_string(t2) +
                         "] needs a preceding day inside the panel");
    std::vector<double> pe;
    pe.reserve(t2 - t1 + 2);
    pe.push_back(p_t0);
    double cumulative = 0.0;
    for (std::size_t i = t1; i <= t2; ++i) {
        cumulative += equal_weighted_return(panel, i);
        pe.push_back(p_t0 * std::exp(cumulative));
    }
    return pe;
}

// Index log-price, equal-weighted log-price and integrated Zipf factor over [t1, t2],
// normalized so that both portfolios coincide on t0 = t1-1.
struct FactorSeries {
    long t0 = 0;
    std::string t0_date;
    double ln_p0 = 0.0;

    std::vector<long> t;
    std::vector<std::string> dates;
    std::vector<double> ln_p;
    std::vector<double> ln_pe;
    std::vector<double> zeta;

    std::size_t size() const { return t.size(); }
    long t1() const { return t.front(); }
    long t2() const { return t.back(); }
};

inline void check_factor_series(const FactorSeries& s) {
    const std::size_t n = s.t.size();
    if (n < 2) throw InputError("factor series needs at least 2 points");
    if (s.dates.size() != n || s.ln_p.size() != n || s.ln_pe.size() != n || s.zeta.size() != n)
        throw InputError("factor series columns have different lengths");
    if (s.t.front() != s.t0 + 1) throw InputError("factor series must start the day after t0");
    for (std::size_t i = 1; i < n; ++i)
        if (s.t[i] != s.t[i - 1] + 1)
            throw InputError("factor series days must be consecutive (gap after t=" +
                             std::to_string(s.t[i - 1]) + ")");
}

// Builds the factor series from a panel and an index price aligned with the panel days.
inline FactorSeries build_factor_series(const ConstituentPanel& panel, std::span<const double> index,
                                        std::size_t t1, std::size_t t2) {
    if (index.size() != panel.num_days())
        throw InputError("index series length does not match the panel");
    if (t1 < 1 || t2 <= t1 || t2 >= panel.num_days())
        throw InputError("window [" + std::to_string(t1) + ", " + std::to_string(t2) +
                         "] must satisfy 1 <= t1 < t2 < " + std::to_string(panel.num_days()));
    for (std::size_t i = t1 - 1; i <= t2; ++i)
        if (!(index[i] > 0.0)) throw InputError("non-positive index price on " + panel.dates[i]);

    const std::size_t t0 = t1 - 1;
    const std::vector<double> pe = equal_weighted_price(panel, index[t0], t1, t2);
    FactorSeries s;
    s.t0 = static_cast<long>(t0);
    s.t0_date = panel.dates[t0];
    s.ln_p0 = std::log(index[t0]);
    for (std::size_t i = t1; i <= t2; ++i) {
        const double lp = std::log(index[i]);
        const double lpe = std::log(pe[i - t0]);
        s.t.push_back(static_cast<long>(i));
        s.dates.push_back(panel.dates[i]);
        s.ln_p.push_back(lp);
        s.ln_pe.push_back(lpe);
        s.zeta.push_back(lp - lpe);
    }
    return s;
}

// Sub-window [t1, t2] renormalized so that zeta vanishes on the new t0 = t1-1.
// A constant shift of zeta only moves A, so fits on the restriction are unaffected otherwise.
inline FactorSeries restrict_window(const FactorSeries& s, long t1, long t2) {
    if (t1 - 1 < s.t0 || t2 > s.t2() || t2 <= t1)
        throw InputError("window [" + std::to_string(t1) + ", " + std::to_string(t2) +
                         "] is not covered by the factor series [" + std::to_string(s.t0) +
                         ", " + std::to_string(s.t2()) + "]");
    FactorSeries r;
    r.t0 = t1 - 1;
    double zeta0 = 0.0;
    if (r.t0 == s.t0) {
        r.t0_date = s.t0_date;
        r.ln_p0 = s.ln_p0;
    } else {
        const auto k = static_cast<std::size_t>(r.t0 - s.t1());
        r.t0_date = s.dates[k];
        r.ln_p0 = s.ln_p[k];
        zeta0 = s.zeta[k];
    }
    for (long day = t1; day <= t2; ++day) {
        const auto k = static_cast<std::size_t>(day - s.t1());
        r.t.push_back(day);
        r.dates.push_back(s.dates[k]);
        r.ln_p.push_back(s.ln_p[k]);
        r.zeta.push_back(s.zeta[k] - zeta0);
        r.ln_pe.push_back(s.ln_p[k] - r.zeta.back());
    }
    return r;
}

// Index CSV with header `date,close`, aligned by date to the panel days.
inline std::vector<double> parse_index_csv(std::istream& in, const ConstituentPanel& panel) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!csv::trim(line).empty()) break;
    }
    const auto header = csv::split(line);
    if (header.size() != 2 || header[0] != "date" || header[1] != "close")
        throw InputError("line " + std::to_string(line_no) + ": expected header 'date,close'");
    std::map<std::string, double> close;
    while (std::getline(in, line)) {
        ++line_no;
        if (csv::trim(line).empty()) continue;
        const auto f = csv::split(line);
        const auto value = f.size() == 2 ? csv::parse_double(f[1]) : std::nullopt;
        if (f.size() != 2 || !csv::parse_iso_date(f[0]) || !value || !(*value > 0.0))
            throw InputError("line " + std::to_string(line_no) + ": malformed index row");
        close[std::string(f[0])] = *value;
    }
    std::vector<double> p(panel.num_days(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < panel.num_days(); ++i) {
        const auto it = close.find(panel.dates[i]);
        if (it != close.end()) p[i] = it->second;
    }
    return p;
}

// Export layout `t,date,ln_p,ln_pe,zeta`; the first row is the normalization day t0.
inline void write_factor_csv(std::ostream& out, const FactorSeries& s) {
    out << "t,date,ln_p,ln_pe,zeta\n";
    const std::string lp0 = csv::format_double(s.ln_p0);
    out << s.t0 << ',' << s.t0_date << ',' << lp0 << ',' << lp0 << ",0\n";
    for (std::size_t i = 0; i < s.size(); ++i) {
        out << s.t[i] << ',' << s.dates[i] << ',' << csv::format_double(s.ln_p[i]) << ','
            << csv::format_double(s.ln_pe[i]) << ',' << csv::format_double(s.zeta[i]) << '\n';
    }
}

inline FactorSeries parse_factor_csv(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!csv::trim(line).empty()) break;
    }
    const auto header = csv::split(line);
    if (header != std::vector<std::string_view>{"t", "date", "ln_p", "ln_pe", "zeta"})
        throw InputError("line " + std::to_string(line_no) +
                         ": expected header 't,date,ln_p,ln_pe,zeta'");
    FactorSeries s;
    bool first = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (csv::trim(line).empty()) continue;
        const auto f = csv::split(line);
        const auto fail = [&](const std::string& why) {
            throw InputError("line " + std::to_string(line_no) + ": " + why);
        };
        if (f.size() != 5) fail("expected 5 fields");
        const auto t = csv::parse_int(f[0]);
        const auto lp = csv::parse_double(f[2]);
        const auto lpe = csv::parse_double(f[3]);
        const auto z = csv::parse_double(f[4]);
        if (!t || !lp || !lpe || !z) fail("malformed numeric field");
        if (std::abs(*z - (*lp - *lpe)) > 1e-9 * std::max(1.0, std::abs(*lp)))
            fail("zeta is not ln_p - ln_pe");
        if (first) {
            if (*z != 0.0) fail("first row is the normalization day and must have zeta = 0");
            s.t0 = static_cast<long>(*t);
            s.t0_date = std::string(f[1]);
            s.ln_p0 = *lp;
            first = false;
            continue;
        }
        s.t.push_back(static_cast<long>(*t));
        s.dates.emplace_back(f[1]);
        s.ln_p.push_back(*lp);
        s.ln_pe.push_back(*lpe);
        s.zeta.push_back(*z);
    }
    check_factor_series(s);
    return s;
}

inline FactorSeries load_factor_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open factor series file '" + path + "'");
    return parse_factor_csv(in);
}

// Calendar date for a (possibly fractional, possibly future) trading-day index.
// Days beyond the series are extrapolated over Monday-Friday.
inline std::string trading_day_date(const FactorSeries& s, double day) {
    const long k = std::lround(day);
    if (k <= s.t0) return s.t0_date;
    if (k <= s.t2()) return s.dates[static_cast<std::size_t>(k - s.t1())];
    auto ymd = csv::parse_iso_date(s.dates.back());
    if (!ymd) return "";
    for (long i = s.t2(); i < k; ++i) ymd = csv::next_weekday(*ymd);
    return csv::format_iso_date(*ymd);
}

} // namespace lppl
