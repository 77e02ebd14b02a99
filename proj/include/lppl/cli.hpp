#pragma once

// Command implementations behind the `lppl` executable. Each command reads its inputs,
// writes its outputs plus a run manifest, and returns a process exit code. Kept in the
// library so tests can drive commands without spawning processes.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <json.hpp>

#include "lppl/calibration.hpp"
#include "lppl/csv.hpp"
#include "lppl/error.hpp"
#include "lppl/inference.hpp"
#include "lppl/market_data.hpp"
#include "lppl/model.hpp"
#include "lppl/synth.hpp"

namespace lppl::cli {

using json = nlohmann::ordered_json;

inline constexpr const char* tool_version = "1.0.0";
inline constexpr const char* config_env_var = "LPPL_CONFIG";

enum ExitCode : int { exit_ok = 0, exit_input = 2, exit_numerical = 3, exit_warning = 4 };

// ---------------------------------------------------------------------------------------
// Config files: `key = value` lines, '#' starts a comment.

inline void set_config_value(CalibrationConfig& cfg, const std::string& key, const std::string& value) {
    const auto as_int = [&]() -> int {
        const auto v = csv::parse_int(value);
        if (!v) throw InputError("config key '" + key + "' needs an integer, got '" + value + "'");
        return static_cast<int>(*v);
    };
    const auto as_double = [&] {
        const auto v = csv::parse_double(value);
        if (!v) throw InputError("config key '" + key + "' needs a number, got '" + value + "'");
        return *v;
    };
    if (key == "n_starts") cfg.n_starts = as_int();
    else if (key == "local_moves") cfg.local_moves = as_int();
    else if (key == "local_step") cfg.local_step = as_double();
    else if (key == "taboo_radius") cfg.taboo_radius = as_double();
    else if (key == "search_budget") cfg.search_budget = as_int();
    else if (key == "lm_max_iter") cfg.lm_max_iter = as_int();
    else if (key == "lm_tol") cfg.lm_tol = as_double();
    else if (key == "seed") {
        const auto v = csv::parse_int(value);
        if (!v || *v < 0) throw InputError("config key 'seed' needs a non-negative integer");
        cfg.seed = static_cast<std::uint64_t>(*v);
    } else if (key == "keep_best") cfg.keep_best = as_int();
    else if (key == "min_window") cfg.min_window = as_int();
    else if (key == "n_refine") cfg.n_refine = as_int();
    else if (key == "max_refine") cfg.max_refine = as_int();
    else if (key == "qualified_only") {
        if (value == "true" || value == "1") cfg.qualified_only = true;
        else if (value == "false" || value == "0") cfg.qualified_only = false;
        else throw InputError("config key 'qualified_only' needs true or false");
    } else {
        throw InputError("unknown config key '" + key + "'");
    }
}

inline void check_config(const CalibrationConfig& cfg) {
    if (cfg.n_starts < 1) throw InputError("n_starts must be positive");
    if (cfg.local_moves < 1) throw InputError("local_moves must be positive");
    if (!(cfg.local_step > 0.0)) throw InputError("local_step must be positive");
    if (!(cfg.taboo_radius >= 0.0 && cfg.taboo_radius < 1.0))
        throw InputError("taboo_radius must lie in [0, 1)");
    if (cfg.search_budget < 100) throw InputError("search_budget must be at least 100");
    if (cfg.lm_max_iter < 1) throw InputError("lm_max_iter must be positive");
    if (!(cfg.lm_tol > 0.0)) throw InputError("lm_tol must be positive");
    if (cfg.keep_best < 1) throw InputError("keep_best must be positive");
    if (cfg.min_window < 4) throw InputError("min_window must be at least 4");
    if (cfg.n_refine < 1) throw InputError("n_refine must be positive");
    if (cfg.max_refine < cfg.n_refine) throw InputError("max_refine must be at least n_refine");
}

inline CalibrationConfig parse_config(std::istream& in) {
    CalibrationConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto body = csv::trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string_view::npos)
            throw InputError("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key(csv::trim(body.substr(0, eq)));
        const std::string value(csv::trim(body.substr(eq + 1)));
        try {
            set_config_value(cfg, key, value);
        } catch (const InputError& e) {
            throw InputError("config line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    check_config(cfg);
    return cfg;
}

// Explicit path first, then $LPPL_CONFIG, then built-in defaults. Returns the path used.
inline std::pair<CalibrationConfig, std::string> resolve_config(const std::string& path) {
    std::string chosen = path;
    if (chosen.empty())
        if (const char* env = std::getenv(config_env_var)) chosen = env;
    if (chosen.empty()) return {CalibrationConfig{}, ""};
    std::ifstream in(chosen);
    if (!in) throw InputError("cannot open config file '" + chosen + "'");
    return {parse_config(in), chosen};
}

inline json config_to_json(const CalibrationConfig& cfg) {
    return json{{"n_starts", cfg.n_starts},         {"local_moves", cfg.local_moves},
                {"local_step", cfg.local_step},     {"taboo_radius", cfg.taboo_radius},
                {"search_budget", cfg.search_budget}, {"lm_max_iter", cfg.lm_max_iter},
                {"lm_tol", cfg.lm_tol},             {"seed", cfg.seed},
                {"keep_best", cfg.keep_best},       {"min_window", cfg.min_window},
                {"n_refine", cfg.n_refine},         {"max_refine", cfg.max_refine},
                {"qualified_only", cfg.qualified_only}};
}

// ---------------------------------------------------------------------------------------
// JSON records

inline json params_to_json(const NonlinearParams& nl, const LinearParams& lin) {
    return json{{"tc", nl.tc},       {"m", nl.m}, {"omega", nl.omega}, {"phi", nl.phi},
                {"gamma", lin.gamma}, {"A", lin.A}, {"B", lin.B},        {"C", lin.C}};
}

inline std::pair<NonlinearParams, LinearParams> params_from_json(const json& j) {
    const auto get = [&](const char* key) {
        if (!j.contains(key) || !j.at(key).is_number())
            throw InputError(std::string("parameter record lacks numeric '") + key + "'");
        return j.at(key).get<double>();
    };
    return {NonlinearParams{get("tc"), get("m"), get("omega"), get("phi")},
            LinearParams{get("gamma"), get("A"), get("B"), get("C")}};
}

inline json flags_to_json(const QualificationFlags& f) {
    return json{{"m_in_range", f.m_in_range}, {"B_negative", f.B_negative},
                {"hazard_nonneg", f.hazard_nonneg}, {"omega_ok", f.omega_ok},
                {"is_bubble", f.is_bubble()}};
}

inline json fit_to_json(const FitResult& r, const FactorSeries& full) {
    json j = params_to_json(r.nl, r.lin);
    j["tc_date"] = trading_day_date(full, r.nl.tc);
    j["rss"] = r.rss;
    j["flags"] = flags_to_json(r.flags);
    j["converged"] = r.converged;
    j["iterations"] = r.iterations;
    j["distinct"] = r.distinct;
    return j;
}

inline json ensemble_to_json(const FitEnsemble& e, const FactorSeries& full) {
    json fits = json::array();
    for (const FitResult& r : e.results) fits.push_back(fit_to_json(r, full));
    return json{{"t1", e.t1}, {"t2", e.t2}, {"model", std::string(to_string(e.model_kind))},
                {"fits", fits}};
}

inline json wilks_to_json(const WilksReport& w) {
    json j{{"W", std::isfinite(w.W) ? json(w.W) : json("inf")},
           {"dof", w.dof},
           {"p_value", w.p_value},
           {"T", w.T},
           {"reject_at_5pct", w.reject_at_5pct}};
    if (w.clamped) j["clamped"] = true;
    if (w.exact_fit) j["exact_fit"] = true;
    return j;
}

// ---------------------------------------------------------------------------------------
// Manifests

inline std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path + "'");
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    char buf[1 << 15];
    while (in.read(buf, sizeof buf) || in.gcount() > 0)
        EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i)
        hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return hex.str();
}

struct RunManifest {
    std::string command;
    json arguments = json::object();
    std::optional<CalibrationConfig> config;
    std::vector<std::pair<std::string, std::string>> inputs; // (role, path)
    std::uint64_t seed = 0;
};

inline json manifest_to_json(const RunManifest& m) {
    json inputs = json::object();
    for (const auto& [role, path] : m.inputs)
        inputs[role] = json{{"path", path}, {"sha256", sha256_file(path)}};
    json j{{"command", m.command}, {"version", tool_version}, {"arguments", m.arguments}};
    if (m.config) j["config"] = config_to_json(*m.config);
    j["inputs"] = inputs;
    j["seed"] = m.seed;
    return j;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw InputError("write failed for '" + path.string() + "'");
}

inline void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

inline std::filesystem::path prepare_dir(const std::string& out) {
    if (out.empty()) throw InputError("--out is required");
    std::filesystem::path dir(out);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir))
        throw InputError("cannot create output directory '" + out + "'");
    return dir;
}

// ---------------------------------------------------------------------------------------
// Shared argument handling

struct Context {
    std::ostream& log = std::cerr;
    bool strict = false;
    std::vector<std::string> warnings;

    void warn(const std::string& msg) {
        warnings.push_back(msg);
        log << "warning: " << msg << '\n';
    }
    int finish() const { return strict && !warnings.empty() ? exit_warning : exit_ok; }
};

// A trading day given either as an integer index or as an ISO date of the series.
inline long resolve_day(const FactorSeries& s, const std::string& text, const char* what) {
    if (const auto v = csv::parse_int(text)) return static_cast<long>(*v);
    if (csv::parse_iso_date(text)) {
        if (text == s.t0_date) return s.t0;
        const auto it = std::find(s.dates.begin(), s.dates.end(), text);
        if (it == s.dates.end())
            throw InputError(std::string(what) + " date " + text + " is not a trading day of the series");
        return s.t[static_cast<std::size_t>(it - s.dates.begin())];
    }
    throw InputError(std::string(what) + " must be a day index or an ISO date, got '" + text + "'");
}

struct CalibrationOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> keep_best;
};

inline CalibrationConfig effective_config(const CalibrationOptions& o, std::string& used_path) {
    auto [cfg, path] = resolve_config(o.config_path);
    used_path = path;
    if (o.seed) cfg.seed = *o.seed;
    if (o.keep_best) cfg.keep_best = *o.keep_best;
    check_config(cfg);
    return cfg;
}

// ---------------------------------------------------------------------------------------
// lppl zipf

struct ZipfArgs {
    std::string panel;
    std::string index; // optional `date,close` file; otherwise built from the panel
    long t1 = 0;
    long t2 = 0;
    std::optional<double> base_cap;
    double base_value = 100.0;
    std::string out; // factor CSV; the manifest goes next to it
};

inline FactorSeries zipf_series(const ZipfArgs& a) {
    const ConstituentPanel panel = load_panel(a.panel);
    if (a.t1 < 1 || a.t2 <= a.t1 || static_cast<std::size_t>(a.t2) >= panel.num_days())
        throw InputError("window [" + std::to_string(a.t1) + ", " + std::to_string(a.t2) +
                         "] must satisfy 1 <= t1 < t2 < " + std::to_string(panel.num_days()));
    std::vector<double> index;
    if (!a.index.empty()) {
        std::ifstream in(a.index);
        if (!in) throw InputError("cannot open index file '" + a.index + "'");
        index = parse_index_csv(in, panel);
        for (long i = a.t1 - 1; i <= a.t2; ++i)
            if (!(index[static_cast<std::size_t>(i)] > 0.0))
                throw InputError("index file has no close for " + panel.dates[static_cast<std::size_t>(i)]);
    } else {
        const double base = a.base_cap ? *a.base_cap : total_capitalization(panel)[static_cast<std::size_t>(a.t1 - 1)];
        if (!(base > 0.0)) throw InputError("base capitalization must be positive");
        index = index_price(panel, base, a.base_value);
    }
    return build_factor_series(panel, index, static_cast<std::size_t>(a.t1), static_cast<std::size_t>(a.t2));
}

inline int cmd_zipf(const ZipfArgs& a, Context& ctx) {
    if (a.out.empty()) throw InputError("--out is required");
    const FactorSeries s = zipf_series(a);
    std::ostringstream csv_out;
    write_factor_csv(csv_out, s);
    write_text(a.out, csv_out.str());

    RunManifest m;
    m.command = "zipf";
    m.arguments = json{{"t1", a.t1}, {"t2", a.t2}, {"base_value", a.base_value}};
    if (a.base_cap) m.arguments["base_cap"] = *a.base_cap;
    m.inputs.emplace_back("panel", a.panel);
    if (!a.index.empty()) m.inputs.emplace_back("index", a.index);
    write_json(a.out + ".manifest.json", manifest_to_json(m));
    ctx.log << "wrote " << s.size() << " days of factor series to " << a.out << '\n';
    return ctx.finish();
}

// ---------------------------------------------------------------------------------------
// lppl fit

enum class ModelChoice { jls, zipf, both };

inline ModelChoice model_choice_from_string(const std::string& s) {
    if (s == "jls") return ModelChoice::jls;
    if (s == "zipf") return ModelChoice::zipf;
    if (s == "both") return ModelChoice::both;
    throw InputError("--model must be jls, zipf or both, got '" + s + "'");
}

struct FitArgs {
    std::string factor;
    std::string t1;
    std::string t2;
    ModelChoice model = ModelChoice::both;
    CalibrationOptions calib;
    std::string out;
    bool svg = false;
};

// One column per kept fit: the model curve evaluated at every window day.
inline std::string plot_csv(const FitWindow& w, const std::vector<const FitEnsemble*>& ensembles) {
    std::ostringstream out;
    out << "t,date,ln_p,zeta";
    for (const FitEnsemble* e : ensembles)
        for (std::size_t k = 0; k < e->results.size(); ++k) out << ',' << to_string(e->model_kind) << '_' << k + 1;
    out << '\n';
    const FactorSeries& s = w.series;
    for (std::size_t i = 0; i < s.size(); ++i) {
        out << s.t[i] << ',' << s.dates[i] << ',' << csv::format_double(s.ln_p[i]) << ','
            << csv::format_double(s.zeta[i]);
        for (const FitEnsemble* e : ensembles)
            for (const FitResult& r : e->results)
                out << ',' << csv::format_double(lppl_log_price(static_cast<double>(s.t[i]), r.nl, r.lin, s.zeta[i]));
        out << '\n';
    }
    return out.str();
}

inline std::string plot_svg(const FitWindow& w, const std::vector<const FitEnsemble*>& ensembles) {
    constexpr double width = 800, height = 480, margin = 40;
    const FactorSeries& s = w.series;
    std::vector<std::pair<std::string, std::vector<double>>> lines;
    lines.emplace_back("#000000", s.ln_p);
    const char* colours[] = {"#1f77b4", "#d62728"};
    for (std::size_t e = 0; e < ensembles.size(); ++e) {
        for (const FitResult& r : ensembles[e]->results) {
            std::vector<double> y;
            for (std::size_t i = 0; i < s.size(); ++i)
                y.push_back(lppl_log_price(static_cast<double>(s.t[i]), r.nl, r.lin, s.zeta[i]));
            lines.emplace_back(colours[ensembles[e]->model_kind == ModelKind::zipf ? 1 : 0], std::move(y));
        }
    }
    double lo = s.ln_p.front(), hi = lo;
    for (const auto& [c, y] : lines)
        for (const double v : y) lo = std::min(lo, v), hi = std::max(hi, v);
    if (hi == lo) hi = lo + 1.0;
    const double x0 = static_cast<double>(s.t1()), x1 = static_cast<double>(s.t2());
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (std::size_t l = 0; l < lines.size(); ++l) {
        out << "<polyline fill=\"none\" stroke=\"" << lines[l].first << "\" stroke-width=\""
            << (l == 0 ? 1.5 : 0.8) << "\" points=\"";
        for (std::size_t i = 0; i < s.size(); ++i) {
            const double px = margin + (static_cast<double>(s.t[i]) - x0) / (x1 - x0) * (width - 2 * margin);
            const double py = height - margin - (lines[l].second[i] - lo) / (hi - lo) * (height - 2 * margin);
            out << std::fixed << std::setprecision(2) << px << ',' << py << ' ';
        }
        out << "\"/>\n";
    }
    out << "<text x=\"" << margin << "\" y=\"20\" font-size=\"12\">ln p (black), jls fits (blue), zipf fits (red), "
        << s.dates.front() << " to " << s.dates.back() << "</text>\n</svg>\n";
    return out.str();
}

inline void check_ensemble(const FitEnsemble& e, const CalibrationConfig& cfg, Context& ctx) {
    const std::string name(to_string(e.model_kind));
    if (e.results.size() < static_cast<std::size_t>(cfg.keep_best))
        ctx.warn(name + " ensemble has " + std::to_string(e.results.size()) + " fits, fewer than keep_best = " +
                 std::to_string(cfg.keep_best));
    const auto duplicates = std::count_if(e.results.begin(), e.results.end(), [](const FitResult& r) { return !r.distinct; });
    if (duplicates > 0)
        ctx.warn(name + " ensemble fills " + std::to_string(duplicates) + " slots with duplicates of better basins");
    if (!e.results.front().converged) ctx.warn(name + " best fit did not converge");
}

inline int cmd_fit(const FitArgs& a, Context& ctx) {
    const auto dir = prepare_dir(a.out);
    std::string config_path;
    const CalibrationConfig cfg = effective_config(a.calib, config_path);
    const FactorSeries full = load_factor_csv(a.factor);
    const long t1 = resolve_day(full, a.t1, "--t1");
    const long t2 = resolve_day(full, a.t2, "--t2");
    const FitWindow w = make_fit_window(full, t1, t2, cfg.min_window);

    std::vector<FitEnsemble> ensembles;
    json summary{{"t1", t1}, {"t2", t2}, {"t1_date", w.series.dates.front()}, {"t2_date", w.series.dates.back()},
                 {"T", w.series.size()}};
    if (a.model == ModelChoice::both) {
        NestedFit n = fit_nested(w, cfg);
        const WilksReport single = wilks_statistic(n.jls.results.front().residuals, n.zipf.results.front().residuals);
        const WilksReport pooled = pooled_wilks(n.jls, n.zipf);
        if (single.clamped || pooled.clamped) ctx.warn("Wilks statistic clamped at 0 (zipf rss above jls rss)");
        if (single.exact_fit || pooled.exact_fit) ctx.warn("zipf model fits exactly; Wilks p-value set to 0");
        write_json(dir / "wilks.json", json{{"single", wilks_to_json(single)}, {"pooled", wilks_to_json(pooled)}});
        summary["wilks_single"] = wilks_to_json(single);
        summary["wilks_pooled"] = wilks_to_json(pooled);
        ensembles.push_back(std::move(n.jls));
        ensembles.push_back(std::move(n.zipf));
    } else {
        const ModelKind kind = a.model == ModelChoice::jls ? ModelKind::jls : ModelKind::zipf;
        ensembles.push_back(fit_window(w, cfg, kind));
    }

    std::vector<const FitEnsemble*> refs;
    for (const FitEnsemble& e : ensembles) {
        check_ensemble(e, cfg, ctx);
        const std::string name(to_string(e.model_kind));
        write_json(dir / ("ensemble_" + name + ".json"), ensemble_to_json(e, full));
        const FitResult& best = e.results.front();
        json b = params_to_json(best.nl, best.lin);
        write_json(dir / ("best_" + name + ".json"), b);
        b["tc_date"] = trading_day_date(full, best.nl.tc);
        b["rss"] = best.rss;
        summary["best_" + name] = b;
        refs.push_back(&e);
    }
    write_text(dir / "plot.csv", plot_csv(w, refs));
    if (a.svg) write_text(dir / "plot.svg", plot_svg(w, refs));

    RunManifest m;
    m.command = "fit";
    m.arguments = json{{"t1", t1}, {"t2", t2},
                       {"model", a.model == ModelChoice::both ? "both" : a.model == ModelChoice::jls ? "jls" : "zipf"},
                       {"svg", a.svg}};
    m.config = cfg;
    m.inputs.emplace_back("factor", a.factor);
    if (!config_path.empty()) m.inputs.emplace_back("config", config_path);
    m.seed = cfg.seed;
    write_json(dir / "manifest.json", manifest_to_json(m));
    ctx.log << summary.dump(2) << '\n';
    return ctx.finish();
}

// ---------------------------------------------------------------------------------------
// lppl scan

struct ScanArgs {
    std::string factor;
    std::string t1;
    std::string t2;
    int n_t1 = 15;
    int n_t2 = 15;
    int step = 3;
    int jobs = 1;
    CalibrationOptions calib;
    std::string out;
};

inline std::string scan_fits_csv(const ScanResult& scan, const FactorSeries& full) {
    std::ostringstream out;
    out << "t1,t2,model,rank,tc,tc_date,m,omega,phi,gamma,A,B,C,rss,qualified\n";
    for (const WindowFit& w : scan.windows) {
        if (!w.ok) continue;
        for (const FitEnsemble* e : {&w.fits.jls, &w.fits.zipf}) {
            for (std::size_t k = 0; k < e->results.size(); ++k) {
                const FitResult& r = e->results[k];
                out << w.t1 << ',' << w.t2 << ',' << to_string(e->model_kind) << ',' << k + 1 << ','
                    << csv::format_double(r.nl.tc) << ',' << trading_day_date(full, r.nl.tc) << ','
                    << csv::format_double(r.nl.m) << ',' << csv::format_double(r.nl.omega) << ','
                    << csv::format_double(r.nl.phi) << ',' << csv::format_double(r.lin.gamma) << ','
                    << csv::format_double(r.lin.A) << ',' << csv::format_double(r.lin.B) << ','
                    << csv::format_double(r.lin.C) << ',' << csv::format_double(r.rss) << ','
                    << (r.flags.is_bubble() ? 1 : 0) << '\n';
            }
        }
    }
    return out.str();
}

inline std::string scan_summary_csv(const ScanResult& scan, const FactorSeries& full, bool qualified_only) {
    std::ostringstream out;
    out << "quantity,model,n,mean,median,std,mean_date\n";
    const auto row = [&](const char* quantity, const char* model, const SummaryStats& st, bool is_time) {
        out << quantity << ',' << model << ',' << st.n << ',' << csv::format_double(st.mean) << ','
            << csv::format_double(st.median) << ',' << csv::format_double(st.std) << ','
            << (is_time && st.n > 0 ? trading_day_date(full, st.mean) : "") << '\n';
    };
    row("tc", "jls", scan.tc_jls, true);
    row("tc", "zipf", scan.tc_zipf, true);
    row("gamma", "zipf", scan.gamma_zipf, false);
    out << "# windows=" << scan.windows.size() << " failures=" << scan.failures
        << " qualified_only=" << (qualified_only ? "true" : "false") << '\n';
    return out.str();
}

inline int cmd_scan(const ScanArgs& a, Context& ctx) {
    const auto dir = prepare_dir(a.out);
    if (a.jobs < 1) throw InputError("--jobs must be at least 1");
    std::string config_path;
    const CalibrationConfig cfg = effective_config(a.calib, config_path);
    const FactorSeries full = load_factor_csv(a.factor);
    const long t1 = resolve_day(full, a.t1, "--t1");
    const long t2 = resolve_day(full, a.t2, "--t2");
    const ScanResult scan = scan_windows(full, t1, t2, a.n_t1, a.n_t2, a.step, cfg, a.jobs);

    std::size_t filled = 0;
    for (const WindowFit& w : scan.windows) {
        if (!w.ok) {
            ctx.warn("window [" + std::to_string(w.t1) + ", " + std::to_string(w.t2) + "] failed: " + w.error);
            continue;
        }
        if (w.fits.jls.results.size() < static_cast<std::size_t>(cfg.keep_best))
            ctx.warn("window [" + std::to_string(w.t1) + ", " + std::to_string(w.t2) + "] kept " +
                     std::to_string(w.fits.jls.results.size()) + " fits per model");
        for (const FitEnsemble* e : {&w.fits.jls, &w.fits.zipf})
            if (std::any_of(e->results.begin(), e->results.end(), [](const FitResult& r) { return !r.distinct; })) {
                ++filled;
                break;
            }
    }
    if (filled > 0)
        ctx.warn(std::to_string(filled) + " windows fill ensemble slots with duplicates of better basins");
    write_text(dir / "fits.csv", scan_fits_csv(scan, full));
    write_text(dir / "summary.csv", scan_summary_csv(scan, full, cfg.qualified_only));

    RunManifest m;
    m.command = "scan";
    m.arguments = json{{"t1", t1}, {"t2", t2}, {"n_t1", a.n_t1}, {"n_t2", a.n_t2}, {"step", a.step}};
    m.config = cfg;
    m.inputs.emplace_back("factor", a.factor);
    if (!config_path.empty()) m.inputs.emplace_back("config", config_path);
    m.seed = cfg.seed;
    write_json(dir / "manifest.json", manifest_to_json(m));
    ctx.log << "scanned " << scan.windows.size() << " windows (" << scan.failures << " failed)\n";
    return ctx.finish();
}

// ---------------------------------------------------------------------------------------
// lppl synth

struct SynthArgs {
    std::string spec;
    std::string out;
};

struct SynthPanelSpec {
    std::size_t n_firms = 0;
    long t0 = 0;
    long t2 = 0;
    double tail_exponent = 1.0;
    std::uint64_t seed = 1;
    PanelOptions options;
};

struct SynthFile {
    std::optional<SynthSpec> series;
    std::optional<SynthPanelSpec> panel;
};

inline SynthFile synth_file_from_json(const json& j) {
    const auto number = [](const json& obj, const char* key, double fallback) {
        if (!obj.contains(key)) return fallback;
        if (!obj.at(key).is_number()) throw InputError(std::string("synth spec: '") + key + "' must be a number");
        return obj.at(key).get<double>();
    };
    const auto integer = [](const json& obj, const char* key, long long fallback) {
        if (!obj.contains(key)) return fallback;
        if (!obj.at(key).is_number_integer())
            throw InputError(std::string("synth spec: '") + key + "' must be an integer");
        return obj.at(key).get<long long>();
    };
    const auto seed_of = [&](const json& obj) {
        const long long s = integer(obj, "seed", 1);
        if (s < 0) throw InputError("synth spec: seed must be non-negative");
        return static_cast<std::uint64_t>(s);
    };
    if (!j.is_object()) throw InputError("synth spec must be a JSON object");
    SynthFile f;
    if (j.contains("series")) {
        const json& js = j.at("series");
        if (!js.contains("params")) throw InputError("synth spec: series needs 'params'");
        SynthSpec spec;
        std::tie(spec.nl, spec.lin) = params_from_json(js.at("params"));
        spec.t1 = static_cast<long>(integer(js, "t1", spec.t1));
        spec.t2 = static_cast<long>(integer(js, "t2", spec.t2));
        spec.noise_sigma = number(js, "noise_sigma", 0.0);
        spec.seed = seed_of(js);
        if (js.contains("start_date")) spec.start_date = js.at("start_date").get<std::string>();
        if (js.contains("zeta")) {
            const json& z = js.at("zeta");
            const std::string kind = z.value("model", "zero");
            if (kind == "zero") {
                spec.zeta.kind = ZetaModelKind::zero;
            } else if (kind == "linear_drift") {
                spec.zeta.kind = ZetaModelKind::linear_drift;
                spec.zeta.rate = number(z, "rate", 0.0);
            } else if (kind == "supplied") {
                spec.zeta.kind = ZetaModelKind::supplied;
                if (!z.contains("values") || !z.at("values").is_array())
                    throw InputError("synth spec: supplied zeta needs a 'values' array");
                spec.zeta.supplied = z.at("values").get<std::vector<double>>();
            } else {
                throw InputError("synth spec: unknown zeta model '" + kind + "'");
            }
        }
        validate(spec);
        f.series = spec;
    }
    if (j.contains("panel")) {
        const json& jp = j.at("panel");
        SynthPanelSpec p;
        const long long n = integer(jp, "n_firms", 0);
        if (n < 2) throw InputError("synth spec: panel needs n_firms >= 2");
        p.n_firms = static_cast<std::size_t>(n);
        p.t0 = static_cast<long>(integer(jp, "t0", 0));
        p.t2 = static_cast<long>(integer(jp, "t2", 0));
        p.tail_exponent = number(jp, "tail_exponent", 1.0);
        p.seed = seed_of(jp);
        p.options.drift = number(jp, "drift", p.options.drift);
        p.options.vol = number(jp, "vol", p.options.vol);
        p.options.market_vol = number(jp, "market_vol", p.options.market_vol);
        p.options.size_tilt = number(jp, "size_tilt", p.options.size_tilt);
        p.options.identical = jp.value("identical", false);
        if (jp.contains("start_date")) p.options.start_date = jp.at("start_date").get<std::string>();
        f.panel = p;
    }
    if (!f.series && !f.panel) throw InputError("synth spec needs a 'series' or a 'panel' section");
    return f;
}

inline int cmd_synth(const SynthArgs& a, Context& ctx) {
    std::ifstream in(a.spec);
    if (!in) throw InputError("cannot open synth spec '" + a.spec + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw InputError("synth spec is not valid JSON: " + std::string(e.what()));
    }
    SynthFile f;
    try {
        f = synth_file_from_json(j);
    } catch (const json::exception& e) {
        throw InputError("synth spec: " + std::string(e.what()));
    }
    const auto dir = prepare_dir(a.out);
    if (f.series) {
        std::ostringstream out;
        write_factor_csv(out, generate_series(*f.series));
        write_text(dir / "factor.csv", out.str());
        ctx.log << "wrote " << (dir / "factor.csv").string() << '\n';
    }
    if (f.panel) {
        const auto& p = *f.panel;
        std::ostringstream out;
        write_panel_csv(out, generate_panel(p.n_firms, p.t0, p.t2, p.tail_exponent, p.seed, p.options));
        write_text(dir / "panel.csv", out.str());
        ctx.log << "wrote " << (dir / "panel.csv").string() << '\n';
    }
    RunManifest m;
    m.command = "synth";
    m.inputs.emplace_back("spec", a.spec);
    m.seed = f.series ? f.series->seed : f.panel->seed;
    write_json(dir / "manifest.json", manifest_to_json(m));
    return ctx.finish();
}

// Maps library exceptions onto exit codes.
template <class F>
int run_guarded(F&& body, std::ostream& err = std::cerr) {
    try {
        return body();
    } catch (const InputError& e) {
        err << "error: " << e.what() << '\n';
        return exit_input;
    } catch (const DomainError& e) {
        err << "error: " << e.what() << '\n';
        return exit_numerical;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << '\n';
        return exit_numerical;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return 1;
    }
}

} // namespace lppl::cli
