#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "lppl/cli.hpp"

namespace {

void add_calibration_flags(CLI::App* cmd, lppl::cli::CalibrationOptions& o) {
    cmd->add_option("--config", o.config_path, "key = value calibration config (default: $LPPL_CONFIG)");
    cmd->add_option("--seed", o.seed, "master seed, overrides the config");
    cmd->add_option("--keep-best", o.keep_best, "number of distinct fits kept per model");
}

} // namespace

int main(int argc, char** argv) {
    using namespace lppl::cli;
    CLI::App app{"LPPL bubble calibration with a Zipf factor"};
    app.require_subcommand(1);
    app.set_version_flag("--version", tool_version);
    bool strict = false;
    app.add_flag("--strict", strict, "exit with code 4 when a statistical warning is raised");

    ZipfArgs zipf;
    auto* zc = app.add_subcommand("zipf", "build the index, equal-weighted price and Zipf factor series");
    zc->add_option("--panel", zipf.panel, "constituent CSV (date,firm,cap,status)")->required();
    zc->add_option("--index", zipf.index, "index CSV (date,close); computed from the panel if absent");
    zc->add_option("--t1", zipf.t1, "first window day (panel day index)")->required();
    zc->add_option("--t2", zipf.t2, "last window day (panel day index)")->required();
    zc->add_option("--base-cap", zipf.base_cap, "base capitalization (default: total on t1-1)");
    zc->add_option("--base-value", zipf.base_value, "index value at the base capitalization");
    zc->add_option("--out", zipf.out, "output factor CSV")->required();

    FitArgs fit;
    std::string model = "both";
    bool svg = false;
    auto* fc = app.add_subcommand("fit", "fit one window with the jls and/or zipf model");
    fc->add_option("--factor", fit.factor, "factor CSV (t,date,ln_p,ln_pe,zeta)")->required();
    fc->add_option("--t1", fit.t1, "window start (day index or ISO date)")->required();
    fc->add_option("--t2", fit.t2, "window end (day index or ISO date)")->required();
    fc->add_option("--model", model, "jls, zipf or both");
    fc->add_option("--out", fit.out, "output directory")->required();
    fc->add_flag("--svg", svg, "also render plot.svg");
    add_calibration_flags(fc, fit.calib);

    ScanArgs scan;
    auto* sc = app.add_subcommand("scan", "fit both models on a grid of shifted windows");
    sc->add_option("--factor", scan.factor, "factor CSV (t,date,ln_p,ln_pe,zeta)")->required();
    sc->add_option("--t1", scan.t1, "first window start (day index or ISO date)")->required();
    sc->add_option("--t2", scan.t2, "first window end (day index or ISO date)")->required();
    sc->add_option("--n-t1", scan.n_t1, "number of start days");
    sc->add_option("--n-t2", scan.n_t2, "number of end days");
    sc->add_option("--step", scan.step, "shift between windows in trading days");
    sc->add_option("--jobs", scan.jobs, "worker threads");
    sc->add_option("--out", scan.out, "output directory")->required();
    add_calibration_flags(sc, scan.calib);

    SynthArgs synth;
    auto* yc = app.add_subcommand("synth", "generate synthetic factor series and panels");
    yc->add_option("--spec", synth.spec, "JSON spec file")->required();
    yc->add_option("--out", synth.out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_input;
    }

    Context ctx{std::cerr, strict, {}};
    return run_guarded([&] {
        if (*zc) return cmd_zipf(zipf, ctx);
        if (*fc) {
            fit.model = model_choice_from_string(model);
            fit.svg = svg;
            return cmd_fit(fit, ctx);
        }
        if (*sc) return cmd_scan(scan, ctx);
        return cmd_synth(synth, ctx);
    });
}
