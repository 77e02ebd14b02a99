#include <cmath>

#include <gtest/gtest.h>

#include "lppl/calibration.hpp"
#include "lppl/synth.hpp"
#include "oracles.hpp"

using namespace lppl;

namespace {

SynthSpec base_spec() {
    SynthSpec spec;
    spec.nl = {115.0, 0.5, 8.0, 1.0};
    spec.lin = {0.4, 7.0, -0.05, 0.005};
    spec.t1 = 1;
    spec.t2 = 100;
    return spec;
}

} // namespace

TEST(GenerateSeries, ZeroZetaInterpolatesExactly) {
    SynthSpec spec = base_spec();
    spec.lin.gamma = 3.0; // unidentified with zeta = 0
    const auto s = generate_series(spec);
    for (double z : s.zeta) EXPECT_EQ(z, 0.0);
    EXPECT_LT(slave_fit(s, spec.nl, ModelKind::jls).rss, 1e-18);
    EXPECT_THROW(slave_fit(s, spec.nl, ModelKind::zipf), RankDeficientError);
}

TEST(GenerateSeries, MatchesClosedForm) {
    SynthSpec spec = base_spec();
    spec.zeta.kind = ZetaModelKind::linear_drift;
    spec.zeta.rate = 0.002;
    const auto s = generate_series(spec);
    EXPECT_EQ(s.t0, 0);
    EXPECT_EQ(s.size(), 100u);
    for (std::size_t i = 0; i < s.size(); ++i) {
        EXPECT_DOUBLE_EQ(s.zeta[i], 0.002 * s.t[i]);
        const double ref = static_cast<double>(oracle::log_price(s.t[i], spec.nl, spec.lin, s.zeta[i]));
        EXPECT_NEAR(s.ln_p[i], ref, 1e-12);
        EXPECT_NEAR(s.zeta[i], s.ln_p[i] - s.ln_pe[i], 1e-14);
    }
}

TEST(GenerateSeries, NoiseIsSeededGaussian) {
    SynthSpec spec = base_spec();
    spec.noise_sigma = 0.01;
    spec.seed = 17;
    const auto a = generate_series(spec);
    const auto b = generate_series(spec);
    EXPECT_EQ(a.ln_p, b.ln_p);
    spec.seed = 18;
    EXPECT_NE(generate_series(spec).ln_p, a.ln_p);

    spec.t2 = 5000;
    spec.nl.tc = 6000.0;
    const auto big = generate_series(spec);
    SynthSpec clean = spec;
    clean.noise_sigma = 0.0;
    const auto ref = generate_series(clean);
    double ss = 0.0;
    for (std::size_t i = 0; i < big.size(); ++i) ss += std::pow(big.ln_p[i] - ref.ln_p[i], 2);
    EXPECT_NEAR(std::sqrt(ss / big.size()), 0.01, 0.0005);
}

TEST(GenerateSeries, SuppliedZeta) {
    SynthSpec spec = base_spec();
    spec.zeta.kind = ZetaModelKind::supplied;
    spec.zeta.supplied = oracle::random_walk(100, 0.01, 3);
    const auto s = generate_series(spec);
    EXPECT_EQ(s.zeta, spec.zeta.supplied);
    spec.zeta.supplied.pop_back();
    EXPECT_THROW(generate_series(spec), InputError);
}

TEST(GenerateSeries, Validation) {
    SynthSpec spec = base_spec();
    spec.nl.tc = 100.0;
    EXPECT_THROW(generate_series(spec), InputError);
    spec = base_spec();
    spec.noise_sigma = -1.0;
    EXPECT_THROW(generate_series(spec), InputError);
    spec = base_spec();
    spec.t1 = 0;
    EXPECT_THROW(generate_series(spec), InputError);
    spec = base_spec();
    spec.start_date = "2005-02-30";
    EXPECT_THROW(generate_series(spec), InputError);
}

TEST(GeneratePanel, TwoIdenticalFirmsGiveZeroZeta) {
    PanelOptions opt;
    opt.identical = true;
    const auto p = generate_panel(2, 0, 50, 1.5, 4, opt);
    EXPECT_EQ(p.cap[0], p.cap[1]);
    const auto s = build_factor_series(p, index_price(p, total_capitalization(p)[0]), 1, 50);
    for (double z : s.zeta) EXPECT_NEAR(z, 0.0, 1e-13);
}

TEST(GeneratePanel, ScriptedDelistingDropsFirm) {
    PanelOptions opt;
    opt.events = {{2, 10, PanelEventKind::delist, 1}};
    const auto p = generate_panel(4, 0, 20, 1.5, 6, opt);
    const auto total = total_capitalization(p);
    for (std::size_t i = 0; i < p.num_days(); ++i) {
        double expect = 0.0;
        for (std::size_t j = 0; j < 4; ++j)
            if (j != 2 || i < 10) expect += p.cap[j][i];
        EXPECT_DOUBLE_EQ(total[i], expect);
        EXPECT_EQ(p.status[2][i], i < 10 ? ListingStatus::active : ListingStatus::delisted);
    }
}

TEST(GeneratePanel, SuspensionFreezesCapitalization) {
    PanelOptions opt;
    opt.events = {{1, 5, PanelEventKind::suspend, 3}};
    const auto p = generate_panel(3, 0, 12, 1.5, 7, opt);
    for (std::size_t i = 5; i < 8; ++i) {
        EXPECT_EQ(p.status[1][i], ListingStatus::suspended);
        EXPECT_EQ(p.cap[1][i], p.cap[1][4]);
    }
    EXPECT_EQ(p.status[1][8], ListingStatus::active);
}

TEST(GeneratePanel, HeavyTailGivesNonzeroZetaMatchingRecomputation) {
    const auto p = generate_panel(500, 0, 60, 1.05, 8);
    const auto index = index_price(p, total_capitalization(p)[0]);
    const auto s = build_factor_series(p, index, 1, 60);
    double max_abs = 0.0;
    for (double z : s.zeta) max_abs = std::max(max_abs, std::abs(z));
    EXPECT_GT(max_abs, 1e-3);
    const auto tot = oracle::total_cap(p);
    const auto pe = oracle::equal_weighted_product(p, static_cast<long double>(index[0]), 1, 60);
    for (std::size_t t = 1; t <= 60; ++t) {
        const long double z = std::log(tot[t] / tot[0] * 100.0L) - std::log(pe[t]);
        EXPECT_NEAR(s.zeta[t - 1], static_cast<double>(z), 1e-11);
    }
}

TEST(GeneratePanel, DeterministicAndValid) {
    const auto a = generate_panel(20, 0, 30, 1.2, 9);
    const auto b = generate_panel(20, 0, 30, 1.2, 9);
    EXPECT_EQ(a.cap, b.cap);
    EXPECT_EQ(a.num_days(), 31u);
    EXPECT_NO_THROW(validate(a));
    EXPECT_THROW(generate_panel(1, 0, 30, 1.2, 9), InputError);
    EXPECT_THROW(generate_panel(5, 10, 10, 1.2, 9), InputError);
    EXPECT_THROW(generate_panel(5, 0, 10, 0.0, 9), InputError);
}

TEST(GenerateSeries, DeterministicFitRecovery) {
    SynthSpec spec = base_spec();
    spec.zeta.kind = ZetaModelKind::linear_drift;
    spec.zeta.rate = 0.001;
    const auto s = generate_series(spec);
    CalibrationConfig cfg;
    cfg.keep_best = 1;
    const auto e = fit_window(make_fit_window(s, 1, 100, 30), cfg, ModelKind::zipf);
    const auto& best = e.results.front();
    EXPECT_LT(best.rss, 1e-18);
    EXPECT_NEAR(best.nl.tc, spec.nl.tc, 0.5);
    EXPECT_NEAR(best.nl.m, spec.nl.m, 0.01);
    EXPECT_NEAR(best.nl.omega, spec.nl.omega, 0.05);
    EXPECT_NEAR(best.lin.gamma, spec.lin.gamma, 1e-3);
}
