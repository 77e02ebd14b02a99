#pragma once

// Log-periodic power law with an integrated Zipf factor term:
//
//   E[ln p(t)] = gamma*zeta(t) + A + B*(tc-t)^m + C*(tc-t)^m*cos(omega*ln(tc-t) - phi)
//
// All times are trading-day indices (real valued); t must stay strictly below tc.

#include <cmath>
#include <string>
#include <string_view>

#include "lppl/error.hpp"

namespace lppl {

enum class ModelKind { jls, zipf };

inline std::string_view to_string(ModelKind kind) {
    return kind == ModelKind::zipf ? "zipf" : "jls";
}

inline ModelKind model_kind_from_string(std::string_view s) {
    if (s == "zipf") return ModelKind::zipf;
    if (s == "jls") return ModelKind::jls;
    throw InputError("unknown model kind '" + std::string(s) + "' (expected jls or zipf)");
}

// Slow coordinates searched by the nonlinear optimizer.
struct NonlinearParams {
    double tc = 0.0;
    double m = 0.5;
    double omega = 6.0;
    double phi = 0.0;

    friend bool operator==(const NonlinearParams&, const NonlinearParams&) = default;
};

// Coordinates slaved analytically to NonlinearParams. gamma is 0 for the plain JLS model.
struct LinearParams {
    double gamma = 0.0;
    double A = 0.0;
    double B = 0.0;
    double C = 0.0;

    friend bool operator==(const LinearParams&, const LinearParams&) = default;
};

struct QualificationFlags {
    bool m_in_range = false;
    bool B_negative = false;
    bool hazard_nonneg = false;
    bool omega_ok = false;

    bool is_bubble() const { return m_in_range && B_negative && hazard_nonneg && omega_ok; }

    friend bool operator==(const QualificationFlags&, const QualificationFlags&) = default;
};

// Fits with a log-angular frequency above this are discarded.
inline constexpr double max_qualified_omega = 20.0;

namespace detail {

inline double time_to_critical(double t, const NonlinearParams& nl) {
    const double tau = nl.tc - t;
    if (!(tau > 0.0)) {
        throw DomainError("model evaluated at t=" + std::to_string(t) +
                          " which is not before tc=" + std::to_string(nl.tc));
    }
    return tau;
}

} // namespace detail

struct Basis {
    double f; // (tc-t)^m
    double g; // (tc-t)^m cos(omega ln(tc-t) - phi)
};

inline Basis basis_functions(double t, const NonlinearParams& nl) {
    const double log_tau = std::log(detail::time_to_critical(t, nl));
    const double f = std::exp(nl.m * log_tau);
    return {f, f * std::cos(nl.omega * log_tau - nl.phi)};
}

inline double lppl_log_price(double t, const NonlinearParams& nl, const LinearParams& lin,
                             double zeta_t) {
    const Basis b = basis_functions(t, nl);
    return lin.gamma * zeta_t + lin.A + lin.B * b.f + lin.C * b.g;
}

// kappa*h(t): time derivative of the deterministic LPPL part. The crash amplitude
// kappa is not identifiable from prices, so only this scaled hazard is available.
inline double hazard_proxy(double t, const NonlinearParams& nl, const LinearParams& lin) {
    const double log_tau = std::log(detail::time_to_critical(t, nl));
    const double phase = nl.omega * log_tau - nl.phi;
    const double bracket = -lin.B * nl.m - lin.C * nl.m * std::cos(phase) +
                           lin.C * nl.omega * std::sin(phase);
    return std::exp((nl.m - 1.0) * log_tau) * bracket;
}

// b = -Bm - |C| sqrt(m^2 + omega^2); the hazard is non-negative for every t iff b >= 0.
inline double hazard_floor(const NonlinearParams& nl, const LinearParams& lin) {
    return -lin.B * nl.m - std::abs(lin.C) * std::hypot(nl.m, nl.omega);
}

inline QualificationFlags qualify(const NonlinearParams& nl, const LinearParams& lin) {
    QualificationFlags q;
    q.m_in_range = nl.m > 0.0 && nl.m < 1.0;
    q.B_negative = lin.B < 0.0;
    q.hazard_nonneg = hazard_floor(nl, lin) >= 0.0;
    q.omega_ok = nl.omega <= max_qualified_omega;
    return q;
}

} // namespace lppl
