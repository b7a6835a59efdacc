#pragma once

// Closed-form suboptimality bounds, empirical scaling-exponent estimation,
// and the pessimism audit. These evaluate formulas only; experimental claims
// are checked by rate and ordering comparisons, not absolute levels.

#include <tabrl/mdp.hpp>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tabrl {

struct BoundInputs {
    double c_star = 1.0;  // concentrability, >= 1
    double h = 2.0;       // effective horizon, > 1
    long long s_size = 1;
    long long n = 1;
    double iota = 1.0;  // confidence polylog
    std::optional<double> b;            // coverage constant, noisy bounds only
    std::optional<long long> k;         // improvement steps
    std::optional<double> eta;          // improvement step size
    std::optional<double> log_z_mean;   // measured E[(1/k) sum log Z_t]
};

// Default polylog choice, reported with every bound evaluation.
inline double default_bound_iota(long long s_size, double h, long long n) {
    return std::log(static_cast<double>(s_size) * h * static_cast<double>(n));
}

namespace detail {

inline void check_bound_core(const BoundInputs& in) {
    require(in.c_star >= 1.0, "bounds: c_star must be at least 1");
    require(in.h > 1.0, "bounds: h must exceed 1");
    require(in.s_size >= 1, "bounds: s_size must be at least 1");
    require(in.n >= 1, "bounds: n must be at least 1");
    require(in.iota > 0.0, "bounds: iota must be positive");
}

}  // namespace detail

// Cloning: (C*-1) H / 2 + |S| H iota / N.
inline double bc_bound(const BoundInputs& in) {
    detail::check_bound_core(in);
    return (in.c_star - 1.0) * in.h / 2.0 +
           static_cast<double>(in.s_size) * in.h * in.iota / static_cast<double>(in.n);
}

// Conservative planning: sqrt(C* |S| H iota / N) + C* |S| H iota / N.
inline double lcb_bound(const BoundInputs& in) {
    detail::check_bound_core(in);
    const double t =
        in.c_star * static_cast<double>(in.s_size) * in.h * in.iota / static_cast<double>(in.n);
    return std::sqrt(t) + t;
}

// Conservative planning under coverage b:
// sqrt(H iota / (bN)) + H iota / (bN) + sqrt(b iota) + C* |S| iota / N.
inline double noisy_lcb_bound(const BoundInputs& in) {
    detail::check_bound_core(in);
    detail::require(in.b.has_value(), "noisy_lcb_bound: b is required");
    const double b = *in.b;
    detail::require(b > 0.0 && b < 1.0, "noisy_lcb_bound: b must be in (0,1)");
    const double t = in.h * in.iota / (b * static_cast<double>(in.n));
    return std::sqrt(t) + t + std::sqrt(b * in.iota) +
           in.c_star * static_cast<double>(in.s_size) * in.iota / static_cast<double>(in.n);
}

// The b = sqrt(H)/N substitution that yields the root-H overall rate.
inline double noisy_lcb_bound_at_sqrt_h(BoundInputs in) {
    detail::check_bound_core(in);
    in.b = std::sqrt(in.h) / static_cast<double>(in.n);
    detail::require(*in.b < 1.0, "noisy_lcb_bound: sqrt(H)/N must stay below 1");
    return noisy_lcb_bound(in);
}

// Information-theoretic floor at C* = 1: |S| H / N.
inline double lower_bound_c1(const BoundInputs& in) {
    detail::check_bound_core(in);
    return static_cast<double>(in.s_size) * in.h / static_cast<double>(in.n);
}

// Guaranteed multi-step improvement: (k/(H eta)) log_z_mean - sqrt(C* H iota / N).
inline double kstep_gain_lower_bound(const BoundInputs& in) {
    detail::check_bound_core(in);
    detail::require(in.k.has_value() && in.eta.has_value() && in.log_z_mean.has_value(),
                    "kstep_gain_lower_bound: k, eta, and log_z_mean are required");
    detail::require(*in.k >= 1, "kstep_gain_lower_bound: k must be at least 1");
    detail::require(*in.eta > 0.0, "kstep_gain_lower_bound: eta must be positive");
    return static_cast<double>(*in.k) / (in.h * *in.eta) * *in.log_z_mean -
           std::sqrt(in.c_star * in.h * in.iota / static_cast<double>(in.n));
}

// Evaluates every bound whose inputs are present, keyed by its export identifier.
inline std::vector<std::pair<std::string, double>> evaluate_bounds(const BoundInputs& in) {
    std::vector<std::pair<std::string, double>> out;
    out.emplace_back("bound:bc", bc_bound(in));
    out.emplace_back("bound:lcb", lcb_bound(in));
    if (in.b.has_value()) out.emplace_back("bound:noisy", noisy_lcb_bound(in));
    out.emplace_back("bound:lower", lower_bound_c1(in));
    if (in.k.has_value() && in.eta.has_value() && in.log_z_mean.has_value())
        out.emplace_back("bound:kstep", kstep_gain_lower_bound(in));
    return out;
}

// ---- empirical rate estimation -----------------------------------------------------

struct ScalingFit {
    double slope = 0.0;
    double r2 = 0.0;
};

// Least-squares slope of log y against log x.
inline ScalingFit scaling_exponent(const std::vector<std::pair<double, double>>& points) {
    detail::require(points.size() >= 3, "scaling_exponent: need at least 3 points");
    std::vector<double> lx, ly;
    for (const auto& [x, y] : points) {
        detail::require(x > 0.0 && y > 0.0, "scaling_exponent: points must be positive");
        lx.push_back(std::log(x));
        ly.push_back(std::log(y));
    }
    const double n = static_cast<double>(points.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
        syy += (ly[i] - my) * (ly[i] - my);
    }
    detail::require(sxx > 0.0, "scaling_exponent: x values must not all coincide");
    ScalingFit fit;
    fit.slope = sxy / sxx;
    fit.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    return fit;
}

// ---- pessimism audit ----------------------------------------------------------------

struct PessimismRecord {
    std::vector<double> v_hat;              // learner's final value estimates
    std::vector<double> v_true_of_learned;  // exact values of the learned policy
};

// Fraction of records where pessimism failed at any state.
inline double pessimism_audit(const std::vector<PessimismRecord>& records) {
    detail::require(!records.empty(), "pessimism_audit: no records");
    int violations = 0;
    for (const auto& rec : records) {
        detail::require(rec.v_hat.size() == rec.v_true_of_learned.size(),
                        "pessimism_audit: shape mismatch");
        for (std::size_t s = 0; s < rec.v_hat.size(); ++s)
            if (rec.v_hat[s] > rec.v_true_of_learned[s] + 1e-9) {
                ++violations;
                break;
            }
    }
    return static_cast<double>(violations) / static_cast<double>(records.size());
}

}  // namespace tabrl
