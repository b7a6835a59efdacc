#pragma once

// The five offline learners: behavioral cloning, reward-filtered cloning,
// k-step exponentiated-advantage improvement on the cloned policy,
// conservative value iteration with Bernstein lower-confidence bonuses, and
// support-constrained policy iteration with optional pessimistic extraction.

#include <tabrl/data.hpp>
#include <tabrl/mdp.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace tabrl {

// ---- behavioral cloning -----------------------------------------------------

// Empirical conditional n(s,a)/n(s); uniform at states never visited.
inline TabularPolicy bc_fit(const EmpiricalModel& model) {
    const int S = model.num_states, A = model.num_actions;
    TabularPolicy pi(S, std::vector<double>(A, 0.0));
    for (int s = 0; s < S; ++s) {
        long long n_s = 0;
        for (int a = 0; a < A; ++a) n_s += model.counts[s][a];
        if (n_s == 0) {
            pi[s].assign(A, 1.0 / A);
        } else {
            for (int a = 0; a < A; ++a)
                pi[s][a] = static_cast<double>(model.counts[s][a]) / static_cast<double>(n_s);
        }
    }
    return pi;
}

// Clones only the top ceil(fraction * num_trajectories) trajectories by total
// reward; equal rewards prefer the earlier trajectory.
inline TabularPolicy filtered_bc_fit(const OfflineDataset& data, int num_states,
                                     int num_actions, double fraction) {
    detail::require(data.mode == DatasetMode::kTrajectory,
                    "filtered_bc_fit: requires a trajectory-mode dataset");
    detail::require(!data.trajectories.empty(), "filtered_bc_fit: no trajectories");
    detail::require(fraction > 0.0 && fraction <= 1.0,
                    "filtered_bc_fit: fraction must be in (0,1]");

    const int total = static_cast<int>(data.trajectories.size());
    const int keep = static_cast<int>(std::ceil(fraction * total));
    std::vector<int> order(total);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int i, int j) {
        return data.trajectories[i].total_reward > data.trajectories[j].total_reward;
    });

    OfflineDataset selected;
    selected.mode = DatasetMode::kIid;  // only the transition multiset matters here
    for (int i = 0; i < keep; ++i) {
        const auto& traj = data.trajectories[order[i]];
        for (int t = traj.begin; t < traj.end; ++t)
            selected.transitions.push_back(data.transitions[t]);
    }
    return bc_fit(build_empirical_model(selected, num_states, num_actions));
}

// ---- shared Bernstein bonus ---------------------------------------------------

namespace detail {

// sqrt(Var_{P-hat}(V) iota / n) + sqrt(r-hat iota / n) + iota / n with n∨1.
inline double bernstein_bonus(const std::vector<double>& p_row, const std::vector<double>& v,
                              double r_hat, long long n, double iota) {
    const double n_eff = static_cast<double>(std::max<long long>(n, 1));
    return std::sqrt(variance_of(p_row, v) * iota / n_eff) +
           std::sqrt(r_hat * iota / n_eff) + iota / n_eff;
}

}  // namespace detail

// ---- conservative value iteration ------------------------------------------------

struct LcbRunArtifacts {
    TabularPolicy policy;
    std::vector<std::vector<double>> v_hat_history;  // V-hat before and after each sweep
    SaTable bonus_final;
    long long iterations = 0;
};

// Pessimistic value iteration: each sweep subtracts the Bernstein bonus from
// the empirical Bellman backup and applies the monotone V-hat update. m = 0
// selects the ceil(H ln N) schedule. iota_scale scales the confidence width
// (1.0 is the literal pseudocode constant, which is loose in small samples;
// harness presets use a smaller calibrated value).
inline LcbRunArtifacts conservative_vi_lcb(const EmpiricalModel& model, double gamma,
                                           double delta = 0.05, long long m = 0,
                                           double iota_scale = 1.0) {
    detail::require(delta > 0.0 && delta < 1.0, "conservative_vi_lcb: delta must be in (0,1)");
    detail::require(m >= 0, "conservative_vi_lcb: m must be nonnegative");
    detail::require(gamma >= 0.0 && gamma < 1.0, "conservative_vi_lcb: gamma must be in [0,1)");
    detail::require(iota_scale > 0.0, "conservative_vi_lcb: iota_scale must be positive");
    const int S = model.num_states, A = model.num_actions;
    const double h = horizon(gamma);
    if (m == 0) {
        const double n_total = static_cast<double>(std::max<long long>(model.total, 1));
        m = std::max<long long>(1, static_cast<long long>(std::ceil(h * std::log(n_total))));
    }
    const double iota =
        iota_scale * std::log(static_cast<double>(S) * A * static_cast<double>(m) / delta);

    std::vector<double> v(S, 0.0);
    SaTable q(S, std::vector<double>(A, 0.0));
    SaTable bonus(S, std::vector<double>(A, 0.0));
    LcbRunArtifacts out;
    out.iterations = m;
    out.v_hat_history.push_back(v);

    for (long long iter = 0; iter < m; ++iter) {
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) {
                const auto& row = model.p_hat[s][a];
                bonus[s][a] =
                    detail::bernstein_bonus(row, v, model.r_hat[s][a], model.counts[s][a], iota);
                double pv = 0.0;
                for (int sp = 0; sp < S; ++sp) pv += row[sp] * v[sp];
                q[s][a] = model.r_hat[s][a] - bonus[s][a] + gamma * pv;
            }
        for (int s = 0; s < S; ++s) {
            double best = q[s][0];
            for (int a = 1; a < A; ++a) best = std::max(best, q[s][a]);
            v[s] = std::max(v[s], best);  // monotone update
        }
        out.v_hat_history.push_back(v);
    }

    out.policy.assign(S, std::vector<double>(A, 0.0));
    for (int s = 0; s < S; ++s) {
        int best_a = 0;
        for (int a = 1; a < A; ++a)
            if (q[s][a] > q[s][best_a]) best_a = a;
        out.policy[s][best_a] = 1.0;
    }
    out.bonus_final = std::move(bonus);
    return out;
}

// ---- k-step exponentiated-advantage improvement -----------------------------------

struct KStepArtifacts {
    std::vector<TabularPolicy> policies;     // pi^0 .. pi^k
    std::vector<std::vector<double>> log_z;  // per step, per state
    std::vector<SaTable> advantages;         // per step
};

// Starts from the cloned policy and applies k multiplicative updates
// pi(a|s) <- pi(a|s) exp(eta H A(s,a)) / Z(s), with A the exact advantage on
// the empirical MDP. Z(s) averages exp over the current policy, so log Z >= 0
// by Jensen (the advantage has zero mean under pi) and actions outside the
// cloned support keep zero mass at visited states.
inline KStepArtifacts bc_k_step_pi(const EmpiricalModel& model, int k, double eta, double gamma,
                                   double tol = 1e-10) {
    detail::require(k >= 1, "bc_k_step_pi: k must be at least 1");
    detail::require(eta > 0.0, "bc_k_step_pi: eta must be positive");
    const int S = model.num_states, A = model.num_actions;
    const double h = horizon(gamma);
    const TabularMdp hat = to_tabular_mdp(model, gamma, std::vector<double>(S, 1.0 / S));

    KStepArtifacts out;
    out.policies.push_back(bc_fit(model));
    for (int step = 0; step < k; ++step) {
        const TabularPolicy& pi = out.policies.back();
        const ValueBundle vb = evaluate_policy(hat, pi, tol);

        SaTable adv(S, std::vector<double>(A, 0.0));
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) adv[s][a] = vb.q[s][a] - vb.v[s];

        TabularPolicy next(S, std::vector<double>(A, 0.0));
        std::vector<double> log_z(S, 0.0);
        for (int s = 0; s < S; ++s) {
            // Max-shifted log-sum-exp over the policy's support.
            double shift = -std::numeric_limits<double>::infinity();
            for (int a = 0; a < A; ++a)
                if (pi[s][a] > 0.0) shift = std::max(shift, eta * h * adv[s][a]);
            double denom = 0.0;
            for (int a = 0; a < A; ++a)
                if (pi[s][a] > 0.0)
                    next[s][a] = pi[s][a] * std::exp(eta * h * adv[s][a] - shift);
            for (int a = 0; a < A; ++a) denom += next[s][a];
            for (int a = 0; a < A; ++a) next[s][a] /= denom;
            log_z[s] = shift + std::log(denom);
        }
        out.advantages.push_back(std::move(adv));
        out.log_z.push_back(std::move(log_z));
        out.policies.push_back(std::move(next));
    }
    return out;
}

// ---- support-constrained policy iteration ------------------------------------------

inline std::vector<std::vector<int>> support_indicator(const EmpiricalModel& model,
                                                       double b_threshold) {
    std::vector<std::vector<int>> zeta(model.num_states,
                                       std::vector<int>(model.num_actions, 0));
    for (int s = 0; s < model.num_states; ++s)
        for (int a = 0; a < model.num_actions; ++a)
            zeta[s][a] = model.mu_hat[s][a] >= b_threshold ? 1 : 0;
    return zeta;
}

struct PolicyConstraintOptions {
    double b_threshold = 0.0;
    double sigma = 0.0;  // pessimistic-extraction weight; 0 disables the bonus
    int outer_iters = 50;
    double inner_tol = 1e-8;
    double delta = 0.05;
};

// Alternates support-truncated policy evaluation with greedy extraction over
// the supported actions, optionally penalized by the Bernstein bonus built
// from the truncated values. States with no supported action act uniformly.
inline TabularPolicy policy_constraint_pi(const EmpiricalModel& model, double gamma,
                                          const PolicyConstraintOptions& opt = {}) {
    detail::require(opt.b_threshold >= 0.0, "policy_constraint_pi: b_threshold must be >= 0");
    detail::require(opt.sigma >= 0.0, "policy_constraint_pi: sigma must be >= 0");
    detail::require(opt.outer_iters >= 1, "policy_constraint_pi: outer_iters must be >= 1");
    detail::require(opt.inner_tol > 0.0, "policy_constraint_pi: inner_tol must be positive");
    detail::require(opt.delta > 0.0 && opt.delta < 1.0,
                    "policy_constraint_pi: delta must be in (0,1)");
    detail::require(gamma >= 0.0 && gamma < 1.0, "policy_constraint_pi: gamma must be in [0,1)");

    const int S = model.num_states, A = model.num_actions;
    const auto zeta = support_indicator(model, opt.b_threshold);
    const double iota = std::log(static_cast<double>(S) * A / opt.delta);

    const auto uniform_row = std::vector<double>(A, 1.0 / A);
    TabularPolicy pi(S);
    for (int s = 0; s < S; ++s) {
        int supported = 0;
        for (int a = 0; a < A; ++a) supported += zeta[s][a];
        if (supported == 0) {
            pi[s] = uniform_row;
        } else {
            pi[s].assign(A, 0.0);
            for (int a = 0; a < A; ++a)
                if (zeta[s][a]) pi[s][a] = 1.0 / supported;
        }
    }

    // Truncated values persist across outer rounds; each evaluation converges
    // from the previous fixed point, which is exact to inner_tol regardless.
    std::vector<double> v(S, 0.0);
    SaTable q(S, std::vector<double>(A, 0.0));
    const long long budget = detail::sweep_budget(gamma, opt.inner_tol) + 64;

    for (int outer = 0; outer < opt.outer_iters; ++outer) {
        double residual = std::numeric_limits<double>::infinity();
        for (long long sweep = 0; sweep < budget && residual > opt.inner_tol; ++sweep) {
            residual = 0.0;
            for (int s = 0; s < S; ++s)
                for (int a = 0; a < A; ++a) {
                    double pv = 0.0;
                    const auto& row = model.p_hat[s][a];
                    for (int sp = 0; sp < S; ++sp) pv += row[sp] * v[sp];
                    q[s][a] = model.r_hat[s][a] + gamma * pv;
                }
            for (int s = 0; s < S; ++s) {
                double nv = 0.0;
                for (int a = 0; a < A; ++a)
                    if (zeta[s][a]) nv += pi[s][a] * q[s][a];
                residual = std::max(residual, std::abs(nv - v[s]));
                v[s] = nv;
            }
        }
        if (residual > opt.inner_tol)
            throw std::runtime_error("policy_constraint_pi: evaluation did not converge");

        TabularPolicy next(S);
        for (int s = 0; s < S; ++s) {
            int best_a = -1;
            double best_score = 0.0;
            for (int a = 0; a < A; ++a) {
                if (!zeta[s][a]) continue;
                double score = q[s][a];
                if (opt.sigma > 0.0)
                    score -= opt.sigma * detail::bernstein_bonus(model.p_hat[s][a], v,
                                                                 model.r_hat[s][a],
                                                                 model.counts[s][a], iota);
                if (best_a < 0 || score > best_score) {
                    best_a = a;
                    best_score = score;
                }
            }
            if (best_a < 0) {
                next[s] = uniform_row;
            } else {
                next[s].assign(A, 0.0);
                next[s][best_a] = 1.0;
            }
        }
        const bool stable = next == pi;
        pi = std::move(next);
        if (stable) break;
    }
    return pi;
}

}  // namespace tabrl
