#pragma once

// Exact tabular MDP machinery: validated containers, policy evaluation with a
// dual iterative/linear-solve backend, optimal planning, discounted occupancy
// measures, returns, and the distributional variance operator.

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace tabrl {

// π(a|s) and r(s,a) share the [state][action] layout.
using SaTable = std::vector<std::vector<double>>;
using TabularPolicy = SaTable;

struct TabularMdp {
    int num_states = 0;
    int num_actions = 0;
    // transition[s][a][s'] = P(s'|s,a)
    std::vector<std::vector<std::vector<double>>> transition;
    SaTable reward_mean;  // r(s,a) in [0,1]
    double gamma = 0.0;   // in [0,1)
    std::vector<double> initial_dist;  // rho(s)
};

inline double horizon(double gamma) { return 1.0 / (1.0 - gamma); }
inline double horizon(const TabularMdp& mdp) { return horizon(mdp.gamma); }

namespace detail {

constexpr double kRowSumTol = 1e-9;

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

inline bool is_distribution(const std::vector<double>& row, double tol = kRowSumTol) {
    double sum = 0.0;
    for (double p : row) {
        if (p < 0.0 || !std::isfinite(p)) return false;
        sum += p;
    }
    return std::abs(sum - 1.0) <= tol;
}

}  // namespace detail

inline void validate_policy(const TabularPolicy& policy, int num_states, int num_actions) {
    detail::require(static_cast<int>(policy.size()) == num_states,
                    "policy: wrong number of states");
    for (const auto& row : policy) {
        detail::require(static_cast<int>(row.size()) == num_actions,
                        "policy: wrong number of actions");
        detail::require(detail::is_distribution(row),
                        "policy: row is not a probability distribution");
    }
}

inline void validate_mdp(const TabularMdp& mdp) {
    using detail::require;
    require(mdp.num_states > 0, "mdp: num_states must be positive");
    require(mdp.num_actions > 0, "mdp: num_actions must be positive");
    require(mdp.gamma >= 0.0 && mdp.gamma < 1.0, "mdp: gamma must lie in [0,1)");
    require(static_cast<int>(mdp.transition.size()) == mdp.num_states,
            "mdp: transition table has wrong state count");
    require(static_cast<int>(mdp.reward_mean.size()) == mdp.num_states,
            "mdp: reward table has wrong state count");
    for (int s = 0; s < mdp.num_states; ++s) {
        require(static_cast<int>(mdp.transition[s].size()) == mdp.num_actions,
                "mdp: transition table has wrong action count");
        require(static_cast<int>(mdp.reward_mean[s].size()) == mdp.num_actions,
                "mdp: reward table has wrong action count");
        for (int a = 0; a < mdp.num_actions; ++a) {
            require(static_cast<int>(mdp.transition[s][a].size()) == mdp.num_states,
                    "mdp: transition row has wrong length");
            require(detail::is_distribution(mdp.transition[s][a]),
                    "mdp: transition row is not a probability distribution");
            const double r = mdp.reward_mean[s][a];
            require(std::isfinite(r) && r >= 0.0 && r <= 1.0,
                    "mdp: reward outside [0,1]");
        }
    }
    require(static_cast<int>(mdp.initial_dist.size()) == mdp.num_states,
            "mdp: initial distribution has wrong length");
    require(detail::is_distribution(mdp.initial_dist),
            "mdp: initial distribution is not a probability distribution");
}

inline TabularPolicy uniform_policy(int num_states, int num_actions) {
    return TabularPolicy(num_states,
                         std::vector<double>(num_actions, 1.0 / num_actions));
}

inline TabularPolicy policy_from_actions(const std::vector<int>& actions, int num_actions) {
    TabularPolicy p(actions.size(), std::vector<double>(num_actions, 0.0));
    for (std::size_t s = 0; s < actions.size(); ++s) {
        detail::require(actions[s] >= 0 && actions[s] < num_actions,
                        "policy_from_actions: action index out of range");
        p[s][actions[s]] = 1.0;
    }
    return p;
}

struct ValueBundle {
    std::vector<double> v;
    SaTable q;
    double residual = 0.0;  // sup-norm change of the last Bellman sweep
};

namespace detail {

// Mixes policy into dynamics: P_pi(s,s') and r_pi(s).
inline void mix_policy(const TabularMdp& mdp, const TabularPolicy& policy,
                       Eigen::MatrixXd& p_pi, Eigen::VectorXd& r_pi) {
    const int S = mdp.num_states, A = mdp.num_actions;
    p_pi.setZero(S, S);
    r_pi.setZero(S);
    for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
            const double w = policy[s][a];
            if (w == 0.0) continue;
            r_pi(s) += w * mdp.reward_mean[s][a];
            const auto& row = mdp.transition[s][a];
            for (int sp = 0; sp < S; ++sp) p_pi(s, sp) += w * row[sp];
        }
    }
}

inline long sweep_budget(double gamma, double tol) {
    if (gamma <= 0.0) return 4;
    // residual shrinks by gamma per sweep from at most 1/(1-gamma)
    const double need = (std::log(1.0 / tol) + std::log(horizon(gamma))) / -std::log(gamma);
    return static_cast<long>(need) + 64;
}

}  // namespace detail

// Fixed point of the policy Bellman operator. Runs the iterative sweep to the
// requested residual and cross-checks it against a direct (I - gamma*P_pi)
// solve; the two backends must agree or evaluation aborts.
inline ValueBundle evaluate_policy(const TabularMdp& mdp, const TabularPolicy& policy,
                                   double tol = 1e-10) {
    detail::require(tol > 0.0, "evaluate_policy: tol must be positive");
    validate_policy(policy, mdp.num_states, mdp.num_actions);
    const int S = mdp.num_states, A = mdp.num_actions;

    Eigen::MatrixXd p_pi;
    Eigen::VectorXd r_pi;
    detail::mix_policy(mdp, policy, p_pi, r_pi);

    Eigen::VectorXd v = Eigen::VectorXd::Zero(S);
    double residual = std::numeric_limits<double>::infinity();
    const long budget = detail::sweep_budget(mdp.gamma, tol);
    for (long it = 0; it < budget && residual > tol; ++it) {
        Eigen::VectorXd next = r_pi + mdp.gamma * (p_pi * v);
        residual = (next - v).lpNorm<Eigen::Infinity>();
        v = std::move(next);
    }
    if (residual > tol)
        throw std::runtime_error("evaluate_policy: iteration failed to reach tolerance");

    // Direct backend; agreement bound covers the iterative stopping error.
    Eigen::MatrixXd system = Eigen::MatrixXd::Identity(S, S) - mdp.gamma * p_pi;
    Eigen::VectorXd v_exact = system.partialPivLu().solve(r_pi);
    const double agree_tol = 1e-8 + tol * mdp.gamma * horizon(mdp.gamma);
    if ((v - v_exact).lpNorm<Eigen::Infinity>() > agree_tol)
        throw std::runtime_error("evaluate_policy: iterative and linear-solve backends disagree");

    ValueBundle out;
    out.v.assign(v.data(), v.data() + S);
    out.q.assign(S, std::vector<double>(A, 0.0));
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            double acc = mdp.reward_mean[s][a];
            const auto& row = mdp.transition[s][a];
            double dot = 0.0;
            for (int sp = 0; sp < S; ++sp) dot += row[sp] * out.v[sp];
            out.q[s][a] = acc + mdp.gamma * dot;
        }
    out.residual = residual;
    return out;
}

// Value iteration to the optimal fixed point. Greedy policy breaks ties by
// lowest action index; returned v satisfies v(s) = max_a q(s,a) exactly.
inline std::pair<ValueBundle, TabularPolicy> solve_optimal(const TabularMdp& mdp,
                                                           double tol = 1e-10) {
    detail::require(tol > 0.0, "solve_optimal: tol must be positive");
    const int S = mdp.num_states, A = mdp.num_actions;

    std::vector<Eigen::MatrixXd> p_a(A, Eigen::MatrixXd(S, S));
    std::vector<Eigen::VectorXd> r_a(A, Eigen::VectorXd(S));
    for (int a = 0; a < A; ++a)
        for (int s = 0; s < S; ++s) {
            r_a[a](s) = mdp.reward_mean[s][a];
            for (int sp = 0; sp < S; ++sp) p_a[a](s, sp) = mdp.transition[s][a][sp];
        }

    Eigen::VectorXd v = Eigen::VectorXd::Zero(S);
    double residual = std::numeric_limits<double>::infinity();
    const long budget = detail::sweep_budget(mdp.gamma, tol);
    for (long it = 0; it < budget && residual > tol; ++it) {
        Eigen::VectorXd next = r_a[0] + mdp.gamma * (p_a[0] * v);
        for (int a = 1; a < A; ++a)
            next = next.cwiseMax(r_a[a] + mdp.gamma * (p_a[a] * v));
        residual = (next - v).lpNorm<Eigen::Infinity>();
        v = std::move(next);
    }
    if (residual > tol)
        throw std::runtime_error("solve_optimal: iteration failed to reach tolerance");

    ValueBundle out;
    out.q.assign(S, std::vector<double>(A, 0.0));
    out.v.assign(S, 0.0);
    std::vector<int> greedy(S, 0);
    for (int s = 0; s < S; ++s) {
        double best = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < A; ++a) {
            double dot = 0.0;
            for (int sp = 0; sp < S; ++sp) dot += mdp.transition[s][a][sp] * v(sp);
            const double q = mdp.reward_mean[s][a] + mdp.gamma * dot;
            out.q[s][a] = q;
            if (q > best) {  // strict: equal q keeps the earlier action
                best = q;
                greedy[s] = a;
            }
        }
        out.v[s] = best;
    }
    out.residual = residual;
    return {out, policy_from_actions(greedy, A)};
}

// Normalized discounted state-action visitation d^pi from the given start
// distribution, via the exact discounted-flow linear system.
inline SaTable occupancy_measure(const TabularMdp& mdp, const TabularPolicy& policy,
                                 const std::vector<double>& init, double tol = 1e-10) {
    validate_policy(policy, mdp.num_states, mdp.num_actions);
    detail::require(static_cast<int>(init.size()) == mdp.num_states,
                    "occupancy_measure: init has wrong length");
    detail::require(detail::is_distribution(init),
                    "occupancy_measure: init is not a probability distribution");
    const int S = mdp.num_states, A = mdp.num_actions;

    Eigen::MatrixXd p_pi;
    Eigen::VectorXd r_pi;
    detail::mix_policy(mdp, policy, p_pi, r_pi);
    Eigen::VectorXd rho = Eigen::Map<const Eigen::VectorXd>(init.data(), S);

    // x = sum_t gamma^t rho^T P_pi^t, so (I - gamma P_pi^T) x = rho.
    Eigen::MatrixXd system = Eigen::MatrixXd::Identity(S, S) - mdp.gamma * p_pi.transpose();
    Eigen::VectorXd x = system.partialPivLu().solve(rho);
    const double flow_residual = (system * x - rho).lpNorm<Eigen::Infinity>();
    if (flow_residual > std::max(tol, 1e-12))
        throw std::runtime_error("occupancy_measure: flow solve residual too large");

    SaTable d(S, std::vector<double>(A, 0.0));
    double total = 0.0;
    for (int s = 0; s < S; ++s) {
        const double ds = (1.0 - mdp.gamma) * x(s);
        for (int a = 0; a < A; ++a) {
            d[s][a] = ds * policy[s][a];
            total += d[s][a];
        }
    }
    if (std::abs(total - 1.0) > 1e-8)
        throw std::runtime_error("occupancy_measure: mass deviates from 1");
    for (auto& row : d)
        for (double& val : row) val /= total;
    return d;
}

inline std::vector<double> occupancy_state_marginal(const SaTable& d) {
    std::vector<double> out(d.size(), 0.0);
    for (std::size_t s = 0; s < d.size(); ++s)
        for (double val : d[s]) out[s] += val;
    return out;
}

// J(pi) = E_{s0 ~ rho} V^pi(s0).
inline double expected_return(const TabularMdp& mdp, const TabularPolicy& policy,
                              double tol = 1e-10) {
    const ValueBundle vb = evaluate_policy(mdp, policy, tol);
    double j = 0.0;
    for (int s = 0; s < mdp.num_states; ++s) j += mdp.initial_dist[s] * vb.v[s];
    return j;
}

// J(pi*) - J(learned) for a single learned policy.
inline double suboptimality(const TabularMdp& mdp, const TabularPolicy& learned,
                            double tol = 1e-10) {
    const auto [opt, pi_star] = solve_optimal(mdp, tol);
    double j_star = 0.0;
    for (int s = 0; s < mdp.num_states; ++s) j_star += mdp.initial_dist[s] * opt.v[s];
    return j_star - expected_return(mdp, learned, tol);
}

// V(x, y) = sum_i x_i y_i^2 - (sum_i x_i y_i)^2, the variance of y under x.
inline double variance_of(const std::vector<double>& dist, const std::vector<double>& values) {
    detail::require(dist.size() == values.size(), "variance_of: length mismatch");
    double mean = 0.0, second = 0.0;
    for (std::size_t i = 0; i < dist.size(); ++i) {
        mean += dist[i] * values[i];
        second += dist[i] * values[i] * values[i];
    }
    return std::max(0.0, second - mean * mean);
}

struct BoundedReturnReport {
    bool ok = false;
    double max_return = 0.0;  // best achievable expected return over all states
    int witness_state = -1;   // state attaining it
};

// Checks the bounded-return condition: the best achievable discounted return
// from every start state (max over policies, i.e. optimal value iteration on
// the table as given) stays at or below 1.
inline BoundedReturnReport check_bounded_return(const TabularMdp& mdp, double tol = 1e-10) {
    const auto [opt, pi] = solve_optimal(mdp, tol);
    BoundedReturnReport rep;
    rep.witness_state = static_cast<int>(
        std::max_element(opt.v.begin(), opt.v.end()) - opt.v.begin());
    rep.max_return = opt.v[rep.witness_state];
    rep.ok = rep.max_return <= 1.0 + 1e-6;
    return rep;
}

// ---- serialization ----------------------------------------------------------

inline nlohmann::json mdp_to_json(const TabularMdp& mdp) {
    return nlohmann::json{{"num_states", mdp.num_states},
                          {"num_actions", mdp.num_actions},
                          {"gamma", mdp.gamma},
                          {"transition", mdp.transition},
                          {"reward", mdp.reward_mean},
                          {"initial_dist", mdp.initial_dist}};
}

inline TabularMdp mdp_from_json(const nlohmann::json& j) {
    TabularMdp mdp;
    mdp.num_states = j.at("num_states").get<int>();
    mdp.num_actions = j.at("num_actions").get<int>();
    mdp.gamma = j.at("gamma").get<double>();
    j.at("transition").get_to(mdp.transition);
    j.at("reward").get_to(mdp.reward_mean);
    j.at("initial_dist").get_to(mdp.initial_dist);
    validate_mdp(mdp);
    return mdp;
}

}  // namespace tabrl
