#pragma once

// Random small MDP instances for statistical audits and property tests.

#include <tabrl/mdp.hpp>
#include <tabrl/rng.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

namespace tabrl {

struct RandomMdpOptions {
    int num_states = 4;
    int num_actions = 3;
    double gamma = 0.8;
    double reward_density = 0.5;  // chance a given (s,a) carries reward
    int max_row_support = 0;      // 0 = full support transition rows
};

namespace detail {

// Dirichlet(1) row over a chosen support via normalized exponentials.
inline std::vector<double> random_distribution(Rng& rng, int n, int support) {
    std::vector<double> row(n, 0.0);
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(i + 1)]);
    double total = 0.0;
    for (int i = 0; i < support; ++i) {
        const double w = -std::log(1.0 - rng.u01());
        row[order[i]] = w;
        total += w;
    }
    for (double& v : row) v /= total;
    return row;
}

}  // namespace detail

inline TabularMdp make_random_mdp(Rng& rng, const RandomMdpOptions& opt) {
    TabularMdp m;
    m.num_states = opt.num_states;
    m.num_actions = opt.num_actions;
    m.gamma = opt.gamma;
    const int support = opt.max_row_support > 0
                            ? std::min(opt.max_row_support, opt.num_states)
                            : opt.num_states;
    m.transition.resize(opt.num_states);
    m.reward_mean.assign(opt.num_states, std::vector<double>(opt.num_actions, 0.0));
    for (int s = 0; s < opt.num_states; ++s) {
        m.transition[s].resize(opt.num_actions);
        for (int a = 0; a < opt.num_actions; ++a) {
            const int row_support = 1 + rng.uniform_int(support);
            m.transition[s][a] = detail::random_distribution(rng, opt.num_states, row_support);
            if (rng.bernoulli(opt.reward_density)) m.reward_mean[s][a] = rng.u01();
        }
    }
    m.initial_dist = detail::random_distribution(rng, opt.num_states, opt.num_states);
    validate_mdp(m);
    return m;
}

// Rescales rewards so the best achievable return from every state stays at or
// below target; returns the applied scale (1 when already within the bound).
inline double enforce_bounded_return(TabularMdp& mdp, double target = 1.0) {
    const auto rep = check_bounded_return(mdp);
    if (rep.max_return <= target) return 1.0;
    const double scale = target / rep.max_return * (1.0 - 1e-12);
    for (auto& row : mdp.reward_mean)
        for (double& r : row) r *= scale;
    return scale;
}

}  // namespace tabrl
