#include <catch2/catch_amalgamated.hpp>
#include <tabrl/mdp.hpp>
#include <tabrl/random_mdp.hpp>
#include <tabrl/rng.hpp>

#include "support/oracles.hpp"

#include <cmath>
#include <vector>

using namespace tabrl;

namespace {

// Chain of `transient` states feeding an absorbing goal; the move entering the
// goal pays 1, the goal then self-loops at zero reward. Action 0 advances,
// action 1 stays.
TabularMdp make_chain(int transient, double gamma, double slip = 0.0) {
    const int S = transient + 1, A = 2, goal = transient;
    TabularMdp m;
    m.num_states = S;
    m.num_actions = A;
    m.gamma = gamma;
    m.transition.assign(S, std::vector<std::vector<double>>(A, std::vector<double>(S, 0.0)));
    m.reward_mean.assign(S, std::vector<double>(A, 0.0));
    m.initial_dist.assign(S, 0.0);
    m.initial_dist[0] = 1.0;
    for (int s = 0; s < transient; ++s) {
        m.transition[s][0][s + 1] = 1.0 - slip;
        m.transition[s][0][s] += slip;
        m.transition[s][1][s] = 1.0;
        if (s + 1 == goal) m.reward_mean[s][0] = 1.0 - slip;
    }
    m.transition[goal][0][goal] = 1.0;
    m.transition[goal][1][goal] = 1.0;
    validate_mdp(m);
    return m;
}

TabularPolicy forward_policy(const TabularMdp& m) {
    return policy_from_actions(std::vector<int>(m.num_states, 0), m.num_actions);
}

TabularPolicy random_policy(Rng& rng, int S, int A) {
    TabularPolicy p(S, std::vector<double>(A, 0.0));
    for (int s = 0; s < S; ++s) {
        double total = 0.0;
        for (int a = 0; a < A; ++a) {
            p[s][a] = -std::log(1.0 - rng.u01());
            total += p[s][a];
        }
        for (int a = 0; a < A; ++a) p[s][a] /= total;
    }
    return p;
}

}  // namespace

TEST_CASE("construction validation rejects malformed tables") {
    TabularMdp m = make_chain(2, 0.9);
    SECTION("transition row off by more than 1e-9") {
        m.transition[0][0][0] += 1e-6;
        CHECK_THROWS_AS(validate_mdp(m), std::invalid_argument);
    }
    SECTION("negative probability") {
        m.transition[0][0][0] = -0.1;
        m.transition[0][0][1] = 1.1;
        CHECK_THROWS_AS(validate_mdp(m), std::invalid_argument);
    }
    SECTION("gamma outside [0,1)") {
        m.gamma = 1.0;
        CHECK_THROWS_AS(validate_mdp(m), std::invalid_argument);
    }
    SECTION("reward outside [0,1]") {
        m.reward_mean[0][0] = 1.5;
        CHECK_THROWS_AS(validate_mdp(m), std::invalid_argument);
    }
    SECTION("initial distribution not normalized") {
        m.initial_dist[0] = 0.5;
        CHECK_THROWS_AS(validate_mdp(m), std::invalid_argument);
    }
}

TEST_CASE("evaluate_policy: zero discount returns the immediate reward") {
    Rng rng(31);
    TabularMdp m = make_random_mdp(rng, {.num_states = 4, .num_actions = 3, .gamma = 0.0});
    const double c = 0.37;
    for (auto& row : m.reward_mean) row.assign(m.num_actions, c);
    const auto vb = evaluate_policy(m, uniform_policy(4, 3));
    for (int s = 0; s < 4; ++s)
        for (int a = 0; a < 3; ++a) CHECK(vb.q[s][a] == Catch::Approx(c).margin(1e-12));
}

TEST_CASE("evaluate_policy: geometric series on a self-loop") {
    TabularMdp m;
    m.num_states = 1;
    m.num_actions = 1;
    m.gamma = 0.5;
    m.transition = {{{1.0}}};
    m.reward_mean = {{0.5}};
    m.initial_dist = {1.0};
    const auto vb = evaluate_policy(m, uniform_policy(1, 1));
    CHECK(vb.v[0] == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("evaluate_policy rejects non-stochastic policy rows") {
    TabularMdp m = make_chain(2, 0.9);
    TabularPolicy bad = uniform_policy(m.num_states, m.num_actions);
    bad[0] = {0.7, 0.7};
    CHECK_THROWS_AS(evaluate_policy(m, bad), std::invalid_argument);
}

TEST_CASE("evaluate_policy matches a million-step Monte-Carlo rollout") {
    // Deterministic 3-state chain: goal entered on the second transition.
    const TabularMdp m = make_chain(2, 0.9);
    const auto pi = forward_policy(m);
    const auto vb = evaluate_policy(m, pi);
    CHECK(vb.v[0] == Catch::Approx(0.9).margin(1e-9));

    const auto mc = oracle::mc_state_value(m, pi, 0, 500000, 50, 977);
    CHECK(std::abs(vb.v[0] - mc.mean) < 1e-3);
}

TEST_CASE("evaluate_policy matches Monte-Carlo on a slippery chain") {
    const TabularMdp m = make_chain(3, 0.9, 0.2);
    const auto pi = forward_policy(m);
    const auto vb = evaluate_policy(m, pi);
    const auto mc = oracle::mc_state_value(m, pi, 0, 200000, 400, 1234);
    CHECK(std::abs(vb.v[0] - mc.mean) < 2 * mc.se + 1e-9);
}

TEST_CASE("evaluate_policy agrees with a direct dense solve on random MDPs") {
    Rng rng(8);
    for (int trial = 0; trial < 25; ++trial) {
        const auto m = make_random_mdp(
            rng, {.num_states = 2 + rng.uniform_int(5), .num_actions = 1 + rng.uniform_int(3),
                  .gamma = 0.2 + 0.7 * rng.u01()});
        const auto pi = random_policy(rng, m.num_states, m.num_actions);
        const auto vb = evaluate_policy(m, pi);
        const auto direct = oracle::eval_policy_direct(m, pi);
        for (int s = 0; s < m.num_states; ++s)
            CHECK(vb.v[s] == Catch::Approx(direct[s]).margin(1e-8));
    }
}

TEST_CASE("returned Q is a fixed point up to the requested tolerance") {
    Rng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        const auto m = make_random_mdp(
            rng, {.num_states = 5, .num_actions = 3, .gamma = 0.9});
        const auto pi = random_policy(rng, 5, 3);
        const double tol = 1e-10;
        const auto vb = evaluate_policy(m, pi, tol);
        // One more Bellman application on top of the returned Q.
        std::vector<double> v_of_q(m.num_states, 0.0);
        for (int s = 0; s < m.num_states; ++s)
            for (int a = 0; a < m.num_actions; ++a) v_of_q[s] += pi[s][a] * vb.q[s][a];
        for (int s = 0; s < m.num_states; ++s)
            for (int a = 0; a < m.num_actions; ++a) {
                double next_q = m.reward_mean[s][a];
                for (int sp = 0; sp < m.num_states; ++sp)
                    next_q += m.gamma * m.transition[s][a][sp] * v_of_q[sp];
                CHECK(std::abs(next_q - vb.q[s][a]) <= tol + 1e-14);
            }
    }
}

TEST_CASE("solve_optimal: bandit argmax and lowest-index ties") {
    TabularMdp m;
    m.num_states = 1;
    m.num_actions = 2;
    m.gamma = 0.0;
    m.transition = {{{1.0}, {1.0}}};
    m.reward_mean = {{0.3, 0.7}};
    m.initial_dist = {1.0};
    const auto [vb, pi] = solve_optimal(m);
    CHECK(vb.v[0] == Catch::Approx(0.7).margin(1e-12));
    CHECK(pi[0][1] == 1.0);

    m.reward_mean = {{0.7, 0.7}};
    const auto [vb2, pi2] = solve_optimal(m);
    CHECK(pi2[0][0] == 1.0);  // tie resolves to the lower index
}

TEST_CASE("solve_optimal: two-step chain discounts the goal entry once") {
    const TabularMdp m = make_chain(2, 0.9);
    const auto [vb, pi] = solve_optimal(m);
    CHECK(vb.v[0] == Catch::Approx(0.9).margin(1e-9));
    CHECK(vb.v[1] == Catch::Approx(1.0).margin(1e-9));
    CHECK(pi[0][0] == 1.0);
    // V*(s) = max_a Q*(s,a) holds exactly on the returned bundle.
    for (int s = 0; s < m.num_states; ++s)
        CHECK(vb.v[s] == *std::max_element(vb.q[s].begin(), vb.q[s].end()));
}

TEST_CASE("solve_optimal agrees with policy iteration on random MDPs") {
    Rng rng(55);
    for (int trial = 0; trial < 20; ++trial) {
        const auto m = make_random_mdp(
            rng, {.num_states = 2 + rng.uniform_int(5), .num_actions = 1 + rng.uniform_int(4),
                  .gamma = 0.3 + 0.6 * rng.u01()});
        const auto [vb, pi] = solve_optimal(m);
        const auto [v_pi_iter, actions] = oracle::policy_iteration(m);
        for (int s = 0; s < m.num_states; ++s)
            CHECK(vb.v[s] == Catch::Approx(v_pi_iter[s]).margin(1e-7));
    }
}

TEST_CASE("optimal values dominate every sampled policy") {
    Rng rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        const auto m = make_random_mdp(
            rng, {.num_states = 2 + rng.uniform_int(5), .num_actions = 1 + rng.uniform_int(5),
                  .gamma = 0.5 + 0.4 * rng.u01()});
        const auto [vb, pi_star] = solve_optimal(m);
        for (int p = 0; p < 100; ++p) {
            const auto pi = random_policy(rng, m.num_states, m.num_actions);
            const auto vp = evaluate_policy(m, pi);
            for (int s = 0; s < m.num_states; ++s) CHECK(vb.v[s] >= vp.v[s] - 1e-6);
        }
    }
}

TEST_CASE("occupancy_measure: single cell and zero-discount cases") {
    TabularMdp m;
    m.num_states = 1;
    m.num_actions = 1;
    m.gamma = 0.7;
    m.transition = {{{1.0}}};
    m.reward_mean = {{0.0}};
    m.initial_dist = {1.0};
    const auto d = occupancy_measure(m, uniform_policy(1, 1), {1.0});
    CHECK(d[0][0] == Catch::Approx(1.0).margin(1e-12));

    Rng rng(3);
    auto m2 = make_random_mdp(rng, {.num_states = 3, .num_actions = 2, .gamma = 0.0});
    const auto pi = random_policy(rng, 3, 2);
    const std::vector<double> init = {0.2, 0.5, 0.3};
    const auto d2 = occupancy_measure(m2, pi, init);
    for (int s = 0; s < 3; ++s)
        for (int a = 0; a < 2; ++a)
            CHECK(d2[s][a] == Catch::Approx(init[s] * pi[s][a]).margin(1e-10));
}

TEST_CASE("occupancy_measure matches the truncated discounted series") {
    TabularMdp m = make_chain(2, 0.5, 0.1);
    const auto pi = forward_policy(m);
    const auto d = occupancy_measure(m, pi, m.initial_dist);
    const auto series = oracle::truncated_occupancy(m, pi, m.initial_dist, 60);
    for (int s = 0; s < m.num_states; ++s)
        for (int a = 0; a < m.num_actions; ++a)
            CHECK(d[s][a] == Catch::Approx(series[s][a]).margin(1e-8));
    double total = 0.0;
    for (const auto& row : d)
        for (double v : row) total += v;
    CHECK(total == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("expected_return: degenerate and averaged initial distributions") {
    TabularMdp m = make_chain(2, 0.9);
    const auto pi = forward_policy(m);
    CHECK(expected_return(m, pi) == Catch::Approx(0.9).margin(1e-9));

    // Two absorbing states engineered to have V = 0.2 and 0.8.
    TabularMdp two;
    two.num_states = 2;
    two.num_actions = 1;
    two.gamma = 0.5;
    two.transition = {{{1.0, 0.0}}, {{0.0, 1.0}}};
    two.reward_mean = {{0.1}, {0.4}};
    two.initial_dist = {0.5, 0.5};
    CHECK(expected_return(two, uniform_policy(2, 1)) == Catch::Approx(0.5).margin(1e-9));
}

TEST_CASE("suboptimality: optimal learner scores zero, uniform bandit scores the gap") {
    const TabularMdp m = make_chain(3, 0.85);
    const auto [vb, pi_star] = solve_optimal(m);
    CHECK(std::abs(suboptimality(m, pi_star)) < 1e-8);

    TabularMdp bandit;
    bandit.num_states = 1;
    bandit.num_actions = 2;
    bandit.gamma = 0.0;
    bandit.transition = {{{1.0}, {1.0}}};
    bandit.reward_mean = {{0.0, 1.0}};
    bandit.initial_dist = {1.0};
    CHECK(suboptimality(bandit, uniform_policy(1, 2)) == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("variance_of: closed forms, oracle agreement, permutation invariance") {
    CHECK(variance_of({0.5, 0.5}, {0.0, 1.0}) == Catch::Approx(0.25).margin(1e-15));
    CHECK(variance_of({0.3, 0.7}, {2.0, 2.0}) == Catch::Approx(0.0).margin(1e-15));
    CHECK_THROWS_AS(variance_of({1.0}, {0.0, 1.0}), std::invalid_argument);

    Rng rng(21);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> dist = tabrl::detail::random_distribution(rng, 5, 5);
        std::vector<double> vals(5);
        for (double& v : vals) v = rng.u01() * 4.0 - 2.0;
        const double lib = variance_of(dist, vals);
        CHECK(lib == Catch::Approx(oracle::direct_variance(dist, vals)).margin(1e-12));
        CHECK(lib >= 0.0);

        // Jointly permuting both vectors leaves the value unchanged.
        std::vector<double> pd(5), pv(5);
        const int perm[5] = {3, 0, 4, 1, 2};
        for (int i = 0; i < 5; ++i) {
            pd[perm[i]] = dist[i];
            pv[perm[i]] = vals[i];
        }
        CHECK(variance_of(pd, pv) == Catch::Approx(lib).margin(1e-15));
    }
}

TEST_CASE("check_bounded_return flags a self-loop annuity") {
    TabularMdp m;
    m.num_states = 1;
    m.num_actions = 1;
    m.gamma = 0.9;
    m.transition = {{{1.0}}};
    m.reward_mean = {{1.0}};
    m.initial_dist = {1.0};
    const auto rep = check_bounded_return(m);
    CHECK_FALSE(rep.ok);
    CHECK(rep.max_return == Catch::Approx(10.0).margin(1e-6));
    CHECK(rep.witness_state == 0);

    const auto chain_rep = check_bounded_return(make_chain(3, 0.9, 0.1));
    CHECK(chain_rep.ok);
}

TEST_CASE("enforce_bounded_return rescales offending instances") {
    Rng rng(77);
    for (int trial = 0; trial < 10; ++trial) {
        auto m = make_random_mdp(rng, {.num_states = 4, .num_actions = 3,
                                       .gamma = 0.5 + 0.4 * rng.u01(),
                                       .reward_density = 0.9});
        enforce_bounded_return(m);
        CHECK(check_bounded_return(m).ok);
    }
}

TEST_CASE("occupancy-return identity holds on random MDPs") {
    Rng rng(123);
    for (int trial = 0; trial < 20; ++trial) {
        const auto m = make_random_mdp(
            rng, {.num_states = 2 + rng.uniform_int(5), .num_actions = 1 + rng.uniform_int(4),
                  .gamma = 0.3 + 0.6 * rng.u01()});
        const auto pi = random_policy(rng, m.num_states, m.num_actions);
        const auto d = occupancy_measure(m, pi, m.initial_dist);
        double dr = 0.0;
        for (int s = 0; s < m.num_states; ++s)
            for (int a = 0; a < m.num_actions; ++a) dr += d[s][a] * m.reward_mean[s][a];
        CHECK(dr * horizon(m) == Catch::Approx(expected_return(m, pi)).margin(1e-6));
    }
}

TEST_CASE("performance-difference identity holds on random MDPs") {
    Rng rng(321);
    for (int trial = 0; trial < 20; ++trial) {
        const auto m = make_random_mdp(
            rng, {.num_states = 2 + rng.uniform_int(4), .num_actions = 2 + rng.uniform_int(3),
                  .gamma = 0.4 + 0.5 * rng.u01()});
        const auto [opt, pi_star] = solve_optimal(m);
        const auto learned = random_policy(rng, m.num_states, m.num_actions);

        const double gap = suboptimality(m, learned);
        const auto d_learned = occupancy_state_marginal(
            occupancy_measure(m, learned, m.initial_dist));
        double rhs = 0.0;
        for (int s = 0; s < m.num_states; ++s) {
            double q_under_star = 0.0, q_under_learned = 0.0;
            for (int a = 0; a < m.num_actions; ++a) {
                q_under_star += pi_star[s][a] * opt.q[s][a];
                q_under_learned += learned[s][a] * opt.q[s][a];
            }
            rhs += d_learned[s] * (q_under_star - q_under_learned);
        }
        CHECK(gap == Catch::Approx(horizon(m) * rhs).margin(1e-6));
    }
}

TEST_CASE("JSON round-trip reproduces every double bit-exactly") {
    Rng rng(2024);
    const auto m = make_random_mdp(rng, {.num_states = 5, .num_actions = 3, .gamma = 0.93});
    const std::string text = mdp_to_json(m).dump();
    const TabularMdp back = mdp_from_json(nlohmann::json::parse(text));
    CHECK(back.num_states == m.num_states);
    CHECK(back.num_actions == m.num_actions);
    CHECK(back.gamma == m.gamma);
    CHECK(back.initial_dist == m.initial_dist);
    CHECK(back.transition == m.transition);
    CHECK(back.reward_mean == m.reward_mean);
}
