#pragma once

// Gridworld construction and analysis: text-grid parsing, slip dynamics with
// absorbing goal/lava cells, expert policies, and the critical-state report
// (per-state action gaps, good sets, and worst-case critical occupancy).

#include <tabrl/mdp.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace tabrl {

// Actions, in index order. Stay never slips.
enum GridAction : int { kUp = 0, kDown = 1, kLeft = 2, kRight = 3, kStay = 4 };
constexpr int kGridActions = 5;

struct GridSpec {
    int width = 0;
    int height = 0;
    std::vector<std::string> rows;  // row 0 on top; chars S G L # .
    double slip_prob = 0.1;
    double gamma = 0.95;
    int start_row = -1;
    int start_col = -1;

    int state(int r, int c) const { return r * width + c; }
    char at(int r, int c) const { return rows[r][c]; }
    int num_states() const { return width * height; }
    bool in_bounds(int r, int c) const { return r >= 0 && r < height && c >= 0 && c < width; }
    bool is_open(int r, int c) const { return at(r, c) == '.' || at(r, c) == 'S'; }
    // Goal, lava, and wall cells freeze the process at zero reward.
    bool is_absorbing(int r, int c) const {
        const char ch = at(r, c);
        return ch == 'G' || ch == 'L' || ch == '#';
    }
};

inline GridSpec parse_grid(const std::string& text, double slip_prob = 0.1,
                           double gamma = 0.95) {
    GridSpec spec;
    spec.slip_prob = slip_prob;
    spec.gamma = gamma;

    std::vector<std::string> rows;
    std::string line;
    for (char ch : text) {
        if (ch == '\n') {
            if (!line.empty()) rows.push_back(line);
            line.clear();
        } else if (ch != '\r') {
            line.push_back(ch);
        }
    }
    if (!line.empty()) rows.push_back(line);

    detail::require(!rows.empty(), "grid: no rows");
    spec.height = static_cast<int>(rows.size());
    spec.width = static_cast<int>(rows[0].size());
    detail::require(spec.width > 0, "grid: empty row");

    int starts = 0, goals = 0;
    for (int r = 0; r < spec.height; ++r) {
        detail::require(static_cast<int>(rows[r].size()) == spec.width,
                        "grid: ragged rows are not allowed");
        for (int c = 0; c < spec.width; ++c) {
            const char ch = rows[r][c];
            detail::require(ch == '.' || ch == '#' || ch == 'S' || ch == 'G' || ch == 'L',
                            std::string("grid: unknown cell character '") + ch + "'");
            if (ch == 'S') {
                ++starts;
                spec.start_row = r;
                spec.start_col = c;
            }
            if (ch == 'G') ++goals;
        }
    }
    detail::require(starts == 1, "grid: exactly one start cell required");
    detail::require(goals >= 1, "grid: at least one goal cell required");
    detail::require(slip_prob >= 0.0 && slip_prob < 1.0, "grid: slip_prob must be in [0,1)");
    spec.rows = std::move(rows);
    return spec;
}

struct Gridworld {
    GridSpec spec;
    TabularMdp mdp;
};

// Movement model: a commanded direction succeeds with probability
// 1 - slip_prob; the remaining mass splits evenly over the other three
// directions. Stay is exact. Moves into walls or out of bounds keep the agent
// in place. Entering a goal pays reward 1 on that transition (so r(s,a) is
// the entry probability); goal and lava then absorb at zero reward.
inline Gridworld build_gridworld(const GridSpec& spec) {
    constexpr int dr[4] = {-1, 1, 0, 0};
    constexpr int dc[4] = {0, 0, -1, 1};

    TabularMdp m;
    m.num_states = spec.num_states();
    m.num_actions = kGridActions;
    m.gamma = spec.gamma;
    m.transition.assign(m.num_states,
                        std::vector<std::vector<double>>(kGridActions,
                                                         std::vector<double>(m.num_states, 0.0)));
    m.reward_mean.assign(m.num_states, std::vector<double>(kGridActions, 0.0));
    m.initial_dist.assign(m.num_states, 0.0);
    m.initial_dist[spec.state(spec.start_row, spec.start_col)] = 1.0;

    for (int r = 0; r < spec.height; ++r) {
        for (int c = 0; c < spec.width; ++c) {
            const int s = spec.state(r, c);
            if (spec.is_absorbing(r, c)) {
                for (int a = 0; a < kGridActions; ++a) m.transition[s][a][s] = 1.0;
                continue;
            }
            for (int a = 0; a < 4; ++a) {
                for (int dir = 0; dir < 4; ++dir) {
                    const double p = dir == a ? 1.0 - spec.slip_prob : spec.slip_prob / 3.0;
                    if (p == 0.0) continue;
                    int tr = r + dr[dir], tc = c + dc[dir];
                    if (!spec.in_bounds(tr, tc) || spec.at(tr, tc) == '#') {
                        tr = r;
                        tc = c;
                    }
                    m.transition[s][a][spec.state(tr, tc)] += p;
                    if (spec.at(tr, tc) == 'G') m.reward_mean[s][a] += p;
                }
            }
            m.transition[s][kStay][s] = 1.0;
        }
    }
    validate_mdp(m);
    return {spec, m};
}

// ---- named layouts ----------------------------------------------------------

struct NamedLayout {
    std::string name;
    std::string text;
    double slip_prob;
    double gamma;
    double default_epsilon;  // criticality threshold giving the layout's shape
};

// The three diagnostic 10x10 layouts. Doorway cells are flanked by lava, so a
// slip while passing costs the episode; open-field detours merely lose time.
// default_epsilon values sit inside the window [V*(approach), V*(last door))
// measured by exact value iteration (see the layout tests).
inline const std::vector<NamedLayout>& named_layouts() {
    static const std::vector<NamedLayout> layouts = {
        {"single-critical",
         "########G#\n"
         ".......L.L\n"
         "..........\n"
         "..........\n"
         "..........\n"
         "..........\n"
         "..........\n"
         "..........\n"
         "..........\n"
         "S.........\n",
         0.1, 0.95, 0.90},
        {"multiple-critical",
         "#####G####\n"
         "####L.L###\n"
         "####L.L###\n"
         "####L.L###\n"
         "..........\n"
         "..........\n"
         "..........\n"
         "..........\n"
         "..........\n"
         "S.........\n",
         0.1, 0.95, 0.695},
        {"cliffwalk",
         "..........\n"
         "..........\n"
         "..........\n"
         "..........\n"
         "..........\n"
         "..........\n"
         "..........\n"
         "..........\n"
         "..........\n"
         "SLLLLLLLLG\n",
         0.1, 0.95, 0.15},
    };
    return layouts;
}

inline const NamedLayout& find_named_layout(const std::string& name) {
    for (const auto& l : named_layouts())
        if (l.name == name) return l;
    throw std::invalid_argument("unknown layout '" + name + "'");
}

inline Gridworld build_gridworld(const std::string& layout_name) {
    const NamedLayout& l = find_named_layout(layout_name);
    return build_gridworld(parse_grid(l.text, l.slip_prob, l.gamma));
}

// Hazard-floor corridor family indexed by effective horizon h: a single safe
// row above a row of lava, gamma = 1 - 1/h, and the width grows with h so the
// goal sits 0.6 horizons away. The optimal return stays in a fixed band while
// the decision depth scales with h, and any stray "down" is unrecoverable,
// which is what makes per-state imitation errors costly.
inline GridSpec make_corridor_spec(double h, double slip_prob = 0.05) {
    detail::require(h > 1.0, "corridor: horizon must exceed 1");
    const int width = static_cast<int>(std::ceil(0.6 * h)) + 1;
    std::string top(width, '.');
    std::string bottom(width, 'L');
    top[0] = 'S';
    top[width - 1] = 'G';
    return parse_grid(top + "\n" + bottom + "\n", slip_prob, 1.0 - 1.0 / h);
}

// ---- policies over grids ----------------------------------------------------

// The expert is the exact optimal policy (greedy, lowest-index ties).
inline TabularPolicy derive_expert(const TabularMdp& mdp, double tol = 1e-10) {
    return solve_optimal(mdp, tol).second;
}

inline TabularPolicy epsilon_greedy(const TabularPolicy& policy, double eps) {
    detail::require(eps >= 0.0 && eps <= 1.0, "epsilon_greedy: eps must be in [0,1]");
    TabularPolicy out = policy;
    for (auto& row : out) {
        const double u = eps / static_cast<double>(row.size());
        for (double& p : row) p = (1.0 - eps) * p + u;
    }
    return out;
}

// Uniform distribution over non-absorbing cells (used as a shifted start).
inline std::vector<double> uniform_open_cells(const GridSpec& spec) {
    std::vector<double> init(spec.num_states(), 0.0);
    int count = 0;
    for (int r = 0; r < spec.height; ++r)
        for (int c = 0; c < spec.width; ++c)
            if (spec.is_open(r, c)) ++count;
    for (int r = 0; r < spec.height; ++r)
        for (int c = 0; c < spec.width; ++c)
            if (spec.is_open(r, c)) init[spec.state(r, c)] = 1.0 / count;
    return init;
}

// Slip-free greedy rollout from the start; stops at the first absorbing state,
// on a revisit, or after max_len steps. Returned states are all non-absorbing.
inline std::vector<int> nominal_path(const Gridworld& gw, const TabularPolicy& policy,
                                     int max_len = 10000) {
    constexpr int dr[4] = {-1, 1, 0, 0};
    constexpr int dc[4] = {0, 0, -1, 1};
    std::vector<int> path;
    std::set<int> seen;
    int r = gw.spec.start_row, c = gw.spec.start_col;
    for (int step = 0; step < max_len; ++step) {
        if (gw.spec.is_absorbing(r, c)) break;
        const int s = gw.spec.state(r, c);
        if (!seen.insert(s).second) break;
        path.push_back(s);
        int best_a = 0;
        for (int a = 1; a < kGridActions; ++a)
            if (policy[s][a] > policy[s][best_a]) best_a = a;
        if (best_a == kStay) break;
        int tr = r + dr[best_a], tc = c + dc[best_a];
        if (!gw.spec.in_bounds(tr, tc) || gw.spec.at(tr, tc) == '#') {
            tr = r;
            tc = c;
        }
        r = tr;
        c = tc;
    }
    return path;
}

// ---- critical-state analysis --------------------------------------------------

struct GapRule {
    int g_min = 1;           // critical states have at most this many good actions
    double delta_min = -1.0; // required off-good gap; negative means epsilon/H
};

struct CriticalReport {
    double epsilon = 0.0;
    double delta_min = 0.0;
    std::vector<std::vector<int>> good;  // G(s), always holds the argmax action
    std::vector<double> gap;             // min gap over actions outside G(s); 0 if none
    std::vector<double> gap_max;         // max gap over actions outside G(s); 0 if none
    std::vector<char> critical;          // per-state flag
    std::vector<int> critical_set;       // sorted state list
    double p_c = 0.0;                    // worst-case critical occupancy
};

// Worst-case discounted occupancy of a state subset: reward 1 inside the set,
// 0 elsewhere, maximized by optimal value iteration; the occupancy equals
// (1 - gamma) J* of that auxiliary problem.
inline double max_critical_occupancy(const TabularMdp& mdp, const std::vector<int>& critical_set,
                                     double tol = 1e-10) {
    if (critical_set.empty()) return 0.0;
    TabularMdp aux = mdp;
    for (auto& row : aux.reward_mean) row.assign(mdp.num_actions, 0.0);
    for (int s : critical_set) {
        detail::require(s >= 0 && s < mdp.num_states,
                        "max_critical_occupancy: state index out of range");
        aux.reward_mean[s].assign(mdp.num_actions, 1.0);
    }
    const auto [vb, pi] = solve_optimal(aux, tol);
    double j = 0.0;
    for (int s = 0; s < mdp.num_states; ++s) j += mdp.initial_dist[s] * vb.v[s];
    return (1.0 - mdp.gamma) * j;
}

// Classification per the gap rule: G(s) collects actions within epsilon/H of
// the best, Delta(s) is the smallest gap outside G(s), and a state is critical
// when G(s) is small and Delta(s) clears the threshold.
inline CriticalReport classify_critical_states(const TabularMdp& mdp, const ValueBundle& q_star,
                                               double epsilon, GapRule rule = {}) {
    detail::require(epsilon > 0.0, "classify_critical_states: epsilon must be positive");
    const int S = mdp.num_states, A = mdp.num_actions;
    const double tol_gap = epsilon / horizon(mdp);

    CriticalReport rep;
    rep.epsilon = epsilon;
    rep.delta_min = rule.delta_min < 0.0 ? tol_gap : rule.delta_min;
    rep.good.resize(S);
    rep.gap.assign(S, 0.0);
    rep.gap_max.assign(S, 0.0);
    rep.critical.assign(S, 0);

    for (int s = 0; s < S; ++s) {
        double min_off = std::numeric_limits<double>::infinity();
        double max_off = 0.0;
        for (int a = 0; a < A; ++a) {
            const double gap = q_star.v[s] - q_star.q[s][a];
            if (gap <= tol_gap) {
                rep.good[s].push_back(a);
            } else {
                min_off = std::min(min_off, gap);
                max_off = std::max(max_off, gap);
            }
        }
        const bool covered = static_cast<int>(rep.good[s].size()) == A;
        rep.gap[s] = covered ? 0.0 : min_off;
        rep.gap_max[s] = covered ? 0.0 : max_off;
        if (static_cast<int>(rep.good[s].size()) <= rule.g_min && !covered &&
            rep.gap[s] >= rep.delta_min) {
            rep.critical[s] = 1;
            rep.critical_set.push_back(s);
        }
    }
    rep.p_c = max_critical_occupancy(mdp, rep.critical_set);
    return rep;
}

// U = sum over (s,a) outside the support indicator of d^pi(s,a), scaled by the
// horizon: the policy's expected time outside the covered set.
inline double zeta_cover_deficit(const TabularMdp& mdp, const TabularPolicy& policy,
                                 const std::vector<std::vector<int>>& zeta) {
    detail::require(static_cast<int>(zeta.size()) == mdp.num_states,
                    "zeta_cover_deficit: zeta has wrong state count");
    const auto d = occupancy_measure(mdp, policy, mdp.initial_dist);
    double mass = 0.0;
    for (int s = 0; s < mdp.num_states; ++s) {
        detail::require(static_cast<int>(zeta[s].size()) == mdp.num_actions,
                        "zeta_cover_deficit: zeta has wrong action count");
        for (int a = 0; a < mdp.num_actions; ++a)
            if (!zeta[s][a]) mass += d[s][a];
    }
    return mass / (1.0 - mdp.gamma);
}

}  // namespace tabrl
