#pragma once

// Offline datasets: behavior distributions over state-action pairs, i.i.d.
// and trajectory sampling, empirical models, and the dataset diagnostics
// (concentrability and the coverage constant).

#include <tabrl/mdp.hpp>
#include <tabrl/rng.hpp>
#include <tabrl/util.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace tabrl {

// A behavior distribution is a joint table mu(s,a) summing to 1.
using BehaviorDistribution = SaTable;

inline void validate_behavior(const BehaviorDistribution& mu, int num_states, int num_actions) {
    detail::require(static_cast<int>(mu.size()) == num_states,
                    "behavior: wrong number of states");
    double total = 0.0;
    for (const auto& row : mu) {
        detail::require(static_cast<int>(row.size()) == num_actions,
                        "behavior: wrong number of actions");
        for (double p : row) {
            detail::require(p >= 0.0, "behavior: negative mass");
            total += p;
        }
    }
    detail::require(std::abs(total - 1.0) <= detail::kRowSumTol, "behavior: mass must sum to 1");
}

struct Transition {
    int s = 0;
    int a = 0;
    double r = 0.0;
    int s_prime = 0;
};

struct TrajectoryRange {
    int begin = 0;  // first transition index
    int end = 0;    // one past the last
    double total_reward = 0.0;
};

enum class DatasetMode { kIid, kTrajectory };

struct OfflineDataset {
    DatasetMode mode = DatasetMode::kIid;
    std::vector<Transition> transitions;
    std::vector<TrajectoryRange> trajectories;  // trajectory mode only
    std::uint64_t seed = 0;
};

inline void validate_dataset(const OfflineDataset& data, int num_states, int num_actions) {
    for (const auto& t : data.transitions) {
        detail::require(t.s >= 0 && t.s < num_states && t.s_prime >= 0 && t.s_prime < num_states,
                        "dataset: state index out of range");
        detail::require(t.a >= 0 && t.a < num_actions, "dataset: action index out of range");
        detail::require(t.r >= 0.0 && t.r <= 1.0, "dataset: reward outside [0,1]");
    }
    if (data.mode == DatasetMode::kTrajectory) {
        int cursor = 0;
        for (const auto& traj : data.trajectories) {
            detail::require(traj.begin == cursor && traj.end >= traj.begin &&
                                traj.end <= static_cast<int>(data.transitions.size()),
                            "dataset: trajectory ranges must tile the transitions");
            for (int i = traj.begin + 1; i < traj.end; ++i)
                detail::require(data.transitions[i].s == data.transitions[i - 1].s_prime,
                                "dataset: trajectory does not chain");
            cursor = traj.end;
        }
        detail::require(cursor == static_cast<int>(data.transitions.size()),
                        "dataset: trajectory ranges must tile the transitions");
    }
}

// ---- behavior construction -----------------------------------------------------

inline BehaviorDistribution behavior_from_policy(const TabularMdp& mdp,
                                                 const TabularPolicy& policy,
                                                 const std::vector<double>& init,
                                                 double tol = 1e-10) {
    return occupancy_measure(mdp, policy, init, tol);
}

inline BehaviorDistribution mix_behaviors(const BehaviorDistribution& a,
                                          const BehaviorDistribution& b, double alpha) {
    detail::require(alpha >= 0.0 && alpha <= 1.0, "mix_behaviors: alpha must be in [0,1]");
    detail::require(a.size() == b.size(), "mix_behaviors: shape mismatch");
    BehaviorDistribution out = a;
    for (std::size_t s = 0; s < a.size(); ++s) {
        detail::require(a[s].size() == b[s].size(), "mix_behaviors: shape mismatch");
        for (std::size_t i = 0; i < a[s].size(); ++i)
            out[s][i] = (1.0 - alpha) * a[s][i] + alpha * b[s][i];
    }
    return out;
}

// ---- sampling -------------------------------------------------------------------

namespace detail {

// Cumulative-sum sampler equivalent to Rng::categorical (same left-to-right
// partial sums, same single u01 draw per pick) but O(log n) per draw.
class FlatSampler {
  public:
    explicit FlatSampler(const std::vector<double>& probs) {
        cum_.resize(probs.size());
        double c = 0.0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            if (probs[i] > 0.0) {
                c += probs[i];
                last_positive_ = static_cast<int>(i);
            }
            cum_[i] = c;
        }
        require(last_positive_ >= 0, "sampler: no positive mass");
    }

    int draw(Rng& rng) const {
        const double u = rng.u01();
        const auto it = std::upper_bound(cum_.begin(), cum_.end(), u);
        if (it == cum_.end()) return last_positive_;
        return static_cast<int>(it - cum_.begin());
    }

  private:
    std::vector<double> cum_;
    int last_positive_ = -1;
};

// Zero-reward sink: every action self-loops with certainty at reward 0.
inline bool is_absorbing_state(const TabularMdp& mdp, int s) {
    for (int a = 0; a < mdp.num_actions; ++a)
        if (mdp.transition[s][a][s] != 1.0 || mdp.reward_mean[s][a] != 0.0) return false;
    return true;
}

}  // namespace detail

struct SampleOptions {
    bool stochastic_rewards = false;  // Bernoulli(r(s,a)) realized rewards
};

inline OfflineDataset sample_dataset(const TabularMdp& mdp, const BehaviorDistribution& mu,
                                     int n, std::uint64_t seed, SampleOptions opt = {}) {
    detail::require(n >= 1, "sample_dataset: n must be at least 1");
    validate_behavior(mu, mdp.num_states, mdp.num_actions);

    std::vector<double> flat(static_cast<std::size_t>(mdp.num_states) * mdp.num_actions);
    for (int s = 0; s < mdp.num_states; ++s)
        for (int a = 0; a < mdp.num_actions; ++a)
            flat[static_cast<std::size_t>(s) * mdp.num_actions + a] = mu[s][a];
    const detail::FlatSampler joint(flat);

    OfflineDataset data;
    data.mode = DatasetMode::kIid;
    data.seed = seed;
    data.transitions.reserve(n);
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        const int cell = joint.draw(rng);
        const int s = cell / mdp.num_actions;
        const int a = cell % mdp.num_actions;
        const double mean = mdp.reward_mean[s][a];
        const double r = opt.stochastic_rewards ? (rng.bernoulli(mean) ? 1.0 : 0.0) : mean;
        const int sp = rng.categorical(mdp.transition[s][a]);
        data.transitions.push_back({s, a, r, sp});
    }
    return data;
}

inline OfflineDataset sample_trajectories(const TabularMdp& mdp, const TabularPolicy& policy,
                                          const std::vector<double>& init, int num_episodes,
                                          int max_steps, std::uint64_t seed,
                                          SampleOptions opt = {}) {
    detail::require(num_episodes >= 1, "sample_trajectories: need at least one episode");
    detail::require(max_steps >= 1, "sample_trajectories: need at least one step");
    validate_policy(policy, mdp.num_states, mdp.num_actions);
    detail::require(static_cast<int>(init.size()) == mdp.num_states &&
                        detail::is_distribution(init),
                    "sample_trajectories: init must be a distribution over states");

    OfflineDataset data;
    data.mode = DatasetMode::kTrajectory;
    data.seed = seed;
    Rng rng(seed);
    for (int ep = 0; ep < num_episodes; ++ep) {
        TrajectoryRange traj;
        traj.begin = static_cast<int>(data.transitions.size());
        int s = rng.categorical(init);
        for (int step = 0; step < max_steps; ++step) {
            if (detail::is_absorbing_state(mdp, s)) break;
            const int a = rng.categorical(policy[s]);
            const double mean = mdp.reward_mean[s][a];
            const double r = opt.stochastic_rewards ? (rng.bernoulli(mean) ? 1.0 : 0.0) : mean;
            const int sp = rng.categorical(mdp.transition[s][a]);
            data.transitions.push_back({s, a, r, sp});
            traj.total_reward += r;
            s = sp;
        }
        traj.end = static_cast<int>(data.transitions.size());
        data.trajectories.push_back(traj);
    }
    return data;
}

// ---- empirical model -------------------------------------------------------------

struct EmpiricalModel {
    int num_states = 0;
    int num_actions = 0;
    long long total = 0;
    std::vector<std::vector<long long>> counts;       // n(s,a)
    SaTable r_hat;                                    // sample-mean rewards
    SaTable mu_hat;                                   // n(s,a)/N
    std::vector<std::vector<std::vector<double>>> p_hat;  // estimated dynamics
};

// Unvisited cells get r_hat 0 and a uniform transition row; the pessimistic
// bonus at n=0 dominates anything these placeholders could contribute.
inline EmpiricalModel build_empirical_model(const OfflineDataset& data, int num_states,
                                            int num_actions) {
    EmpiricalModel m;
    m.num_states = num_states;
    m.num_actions = num_actions;
    m.total = static_cast<long long>(data.transitions.size());
    m.counts.assign(num_states, std::vector<long long>(num_actions, 0));
    m.r_hat.assign(num_states, std::vector<double>(num_actions, 0.0));
    m.mu_hat.assign(num_states, std::vector<double>(num_actions, 0.0));
    m.p_hat.assign(num_states, std::vector<std::vector<double>>(
                                   num_actions, std::vector<double>(num_states, 0.0)));

    for (const auto& t : data.transitions) {
        detail::require(t.s >= 0 && t.s < num_states && t.s_prime >= 0 && t.s_prime < num_states,
                        "build_empirical_model: state index out of range");
        detail::require(t.a >= 0 && t.a < num_actions,
                        "build_empirical_model: action index out of range");
        ++m.counts[t.s][t.a];
        m.r_hat[t.s][t.a] += t.r;
        m.p_hat[t.s][t.a][t.s_prime] += 1.0;
    }
    for (int s = 0; s < num_states; ++s)
        for (int a = 0; a < num_actions; ++a) {
            const long long n = m.counts[s][a];
            if (n > 0) {
                m.r_hat[s][a] /= static_cast<double>(n);
                for (double& p : m.p_hat[s][a]) p /= static_cast<double>(n);
            } else {
                m.p_hat[s][a].assign(num_states, 1.0 / num_states);
            }
            if (m.total > 0)
                m.mu_hat[s][a] = static_cast<double>(n) / static_cast<double>(m.total);
        }
    return m;
}

// The empirical MDP: estimated dynamics and rewards with a chosen discount and
// start distribution. Exact planning on this object defines J-hat.
inline TabularMdp to_tabular_mdp(const EmpiricalModel& model, double gamma,
                                 const std::vector<double>& initial_dist) {
    TabularMdp m;
    m.num_states = model.num_states;
    m.num_actions = model.num_actions;
    m.gamma = gamma;
    m.transition = model.p_hat;
    m.reward_mean = model.r_hat;
    m.initial_dist = initial_dist;
    validate_mdp(m);
    return m;
}

// ---- diagnostics ------------------------------------------------------------------

// C*: the largest ratio d*(s,a)/mu(s,a) over cells the target policy visits.
inline double concentrability(const SaTable& d_star, const BehaviorDistribution& mu) {
    detail::require(d_star.size() == mu.size(), "concentrability: shape mismatch");
    double worst = 0.0;
    for (std::size_t s = 0; s < d_star.size(); ++s) {
        detail::require(d_star[s].size() == mu[s].size(), "concentrability: shape mismatch");
        for (std::size_t a = 0; a < d_star[s].size(); ++a) {
            if (d_star[s][a] <= 0.0) continue;
            if (mu[s][a] <= 0.0) return std::numeric_limits<double>::infinity();
            worst = std::max(worst, d_star[s][a] / mu[s][a]);
        }
    }
    return worst;
}

// Largest b in (0,1) such that every cell with d*(s,a) >= b/h has mu(s,a) >= b.
// Both comparisons flip only at b in {mu(s,a)} union {h*d*(s,a)}, so the
// predicate is constant between consecutive candidates and the supremum is
// attained at one of them (capped just below 1).
inline double coverage_constant(const SaTable& d_star, const BehaviorDistribution& mu, double h) {
    detail::require(h > 0.0, "coverage_constant: h must be positive");
    detail::require(d_star.size() == mu.size(), "coverage_constant: shape mismatch");
    constexpr double kCap = 1.0 - 1e-9;

    std::vector<double> candidates;
    for (std::size_t s = 0; s < d_star.size(); ++s) {
        detail::require(d_star[s].size() == mu[s].size(), "coverage_constant: shape mismatch");
        for (std::size_t a = 0; a < d_star[s].size(); ++a) {
            if (mu[s][a] > 0.0) candidates.push_back(std::min(mu[s][a], kCap));
            if (d_star[s][a] > 0.0) candidates.push_back(std::min(h * d_star[s][a], kCap));
        }
    }
    const auto holds = [&](double b) {
        for (std::size_t s = 0; s < d_star.size(); ++s)
            for (std::size_t a = 0; a < d_star[s].size(); ++a)
                if (d_star[s][a] >= b / h && mu[s][a] < b) return false;
        return true;
    };
    double best = 0.0;
    for (double b : candidates)
        if (b > best && holds(b)) best = b;
    return best;
}

// ---- serialization ----------------------------------------------------------------

inline std::string dataset_to_csv(const OfflineDataset& data) {
    std::string out = "s,a,r,s_prime,traj_id\n";
    std::size_t traj = 0;
    for (std::size_t i = 0; i < data.transitions.size(); ++i) {
        const auto& t = data.transitions[i];
        int traj_id = -1;
        if (data.mode == DatasetMode::kTrajectory) {
            while (traj < data.trajectories.size() &&
                   static_cast<int>(i) >= data.trajectories[traj].end)
                ++traj;
            traj_id = static_cast<int>(traj);
        }
        out += std::to_string(t.s);
        out += ',';
        out += std::to_string(t.a);
        out += ',';
        out += format_double(t.r);
        out += ',';
        out += std::to_string(t.s_prime);
        out += ',';
        out += std::to_string(traj_id);
        out += '\n';
    }
    return out;
}

inline OfflineDataset dataset_from_csv(const std::string& csv) {
    OfflineDataset data;
    std::size_t pos = 0;
    bool first = true;
    int current_traj = -1;
    while (pos < csv.size()) {
        std::size_t eol = csv.find('\n', pos);
        if (eol == std::string::npos) eol = csv.size();
        const std::string_view line(csv.data() + pos, eol - pos);
        pos = eol + 1;
        if (line.empty()) continue;
        if (first) {
            detail::require(line == "s,a,r,s_prime,traj_id", "dataset csv: bad header");
            first = false;
            continue;
        }
        const auto fields = split(line, ',');
        detail::require(fields.size() == 5, "dataset csv: expected 5 fields");
        Transition t;
        t.s = parse_int(fields[0]);
        t.a = parse_int(fields[1]);
        t.r = parse_double(fields[2]);
        t.s_prime = parse_int(fields[3]);
        const int traj_id = parse_int(fields[4]);
        if (traj_id >= 0) {
            data.mode = DatasetMode::kTrajectory;
            detail::require(traj_id == current_traj || traj_id == current_traj + 1,
                            "dataset csv: trajectory ids must be consecutive runs");
            if (traj_id == current_traj + 1) {
                data.trajectories.push_back(
                    {static_cast<int>(data.transitions.size()),
                     static_cast<int>(data.transitions.size()), 0.0});
                current_traj = traj_id;
            }
            data.trajectories.back().end = static_cast<int>(data.transitions.size()) + 1;
            data.trajectories.back().total_reward += t.r;
        }
        data.transitions.push_back(t);
    }
    detail::require(!first, "dataset csv: empty input");
    return data;
}

inline nlohmann::json dataset_envelope_json(const OfflineDataset& data) {
    return nlohmann::json{
        {"mode", data.mode == DatasetMode::kIid ? "iid" : "trajectory"},
        {"seed", data.seed},
        {"generator", Rng::generator_id()},
        {"num_transitions", data.transitions.size()},
    };
}

}  // namespace tabrl
