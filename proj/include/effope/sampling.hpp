#pragma once

#include "effope/mdp.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace effope {

struct TransitionSample {
    int episode = 0;
    int t = 0;
    int s = 0;
    int a = 0;
    double r = 0.0;
    int s_next = 0;

    friend bool operator==(const TransitionSample&, const TransitionSample&) = default;
};

struct OfflineDataset {
    std::vector<TransitionSample> samples;  // episode-major, time-minor
    int n_episodes = 0;
    int horizon = 0;
    int n_states = 0;
    int n_actions = 0;
    std::string behavior_id;
    std::uint64_t seed = 0;

    [[nodiscard]] std::size_t size() const { return samples.size(); }
};

inline constexpr int kDefaultBurnIn = 1000;

/**
 * N episodes of length T under `behavior`. Each episode starts from init_dist,
 * runs `burn_in` unrecorded steps and then records T transitions. Episode e
 * draws from its own substream of `seed`, so the output does not depend on `jobs`.
 *
 * Throws NonErgodicError if the behavior chain has more than one recurrent class.
 */
OfflineDataset simulate(const TabularMdp& mdp, const PolicyTable& behavior, int n_episodes, int horizon,
                        int burn_in, std::uint64_t seed, int jobs = 1, std::string behavior_id = "behavior");

struct EmpiricalCounts {
    int n_states = 0;
    int n_actions = 0;
    Eigen::VectorXd n_s;
    Eigen::MatrixXd n_sa;              // n_states x n_actions
    Eigen::MatrixXd n_sas;             // (n_states * n_actions) x n_states
    Eigen::MatrixXd reward_sum;        // n_states x n_actions
    std::vector<std::map<double, long>> reward_values;  // per sa(s, a): observed value -> count
    long total = 0;
};

EmpiricalCounts empirical_counts(const OfflineDataset& ds);

/// n(s) / n; throws CoverageError on an empty dataset.
Eigen::VectorXd empirical_state_marginal(const OfflineDataset& ds);

/// CSV with header episode,t,s,a,r,s_next.
std::string dataset_csv(const OfflineDataset& ds);

/// Parse dataset CSV. Non-positive n_states / n_actions are inferred as max index + 1.
OfflineDataset dataset_from_csv(const std::string& text, int n_states = 0, int n_actions = 0);

} // namespace effope

namespace effope {

/// Worst-case total variation, over point-mass starts, between the law after `steps`
/// behavior steps and the stationary law: the residual non-stationarity a burn-in leaves.
double burn_in_distance(const TabularMdp& mdp, const PolicyTable& behavior, int steps);

} // namespace effope
