#pragma once

#include "effope/mdp.hpp"

#include <Eigen/Dense>

#include <vector>

namespace effope {

/// Q table (n_states x n_actions) and V table of one (model, policy) pair.
struct ValuePair {
    Eigen::MatrixXd q;
    Eigen::VectorXd v;
};

/// Discounted occupancy of a policy as a ratio against `ref_dist`.
struct OccupancyVector {
    Eigen::VectorXd omega;
    Eigen::VectorXd ref_dist;
};

/// Normalized discounted state-visitation law from a given initial law.
struct DiscountedVisitation {
    Eigen::VectorXd d;
};

/// State-to-state kernel K(s, s') = sum_a P(s' | s, a) pi(a | s).
Eigen::MatrixXd policy_kernel(const TabularMdp& mdp, const PolicyTable& pi);

/// Unique stationary law of a row-stochastic kernel.
///
/// Throws NonErgodicError when the kernel has more than one closed
/// communicating class.
Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& kernel);

/// Number of closed communicating classes of the positive-entry graph.
int recurrent_class_count(const Eigen::MatrixXd& kernel);

/// E_pi[R | s] = sum_a pi(a|s) E[R | s, a].
Eigen::VectorXd policy_reward(const TabularMdp& mdp, const PolicyTable& pi);

/// Exact policy evaluation by a dense linear solve of (I - gamma K_pi) V = r_pi.
ValuePair solve_q(const TabularMdp& mdp, const PolicyTable& pi);

/// One application of the Bellman evaluation operator T^pi to a state-value table.
Eigen::VectorXd bellman_backup(const TabularMdp& mdp, const PolicyTable& pi, const Eigen::VectorXd& v);

/// max over (s, a) of |r + gamma P V_pi - Q|, with V_pi the policy average of `q`.
double bellman_residual(const TabularMdp& mdp, const PolicyTable& pi, const Eigen::MatrixXd& q);

/// sup-norm residual of the Bellman optimality equation.
double optimality_residual(const TabularMdp& mdp, const Eigen::MatrixXd& q);

DiscountedVisitation discounted_visitation(const TabularMdp& mdp, const PolicyTable& pi,
                                           const Eigen::VectorXd& init);

/// omega(s) = d(s) / ref(s) where d is the discounted visitation started at `ref`.
OccupancyVector occupancy_ratio(const TabularMdp& mdp, const PolicyTable& pi,
                                const Eigen::VectorXd& ref_dist);

struct PolicyValueRoutes {
    double q_route = 0.0;
    double omega_route = 0.0;
};

/// eta(pi) via sum_s f0(s) V(s) and via (1-gamma)^-1 E_f0[omega r_pi], with f0 = mdp.init_dist.
PolicyValueRoutes policy_value_routes(const TabularMdp& mdp, const PolicyTable& pi);

/// eta(pi); throws InternalConsistencyError if the two routes differ by more than 1e-9.
double policy_value(const TabularMdp& mdp, const PolicyTable& pi);

inline constexpr double kTieTolerance = 1e-9;
inline constexpr double kValueIterationTolerance = 1e-12;
inline constexpr int kValueIterationCap = 100000;

struct ValueIterationResult {
    Eigen::MatrixXd q;
    int iterations = 0;
    double last_change = 0.0;
};

/// Q-value iteration until the sup-norm change falls below `tol`.
ValueIterationResult value_iteration(const TabularMdp& mdp, double tol = kValueIterationTolerance,
                                     int max_iter = kValueIterationCap);

/// Greedy deterministic policy; among actions within `tie_tol` of the row max the lowest index wins.
PolicyTable greedy_policy(const Eigen::MatrixXd& q, double tie_tol = kTieTolerance);

/// States whose two best Q values lie within `tie_tol` of each other.
std::vector<int> tied_states(const Eigen::MatrixXd& q, double tie_tol = kTieTolerance);

struct OptimalPolicy {
    PolicyTable policy;
    ValuePair values;               // exact evaluation of `policy`
    std::vector<int> tied_states;   // witnesses of non-unique optimal actions
    int iterations = 0;

    [[nodiscard]] bool unique() const { return tied_states.empty(); }
};

/// Value iteration followed by exact policy-improvement polishing.
OptimalPolicy optimal_policy(const TabularMdp& mdp);

/// A(s, a) = Q(s, a) - V(s).
Eigen::MatrixXd advantage(const ValuePair& vp);

/// Copy of `mdp` whose initial law is the stationary law of `behavior`.
TabularMdp with_stationary_init(TabularMdp mdp, const PolicyTable& behavior);

/// Residual ||f0 K_b - f0||_1 of the model's initial law under `behavior`.
double stationarity_residual(const TabularMdp& mdp, const PolicyTable& behavior);

} // namespace effope
