#pragma once

#include "effope/mdp.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace effope {

struct DivergenceProfile {
    Eigen::VectorXd tv;
    Eigen::VectorXd kl;    // KL(pi2 || pi1)
    Eigen::VectorXd chi2;  // chi^2(pi2 || pi1)
};

/// Per-state total variation, with pi1 as reference.
Eigen::VectorXd total_variation(const PolicyTable& pi1, const PolicyTable& pi2);

/// Throws ValidationError naming (s,a) when pi2 puts mass where pi1 has none.
DivergenceProfile divergence_profile(const PolicyTable& pi1, const PolicyTable& pi2);

/// Max over (s, a) of |pi2 - pi1|.
double policy_sup_distance(const PolicyTable& pi1, const PolicyTable& pi2);

inline constexpr double kBoundSlackTolerance = 1e-12;

/// Every comparison is stored as lhs <= rhs; holds iff lhs <= rhs + 1e-12.
struct BoundCheckReport {
    std::string lemma;
    double lhs = 0.0;
    double rhs = 0.0;
    bool holds = true;
    double slack = 0.0;  // rhs - lhs
    std::string inputs_digest;
};

BoundCheckReport make_report(std::string lemma, double lhs, double rhs, std::string digest = {});

/// Positivity bounds of the eps-soft class: lower eps/n_actions, upper 1 - eps + eps/n_actions.
struct SoftClass {
    double eps = 0.0;
    double lower = 0.0;
    double upper = 1.0;
};
SoftClass soft_class(double eps, int n_actions);

/// Throws ValidationError if pi leaves the class.
void require_in_class(const PolicyTable& pi, const SoftClass& cls, const std::string& name);

/// Bhattacharyya coefficient between `dist` and the uniform law on its support size.
double bhattacharyya_uniform(const Eigen::VectorXd& dist);

struct UpperBoundCheck {
    BoundCheckReport counting;  // sum_s |omega2 - omega1|
    BoundCheckReport weighted;  // sum_s f(s) |omega2 - omega1|
};

/// ||omega(pi2) - omega(pi1)||_1 <= 2 gamma / (1 - gamma) E_{omega(pi1)}[TV], both measure conventions.
/// Occupancy ratios are taken against mdp.init_dist, which must be strictly positive.
UpperBoundCheck check_occupancy_upper_bound(const TabularMdp& mdp, const PolicyTable& pi1,
                                            const PolicyTable& pi2);

struct LowerBoundCheck {
    Eigen::VectorXd bound;        // per-state lower-bound expression
    Eigen::VectorXd gap;          // |omega2(s) - omega1(s)|
    std::vector<bool> holds;
    BoundCheckReport worst;       // state with the smallest slack
    double best_constant = 0.0;   // min_s gap / bound over states with a positive bound
};

/// Pointwise chi^2 lower bound on |omega2(s) - omega1(s)| for eps-soft policies.
LowerBoundCheck check_occupancy_lower_bound(const TabularMdp& mdp, const PolicyTable& pi1,
                                            const PolicyTable& pi2, double eps);

struct SandwichCheck {
    double line1 = 0.0;  // TV-side lower expression
    double line2 = 0.0;  // occupancy-difference expression
    double line3 = 0.0;  // Q-difference upper expression
    std::vector<BoundCheckReport> comparisons;  // "line1<=line2", "line2<=line3", "line1<=line3"
};

/// The inequality chain linking E_{omega(pi1)}[TV] and ||Q(pi2) - Q(pi1)||_inf, line by line.
SandwichCheck check_policy_q_sandwich(const TabularMdp& mdp, const PolicyTable& pi1, const PolicyTable& pi2,
                                      double eps);

/// |[V(s0; pi2) - V(s0; pi1)] - (1 - gamma)^-1 E_{d(s0; pi2)} E_{pi2} A(.; pi1)|.
double verify_performance_difference(const TabularMdp& mdp, const PolicyTable& pi1, const PolicyTable& pi2,
                                     int s0);

struct DecompositionSides {
    double lhs = 0.0;         // E_{omega(pi2), pi2} delta_f
    double first = 0.0;       // <omega1, delta_f(pi2)> + <omega2 - omega1, delta_f(pi2)>
    double second = 0.0;      // importance-weighted form under pi1 + the same correction
    double telescoped = 0.0;  // (1 - gamma) (eta(pi2) - E_f0 f)
};

DecompositionSides policy_decomposition_sides(const TabularMdp& mdp, const PolicyTable& pi1,
                                              const PolicyTable& pi2, const Eigen::VectorXd& f);

/// Max absolute residual over both equalities (and the telescoped value of the left side).
double verify_policy_decomposition(const TabularMdp& mdp, const PolicyTable& pi1, const PolicyTable& pi2,
                                   const Eigen::VectorXd& f);

struct FuzzConfig {
    int instances = 1000;
    int max_states = 8;
    int max_actions = 4;
    std::uint64_t seed = 1;
    int jobs = 1;
};

struct FuzzRow {
    std::uint64_t seed = 0;
    std::string lemma;
    double lhs = 0.0;
    double rhs = 0.0;
    double slack = 0.0;
    bool holds = true;
};

/// Random ergodic instance with an eps-soft policy pair, fully determined by `seed`.
struct FuzzInstance {
    TabularMdp mdp;
    PolicyTable pi1;
    PolicyTable pi2;
    double eps = 0.0;
    Eigen::VectorXd f;
};
FuzzInstance fuzz_instance(std::uint64_t seed, int max_states, int max_actions);

/// All lemma checks on every instance; rows are ordered by instance, then by check.
std::vector<FuzzRow> fuzz_lemmas(const FuzzConfig& cfg);

std::string fuzz_csv(const std::vector<FuzzRow>& rows);

} // namespace effope
