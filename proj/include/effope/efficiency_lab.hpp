#pragma once

#include "effope/estimators.hpp"
#include "effope/mdp.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace effope {

/// h_R per sa(s, a), one entry per reward atom; each row must satisfy sum_k p_k h_k = 0.
using RewardDirection = std::vector<std::vector<double>>;

struct PerturbationPath {
    TabularMdp base;
    RewardDirection direction;
    Eigen::VectorXd state_tilt;  // optional h_S on init_dist; empty = none
    double epsilon = 0.0;
};

RewardDirection zero_direction(const TabularMdp& mdp);

/// h = (v - mean) / var on the atoms of (s, a): the tilted mean reward is E[R|s,a] + eps.
/// Throws ValidationError if the reward of (s, a) is deterministic.
RewardDirection unit_bonus_direction(const TabularMdp& mdp, int s, int a);

/// Throws ValidationError on shape mismatch or a row that is not mean-zero within 1e-12.
void validate_direction(const TabularMdp& mdp, const RewardDirection& h, const Eigen::VectorXd& state_tilt = {});

/// Largest |eps| keeping every tilted probability inside [0, 1]; infinity for h = 0.
double epsilon_max(const TabularMdp& mdp, const RewardDirection& h, const Eigen::VectorXd& state_tilt = {});

/// d/d eps of E_eps[R | s, a] = sum_k p_k h_k v_k.
Eigen::MatrixXd reward_slope(const TabularMdp& mdp, const RewardDirection& h);

/// Reward atoms rescaled by (1 + eps h); init rescaled by (1 + eps h_S) when given.
TabularMdp perturb(const PerturbationPath& path);
TabularMdp perturb(const TabularMdp& base, const RewardDirection& h, double eps,
                   const Eigen::VectorXd& state_tilt = {});

/// eta*(P_eps) = eta(pi*(P_eps); P_eps).
double optimal_value(const TabularMdp& mdp);

struct KinkPoint {
    double epsilon = 0.0;
    double eta_star = 0.0;
    double quotient = 0.0;  // (eta*(eps) - eta*(0)) / eps
};

inline constexpr double kKinkThreshold = 1e-5;

struct KinkReport {
    double eta_star0 = 0.0;
    std::vector<KinkPoint> points;   // grid order
    double right_limit = 0.0;        // quotient at the smallest positive eps
    double left_limit = 0.0;         // quotient at the negative eps closest to 0
    double gap = 0.0;                // |right - left|
    double predicted_right = 0.0;    // max over optimal policies of the directional derivative
    double predicted_left = 0.0;     // min over optimal policies
    double predicted_gap = 0.0;
    double threshold = kKinkThreshold;
    bool kink = false;
};

/// One-sided difference quotients of eps -> eta*(P_eps) on a grid symmetric about 0.
KinkReport kink_probe(const TabularMdp& base, const RewardDirection& h, const std::vector<double>& eps_grid,
                      const Eigen::VectorXd& state_tilt = {}, double threshold = kKinkThreshold);

/// Directional derivatives of eta* from the MDP restricted to actions optimal at the base model:
/// first = right derivative (max), second = left derivative (min).
std::pair<double, double> predicted_one_sided_derivatives(const TabularMdp& base, const RewardDirection& h,
                                                          const Eigen::VectorXd& state_tilt = {});

std::string kink_csv(const KinkReport& r);

struct DecompositionTerms {
    double epsilon = 0.0;
    double delta1 = 0.0;
    double delta2 = 0.0;
    double delta3 = 0.0;
    double fixed_policy = 0.0;  // Psi(P_eps; pi) - Psi(P_0; pi)
    double total = 0.0;         // eta*(P_eps) - eta*(P_0)
    double remainder = 0.0;     // total - (delta1 + delta2 + delta3 + fixed_policy)
    bool policy_changed = false;

    [[nodiscard]] double ratio1() const { return epsilon == 0.0 ? 0.0 : delta1 / epsilon; }
    [[nodiscard]] double ratio2() const { return epsilon == 0.0 ? 0.0 : delta2 / epsilon; }
    [[nodiscard]] double ratio3() const { return epsilon == 0.0 ? 0.0 : delta3 / epsilon; }
};

/// The three Delta terms at pi = pi*(P_0), with E_P[g] = sum_s f0(s) sum_a g(a, s).
DecompositionTerms decomposition_diagnostic(const TabularMdp& base, const RewardDirection& h, double eps,
                                            const Eigen::VectorXd& state_tilt = {});

enum class TargetMode { estimated, oracle };

struct EstimatorConfig {
    TargetMode target = TargetMode::estimated;
    std::string estimator = "dr";  // "dr" or "mis"
    double level = kDefaultLevel;
    int burn_in = kDefaultBurnIn;
    bool require_unique = true;          // refuse models with tied optimal actions
    int jobs = 1;
};

struct McReport {
    int replications = 0;
    std::size_t n = 0;                    // N * T
    std::vector<double> estimates;
    std::vector<double> std_errs;
    std::vector<bool> covered;
    double eta_star = 0.0;
    double mean_estimate = 0.0;
    double bias = 0.0;
    double empirical_var_scaled = 0.0;    // n * sample variance of the estimates
    double sigma2_eff = 0.0;
    double var_ratio = 0.0;
    double var_se = 0.0;                  // empirical_var_scaled * sqrt(2 / (M - 1))
    double coverage = 0.0;
    double policy_match_rate = 0.0;       // fraction of replications whose target equals pi*
};

/**
 * M datasets from `mdp` (initial law replaced by the behavior stationary law), one estimate each.
 * Replication r uses derive_seed(seed, r), so the report does not depend on cfg.jobs.
 */
McReport mc_experiment(const TabularMdp& mdp, const PolicyTable& behavior, const EstimatorConfig& cfg, int n_episodes,
                       int horizon, int replications, std::uint64_t seed);

std::string mc_summary_csv(const std::string& label, const McReport& r);
std::string mc_replications_csv(const McReport& r);

} // namespace effope
