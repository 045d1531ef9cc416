#pragma once

#include "effope/mdp.hpp"
#include "effope/sampling.hpp"
#include "effope/solvers.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace effope {

struct BehaviorEstimate {
    PolicyTable policy;          // uniform rows on unvisited states, flagged in `covered`
    std::vector<bool> covered;
    Eigen::VectorXd state_counts;
};

/// b_hat(a|s) = n(s,a) / n(s) on visited states. No smoothing.
BehaviorEstimate estimate_behavior(const OfflineDataset& ds);

/// Maximum-likelihood transitions and empirical reward laws; init is the empirical state marginal.
/// Throws CoverageError naming every unvisited (s, a).
TabularMdp estimate_model(const OfflineDataset& ds, double gamma);

struct FqiResult {
    Eigen::MatrixXd q;
    PolicyTable policy;
    int iterations = 0;
};

/// Value iteration on an estimated model; greedy with lowest-index tie-break.
FqiResult fqi(const TabularMdp& model, double tol = kValueIterationTolerance, int max_iter = kValueIterationCap);

ValuePair fqe(const TabularMdp& model, const PolicyTable& target);

OccupancyVector estimate_omega(const TabularMdp& model, const PolicyTable& target, const Eigen::VectorXd& ref_dist);

struct NuisanceSet {
    Eigen::MatrixXd q_hat;
    Eigen::VectorXd v_hat;
    Eigen::VectorXd omega_hat;
    PolicyTable b_hat;
    std::vector<bool> b_covered;  // empty means every state is covered
    PolicyTable target;
};

/// Exact nuisances of `target`; omega is taken against mdp.init_dist.
NuisanceSet true_nuisances(const TabularMdp& mdp, const PolicyTable& behavior, const PolicyTable& target);

/// Plug-in nuisances. With `target` empty, the target is the FQI greedy policy of the estimated model.
NuisanceSet fit_nuisances(const OfflineDataset& ds, double gamma, const PolicyTable* target = nullptr);

/// (1-gamma)^-1 omega(S) pi(A|S)/b(A|S) [R + gamma V(S') - Q(A,S)] + V(S) - eta.
double eif_value(const TransitionSample& o, const NuisanceSet& nz, double gamma, double eta);

struct EstimateReport {
    std::string estimator;
    double eta_hat = 0.0;
    std::vector<double> if_values;
    double std_err = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::size_t n_eff = 0;
    double level = 0.95;
};

inline constexpr double kDefaultLevel = 0.95;

/// Two-sided normal quantile z with P(|Z| <= z) = level.
double normal_critical_value(double level);

/// Closed-form root of the sample estimating equation; Wald interval from sd(if_values)/sqrt(n).
EstimateReport dr_estimate(const OfflineDataset& ds, const NuisanceSet& nz, double gamma,
                           double level = kDefaultLevel);

/// (1-gamma)^-1 * mean of omega(S) pi(A|S)/b(A|S) R.
EstimateReport mis_estimate(const OfflineDataset& ds, const Eigen::VectorXd& omega_hat, const PolicyTable& target,
                            const PolicyTable& b_hat, double gamma, double level = kDefaultLevel);

/// Exact expectation over O = (S ~ f0, A ~ behavior, R, S') of the dr estimating function.
double dr_population(const TabularMdp& mdp, const PolicyTable& behavior, const NuisanceSet& nz);
double mis_population(const TabularMdp& mdp, const PolicyTable& behavior, const PolicyTable& target,
                      const Eigen::VectorXd& omega);

/// Exact mean of eif_value at the true nuisances and eta = eta(target).
double eif_population_mean(const TabularMdp& mdp, const PolicyTable& behavior, const PolicyTable& target);

/// Exact variance of the influence function by enumeration over (s, a, reward atom, s').
double eif_variance_exact(const TabularMdp& mdp, const PolicyTable& behavior, const PolicyTable& target);

/// estimator,eta_hat,std_err,ci_low,ci_high,n,seed
std::string estimate_csv_header();
std::string estimate_csv_row(const EstimateReport& r, std::uint64_t seed);

} // namespace effope
