#pragma once

#include "effope/mdp.hpp"

#include <Eigen/Dense>

#include <random>

namespace effope::testing {

// Test-side generators draw from std::mt19937_64 so oracles never share code with the library RNG.
inline Eigen::VectorXd random_simplex(std::mt19937_64& gen, int n, double floor = 0.0) {
    std::exponential_distribution<double> expo(1.0);
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) {
        x(i) = expo(gen);
    }
    x /= x.sum();
    x = (1.0 - floor * n) * x.array() + floor;
    return x / x.sum();
}

inline TabularMdp random_model(std::mt19937_64& gen, int ns, int na, double gamma, int atoms = 2) {
    TabularMdp mdp = make_mdp(ns, na, gamma);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int s = 0; s < ns; ++s) {
        for (int a = 0; a < na; ++a) {
            mdp.transition.row(mdp.sa(s, a)) = random_simplex(gen, ns).transpose();
            const Eigen::VectorXd p = random_simplex(gen, atoms, 0.1);
            RewardDist dist;
            for (int k = 0; k < atoms; ++k) {
                dist.push_back({unif(gen), p(k)});
            }
            mdp.reward_at(s, a) = dist;
        }
    }
    mdp.init_dist = random_simplex(gen, ns, 0.01);
    return mdp;
}

inline PolicyTable random_policy(std::mt19937_64& gen, int ns, int na, double floor = 0.0) {
    Eigen::MatrixXd p(ns, na);
    for (int s = 0; s < ns; ++s) {
        p.row(s) = random_simplex(gen, na, floor).transpose();
    }
    return PolicyTable::from_probs(p);
}

// Sum_{t < horizon} gamma^t (K^T)^t init, normalized by (1 - gamma): a brute-force visitation oracle.
inline Eigen::VectorXd truncated_visitation(const TabularMdp& mdp, const PolicyTable& pi, const Eigen::VectorXd& init,
                                            int horizon) {
    Eigen::MatrixXd kernel = Eigen::MatrixXd::Zero(mdp.n_states, mdp.n_states);
    for (int s = 0; s < mdp.n_states; ++s) {
        for (int a = 0; a < mdp.n_actions; ++a) {
            for (int n = 0; n < mdp.n_states; ++n) {
                kernel(s, n) += pi(s, a) * mdp.prob(s, a, n);
            }
        }
    }
    Eigen::VectorXd ft = init;
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(mdp.n_states);
    double w = 1.0;
    for (int t = 0; t < horizon; ++t) {
        acc += w * ft;
        ft = kernel.transpose() * ft;
        w *= mdp.discount;
    }
    return (1.0 - mdp.discount) * acc;
}

// Q by truncated backward recursion Q_{k+1} = r + gamma P (pi . Q_k), from Q_0 = 0.
inline Eigen::MatrixXd truncated_q(const TabularMdp& mdp, const PolicyTable& pi, int horizon) {
    const Eigen::MatrixXd r = mdp.mean_rewards();
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(mdp.n_states, mdp.n_actions);
    for (int k = 0; k < horizon; ++k) {
        Eigen::VectorXd v(mdp.n_states);
        for (int s = 0; s < mdp.n_states; ++s) {
            v(s) = 0.0;
            for (int a = 0; a < mdp.n_actions; ++a) {
                v(s) += pi(s, a) * q(s, a);
            }
        }
        Eigen::MatrixXd next(mdp.n_states, mdp.n_actions);
        for (int s = 0; s < mdp.n_states; ++s) {
            for (int a = 0; a < mdp.n_actions; ++a) {
                double acc = r(s, a);
                for (int n = 0; n < mdp.n_states; ++n) {
                    acc += mdp.discount * mdp.prob(s, a, n) * v(n);
                }
                next(s, a) = acc;
            }
        }
        q = next;
    }
    return q;
}

} // namespace effope::testing
