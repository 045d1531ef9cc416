#pragma once

#include "effope/mdp.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace effope {

/// States {0, 1}; action 0 stays, action 1 switches; r = 1{s = 0}; gamma = 0.5; uniform init.
TabularMdp chain2();

/// chain2 with both actions set to "stay"; state 0 pays 0 or 2 with equal odds.
TabularMdp tied_chain2();

/// chain2 dynamics and mean rewards with two-atom reward noise (unique optimum, perturbable).
TabularMdp chain2_noisy();

struct RandomMdpSpec {
    int n_states = 4;
    int n_actions = 2;
    double discount = 0.7;
    int reward_atoms = 2;
};

/// Dirichlet(1) transition rows (full support, hence ergodic under every policy) and
/// reward atoms in [0, 1]. Initial law uniform.
TabularMdp random_mdp(const RandomMdpSpec& spec, std::uint64_t seed);

/// Smallest Q* gap between the best and second-best action, over states.
double optimal_margin(const TabularMdp& mdp);

/// First draw from random_mdp over derived seeds whose optimal margin is at least `margin`.
TabularMdp random_unique_mdp(const RandomMdpSpec& spec, std::uint64_t seed, double margin);

/// random_mdp with, at every state, the lowest-index suboptimal action overwritten by a copy of the
/// optimal one, so every state has two optimal actions.
TabularMdp random_tied_mdp(const RandomMdpSpec& spec, std::uint64_t seed);

/// Pinned 6-state, 3-action unique-optimum benchmark.
TabularMdp random6();

/// "chain2", "tied-chain2", "chain2-noisy", "random6".
TabularMdp builtin_mdp(const std::string& name);
std::vector<std::string> builtin_names();

} // namespace effope
