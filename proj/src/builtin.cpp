#include "effope/builtin.hpp"

#include "effope/error.hpp"
#include "effope/rng.hpp"
#include "effope/solvers.hpp"

#include <algorithm>
#include <limits>

namespace effope {

TabularMdp chain2() {
    TabularMdp mdp = make_mdp(2, 2, 0.5);
    for (int s = 0; s < 2; ++s) {
        mdp.transition(mdp.sa(s, 0), s) = 1.0;
        mdp.transition(mdp.sa(s, 1), 1 - s) = 1.0;
        for (int a = 0; a < 2; ++a) {
            mdp.reward_at(s, a) = {{s == 0 ? 1.0 : 0.0, 1.0}};
        }
    }
    return mdp;
}

TabularMdp tied_chain2() {
    TabularMdp mdp = make_mdp(2, 2, 0.5);
    mdp.reward_bound = 2.0;
    for (int s = 0; s < 2; ++s) {
        for (int a = 0; a < 2; ++a) {
            mdp.transition(mdp.sa(s, a), s) = 1.0;
            if (s == 0) {
                mdp.reward_at(s, a) = {{0.0, 0.5}, {2.0, 0.5}};
            } else {
                mdp.reward_at(s, a) = {{0.0, 1.0}};
            }
        }
    }
    return mdp;
}

TabularMdp chain2_noisy() {
    TabularMdp mdp = chain2();
    mdp.reward_bound = 1.5;
    for (int a = 0; a < 2; ++a) {
        mdp.reward_at(0, a) = {{0.5, 0.5}, {1.5, 0.5}};
        mdp.reward_at(1, a) = {{-0.5, 0.5}, {0.5, 0.5}};
    }
    return mdp;
}

TabularMdp random_mdp(const RandomMdpSpec& spec, std::uint64_t seed) {
    if (spec.reward_atoms <= 0) {
        throw DimensionError("random_mdp: reward_atoms must be positive");
    }
    TabularMdp mdp = make_mdp(spec.n_states, spec.n_actions, spec.discount);
    RngStream rng(seed, 0);
    const int k = spec.reward_atoms;
    for (int s = 0; s < spec.n_states; ++s) {
        for (int a = 0; a < spec.n_actions; ++a) {
            mdp.transition.row(mdp.sa(s, a)) = dirichlet_uniform(rng, spec.n_states).transpose();
            Eigen::VectorXd probs = 0.5 * dirichlet_uniform(rng, k).array() + 0.5 / k;
            probs /= probs.sum();
            std::vector<double> values(static_cast<std::size_t>(k));
            for (auto& v : values) {
                v = rng.uniform();
            }
            std::sort(values.begin(), values.end());
            RewardDist dist;
            for (int i = 0; i < k; ++i) {
                dist.push_back({values[static_cast<std::size_t>(i)], probs(i)});
            }
            mdp.reward_at(s, a) = std::move(dist);
        }
    }
    return mdp;
}

double optimal_margin(const TabularMdp& mdp) {
    if (mdp.n_actions < 2) {
        return std::numeric_limits<double>::infinity();
    }
    const auto opt = optimal_policy(mdp);
    double margin = std::numeric_limits<double>::infinity();
    for (int s = 0; s < mdp.n_states; ++s) {
        Eigen::VectorXd row = opt.values.q.row(s).transpose();
        std::sort(row.data(), row.data() + row.size(), std::greater<>());
        margin = std::min(margin, row(0) - row(1));
    }
    return margin;
}

TabularMdp random_unique_mdp(const RandomMdpSpec& spec, std::uint64_t seed, double margin) {
    constexpr int kAttempts = 100000;
    for (int attempt = 0; attempt < kAttempts; ++attempt) {
        TabularMdp mdp = random_mdp(spec, derive_seed(seed, static_cast<std::uint64_t>(attempt)));
        if (optimal_margin(mdp) >= margin) {
            return mdp;
        }
    }
    throw ConvergenceError("random_unique_mdp: no draw reached margin " + std::to_string(margin) + " in " +
                           std::to_string(kAttempts) + " attempts");
}

TabularMdp random_tied_mdp(const RandomMdpSpec& spec, std::uint64_t seed) {
    if (spec.n_actions < 2) {
        throw DimensionError("random_tied_mdp: needs at least two actions");
    }
    TabularMdp mdp = random_mdp(spec, seed);
    const auto opt = optimal_policy(mdp);
    for (int s = 0; s < mdp.n_states; ++s) {
        const int best = opt.policy.action(s);
        const int copy = best == 0 ? 1 : 0;
        mdp.transition.row(mdp.sa(s, copy)) = mdp.transition.row(mdp.sa(s, best));
        mdp.reward_at(s, copy) = mdp.reward_at(s, best);
    }
    return mdp;
}

TabularMdp random6() {
    return random_unique_mdp({6, 3, 0.7, 2}, 6, 0.1);
}

TabularMdp builtin_mdp(const std::string& name) {
    if (name == "chain2") {
        return chain2();
    }
    if (name == "tied-chain2") {
        return tied_chain2();
    }
    if (name == "chain2-noisy") {
        return chain2_noisy();
    }
    if (name == "random6") {
        return random6();
    }
    throw ValidationError("unknown builtin model '" + name + "'");
}

std::vector<std::string> builtin_names() {
    return {"chain2", "tied-chain2", "chain2-noisy", "random6"};
}

} // namespace effope
