#include "effope/builtin.hpp"
#include "effope/error.hpp"
#include "effope/rng.hpp"
#include "effope/sampling.hpp"
#include "effope/solvers.hpp"

#include <doctest.h>

#include <cmath>

using namespace effope;

TEST_SUITE("sampling") {

TEST_CASE("rng streams are reproducible and distinct") {
    RngStream a(7, 0);
    RngStream b(7, 0);
    RngStream c(7, 1);
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next_u64();
        CHECK(x == b.next_u64());
        CHECK(x != c.next_u64());
    }
    RngStream u(1, 2);
    double sum = 0.0;
    for (int i = 0; i < 100000; ++i) {
        const double x = u.uniform();
        REQUIRE(x >= 0.0);
        REQUIRE(x < 1.0);
        sum += x;
    }
    CHECK(std::abs(sum / 100000 - 0.5) < 0.005);
    const double probs[3] = {0.0, 1.0, 0.0};
    CHECK(u.categorical(probs, 3) == 1);
}

TEST_CASE("chain2 uniform-behavior marginal is near the stationary law") {
    const auto b = PolicyTable::uniform(2, 2);
    const auto ds = simulate(chain2(), b, 1000, 50, kDefaultBurnIn, 7);
    REQUIRE(ds.size() == 50000);
    const Eigen::VectorXd f = empirical_state_marginal(ds);
    const Eigen::VectorXd mu = stationary_distribution(policy_kernel(chain2(), b));
    CHECK(0.5 * (f - mu).lpNorm<1>() < 0.05);
}

TEST_CASE("dataset shape and within-episode continuity") {
    const auto b = PolicyTable::uniform(6, 3);
    const TabularMdp mdp = random6();
    const auto ds = simulate(mdp, b, 40, 25, 10, 3);
    REQUIRE(ds.size() == 1000);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& x = ds.samples[i];
        CHECK(x.episode == static_cast<int>(i / 25));
        CHECK(x.t == static_cast<int>(i % 25));
        if (x.t > 0) {
            CHECK(x.s == ds.samples[i - 1].s_next);
        }
        bool in_support = false;
        for (const auto& atom : mdp.reward_at(x.s, x.a)) {
            in_support = in_support || atom.value == x.r;
        }
        CHECK(in_support);
    }
    const auto single = simulate(chain2(), PolicyTable::uniform(2, 2), 30, 1, 5, 1);
    CHECK(single.size() == 30);
}

TEST_CASE("simulate is deterministic, seed-sensitive and independent of worker count") {
    const auto b = PolicyTable::uniform(2, 2);
    const auto first = dataset_csv(simulate(chain2_noisy(), b, 200, 10, 20, 11));
    CHECK(first == dataset_csv(simulate(chain2_noisy(), b, 200, 10, 20, 11)));
    CHECK(first == dataset_csv(simulate(chain2_noisy(), b, 200, 10, 20, 11, 4)));
    CHECK(first != dataset_csv(simulate(chain2_noisy(), b, 200, 10, 20, 12)));
}

TEST_CASE("non-ergodic behavior chain is refused") {
    CHECK_THROWS_AS(simulate(chain2(), PolicyTable::deterministic({0, 0}, 2), 5, 5, 0, 1), NonErgodicError);
}

TEST_CASE("empirical_counts") {
    OfflineDataset empty;
    empty.n_states = 3;
    empty.n_actions = 2;
    const auto z = empirical_counts(empty);
    CHECK(z.n_s.sum() == 0.0);
    CHECK(z.n_sas.sum() == 0.0);

    OfflineDataset one;
    one.n_states = 2;
    one.n_actions = 2;
    one.samples.push_back({0, 0, 0, 1, 1.0, 1});
    const auto c1 = empirical_counts(one);
    CHECK(c1.n_s(0) == 1.0);
    CHECK(c1.n_sa(0, 1) == 1.0);
    CHECK(c1.n_sas(1, 1) == 1.0);
    CHECK(c1.reward_sum(0, 1) == 1.0);

    const auto ds = simulate(chain2(), PolicyTable::uniform(2, 2), 100, 20, 5, 2);
    const auto c = empirical_counts(ds);
    // Recount oracle.
    Eigen::Vector2d ns = Eigen::Vector2d::Zero();
    for (const auto& x : ds.samples) {
        ns(x.s) += 1.0;
    }
    CHECK(c.n_s == ns);
    CHECK(c.n_sa.rowwise().sum() == c.n_s);
    for (int sa = 0; sa < 4; ++sa) {
        CHECK(c.n_sas.row(sa).sum() == c.n_sa(sa / 2, sa % 2));
    }
}

TEST_CASE("empirical transition frequencies converge on chain2-noisy") {
    const auto b = PolicyTable::uniform(2, 2);
    const auto ds = simulate(chain2_noisy(), b, 1000, 100, 20, 5);
    const auto c = empirical_counts(ds);
    const double b_err = (c.n_sa.array().colwise() / c.n_s.array() - 0.5).abs().maxCoeff();
    CHECK(b_err < 0.02);
    double p_err = 0.0;
    for (int sa = 0; sa < 4; ++sa) {
        const Eigen::RowVectorXd freq = c.n_sas.row(sa) / c.n_sas.row(sa).sum();
        p_err = std::max(p_err, (freq - chain2_noisy().transition.row(sa)).cwiseAbs().maxCoeff());
    }
    CHECK(p_err < 0.02);
}

TEST_CASE("dataset CSV round trip") {
    const auto ds = simulate(random6(), PolicyTable::uniform(6, 3), 7, 9, 3, 99);
    const auto text = dataset_csv(ds);
    CHECK(text.rfind("episode,t,s,a,r,s_next\n", 0) == 0);
    const auto back = dataset_from_csv(text, 6, 3);
    CHECK(back.samples == ds.samples);
    CHECK(back.n_episodes == 7);
    CHECK(back.horizon == 9);
    CHECK_THROWS_WITH_AS(dataset_from_csv("episode,t,s,a,r,s_next\n0,0,1,0,x,1\n"), doctest::Contains("line 2"),
                         ValidationError);
    CHECK_THROWS_AS(dataset_from_csv("e,t\n"), ValidationError);
}

TEST_CASE("burn-in distance decays") {
    const auto b = PolicyTable::uniform(6, 3);
    CHECK(burn_in_distance(random6(), b, 0) > 0.1);
    CHECK(burn_in_distance(random6(), b, 50) < 1e-12);
}

}
