#include "support.hpp"

#include "effope/builtin.hpp"
#include "effope/error.hpp"
#include "effope/estimators.hpp"
#include "effope/sampling.hpp"
#include "effope/solvers.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace effope;
using effope::testing::random_model;
using effope::testing::random_policy;

namespace {

PolicyTable chain2_optimal() { return PolicyTable::deterministic({0, 1}, 2); }
PolicyTable uniform2() { return PolicyTable::uniform(2, 2); }

TabularMdp stationary_random(std::mt19937_64& gen, int ns, int na, double gamma, const PolicyTable& b) {
    return with_stationary_init(random_model(gen, ns, na, gamma, 1 + static_cast<int>(gen() % 3)), b);
}

} // namespace

TEST_SUITE("estimators") {

TEST_CASE("estimate_behavior") {
    OfflineDataset ds;
    ds.n_states = 2;
    ds.n_actions = 2;
    ds.samples = {{0, 0, 0, 0, 1.0, 0}, {0, 1, 0, 0, 1.0, 0}, {0, 2, 0, 0, 1.0, 0}};
    const auto est = estimate_behavior(ds);
    CHECK(est.policy(0, 0) == 1.0);
    CHECK(est.covered[0]);
    CHECK_FALSE(est.covered[1]);

    NuisanceSet nz = true_nuisances(chain2(), uniform2(), chain2_optimal());
    nz.b_hat = est.policy;
    nz.b_covered = est.covered;
    CHECK_THROWS_WITH_AS(eif_value({0, 0, 1, 1, 0.0, 0}, nz, 0.5, 1.5), doctest::Contains("coverage violation at state 1"),
                         CoverageError);

    const auto big = simulate(chain2(), uniform2(), 1000, 100, 20, 4);
    const auto b = estimate_behavior(big);
    CHECK((b.policy.probs().array() - 0.5).abs().maxCoeff() < 0.02);
}

TEST_CASE("estimate_model") {
    const auto ds = simulate(chain2(), uniform2(), 50, 20, 10, 8);
    const auto model = estimate_model(ds, 0.5);
    CHECK(model.transition == chain2().transition);
    CHECK(validate_mdp(model).empty());

    std::mt19937_64 gen(4);
    const auto b = PolicyTable::uniform(4, 2);
    const auto mdp = stationary_random(gen, 4, 2, 0.8, b);
    const auto est = estimate_model(simulate(mdp, b, 1000, 100, 20, 6), 0.8);
    CHECK((est.transition - mdp.transition).cwiseAbs().maxCoeff() < 0.02);

    OfflineDataset partial;
    partial.n_states = 2;
    partial.n_actions = 2;
    partial.samples = {{0, 0, 0, 0, 1.0, 0}, {0, 1, 0, 1, 1.0, 1}, {0, 2, 1, 0, 0.0, 1}};
    CHECK_THROWS_WITH_AS(estimate_model(partial, 0.5), doctest::Contains("(1,1)"), CoverageError);
}

TEST_CASE("fqi and fqe") {
    const auto exact = fqi(chain2());
    CHECK(exact.policy == chain2_optimal());
    CHECK(exact.q(0, 1) == doctest::Approx(1.5).epsilon(1e-11));
    CHECK(optimality_residual(chain2(), exact.q) < 1e-11);

    const auto model = estimate_model(simulate(chain2(), uniform2(), 1000, 100, 20, 3), 0.5);
    CHECK(fqi(model).policy == chain2_optimal());
    CHECK(fqi(tied_chain2()).policy.actions() == std::vector<int>{0, 0});

    std::mt19937_64 gen(61);
    const auto mdp = random_model(gen, 5, 3, 0.9);
    const auto pi = random_policy(gen, 5, 3);
    CHECK((fqe(mdp, pi).q - solve_q(mdp, pi).q).cwiseAbs().maxCoeff() <= 1e-12);
    const auto fq = fqe(model, chain2_optimal());
    CHECK((fq.q - solve_q(model, chain2_optimal()).q).cwiseAbs().maxCoeff() < 1e-10);

    TabularMdp constant = mdp;
    for (auto& d : constant.reward) {
        d = {{0.4, 1.0}};
    }
    CHECK((fqe(constant, pi).q.array() - 0.4 / 0.1).abs().maxCoeff() < 1e-10);
}

TEST_CASE("estimate_omega") {
    const auto exact = occupancy_ratio(chain2(), chain2_optimal(), chain2().init_dist);
    CHECK(estimate_omega(chain2(), chain2_optimal(), chain2().init_dist).omega == exact.omega);

    const auto ds = simulate(chain2(), uniform2(), 1000, 100, 20, 12);
    const auto model = estimate_model(ds, 0.5);
    const auto est = estimate_omega(model, chain2_optimal(), model.init_dist);
    CHECK((est.omega - exact.omega).cwiseAbs().maxCoeff() < 0.05);
    CHECK(std::abs(est.omega.dot(est.ref_dist) - 1.0) < 1e-10);
    const auto same = estimate_omega(model, estimate_behavior(ds).policy, model.init_dist);
    CHECK((same.omega.array() - 1.0).abs().maxCoeff() < 0.05);
}

TEST_CASE("eif_value worked example on chain2") {
    const auto nz = true_nuisances(chain2(), uniform2(), chain2_optimal());
    CHECK(nz.omega_hat(0) == doctest::Approx(1.5));
    CHECK(eif_value({0, 0, 0, 0, 1.0, 0}, nz, 0.5, 1.5) == doctest::Approx(0.5).epsilon(1e-14));
    // Action 1 at state 0 is not chosen by pi*; only V(S) - eta remains.
    CHECK(eif_value({0, 0, 0, 1, 1.0, 1}, nz, 0.5, 1.5) == doctest::Approx(2.0 - 1.5).epsilon(1e-14));
}

TEST_CASE("property: enumeration mean of the influence function is zero") {
    std::mt19937_64 gen(71);
    for (int i = 0; i < 100; ++i) {
        const int ns = 2 + static_cast<int>(gen() % 4);
        const int na = 2 + static_cast<int>(gen() % 2);
        const auto b = random_policy(gen, ns, na, 0.05);
        const auto mdp = stationary_random(gen, ns, na, 0.8, b);
        CHECK(std::abs(eif_population_mean(mdp, b, random_policy(gen, ns, na))) < 1e-10);
        CHECK(std::abs(eif_population_mean(mdp, b, optimal_policy(mdp).policy)) < 1e-10);
    }
}

TEST_CASE("property: population dr estimate is doubly robust") {
    std::mt19937_64 gen(73);
    std::normal_distribution<double> normal;
    for (int i = 0; i < 100; ++i) {
        const int ns = 2 + static_cast<int>(gen() % 4);
        const int na = 2 + static_cast<int>(gen() % 2);
        const auto b = random_policy(gen, ns, na, 0.05);
        const auto mdp = stationary_random(gen, ns, na, 0.75, b);
        const auto pi = random_policy(gen, ns, na);
        const double eta = policy_value(mdp, pi);
        const auto truth = true_nuisances(mdp, b, pi);
        CHECK(dr_population(mdp, b, truth) == doctest::Approx(eta).epsilon(1e-12));

        NuisanceSet q_wrong = truth;
        for (int s = 0; s < ns; ++s) {
            for (int a = 0; a < na; ++a) {
                q_wrong.q_hat(s, a) = normal(gen);
            }
        }
        q_wrong.v_hat = q_wrong.q_hat.cwiseProduct(pi.probs()).rowwise().sum();
        CHECK(std::abs(dr_population(mdp, b, q_wrong) - eta) < 1e-9);

        NuisanceSet w_wrong = truth;
        for (int s = 0; s < ns; ++s) {
            w_wrong.omega_hat(s) = std::abs(normal(gen));
        }
        CHECK(std::abs(dr_population(mdp, b, w_wrong) - eta) < 1e-9);
    }
    // The chain2 corruptions named in the contract: zero Q and unit omega.
    const auto truth = true_nuisances(chain2(), uniform2(), chain2_optimal());
    NuisanceSet zero_q = truth;
    zero_q.q_hat.setZero();
    zero_q.v_hat.setZero();
    CHECK(std::abs(dr_population(chain2(), uniform2(), zero_q) - 1.5) < 1e-9);
    NuisanceSet unit_w = truth;
    unit_w.omega_hat.setOnes();
    CHECK(std::abs(dr_population(chain2(), uniform2(), unit_w) - 1.5) < 1e-9);
}

TEST_CASE("mis population identity and its lack of robustness") {
    const auto w = occupancy_ratio(chain2(), chain2_optimal(), chain2().init_dist).omega;
    CHECK(mis_population(chain2(), uniform2(), chain2_optimal(), w) == doctest::Approx(1.5).epsilon(1e-14));
    const double mean_r = 0.5;
    CHECK(mis_population(chain2(), uniform2(), uniform2(), Eigen::Vector2d::Ones()) ==
          doctest::Approx(mean_r / 0.5).epsilon(1e-14));
    // omega = 1 under pi* ignores the drift toward state 0.
    CHECK(mis_population(chain2(), uniform2(), chain2_optimal(), Eigen::Vector2d::Ones()) ==
          doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("eif_variance_exact") {
    TabularMdp flat = chain2();
    for (auto& d : flat.reward) {
        d = {{1.0, 1.0}};
    }
    CHECK(eif_variance_exact(flat, uniform2(), uniform2()) < 1e-20);

    // Monte Carlo cross-check on chain2-noisy with its optimal target.
    const auto target = chain2_optimal();
    const double sigma2 = eif_variance_exact(chain2_noisy(), uniform2(), target);
    CHECK(sigma2 > 0.0);
    const auto ds = simulate(chain2_noisy(), uniform2(), 100000, 1, 20, 77);
    const auto nz = true_nuisances(chain2_noisy(), uniform2(), target);
    const double eta = policy_value(chain2_noisy(), target);
    std::vector<double> xs;
    for (const auto& o : ds.samples) {
        xs.push_back(eif_value(o, nz, 0.5, eta));
    }
    const double n = static_cast<double>(xs.size());
    double m1 = 0.0;
    for (double x : xs) {
        m1 += x;
    }
    m1 /= n;
    double c2 = 0.0;
    double c4 = 0.0;
    for (double x : xs) {
        const double d = (x - m1) * (x - m1);
        c2 += d;
        c4 += d * d;
    }
    c2 /= n;
    c4 /= n;
    const double se = std::sqrt((c4 - c2 * c2) / n);
    CHECK(se > 0.0);
    CHECK(std::abs(c2 - sigma2) < 3.0 * se);

    CHECK(eif_variance_exact(chain2(), uniform2(), chain2_optimal()) > 0.0);
}

TEST_CASE("dr_estimate solves the estimating equation") {
    const auto ds = simulate(chain2_noisy(), uniform2(), 500, 4, 20, 21);
    const auto nz = fit_nuisances(ds, 0.5);
    CHECK(nz.target == chain2_optimal());
    const auto rep = dr_estimate(ds, nz, 0.5);
    double mean_if = 0.0;
    for (double x : rep.if_values) {
        mean_if += x;
    }
    mean_if /= static_cast<double>(rep.if_values.size());
    CHECK(std::abs(mean_if) < 1e-10);
    CHECK(rep.ci_low <= rep.eta_hat);
    CHECK(rep.eta_hat <= rep.ci_high);
    CHECK(rep.n_eff == 2000);
    for (const auto& o : ds.samples) {
        CHECK(std::abs(eif_value(o, nz, 0.5, rep.eta_hat) -
                       rep.if_values[static_cast<std::size_t>(o.episode * 4 + o.t)]) < 1e-12);
        break;
    }
    const auto mis = mis_estimate(ds, nz.omega_hat, nz.target, nz.b_hat, 0.5);
    CHECK(mis.estimator == "mis");
    CHECK(std::abs(mis.eta_hat - 1.5) < 0.3);
    CHECK(normal_critical_value(0.95) == doctest::Approx(1.959963984540054).epsilon(1e-12));
}

TEST_CASE("property: dr error shrinks with sample size on chain2") {
    const double eta_star = 1.5;
    double previous = 1e9;
    for (int n_episodes : {100, 1000, 10000}) {
        std::vector<double> errs;
        for (int seed = 0; seed < 50; ++seed) {
            const auto ds = simulate(chain2(), uniform2(), n_episodes, 10, 20, 500 + static_cast<std::uint64_t>(seed));
            const auto rep = dr_estimate(ds, fit_nuisances(ds, 0.5), 0.5);
            errs.push_back(std::abs(rep.eta_hat - eta_star));
        }
        std::nth_element(errs.begin(), errs.begin() + 25, errs.end());
        const double median = errs[25];
        CHECK(median < previous);
        previous = median;
    }
}

}
