#include "effope/estimators.hpp"

#include "effope/csv.hpp"
#include "effope/error.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cmath>

namespace effope {

namespace {

// Calls fn(o, weight) for every outcome with positive probability under (f0, behavior, P, R).
template <typename Fn>
void for_each_outcome(const TabularMdp& mdp, const PolicyTable& behavior, Fn&& fn) {
    require_compatible(mdp, behavior);
    TransitionSample o;
    for (int s = 0; s < mdp.n_states; ++s) {
        const double ws = mdp.init_dist(s);
        if (ws == 0.0) {
            continue;
        }
        for (int a = 0; a < mdp.n_actions; ++a) {
            const double wa = ws * behavior(s, a);
            if (wa == 0.0) {
                continue;
            }
            for (const auto& atom : mdp.reward_at(s, a)) {
                const double wr = wa * atom.prob;
                if (wr == 0.0) {
                    continue;
                }
                for (int n = 0; n < mdp.n_states; ++n) {
                    const double w = wr * mdp.prob(s, a, n);
                    if (w == 0.0) {
                        continue;
                    }
                    o.s = s;
                    o.a = a;
                    o.r = atom.value;
                    o.s_next = n;
                    fn(o, w);
                }
            }
        }
    }
}

double importance_ratio(const TransitionSample& o, const PolicyTable& target, const PolicyTable& b_hat,
                        const std::vector<bool>& covered) {
    if (!covered.empty() && !covered[static_cast<std::size_t>(o.s)]) {
        throw CoverageError("coverage violation at state " + std::to_string(o.s));
    }
    const double b = b_hat(o.s, o.a);
    if (!(b > 0.0)) {
        throw CoverageError("coverage violation at state " + std::to_string(o.s) + ": behavior probability of action " +
                            std::to_string(o.a) + " is zero");
    }
    return target(o.s, o.a) / b;
}

// Influence part without the -eta centering.
double dr_term(const TransitionSample& o, const NuisanceSet& nz, double gamma) {
    const double ratio = importance_ratio(o, nz.target, nz.b_hat, nz.b_covered);
    const double td = o.r + gamma * nz.v_hat(o.s_next) - nz.q_hat(o.s, o.a);
    return nz.omega_hat(o.s) * ratio * td / (1.0 - gamma) + nz.v_hat(o.s);
}

EstimateReport summarize(std::string name, const std::vector<double>& g, double level) {
    EstimateReport rep;
    rep.estimator = std::move(name);
    rep.level = level;
    rep.n_eff = g.size();
    if (g.empty()) {
        throw CoverageError(rep.estimator + ": empty dataset");
    }
    double sum = 0.0;
    for (double x : g) {
        sum += x;
    }
    rep.eta_hat = sum / static_cast<double>(g.size());
    rep.if_values.resize(g.size());
    double ss = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        rep.if_values[i] = g[i] - rep.eta_hat;
        ss += rep.if_values[i] * rep.if_values[i];
    }
    if (g.size() >= 2) {
        const double sd = std::sqrt(ss / static_cast<double>(g.size() - 1));
        rep.std_err = sd / std::sqrt(static_cast<double>(g.size()));
    }
    const double z = normal_critical_value(level);
    rep.ci_low = rep.eta_hat - z * rep.std_err;
    rep.ci_high = rep.eta_hat + z * rep.std_err;
    return rep;
}

} // namespace

BehaviorEstimate estimate_behavior(const OfflineDataset& ds) {
    const auto c = empirical_counts(ds);
    Eigen::MatrixXd probs(ds.n_states, ds.n_actions);
    BehaviorEstimate out;
    out.covered.assign(static_cast<std::size_t>(ds.n_states), false);
    out.state_counts = c.n_s;
    for (int s = 0; s < ds.n_states; ++s) {
        if (c.n_s(s) > 0.0) {
            probs.row(s) = c.n_sa.row(s) / c.n_s(s);
            out.covered[static_cast<std::size_t>(s)] = true;
        } else {
            probs.row(s).setConstant(1.0 / ds.n_actions);
        }
    }
    out.policy = PolicyTable::from_probs(std::move(probs));
    return out;
}

TabularMdp estimate_model(const OfflineDataset& ds, double gamma) {
    const auto c = empirical_counts(ds);
    std::string missing;
    for (int s = 0; s < ds.n_states; ++s) {
        for (int a = 0; a < ds.n_actions; ++a) {
            if (c.n_sa(s, a) == 0.0) {
                missing += (missing.empty() ? "" : " ") + std::string("(") + std::to_string(s) + "," +
                           std::to_string(a) + ")";
            }
        }
    }
    if (!missing.empty()) {
        throw CoverageError("coverage violation: unvisited state-action pairs " + missing);
    }
    TabularMdp model = make_mdp(ds.n_states, ds.n_actions, gamma);
    double bound = 1.0;
    for (int s = 0; s < ds.n_states; ++s) {
        for (int a = 0; a < ds.n_actions; ++a) {
            const int sa = model.sa(s, a);
            const double n = c.n_sa(s, a);
            model.transition.row(sa) = c.n_sas.row(sa) / n;
            RewardDist dist;
            for (const auto& [value, count] : c.reward_values[static_cast<std::size_t>(sa)]) {
                dist.push_back({value, static_cast<double>(count) / n});
                bound = std::max(bound, std::abs(value));
            }
            model.reward_at(s, a) = std::move(dist);
        }
    }
    model.reward_bound = bound;
    model.init_dist = c.n_s / static_cast<double>(c.total);
    require_valid(model);
    return model;
}

FqiResult fqi(const TabularMdp& model, double tol, int max_iter) {
    auto vi = value_iteration(model, tol, max_iter);
    FqiResult out{vi.q, greedy_policy(vi.q), vi.iterations};
    return out;
}

ValuePair fqe(const TabularMdp& model, const PolicyTable& target) {
    return solve_q(model, target);
}

OccupancyVector estimate_omega(const TabularMdp& model, const PolicyTable& target, const Eigen::VectorXd& ref_dist) {
    return occupancy_ratio(model, target, ref_dist);
}

NuisanceSet true_nuisances(const TabularMdp& mdp, const PolicyTable& behavior, const PolicyTable& target) {
    const ValuePair vp = solve_q(mdp, target);
    NuisanceSet nz;
    nz.q_hat = vp.q;
    nz.v_hat = vp.v;
    nz.omega_hat = occupancy_ratio(mdp, target, mdp.init_dist).omega;
    nz.b_hat = behavior;
    nz.target = target;
    return nz;
}

NuisanceSet fit_nuisances(const OfflineDataset& ds, double gamma, const PolicyTable* target) {
    const TabularMdp model = estimate_model(ds, gamma);
    const auto behavior = estimate_behavior(ds);
    NuisanceSet nz;
    nz.target = target != nullptr ? *target : fqi(model).policy;
    const ValuePair vp = fqe(model, nz.target);
    nz.q_hat = vp.q;
    nz.v_hat = vp.v;
    nz.omega_hat = estimate_omega(model, nz.target, model.init_dist).omega;
    nz.b_hat = behavior.policy;
    nz.b_covered = behavior.covered;
    return nz;
}

double eif_value(const TransitionSample& o, const NuisanceSet& nz, double gamma, double eta) {
    return dr_term(o, nz, gamma) - eta;
}

double normal_critical_value(double level) {
    if (!(level > 0.0 && level < 1.0)) {
        throw ValidationError("confidence level must lie in (0, 1)");
    }
    return boost::math::quantile(boost::math::normal_distribution<double>(), 0.5 + 0.5 * level);
}

EstimateReport dr_estimate(const OfflineDataset& ds, const NuisanceSet& nz, double gamma, double level) {
    std::vector<double> g;
    g.reserve(ds.samples.size());
    for (const auto& o : ds.samples) {
        g.push_back(dr_term(o, nz, gamma));
    }
    return summarize("dr", g, level);
}

EstimateReport mis_estimate(const OfflineDataset& ds, const Eigen::VectorXd& omega_hat, const PolicyTable& target,
                            const PolicyTable& b_hat, double gamma, double level) {
    const auto covered = estimate_behavior(ds).covered;
    std::vector<double> g;
    g.reserve(ds.samples.size());
    for (const auto& o : ds.samples) {
        g.push_back(omega_hat(o.s) * importance_ratio(o, target, b_hat, covered) * o.r / (1.0 - gamma));
    }
    return summarize("mis", g, level);
}

double dr_population(const TabularMdp& mdp, const PolicyTable& behavior, const NuisanceSet& nz) {
    double total = 0.0;
    for_each_outcome(mdp, behavior, [&](const TransitionSample& o, double w) { total += w * dr_term(o, nz, mdp.discount); });
    return total;
}

double mis_population(const TabularMdp& mdp, const PolicyTable& behavior, const PolicyTable& target,
                      const Eigen::VectorXd& omega) {
    double total = 0.0;
    for_each_outcome(mdp, behavior, [&](const TransitionSample& o, double w) {
        total += w * omega(o.s) * importance_ratio(o, target, behavior, {}) * o.r / (1.0 - mdp.discount);
    });
    return total;
}

double eif_population_mean(const TabularMdp& mdp, const PolicyTable& behavior, const PolicyTable& target) {
    const NuisanceSet nz = true_nuisances(mdp, behavior, target);
    const double eta = mdp.init_dist.dot(nz.v_hat);
    double total = 0.0;
    for_each_outcome(mdp, behavior,
                     [&](const TransitionSample& o, double w) { total += w * eif_value(o, nz, mdp.discount, eta); });
    return total;
}

double eif_variance_exact(const TabularMdp& mdp, const PolicyTable& behavior, const PolicyTable& target) {
    const NuisanceSet nz = true_nuisances(mdp, behavior, target);
    const double eta = mdp.init_dist.dot(nz.v_hat);
    double mean = 0.0;
    double second = 0.0;
    for_each_outcome(mdp, behavior, [&](const TransitionSample& o, double w) {
        const double x = eif_value(o, nz, mdp.discount, eta);
        mean += w * x;
        second += w * x * x;
    });
    return std::max(0.0, second - mean * mean);
}

std::string estimate_csv_header() {
    return csv_row({"estimator", "eta_hat", "std_err", "ci_low", "ci_high", "n", "seed"});
}

std::string estimate_csv_row(const EstimateReport& r, std::uint64_t seed) {
    return csv_row({r.estimator, format_double(r.eta_hat), format_double(r.std_err), format_double(r.ci_low),
                    format_double(r.ci_high), std::to_string(r.n_eff), std::to_string(seed)});
}

} // namespace effope
