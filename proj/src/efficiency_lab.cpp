#include "effope/efficiency_lab.hpp"

#include "effope/csv.hpp"
#include "effope/error.hpp"
#include "effope/parallel.hpp"
#include "effope/rng.hpp"
#include "effope/sampling.hpp"
#include "effope/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace effope {

RewardDirection zero_direction(const TabularMdp& mdp) {
    RewardDirection h(mdp.reward.size());
    for (std::size_t i = 0; i < mdp.reward.size(); ++i) {
        h[i].assign(mdp.reward[i].size(), 0.0);
    }
    return h;
}

RewardDirection unit_bonus_direction(const TabularMdp& mdp, int s, int a) {
    if (s < 0 || s >= mdp.n_states || a < 0 || a >= mdp.n_actions) {
        throw DimensionError("unit_bonus_direction: pair out of range");
    }
    RewardDirection h = zero_direction(mdp);
    const auto& dist = mdp.reward_at(s, a);
    const double m = mean(dist);
    double var = 0.0;
    for (const auto& atom : dist) {
        var += atom.prob * (atom.value - m) * (atom.value - m);
    }
    if (!(var > 0.0)) {
        throw ValidationError("unit_bonus_direction: reward of (" + std::to_string(s) + "," + std::to_string(a) +
                              ") is deterministic, so no tilt can move its mean");
    }
    auto& row = h[static_cast<std::size_t>(mdp.sa(s, a))];
    for (std::size_t k = 0; k < dist.size(); ++k) {
        row[k] = (dist[k].value - m) / var;
    }
    return h;
}

void validate_direction(const TabularMdp& mdp, const RewardDirection& h, const Eigen::VectorXd& state_tilt) {
    if (h.size() != mdp.reward.size()) {
        throw DimensionError("direction has " + std::to_string(h.size()) + " rows, model has " +
                             std::to_string(mdp.reward.size()) + " state-action pairs");
    }
    for (std::size_t i = 0; i < h.size(); ++i) {
        if (h[i].size() != mdp.reward[i].size()) {
            throw DimensionError("direction row " + std::to_string(i) + " does not match the reward atoms");
        }
        double m = 0.0;
        for (std::size_t k = 0; k < h[i].size(); ++k) {
            m += mdp.reward[i][k].prob * h[i][k];
        }
        if (!(std::abs(m) <= 1e-12)) {
            throw ValidationError("direction row " + std::to_string(i) + " is not mean-zero (" + format_double(m) + ")");
        }
    }
    if (state_tilt.size() > 0) {
        if (state_tilt.size() != mdp.n_states) {
            throw DimensionError("state tilt length mismatch");
        }
        if (!(std::abs(mdp.init_dist.dot(state_tilt)) <= 1e-12)) {
            throw ValidationError("state tilt is not mean-zero under init_dist");
        }
    }
}

namespace {

// Largest t >= 0 such that p (1 + t h) stays in [0, 1] and also p (1 - t h) does.
double atom_limit(double p, double h) {
    if (h == 0.0 || p == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    const double a = std::abs(h);
    const double to_zero = 1.0 / a;
    const double to_one = (1.0 / p - 1.0) / a;
    return std::min(to_zero, to_one);
}

} // namespace

double epsilon_max(const TabularMdp& mdp, const RewardDirection& h, const Eigen::VectorXd& state_tilt) {
    validate_direction(mdp, h, state_tilt);
    double lim = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < h.size(); ++i) {
        for (std::size_t k = 0; k < h[i].size(); ++k) {
            lim = std::min(lim, atom_limit(mdp.reward[i][k].prob, h[i][k]));
        }
    }
    for (Eigen::Index s = 0; s < state_tilt.size(); ++s) {
        lim = std::min(lim, atom_limit(mdp.init_dist(s), state_tilt(s)));
    }
    return lim;
}

Eigen::MatrixXd reward_slope(const TabularMdp& mdp, const RewardDirection& h) {
    validate_direction(mdp, h);
    Eigen::MatrixXd out(mdp.n_states, mdp.n_actions);
    for (int s = 0; s < mdp.n_states; ++s) {
        for (int a = 0; a < mdp.n_actions; ++a) {
            const auto& dist = mdp.reward_at(s, a);
            const auto& row = h[static_cast<std::size_t>(mdp.sa(s, a))];
            double acc = 0.0;
            for (std::size_t k = 0; k < dist.size(); ++k) {
                acc += dist[k].prob * row[k] * dist[k].value;
            }
            out(s, a) = acc;
        }
    }
    return out;
}

TabularMdp perturb(const TabularMdp& base, const RewardDirection& h, double eps, const Eigen::VectorXd& state_tilt) {
    const double lim = epsilon_max(base, h, state_tilt);
    if (!(std::abs(eps) <= lim)) {
        throw PerturbationRangeError("epsilon " + format_double(eps) + " exceeds the admissible range " +
                                     format_double(lim) + " of this direction");
    }
    TabularMdp out = base;
    if (eps == 0.0) {
        return out;
    }
    for (std::size_t i = 0; i < h.size(); ++i) {
        for (std::size_t k = 0; k < h[i].size(); ++k) {
            out.reward[i][k].prob = base.reward[i][k].prob * (1.0 + eps * h[i][k]);
        }
    }
    for (Eigen::Index s = 0; s < state_tilt.size(); ++s) {
        out.init_dist(s) = base.init_dist(s) * (1.0 + eps * state_tilt(s));
    }
    require_valid(out);
    return out;
}

TabularMdp perturb(const PerturbationPath& path) {
    return perturb(path.base, path.direction, path.epsilon, path.state_tilt);
}

double optimal_value(const TabularMdp& mdp) {
    const auto opt = optimal_policy(mdp);
    return mdp.init_dist.dot(opt.values.v);
}

namespace {

// Optimal (maximize) or pessimal value of the model restricted to `allowed` actions, with reward `r`.
Eigen::VectorXd restricted_extreme_value(const TabularMdp& mdp, const std::vector<std::vector<int>>& allowed,
                                         const Eigen::MatrixXd& r, bool maximize) {
    const int ns = mdp.n_states;
    const double sign = maximize ? 1.0 : -1.0;
    std::vector<int> choice(static_cast<std::size_t>(ns));
    for (int s = 0; s < ns; ++s) {
        choice[static_cast<std::size_t>(s)] = allowed[static_cast<std::size_t>(s)].front();
    }
    Eigen::VectorXd w;
    for (int round = 0; round < 1000; ++round) {
        Eigen::MatrixXd kernel(ns, ns);
        Eigen::VectorXd rc(ns);
        for (int s = 0; s < ns; ++s) {
            const int a = choice[static_cast<std::size_t>(s)];
            kernel.row(s) = mdp.transition.row(mdp.sa(s, a));
            rc(s) = r(s, a);
        }
        w = (Eigen::MatrixXd::Identity(ns, ns) - mdp.discount * kernel).partialPivLu().solve(rc);
        bool changed = false;
        for (int s = 0; s < ns; ++s) {
            const int cur = choice[static_cast<std::size_t>(s)];
            auto value = [&](int a) { return sign * (r(s, a) + mdp.discount * mdp.transition.row(mdp.sa(s, a)).dot(w)); };
            double best = value(cur);
            int best_a = cur;
            for (int a : allowed[static_cast<std::size_t>(s)]) {
                const double v = value(a);
                if (v > best + 1e-13 * std::max(1.0, std::abs(best))) {
                    best = v;
                    best_a = a;
                }
            }
            if (best_a != cur) {
                choice[static_cast<std::size_t>(s)] = best_a;
                changed = true;
            }
        }
        if (!changed) {
            return w;
        }
    }
    throw ConvergenceError("restricted policy iteration did not settle");
}

} // namespace

std::pair<double, double> predicted_one_sided_derivatives(const TabularMdp& base, const RewardDirection& h,
                                                          const Eigen::VectorXd& state_tilt) {
    validate_direction(base, h, state_tilt);
    const auto opt = optimal_policy(base);
    std::vector<std::vector<int>> allowed(static_cast<std::size_t>(base.n_states));
    for (int s = 0; s < base.n_states; ++s) {
        for (int a = 0; a < base.n_actions; ++a) {
            if (opt.values.q(s, a) >= opt.values.v(s) - kTieTolerance) {
                allowed[static_cast<std::size_t>(s)].push_back(a);
            }
        }
    }
    const Eigen::MatrixXd rdot = reward_slope(base, h);
    const double tilt = state_tilt.size() > 0 ? base.init_dist.cwiseProduct(state_tilt).dot(opt.values.v) : 0.0;
    const double right = base.init_dist.dot(restricted_extreme_value(base, allowed, rdot, true)) + tilt;
    const double left = base.init_dist.dot(restricted_extreme_value(base, allowed, rdot, false)) + tilt;
    return {right, left};
}

KinkReport kink_probe(const TabularMdp& base, const RewardDirection& h, const std::vector<double>& eps_grid,
                      const Eigen::VectorXd& state_tilt, double threshold) {
    const double lim = epsilon_max(base, h, state_tilt);
    double smallest_pos = std::numeric_limits<double>::infinity();
    double smallest_neg = -std::numeric_limits<double>::infinity();
    for (double e : eps_grid) {
        if (!(std::abs(e) <= lim)) {
            throw PerturbationRangeError("grid point " + format_double(e) + " exceeds the admissible range " +
                                         format_double(lim));
        }
        const bool mirrored = std::any_of(eps_grid.begin(), eps_grid.end(), [&](double o) {
            return std::abs(o + e) <= 1e-15 * std::max(1.0, std::abs(e));
        });
        if (!mirrored) {
            throw ValidationError("epsilon grid is not symmetric about 0: missing " + format_double(-e));
        }
        if (e > 0.0) {
            smallest_pos = std::min(smallest_pos, e);
        } else if (e < 0.0) {
            smallest_neg = std::max(smallest_neg, e);
        }
    }
    if (!std::isfinite(smallest_pos)) {
        throw ValidationError("epsilon grid needs at least one nonzero point");
    }
    KinkReport rep;
    rep.threshold = threshold;
    rep.eta_star0 = optimal_value(base);
    for (double e : eps_grid) {
        if (e == 0.0) {
            continue;
        }
        KinkPoint p;
        p.epsilon = e;
        p.eta_star = optimal_value(perturb(base, h, e, state_tilt));
        p.quotient = (p.eta_star - rep.eta_star0) / e;
        if (e == smallest_pos) {
            rep.right_limit = p.quotient;
        }
        if (e == smallest_neg) {
            rep.left_limit = p.quotient;
        }
        rep.points.push_back(p);
    }
    rep.gap = std::abs(rep.right_limit - rep.left_limit);
    const auto [right, left] = predicted_one_sided_derivatives(base, h, state_tilt);
    rep.predicted_right = right;
    rep.predicted_left = left;
    rep.predicted_gap = std::abs(right - left);
    rep.kink = rep.gap > threshold;
    return rep;
}

std::string kink_csv(const KinkReport& r) {
    std::string out = csv_row({"record", "epsilon", "eta_star", "quotient", "value"});
    out += csv_row({"base", "0", format_double(r.eta_star0), "", ""});
    for (const auto& p : r.points) {
        out += csv_row({"point", format_double(p.epsilon), format_double(p.eta_star), format_double(p.quotient), ""});
    }
    out += csv_row({"right_limit", "", "", "", format_double(r.right_limit)});
    out += csv_row({"left_limit", "", "", "", format_double(r.left_limit)});
    out += csv_row({"gap", "", "", "", format_double(r.gap)});
    out += csv_row({"predicted_right", "", "", "", format_double(r.predicted_right)});
    out += csv_row({"predicted_left", "", "", "", format_double(r.predicted_left)});
    out += csv_row({"predicted_gap", "", "", "", format_double(r.predicted_gap)});
    out += csv_row({"threshold", "", "", "", format_double(r.threshold)});
    out += csv_row({"kink", "", "", "", r.kink ? "true" : "false"});
    return out;
}

namespace {

// E_P[g] = sum_s f0(s) sum_a g(s, a)
double expect(const TabularMdp& mdp, const Eigen::MatrixXd& g) {
    return mdp.init_dist.dot(g.rowwise().sum());
}

} // namespace

DecompositionTerms decomposition_diagnostic(const TabularMdp& base, const RewardDirection& h, double eps,
                                            const Eigen::VectorXd& state_tilt) {
    const TabularMdp pert = perturb(base, h, eps, state_tilt);
    const auto opt0 = optimal_policy(base);
    const auto opte = optimal_policy(pert);
    const Eigen::MatrixXd& pi = opt0.policy.probs();
    const Eigen::MatrixXd& pie = opte.policy.probs();

    DecompositionTerms out;
    out.epsilon = eps;
    out.policy_changed = !(opte.policy == opt0.policy);

    // Q(P_0; pi) with pi = pi*(P_0) is Q*(P_0); Delta(P_0)(pi) vanishes.
    const Eigen::MatrixXd& q0_pi = opt0.values.q;
    const Eigen::MatrixXd delta0 = Eigen::MatrixXd::Zero(base.n_states, base.n_actions);
    const Eigen::MatrixXd qe_star = opte.values.q;
    const Eigen::MatrixXd qe_pi = out.policy_changed ? solve_q(pert, opt0.policy).q : qe_star;
    const Eigen::MatrixXd deltae = qe_star - qe_pi;

    out.delta1 = expect(pert, deltae.cwiseProduct(pie - pi)) - expect(base, delta0.cwiseProduct(pi - pi));
    out.delta2 = expect(pert, q0_pi.cwiseProduct(pie - pi));
    out.delta3 = expect(pert, (deltae - delta0).cwiseProduct(pi));
    out.fixed_policy = expect(pert, qe_pi.cwiseProduct(pi)) - expect(base, q0_pi.cwiseProduct(pi));
    out.total = expect(pert, qe_star.cwiseProduct(pie)) - expect(base, q0_pi.cwiseProduct(pi));
    out.remainder = out.total - (out.delta1 + out.delta2 + out.delta3 + out.fixed_policy);
    return out;
}

McReport mc_experiment(const TabularMdp& mdp, const PolicyTable& behavior, const EstimatorConfig& cfg, int n_episodes,
                       int horizon, int replications, std::uint64_t seed) {
    if (replications <= 0 || n_episodes <= 0 || horizon <= 0) {
        throw ValidationError("mc_experiment: replications, episodes and horizon must be positive");
    }
    if (cfg.estimator != "dr" && cfg.estimator != "mis") {
        throw ValidationError("unknown estimator '" + cfg.estimator + "' (expected dr or mis)");
    }
    const TabularMdp model = with_stationary_init(mdp, behavior);
    const auto opt = optimal_policy(model);
    if (cfg.require_unique && !opt.unique()) {
        std::string states;
        for (int s : opt.tied_states) {
            states += (states.empty() ? "" : ",") + std::to_string(s);
        }
        throw PreconditionError("efficiency experiment needs a unique optimal policy; tied optimal actions at states {" +
                                states + "} put the model in the non-differentiable regime");
    }
    const PolicyTable& pi_star = opt.policy;
    const double gamma = model.discount;

    McReport rep;
    rep.replications = replications;
    rep.n = static_cast<std::size_t>(n_episodes) * static_cast<std::size_t>(horizon);
    rep.eta_star = model.init_dist.dot(opt.values.v);
    rep.sigma2_eff = eif_variance_exact(model, behavior, pi_star);
    rep.estimates.assign(static_cast<std::size_t>(replications), 0.0);
    rep.std_errs.assign(static_cast<std::size_t>(replications), 0.0);
    rep.covered.assign(static_cast<std::size_t>(replications), false);
    std::vector<char> matched(static_cast<std::size_t>(replications), 0);
    const NuisanceSet oracle = true_nuisances(model, behavior, pi_star);

    parallel_for(replications, cfg.jobs, [&](int r) {
        const auto ds = simulate(model, behavior, n_episodes, horizon, cfg.burn_in,
                                 derive_seed(seed, static_cast<std::uint64_t>(r)));
        const NuisanceSet nz = cfg.target == TargetMode::oracle ? oracle : fit_nuisances(ds, gamma);
        const EstimateReport est = cfg.estimator == "dr"
                                       ? dr_estimate(ds, nz, gamma, cfg.level)
                                       : mis_estimate(ds, nz.omega_hat, nz.target, nz.b_hat, gamma, cfg.level);
        const auto i = static_cast<std::size_t>(r);
        rep.estimates[i] = est.eta_hat;
        rep.std_errs[i] = est.std_err;
        rep.covered[i] = est.ci_low <= rep.eta_star && rep.eta_star <= est.ci_high;
        matched[i] = nz.target == pi_star ? 1 : 0;
    });

    const double m = static_cast<double>(replications);
    double sum = 0.0;
    double hits = 0.0;
    double matches = 0.0;
    for (std::size_t i = 0; i < rep.estimates.size(); ++i) {
        sum += rep.estimates[i];
        hits += rep.covered[i] ? 1.0 : 0.0;
        matches += matched[i];
    }
    rep.mean_estimate = sum / m;
    rep.bias = rep.mean_estimate - rep.eta_star;
    rep.coverage = hits / m;
    rep.policy_match_rate = matches / m;
    if (replications >= 2) {
        double ss = 0.0;
        for (double x : rep.estimates) {
            ss += (x - rep.mean_estimate) * (x - rep.mean_estimate);
        }
        rep.empirical_var_scaled = static_cast<double>(rep.n) * ss / (m - 1.0);
        rep.var_se = rep.empirical_var_scaled * std::sqrt(2.0 / (m - 1.0));
    }
    rep.var_ratio = rep.sigma2_eff > 0.0 ? rep.empirical_var_scaled / rep.sigma2_eff
                                         : std::numeric_limits<double>::quiet_NaN();
    return rep;
}

std::string mc_summary_csv(const std::string& label, const McReport& r) {
    std::string out = csv_row({"label", "replications", "n", "eta_star", "mean_estimate", "bias", "empirical_var_scaled",
                               "sigma2_eff", "var_ratio", "var_se", "coverage", "policy_match_rate"});
    out += csv_row({label, std::to_string(r.replications), std::to_string(r.n), format_double(r.eta_star),
                    format_double(r.mean_estimate), format_double(r.bias), format_double(r.empirical_var_scaled),
                    format_double(r.sigma2_eff), format_double(r.var_ratio), format_double(r.var_se),
                    format_double(r.coverage), format_double(r.policy_match_rate)});
    return out;
}

std::string mc_replications_csv(const McReport& r) {
    std::string out = csv_row({"replication", "eta_hat", "std_err", "covered"});
    for (std::size_t i = 0; i < r.estimates.size(); ++i) {
        out += csv_row({std::to_string(i), format_double(r.estimates[i]), format_double(r.std_errs[i]),
                        r.covered[i] ? "true" : "false"});
    }
    return out;
}

} // namespace effope
