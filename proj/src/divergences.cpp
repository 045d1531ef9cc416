#include "effope/divergences.hpp"

#include "effope/builtin.hpp"
#include "effope/csv.hpp"
#include "effope/error.hpp"
#include "effope/parallel.hpp"
#include "effope/rng.hpp"
#include "effope/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace effope {

namespace {

void require_same_shape(const PolicyTable& pi1, const PolicyTable& pi2) {
    if (pi1.n_states() != pi2.n_states() || pi1.n_actions() != pi2.n_actions()) {
        throw DimensionError("policies have different shapes");
    }
}

void require_positive_init(const TabularMdp& mdp) {
    if (!(mdp.init_dist.minCoeff() > 0.0)) {
        throw ValidationError("unsupported state in reference distribution: occupancy ratios need a positive f0");
    }
}

std::string digest_of(const TabularMdp& mdp) {
    return "S" + std::to_string(mdp.n_states) + "A" + std::to_string(mdp.n_actions);
}

} // namespace

Eigen::VectorXd total_variation(const PolicyTable& pi1, const PolicyTable& pi2) {
    require_same_shape(pi1, pi2);
    return 0.5 * (pi2.probs() - pi1.probs()).cwiseAbs().rowwise().sum();
}

DivergenceProfile divergence_profile(const PolicyTable& pi1, const PolicyTable& pi2) {
    require_same_shape(pi1, pi2);
    DivergenceProfile out;
    out.tv = total_variation(pi1, pi2);
    out.kl = Eigen::VectorXd::Zero(pi1.n_states());
    out.chi2 = Eigen::VectorXd::Zero(pi1.n_states());
    for (int s = 0; s < pi1.n_states(); ++s) {
        for (int a = 0; a < pi1.n_actions(); ++a) {
            const double p = pi2(s, a);
            const double q = pi1(s, a);
            if (p > 0.0 && !(q > 0.0)) {
                throw ValidationError("support violation at (" + std::to_string(s) + "," + std::to_string(a) +
                                      "): reference policy has zero mass");
            }
            if (q > 0.0) {
                if (p > 0.0) {
                    out.kl(s) += p * std::log(p / q);
                }
                out.chi2(s) += (p - q) * (p - q) / q;
            }
        }
        out.kl(s) = std::max(0.0, out.kl(s));
    }
    return out;
}

double policy_sup_distance(const PolicyTable& pi1, const PolicyTable& pi2) {
    require_same_shape(pi1, pi2);
    return (pi2.probs() - pi1.probs()).cwiseAbs().maxCoeff();
}

BoundCheckReport make_report(std::string lemma, double lhs, double rhs, std::string digest) {
    BoundCheckReport r;
    r.lemma = std::move(lemma);
    r.lhs = lhs;
    r.rhs = rhs;
    r.slack = rhs - lhs;
    r.holds = lhs <= rhs + kBoundSlackTolerance;
    r.inputs_digest = std::move(digest);
    return r;
}

SoftClass soft_class(double eps, int n_actions) {
    if (!(eps > 0.0 && eps <= 1.0)) {
        throw ValidationError("eps-soft class needs eps in (0, 1]");
    }
    const double floor = eps / n_actions;
    return {eps, floor, 1.0 - eps + floor};
}

void require_in_class(const PolicyTable& pi, const SoftClass& cls, const std::string& name) {
    const double lo = pi.probs().minCoeff();
    const double hi = pi.probs().maxCoeff();
    if (lo < cls.lower - 1e-12 || hi > cls.upper + 1e-12) {
        throw ValidationError(name + " is outside the eps-soft class (eps = " + format_double(cls.eps) +
                              "): entries span [" + format_double(lo) + ", " + format_double(hi) + "]");
    }
}

double bhattacharyya_uniform(const Eigen::VectorXd& dist) {
    return (dist.array() / static_cast<double>(dist.size())).sqrt().sum();
}

UpperBoundCheck check_occupancy_upper_bound(const TabularMdp& mdp, const PolicyTable& pi1,
                                            const PolicyTable& pi2) {
    require_positive_init(mdp);
    const auto& f = mdp.init_dist;
    const Eigen::VectorXd w1 = occupancy_ratio(mdp, pi1, f).omega;
    const Eigen::VectorXd w2 = occupancy_ratio(mdp, pi2, f).omega;
    const Eigen::VectorXd tv = total_variation(pi1, pi2);
    const double g = mdp.discount;
    const double rhs = 2.0 * g / (1.0 - g) * w1.cwiseProduct(f).dot(tv);
    const Eigen::VectorXd gap = (w2 - w1).cwiseAbs();
    UpperBoundCheck out;
    out.counting = make_report("occupancy_upper_counting", gap.sum(), rhs, digest_of(mdp));
    out.weighted = make_report("occupancy_upper_weighted", gap.dot(f), rhs, digest_of(mdp));
    return out;
}

LowerBoundCheck check_occupancy_lower_bound(const TabularMdp& mdp, const PolicyTable& pi1,
                                            const PolicyTable& pi2, double eps) {
    require_positive_init(mdp);
    const SoftClass cls = soft_class(eps, mdp.n_actions);
    require_in_class(pi1, cls, "pi1");
    require_in_class(pi2, cls, "pi2");
    const auto& f = mdp.init_dist;
    const Eigen::VectorXd w1 = occupancy_ratio(mdp, pi1, f).omega;
    const Eigen::VectorXd w2 = occupancy_ratio(mdp, pi2, f).omega;
    const auto prof = divergence_profile(pi1, pi2);
    const double dpi = policy_sup_distance(pi1, pi2);
    const double lo = cls.lower;
    const double hi = cls.upper;
    const double chi2_mean = w1.cwiseProduct(f).dot(prof.chi2);
    const double numer = 2.0 * mdp.discount * std::sqrt(std::pow(lo, 1.5) * std::pow(hi, -1.5) * dpi * chi2_mean);
    const double denom = std::pow(lo, -0.5) * hi + lo * lo * std::pow(hi, -2.5) * dpi;

    LowerBoundCheck out;
    out.bound = (numer / denom) * f.array().sqrt();
    out.gap = (w2 - w1).cwiseAbs();
    out.holds.resize(static_cast<std::size_t>(mdp.n_states));
    double worst_slack = std::numeric_limits<double>::infinity();
    double best = std::numeric_limits<double>::infinity();
    for (int s = 0; s < mdp.n_states; ++s) {
        const auto rep = make_report("occupancy_lower", out.bound(s), out.gap(s), digest_of(mdp) + "s" + std::to_string(s));
        out.holds[static_cast<std::size_t>(s)] = rep.holds;
        if (s == 0 || rep.slack < worst_slack) {
            worst_slack = rep.slack;
            out.worst = rep;
        }
        if (out.bound(s) > 0.0) {
            best = std::min(best, out.gap(s) / out.bound(s));
        }
    }
    out.best_constant = std::isfinite(best) ? best : 0.0;
    return out;
}

SandwichCheck check_policy_q_sandwich(const TabularMdp& mdp, const PolicyTable& pi1, const PolicyTable& pi2,
                                      double eps) {
    require_positive_init(mdp);
    const SoftClass cls = soft_class(eps, mdp.n_actions);
    require_in_class(pi1, cls, "pi1");
    require_in_class(pi2, cls, "pi2");
    const auto& f = mdp.init_dist;
    const double g = mdp.discount;
    const Eigen::VectorXd w1 = occupancy_ratio(mdp, pi1, f).omega;
    const Eigen::VectorXd w2 = occupancy_ratio(mdp, pi2, f).omega;
    const double tv_mean = w1.cwiseProduct(f).dot(total_variation(pi1, pi2));
    const double dpi = policy_sup_distance(pi1, pi2);
    const double lo = cls.lower;
    const double hi = cls.upper;
    const double c_r_lower = mdp.reward_lower_bound();
    const double c_r_upper = mdp.reward_bound;

    const double front = c_r_lower * lo * lo * mdp.n_actions * dpi / (2.0 * hi * hi * (1.0 - g));
    const double bc = bhattacharyya_uniform(f);
    const double lower_factor = 2.0 * g * std::sqrt(std::pow(lo, 1.5) * std::pow(hi, -1.5) * dpi) * bc /
                                (std::pow(lo, -0.5) * hi + lo * lo * std::pow(hi, -2.5) * dpi);
    const double q_gap = (solve_q(mdp, pi2).q - solve_q(mdp, pi1).q).cwiseAbs().maxCoeff();

    SandwichCheck out;
    out.line1 = front * lower_factor * tv_mean;
    out.line2 = front * (w2 - w1).cwiseAbs().sum();
    out.line3 = c_r_upper * dpi / ((1.0 - g) * (1.0 - g)) + q_gap * (2.0 + tv_mean / (1.0 - g));
    const auto digest = digest_of(mdp);
    out.comparisons.push_back(make_report("q_sandwich_line1<=line2", out.line1, out.line2, digest));
    out.comparisons.push_back(make_report("q_sandwich_line2<=line3", out.line2, out.line3, digest));
    out.comparisons.push_back(make_report("q_sandwich_line1<=line3", out.line1, out.line3, digest));
    return out;
}

double verify_performance_difference(const TabularMdp& mdp, const PolicyTable& pi1, const PolicyTable& pi2,
                                     int s0) {
    if (s0 < 0 || s0 >= mdp.n_states) {
        throw DimensionError("verify_performance_difference: start state out of range");
    }
    const ValuePair v1 = solve_q(mdp, pi1);
    const ValuePair v2 = solve_q(mdp, pi2);
    Eigen::VectorXd start = Eigen::VectorXd::Zero(mdp.n_states);
    start(s0) = 1.0;
    const Eigen::VectorXd d = discounted_visitation(mdp, pi2, start).d;
    const Eigen::VectorXd adv = advantage(v1).cwiseProduct(pi2.probs()).rowwise().sum();
    const double lhs = v2.v(s0) - v1.v(s0);
    const double rhs = d.dot(adv) / (1.0 - mdp.discount);
    return std::abs(lhs - rhs);
}

DecompositionSides policy_decomposition_sides(const TabularMdp& mdp, const PolicyTable& pi1,
                                              const PolicyTable& pi2, const Eigen::VectorXd& f) {
    require_compatible(mdp, pi1);
    require_compatible(mdp, pi2);
    if (f.size() != mdp.n_states) {
        throw DimensionError("policy decomposition: test function length mismatch");
    }
    for (int s = 0; s < mdp.n_states; ++s) {
        for (int a = 0; a < mdp.n_actions; ++a) {
            if (pi2(s, a) > 0.0 && !(pi1(s, a) > 0.0)) {
                throw ValidationError("support violation at (" + std::to_string(s) + "," + std::to_string(a) +
                                      "): importance ratio pi2/pi1 is unbounded");
            }
        }
    }
    // delta(s, a) = E[R | s, a] + gamma E[f(S') | s, a] - f(s)
    const Eigen::MatrixXd r = mdp.mean_rewards();
    Eigen::MatrixXd delta(mdp.n_states, mdp.n_actions);
    for (int s = 0; s < mdp.n_states; ++s) {
        for (int a = 0; a < mdp.n_actions; ++a) {
            delta(s, a) = r(s, a) + mdp.discount * mdp.transition.row(mdp.sa(s, a)).dot(f) - f(s);
        }
    }
    const Eigen::VectorXd delta_pi2 = delta.cwiseProduct(pi2.probs()).rowwise().sum();
    Eigen::VectorXd weighted(mdp.n_states);
    for (int s = 0; s < mdp.n_states; ++s) {
        double acc = 0.0;
        for (int a = 0; a < mdp.n_actions; ++a) {
            if (pi1(s, a) > 0.0) {
                acc += pi1(s, a) * (pi2(s, a) / pi1(s, a)) * delta(s, a);
            }
        }
        weighted(s) = acc;
    }
    // <omega, g>_P = sum_s omega(s) f0(s) g(s) = sum_s d(s) g(s)
    const Eigen::VectorXd d1 = discounted_visitation(mdp, pi1, mdp.init_dist).d;
    const Eigen::VectorXd d2 = discounted_visitation(mdp, pi2, mdp.init_dist).d;
    const double correction = (d2 - d1).dot(delta_pi2);

    DecompositionSides out;
    out.lhs = d2.dot(delta_pi2);
    out.first = d1.dot(delta_pi2) + correction;
    out.second = d1.dot(weighted) + correction;
    out.telescoped = (1.0 - mdp.discount) * (mdp.init_dist.dot(solve_q(mdp, pi2).v) - mdp.init_dist.dot(f));
    return out;
}

double verify_policy_decomposition(const TabularMdp& mdp, const PolicyTable& pi1, const PolicyTable& pi2,
                                   const Eigen::VectorXd& f) {
    const auto sides = policy_decomposition_sides(mdp, pi1, pi2, f);
    return std::max({std::abs(sides.lhs - sides.first), std::abs(sides.lhs - sides.second),
                     std::abs(sides.lhs - sides.telescoped)});
}

namespace {

PolicyTable random_soft_policy(RngStream& rng, int n_states, int n_actions, double eps) {
    Eigen::MatrixXd probs(n_states, n_actions);
    for (int s = 0; s < n_states; ++s) {
        probs.row(s) = ((1.0 - eps) * dirichlet_uniform(rng, n_actions).array() + eps / n_actions).transpose();
        probs.row(s) /= probs.row(s).sum();
    }
    return PolicyTable::from_probs(std::move(probs));
}

} // namespace

FuzzInstance fuzz_instance(std::uint64_t seed, int max_states, int max_actions) {
    RngStream rng(seed, 1);
    const int ns = 2 + rng.below(std::max(1, max_states - 1));
    const int na = 2 + rng.below(std::max(1, max_actions - 1));
    RandomMdpSpec spec{ns, na, 0.5 + 0.45 * rng.uniform(), 1 + rng.below(3)};
    FuzzInstance inst;
    inst.mdp = random_mdp(spec, derive_seed(seed, 2));
    inst.mdp = with_stationary_init(inst.mdp, PolicyTable::uniform(ns, na));
    inst.eps = 0.05 + 0.45 * rng.uniform();
    inst.pi1 = random_soft_policy(rng, ns, na, inst.eps);
    inst.pi2 = random_soft_policy(rng, ns, na, inst.eps);
    inst.f = Eigen::VectorXd(ns);
    for (int s = 0; s < ns; ++s) {
        inst.f(s) = 2.0 * rng.uniform() - 1.0;
    }
    return inst;
}

std::vector<FuzzRow> fuzz_lemmas(const FuzzConfig& cfg) {
    std::vector<std::vector<FuzzRow>> per_instance(static_cast<std::size_t>(cfg.instances));
    parallel_for(cfg.instances, cfg.jobs, [&](int i) {
        const std::uint64_t seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(i));
        const auto inst = fuzz_instance(seed, cfg.max_states, cfg.max_actions);
        auto& rows = per_instance[static_cast<std::size_t>(i)];
        auto push = [&](const BoundCheckReport& r) {
            rows.push_back({seed, r.lemma, r.lhs, r.rhs, r.slack, r.holds});
        };

        const auto prof = divergence_profile(inst.pi1, inst.pi2);
        double pinsker = -std::numeric_limits<double>::infinity();
        for (int s = 0; s < inst.mdp.n_states; ++s) {
            pinsker = std::max({pinsker, 2.0 * prof.tv(s) * prof.tv(s) - prof.kl(s), prof.kl(s) - prof.chi2(s)});
        }
        push(make_report("pinsker", pinsker, 0.0));

        double pd = 0.0;
        for (int s0 = 0; s0 < inst.mdp.n_states; ++s0) {
            pd = std::max(pd, verify_performance_difference(inst.mdp, inst.pi1, inst.pi2, s0));
        }
        push(make_report("performance_difference", pd, 1e-9));
        push(make_report("policy_decomposition",
                         verify_policy_decomposition(inst.mdp, inst.pi1, inst.pi2, inst.f), 1e-9));

        const auto upper = check_occupancy_upper_bound(inst.mdp, inst.pi1, inst.pi2);
        push(upper.counting);
        push(upper.weighted);
        push(check_occupancy_lower_bound(inst.mdp, inst.pi1, inst.pi2, inst.eps).worst);
        for (const auto& r : check_policy_q_sandwich(inst.mdp, inst.pi1, inst.pi2, inst.eps).comparisons) {
            push(r);
        }
    });
    std::vector<FuzzRow> out;
    for (auto& rows : per_instance) {
        out.insert(out.end(), rows.begin(), rows.end());
    }
    return out;
}

std::string fuzz_csv(const std::vector<FuzzRow>& rows) {
    std::string out = csv_row({"seed", "lemma", "lhs", "rhs", "slack", "holds"});
    for (const auto& r : rows) {
        out += csv_row({std::to_string(r.seed), r.lemma, format_double(r.lhs), format_double(r.rhs),
                        format_double(r.slack), r.holds ? "true" : "false"});
    }
    return out;
}

} // namespace effope
