#include "effope/mdp.hpp"

#include "effope/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace effope {

namespace {

std::string pair_label(int s, int a) {
    return "(" + std::to_string(s) + "," + std::to_string(a) + ")";
}

} // namespace

double mean(const RewardDist& dist) {
    double m = 0.0;
    for (const auto& atom : dist) {
        m += atom.value * atom.prob;
    }
    return m;
}

Eigen::MatrixXd TabularMdp::mean_rewards() const {
    Eigen::MatrixXd r(n_states, n_actions);
    for (int s = 0; s < n_states; ++s) {
        for (int a = 0; a < n_actions; ++a) {
            r(s, a) = mean(reward_at(s, a));
        }
    }
    return r;
}

double TabularMdp::reward_lower_bound() const {
    if (n_states == 0 || n_actions == 0) {
        return 0.0;
    }
    return std::max(0.0, mean_rewards().minCoeff());
}

bool operator==(const TabularMdp& lhs, const TabularMdp& rhs) {
    return lhs.n_states == rhs.n_states && lhs.n_actions == rhs.n_actions &&
           lhs.discount == rhs.discount && lhs.reward_bound == rhs.reward_bound &&
           lhs.transition.rows() == rhs.transition.rows() &&
           lhs.transition.cols() == rhs.transition.cols() && lhs.transition == rhs.transition &&
           lhs.init_dist.size() == rhs.init_dist.size() && lhs.init_dist == rhs.init_dist &&
           lhs.reward == rhs.reward;
}

TabularMdp make_mdp(int n_states, int n_actions, double discount) {
    if (n_states <= 0 || n_actions <= 0) {
        throw DimensionError("make_mdp: state and action counts must be positive");
    }
    TabularMdp mdp;
    mdp.n_states = n_states;
    mdp.n_actions = n_actions;
    mdp.discount = discount;
    mdp.transition = Eigen::MatrixXd::Zero(n_states * n_actions, n_states);
    mdp.reward.assign(static_cast<std::size_t>(n_states * n_actions), RewardDist{{0.0, 1.0}});
    mdp.init_dist = Eigen::VectorXd::Constant(n_states, 1.0 / n_states);
    return mdp;
}

std::string Violation::message() const {
    std::ostringstream os;
    os.precision(17);
    os << kind << " at " << location << ": magnitude " << magnitude;
    return os.str();
}

std::vector<Violation> validate_mdp(const TabularMdp& mdp) {
    std::vector<Violation> out;
    const int ns = mdp.n_states;
    const int na = mdp.n_actions;
    if (ns <= 0 || na <= 0) {
        out.push_back({"shape", "counts", static_cast<double>(std::min(ns, na))});
        return out;
    }
    if (mdp.transition.rows() != ns * na || mdp.transition.cols() != ns) {
        out.push_back({"shape", "transition", static_cast<double>(mdp.transition.rows())});
        return out;
    }
    if (mdp.reward.size() != static_cast<std::size_t>(ns * na)) {
        out.push_back({"shape", "reward", static_cast<double>(mdp.reward.size())});
        return out;
    }
    if (mdp.init_dist.size() != ns) {
        out.push_back({"shape", "init_dist", static_cast<double>(mdp.init_dist.size())});
        return out;
    }
    if (!(mdp.discount > 0.0 && mdp.discount < 1.0)) {
        out.push_back({"discount", "discount outside (0,1)", mdp.discount});
    }
    for (int s = 0; s < ns; ++s) {
        for (int a = 0; a < na; ++a) {
            const auto row = mdp.transition.row(mdp.sa(s, a));
            if (!row.allFinite() || row.minCoeff() < 0.0) {
                out.push_back({"transition_entry", pair_label(s, a), row.minCoeff()});
            }
            const double excess = row.sum() - 1.0;
            if (!(std::abs(excess) <= kSumTolerance)) {
                out.push_back({"transition_row", pair_label(s, a), excess});
            }
            const auto& dist = mdp.reward_at(s, a);
            if (dist.empty()) {
                out.push_back({"reward_probs", pair_label(s, a), -1.0});
                continue;
            }
            double total = 0.0;
            for (std::size_t k = 0; k < dist.size(); ++k) {
                const auto& atom = dist[k];
                total += atom.prob;
                if (!(atom.prob >= 0.0 && atom.prob <= 1.0)) {
                    out.push_back({"reward_probs",
                                   "atom " + std::to_string(k) + " of " + pair_label(s, a), atom.prob});
                }
                if (!(std::abs(atom.value) <= mdp.reward_bound)) {
                    out.push_back({"reward_bound",
                                   "atom " + std::to_string(k) + " of " + pair_label(s, a),
                                   std::abs(atom.value) - mdp.reward_bound});
                }
            }
            if (!(std::abs(total - 1.0) <= kSumTolerance)) {
                out.push_back({"reward_probs", pair_label(s, a), total - 1.0});
            }
        }
    }
    const double init_excess = mdp.init_dist.sum() - 1.0;
    if (mdp.init_dist.minCoeff() < 0.0) {
        out.push_back({"init_dist", "negative entry", mdp.init_dist.minCoeff()});
    }
    if (!(std::abs(init_excess) <= kSumTolerance)) {
        out.push_back({"init_dist", "sum", init_excess});
    }
    return out;
}

void require_valid(const TabularMdp& mdp) {
    const auto violations = validate_mdp(mdp);
    if (violations.empty()) {
        return;
    }
    std::string msg = "invalid MDP:";
    for (const auto& v : violations) {
        msg += " [" + v.message() + "]";
    }
    throw ValidationError(msg);
}

PolicyTable::PolicyTable(Eigen::MatrixXd probs) : probs_(std::move(probs)) {
    bool one_hot = true;
    for (Eigen::Index s = 0; s < probs_.rows() && one_hot; ++s) {
        int ones = 0;
        for (Eigen::Index a = 0; a < probs_.cols(); ++a) {
            const double p = probs_(s, a);
            if (p == 1.0) {
                ++ones;
            } else if (p != 0.0) {
                one_hot = false;
            }
        }
        one_hot = one_hot && ones == 1;
    }
    kind_ = one_hot ? PolicyKind::deterministic : PolicyKind::stochastic;
}

PolicyTable PolicyTable::from_probs(Eigen::MatrixXd probs) {
    if (probs.rows() == 0 || probs.cols() == 0) {
        throw DimensionError("policy table must be non-empty");
    }
    for (Eigen::Index s = 0; s < probs.rows(); ++s) {
        if (!probs.row(s).allFinite() || probs.row(s).minCoeff() < 0.0) {
            throw ValidationError("policy row " + std::to_string(s) + " has a negative or non-finite entry");
        }
        const double excess = probs.row(s).sum() - 1.0;
        if (std::abs(excess) > kSumTolerance) {
            std::ostringstream os;
            os.precision(17);
            os << "policy row " << s << " sums to 1" << (excess > 0 ? "+" : "") << excess;
            throw ValidationError(os.str());
        }
    }
    return PolicyTable(std::move(probs));
}

PolicyTable PolicyTable::deterministic(const std::vector<int>& actions, int n_actions) {
    Eigen::MatrixXd probs = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(actions.size()), n_actions);
    for (std::size_t s = 0; s < actions.size(); ++s) {
        if (actions[s] < 0 || actions[s] >= n_actions) {
            throw DimensionError("deterministic policy: action out of range at state " + std::to_string(s));
        }
        probs(static_cast<Eigen::Index>(s), actions[s]) = 1.0;
    }
    return from_probs(std::move(probs));
}

PolicyTable PolicyTable::uniform(int n_states, int n_actions) {
    return from_probs(Eigen::MatrixXd::Constant(n_states, n_actions, 1.0 / n_actions));
}

int PolicyTable::action(int s) const {
    if (!is_deterministic()) {
        throw ValidationError("action() requires a deterministic policy");
    }
    Eigen::Index a = 0;
    probs_.row(s).maxCoeff(&a);
    return static_cast<int>(a);
}

std::vector<int> PolicyTable::actions() const {
    std::vector<int> out(static_cast<std::size_t>(n_states()));
    for (int s = 0; s < n_states(); ++s) {
        out[static_cast<std::size_t>(s)] = action(s);
    }
    return out;
}

PolicyTable PolicyTable::eps_soft(double eps) const {
    if (!(eps >= 0.0 && eps <= 1.0)) {
        throw ValidationError("eps_soft: eps must lie in [0,1]");
    }
    Eigen::MatrixXd soft = (1.0 - eps) * probs_;
    soft.array() += eps / static_cast<double>(n_actions());
    // Renormalize so rows meet the 1e-12 row-sum invariant exactly.
    for (Eigen::Index s = 0; s < soft.rows(); ++s) {
        soft.row(s) /= soft.row(s).sum();
    }
    return from_probs(std::move(soft));
}

bool operator==(const PolicyTable& lhs, const PolicyTable& rhs) {
    return lhs.probs_.rows() == rhs.probs_.rows() && lhs.probs_.cols() == rhs.probs_.cols() &&
           lhs.probs_ == rhs.probs_;
}

void require_compatible(const TabularMdp& mdp, const PolicyTable& pi) {
    if (pi.n_states() != mdp.n_states || pi.n_actions() != mdp.n_actions) {
        throw DimensionError("policy is " + std::to_string(pi.n_states()) + "x" +
                             std::to_string(pi.n_actions()) + " but the model has " +
                             std::to_string(mdp.n_states) + " states and " +
                             std::to_string(mdp.n_actions) + " actions");
    }
}

void require_distribution(const Eigen::VectorXd& dist, int n, const std::string& what) {
    if (dist.size() != n) {
        throw DimensionError(what + ": expected length " + std::to_string(n) + ", got " +
                             std::to_string(dist.size()));
    }
    if (!dist.allFinite() || dist.minCoeff() < 0.0 || std::abs(dist.sum() - 1.0) > 1e-10) {
        throw ValidationError(what + " is not a probability distribution");
    }
}

} // namespace effope
