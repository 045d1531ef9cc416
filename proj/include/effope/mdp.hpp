#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace effope {

inline constexpr double kSumTolerance = 1e-12;

struct RewardAtom {
    double value = 0.0;
    double prob = 1.0;

    friend bool operator==(const RewardAtom&, const RewardAtom&) = default;
};

/// Finite-support reward law of one state-action pair.
using RewardDist = std::vector<RewardAtom>;

double mean(const RewardDist& dist);

/**
 * Finite discounted MDP.
 *
 * `transition` is an (n_states * n_actions) x n_states table whose row
 * `sa(s, a)` is the next-state law of the pair (s, a). `reward` is indexed the
 * same way. The struct is a plain aggregate so malformed instances can be
 * built and diagnosed with validate_mdp().
 */
struct TabularMdp {
    int n_states = 0;
    int n_actions = 0;
    Eigen::MatrixXd transition;
    std::vector<RewardDist> reward;
    double discount = 0.9;
    Eigen::VectorXd init_dist;
    /// Declared bound c_R: every reward value lies in [-c_R, c_R].
    double reward_bound = 1.0;

    [[nodiscard]] int sa(int s, int a) const { return s * n_actions + a; }
    [[nodiscard]] double prob(int s, int a, int next) const { return transition(sa(s, a), next); }
    [[nodiscard]] const RewardDist& reward_at(int s, int a) const { return reward[sa(s, a)]; }
    [[nodiscard]] RewardDist& reward_at(int s, int a) { return reward[sa(s, a)]; }

    /// E[R | s, a] as an n_states x n_actions table.
    [[nodiscard]] Eigen::MatrixXd mean_rewards() const;
    /// Smallest mean reward over all pairs, clipped at zero (the lower reward bound).
    [[nodiscard]] double reward_lower_bound() const;

    friend bool operator==(const TabularMdp& lhs, const TabularMdp& rhs);
};

/// Zero-filled model with uniform initial law and single zero-reward atoms.
TabularMdp make_mdp(int n_states, int n_actions, double discount);

struct Violation {
    std::string kind;      // "transition_row", "reward_probs", "reward_bound", "init_dist", "discount", "shape"
    std::string location;  // e.g. "(0,1)" or "atom 2 of (3,0)"
    double magnitude = 0.0;

    [[nodiscard]] std::string message() const;
};

/// Every broken invariant of `mdp`; empty iff the model is well formed.
std::vector<Violation> validate_mdp(const TabularMdp& mdp);

/// Throws ValidationError listing all violations.
void require_valid(const TabularMdp& mdp);

enum class PolicyKind { stochastic, deterministic };

/// Per-state action distributions. Rows sum to one; the kind is derived.
class PolicyTable {
public:
    PolicyTable() = default;

    /// Validates row sums and nonnegativity (tolerance 1e-12).
    static PolicyTable from_probs(Eigen::MatrixXd probs);
    static PolicyTable deterministic(const std::vector<int>& actions, int n_actions);
    static PolicyTable uniform(int n_states, int n_actions);

    [[nodiscard]] int n_states() const { return static_cast<int>(probs_.rows()); }
    [[nodiscard]] int n_actions() const { return static_cast<int>(probs_.cols()); }
    [[nodiscard]] double operator()(int s, int a) const { return probs_(s, a); }
    [[nodiscard]] const Eigen::MatrixXd& probs() const { return probs_; }
    [[nodiscard]] PolicyKind kind() const { return kind_; }
    [[nodiscard]] bool is_deterministic() const { return kind_ == PolicyKind::deterministic; }

    /// Chosen action at `s`; requires a deterministic policy.
    [[nodiscard]] int action(int s) const;
    [[nodiscard]] std::vector<int> actions() const;

    /// (1 - eps) * row + eps / n_actions, so every entry is at least eps / n_actions.
    [[nodiscard]] PolicyTable eps_soft(double eps) const;

    friend bool operator==(const PolicyTable& lhs, const PolicyTable& rhs);

private:
    explicit PolicyTable(Eigen::MatrixXd probs);

    Eigen::MatrixXd probs_;
    PolicyKind kind_ = PolicyKind::stochastic;
};

/// Throws DimensionError when the policy shape does not match the model.
void require_compatible(const TabularMdp& mdp, const PolicyTable& pi);

/// Throws ValidationError unless `dist` is a probability vector of length n.
void require_distribution(const Eigen::VectorXd& dist, int n, const std::string& what);

} // namespace effope
