#include "effope/solvers.hpp"

#include "effope/error.hpp"

#include <cmath>
#include <sstream>

namespace effope {

namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Reshape an (n_states * n_actions) vector indexed by sa(s, a) into an S x A table.
Eigen::MatrixXd as_table(const Eigen::VectorXd& flat, int n_states, int n_actions) {
    return Eigen::Map<const RowMajorMatrix>(flat.data(), n_states, n_actions);
}

Eigen::VectorXd flatten(const Eigen::MatrixXd& table) {
    RowMajorMatrix rm = table;
    return Eigen::Map<const Eigen::VectorXd>(rm.data(), rm.size());
}

void require_row_stochastic(const Eigen::MatrixXd& kernel) {
    if (kernel.rows() != kernel.cols() || kernel.rows() == 0) {
        throw DimensionError("kernel must be a non-empty square table");
    }
    for (Eigen::Index s = 0; s < kernel.rows(); ++s) {
        if (kernel.row(s).minCoeff() < 0.0 || std::abs(kernel.row(s).sum() - 1.0) > 1e-10) {
            throw ValidationError("kernel row " + std::to_string(s) + " is not a probability distribution");
        }
    }
}

} // namespace

Eigen::MatrixXd policy_kernel(const TabularMdp& mdp, const PolicyTable& pi) {
    require_compatible(mdp, pi);
    Eigen::MatrixXd kernel = Eigen::MatrixXd::Zero(mdp.n_states, mdp.n_states);
    for (int s = 0; s < mdp.n_states; ++s) {
        for (int a = 0; a < mdp.n_actions; ++a) {
            const double w = pi(s, a);
            if (w != 0.0) {
                kernel.row(s) += w * mdp.transition.row(mdp.sa(s, a));
            }
        }
    }
    return kernel;
}

int recurrent_class_count(const Eigen::MatrixXd& kernel) {
    const auto n = static_cast<Eigen::Index>(kernel.rows());
    // Boolean transitive closure; desk-scale state counts keep O(n^3) cheap.
    std::vector<std::vector<char>> reach(n, std::vector<char>(n, 0));
    for (Eigen::Index i = 0; i < n; ++i) {
        reach[i][i] = 1;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (kernel(i, j) > 0.0) {
                reach[i][j] = 1;
            }
        }
    }
    for (Eigen::Index k = 0; k < n; ++k) {
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!reach[i][k]) {
                continue;
            }
            for (Eigen::Index j = 0; j < n; ++j) {
                reach[i][j] = static_cast<char>(reach[i][j] | reach[k][j]);
            }
        }
    }
    std::vector<char> assigned(n, 0);
    int closed = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (assigned[i]) {
            continue;
        }
        bool is_closed = true;
        for (Eigen::Index j = 0; j < n; ++j) {
            const bool same_class = reach[i][j] && reach[j][i];
            if (same_class) {
                assigned[j] = 1;
            } else if (reach[i][j]) {
                is_closed = false;
            }
        }
        closed += is_closed ? 1 : 0;
    }
    return closed;
}

Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& kernel) {
    require_row_stochastic(kernel);
    const int classes = recurrent_class_count(kernel);
    if (classes != 1) {
        throw NonErgodicError("non-ergodic kernel: " + std::to_string(classes) +
                              " recurrent classes, stationary law is not unique");
    }
    const auto n = kernel.rows();
    Eigen::MatrixXd system(n + 1, n);
    system.topRows(n) = Eigen::MatrixXd::Identity(n, n) - kernel.transpose();
    system.row(n).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 1);
    rhs(n) = 1.0;
    Eigen::VectorXd mu = system.colPivHouseholderQr().solve(rhs);
    mu = mu.cwiseMax(0.0);
    mu /= mu.sum();
    const double residual = (kernel.transpose() * mu - mu).lpNorm<1>();
    if (!(residual < 1e-10)) {
        std::ostringstream os;
        os << "stationary solve residual " << residual << " exceeds 1e-10";
        throw InternalConsistencyError(os.str());
    }
    return mu;
}

Eigen::VectorXd policy_reward(const TabularMdp& mdp, const PolicyTable& pi) {
    require_compatible(mdp, pi);
    return mdp.mean_rewards().cwiseProduct(pi.probs()).rowwise().sum();
}

ValuePair solve_q(const TabularMdp& mdp, const PolicyTable& pi) {
    const Eigen::MatrixXd kernel = policy_kernel(mdp, pi);
    const Eigen::VectorXd r_pi = policy_reward(mdp, pi);
    const auto n = mdp.n_states;
    const Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n) - mdp.discount * kernel;
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(system);
    const Eigen::VectorXd v = lu.solve(r_pi);
    if (!v.allFinite()) {
        std::ostringstream os;
        os << "policy evaluation solve failed; reciprocal condition estimate " << lu.rcond();
        throw InternalConsistencyError(os.str());
    }
    const Eigen::VectorXd flat_r = flatten(mdp.mean_rewards());
    const Eigen::VectorXd q_flat = flat_r + mdp.discount * (mdp.transition * v);
    ValuePair vp;
    vp.q = as_table(q_flat, mdp.n_states, mdp.n_actions);
    vp.v = vp.q.cwiseProduct(pi.probs()).rowwise().sum();
    return vp;
}

Eigen::VectorXd bellman_backup(const TabularMdp& mdp, const PolicyTable& pi, const Eigen::VectorXd& v) {
    require_compatible(mdp, pi);
    if (v.size() != mdp.n_states) {
        throw DimensionError("bellman_backup: value table length mismatch");
    }
    return policy_reward(mdp, pi) + mdp.discount * (policy_kernel(mdp, pi) * v);
}

double bellman_residual(const TabularMdp& mdp, const PolicyTable& pi, const Eigen::MatrixXd& q) {
    const Eigen::VectorXd v = q.cwiseProduct(pi.probs()).rowwise().sum();
    const Eigen::VectorXd target = flatten(mdp.mean_rewards()) + mdp.discount * (mdp.transition * v);
    return (target - flatten(q)).cwiseAbs().maxCoeff();
}

double optimality_residual(const TabularMdp& mdp, const Eigen::MatrixXd& q) {
    const Eigen::VectorXd v = q.rowwise().maxCoeff();
    const Eigen::VectorXd target = flatten(mdp.mean_rewards()) + mdp.discount * (mdp.transition * v);
    return (target - flatten(q)).cwiseAbs().maxCoeff();
}

DiscountedVisitation discounted_visitation(const TabularMdp& mdp, const PolicyTable& pi,
                                           const Eigen::VectorXd& init) {
    require_distribution(init, mdp.n_states, "initial distribution");
    const Eigen::MatrixXd kernel = policy_kernel(mdp, pi);
    const auto n = mdp.n_states;
    const Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n) - mdp.discount * kernel.transpose();
    DiscountedVisitation out;
    out.d = (1.0 - mdp.discount) * system.partialPivLu().solve(init);
    return out;
}

OccupancyVector occupancy_ratio(const TabularMdp& mdp, const PolicyTable& pi,
                                const Eigen::VectorXd& ref_dist) {
    require_distribution(ref_dist, mdp.n_states, "reference distribution");
    for (Eigen::Index s = 0; s < ref_dist.size(); ++s) {
        if (!(ref_dist(s) > 0.0)) {
            throw ValidationError("unsupported state in reference distribution: state " + std::to_string(s));
        }
    }
    const auto visitation = discounted_visitation(mdp, pi, ref_dist);
    OccupancyVector out;
    out.omega = visitation.d.cwiseQuotient(ref_dist);
    out.ref_dist = ref_dist;
    return out;
}

PolicyValueRoutes policy_value_routes(const TabularMdp& mdp, const PolicyTable& pi) {
    PolicyValueRoutes routes;
    routes.q_route = mdp.init_dist.dot(solve_q(mdp, pi).v);
    const Eigen::VectorXd r_pi = policy_reward(mdp, pi);
    if (mdp.init_dist.minCoeff() > 0.0) {
        const auto occ = occupancy_ratio(mdp, pi, mdp.init_dist);
        routes.omega_route = occ.ref_dist.cwiseProduct(occ.omega).dot(r_pi) / (1.0 - mdp.discount);
    } else {
        // The ratio is undefined off the support of f0; use the visitation law itself.
        const auto visitation = discounted_visitation(mdp, pi, mdp.init_dist);
        routes.omega_route = visitation.d.dot(r_pi) / (1.0 - mdp.discount);
    }
    return routes;
}

double policy_value(const TabularMdp& mdp, const PolicyTable& pi) {
    const auto routes = policy_value_routes(mdp, pi);
    const double tol = 1e-9 * std::max(1.0, std::abs(routes.q_route));
    if (!(std::abs(routes.q_route - routes.omega_route) <= tol)) {
        std::ostringstream os;
        os.precision(17);
        os << "policy value routes disagree: Q-route " << routes.q_route << ", omega-route "
           << routes.omega_route;
        throw InternalConsistencyError(os.str());
    }
    return routes.q_route;
}

ValueIterationResult value_iteration(const TabularMdp& mdp, double tol, int max_iter) {
    require_valid(mdp);
    const Eigen::VectorXd flat_r = flatten(mdp.mean_rewards());
    Eigen::VectorXd q = flat_r;
    ValueIterationResult result;
    for (int it = 1; it <= max_iter; ++it) {
        const Eigen::VectorXd v = as_table(q, mdp.n_states, mdp.n_actions).rowwise().maxCoeff();
        Eigen::VectorXd next = flat_r + mdp.discount * (mdp.transition * v);
        const double change = (next - q).cwiseAbs().maxCoeff();
        q.swap(next);
        if (change < tol) {
            result.q = as_table(q, mdp.n_states, mdp.n_actions);
            result.iterations = it;
            result.last_change = change;
            return result;
        }
    }
    throw ConvergenceError("value iteration did not reach tolerance within " + std::to_string(max_iter) +
                           " iterations");
}

PolicyTable greedy_policy(const Eigen::MatrixXd& q, double tie_tol) {
    std::vector<int> actions(static_cast<std::size_t>(q.rows()));
    for (Eigen::Index s = 0; s < q.rows(); ++s) {
        const double best = q.row(s).maxCoeff();
        for (Eigen::Index a = 0; a < q.cols(); ++a) {
            if (q(s, a) >= best - tie_tol) {
                actions[static_cast<std::size_t>(s)] = static_cast<int>(a);
                break;
            }
        }
    }
    return PolicyTable::deterministic(actions, static_cast<int>(q.cols()));
}

std::vector<int> tied_states(const Eigen::MatrixXd& q, double tie_tol) {
    std::vector<int> out;
    if (q.cols() < 2) {
        return out;
    }
    for (Eigen::Index s = 0; s < q.rows(); ++s) {
        Eigen::Index best_a = 0;
        const double best = q.row(s).maxCoeff(&best_a);
        double second = -std::numeric_limits<double>::infinity();
        for (Eigen::Index a = 0; a < q.cols(); ++a) {
            if (a != best_a) {
                second = std::max(second, q(s, a));
            }
        }
        if (best - second <= tie_tol) {
            out.push_back(static_cast<int>(s));
        }
    }
    return out;
}

OptimalPolicy optimal_policy(const TabularMdp& mdp) {
    const auto vi = value_iteration(mdp);
    PolicyTable pi = greedy_policy(vi.q);
    ValuePair vp = solve_q(mdp, pi);
    // Polish with exact evaluation so Q* is accurate to solve precision, not VI tolerance.
    for (int round = 0; round < 64; ++round) {
        PolicyTable improved = greedy_policy(vp.q);
        if (improved == pi) {
            break;
        }
        pi = std::move(improved);
        vp = solve_q(mdp, pi);
    }
    OptimalPolicy out{pi, vp, tied_states(vp.q), vi.iterations};
    return out;
}

Eigen::MatrixXd advantage(const ValuePair& vp) {
    return vp.q.colwise() - vp.v;
}

TabularMdp with_stationary_init(TabularMdp mdp, const PolicyTable& behavior) {
    mdp.init_dist = stationary_distribution(policy_kernel(mdp, behavior));
    return mdp;
}

double stationarity_residual(const TabularMdp& mdp, const PolicyTable& behavior) {
    const Eigen::MatrixXd kernel = policy_kernel(mdp, behavior);
    return (kernel.transpose() * mdp.init_dist - mdp.init_dist).lpNorm<1>();
}

} // namespace effope
