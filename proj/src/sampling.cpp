#include "effope/sampling.hpp"

#include "effope/csv.hpp"
#include "effope/error.hpp"
#include "effope/parallel.hpp"
#include "effope/rng.hpp"
#include "effope/solvers.hpp"

#include <algorithm>
#include <sstream>

namespace effope {

namespace {

// Substream ids: simulation episodes live above this offset, away from generator streams.
constexpr std::uint64_t kEpisodeStreamBase = 1ULL << 32;

} // namespace

OfflineDataset simulate(const TabularMdp& mdp, const PolicyTable& behavior, int n_episodes, int horizon,
                        int burn_in, std::uint64_t seed, int jobs, std::string behavior_id) {
    require_valid(mdp);
    require_compatible(mdp, behavior);
    if (n_episodes < 0 || horizon < 0 || burn_in < 0) {
        throw ValidationError("simulate: episode count, horizon and burn-in must be nonnegative");
    }
    const int classes = recurrent_class_count(policy_kernel(mdp, behavior));
    if (classes != 1) {
        throw NonErgodicError("non-ergodic behavior chain: " + std::to_string(classes) + " recurrent classes");
    }
    OfflineDataset ds;
    ds.n_episodes = n_episodes;
    ds.horizon = horizon;
    ds.n_states = mdp.n_states;
    ds.n_actions = mdp.n_actions;
    ds.behavior_id = std::move(behavior_id);
    ds.seed = seed;
    ds.samples.resize(static_cast<std::size_t>(n_episodes) * static_cast<std::size_t>(horizon));

    // Row-major copies keep every categorical draw a contiguous scan.
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> pol = behavior.probs();
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> trans = mdp.transition;
    std::vector<std::vector<double>> atom_probs(mdp.reward.size());
    for (std::size_t i = 0; i < mdp.reward.size(); ++i) {
        for (const auto& atom : mdp.reward[i]) {
            atom_probs[i].push_back(atom.prob);
        }
    }
    const int ns = mdp.n_states;
    const int na = mdp.n_actions;

    parallel_for(n_episodes, jobs, [&](int e) {
        RngStream rng(seed, kEpisodeStreamBase + static_cast<std::uint64_t>(e));
        int s = rng.categorical(mdp.init_dist);
        for (int k = 0; k < burn_in; ++k) {
            const int a = rng.categorical(pol.row(s).data(), na);
            s = rng.categorical(trans.row(mdp.sa(s, a)).data(), ns);
        }
        auto* out = ds.samples.data() + static_cast<std::size_t>(e) * static_cast<std::size_t>(horizon);
        for (int t = 0; t < horizon; ++t) {
            const int a = rng.categorical(pol.row(s).data(), na);
            const int sa = mdp.sa(s, a);
            const auto& probs = atom_probs[static_cast<std::size_t>(sa)];
            const int k = rng.categorical(probs.data(), static_cast<int>(probs.size()));
            const double r = mdp.reward[static_cast<std::size_t>(sa)][static_cast<std::size_t>(k)].value;
            const int next = rng.categorical(trans.row(sa).data(), ns);
            out[t] = {e, t, s, a, r, next};
            s = next;
        }
    });
    return ds;
}

EmpiricalCounts empirical_counts(const OfflineDataset& ds) {
    EmpiricalCounts c;
    c.n_states = ds.n_states;
    c.n_actions = ds.n_actions;
    c.n_s = Eigen::VectorXd::Zero(ds.n_states);
    c.n_sa = Eigen::MatrixXd::Zero(ds.n_states, ds.n_actions);
    c.n_sas = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ds.n_states) * ds.n_actions, ds.n_states);
    c.reward_sum = Eigen::MatrixXd::Zero(ds.n_states, ds.n_actions);
    c.reward_values.resize(static_cast<std::size_t>(ds.n_states * ds.n_actions));
    for (const auto& x : ds.samples) {
        if (x.s < 0 || x.s >= ds.n_states || x.s_next < 0 || x.s_next >= ds.n_states || x.a < 0 ||
            x.a >= ds.n_actions) {
            throw DimensionError("sample index out of range at episode " + std::to_string(x.episode) + ", t " +
                                 std::to_string(x.t));
        }
        const int sa = x.s * ds.n_actions + x.a;
        c.n_s(x.s) += 1.0;
        c.n_sa(x.s, x.a) += 1.0;
        c.n_sas(sa, x.s_next) += 1.0;
        c.reward_sum(x.s, x.a) += x.r;
        ++c.reward_values[static_cast<std::size_t>(sa)][x.r];
        ++c.total;
    }
    return c;
}

Eigen::VectorXd empirical_state_marginal(const OfflineDataset& ds) {
    if (ds.samples.empty()) {
        throw CoverageError("empty dataset has no state marginal");
    }
    const auto c = empirical_counts(ds);
    return c.n_s / static_cast<double>(c.total);
}

std::string dataset_csv(const OfflineDataset& ds) {
    std::string out = csv_row({"episode", "t", "s", "a", "r", "s_next"});
    out.reserve(out.size() + ds.samples.size() * 24);
    for (const auto& x : ds.samples) {
        out += csv_row({std::to_string(x.episode), std::to_string(x.t), std::to_string(x.s), std::to_string(x.a),
                        format_double(x.r), std::to_string(x.s_next)});
    }
    return out;
}

OfflineDataset dataset_from_csv(const std::string& text, int n_states, int n_actions) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) {
        throw ValidationError("dataset CSV: missing header");
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    if (line != "episode,t,s,a,r,s_next") {
        throw ValidationError("dataset CSV line 1: expected header episode,t,s,a,r,s_next");
    }
    OfflineDataset ds;
    int line_no = 1;
    int max_s = -1;
    int max_a = -1;
    int max_t = -1;
    int max_e = -1;
    auto to_int = [&](const std::string& field, const char* name) {
        try {
            std::size_t used = 0;
            const int v = std::stoi(field, &used);
            if (used != field.size()) {
                throw std::invalid_argument(name);
            }
            return v;
        } catch (const std::exception&) {
            throw ValidationError("dataset CSV line " + std::to_string(line_no) + ": field '" + name +
                                  "' is not an integer");
        }
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") {
            continue;
        }
        const auto f = split_csv_line(line);
        if (f.size() != 6) {
            throw ValidationError("dataset CSV line " + std::to_string(line_no) + ": expected 6 fields, got " +
                                  std::to_string(f.size()));
        }
        TransitionSample x;
        x.episode = to_int(f[0], "episode");
        x.t = to_int(f[1], "t");
        x.s = to_int(f[2], "s");
        x.a = to_int(f[3], "a");
        try {
            x.r = parse_double(f[4]);
        } catch (const ValidationError&) {
            throw ValidationError("dataset CSV line " + std::to_string(line_no) + ": field 'r' is not a number");
        }
        x.s_next = to_int(f[5], "s_next");
        if (x.episode < 0 || x.t < 0 || x.s < 0 || x.a < 0 || x.s_next < 0) {
            throw ValidationError("dataset CSV line " + std::to_string(line_no) + ": negative index");
        }
        max_s = std::max({max_s, x.s, x.s_next});
        max_a = std::max(max_a, x.a);
        max_t = std::max(max_t, x.t);
        max_e = std::max(max_e, x.episode);
        ds.samples.push_back(x);
    }
    ds.n_states = n_states > 0 ? n_states : max_s + 1;
    ds.n_actions = n_actions > 0 ? n_actions : max_a + 1;
    if (max_s >= ds.n_states || max_a >= ds.n_actions) {
        throw DimensionError("dataset CSV: indices exceed the declared model size");
    }
    ds.n_episodes = max_e + 1;
    ds.horizon = max_t + 1;
    return ds;
}

} // namespace effope

namespace effope {

double burn_in_distance(const TabularMdp& mdp, const PolicyTable& behavior, int steps) {
    const Eigen::MatrixXd kernel = policy_kernel(mdp, behavior);
    const Eigen::VectorXd mu = stationary_distribution(kernel);
    Eigen::MatrixXd power = Eigen::MatrixXd::Identity(mdp.n_states, mdp.n_states);
    for (int k = 0; k < steps; ++k) {
        power = power * kernel;
    }
    double worst = 0.0;
    for (int s = 0; s < mdp.n_states; ++s) {
        worst = std::max(worst, 0.5 * (power.row(s).transpose() - mu).lpNorm<1>());
    }
    return worst;
}

} // namespace effope
