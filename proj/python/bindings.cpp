#include "effope/builtin.hpp"
#include "effope/divergences.hpp"
#include "effope/efficiency_lab.hpp"
#include "effope/error.hpp"
#include "effope/estimators.hpp"
#include "effope/mdp_io.hpp"
#include "effope/sampling.hpp"
#include "effope/solvers.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace effope;

namespace {

std::vector<std::vector<std::pair<double, double>>> reward_table(const TabularMdp& m) {
    std::vector<std::vector<std::pair<double, double>>> out;
    for (const auto& dist : m.reward) {
        std::vector<std::pair<double, double>> atoms;
        for (const auto& atom : dist) {
            atoms.emplace_back(atom.value, atom.prob);
        }
        out.push_back(std::move(atoms));
    }
    return out;
}

} // namespace

PYBIND11_MODULE(_effope, m) {
    m.doc() = "Tabular off-policy evaluation, influence functions and efficiency experiments";

    auto base = py::register_exception<Error>(m, "Error");
    py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
    py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<NonErgodicError>(m, "NonErgodicError", base.ptr());
    py::register_exception<CoverageError>(m, "CoverageError", base.ptr());
    py::register_exception<ConvergenceError>(m, "ConvergenceError", base.ptr());
    py::register_exception<InternalConsistencyError>(m, "InternalConsistencyError", base.ptr());
    py::register_exception<PerturbationRangeError>(m, "PerturbationRangeError", base.ptr());
    py::register_exception<PreconditionError>(m, "PreconditionError", base.ptr());

    py::class_<TabularMdp>(m, "TabularMdp")
        .def_readonly("n_states", &TabularMdp::n_states)
        .def_readonly("n_actions", &TabularMdp::n_actions)
        .def_readonly("discount", &TabularMdp::discount)
        .def_readonly("reward_bound", &TabularMdp::reward_bound)
        .def_property_readonly("transition", [](const TabularMdp& x) { return x.transition; })
        .def_property_readonly("init_dist", [](const TabularMdp& x) { return x.init_dist; })
        .def_property_readonly("reward", &reward_table)
        .def("mean_rewards", &TabularMdp::mean_rewards)
        .def("to_json", &mdp_to_json)
        .def_static("from_json", &mdp_from_json)
        .def("__eq__", [](const TabularMdp& a, const TabularMdp& b) { return a == b; });

    m.def("builtin", &builtin_mdp, py::arg("name"));
    m.def("builtin_names", &builtin_names);
    m.def("load_mdp", &load_mdp, py::arg("path"));
    m.def("save_mdp", &save_mdp, py::arg("mdp"), py::arg("path"));
    m.def("validate_mdp", [](const TabularMdp& x) {
        std::vector<std::string> out;
        for (const auto& v : validate_mdp(x)) {
            out.push_back(v.message());
        }
        return out;
    });
    m.def("random_mdp",
          [](int n_states, int n_actions, double discount, int atoms, std::uint64_t seed) {
              return random_mdp({n_states, n_actions, discount, atoms}, seed);
          },
          py::arg("n_states") = 4, py::arg("n_actions") = 2, py::arg("discount") = 0.7, py::arg("atoms") = 2,
          py::arg("seed") = 0);
    m.def("with_stationary_init", &with_stationary_init, py::arg("mdp"), py::arg("behavior"));

    py::class_<PolicyTable>(m, "PolicyTable")
        .def(py::init([](const Eigen::MatrixXd& probs) { return PolicyTable::from_probs(probs); }), py::arg("probs"))
        .def_static("uniform", &PolicyTable::uniform)
        .def_static("deterministic", &PolicyTable::deterministic, py::arg("actions"), py::arg("n_actions"))
        .def_property_readonly("probs", [](const PolicyTable& p) { return p.probs(); })
        .def_property_readonly("is_deterministic", &PolicyTable::is_deterministic)
        .def("actions", &PolicyTable::actions)
        .def("eps_soft", &PolicyTable::eps_soft)
        .def("__eq__", [](const PolicyTable& a, const PolicyTable& b) { return a == b; });

    py::class_<ValuePair>(m, "ValuePair").def_readonly("q", &ValuePair::q).def_readonly("v", &ValuePair::v);
    py::class_<OptimalPolicy>(m, "OptimalPolicy")
        .def_readonly("policy", &OptimalPolicy::policy)
        .def_readonly("values", &OptimalPolicy::values)
        .def_readonly("tied_states", &OptimalPolicy::tied_states)
        .def_property_readonly("unique", &OptimalPolicy::unique);

    m.def("solve_q", &solve_q, py::arg("mdp"), py::arg("policy"));
    m.def("policy_value", &policy_value, py::arg("mdp"), py::arg("policy"));
    m.def("optimal_policy", &optimal_policy, py::arg("mdp"));
    m.def("occupancy_ratio",
          [](const TabularMdp& x, const PolicyTable& pi) { return occupancy_ratio(x, pi, x.init_dist).omega; },
          py::arg("mdp"), py::arg("policy"));
    m.def("discounted_visitation",
          [](const TabularMdp& x, const PolicyTable& pi) { return discounted_visitation(x, pi, x.init_dist).d; },
          py::arg("mdp"), py::arg("policy"));
    m.def("bellman_residual", &bellman_residual, py::arg("mdp"), py::arg("policy"), py::arg("q"));

    py::class_<TransitionSample>(m, "TransitionSample")
        .def_readonly("episode", &TransitionSample::episode)
        .def_readonly("t", &TransitionSample::t)
        .def_readonly("s", &TransitionSample::s)
        .def_readonly("a", &TransitionSample::a)
        .def_readonly("r", &TransitionSample::r)
        .def_readonly("s_next", &TransitionSample::s_next);
    py::class_<OfflineDataset>(m, "OfflineDataset")
        .def_readonly("samples", &OfflineDataset::samples)
        .def_readonly("n_episodes", &OfflineDataset::n_episodes)
        .def_readonly("horizon", &OfflineDataset::horizon)
        .def("__len__", &OfflineDataset::size)
        .def("to_csv", &dataset_csv);
    m.def("simulate", &simulate, py::arg("mdp"), py::arg("behavior"), py::arg("n_episodes"), py::arg("horizon"),
          py::arg("burn_in") = kDefaultBurnIn, py::arg("seed") = 0, py::arg("jobs") = 1,
          py::arg("behavior_id") = "behavior", py::call_guard<py::gil_scoped_release>());
    m.def("dataset_from_csv", &dataset_from_csv, py::arg("text"), py::arg("n_states") = 0, py::arg("n_actions") = 0);

    py::class_<NuisanceSet>(m, "NuisanceSet")
        .def_readonly("q_hat", &NuisanceSet::q_hat)
        .def_readonly("v_hat", &NuisanceSet::v_hat)
        .def_readonly("omega_hat", &NuisanceSet::omega_hat)
        .def_readonly("b_hat", &NuisanceSet::b_hat)
        .def_readonly("target", &NuisanceSet::target);
    py::class_<EstimateReport>(m, "EstimateReport")
        .def_readonly("estimator", &EstimateReport::estimator)
        .def_readonly("eta_hat", &EstimateReport::eta_hat)
        .def_readonly("std_err", &EstimateReport::std_err)
        .def_readonly("ci_low", &EstimateReport::ci_low)
        .def_readonly("ci_high", &EstimateReport::ci_high)
        .def_readonly("n_eff", &EstimateReport::n_eff)
        .def_readonly("if_values", &EstimateReport::if_values);
    m.def("true_nuisances", &true_nuisances, py::arg("mdp"), py::arg("behavior"), py::arg("target"));
    m.def("fit_nuisances",
          [](const OfflineDataset& ds, double gamma, std::optional<PolicyTable> target) {
              return fit_nuisances(ds, gamma, target ? &*target : nullptr);
          },
          py::arg("dataset"), py::arg("gamma"), py::arg("target") = py::none());
    m.def("dr_estimate", &dr_estimate, py::arg("dataset"), py::arg("nuisances"), py::arg("gamma"),
          py::arg("level") = kDefaultLevel);
    m.def("mis_estimate", &mis_estimate, py::arg("dataset"), py::arg("omega_hat"), py::arg("target"),
          py::arg("b_hat"), py::arg("gamma"), py::arg("level") = kDefaultLevel);
    m.def("eif_value", &eif_value, py::arg("sample"), py::arg("nuisances"), py::arg("gamma"), py::arg("eta"));
    m.def("dr_population", &dr_population, py::arg("mdp"), py::arg("behavior"), py::arg("nuisances"));
    m.def("eif_population_mean", &eif_population_mean, py::arg("mdp"), py::arg("behavior"), py::arg("target"));
    m.def("eif_variance_exact", &eif_variance_exact, py::arg("mdp"), py::arg("behavior"), py::arg("target"));

    py::class_<BoundCheckReport>(m, "BoundCheckReport")
        .def_readonly("lemma", &BoundCheckReport::lemma)
        .def_readonly("lhs", &BoundCheckReport::lhs)
        .def_readonly("rhs", &BoundCheckReport::rhs)
        .def_readonly("holds", &BoundCheckReport::holds)
        .def_readonly("slack", &BoundCheckReport::slack);
    m.def("verify_performance_difference", &verify_performance_difference, py::arg("mdp"), py::arg("pi1"),
          py::arg("pi2"), py::arg("s0"));
    m.def("verify_policy_decomposition", &verify_policy_decomposition, py::arg("mdp"), py::arg("pi1"),
          py::arg("pi2"), py::arg("f"));
    m.def("check_occupancy_upper_bound",
          [](const TabularMdp& x, const PolicyTable& a, const PolicyTable& b) {
              const auto c = check_occupancy_upper_bound(x, a, b);
              return std::make_pair(c.counting, c.weighted);
          },
          py::arg("mdp"), py::arg("pi1"), py::arg("pi2"));

    py::class_<KinkReport>(m, "KinkReport")
        .def_readonly("eta_star0", &KinkReport::eta_star0)
        .def_readonly("right_limit", &KinkReport::right_limit)
        .def_readonly("left_limit", &KinkReport::left_limit)
        .def_readonly("gap", &KinkReport::gap)
        .def_readonly("predicted_gap", &KinkReport::predicted_gap)
        .def_readonly("kink", &KinkReport::kink)
        .def("to_csv", &kink_csv);
    m.def("unit_bonus_direction", &unit_bonus_direction, py::arg("mdp"), py::arg("state"), py::arg("action"));
    m.def("zero_direction", &zero_direction, py::arg("mdp"));
    m.def("perturb",
          [](const TabularMdp& x, const RewardDirection& h, double eps) { return perturb(x, h, eps); },
          py::arg("mdp"), py::arg("direction"), py::arg("epsilon"));
    m.def("epsilon_max", [](const TabularMdp& x, const RewardDirection& h) { return epsilon_max(x, h); },
          py::arg("mdp"), py::arg("direction"));
    m.def("kink_probe",
          [](const TabularMdp& x, const RewardDirection& h, const std::vector<double>& grid) {
              return kink_probe(x, h, grid);
          },
          py::arg("mdp"), py::arg("direction"), py::arg("eps_grid"));

    py::class_<McReport>(m, "McReport")
        .def_readonly("replications", &McReport::replications)
        .def_readonly("n", &McReport::n)
        .def_readonly("estimates", &McReport::estimates)
        .def_readonly("eta_star", &McReport::eta_star)
        .def_readonly("bias", &McReport::bias)
        .def_readonly("empirical_var_scaled", &McReport::empirical_var_scaled)
        .def_readonly("sigma2_eff", &McReport::sigma2_eff)
        .def_readonly("var_ratio", &McReport::var_ratio)
        .def_readonly("coverage", &McReport::coverage);
    m.def("mc_experiment",
          [](const TabularMdp& x, const PolicyTable& b, int n_episodes, int horizon, int replications,
             std::uint64_t seed, bool oracle, const std::string& estimator, int burn_in, bool require_unique, int jobs) {
              EstimatorConfig cfg;
              cfg.target = oracle ? TargetMode::oracle : TargetMode::estimated;
              cfg.estimator = estimator;
              cfg.burn_in = burn_in;
              cfg.require_unique = require_unique;
              cfg.jobs = jobs;
              return mc_experiment(x, b, cfg, n_episodes, horizon, replications, seed);
          },
          py::arg("mdp"), py::arg("behavior"), py::arg("n_episodes"), py::arg("horizon"), py::arg("replications"),
          py::arg("seed") = 0, py::arg("oracle") = false, py::arg("estimator") = "dr",
          py::arg("burn_in") = kDefaultBurnIn, py::arg("require_unique") = true, py::arg("jobs") = 1,
          py::call_guard<py::gil_scoped_release>());
}
