#include "effope/cli.hpp"

#include "effope/builtin.hpp"
#include "effope/csv.hpp"
#include "effope/divergences.hpp"
#include "effope/efficiency_lab.hpp"
#include "effope/error.hpp"
#include "effope/estimators.hpp"
#include "effope/mdp_io.hpp"
#include "effope/sampling.hpp"
#include "effope/solvers.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>

namespace effope {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

enum class KeyType { integer, unsigned_integer, real, boolean, string, any };

struct Key {
    std::string name;
    KeyType type;
    std::string help;
    bool flag = false;  // also settable as --name on the command line
};

struct Config {
    std::string command;
    json doc = json::object();
    fs::path input_dir;                 // base for relative input paths found in the config file
    std::set<std::string> from_flags;   // keys whose value came from the command line
};

std::string field(const std::string& key) { return "field '" + key + "'"; }

bool has(const Config& c, const std::string& key) { return c.doc.contains(key) && !c.doc.at(key).is_null(); }

long long get_int(const Config& c, const std::string& key, long long fallback, long long min_value) {
    if (!has(c, key)) {
        return fallback;
    }
    const json& v = c.doc.at(key);
    if (!v.is_number_integer()) {
        throw ValidationError(field(key) + ": expected an integer");
    }
    const long long x = v.get<long long>();
    if (x < min_value) {
        throw ValidationError(field(key) + ": must be at least " + std::to_string(min_value));
    }
    return x;
}

std::uint64_t get_seed(const Config& c) {
    if (!has(c, "seed")) {
        return 0;
    }
    const json& v = c.doc.at("seed");
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
        throw ValidationError(field("seed") + ": expected a nonnegative integer");
    }
    return v.get<std::uint64_t>();
}

double get_real(const Config& c, const std::string& key, double fallback) {
    if (!has(c, key)) {
        return fallback;
    }
    const json& v = c.doc.at(key);
    if (!v.is_number()) {
        throw ValidationError(field(key) + ": expected a number");
    }
    return v.get<double>();
}

bool get_bool(const Config& c, const std::string& key, bool fallback) {
    if (!has(c, key)) {
        return fallback;
    }
    const json& v = c.doc.at(key);
    if (!v.is_boolean()) {
        throw ValidationError(field(key) + ": expected true or false");
    }
    return v.get<bool>();
}

std::string get_string(const Config& c, const std::string& key, const std::string& fallback) {
    if (!has(c, key)) {
        return fallback;
    }
    const json& v = c.doc.at(key);
    if (!v.is_string()) {
        throw ValidationError(field(key) + ": expected a string");
    }
    return v.get<std::string>();
}

std::string get_choice(const Config& c, const std::string& key, const std::string& fallback,
                       const std::vector<std::string>& choices) {
    const std::string v = get_string(c, key, fallback);
    if (std::find(choices.begin(), choices.end(), v) == choices.end()) {
        std::string list;
        for (const auto& ch : choices) {
            list += (list.empty() ? "" : ", ") + ch;
        }
        throw ValidationError(field(key) + ": '" + v + "' is not one of " + list);
    }
    return v;
}

int get_jobs(const Config& c) { return static_cast<int>(get_int(c, "jobs", 1, 1)); }

/// Value of a path field, resolved against the config's directory when relative.
std::string input_path(const Config& c, const std::string& key) {
    const std::string raw = get_string(c, key, "");
    const fs::path p(raw);
    if (p.is_absolute() || c.input_dir.empty() || c.from_flags.count(key) != 0) {
        return raw;
    }
    return (c.input_dir / p).string();
}

TabularMdp load_source(const Config& c) {
    if (!has(c, "mdp")) {
        throw ValidationError(field("mdp") + ": required (builtin:<name> or a path to a model file)");
    }
    const std::string src = get_string(c, "mdp", "");
    const std::string prefix = "builtin:";
    if (src.rfind(prefix, 0) == 0) {
        return builtin_mdp(src.substr(prefix.size()));
    }
    return load_mdp(input_path(c, "mdp"));
}

/// "uniform", "optimal", a list of actions, or a list of per-state probability rows.
PolicyTable parse_policy(const json& v, const TabularMdp& mdp, const std::string& key) {
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s == "uniform") {
            return PolicyTable::uniform(mdp.n_states, mdp.n_actions);
        }
        if (s == "optimal") {
            return optimal_policy(mdp).policy;
        }
        throw ValidationError(field(key) + ": unknown policy '" + s + "' (expected uniform, optimal or a table)");
    }
    if (!v.is_array() || static_cast<int>(v.size()) != mdp.n_states) {
        throw ValidationError(field(key) + ": expected a list with one entry per state");
    }
    if (std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number_integer(); })) {
        std::vector<int> actions;
        for (const auto& e : v) {
            actions.push_back(e.get<int>());
        }
        try {
            return PolicyTable::deterministic(actions, mdp.n_actions);
        } catch (const Error& e) {
            throw ValidationError(field(key) + ": " + e.what());
        }
    }
    Eigen::MatrixXd probs(mdp.n_states, mdp.n_actions);
    for (int s = 0; s < mdp.n_states; ++s) {
        const json& row = v[static_cast<std::size_t>(s)];
        if (!row.is_array() || static_cast<int>(row.size()) != mdp.n_actions) {
            throw ValidationError(field(key + "[" + std::to_string(s) + "]") + ": expected " +
                                  std::to_string(mdp.n_actions) + " probabilities");
        }
        for (int a = 0; a < mdp.n_actions; ++a) {
            const json& p = row[static_cast<std::size_t>(a)];
            if (!p.is_number()) {
                throw ValidationError(field(key + "[" + std::to_string(s) + "][" + std::to_string(a) + "]") +
                                      ": expected a number");
            }
            probs(s, a) = p.get<double>();
        }
    }
    try {
        return PolicyTable::from_probs(probs);
    } catch (const Error& e) {
        throw ValidationError(field(key) + ": " + e.what());
    }
}

std::string policy_label(const Config& c, const std::string& key, const std::string& fallback) {
    if (!has(c, key)) {
        return fallback;
    }
    return c.doc.at(key).is_string() ? c.doc.at(key).get<std::string>() : "custom";
}

PolicyTable policy_field(const Config& c, const std::string& key, const TabularMdp& mdp, const std::string& fallback) {
    return parse_policy(has(c, key) ? c.doc.at(key) : json(fallback), mdp, key);
}

struct Output {
    std::string path;
    std::string content;
};

struct Result {
    std::vector<Output> files;
    std::string summary;  // printed to the error stream after the files are in place
};

std::string output_path(const Config& c, const std::string& key, const std::string& default_name) {
    const char* env = std::getenv(kOutDirEnv);
    const fs::path dir = env != nullptr && *env != '\0' ? fs::path(env) : fs::path();
    const fs::path p(get_string(c, key, default_name));
    if (p.is_absolute() || dir.empty()) {
        return p.string();
    }
    return (dir / p).string();
}

// ---- subcommands -------------------------------------------------------------------------

Result cmd_solve(const Config& c) {
    const TabularMdp mdp = load_source(c);
    const PolicyTable pi = policy_field(c, "policy", mdp, "optimal");
    const std::string label = policy_label(c, "policy", "optimal");
    const auto vp = solve_q(mdp, pi);
    const auto d = discounted_visitation(mdp, pi, mdp.init_dist);
    const auto w = occupancy_ratio(mdp, pi, mdp.init_dist);
    const double eta = policy_value(mdp, pi);
    const auto opt = optimal_policy(mdp);

    std::string csv = csv_row({"policy", "quantity", "state", "action", "value"});
    for (int s = 0; s < mdp.n_states; ++s) {
        for (int a = 0; a < mdp.n_actions; ++a) {
            csv += csv_row({label, "q", std::to_string(s), std::to_string(a), format_double(vp.q(s, a))});
        }
    }
    for (int s = 0; s < mdp.n_states; ++s) {
        csv += csv_row({label, "v", std::to_string(s), "", format_double(vp.v(s))});
    }
    for (int s = 0; s < mdp.n_states; ++s) {
        csv += csv_row({label, "d", std::to_string(s), "", format_double(d.d(s))});
    }
    for (int s = 0; s < mdp.n_states; ++s) {
        csv += csv_row({label, "omega", std::to_string(s), "", format_double(w.omega(s))});
    }
    csv += csv_row({label, "eta", "", "", format_double(eta)});
    for (int s = 0; s < mdp.n_states; ++s) {
        csv += csv_row({"optimal", "action", std::to_string(s), std::to_string(opt.policy.action(s)), "1"});
    }
    for (int s : opt.tied_states) {
        csv += csv_row({"optimal", "tied", std::to_string(s), "", "1"});
    }
    csv += csv_row({"optimal", "eta", "", "", format_double(mdp.init_dist.dot(opt.values.v))});
    return {{{output_path(c, "out", "solve.csv"), csv}}, "eta(" + label + ") = " + format_double(eta)};
}

Result cmd_simulate(const Config& c) {
    const TabularMdp mdp = load_source(c);
    const PolicyTable b = policy_field(c, "behavior", mdp, "uniform");
    const auto ds = simulate(mdp, b, static_cast<int>(get_int(c, "episodes", 100, 1)),
                             static_cast<int>(get_int(c, "horizon", 10, 1)),
                             static_cast<int>(get_int(c, "burn_in", kDefaultBurnIn, 0)), get_seed(c), get_jobs(c),
                             policy_label(c, "behavior", "uniform"));
    return {{{output_path(c, "out", "dataset.csv"), dataset_csv(ds)}},
            std::to_string(ds.size()) + " transitions"};
}

Result cmd_estimate(const Config& c) {
    std::optional<TabularMdp> mdp;
    if (has(c, "mdp")) {
        mdp = load_source(c);
    }
    OfflineDataset ds;
    if (has(c, "data")) {
        const std::string path = input_path(c, "data");
        ds = dataset_from_csv(read_text_file(path), mdp ? mdp->n_states : 0, mdp ? mdp->n_actions : 0);
    } else if (mdp) {
        const PolicyTable b = policy_field(c, "behavior", *mdp, "uniform");
        ds = simulate(*mdp, b, static_cast<int>(get_int(c, "episodes", 100, 1)),
                      static_cast<int>(get_int(c, "horizon", 10, 1)),
                      static_cast<int>(get_int(c, "burn_in", kDefaultBurnIn, 0)), get_seed(c), get_jobs(c));
    } else {
        throw ValidationError(field("data") + ": required when no mdp is given");
    }
    double gamma = 0.0;
    if (has(c, "gamma")) {
        gamma = get_real(c, "gamma", 0.0);
    } else if (mdp) {
        gamma = mdp->discount;
    } else {
        throw ValidationError(field("gamma") + ": required when no mdp is given");
    }
    if (!(gamma > 0.0 && gamma < 1.0)) {
        throw ValidationError(field("gamma") + ": must lie in (0,1)");
    }
    const std::string estimator = get_choice(c, "estimator", "dr", {"dr", "mis", "both"});
    const double level = get_real(c, "level", kDefaultLevel);
    if (!(level > 0.0 && level < 1.0)) {
        throw ValidationError(field("level") + ": must lie in (0,1)");
    }
    std::optional<PolicyTable> target;
    if (has(c, "target") && !(c.doc.at("target").is_string() && c.doc.at("target").get<std::string>() == "estimated")) {
        if (!mdp) {
            throw ValidationError(field("target") + ": a fixed target needs the mdp field");
        }
        target = parse_policy(c.doc.at("target"), *mdp, "target");
    }
    const NuisanceSet nz = fit_nuisances(ds, gamma, target ? &*target : nullptr);
    const std::uint64_t seed = get_seed(c);
    std::string csv = estimate_csv_header();
    std::string summary;
    if (estimator != "mis") {
        const auto rep = dr_estimate(ds, nz, gamma, level);
        csv += estimate_csv_row(rep, seed);
        summary += "dr " + format_double(rep.eta_hat);
    }
    if (estimator != "dr") {
        const auto rep = mis_estimate(ds, nz.omega_hat, nz.target, nz.b_hat, gamma, level);
        csv += estimate_csv_row(rep, seed);
        summary += (summary.empty() ? "" : ", ") + std::string("mis ") + format_double(rep.eta_hat);
    }
    return {{{output_path(c, "out", "estimate.csv"), csv}}, summary};
}

Result cmd_mc(const Config& c) {
    const TabularMdp mdp = load_source(c);
    const PolicyTable b = policy_field(c, "behavior", mdp, "uniform");
    EstimatorConfig cfg;
    cfg.estimator = get_choice(c, "estimator", "dr", {"dr", "mis"});
    cfg.level = get_real(c, "level", kDefaultLevel);
    if (!(cfg.level > 0.0 && cfg.level < 1.0)) {
        throw ValidationError(field("level") + ": must lie in (0,1)");
    }
    cfg.burn_in = static_cast<int>(get_int(c, "burn_in", kDefaultBurnIn, 0));
    cfg.require_unique = get_bool(c, "require_unique", true);
    cfg.jobs = get_jobs(c);
    const std::string target = get_choice(c, "target", "estimated", {"estimated", "oracle", "both"});
    const int episodes = static_cast<int>(get_int(c, "episodes", 1000, 1));
    const int horizon = static_cast<int>(get_int(c, "horizon", 1, 1));
    const int reps = static_cast<int>(get_int(c, "replications", 100, 1));
    const std::uint64_t seed = get_seed(c);

    std::vector<std::pair<std::string, McReport>> runs;
    for (const std::string mode : {"estimated", "oracle"}) {
        if (target != "both" && target != mode) {
            continue;
        }
        cfg.target = mode == "oracle" ? TargetMode::oracle : TargetMode::estimated;
        runs.emplace_back(mode, mc_experiment(mdp, b, cfg, episodes, horizon, reps, seed));
    }
    std::string csv;
    std::string summary;
    for (const auto& [label, rep] : runs) {
        std::string block = mc_summary_csv(label, rep);
        if (!csv.empty()) {
            block.erase(0, block.find('\n') + 1);
        }
        csv += block;
        summary += (summary.empty() ? "" : "; ") + label + ": var_ratio " + format_double(rep.var_ratio) +
                   ", coverage " + format_double(rep.coverage);
    }
    Result res{{{output_path(c, "out", "mc.csv"), csv}}, summary};
    if (has(c, "replications_out")) {
        std::string per;
        for (const auto& [label, rep] : runs) {
            std::string block = mc_replications_csv(rep);
            const auto nl = block.find('\n');
            std::string body = block.substr(nl + 1);
            if (per.empty()) {
                per = "label," + block.substr(0, nl + 1);
            }
            std::size_t pos = 0;
            while (pos < body.size()) {
                const auto end = body.find('\n', pos);
                per += label + "," + body.substr(pos, end - pos + 1);
                pos = end + 1;
            }
        }
        res.files.push_back({output_path(c, "replications_out", "mc_replications.csv"), per});
    }
    return res;
}

RewardDirection parse_direction(const Config& c, const TabularMdp& mdp) {
    const json v = has(c, "direction") ? c.doc.at("direction") : json("auto");
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s == "zero") {
            return zero_direction(mdp);
        }
        if (s != "auto") {
            throw ValidationError(field("direction") + ": expected auto, zero or {\"state\": s, \"action\": a}");
        }
        // Bonus on the first tied state's lowest optimal action, else on the optimal action of state 0.
        const auto opt = optimal_policy(mdp);
        const int state = opt.tied_states.empty() ? 0 : opt.tied_states.front();
        return unit_bonus_direction(mdp, state, opt.policy.action(state));
    }
    if (!v.is_object() || !v.contains("state") || !v.contains("action") || !v.at("state").is_number_integer() ||
        !v.at("action").is_number_integer()) {
        throw ValidationError(field("direction") + ": expected auto, zero or {\"state\": s, \"action\": a}");
    }
    const int s = v.at("state").get<int>();
    const int a = v.at("action").get<int>();
    if (s < 0 || s >= mdp.n_states || a < 0 || a >= mdp.n_actions) {
        throw ValidationError(field("direction") + ": pair (" + std::to_string(s) + "," + std::to_string(a) +
                              ") is outside the model");
    }
    return unit_bonus_direction(mdp, s, a);
}

Result cmd_probe_kink(const Config& c) {
    const TabularMdp mdp = load_source(c);
    const RewardDirection h = parse_direction(c, mdp);
    std::vector<double> grid;
    if (has(c, "eps_grid")) {
        const json& g = c.doc.at("eps_grid");
        if (!g.is_array()) {
            throw ValidationError(field("eps_grid") + ": expected a list of numbers");
        }
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (!g[i].is_number()) {
                throw ValidationError(field("eps_grid[" + std::to_string(i) + "]") + ": expected a number");
            }
            grid.push_back(g[i].get<double>());
        }
    } else {
        const double lim = epsilon_max(mdp, h);
        for (double e : {1e-2, 1e-3, 1e-4, 1e-5}) {
            if (e <= lim) {
                grid.push_back(-e);
                grid.push_back(e);
            }
        }
        if (grid.empty()) {
            throw PerturbationRangeError("admissible range " + format_double(lim) + " is below the default grid");
        }
    }
    const auto rep = kink_probe(mdp, h, grid, {}, get_real(c, "threshold", kKinkThreshold));
    return {{{output_path(c, "out", "kink.csv"), kink_csv(rep)}},
            "gap " + format_double(rep.gap) + ", kink=" + (rep.kink ? "true" : "false")};
}

Result cmd_verify_lemmas(const Config& c) {
    FuzzConfig cfg;
    cfg.instances = static_cast<int>(get_int(c, "instances", cfg.instances, 1));
    cfg.max_states = static_cast<int>(get_int(c, "max_states", cfg.max_states, 2));
    cfg.max_actions = static_cast<int>(get_int(c, "max_actions", cfg.max_actions, 2));
    cfg.seed = has(c, "seed") ? get_seed(c) : cfg.seed;
    cfg.jobs = get_jobs(c);
    const auto rows = fuzz_lemmas(cfg);
    std::map<std::string, int> violations;
    for (const auto& r : rows) {
        violations[r.lemma] += r.holds ? 0 : 1;
    }
    std::string summary;
    for (const auto& [lemma, n] : violations) {
        summary += (summary.empty() ? "" : ", ") + lemma + " " + std::to_string(n);
    }
    return {{{output_path(c, "out", "lemmas.csv"), fuzz_csv(rows)}}, "violations: " + summary};
}

Result cmd_gen_mdp(const Config& c) {
    RandomMdpSpec spec;
    spec.n_states = static_cast<int>(get_int(c, "states", spec.n_states, 1));
    spec.n_actions = static_cast<int>(get_int(c, "actions", spec.n_actions, 1));
    spec.discount = get_real(c, "gamma", spec.discount);
    spec.reward_atoms = static_cast<int>(get_int(c, "atoms", spec.reward_atoms, 1));
    if (!(spec.discount > 0.0 && spec.discount < 1.0)) {
        throw ValidationError(field("gamma") + ": must lie in (0,1)");
    }
    const std::string mode = get_choice(c, "mode", "ergodic", {"ergodic", "unique", "tied"});
    const std::uint64_t seed = get_seed(c);
    TabularMdp mdp;
    if (mode == "unique") {
        mdp = random_unique_mdp(spec, seed, get_real(c, "margin", 0.05));
    } else if (mode == "tied") {
        if (spec.n_actions < 2) {
            throw ValidationError(field("actions") + ": a tied model needs at least two actions");
        }
        mdp = random_tied_mdp(spec, seed);
    } else {
        mdp = random_mdp(spec, seed);
    }
    return {{{output_path(c, "out", "mdp.json"), mdp_to_json(mdp)}},
            mode + " model, optimal margin " + format_double(optimal_margin(mdp))};
}

// ---- command table -----------------------------------------------------------------------

struct Command {
    std::string name;
    std::string description;
    std::vector<Key> keys;
    std::string schema;  // --help footer
    std::function<Result(const Config&)> run;
};

std::vector<Key> common_keys(bool with_mdp) {
    std::vector<Key> k = {{"seed", KeyType::unsigned_integer, "RNG seed", true},
                          {"out", KeyType::string, "output path", true},
                          {"jobs", KeyType::integer, "worker threads", true}};
    if (with_mdp) {
        k.push_back({"mdp", KeyType::string, "builtin:<name> or a model file", true});
    }
    return k;
}

std::vector<Command> commands() {
    const std::string paths =
        "\nRelative output paths resolve against $" + std::string(kOutDirEnv) +
        " when it is set. Relative input paths inside a config file resolve against the file's directory.\n"
        "Config files are JSON objects; command-line flags override their values.\n";
    std::vector<Command> out;
    {
        auto k = common_keys(true);
        k.push_back({"policy", KeyType::any, "uniform | optimal | [actions] | [[probs]]", false});
        out.push_back({"solve", "Exact Q, V, visitation, occupancy ratio and value of a policy", k,
                       "Config keys: mdp, policy (default optimal), out.\n"
                       "Output CSV: policy,quantity,state,action,value\n"
                       "  quantity q (per state and action), v, d, omega (per state), eta;\n"
                       "  rows labelled optimal give the optimal action per state, tied states and eta*.\n" +
                           paths,
                       cmd_solve});
    }
    {
        auto k = common_keys(true);
        k.push_back({"behavior", KeyType::any, "behavior policy", false});
        k.push_back({"episodes", KeyType::integer, "number of episodes N", true});
        k.push_back({"horizon", KeyType::integer, "recorded steps per episode T", true});
        k.push_back({"burn_in", KeyType::integer, "unrecorded steps before recording", true});
        out.push_back({"simulate", "Offline dataset from a behavior policy", k,
                       "Config keys: mdp, behavior (default uniform), episodes (100), horizon (10), burn_in (1000), "
                       "seed, jobs, out.\n"
                       "Output CSV: episode,t,s,a,r,s_next\n" +
                           paths,
                       cmd_simulate});
    }
    {
        auto k = common_keys(true);
        k.push_back({"data", KeyType::string, "dataset CSV (else simulated from mdp)", true});
        k.push_back({"gamma", KeyType::real, "discount (default: the model's)", true});
        k.push_back({"behavior", KeyType::any, "behavior policy for simulated data", false});
        k.push_back({"episodes", KeyType::integer, "episodes for simulated data", true});
        k.push_back({"horizon", KeyType::integer, "steps per episode for simulated data", true});
        k.push_back({"burn_in", KeyType::integer, "burn-in for simulated data", true});
        k.push_back({"estimator", KeyType::string, "dr | mis | both", true});
        k.push_back({"target", KeyType::any, "estimated | uniform | optimal | policy table", false});
        k.push_back({"level", KeyType::real, "confidence level", true});
        out.push_back({"estimate", "Doubly robust or marginal importance sampling estimate of the optimal value", k,
                       "Config keys: data or mdp, gamma, behavior, episodes, horizon, burn_in, estimator (dr), "
                       "target (estimated = greedy policy of the fitted model), level (0.95), seed, out.\n"
                       "Output CSV: estimator,eta_hat,std_err,ci_low,ci_high,n,seed\n" +
                           paths,
                       cmd_estimate});
    }
    {
        auto k = common_keys(true);
        k.push_back({"behavior", KeyType::any, "behavior policy", false});
        k.push_back({"episodes", KeyType::integer, "episodes per replication N", true});
        k.push_back({"horizon", KeyType::integer, "steps per episode T", true});
        k.push_back({"replications", KeyType::integer, "Monte Carlo replications M", true});
        k.push_back({"burn_in", KeyType::integer, "burn-in steps", true});
        k.push_back({"estimator", KeyType::string, "dr | mis", true});
        k.push_back({"target", KeyType::string, "estimated | oracle | both", true});
        k.push_back({"level", KeyType::real, "confidence level", true});
        k.push_back({"require_unique", KeyType::boolean, "refuse models with tied optimal actions", false});
        k.push_back({"replications_out", KeyType::string, "per-replication CSV path", true});
        out.push_back({"mc", "Monte Carlo study of the estimated-optimal-policy estimator", k,
                       "Config keys: mdp, behavior, episodes (1000), horizon (1), replications (100), burn_in (1000), "
                       "estimator (dr), target (estimated), level, require_unique (true), seed, jobs, out, "
                       "replications_out.\n"
                       "Output CSV: label,replications,n,eta_star,mean_estimate,bias,empirical_var_scaled,"
                       "sigma2_eff,var_ratio,var_se,coverage,policy_match_rate\n"
                       "Replications CSV: label,replication,eta_hat,std_err,covered\n" +
                           paths,
                       cmd_mc});
    }
    {
        auto k = common_keys(true);
        k.push_back({"direction", KeyType::any, "auto | zero | {state, action}", false});
        k.push_back({"eps_grid", KeyType::any, "list of epsilons symmetric about 0", false});
        k.push_back({"threshold", KeyType::real, "kink threshold on |right - left|", true});
        out.push_back({"probe-kink", "One-sided difference quotients of the optimal value along a reward tilt", k,
                       "Config keys: mdp, direction (auto), eps_grid (+-1e-2 .. +-1e-5), threshold (1e-5), out.\n"
                       "Output CSV: record,epsilon,eta_star,quotient,value\n"
                       "  record base|point carry epsilon/eta_star/quotient; right_limit, left_limit, gap,\n"
                       "  predicted_right, predicted_left, predicted_gap, threshold and kink carry value.\n" +
                           paths,
                       cmd_probe_kink});
    }
    {
        auto k = common_keys(false);
        k.push_back({"instances", KeyType::integer, "fuzzed instances", true});
        k.push_back({"max_states", KeyType::integer, "largest state count", true});
        k.push_back({"max_actions", KeyType::integer, "largest action count", true});
        out.push_back({"verify-lemmas", "Fuzz the occupancy and policy-value bounds and identities", k,
                       "Config keys: instances (1000), max_states (8), max_actions (4), seed (1), jobs, out.\n"
                       "Output CSV: seed,lemma,lhs,rhs,slack,holds (each row checks lhs <= rhs)\n" +
                           paths,
                       cmd_verify_lemmas});
    }
    {
        auto k = common_keys(false);
        k.push_back({"states", KeyType::integer, "number of states", true});
        k.push_back({"actions", KeyType::integer, "number of actions", true});
        k.push_back({"gamma", KeyType::real, "discount", true});
        k.push_back({"atoms", KeyType::integer, "reward atoms per pair", true});
        k.push_back({"mode", KeyType::string, "ergodic | unique | tied", false});
        k.push_back({"margin", KeyType::real, "minimum optimal-action margin for --unique", true});
        out.push_back({"gen-mdp", "Random model file from a seed", k,
                       "Config keys: states (4), actions (2), gamma (0.7), atoms (2), mode (ergodic), margin (0.05), "
                       "seed, out (mdp.json).\n"
                       "Output: JSON model (n_states, n_actions, gamma, transition[s][a][s'], reward[s][a] as "
                       "[value, prob] atoms, init_dist, reward_bound).\n" +
                           paths,
                       cmd_gen_mdp});
    }
    return out;
}

std::string flag_name(const std::string& key) {
    std::string f = key;
    std::replace(f.begin(), f.end(), '_', '-');
    return "--" + f;
}

json flag_value(const Key& key, const std::string& raw) {
    switch (key.type) {
    case KeyType::integer:
    case KeyType::unsigned_integer: {
        std::size_t used = 0;
        long long v = 0;
        try {
            v = std::stoll(raw, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != raw.size() || raw.empty() || (key.type == KeyType::unsigned_integer && v < 0)) {
            throw ValidationError("option " + flag_name(key.name) + ": expected an integer, got '" + raw + "'");
        }
        if (key.type == KeyType::unsigned_integer) {
            return json(static_cast<std::uint64_t>(std::stoull(raw)));
        }
        return json(v);
    }
    case KeyType::real:
        try {
            return json(parse_double(raw));
        } catch (const Error&) {
            throw ValidationError("option " + flag_name(key.name) + ": expected a number, got '" + raw + "'");
        }
    default:
        return json(raw);
    }
}

std::string type_label(KeyType t) {
    switch (t) {
    case KeyType::integer:
    case KeyType::unsigned_integer:
        return "INT";
    case KeyType::real:
        return "FLOAT";
    default:
        return "TEXT";
    }
}

Config load_config(const Command& cmd, const std::string& config_path) {
    Config c;
    c.command = cmd.name;
    if (config_path.empty()) {
        return c;
    }
    const std::string text = read_text_file(config_path);
    try {
        c.doc = json::parse(text);
    } catch (const json::parse_error& e) {
        const std::size_t at = e.byte > 0 ? e.byte - 1 : 0;
        throw ValidationError(config_path + ": line " + std::to_string(line_of_offset(text, at)) +
                              ": malformed JSON");
    }
    if (!c.doc.is_object()) {
        throw ValidationError(config_path + ": line 1: expected a JSON object");
    }
    std::set<std::string> allowed;
    for (const auto& k : cmd.keys) {
        allowed.insert(k.name);
    }
    allowed.insert("command");
    allowed.insert("description");
    for (const auto& item : c.doc.items()) {
        if (allowed.count(item.key()) == 0) {
            throw ValidationError(config_path + ": " + field(item.key()) + ": unknown for " + cmd.name);
        }
    }
    if (c.doc.contains("command") && (!c.doc.at("command").is_string() || c.doc.at("command") != cmd.name)) {
        throw ValidationError(config_path + ": " + field("command") + ": this file is for another subcommand");
    }
    c.input_dir = fs::path(config_path).parent_path();
    return c;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const InternalConsistencyError*>(&e) != nullptr ||
        dynamic_cast<const ConvergenceError*>(&e) != nullptr) {
        return kExitInternalError;
    }
    if (dynamic_cast<const Error*>(&e) != nullptr) {
        return kExitUserError;
    }
    return kExitInternalError;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    const auto table = commands();
    CLI::App app{"Tabular off-policy evaluation and efficiency experiments", "effope"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    struct Parsed {
        std::string config;
        std::map<std::string, std::string> raw;
        bool ergodic = false;
        bool unique = false;
        bool tied = false;
    };
    std::vector<Parsed> parsed(table.size());
    std::vector<CLI::App*> subs;
    for (std::size_t i = 0; i < table.size(); ++i) {
        const Command& cmd = table[i];
        CLI::App* sub = app.add_subcommand(cmd.name, cmd.description);
        sub->footer(cmd.schema);
        sub->add_option("--config", parsed[i].config, "JSON config file");
        for (const Key& k : cmd.keys) {
            if (k.flag) {
                sub->add_option_function<std::string>(
                    flag_name(k.name), [&p = parsed[i], name = k.name](const std::string& v) { p.raw[name] = v; },
                    k.help)
                    ->type_name(type_label(k.type));
            }
        }
        if (cmd.name == "gen-mdp") {
            auto* e = sub->add_flag("--ergodic", parsed[i].ergodic, "full-support transitions (default)");
            auto* u = sub->add_flag("--unique", parsed[i].unique, "enforce a unique optimal policy via --margin");
            auto* t = sub->add_flag("--tied", parsed[i].tied, "duplicate the optimal action at every state");
            e->excludes(u)->excludes(t);
            u->excludes(t);
        }
        subs.push_back(sub);
    }

    std::vector<std::string> rev(args.rbegin(), args.rend());
    if (!rev.empty()) {
        rev.pop_back();  // program name
    }
    try {
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUserError;
    }

    std::size_t which = 0;
    while (which < subs.size() && !subs[which]->parsed()) {
        ++which;
    }
    const Command& cmd = table[which];
    const Parsed& p = parsed[which];
    try {
        Config c = load_config(cmd, p.config);
        for (const Key& k : cmd.keys) {
            const auto it = p.raw.find(k.name);
            if (it != p.raw.end()) {
                c.doc[k.name] = flag_value(k, it->second);
                c.from_flags.insert(k.name);
            }
        }
        if (p.tied) {
            c.doc["mode"] = "tied";
        } else if (p.unique) {
            c.doc["mode"] = "unique";
        } else if (p.ergodic) {
            c.doc["mode"] = "ergodic";
        }
        const Result res = cmd.run(c);
        for (const auto& f : res.files) {
            if (f.path == "-") {
                out << f.content;
            } else {
                write_file_atomic(f.path, f.content);
            }
        }
        for (const auto& f : res.files) {
            if (f.path != "-") {
                err << "wrote " << f.path << "\n";
            }
        }
        if (!res.summary.empty()) {
            err << res.summary << "\n";
        }
        return kExitOk;
    } catch (const std::exception& e) {
        err << "effope " << cmd.name << ": error: " << e.what() << "\n";
        return exit_code_for(e);
    }
}

} // namespace effope
