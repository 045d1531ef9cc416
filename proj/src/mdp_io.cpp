#include "effope/mdp_io.hpp"

#include "effope/csv.hpp"
#include "effope/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

namespace effope {

namespace {

using nlohmann::json;

[[noreturn]] void field_error(const std::string& field, const std::string& what) {
    throw ValidationError("field '" + field + "': " + what);
}

const json& member(const json& obj, const std::string& key) {
    const auto it = obj.find(key);
    if (it == obj.end()) {
        field_error(key, "missing");
    }
    return *it;
}

double number_at(const json& j, const std::string& field) {
    if (!j.is_number()) {
        field_error(field, "expected a number");
    }
    return j.get<double>();
}

int count_at(const json& j, const std::string& field) {
    if (!j.is_number_integer() || j.get<long long>() <= 0) {
        field_error(field, "expected a positive integer");
    }
    return static_cast<int>(j.get<long long>());
}

const json& array_at(const json& j, const std::string& field, std::size_t expected) {
    if (!j.is_array()) {
        field_error(field, "expected an array");
    }
    if (expected != 0 && j.size() != expected) {
        field_error(field, "expected " + std::to_string(expected) + " entries, got " + std::to_string(j.size()));
    }
    return j;
}

std::string idx(const std::string& base, std::size_t i) {
    return base + "[" + std::to_string(i) + "]";
}

RewardDist parse_reward(const json& j, const std::string& field) {
    if (j.is_number()) {
        return {{j.get<double>(), 1.0}};
    }
    array_at(j, field, 0);
    if (j.empty()) {
        field_error(field, "reward distribution has no atoms");
    }
    RewardDist dist;
    for (std::size_t k = 0; k < j.size(); ++k) {
        const std::string f = idx(field, k);
        array_at(j[k], f, 2);
        dist.push_back({number_at(j[k][0], f + "[0]"), number_at(j[k][1], f + "[1]")});
    }
    return dist;
}

} // namespace

int line_of_offset(const std::string& text, std::size_t pos) {
    pos = std::min(pos, text.size());
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
}

TabularMdp mdp_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError("JSON syntax error at line " + std::to_string(line_of_offset(text, e.byte)) +
                              ": " + e.what());
    }
    if (!doc.is_object()) {
        throw ValidationError("model document must be a JSON object");
    }
    for (const auto& item : doc.items()) {
        static const char* known[] = {"n_states", "n_actions", "gamma", "transition", "reward",
                                      "init_dist", "reward_bound", "name", "description"};
        if (std::find(std::begin(known), std::end(known), item.key()) == std::end(known)) {
            field_error(item.key(), "unknown field");
        }
    }
    const int ns = count_at(member(doc, "n_states"), "n_states");
    const int na = count_at(member(doc, "n_actions"), "n_actions");
    TabularMdp mdp = make_mdp(ns, na, number_at(member(doc, "gamma"), "gamma"));

    const json& tr = array_at(member(doc, "transition"), "transition", static_cast<std::size_t>(ns));
    const json& rw = array_at(member(doc, "reward"), "reward", static_cast<std::size_t>(ns));
    for (int s = 0; s < ns; ++s) {
        const std::string ts = idx("transition", s);
        const std::string rs = idx("reward", s);
        array_at(tr[s], ts, static_cast<std::size_t>(na));
        array_at(rw[s], rs, static_cast<std::size_t>(na));
        for (int a = 0; a < na; ++a) {
            const std::string tsa = idx(ts, a);
            array_at(tr[s][a], tsa, static_cast<std::size_t>(ns));
            for (int n = 0; n < ns; ++n) {
                mdp.transition(mdp.sa(s, a), n) = number_at(tr[s][a][n], idx(tsa, n));
            }
            mdp.reward_at(s, a) = parse_reward(rw[s][a], idx(rs, a));
        }
    }
    const json& init = array_at(member(doc, "init_dist"), "init_dist", static_cast<std::size_t>(ns));
    for (int s = 0; s < ns; ++s) {
        mdp.init_dist(s) = number_at(init[s], idx("init_dist", s));
    }
    if (doc.contains("reward_bound")) {
        mdp.reward_bound = number_at(doc["reward_bound"], "reward_bound");
    } else {
        double bound = 1.0;
        for (const auto& dist : mdp.reward) {
            for (const auto& atom : dist) {
                bound = std::max(bound, std::abs(atom.value));
            }
        }
        mdp.reward_bound = bound;
    }
    require_valid(mdp);
    return mdp;
}

std::string mdp_to_json(const TabularMdp& mdp) {
    json tr = json::array();
    json rw = json::array();
    for (int s = 0; s < mdp.n_states; ++s) {
        json trs = json::array();
        json rws = json::array();
        for (int a = 0; a < mdp.n_actions; ++a) {
            json row = json::array();
            for (int n = 0; n < mdp.n_states; ++n) {
                row.push_back(mdp.prob(s, a, n));
            }
            trs.push_back(std::move(row));
            json atoms = json::array();
            for (const auto& atom : mdp.reward_at(s, a)) {
                atoms.push_back(json::array({atom.value, atom.prob}));
            }
            rws.push_back(std::move(atoms));
        }
        tr.push_back(std::move(trs));
        rw.push_back(std::move(rws));
    }
    json init = json::array();
    for (int s = 0; s < mdp.n_states; ++s) {
        init.push_back(mdp.init_dist(s));
    }
    // One top-level field per line and one state per line inside the tables.
    auto table = [](const json& rows) {
        std::string out = "[\n";
        for (std::size_t i = 0; i < rows.size(); ++i) {
            out += "    " + rows[i].dump() + (i + 1 < rows.size() ? ",\n" : "\n");
        }
        return out + "  ]";
    };
    std::string out = "{\n";
    out += "  \"n_states\": " + std::to_string(mdp.n_states) + ",\n";
    out += "  \"n_actions\": " + std::to_string(mdp.n_actions) + ",\n";
    out += "  \"gamma\": " + json(mdp.discount).dump() + ",\n";
    out += "  \"reward_bound\": " + json(mdp.reward_bound).dump() + ",\n";
    out += "  \"init_dist\": " + init.dump() + ",\n";
    out += "  \"transition\": " + table(tr) + ",\n";
    out += "  \"reward\": " + table(rw) + "\n";
    return out + "}\n";
}

TabularMdp load_mdp(const std::string& path) {
    try {
        return mdp_from_json(read_text_file(path));
    } catch (const ValidationError& e) {
        throw ValidationError(path + ": " + e.what());
    }
}

void save_mdp(const TabularMdp& mdp, const std::string& path) {
    write_file_atomic(path, mdp_to_json(mdp));
}

} // namespace effope
