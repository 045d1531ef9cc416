#pragma once

#include "effope/mdp.hpp"

#include <string>

namespace effope {

/**
 * JSON model format:
 *
 *   {
 *     "n_states": 2, "n_actions": 2, "gamma": 0.5,
 *     "transition": [[[1, 0], [0, 1]], [[0, 1], [1, 0]]],   // [s][a][s']
 *     "reward": [[[[1, 1]], [[1, 1]]], [[[0, 1]], [[0, 1]]]], // [s][a] -> list of [value, prob]
 *     "init_dist": [0.5, 0.5],
 *     "reward_bound": 1                                       // optional, default max |value|, at least 1
 *   }
 *
 * Doubles are written in shortest round-trip form, so save/load is value-identical.
 * Parse errors carry the line number; shape errors carry the field path.
 */
TabularMdp mdp_from_json(const std::string& text);
std::string mdp_to_json(const TabularMdp& mdp);

TabularMdp load_mdp(const std::string& path);
void save_mdp(const TabularMdp& mdp, const std::string& path);

/// Line number (1-based) of byte offset `pos` in `text`.
int line_of_offset(const std::string& text, std::size_t pos);

} // namespace effope
