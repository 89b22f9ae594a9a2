#pragma once

#include "minred/mdp.hpp"

#include <json.hpp>

#include <fstream>
#include <string>

namespace minred {

// File formats are documented in docs/formats.md.

inline nlohmann::json to_json(const TabularMDP& mdp) {
    nlohmann::json j;
    j["num_states"] = mdp.num_states();
    j["num_actions"] = mdp.num_actions();
    j["gamma"] = mdp.gamma();
    j["rho0"] = std::vector<double>(mdp.initial().begin(), mdp.initial().end());
    auto& reward = j["reward"] = nlohmann::json::array();
    auto& transition = j["transition"] = nlohmann::json::array();
    for (StateId s = 0; s < mdp.num_states(); ++s) {
        std::vector<double> r(mdp.num_actions());
        for (ActionId a = 0; a < mdp.num_actions(); ++a) {
            r[a] = mdp.reward(s, a);
            const auto row = mdp.row(s, a);
            transition.push_back(std::vector<double>(row.begin(), row.end()));
        }
        reward.push_back(std::move(r));
    }
    if (!mdp.state_labels.empty()) j["state_labels"] = mdp.state_labels;
    if (!mdp.action_labels.empty()) j["action_labels"] = mdp.action_labels;
    return j;
}

/// Parses an MDP document and rejects it unless validate() passes.
inline TabularMDP mdp_from_json(const nlohmann::json& j) {
    try {
        const auto S = j.at("num_states").get<std::size_t>();
        const auto A = j.at("num_actions").get<std::size_t>();
        TabularMDP mdp(S, A, j.at("gamma").get<double>());
        mdp.set_initial(j.at("rho0").get<std::vector<double>>());
        const auto& reward = j.at("reward");
        const auto& transition = j.at("transition");
        if (reward.size() != S) throw ModelError("reward must have num_states rows");
        if (transition.size() != S * A) throw ModelError("transition must have num_states*num_actions rows");
        for (StateId s = 0; s < S; ++s) {
            const auto r = reward[s].get<std::vector<double>>();
            if (r.size() != A) throw ModelError("reward row " + std::to_string(s) + " must have num_actions entries");
            for (ActionId a = 0; a < A; ++a) {
                mdp.set_reward(s, a, r[a]);
                mdp.set_row(s, a, transition[s * A + a].get<std::vector<double>>());
            }
        }
        if (j.contains("state_labels")) mdp.state_labels = j["state_labels"].get<std::vector<std::string>>();
        if (j.contains("action_labels")) mdp.action_labels = j["action_labels"].get<std::vector<std::string>>();
        require_valid(mdp);
        return mdp;
    } catch (const nlohmann::json::exception& e) {
        throw ModelError(std::string("MDP document: ") + e.what());
    }
}

inline nlohmann::json to_json(const Policy& policy) {
    nlohmann::json j;
    j["num_states"] = policy.num_states();
    j["num_actions"] = policy.num_actions();
    auto& probs = j["probs"] = nlohmann::json::array();
    for (StateId s = 0; s < policy.num_states(); ++s) {
        const auto row = policy.row(s);
        probs.push_back(std::vector<double>(row.begin(), row.end()));
    }
    return j;
}

inline Policy policy_from_json(const nlohmann::json& j) {
    try {
        const auto S = j.at("num_states").get<std::size_t>();
        const auto A = j.at("num_actions").get<std::size_t>();
        const auto rows = j.at("probs").get<std::vector<std::vector<double>>>();
        if (rows.size() != S) throw ModelError("probs must have num_states rows");
        Policy policy(S, A);
        for (StateId s = 0; s < S; ++s) policy.set_row(s, rows[s]);
        const auto problems = policy.violations();
        if (!problems.empty()) throw ModelError("invalid policy: " + problems.front());
        return policy;
    } catch (const nlohmann::json::exception& e) {
        throw ModelError(std::string("policy document: ") + e.what());
    }
}

inline nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ModelError(path + ": " + e.what());
    }
}

inline TabularMDP load_mdp(const std::string& path) { return mdp_from_json(read_json_file(path)); }
inline Policy load_policy(const std::string& path) { return policy_from_json(read_json_file(path)); }

inline void save_json(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << '\n';
}

}  // namespace minred
