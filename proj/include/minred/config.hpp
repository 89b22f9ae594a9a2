#pragma once

#include "minred/agents.hpp"
#include "minred/envs.hpp"
#include "minred/mdp_io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace minred {

/// Schema or parse problem, carrying the 1-based source line (0 when the
/// problem is not tied to a line).
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::size_t line, const std::string& message)
        : std::runtime_error(line ? "line " + std::to_string(line) + ": " + message : message), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

inline const std::vector<std::string>& known_agents() {
    static const std::vector<std::string> names = {"minred_q", "baseline_q", "minred_ac", "maxent_ac"};
    return names;
}

inline const std::vector<std::string>& known_envs() {
    static const std::vector<std::string> names = {"four_room", "fig1", "mdp_file"};
    return names;
}

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(value);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline std::string join(const std::vector<std::string>& items, const char* sep = ", ") {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) out += (i ? sep : "") + items[i];
    return out;
}

}  // namespace detail

/// Ordered key/value pairs from a flat config file. Lines are `key = value`;
/// `#` starts a comment. Each entry remembers its source line.
struct RawConfig {
    struct Entry {
        std::string value;
        std::size_t line = 0;
    };
    std::map<std::string, Entry> entries;

    static RawConfig parse(std::istream& in) {
        RawConfig raw;
        std::string line;
        std::size_t number = 0;
        while (std::getline(in, line)) {
            ++number;
            if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            const auto text = detail::trim(line);
            if (text.empty()) continue;
            const auto eq = text.find('=');
            if (eq == std::string::npos) throw ConfigError(number, "expected `key = value`");
            const auto key = detail::trim(text.substr(0, eq));
            const auto value = detail::trim(text.substr(eq + 1));
            if (key.empty()) throw ConfigError(number, "missing key");
            if (value.empty()) throw ConfigError(number, "missing value for " + key);
            if (key.find_first_of(" \t") != std::string::npos) throw ConfigError(number, "key contains whitespace");
            if (raw.entries.count(key)) throw ConfigError(number, "duplicate key " + key);
            raw.entries[key] = {value, number};
        }
        return raw;
    }

    static RawConfig parse(const std::string& text) {
        std::istringstream in(text);
        return parse(in);
    }

    static RawConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open config " + path);
        return parse(in);
    }

    /// Serialized form; reading it back yields the same entries.
    std::string canonical() const {
        std::string out;
        for (const auto& [k, e] : entries) out += k + " = " + e.value + "\n";
        return out;
    }
};

/// Environment selection. `mdp_file` loads an MDP document and treats the
/// listed states as terminal.
struct EnvConfig {
    std::string name = "four_room";
    FourRoomSpec four_room;
    std::size_t max_steps = 100;
    std::string path;
    std::vector<StateId> terminal;
};

struct ExperimentConfig {
    EnvConfig env;
    std::vector<std::string> agents;
    std::map<std::string, AgentConfig> agent_configs;
    std::size_t num_seeds = 1;
    std::uint64_t seed = 0;
    std::size_t eval_period = 10000;
    std::size_t final_window = 100;
    std::string out;
    std::map<std::string, std::vector<std::string>> sweep;  ///< key -> values
    RawConfig raw;

    std::uint64_t hash() const { return fnv1a(raw.canonical()); }
};

namespace detail {

template <class T>
T parse_number(const RawConfig::Entry& e, const std::string& key) {
    T value{};
    const auto* first = e.value.data();
    const auto* last = first + e.value.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) throw ConfigError(e.line, "invalid number for " + key + ": " + e.value);
    return value;
}

inline bool parse_bool(const RawConfig::Entry& e, const std::string& key) {
    if (e.value == "true" || e.value == "1") return true;
    if (e.value == "false" || e.value == "0") return false;
    throw ConfigError(e.line, "invalid boolean for " + key + ": " + e.value);
}

/// Applies one `field = value` to an agent config; false if the field is unknown.
inline bool apply_agent_field(AgentConfig& c, const std::string& field, const RawConfig::Entry& e,
                              const std::string& key) {
    const auto real = [&](double& d) { d = parse_number<double>(e, key); };
    const auto size = [&](std::size_t& n) { n = parse_number<std::size_t>(e, key); };
    if (field == "alpha") real(c.alpha);
    else if (field == "lambda") real(c.lambda);
    else if (field == "delta") real(c.delta);
    else if (field == "epsilon_initial") real(c.epsilon_initial);
    else if (field == "epsilon_final") real(c.epsilon_final);
    else if (field == "epsilon_decay_steps") size(c.epsilon_decay_steps);
    else if (field == "learning_rate") real(c.learning_rate);
    else if (field == "actor_learning_rate") real(c.actor_learning_rate);
    else if (field == "q_init") real(c.q_init);
    else if (field == "importance_clip") real(c.importance_clip);
    else if (field == "buffer_capacity") size(c.buffer_capacity);
    else if (field == "batch_size") size(c.batch_size);
    else if (field == "update_period") size(c.update_period);
    else if (field == "gradient_steps") size(c.gradient_steps);
    else if (field == "learning_starts") size(c.learning_starts);
    else if (field == "regularization_starts") size(c.regularization_starts);
    else if (field == "total_steps") size(c.total_steps);
    else if (field == "eval_episodes") size(c.eval_episodes);
    else if (field == "record_bonus_trace") c.record_bonus_trace = parse_bool(e, key);
    else if (field == "posterior") {
        if (e.value == "exact") c.posterior = PosteriorSource::exact;
        else if (e.value == "learned") c.posterior = PosteriorSource::learned;
        else throw ConfigError(e.line, "posterior must be `exact` or `learned`");
    } else return false;
    return true;
}

inline AgentConfig agent_defaults(const std::string& agent) {
    return agent.ends_with("_ac") ? AgentConfig::actor_critic_defaults() : AgentConfig::q_learning_defaults();
}

}  // namespace detail

/// Builds a validated experiment from parsed entries. Keys:
///   env.name, env.n_right_copies, env.grid_size, env.max_steps, env.goal_reward,
///   env.gamma, env.path, env.terminal;
///   agents (comma list); agent.<field> for all agents; <agent>.<field> for one;
///   run.num_seeds, run.seed, run.eval_period, run.final_window, run.out;
///   sweep.<key> = v1, v2, ... (used by the sweep command).
inline ExperimentConfig build_config(const RawConfig& raw) {
    using detail::parse_number;
    ExperimentConfig cfg;
    cfg.raw = raw;
    const auto& agents = known_agents();

    // Agent list first so per-agent overrides can be checked against it.
    if (const auto it = raw.entries.find("agents"); it != raw.entries.end()) {
        cfg.agents = detail::split_list(it->second.value);
        for (const auto& a : cfg.agents)
            if (std::find(agents.begin(), agents.end(), a) == agents.end())
                throw ConfigError(it->second.line, "unknown agent `" + a + "`; valid agents: " + detail::join(agents));
        if (cfg.agents.empty()) throw ConfigError(it->second.line, "agents list is empty");
    } else {
        throw ConfigError(0, "missing required key `agents`; valid agents: " + detail::join(agents));
    }
    for (const auto& a : cfg.agents) cfg.agent_configs[a] = detail::agent_defaults(a);

    std::vector<std::pair<std::string, const RawConfig::Entry*>> specific;
    for (const auto& [key, e] : raw.entries) {
        const auto dot = key.find('.');
        const auto head = key.substr(0, dot);
        const auto field = dot == std::string::npos ? std::string() : key.substr(dot + 1);
        if (key == "agents") continue;
        if (head == "env") {
            auto& env = cfg.env;
            if (field == "name") {
                const auto& envs = known_envs();
                if (std::find(envs.begin(), envs.end(), e.value) == envs.end())
                    throw ConfigError(e.line, "unknown environment `" + e.value + "`; valid: " + detail::join(envs));
                env.name = e.value;
            } else if (field == "n_right_copies") env.four_room.n_right_copies = parse_number<std::size_t>(e, key);
            else if (field == "grid_size") env.four_room.grid_size = parse_number<std::size_t>(e, key);
            else if (field == "max_steps") env.four_room.max_steps = env.max_steps = parse_number<std::size_t>(e, key);
            else if (field == "goal_reward") env.four_room.goal_reward = parse_number<double>(e, key);
            else if (field == "gamma") env.four_room.gamma = parse_number<double>(e, key);
            else if (field == "path") env.path = e.value;
            else if (field == "terminal") {
                for (const auto& item : detail::split_list(e.value))
                    env.terminal.push_back(parse_number<std::size_t>({item, e.line}, key));
            } else throw ConfigError(e.line, "unknown key " + key);
        } else if (head == "agent") {
            for (auto& [name, c] : cfg.agent_configs)
                if (!detail::apply_agent_field(c, field, e, key)) throw ConfigError(e.line, "unknown key " + key);
        } else if (head == "run") {
            if (field == "num_seeds") cfg.num_seeds = parse_number<std::size_t>(e, key);
            else if (field == "seed") cfg.seed = parse_number<std::uint64_t>(e, key);
            else if (field == "eval_period") cfg.eval_period = parse_number<std::size_t>(e, key);
            else if (field == "final_window") cfg.final_window = parse_number<std::size_t>(e, key);
            else if (field == "out") cfg.out = e.value;
            else throw ConfigError(e.line, "unknown key " + key);
        } else if (head == "sweep") {
            auto values = detail::split_list(e.value);
            if (values.empty()) throw ConfigError(e.line, "empty sweep for " + field);
            cfg.sweep[field] = std::move(values);
        } else if (std::find(agents.begin(), agents.end(), head) != agents.end()) {
            specific.emplace_back(key, &e);
        } else {
            throw ConfigError(e.line, "unknown key " + key);
        }
    }
    // Agent-specific overrides win over agent.* regardless of file order.
    for (const auto& [key, e] : specific) {
        const auto dot = key.find('.');
        const auto head = key.substr(0, dot);
        const auto it = cfg.agent_configs.find(head);
        if (it == cfg.agent_configs.end()) throw ConfigError(e->line, "override for agent `" + head + "` not listed in agents");
        if (!detail::apply_agent_field(it->second, key.substr(dot + 1), *e, key))
            throw ConfigError(e->line, "unknown key " + key);
    }

    if (cfg.num_seeds == 0) throw ConfigError(raw.entries.count("run.num_seeds") ? raw.entries.at("run.num_seeds").line : 0,
                                              "run.num_seeds must be at least 1");
    if (cfg.eval_period == 0) throw ConfigError(0, "run.eval_period must be positive");
    if (cfg.final_window == 0) throw ConfigError(0, "run.final_window must be positive");
    if (cfg.env.name == "mdp_file" && cfg.env.path.empty()) throw ConfigError(0, "env.path is required for mdp_file");
    for (const auto& [name, c] : cfg.agent_configs) {
        const auto v = c.violations();
        if (!v.empty()) throw ConfigError(0, name + ": " + v.front());
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) { return build_config(RawConfig::load(path)); }

/// Instantiates the configured environment.
inline EpisodicEnv make_env(const EnvConfig& env) {
    if (env.name == "four_room") return four_room(env.four_room).env;
    if (env.name == "fig1") {
        auto mdp = fig1_mdp(env.four_room.gamma);
        std::vector<bool> terminal(mdp.num_states(), false);
        for (StateId s = 1; s < mdp.num_states(); ++s) terminal[s] = true;
        return make_episodic(std::move(mdp), std::move(terminal), env.max_steps, "fig1");
    }
    if (env.name == "mdp_file") {
        auto mdp = load_mdp(env.path);
        std::vector<bool> terminal(mdp.num_states(), false);
        for (auto s : env.terminal) {
            if (s >= terminal.size()) throw ModelError("env.terminal lists state " + std::to_string(s) + " out of range");
            terminal[s] = true;
        }
        return make_episodic(std::move(mdp), std::move(terminal), env.max_steps, env.path);
    }
    throw ModelError("unknown environment " + env.name);
}

/// Runs one agent on one seed.
inline TrainingLog run_agent(const std::string& agent, const EpisodicEnv& env, const AgentConfig& config,
                             std::uint64_t seed) {
    if (agent == "minred_q") return minred_q_learning(env, config, seed);
    if (agent == "baseline_q") return baseline_q_learning(env, config, seed);
    if (agent == "minred_ac") return minred_actor_critic(env, config, seed);
    if (agent == "maxent_ac") return maxent_actor_critic(env, config, seed);
    throw std::invalid_argument("unknown agent `" + agent + "`; valid agents: " + detail::join(known_agents()));
}

}  // namespace minred
