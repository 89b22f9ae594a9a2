#pragma once

#include "minred/envs.hpp"
#include "minred/posterior.hpp"
#include "minred/redundancy.hpp"
#include "minred/replay.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace minred {

enum class PosteriorSource {
    learned,  ///< counts over the transitions currently in replay
    exact,    ///< Bayes posterior from the environment model
};

/// Hyper-parameters shared by every agent. Defaults follow the deep-RL
/// settings where they make sense at tabular scale.
struct AgentConfig {
    double alpha = 0.01;   ///< entropy / ARR coefficient
    double lambda = 0.0;   ///< extra action-entropy weight added to the ARR bonus
    double delta = kDefaultDelta;

    double epsilon_initial = 1.0;
    double epsilon_final = 0.05;
    std::size_t epsilon_decay_steps = 0;  ///< 0: first 10% of total_steps

    double learning_rate = 0.1;        ///< Q / critic step size
    double actor_learning_rate = 1.0;  ///< softmax logits step size
    double q_init = 0.0;
    double importance_clip = 10.0;

    std::size_t buffer_capacity = 100000;
    std::size_t batch_size = 32;
    std::size_t update_period = 1;   ///< K: environment steps per training round
    std::size_t gradient_steps = 1;  ///< N: batches per training round
    std::size_t learning_starts = 10000;
    std::size_t regularization_starts = 20000;
    std::size_t total_steps = 300000;
    std::size_t eval_episodes = 100;

    PosteriorSource posterior = PosteriorSource::learned;
    bool record_bonus_trace = false;

    static AgentConfig q_learning_defaults() { return {}; }

    static AgentConfig actor_critic_defaults() {
        AgentConfig c;
        c.batch_size = 256;
        return c;
    }

    std::size_t decay_steps() const {
        return epsilon_decay_steps ? epsilon_decay_steps : std::max<std::size_t>(1, total_steps / 10);
    }

    /// Linear decay from epsilon_initial to epsilon_final, then constant.
    double epsilon(std::size_t step) const {
        const double frac = std::min(1.0, static_cast<double>(step) / static_cast<double>(decay_steps()));
        return epsilon_initial + frac * (epsilon_final - epsilon_initial);
    }

    std::vector<std::string> violations() const {
        std::vector<std::string> out;
        const auto positive = [&](double v, const char* name) {
            if (!(v > 0.0)) out.push_back(std::string(name) + " must be positive");
        };
        if (alpha < 0.0) out.push_back("alpha must be non-negative");
        if (lambda < 0.0) out.push_back("lambda must be non-negative");
        positive(delta, "delta");
        positive(learning_rate, "learning_rate");
        if (actor_learning_rate < 0.0) out.push_back("actor_learning_rate must be non-negative");
        positive(importance_clip, "importance_clip");
        if (epsilon_initial < 0.0 || epsilon_initial > 1.0 || epsilon_final < 0.0 || epsilon_final > 1.0)
            out.push_back("epsilon values must lie in [0,1]");
        if (epsilon_final > epsilon_initial) out.push_back("epsilon schedule must be non-increasing");
        if (buffer_capacity == 0) out.push_back("buffer_capacity must be positive");
        if (batch_size == 0) out.push_back("batch_size must be positive");
        if (update_period == 0) out.push_back("update_period must be positive");
        if (gradient_steps == 0) out.push_back("gradient_steps must be positive");
        if (total_steps == 0) out.push_back("total_steps must be positive");
        return out;
    }

    void require_valid() const {
        const auto v = violations();
        if (!v.empty()) throw std::invalid_argument("invalid agent config: " + v.front());
    }
};

/// One completed training episode.
struct LogRecord {
    std::size_t step = 0;     ///< environment steps taken when the episode ended
    std::size_t episode = 0;
    double ret = 0.0;         ///< undiscounted episode return
    double epsilon = std::numeric_limits<double>::quiet_NaN();
    std::size_t clamp_count = 0;             ///< cumulative
    std::size_t synthetic_insert_count = 0;  ///< cumulative
    double mean_zeta = std::numeric_limits<double>::quiet_NaN();

    bool operator==(const LogRecord& o) const {
        const auto same = [](double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); };
        return step == o.step && episode == o.episode && same(ret, o.ret) && same(epsilon, o.epsilon) &&
               clamp_count == o.clamp_count && synthetic_insert_count == o.synthetic_insert_count &&
               same(mean_zeta, o.mean_zeta);
    }
};

struct TrainingLog {
    std::string agent;
    std::uint64_t seed = 0;
    std::vector<LogRecord> records;
    std::vector<std::uint64_t> visitation;          ///< training visits per state
    std::vector<std::uint64_t> eval_action_counts;  ///< actions chosen in evaluation episodes
    std::vector<double> eval_returns;
    std::vector<double> bonus_trace;                ///< every critic bonus, when recorded
    std::vector<double> final_q;                    ///< value table after training, row-major (s,a)
    std::vector<double> final_policy;               ///< actor probabilities after training; empty for Q-learning
    std::uint64_t trajectory_hash = 0xcbf29ce484222325ULL;  ///< FNV-1a over real (s,a,r,s')
    std::size_t clamp_count = 0;
    std::size_t synthetic_insert_count = 0;

    /// Mean return of the last `window` training episodes (fewer if the run
    /// completed fewer).
    double final_mean_return(std::size_t window = 100) const {
        if (records.empty()) return 0.0;
        const auto n = std::min(window, records.size());
        double sum = 0.0;
        for (auto it = records.end() - static_cast<std::ptrdiff_t>(n); it != records.end(); ++it) sum += it->ret;
        return sum / static_cast<double>(n);
    }

    /// Mean return of the last `window` episodes completed by `step`.
    double trailing_mean_return(std::size_t step, std::size_t window = 100) const {
        const auto end = std::upper_bound(records.begin(), records.end(), step,
                                          [](std::size_t s, const LogRecord& r) { return s < r.step; });
        const auto n = std::min<std::size_t>(window, static_cast<std::size_t>(end - records.begin()));
        if (n == 0) return 0.0;
        double sum = 0.0;
        for (auto it = end - static_cast<std::ptrdiff_t>(n); it != end; ++it) sum += it->ret;
        return sum / static_cast<double>(n);
    }

    bool operator==(const TrainingLog&) const = default;
};

/// Per-action selection counts from the evaluation episodes.
inline std::vector<std::uint64_t> action_histogram(const TrainingLog& log) { return log.eval_action_counts; }

/// Fraction of histogram mass on `actions`.
inline double histogram_mass(std::span<const std::uint64_t> counts, std::span<const ActionId> actions) {
    std::uint64_t total = 0, part = 0;
    for (auto c : counts) total += c;
    for (auto a : actions) part += counts[a];
    return total ? static_cast<double>(part) / static_cast<double>(total) : 0.0;
}

/// Tabular action values with lowest-index tie-breaking.
class QTable {
public:
    QTable(std::size_t num_states, std::size_t num_actions, double init)
        : num_actions_(num_actions), values_(num_states * num_actions, init) {}

    double operator()(StateId s, ActionId a) const { return values_[s * num_actions_ + a]; }
    double& at(StateId s, ActionId a) { return values_[s * num_actions_ + a]; }
    std::span<const double> row(StateId s) const { return {values_.data() + s * num_actions_, num_actions_}; }
    const std::vector<double>& values() const noexcept { return values_; }

    ActionId greedy(StateId s) const {
        const auto r = row(s);
        return static_cast<ActionId>(std::max_element(r.begin(), r.end()) - r.begin());
    }
    double max(StateId s) const {
        const auto r = row(s);
        return *std::max_element(r.begin(), r.end());
    }

private:
    std::size_t num_actions_;
    std::vector<double> values_;
};

/// Softmax policy over per-state logits. Keeps the probability table in sync
/// with the logits, so every probability stays strictly positive.
class SoftmaxActor {
public:
    SoftmaxActor(std::size_t num_states, std::size_t num_actions)
        : num_actions_(num_actions),
          logits_(num_states * num_actions, 0.0),
          probs_(num_states * num_actions, 1.0 / static_cast<double>(num_actions)) {}

    std::span<const double> probs(StateId s) const { return {probs_.data() + s * num_actions_, num_actions_}; }
    double prob(StateId s, ActionId a) const { return probs_[s * num_actions_ + a]; }
    std::span<const double> logits(StateId s) const { return {logits_.data() + s * num_actions_, num_actions_}; }
    const std::vector<double>& table() const noexcept { return probs_; }

    /// logits(s,.) += step * grad, then renormalize the row.
    void ascend(StateId s, std::span<const double> grad, double step) {
        double* l = logits_.data() + s * num_actions_;
        for (ActionId a = 0; a < num_actions_; ++a) l[a] += step * grad[a];
        refresh(s);
    }

    Policy policy() const {
        Policy p(probs_.size() / num_actions_, num_actions_);
        for (StateId s = 0; s < p.num_states(); ++s) p.set_row(s, probs(s));
        return p;
    }

private:
    void refresh(StateId s) {
        const double* l = logits_.data() + s * num_actions_;
        double* p = probs_.data() + s * num_actions_;
        const double top = *std::max_element(l, l + num_actions_);
        double total = 0.0;
        for (ActionId a = 0; a < num_actions_; ++a) total += (p[a] = std::exp(l[a] - top));
        for (ActionId a = 0; a < num_actions_; ++a) p[a] /= total;
    }

    std::size_t num_actions_;
    std::vector<double> logits_;
    std::vector<double> probs_;
};

namespace detail {

inline void hash_step(std::uint64_t& h, const Step& step) {
    const auto mix = [&](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xff;
            h *= 0x100000001b3ULL;
        }
    };
    mix(step.state);
    mix(step.action);
    std::uint64_t bits;
    std::memcpy(&bits, &step.reward, sizeof bits);
    mix(bits);
    mix(step.next_state);
}

/// Shared episode bookkeeping for every agent loop.
struct EpisodeTracker {
    TrainingLog& log;
    std::size_t episode = 0;
    std::size_t length = 0;
    double ret = 0.0;
    double zeta_sum = 0.0;
    std::size_t zeta_count = 0;

    void add_zeta(double z) {
        zeta_sum += z;
        ++zeta_count;
    }

    void finish(std::size_t step, double epsilon) {
        LogRecord r;
        r.step = step;
        r.episode = episode++;
        r.ret = ret;
        r.epsilon = epsilon;
        r.clamp_count = log.clamp_count;
        r.synthetic_insert_count = log.synthetic_insert_count;
        if (zeta_count) r.mean_zeta = zeta_sum / static_cast<double>(zeta_count);
        log.records.push_back(r);
        ret = 0.0;
        length = 0;
        zeta_sum = 0.0;
        zeta_count = 0;
    }
};

inline void require_env(const EpisodicEnv& env) {
    if (env.terminal.size() != env.num_states()) throw ModelError("environment terminal mask does not match its model");
    if (env.max_steps == 0) throw ModelError("environment step cap must be positive");
}

}  // namespace detail

/// Q-learning from uniform replay. With `minred`, every real transition
/// (s,a,r,s') also stores (s,a',r,s') for each a' in A_delta(s,s') once
/// regularization_starts steps have elapsed.
///
/// The posterior comes from `posterior` when supplied, otherwise from
/// config.posterior: the exact posterior under the uniform policy, or counts
/// over the real transitions currently held in replay.
inline TrainingLog q_learning(const EpisodicEnv& env, const AgentConfig& config, bool minred, std::uint64_t seed,
                              const ActionPosterior* posterior = nullptr) {
    config.require_valid();
    detail::require_env(env);
    const auto S = env.num_states();
    const auto A = env.num_actions();
    const double gamma = env.mdp.gamma();

    Engine env_rng = make_engine(seed, "env");
    Engine action_rng = make_engine(seed, "action");
    Engine replay_rng = make_engine(seed, "replay");
    Engine eval_rng = make_engine(seed, "eval");

    std::optional<ActionPosterior> owned;
    const ActionPosterior* post = posterior;
    ActionPosterior* learned = nullptr;
    if (!post) {
        if (config.posterior == PosteriorSource::exact) {
            owned = exact_posterior(env.mdp, Policy::uniform(S, A));
        } else {
            owned.emplace(S, A, PosteriorMode::estimated);
            learned = &*owned;
        }
        post = &*owned;
    }

    TrainingLog log;
    log.agent = minred ? "minred_q" : "baseline_q";
    log.seed = seed;
    log.visitation.assign(S, 0);
    QTable Q(S, A, config.q_init);
    ReplayBuffer replay(config.buffer_capacity);
    detail::EpisodeTracker tracker{log};

    const auto select = [&](StateId s, double eps, Engine& rng) {
        if (uniform01(rng) < eps) return uniform_index(rng, A);
        return Q.greedy(s);
    };
    const auto store = [&](ReplayEntry entry) {
        if (auto evicted = replay.push(std::move(entry)); evicted && learned && !evicted->synthetic)
            learned->observe(evicted->state, evicted->action, evicted->next_state, -1);
    };

    StateId s = env.reset(env_rng);
    for (std::size_t step = 0; step < config.total_steps; ++step) {
        const double eps = config.epsilon(step);
        const ActionId a = select(s, eps, action_rng);
        const auto [next, r] = sample_step(env.mdp, s, a, env_rng);
        const bool terminal = env.is_terminal(next);
        ++log.visitation[s];
        detail::hash_step(log.trajectory_hash, {s, a, r, next});

        store({s, a, r, next, terminal, false, {}});
        if (learned) learned->observe(s, a, next);
        if (minred && step >= config.regularization_starts) {
            const auto redundant = delta_redundant_set(*post, s, next, config.delta);
            for (ActionId other : redundant.actions) {
                if (other == a) continue;
                store({s, other, r, next, terminal, true, {}});
                ++log.synthetic_insert_count;
            }
        }

        if (step >= config.learning_starts && step % config.update_period == 0) {
            for (std::size_t n = 0; n < config.gradient_steps; ++n) {
                for (std::size_t b = 0; b < config.batch_size; ++b) {
                    const auto& e = replay.sample(replay_rng);
                    const double target = e.reward + (e.terminal ? 0.0 : gamma * Q.max(e.next_state));
                    Q.at(e.state, e.action) += config.learning_rate * (target - Q(e.state, e.action));
                }
            }
        }

        tracker.ret += r;
        ++tracker.length;
        s = next;
        if (terminal || tracker.length >= env.max_steps) {
            tracker.finish(step + 1, eps);
            s = env.reset(env_rng);
        }
    }

    log.final_q = Q.values();
    log.eval_action_counts.assign(A, 0);
    for (std::size_t ep = 0; ep < config.eval_episodes; ++ep) {
        StateId x = env.reset(eval_rng);
        double ret = 0.0;
        for (std::size_t t = 0; t < env.max_steps; ++t) {
            const ActionId a = select(x, config.epsilon_final, eval_rng);
            ++log.eval_action_counts[a];
            const auto [next, r] = sample_step(env.mdp, x, a, eval_rng);
            ret += r;
            x = next;
            if (env.is_terminal(x)) break;
        }
        log.eval_returns.push_back(ret);
    }
    return log;
}

inline TrainingLog minred_q_learning(const EpisodicEnv& env, const AgentConfig& config, std::uint64_t seed,
                                     const ActionPosterior* posterior = nullptr) {
    return q_learning(env, config, true, seed, posterior);
}

inline TrainingLog baseline_q_learning(const EpisodicEnv& env, const AgentConfig& config, std::uint64_t seed) {
    return q_learning(env, config, false, seed);
}

enum class BonusKind {
    action_entropy,  ///< -log pi(a|s)
    redundancy,      ///< importance-weighted ARR
};

/// clip(pi(a|s) / pi_i(a|s), 0, clip).
inline double importance_ratio(double current, double behavior, double clip) {
    return std::min(current / behavior, clip);
}

/// ARR of (s,a,s') under the current policy row, from the environment model.
/// Probabilities are floored at kPolicyFloor before Bayes inversion.
inline double exact_arr(const TabularMDP& mdp, std::span<const double> probs, StateId s, ActionId a, StateId next) {
    double mixture = 0.0;
    for (ActionId b = 0; b < probs.size(); ++b) mixture += std::max(probs[b], kPolicyFloor) * mdp.prob(s, b, next);
    const double pa = std::max(probs[a], kPolicyFloor);
    const double q = pa * mdp.prob(s, a, next) / mixture;
    return std::log(std::max(q, kPosteriorFloor)) - std::log(pa);
}

/// Tabular soft actor-critic. The critic regresses onto
///   r + bonus + gamma * sum_a' pi(a'|s') Q(s',a')
/// and the actor follows the all-actions softmax policy gradient against it.
///
/// The action-entropy bonus is alpha * -log pi(a|s). The redundancy bonus is
/// alpha * rho * zeta(s,a,s') + lambda * -log pi(a|s), where zeta is the ARR
/// and rho the clipped ratio pi / pi_i. With an exact posterior, zeta is
/// evaluated under the current policy and rho is identically 1.
inline TrainingLog actor_critic(const EpisodicEnv& env, const AgentConfig& config, BonusKind bonus, std::uint64_t seed) {
    config.require_valid();
    detail::require_env(env);
    const auto S = env.num_states();
    const auto A = env.num_actions();
    const double gamma = env.mdp.gamma();
    const bool exact = config.posterior == PosteriorSource::exact;

    Engine env_rng = make_engine(seed, "env");
    Engine action_rng = make_engine(seed, "action");
    Engine replay_rng = make_engine(seed, "replay");
    Engine eval_rng = make_engine(seed, "eval");

    TrainingLog log;
    log.agent = bonus == BonusKind::redundancy ? "minred_ac" : "maxent_ac";
    log.seed = seed;
    log.visitation.assign(S, 0);

    QTable Q(S, A, config.q_init);
    SoftmaxActor actor(S, A);
    ReplayBuffer replay(config.buffer_capacity);
    ActionPosterior counts(S, A, PosteriorMode::estimated);
    std::vector<std::uint64_t> action_counts(S * A, 0);  // replay action frequencies, the policy counts was fit under
    std::vector<std::uint64_t> state_counts(S, 0);
    detail::EpisodeTracker tracker{log};
    std::vector<double> grad(A);

    const auto entropy_bonus = [&](StateId s, ActionId a) {
        return -std::log(std::max(actor.prob(s, a), kPolicyFloor));
    };

    const auto critic_bonus = [&](const ReplayEntry& e) {
        if (bonus == BonusKind::action_entropy) return config.alpha * entropy_bonus(e.state, e.action);
        double zeta, rho = 1.0;
        if (exact) {
            zeta = exact_arr(env.mdp, actor.probs(e.state), e.state, e.action, e.next_state);
        } else {
            const double behavior = std::max(e.behavior_probs[e.action], kPolicyFloor);
            rho = importance_ratio(std::max(actor.prob(e.state, e.action), kPolicyFloor), behavior,
                                   config.importance_clip);
            const double data_prob = static_cast<double>(action_counts[e.state * A + e.action]) /
                                     static_cast<double>(state_counts[e.state]);
            zeta = arr(counts, std::max(data_prob, kPolicyFloor), e.state, e.action, e.next_state, &log.clamp_count);
        }
        tracker.add_zeta(zeta);
        double value = config.alpha * rho * zeta;
        if (config.lambda > 0.0) value += config.lambda * entropy_bonus(e.state, e.action);
        return value;
    };

    StateId s = env.reset(env_rng);
    for (std::size_t step = 0; step < config.total_steps; ++step) {
        const ActionId a = sample_discrete(action_rng, actor.probs(s));
        const auto [next, r] = sample_step(env.mdp, s, a, env_rng);
        const bool terminal = env.is_terminal(next);
        ++log.visitation[s];
        detail::hash_step(log.trajectory_hash, {s, a, r, next});

        const auto probs = actor.probs(s);
        ReplayEntry entry{s, a, r, next, terminal, false, std::vector<double>(probs.begin(), probs.end())};
        if (auto evicted = replay.push(std::move(entry))) {
            counts.observe(evicted->state, evicted->action, evicted->next_state, -1);
            --action_counts[evicted->state * A + evicted->action];
            --state_counts[evicted->state];
        }
        counts.observe(s, a, next);
        ++action_counts[s * A + a];
        ++state_counts[s];

        if (step >= config.learning_starts && step % config.update_period == 0) {
            for (std::size_t n = 0; n < config.gradient_steps; ++n) {
                for (std::size_t b = 0; b < config.batch_size; ++b) {
                    const auto& e = replay.sample(replay_rng);
                    const double shaped = critic_bonus(e);
                    if (config.record_bonus_trace) log.bonus_trace.push_back(shaped);
                    double next_value = 0.0;
                    if (!e.terminal) {
                        const auto p = actor.probs(e.next_state);
                        const auto q = Q.row(e.next_state);
                        for (ActionId k = 0; k < A; ++k) next_value += p[k] * q[k];
                    }
                    const double target = e.reward + shaped + gamma * next_value;
                    Q.at(e.state, e.action) += config.learning_rate * (target - Q(e.state, e.action));

                    if (config.actor_learning_rate > 0.0) {
                        const auto p = actor.probs(e.state);
                        const auto q = Q.row(e.state);
                        double v = 0.0;
                        for (ActionId k = 0; k < A; ++k) v += p[k] * q[k];
                        for (ActionId k = 0; k < A; ++k) grad[k] = p[k] * (q[k] - v);
                        actor.ascend(e.state, grad, config.actor_learning_rate);
                    }
                }
            }
        }

        tracker.ret += r;
        ++tracker.length;
        s = next;
        if (terminal || tracker.length >= env.max_steps) {
            tracker.finish(step + 1, std::numeric_limits<double>::quiet_NaN());
            s = env.reset(env_rng);
        }
    }

    log.final_q = Q.values();
    log.final_policy = actor.table();
    log.eval_action_counts.assign(A, 0);
    for (std::size_t ep = 0; ep < config.eval_episodes; ++ep) {
        StateId x = env.reset(eval_rng);
        double ret = 0.0;
        for (std::size_t t = 0; t < env.max_steps; ++t) {
            const ActionId a = sample_discrete(eval_rng, actor.probs(x));
            ++log.eval_action_counts[a];
            const auto [next, r] = sample_step(env.mdp, x, a, eval_rng);
            ret += r;
            x = next;
            if (env.is_terminal(x)) break;
        }
        log.eval_returns.push_back(ret);
    }
    return log;
}

inline TrainingLog minred_actor_critic(const EpisodicEnv& env, const AgentConfig& config, std::uint64_t seed) {
    return actor_critic(env, config, BonusKind::redundancy, seed);
}

inline TrainingLog maxent_actor_critic(const EpisodicEnv& env, const AgentConfig& config, std::uint64_t seed) {
    return actor_critic(env, config, BonusKind::action_entropy, seed);
}

}  // namespace minred
