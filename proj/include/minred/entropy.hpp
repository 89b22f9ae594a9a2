#pragma once

#include "minred/mdp.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace minred {

/// Raised when a quantity needs log P(s'|s,pi) at a successor the policy
/// never reaches.
class SupportError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// -p log p with 0 log 0 = 0. Natural log throughout.
inline double neg_plogp(double p) noexcept { return p > 0.0 ? -p * std::log(p) : 0.0; }

inline double shannon_entropy(std::span<const double> dist) noexcept {
    double h = 0.0;
    for (double p : dist) h += neg_plogp(p);
    return h;
}

/// Per-step action entropy h_pi(s) = -sum_a pi(a|s) log pi(a|s).
inline std::vector<double> action_entropy_per_state(const Policy& policy) {
    std::vector<double> h(policy.num_states());
    for (StateId s = 0; s < h.size(); ++s) h[s] = shannon_entropy(policy.row(s));
    return h;
}

/// Discounted action entropy to-go: H = h_pi + gamma P_pi H.
inline std::vector<double> action_entropy_togo(const TabularMDP& mdp, const Policy& policy) {
    require_compatible(mdp, policy);
    return solve_discounted(mdp, policy, action_entropy_per_state(policy));
}

namespace detail {

inline void require_support(const TabularMDP& mdp, std::span<const double> mixture, StateId s, ActionId a) {
    const auto row = mdp.row(s, a);
    for (StateId n = 0; n < row.size(); ++n) {
        if (row[n] > 0.0 && mixture[n] <= 0.0) {
            throw SupportError("successor " + std::to_string(n) + " of (s=" + std::to_string(s) +
                               ",a=" + std::to_string(a) + ") has zero probability under the policy");
        }
    }
}

inline double transition_score_from_mixture(const TabularMDP& mdp, std::span<const double> mixture, StateId s,
                                            ActionId a) {
    require_support(mdp, mixture, s, a);
    const auto row = mdp.row(s, a);
    double g = 0.0;
    for (StateId n = 0; n < row.size(); ++n)
        if (row[n] > 0.0) g -= row[n] * std::log(mixture[n]);
    return g;
}

}  // namespace detail

/// Transition score g_pi(s,a) = -E_{s'~P(.|s,a)} log P(s'|s,pi).
inline double transition_score_g(const TabularMDP& mdp, const Policy& policy, StateId s, ActionId a) {
    mdp.check_pair(s, a);
    const auto mixture = next_state_distribution(mdp, s, policy);
    return detail::transition_score_from_mixture(mdp, mixture, s, a);
}

struct GDecomposition {
    double model_entropy = 0.0;  ///< H(s'|s,a)
    double redundancy_kl = 0.0;  ///< KL(P(.|s,a) || P(.|s,pi))

    double total() const noexcept { return model_entropy + redundancy_kl; }
};

/// Splits g_pi(s,a) into the entropy of P(.|s,a) and its divergence from the
/// policy-averaged successor distribution.
inline GDecomposition decompose_g(const TabularMDP& mdp, const Policy& policy, StateId s, ActionId a) {
    mdp.check_pair(s, a);
    const auto mixture = next_state_distribution(mdp, s, policy);
    detail::require_support(mdp, mixture, s, a);
    const auto row = mdp.row(s, a);
    GDecomposition out;
    out.model_entropy = shannon_entropy(row);
    for (StateId n = 0; n < row.size(); ++n)
        if (row[n] > 0.0) out.redundancy_kl += row[n] * std::log(row[n] / mixture[n]);
    // KL is non-negative; rounding can leave a tiny negative remainder on equal rows.
    out.redundancy_kl = std::max(out.redundancy_kl, 0.0);
    return out;
}

/// g_pi(s) = sum_a pi(a|s) g_pi(s,a). Actions with pi(a|s) = 0 carry no weight.
inline std::vector<double> transition_score_per_state(const TabularMDP& mdp, const Policy& policy) {
    require_compatible(mdp, policy);
    std::vector<double> g(mdp.num_states(), 0.0);
    for (StateId s = 0; s < mdp.num_states(); ++s) {
        const auto mixture = next_state_distribution(mdp, s, policy);
        for (ActionId a = 0; a < mdp.num_actions(); ++a) {
            const double w = policy(s, a);
            if (w > 0.0) g[s] += w * detail::transition_score_from_mixture(mdp, mixture, s, a);
        }
    }
    return g;
}

/// Discounted transition entropy to-go: F = g_pi + gamma P_pi F.
inline std::vector<double> transition_entropy_togo(const TabularMDP& mdp, const Policy& policy) {
    return solve_discounted(mdp, policy, transition_score_per_state(mdp, policy));
}

/// Smallest horizon T with gamma^T < 1e-8 whose truncation remainder
/// gamma^T log(S) / (1 - gamma) is also below `remainder`.
inline std::size_t oracle_horizon(double gamma, std::size_t num_states, double remainder = 1e-12) {
    const double f_max = std::max(std::log(static_cast<double>(std::max<std::size_t>(num_states, 2))), 1.0);
    const double target = std::min(1e-8, remainder * (1.0 - gamma) / f_max);
    return static_cast<std::size_t>(std::ceil(std::log(target) / std::log(gamma))) + 1;
}

/// Evaluates the defining sum of F directly:
///   F(s) = sum_{t<T} gamma^t E_{s_t | s_0 = s} Entropy(P(.|s_t,pi)),
/// propagating the exact state distribution forward from each start.
/// Test oracle for transition_entropy_togo; requires gamma^horizon < 1e-8.
inline std::vector<double> truncated_entropy_oracle(const TabularMDP& mdp, const Policy& policy, std::size_t horizon) {
    require_compatible(mdp, policy);
    if (!(std::pow(mdp.gamma(), static_cast<double>(horizon)) < 1e-8))
        throw std::invalid_argument("truncated_entropy_oracle: gamma^horizon must be below 1e-8");
    const auto S = mdp.num_states();
    std::vector<std::vector<double>> next(S);
    std::vector<double> step_entropy(S);
    for (StateId s = 0; s < S; ++s) {
        next[s] = next_state_distribution(mdp, s, policy);
        step_entropy[s] = shannon_entropy(next[s]);
    }

    std::vector<double> out(S, 0.0);
    std::vector<double> dist(S), buffer(S);
    for (StateId start = 0; start < S; ++start) {
        std::fill(dist.begin(), dist.end(), 0.0);
        dist[start] = 1.0;
        double discount = 1.0;
        double total = 0.0;
        for (std::size_t t = 0; t < horizon; ++t) {
            double expected = 0.0;
            for (StateId s = 0; s < S; ++s) expected += dist[s] * step_entropy[s];
            total += discount * expected;
            std::fill(buffer.begin(), buffer.end(), 0.0);
            for (StateId s = 0; s < S; ++s) {
                if (dist[s] == 0.0) continue;
                for (StateId n = 0; n < S; ++n) buffer[n] += dist[s] * next[s][n];
            }
            dist.swap(buffer);
            discount *= mdp.gamma();
        }
        out[start] = total;
    }
    return out;
}

struct Objectives {
    std::vector<double> action_entropy;      ///< O_AE = v + alpha H
    std::vector<double> transition_entropy;  ///< O_TE = v + alpha F
};

inline Objectives objectives(const TabularMDP& mdp, const Policy& policy, double alpha) {
    const auto values = policy_values(mdp, policy);
    const auto H = action_entropy_togo(mdp, policy);
    const auto F = transition_entropy_togo(mdp, policy);
    Objectives out;
    out.action_entropy.resize(H.size());
    out.transition_entropy.resize(F.size());
    for (StateId s = 0; s < H.size(); ++s) {
        out.action_entropy[s] = values.v[s] + alpha * H[s];
        out.transition_entropy[s] = values.v[s] + alpha * F[s];
    }
    return out;
}

/// All probability vectors of length `num_actions` whose entries are
/// multiples of 1/steps, in lexicographic order.
inline std::vector<std::vector<double>> simplex_grid(std::size_t num_actions, std::size_t steps) {
    std::vector<std::vector<double>> out;
    std::vector<std::size_t> counts(num_actions, 0);
    const auto emit = [&] {
        std::vector<double> p(num_actions);
        for (std::size_t i = 0; i < num_actions; ++i)
            p[i] = static_cast<double>(counts[i]) / static_cast<double>(steps);
        out.push_back(std::move(p));
    };
    std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t i, std::size_t remaining) {
        if (i + 1 == num_actions) {
            counts[i] = remaining;
            emit();
            return;
        }
        for (std::size_t c = 0; c <= remaining; ++c) {
            counts[i] = c;
            rec(i + 1, remaining - c);
        }
    };
    rec(0, steps);
    return out;
}

/// Number of points on the simplex grid, C(steps + A - 1, A - 1), saturating.
inline double simplex_grid_size(std::size_t num_actions, std::size_t steps) {
    double n = 1.0;
    for (std::size_t k = 1; k < num_actions; ++k)
        n = n * static_cast<double>(steps + k) / static_cast<double>(k);
    return n;
}

enum class StartWeighting {
    initial,     ///< weight F by rho0
    visitation,  ///< weight F by the discounted visitation of the candidate policy
};

struct GridSearchOptions {
    double resolution = 0.01;
    StartWeighting weighting = StartWeighting::initial;
    double max_evaluations = 5e6;
    /// Candidates within this of the best score are reported as co-optimal.
    double tie_tolerance = 1e-9;
};

struct GridSearchResult {
    Policy best_policy;
    double best_value = -std::numeric_limits<double>::infinity();
    std::vector<double> best_F;
    std::vector<Policy> optimal_policies;
    std::size_t evaluated = 0;
};

/// States at which some two actions have different transition rows. Only these
/// affect F, so the search fixes every other state to the uniform policy.
inline std::vector<StateId> decision_states(const TabularMDP& mdp) {
    std::vector<StateId> out;
    for (StateId s = 0; s < mdp.num_states(); ++s) {
        const auto first = mdp.row(s, 0);
        for (ActionId a = 1; a < mdp.num_actions(); ++a) {
            const auto row = mdp.row(s, a);
            if (!std::equal(first.begin(), first.end(), row.begin())) {
                out.push_back(s);
                break;
            }
        }
    }
    return out;
}

/// Exhaustive search over the product of per-state simplex grids for the
/// policy maximizing the start-weighted transition entropy to-go.
inline GridSearchResult brute_force_max_transition_entropy(const TabularMDP& mdp, const GridSearchOptions& options = {}) {
    if (!(options.resolution > 0.0 && options.resolution <= 1.0))
        throw std::invalid_argument("resolution must lie in (0, 1]");
    const auto steps = static_cast<std::size_t>(std::llround(1.0 / options.resolution));
    const auto states = decision_states(mdp);
    const double per_state = simplex_grid_size(mdp.num_actions(), steps);
    const double total = std::pow(per_state, static_cast<double>(states.size()));
    if (total > options.max_evaluations) {
        throw std::length_error("grid search would evaluate " + std::to_string(total) + " policies (cap " +
                                std::to_string(options.max_evaluations) + ")");
    }

    const auto grid = simplex_grid(mdp.num_actions(), steps);
    GridSearchResult result;
    Policy candidate = Policy::uniform(mdp.num_states(), mdp.num_actions());
    std::vector<std::size_t> cursor(states.size(), 0);

    const auto score = [&](const Policy& policy, const std::vector<double>& F) {
        std::vector<double> weights;
        if (options.weighting == StartWeighting::initial) {
            weights.assign(mdp.initial().begin(), mdp.initial().end());
        } else {
            weights = state_visitation(mdp, policy);
        }
        return std::inner_product(weights.begin(), weights.end(), F.begin(), 0.0);
    };

    while (true) {
        for (std::size_t i = 0; i < states.size(); ++i) candidate.set_row(states[i], grid[cursor[i]]);
        const auto F = transition_entropy_togo(mdp, candidate);
        const double value = score(candidate, F);
        ++result.evaluated;
        if (value > result.best_value + options.tie_tolerance) {
            result.best_value = value;
            result.best_policy = candidate;
            result.best_F = F;
            result.optimal_policies.clear();
            result.optimal_policies.push_back(candidate);
        } else if (value >= result.best_value - options.tie_tolerance) {
            result.optimal_policies.push_back(candidate);
            if (value > result.best_value) {
                result.best_value = value;
                result.best_policy = candidate;
                result.best_F = F;
            }
        }

        std::size_t i = 0;
        while (i < cursor.size() && ++cursor[i] == grid.size()) cursor[i++] = 0;
        if (i == cursor.size()) break;
    }
    // Drop early entries that the final best pushed out of the tie band.
    std::erase_if(result.optimal_policies, [&](const Policy& p) {
        return score(p, transition_entropy_togo(mdp, p)) < result.best_value - options.tie_tolerance;
    });
    return result;
}

}  // namespace minred
