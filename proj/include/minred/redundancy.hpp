#pragma once

#include "minred/entropy.hpp"
#include "minred/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace minred {

/// Floor applied to q inside the ARR logarithm when an estimated posterior
/// assigns zero mass to an observed action.
inline constexpr double kPosteriorFloor = 1e-6;
/// Minimum behavior probability fed into ARR computations.
inline constexpr double kPolicyFloor = 1e-4;
/// Default threshold for delta-redundant action sets.
inline constexpr double kDefaultDelta = 0.05;

/// Bayes inversion q(a|s,s') = pi(a|s) P(s'|s,a) / P(s'|s,pi), one row for
/// every (s, s') with P(s'|s,pi) > 0.
inline ActionPosterior exact_posterior(const TabularMDP& mdp, const Policy& policy) {
    require_compatible(mdp, policy);
    const auto S = mdp.num_states();
    const auto A = mdp.num_actions();
    ActionPosterior post(S, A, PosteriorMode::exact);
    std::vector<double> joint(A);
    for (StateId s = 0; s < S; ++s) {
        const auto mixture = next_state_distribution(mdp, s, policy);
        for (StateId n = 0; n < S; ++n) {
            if (mixture[n] <= 0.0) continue;
            for (ActionId a = 0; a < A; ++a) joint[a] = policy(s, a) * mdp.prob(s, a, n) / mixture[n];
            post.set_row(s, n, joint);
        }
    }
    return post;
}

/// Action redundancy score from the successor map:
/// eta(s,a) = sum of pi(a'|s) over a' != a with f(s,a') = f(s,a).
inline double ars_exact(const TabularMDP& mdp, const Policy& policy, StateId s, ActionId a) {
    if (!mdp.is_deterministic()) throw ModelError("ars_exact requires a validated deterministic MDP");
    require_compatible(mdp, policy);
    mdp.check_pair(s, a);
    const StateId target = mdp.successor(s, a);
    double eta = 0.0;
    for (ActionId other = 0; other < mdp.num_actions(); ++other)
        if (other != a && mdp.successor(s, other) == target) eta += policy(s, other);
    return eta;
}

/// The same score read off the posterior support at the observed successor.
inline double ars_from_posterior(const ActionPosterior& posterior, const Policy& policy, StateId s, ActionId a,
                                 StateId next) {
    if (!posterior.defined(s, next))
        throw InsufficientDataError("no posterior data for (s=" + std::to_string(s) + ", s'=" + std::to_string(next) + ")");
    double eta = 0.0;
    for (ActionId other = 0; other < posterior.num_actions(); ++other)
        if (other != a && posterior.in_support(s, other, next)) eta += policy(s, other);
    return eta;
}

/// g_pi(s,a) = -log(pi(a|s) + eta(s,a)) on deterministic MDPs.
inline double g_deterministic(double policy_prob, double eta) {
    const double mass = policy_prob + eta;
    if (!(mass > 0.0)) throw std::domain_error("g_deterministic: pi(a|s) + eta must be positive");
    return -std::log(mass);
}

inline double g_deterministic(const Policy& policy, StateId s, ActionId a, double eta) {
    return g_deterministic(policy(s, a), eta);
}

/// Action redundancy ratio zeta = log(q(a|s,s') / pi(a|s)).
///
/// A zero posterior entry is floored at kPosteriorFloor and counted in
/// `clamp_count` when one is supplied.
inline double arr(const ActionPosterior& posterior, double policy_prob, StateId s, ActionId a, StateId next,
                  std::size_t* clamp_count = nullptr) {
    if (!(policy_prob > 0.0)) throw std::domain_error("arr: pi(a|s) must be positive");
    const auto q = posterior.q(s, a, next);
    if (!q) throw InsufficientDataError("no posterior data for (s=" + std::to_string(s) + ", s'=" + std::to_string(next) + ")");
    double value = *q;
    if (value <= 0.0) {
        value = kPosteriorFloor;
        if (clamp_count) ++*clamp_count;
    }
    return std::log(value) - std::log(policy_prob);
}

inline double arr(const ActionPosterior& posterior, const Policy& policy, StateId s, ActionId a, StateId next,
                  std::size_t* clamp_count = nullptr) {
    return arr(posterior, policy(s, a), s, a, next, clamp_count);
}

/// g_pi(s,a) = H(s'|s,a) + E_{s'~P(.|s,a)} zeta(s,a,s').
inline double g_stochastic(const TabularMDP& mdp, const ActionPosterior& posterior, const Policy& policy, StateId s,
                           ActionId a, std::size_t* clamp_count = nullptr) {
    const auto row = mdp.row(s, a);
    double expected_zeta = 0.0;
    for (StateId n = 0; n < row.size(); ++n)
        if (row[n] > 0.0) expected_zeta += row[n] * arr(posterior, policy, s, a, n, clamp_count);
    return shannon_entropy(row) + expected_zeta;
}

struct RedundantSet {
    std::vector<ActionId> actions;
    bool insufficient_data = false;
};

/// A_delta(s,s') = { a : q(a|s,s') > delta }.
inline RedundantSet delta_redundant_set(const ActionPosterior& posterior, StateId s, StateId next, double delta) {
    if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");
    RedundantSet out;
    const auto q = posterior.row(s, next);
    if (q.empty()) {
        out.insufficient_data = true;
        return out;
    }
    for (ActionId a = 0; a < q.size(); ++a)
        if (q[a] > delta) out.actions.push_back(a);
    return out;
}

enum class GroupDerivation { exact_successor, posterior_support };

/// Per-state partition of the action set into redundancy classes.
struct RedundancyGroups {
    std::vector<std::vector<std::vector<ActionId>>> per_state;
    GroupDerivation derivation = GroupDerivation::exact_successor;

    /// Class containing `a` at state `s`.
    const std::vector<ActionId>& group_of(StateId s, ActionId a) const {
        for (const auto& g : per_state.at(s))
            if (std::find(g.begin(), g.end(), a) != g.end()) return g;
        throw ModelError("action not covered by redundancy groups");
    }

    bool same_partition(const RedundancyGroups& other) const { return per_state == other.per_state; }
};

namespace detail {

/// Classes sorted internally and ordered by smallest member, so equal
/// partitions compare equal.
inline std::vector<std::vector<ActionId>> canonical_classes(std::vector<std::size_t> label) {
    std::vector<std::vector<ActionId>> groups;
    std::vector<std::size_t> index_of(label.size(), SIZE_MAX);
    for (ActionId a = 0; a < label.size(); ++a) {
        const auto root = label[a];
        if (index_of[root] == SIZE_MAX) {
            index_of[root] = groups.size();
            groups.emplace_back();
        }
        groups[index_of[root]].push_back(a);
    }
    return groups;
}

struct DisjointSets {
    std::vector<std::size_t> parent;
    explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    std::size_t find(std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

}  // namespace detail

/// Groups actions by shared successor f(s,a). Deterministic MDPs only.
inline RedundancyGroups redundancy_groups(const TabularMDP& mdp) {
    if (!mdp.is_deterministic()) throw ModelError("successor-based groups require a validated deterministic MDP");
    RedundancyGroups out;
    out.derivation = GroupDerivation::exact_successor;
    for (StateId s = 0; s < mdp.num_states(); ++s) {
        detail::DisjointSets sets(mdp.num_actions());
        for (ActionId a = 0; a < mdp.num_actions(); ++a)
            for (ActionId b = a + 1; b < mdp.num_actions(); ++b)
                if (mdp.successor(s, a) == mdp.successor(s, b)) sets.unite(a, b);
        std::vector<std::size_t> label(mdp.num_actions());
        for (ActionId a = 0; a < label.size(); ++a) label[a] = sets.find(a);
        out.per_state.push_back(detail::canonical_classes(std::move(label)));
    }
    return out;
}

/// Groups actions that share posterior support at some observed successor.
/// Actions absent from every defined row at a state stay singletons.
inline RedundancyGroups redundancy_groups(const ActionPosterior& posterior) {
    const auto S = posterior.num_states();
    const auto A = posterior.num_actions();
    std::vector<detail::DisjointSets> sets(S, detail::DisjointSets(A));
    for (const auto& [s, n] : posterior.keys()) {
        std::size_t first = SIZE_MAX;
        for (ActionId a = 0; a < A; ++a) {
            if (!posterior.in_support(s, a, n)) continue;
            if (first == SIZE_MAX) first = a;
            else sets[s].unite(first, a);
        }
    }
    RedundancyGroups out;
    out.derivation = GroupDerivation::posterior_support;
    for (StateId s = 0; s < S; ++s) {
        std::vector<std::size_t> label(A);
        for (ActionId a = 0; a < A; ++a) label[a] = sets[s].find(a);
        out.per_state.push_back(detail::canonical_classes(std::move(label)));
    }
    return out;
}

/// Posterior-support groups under `policy` computed from the exact posterior.
inline RedundancyGroups redundancy_groups(const TabularMDP& mdp, const Policy& policy) {
    return redundancy_groups(exact_posterior(mdp, policy));
}

}  // namespace minred
