#pragma once

#include "minred/entropy.hpp"
#include "minred/envs.hpp"
#include "minred/redundancy.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

namespace minred {

struct VerifyOptions {
    std::size_t instances = 100;  ///< random MDPs per identity
    std::uint64_t seed = 0;
    /// Tilts every exact posterior row toward action 0 before it is used, to
    /// confirm the suite catches a broken Bayes inversion.
    bool perturb_bayes = false;
};

struct IdentityResult {
    std::string name;
    double max_residual = 0.0;
    double tolerance = 0.0;
    std::size_t instances = 0;

    bool ok() const noexcept { return max_residual <= tolerance; }
};

namespace detail {

/// Sizes for instance i: |S| in [2,8], |A| in [2,6].
inline std::pair<std::size_t, std::size_t> instance_shape(std::uint64_t seed, std::size_t i) {
    Engine rng = make_engine(seed, "verify_shape", i);
    return {2 + uniform_index(rng, 7), 2 + uniform_index(rng, 5)};
}

inline ActionPosterior tilted(const ActionPosterior& exact) {
    ActionPosterior out(exact.num_states(), exact.num_actions(), PosteriorMode::exact);
    for (const auto& [s, n] : exact.keys()) {
        auto q = exact.row(s, n);
        q[0] *= 1.5;
        double total = 0.0;
        for (double v : q) total += v;
        for (double& v : q) v /= total;
        out.set_row(s, n, q);
    }
    return out;
}

inline ActionPosterior posterior_for(const TabularMDP& mdp, const Policy& policy, const VerifyOptions& options) {
    auto post = exact_posterior(mdp, policy);
    return options.perturb_bayes ? tilted(post) : post;
}

inline TabularMDP stochastic_instance(const VerifyOptions& o, std::size_t i, std::uint64_t tag) {
    const auto [S, A] = instance_shape(o.seed ^ tag, i);
    return random_mdp({S, A, false, 0.9, 0.3, derive_seed(o.seed, "verify_mdp", i ^ (tag << 32))});
}

inline TabularMDP deterministic_instance(const VerifyOptions& o, std::size_t i, std::uint64_t tag) {
    const auto [S, A] = instance_shape(o.seed ^ tag, i);
    return random_mdp({S, A, true, 0.9, 0.0, derive_seed(o.seed, "verify_det", i ^ (tag << 32))});
}

/// Deterministic model where every action at a state has its own successor.
inline TabularMDP injective_instance(const VerifyOptions& o, std::size_t i) {
    auto [S, A] = instance_shape(o.seed ^ 7, i);
    S = std::max(S, A);
    RedundantMDPSpec spec;
    spec.num_states = S;
    spec.num_effective_actions = A;
    spec.copies.assign(A, 1);
    spec.gamma = 0.9;
    spec.seed = derive_seed(o.seed, "verify_injective", i);
    return random_redundant_mdp(spec).mdp;
}

inline Policy instance_policy(const TabularMDP& mdp, const VerifyOptions& o, std::size_t i, std::uint64_t tag) {
    return random_positive_policy(mdp.num_states(), mdp.num_actions(), derive_seed(o.seed, "verify_policy", i ^ (tag << 32)));
}

}  // namespace detail

/// g = model entropy + redundancy KL.
inline IdentityResult verify_decomposition(const VerifyOptions& o) {
    IdentityResult r{"decomposition", 0.0, 1e-10, o.instances};
    for (std::size_t i = 0; i < o.instances; ++i) {
        const auto mdp = detail::stochastic_instance(o, i, 1);
        const auto pi = detail::instance_policy(mdp, o, i, 1);
        for (StateId s = 0; s < mdp.num_states(); ++s)
            for (ActionId a = 0; a < mdp.num_actions(); ++a)
                r.max_residual = std::max(r.max_residual,
                                          std::abs(transition_score_g(mdp, pi, s, a) - decompose_g(mdp, pi, s, a).total()));
    }
    return r;
}

/// Deterministic models: g = -log(pi + eta).
inline IdentityResult verify_ars_identity(const VerifyOptions& o) {
    IdentityResult r{"ars_identity", 0.0, 1e-10, o.instances};
    for (std::size_t i = 0; i < o.instances; ++i) {
        const auto mdp = detail::deterministic_instance(o, i, 2);
        const auto pi = detail::instance_policy(mdp, o, i, 2);
        for (StateId s = 0; s < mdp.num_states(); ++s)
            for (ActionId a = 0; a < mdp.num_actions(); ++a) {
                const double eta = ars_exact(mdp, pi, s, a);
                r.max_residual = std::max(r.max_residual, std::abs(transition_score_g(mdp, pi, s, a) -
                                                                   g_deterministic(pi, s, a, eta)));
            }
    }
    return r;
}

/// Deterministic models: posterior-support groups equal successor groups.
/// Residual is the fraction of instances where they differ.
inline IdentityResult verify_group_equivalence(const VerifyOptions& o) {
    IdentityResult r{"group_equivalence", 0.0, 0.0, o.instances};
    std::size_t mismatches = 0;
    for (std::size_t i = 0; i < o.instances; ++i) {
        const auto mdp = detail::deterministic_instance(o, i, 3);
        const auto pi = detail::instance_policy(mdp, o, i, 3);
        const auto by_successor = redundancy_groups(mdp);
        const auto by_support = redundancy_groups(detail::posterior_for(mdp, pi, o));
        if (!by_successor.same_partition(by_support)) ++mismatches;
    }
    r.max_residual = static_cast<double>(mismatches) / static_cast<double>(std::max<std::size_t>(o.instances, 1));
    return r;
}

/// g = H(s'|s,a) + E zeta with the exact posterior.
inline IdentityResult verify_arr_identity(const VerifyOptions& o) {
    IdentityResult r{"arr_identity", 0.0, 1e-10, o.instances};
    for (std::size_t i = 0; i < o.instances; ++i) {
        const auto mdp = detail::stochastic_instance(o, i, 4);
        const auto pi = detail::instance_policy(mdp, o, i, 4);
        const auto post = detail::posterior_for(mdp, pi, o);
        for (StateId s = 0; s < mdp.num_states(); ++s)
            for (ActionId a = 0; a < mdp.num_actions(); ++a)
                r.max_residual = std::max(r.max_residual, std::abs(transition_score_g(mdp, pi, s, a) -
                                                                   g_stochastic(mdp, post, pi, s, a)));
    }
    return r;
}

/// Deterministic models: zeta(s,a,f(s,a)) = -log(pi + eta).
inline IdentityResult verify_arr_deterministic(const VerifyOptions& o) {
    IdentityResult r{"arr_deterministic", 0.0, 1e-10, o.instances};
    for (std::size_t i = 0; i < o.instances; ++i) {
        const auto mdp = detail::deterministic_instance(o, i, 5);
        const auto pi = detail::instance_policy(mdp, o, i, 5);
        const auto post = detail::posterior_for(mdp, pi, o);
        for (StateId s = 0; s < mdp.num_states(); ++s)
            for (ActionId a = 0; a < mdp.num_actions(); ++a) {
                const double zeta = arr(post, pi, s, a, mdp.successor(s, a));
                r.max_residual = std::max(r.max_residual, std::abs(zeta + std::log(pi(s, a) + ars_exact(mdp, pi, s, a))));
            }
    }
    return r;
}

/// Linear-solve F against the forward-propagated truncated sum.
inline IdentityResult verify_oracle(const VerifyOptions& o) {
    IdentityResult r{"transition_entropy_oracle", 0.0, 1e-6, o.instances};
    for (std::size_t i = 0; i < o.instances; ++i) {
        const auto mdp = detail::stochastic_instance(o, i, 6);
        const auto pi = detail::instance_policy(mdp, o, i, 6);
        const auto F = transition_entropy_togo(mdp, pi);
        const auto oracle = truncated_entropy_oracle(mdp, pi, oracle_horizon(mdp.gamma(), mdp.num_states()));
        for (StateId s = 0; s < F.size(); ++s) r.max_residual = std::max(r.max_residual, std::abs(F[s] - oracle[s]));
    }
    return r;
}

/// Injective deterministic models: F = H.
inline IdentityResult verify_injective(const VerifyOptions& o) {
    IdentityResult r{"injective_F_equals_H", 0.0, 1e-9, o.instances};
    for (std::size_t i = 0; i < o.instances; ++i) {
        const auto mdp = detail::injective_instance(o, i);
        const auto pi = detail::instance_policy(mdp, o, i, 7);
        const auto F = transition_entropy_togo(mdp, pi);
        const auto H = action_entropy_togo(mdp, pi);
        for (StateId s = 0; s < F.size(); ++s) r.max_residual = std::max(r.max_residual, std::abs(F[s] - H[s]));
    }
    return r;
}

inline std::vector<IdentityResult> run_identity_suite(const VerifyOptions& o = {}) {
    return {verify_decomposition(o),  verify_ars_identity(o), verify_group_equivalence(o), verify_arr_identity(o),
            verify_arr_deterministic(o), verify_oracle(o),    verify_injective(o)};
}

inline bool print_identity_report(std::ostream& os, const std::vector<IdentityResult>& results) {
    bool all = true;
    for (const auto& r : results) {
        char line[160];
        std::snprintf(line, sizeof line, "%-28s instances=%-4zu max_residual=%.3e tolerance=%.1e %s\n", r.name.c_str(),
                      r.instances, r.max_residual, r.tolerance, r.ok() ? "PASS" : "FAIL");
        os << line;
        all = all && r.ok();
    }
    return all;
}

}  // namespace minred
