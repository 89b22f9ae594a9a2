#pragma once

#include "minred/csv.hpp"
#include "minred/entropy.hpp"
#include "minred/redundancy.hpp"

#include <limits>
#include <ostream>

namespace minred {

/// Exact entropy and redundancy quantities for one (MDP, policy) pair.
struct EntropyReport {
    std::size_t num_states = 0;
    std::size_t num_actions = 0;
    double alpha = 0.0;

    std::vector<double> H;  ///< action entropy to-go, per state
    std::vector<double> F;  ///< transition entropy to-go, per state
    std::vector<double> objective_AE;
    std::vector<double> objective_TE;

    // Per (s,a), row-major by state. NaN where undefined.
    std::vector<double> g;
    std::vector<double> model_entropy;
    std::vector<double> redundancy_kl;
    std::vector<double> eta;        ///< ARS, deterministic MDPs only
    std::vector<double> zeta_mean;  ///< E_{s'} ARR under the exact posterior, pi(a|s) > 0 only

    std::size_t index(StateId s, ActionId a) const { return s * num_actions + a; }
};

inline EntropyReport entropy_report(const TabularMDP& mdp, const Policy& policy, double alpha) {
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    EntropyReport r;
    r.num_states = mdp.num_states();
    r.num_actions = mdp.num_actions();
    r.alpha = alpha;
    r.H = action_entropy_togo(mdp, policy);
    r.F = transition_entropy_togo(mdp, policy);
    const auto obj = objectives(mdp, policy, alpha);
    r.objective_AE = obj.action_entropy;
    r.objective_TE = obj.transition_entropy;

    const auto pairs = r.num_states * r.num_actions;
    r.g.assign(pairs, nan);
    r.model_entropy.assign(pairs, nan);
    r.redundancy_kl.assign(pairs, nan);
    r.eta.assign(pairs, nan);
    r.zeta_mean.assign(pairs, nan);

    const auto posterior = exact_posterior(mdp, policy);
    for (StateId s = 0; s < r.num_states; ++s) {
        for (ActionId a = 0; a < r.num_actions; ++a) {
            const auto i = r.index(s, a);
            try {
                r.g[i] = transition_score_g(mdp, policy, s, a);
                const auto parts = decompose_g(mdp, policy, s, a);
                r.model_entropy[i] = parts.model_entropy;
                r.redundancy_kl[i] = parts.redundancy_kl;
            } catch (const SupportError&) {
                continue;
            }
            if (mdp.is_deterministic()) r.eta[i] = ars_exact(mdp, policy, s, a);
            if (policy(s, a) > 0.0) {
                double expected = 0.0;
                const auto row = mdp.row(s, a);
                for (StateId n = 0; n < row.size(); ++n)
                    if (row[n] > 0.0) expected += row[n] * arr(posterior, policy, s, a, n);
                r.zeta_mean[i] = expected;
            }
        }
    }
    return r;
}

/// Columns: state, action, H, F, g, model_entropy, redundancy_kl, eta, zeta_mean.
inline void write_report_csv(std::ostream& os, const EntropyReport& r, const Metadata& meta) {
    write_metadata(os, meta);
    os << "state,action,H,F,g,model_entropy,redundancy_kl,eta,zeta_mean\n";
    for (StateId s = 0; s < r.num_states; ++s) {
        for (ActionId a = 0; a < r.num_actions; ++a) {
            const auto i = r.index(s, a);
            write_row(os, {std::to_string(s), std::to_string(a), format_number(r.H[s]), format_number(r.F[s]),
                           format_number(r.g[i]), format_number(r.model_entropy[i]), format_number(r.redundancy_kl[i]),
                           format_number(r.eta[i]), format_number(r.zeta_mean[i])});
        }
    }
}

}  // namespace minred
