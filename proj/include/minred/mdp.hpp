#pragma once

#include "minred/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace minred {

using StateId = std::size_t;
using ActionId = std::size_t;

/// Row sums of transition and policy tables must be within this of 1.
inline constexpr double kProbabilityTolerance = 1e-12;
/// A row is a point mass when its largest entry is at least 1 - this.
inline constexpr double kDeterminismTolerance = 1e-12;
/// Relative residual bound accepted from a dense solve.
inline constexpr double kSolveResidualTolerance = 1e-10;

/// Raised when a dense linear system cannot be solved to tolerance.
class LinearSolveError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised for malformed models, policies and out-of-range indices.
class ModelError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct ValidationReport;

/// Finite MDP with reward r(s,a), stored densely.
///
/// Transition rows are laid out as (s * num_actions + a) * num_states + s'.
/// The deterministic successor map is only available after validate().
class TabularMDP {
public:
    TabularMDP() = default;

    TabularMDP(std::size_t num_states, std::size_t num_actions, double gamma)
        : num_states_(num_states),
          num_actions_(num_actions),
          gamma_(gamma),
          transition_(num_states * num_actions * num_states, 0.0),
          reward_(num_states * num_actions, 0.0),
          initial_(num_states, 0.0) {
        if (num_states == 0 || num_actions == 0)
            throw ModelError("TabularMDP needs at least one state and one action");
        initial_[0] = 1.0;
    }

    std::size_t num_states() const noexcept { return num_states_; }
    std::size_t num_actions() const noexcept { return num_actions_; }
    double gamma() const noexcept { return gamma_; }

    double prob(StateId s, ActionId a, StateId next) const {
        return transition_[row_offset(s, a) + next];
    }

    std::span<const double> row(StateId s, ActionId a) const {
        return {transition_.data() + row_offset(s, a), num_states_};
    }

    double reward(StateId s, ActionId a) const { return reward_[s * num_actions_ + a]; }
    std::span<const double> initial() const noexcept { return initial_; }

    /// f(s,a) for every pair, present iff every transition row is a point mass.
    const std::optional<std::vector<StateId>>& deterministic_map() const noexcept {
        return deterministic_map_;
    }
    bool is_deterministic() const noexcept { return deterministic_map_.has_value(); }
    StateId successor(StateId s, ActionId a) const {
        if (!deterministic_map_) throw ModelError("successor() requires a deterministic MDP");
        return (*deterministic_map_)[s * num_actions_ + a];
    }

    void set_gamma(double gamma) { gamma_ = gamma; }

    void set_row(StateId s, ActionId a, std::span<const double> probs) {
        if (probs.size() != num_states_) throw ModelError("transition row has wrong length");
        std::copy(probs.begin(), probs.end(), transition_.begin() + row_offset(s, a));
        deterministic_map_.reset();
    }

    void set_successor(StateId s, ActionId a, StateId next) {
        check_state(next);
        auto first = transition_.begin() + row_offset(s, a);
        std::fill(first, first + num_states_, 0.0);
        first[next] = 1.0;
        deterministic_map_.reset();
    }

    void set_reward(StateId s, ActionId a, double r) {
        check_pair(s, a);
        reward_[s * num_actions_ + a] = r;
    }

    void set_initial(std::span<const double> rho0) {
        if (rho0.size() != num_states_) throw ModelError("initial distribution has wrong length");
        initial_.assign(rho0.begin(), rho0.end());
    }

    void set_initial_state(StateId s) {
        check_state(s);
        std::fill(initial_.begin(), initial_.end(), 0.0);
        initial_[s] = 1.0;
    }

    std::vector<std::string> state_labels;
    std::vector<std::string> action_labels;

    void check_state(StateId s) const {
        if (s >= num_states_) throw std::out_of_range("state index " + std::to_string(s) + " out of range");
    }
    void check_action(ActionId a) const {
        if (a >= num_actions_) throw std::out_of_range("action index " + std::to_string(a) + " out of range");
    }
    void check_pair(StateId s, ActionId a) const {
        check_state(s);
        check_action(a);
    }

private:
    std::size_t row_offset(StateId s, ActionId a) const {
        check_pair(s, a);
        return (s * num_actions_ + a) * num_states_;
    }

    friend ValidationReport validate(TabularMDP& mdp);

    std::size_t num_states_ = 0;
    std::size_t num_actions_ = 0;
    double gamma_ = 0.99;
    std::vector<double> transition_;
    std::vector<double> reward_;
    std::vector<double> initial_;
    std::optional<std::vector<StateId>> deterministic_map_;
};

struct ValidationReport {
    std::vector<std::string> violations;
    bool deterministic = false;

    bool ok() const noexcept { return violations.empty(); }
    std::string summary() const {
        std::ostringstream os;
        for (const auto& v : violations) os << v << '\n';
        return os.str();
    }
};

/// Checks every invariant of the model and, when all rows are point masses,
/// records the successor map on the model.
inline ValidationReport validate(TabularMDP& mdp) {
    ValidationReport report;
    mdp.deterministic_map_.reset();
    const auto S = mdp.num_states();
    const auto A = mdp.num_actions();

    if (!(mdp.gamma() > 0.0 && mdp.gamma() < 1.0)) {
        report.violations.push_back("gamma " + std::to_string(mdp.gamma()) + " outside (0,1)");
    }

    std::vector<StateId> successors(S * A, 0);
    bool deterministic = true;
    for (StateId s = 0; s < S; ++s) {
        for (ActionId a = 0; a < A; ++a) {
            const auto row = mdp.row(s, a);
            double sum = 0.0;
            bool negative = false;
            bool finite = true;
            for (double p : row) {
                sum += p;
                negative |= p < 0.0;
                finite &= std::isfinite(p);
            }
            std::ostringstream where;
            where << "(s=" << s << ",a=" << a << ")";
            if (!finite) report.violations.push_back("transition row " + where.str() + " has non-finite entries");
            if (negative) report.violations.push_back("transition row " + where.str() + " has negative entries");
            if (std::abs(sum - 1.0) > kProbabilityTolerance) {
                std::ostringstream msg;
                msg.precision(17);
                msg << "transition row " << where.str() << " sums to " << sum;
                report.violations.push_back(msg.str());
            }
            const auto top = std::max_element(row.begin(), row.end());
            if (*top >= 1.0 - kDeterminismTolerance) {
                successors[s * A + a] = static_cast<StateId>(top - row.begin());
            } else {
                deterministic = false;
            }
            if (!std::isfinite(mdp.reward(s, a)))
                report.violations.push_back("reward " + where.str() + " is not finite");
        }
    }

    double rho_sum = 0.0;
    bool rho_negative = false;
    for (double p : mdp.initial()) {
        rho_sum += p;
        rho_negative |= p < 0.0;
    }
    if (rho_negative) report.violations.push_back("initial distribution has negative entries");
    if (std::abs(rho_sum - 1.0) > kProbabilityTolerance) {
        std::ostringstream msg;
        msg.precision(17);
        msg << "initial distribution sums to " << rho_sum;
        report.violations.push_back(msg.str());
    }

    if (deterministic && report.ok()) {
        mdp.deterministic_map_ = std::move(successors);
        report.deterministic = true;
    }
    return report;
}

/// Validates and throws ModelError listing every violation.
inline void require_valid(TabularMDP& mdp) {
    const auto report = validate(mdp);
    if (!report.ok()) throw ModelError("invalid MDP:\n" + report.summary());
}

/// Tabular stochastic policy pi(a|s).
class Policy {
public:
    Policy() = default;

    Policy(std::size_t num_states, std::size_t num_actions)
        : num_states_(num_states), num_actions_(num_actions), probs_(num_states * num_actions, 0.0) {}

    static Policy uniform(std::size_t num_states, std::size_t num_actions) {
        Policy p(num_states, num_actions);
        std::fill(p.probs_.begin(), p.probs_.end(), 1.0 / static_cast<double>(num_actions));
        return p;
    }

    /// Point mass on actions[s] at every state.
    static Policy deterministic(std::size_t num_actions, std::span<const ActionId> actions) {
        Policy p(actions.size(), num_actions);
        for (StateId s = 0; s < actions.size(); ++s) p.at(s, actions[s]) = 1.0;
        return p;
    }

    static Policy from_rows(const std::vector<std::vector<double>>& rows) {
        if (rows.empty()) throw ModelError("policy needs at least one row");
        Policy p(rows.size(), rows.front().size());
        for (StateId s = 0; s < rows.size(); ++s) {
            if (rows[s].size() != p.num_actions_) throw ModelError("ragged policy rows");
            p.set_row(s, rows[s]);
        }
        return p;
    }

    std::size_t num_states() const noexcept { return num_states_; }
    std::size_t num_actions() const noexcept { return num_actions_; }

    double operator()(StateId s, ActionId a) const { return probs_[s * num_actions_ + a]; }
    double& at(StateId s, ActionId a) { return probs_[s * num_actions_ + a]; }

    std::span<const double> row(StateId s) const { return {probs_.data() + s * num_actions_, num_actions_}; }

    void set_row(StateId s, std::span<const double> probs) {
        if (probs.size() != num_actions_) throw ModelError("policy row has wrong length");
        std::copy(probs.begin(), probs.end(), probs_.begin() + s * num_actions_);
    }

    /// Smallest probability in the table.
    double min_prob() const { return *std::min_element(probs_.begin(), probs_.end()); }
    bool strictly_positive(double floor) const { return min_prob() >= floor; }

    std::vector<std::string> violations() const {
        std::vector<std::string> out;
        for (StateId s = 0; s < num_states_; ++s) {
            double sum = 0.0;
            bool negative = false;
            for (double p : row(s)) {
                sum += p;
                negative |= p < 0.0;
            }
            if (negative) out.push_back("policy row " + std::to_string(s) + " has negative entries");
            if (std::abs(sum - 1.0) > kProbabilityTolerance)
                out.push_back("policy row " + std::to_string(s) + " does not sum to 1");
        }
        return out;
    }

    /// Convex combination w * a + (1 - w) * b.
    static Policy mix(const Policy& a, const Policy& b, double w) {
        Policy p(a.num_states_, a.num_actions_);
        for (std::size_t i = 0; i < p.probs_.size(); ++i) p.probs_[i] = w * a.probs_[i] + (1.0 - w) * b.probs_[i];
        return p;
    }

private:
    std::size_t num_states_ = 0;
    std::size_t num_actions_ = 0;
    std::vector<double> probs_;
};

inline void require_compatible(const TabularMDP& mdp, const Policy& policy) {
    if (policy.num_states() != mdp.num_states() || policy.num_actions() != mdp.num_actions())
        throw ModelError("policy shape does not match the MDP");
}

/// One environment step.
struct Step {
    StateId state = 0;
    ActionId action = 0;
    double reward = 0.0;
    StateId next_state = 0;

    bool operator==(const Step&) const = default;
};

struct Trajectory {
    std::vector<Step> steps;
    std::uint64_t seed = 0;

    /// True when next_state of step t equals state of step t+1 throughout.
    bool chained() const {
        for (std::size_t t = 1; t < steps.size(); ++t)
            if (steps[t - 1].next_state != steps[t].state) return false;
        return true;
    }
};

/// P(s'|s,pi) = sum_a pi(a|s) P(s'|s,a).
inline std::vector<double> next_state_distribution(const TabularMDP& mdp, StateId s, const Policy& policy) {
    require_compatible(mdp, policy);
    mdp.check_state(s);
    std::vector<double> out(mdp.num_states(), 0.0);
    for (ActionId a = 0; a < mdp.num_actions(); ++a) {
        const double w = policy(s, a);
        if (w == 0.0) continue;
        const auto row = mdp.row(s, a);
        for (StateId n = 0; n < out.size(); ++n) out[n] += w * row[n];
    }
    return out;
}

/// Dense S x S matrix of P(s'|s,pi).
inline Eigen::MatrixXd policy_transition_matrix(const TabularMDP& mdp, const Policy& policy) {
    const auto S = mdp.num_states();
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(S));
    for (StateId s = 0; s < S; ++s) {
        const auto row = next_state_distribution(mdp, s, policy);
        for (StateId n = 0; n < S; ++n) P(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(n)) = row[n];
    }
    return P;
}

/// Solves lhs * x = rhs by partial-pivot LU and rejects the answer when the
/// relative residual exceeds kSolveResidualTolerance.
inline Eigen::VectorXd solve_dense(const Eigen::MatrixXd& lhs, const Eigen::VectorXd& rhs) {
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(lhs);
    Eigen::VectorXd x = lu.solve(rhs);
    const double scale = std::max({1.0, rhs.lpNorm<Eigen::Infinity>(), x.lpNorm<Eigen::Infinity>()});
    const double residual = (lhs * x - rhs).lpNorm<Eigen::Infinity>();
    if (!x.allFinite() || residual > kSolveResidualTolerance * scale) {
        std::ostringstream msg;
        msg << "dense solve failed: residual " << residual << " (scale " << scale << ")";
        throw LinearSolveError(msg.str());
    }
    return x;
}

/// Solves x = b + gamma * P_pi x, the shape shared by every to-go quantity.
inline std::vector<double> solve_discounted(const TabularMDP& mdp, const Policy& policy, std::span<const double> per_step) {
    const auto S = static_cast<Eigen::Index>(mdp.num_states());
    const Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(S, S) - mdp.gamma() * policy_transition_matrix(mdp, policy);
    const Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(per_step.data(), S);
    const Eigen::VectorXd x = solve_dense(lhs, rhs);
    return {x.data(), x.data() + S};
}

/// Discounted state visitation rho_pi = (1 - gamma) rho0^T (I - gamma P_pi)^{-1}.
inline std::vector<double> state_visitation(const TabularMDP& mdp, const Policy& policy) {
    require_compatible(mdp, policy);
    const auto S = static_cast<Eigen::Index>(mdp.num_states());
    const Eigen::MatrixXd lhs =
        (Eigen::MatrixXd::Identity(S, S) - mdp.gamma() * policy_transition_matrix(mdp, policy)).transpose();
    const Eigen::VectorXd rhs = (1.0 - mdp.gamma()) * Eigen::Map<const Eigen::VectorXd>(mdp.initial().data(), S);
    const Eigen::VectorXd rho = solve_dense(lhs, rhs);
    return {rho.data(), rho.data() + S};
}

/// Draws s' ~ P(.|s,a) and returns it with r(s,a).
inline std::pair<StateId, double> sample_step(const TabularMDP& mdp, StateId s, ActionId a, Engine& rng) {
    if (mdp.is_deterministic()) return {mdp.successor(s, a), mdp.reward(s, a)};
    return {sample_discrete(rng, mdp.row(s, a)), mdp.reward(s, a)};
}

/// Samples `length` steps from s0 ~ rho0 under `policy`, seeded by `seed`.
inline Trajectory rollout(const TabularMDP& mdp, const Policy& policy, std::size_t length, std::uint64_t seed) {
    require_compatible(mdp, policy);
    Trajectory traj;
    traj.seed = seed;
    Engine env_rng = make_engine(seed, "env");
    Engine act_rng = make_engine(seed, "action");
    StateId s = sample_discrete(env_rng, mdp.initial());
    traj.steps.reserve(length);
    for (std::size_t t = 0; t < length; ++t) {
        const ActionId a = sample_discrete(act_rng, policy.row(s));
        const auto [next, r] = sample_step(mdp, s, a, env_rng);
        traj.steps.push_back({s, a, r, next});
        s = next;
    }
    return traj;
}

struct PolicyValues {
    std::vector<double> v;  ///< v(s)
    std::vector<double> q;  ///< Q(s,a), row-major by state
    std::size_t num_actions = 0;

    double Q(StateId s, ActionId a) const { return q[s * num_actions + a]; }
};

/// Exact evaluation: v = (I - gamma P_pi)^{-1} r_pi, Q = r + gamma P v.
inline PolicyValues policy_values(const TabularMDP& mdp, const Policy& policy) {
    require_compatible(mdp, policy);
    const auto S = mdp.num_states();
    const auto A = mdp.num_actions();
    std::vector<double> r_pi(S, 0.0);
    for (StateId s = 0; s < S; ++s)
        for (ActionId a = 0; a < A; ++a) r_pi[s] += policy(s, a) * mdp.reward(s, a);

    PolicyValues out;
    out.num_actions = A;
    out.v = solve_discounted(mdp, policy, r_pi);
    out.q.assign(S * A, 0.0);
    for (StateId s = 0; s < S; ++s) {
        for (ActionId a = 0; a < A; ++a) {
            double expected = 0.0;
            const auto row = mdp.row(s, a);
            for (StateId n = 0; n < S; ++n) expected += row[n] * out.v[n];
            out.q[s * A + a] = mdp.reward(s, a) + mdp.gamma() * expected;
        }
    }
    return out;
}

}  // namespace minred
