#pragma once

#include "minred/csv.hpp"
#include "minred/mdp.hpp"
#include "minred/redundancy.hpp"

#include <array>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

namespace minred {

/// Three-state example in which two of three actions reach the same state.
/// s0 decides; a0 and a1 lead to s1, a2 leads to s2; s1 and s2 absorb with
/// zero reward under every action.
inline TabularMDP fig1_mdp(double gamma = 0.99) {
    TabularMDP mdp(3, 3, gamma);
    mdp.set_successor(0, 0, 1);
    mdp.set_successor(0, 1, 1);
    mdp.set_successor(0, 2, 2);
    for (StateId s : {1, 2})
        for (ActionId a = 0; a < 3; ++a) mdp.set_successor(s, a, s);
    mdp.set_initial_state(0);
    mdp.state_labels = {"s0", "s1", "s2"};
    mdp.action_labels = {"a0", "a1", "a2"};
    require_valid(mdp);
    return mdp;
}

/// Policy that plays (p0, p1, p2) at s0 and a0 at the absorbing states, so
/// the absorbing states contribute no action entropy.
inline Policy fig1_policy(double p0, double p1, double p2) {
    Policy pi(3, 3);
    pi.set_row(0, std::array{p0, p1, p2});
    pi.at(1, 0) = 1.0;
    pi.at(2, 0) = 1.0;
    return pi;
}

/// Episodic environment for learning agents: a tabular model plus terminal
/// states and a step cap. Reaching a terminal state ends the episode; hitting
/// the cap truncates it.
struct EpisodicEnv {
    TabularMDP mdp;
    std::vector<bool> terminal;
    std::size_t max_steps = 100;
    std::string name;

    std::size_t num_states() const { return mdp.num_states(); }
    std::size_t num_actions() const { return mdp.num_actions(); }
    bool is_terminal(StateId s) const { return terminal.at(s); }

    StateId reset(Engine& rng) const { return sample_discrete(rng, mdp.initial()); }
};

/// Wraps a model with no terminal states and a step cap.
inline EpisodicEnv make_episodic(TabularMDP mdp, std::vector<bool> terminal, std::size_t max_steps, std::string name) {
    if (terminal.size() != mdp.num_states()) throw ModelError("terminal mask has wrong length");
    return EpisodicEnv{std::move(mdp), std::move(terminal), max_steps, std::move(name)};
}

// ---------------------------------------------------------------------------
// Four rooms

/// Classical four-room layout, 11x11 interior, single-cell doorways.
/// Row 0 is the top; '#' is wall.
inline constexpr std::array<const char*, 11> kFourRoomLayout = {
    ".....#.....",  //
    ".....#.....",  //
    "...........",  // doorway (2,5)
    ".....#.....",  //
    ".....#.....",  //
    "#.####.....",  // doorway (5,1)
    ".....###.##",  // doorway (6,8)
    ".....#.....",  //
    ".....#.....",  //
    "...........",  // doorway (9,5)
    ".....#.....",  //
};

enum FourRoomAction : ActionId { kTop = 0, kLeft = 1, kBottom = 2, kFirstRight = 3 };

struct FourRoomSpec {
    std::size_t grid_size = 11;
    std::size_t n_right_copies = 1;
    std::size_t max_steps = 100;
    double goal_reward = 1.0;
    double gamma = 0.99;
};

struct Cell {
    int row = 0;
    int col = 0;
    bool operator==(const Cell&) const = default;
};

/// Four-room gridworld with actions Top, Left, Bottom and n copies of Right.
/// Moving into a wall or the border leaves the agent in place. Entering the
/// goal pays goal_reward; the goal absorbs with zero reward.
struct FourRoom {
    FourRoomSpec spec;
    EpisodicEnv env;
    std::vector<Cell> cells;               ///< cell of each state
    std::vector<std::vector<int>> lookup;  ///< state of each cell, -1 for walls
    StateId start = 0;
    StateId goal = 0;

    bool is_right(ActionId a) const { return a >= kFirstRight; }

    StateId state_at(int row, int col) const {
        const int s = lookup.at(static_cast<std::size_t>(row)).at(static_cast<std::size_t>(col));
        if (s < 0) throw ModelError("cell is a wall");
        return static_cast<StateId>(s);
    }

    /// Heatmap table `row,col,count` for per-state visit counts.
    void write_visitation_csv(std::ostream& os, std::span<const std::uint64_t> counts, const Metadata& meta) const {
        write_metadata(os, meta);
        os << "row,col,count\n";
        for (StateId s = 0; s < cells.size(); ++s)
            write_row(os, {std::to_string(cells[s].row), std::to_string(cells[s].col), std::to_string(counts[s])});
    }
};

inline FourRoom four_room(const FourRoomSpec& spec) {
    if (spec.grid_size != kFourRoomLayout.size())
        throw ModelError("four_room: only the 11x11 layout is defined (grid_size=" + std::to_string(spec.grid_size) + ")");
    if (spec.n_right_copies == 0) throw ModelError("four_room: n_right_copies must be positive");
    if (spec.max_steps == 0) throw ModelError("four_room: max_steps must be positive");

    FourRoom room;
    room.spec = spec;
    const int n = static_cast<int>(spec.grid_size);
    room.lookup.assign(spec.grid_size, std::vector<int>(spec.grid_size, -1));
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            if (kFourRoomLayout[static_cast<std::size_t>(r)][c] == '#') continue;
            room.lookup[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = static_cast<int>(room.cells.size());
            room.cells.push_back({r, c});
        }
    }
    room.goal = room.state_at(0, 0);
    room.start = room.state_at(n - 1, n - 1);

    const auto S = room.cells.size();
    const auto A = 3 + spec.n_right_copies;
    TabularMDP mdp(S, A, spec.gamma);
    const auto move = [&](Cell c, ActionId a) {
        Cell to = c;
        switch (a) {
            case kTop: --to.row; break;
            case kLeft: --to.col; break;
            case kBottom: ++to.row; break;
            default: ++to.col; break;
        }
        if (to.row < 0 || to.col < 0 || to.row >= n || to.col >= n) return c;
        if (room.lookup[static_cast<std::size_t>(to.row)][static_cast<std::size_t>(to.col)] < 0) return c;
        return to;
    };
    for (StateId s = 0; s < S; ++s) {
        for (ActionId a = 0; a < A; ++a) {
            if (s == room.goal) {
                mdp.set_successor(s, a, s);
                continue;
            }
            const Cell to = move(room.cells[s], a);
            const StateId next = room.state_at(to.row, to.col);
            mdp.set_successor(s, a, next);
            if (next == room.goal) mdp.set_reward(s, a, spec.goal_reward);
        }
        mdp.state_labels.push_back("(" + std::to_string(room.cells[s].row) + "," + std::to_string(room.cells[s].col) + ")");
    }
    mdp.action_labels = {"Top", "Left", "Bottom"};
    for (std::size_t i = 0; i < spec.n_right_copies; ++i) mdp.action_labels.push_back("Right" + std::to_string(i));
    mdp.set_initial_state(room.start);
    require_valid(mdp);

    std::vector<bool> terminal(S, false);
    terminal[room.goal] = true;
    room.env = make_episodic(std::move(mdp), std::move(terminal), spec.max_steps,
                             "four_room_n" + std::to_string(spec.n_right_copies));
    return room;
}

// ---------------------------------------------------------------------------
// Random models

struct RandomMDPSpec {
    std::size_t num_states = 5;
    std::size_t num_actions = 3;
    bool deterministic = false;
    double gamma = 0.9;
    /// Probability that a stochastic row entry is forced to zero (at least one
    /// entry always survives).
    double sparsity = 0.3;
    std::uint64_t seed = 0;
};

namespace detail {

inline std::vector<double> random_distribution(Engine& rng, std::size_t n, double sparsity) {
    std::vector<double> p(n, 0.0);
    const std::size_t keep = uniform_index(rng, n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (i != keep && uniform01(rng) < sparsity) continue;
        p[i] = -std::log(1.0 - uniform01(rng)) + 1e-3;  // exponential, bounded away from 0
        total += p[i];
    }
    for (double& v : p) v /= total;
    // Push the rounding residue onto the largest entry so the row sums to 1.
    double sum = 0.0;
    for (double v : p) sum += v;
    *std::max_element(p.begin(), p.end()) += 1.0 - sum;
    return p;
}

}  // namespace detail

/// Random model with normalized rows, random rewards in [0,1) and a random
/// initial distribution.
inline TabularMDP random_mdp(const RandomMDPSpec& spec) {
    Engine rng = make_engine(spec.seed, "random_mdp");
    TabularMDP mdp(spec.num_states, spec.num_actions, spec.gamma);
    for (StateId s = 0; s < spec.num_states; ++s) {
        for (ActionId a = 0; a < spec.num_actions; ++a) {
            if (spec.deterministic) {
                mdp.set_successor(s, a, uniform_index(rng, spec.num_states));
            } else {
                mdp.set_row(s, a, detail::random_distribution(rng, spec.num_states, spec.sparsity));
            }
            mdp.set_reward(s, a, uniform01(rng));
        }
    }
    mdp.set_initial(detail::random_distribution(rng, spec.num_states, 0.0));
    require_valid(mdp);
    return mdp;
}

/// Random positive policy whose entries are all at least `floor`.
inline Policy random_positive_policy(std::size_t num_states, std::size_t num_actions, std::uint64_t seed,
                                     double floor = 1e-3) {
    Engine rng = make_engine(seed, "random_policy");
    Policy pi(num_states, num_actions);
    for (StateId s = 0; s < num_states; ++s) {
        auto row = detail::random_distribution(rng, num_actions, 0.0);
        const double scale = 1.0 - floor * static_cast<double>(num_actions);
        for (double& p : row) p = floor + scale * p;
        double sum = 0.0;
        for (double p : row) sum += p;
        *std::max_element(row.begin(), row.end()) += 1.0 - sum;
        pi.set_row(s, row);
    }
    return pi;
}

struct RedundantMDPSpec {
    std::size_t num_states = 6;
    std::size_t num_effective_actions = 3;
    /// Copies of each effective action; total actions = sum of copies.
    std::vector<std::size_t> copies{2, 1, 1};
    /// 0 gives a deterministic model; otherwise each effective action's row
    /// mixes its designated successor with a random distribution at this weight.
    double stochasticity = 0.0;
    double gamma = 0.9;
    std::uint64_t seed = 0;
};

struct RedundantMDP {
    TabularMDP mdp;
    RedundancyGroups ground_truth;
    std::vector<std::size_t> effective_action;  ///< effective index of each action
};

/// Model whose action copies share transition rows and rewards exactly.
/// Distinct effective actions get distinct designated successors, so in the
/// deterministic case the planted groups are exactly the successor groups.
inline RedundantMDP random_redundant_mdp(const RedundantMDPSpec& spec) {
    const auto E = spec.num_effective_actions;
    if (spec.copies.size() != E) throw ModelError("random_redundant_mdp: copies must list one count per effective action");
    if (E > spec.num_states) throw ModelError("random_redundant_mdp: needs num_states >= num_effective_actions");
    if (spec.stochasticity < 0.0 || spec.stochasticity > 1.0)
        throw ModelError("random_redundant_mdp: stochasticity must lie in [0,1]");
    std::size_t A = 0;
    for (auto c : spec.copies) {
        if (c == 0) throw ModelError("random_redundant_mdp: every effective action needs at least one copy");
        A += c;
    }

    RedundantMDP out;
    for (std::size_t e = 0; e < E; ++e)
        for (std::size_t c = 0; c < spec.copies[e]; ++c) out.effective_action.push_back(e);

    Engine rng = make_engine(spec.seed, "random_redundant_mdp");
    TabularMDP mdp(spec.num_states, A, spec.gamma);
    std::vector<StateId> order(spec.num_states);
    for (StateId s = 0; s < spec.num_states; ++s) {
        std::iota(order.begin(), order.end(), StateId{0});
        for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[uniform_index(rng, i + 1)]);
        std::vector<std::vector<double>> rows(E);
        std::vector<double> rewards(E);
        for (std::size_t e = 0; e < E; ++e) {
            std::vector<double> row(spec.num_states, 0.0);
            row[order[e]] = 1.0;
            if (spec.stochasticity > 0.0) {
                const auto noise = detail::random_distribution(rng, spec.num_states, 0.5);
                for (StateId n = 0; n < spec.num_states; ++n)
                    row[n] = (1.0 - spec.stochasticity) * row[n] + spec.stochasticity * noise[n];
                double sum = 0.0;
                for (double v : row) sum += v;
                row[order[e]] += 1.0 - sum;
            }
            rows[e] = std::move(row);
            rewards[e] = uniform01(rng);
        }
        for (ActionId a = 0; a < A; ++a) {
            mdp.set_row(s, a, rows[out.effective_action[a]]);
            mdp.set_reward(s, a, rewards[out.effective_action[a]]);
        }
    }
    mdp.set_initial(detail::random_distribution(rng, spec.num_states, 0.0));
    require_valid(mdp);

    out.ground_truth.derivation = GroupDerivation::exact_successor;
    std::vector<std::vector<ActionId>> classes(E);
    for (ActionId a = 0; a < A; ++a) classes[out.effective_action[a]].push_back(a);
    out.ground_truth.per_state.assign(spec.num_states, classes);
    out.mdp = std::move(mdp);
    return out;
}

// ---------------------------------------------------------------------------
// Macro actions

/// Composite model whose actions are all length-k primitive sequences.
///
/// Action index encodes the sequence in base |A| with the first primitive as
/// the most significant digit. Rewards are discounted inside the sequence and
/// the composite discount is gamma^k. Absorbing zero-reward states truncate a
/// sequence naturally.
inline TabularMDP macro_wrapper(const TabularMDP& base, std::size_t k, std::size_t max_actions = 4096) {
    if (k == 0) throw std::invalid_argument("macro_wrapper: k must be at least 1");
    const auto A = base.num_actions();
    const auto S = base.num_states();
    std::size_t count = 1;
    for (std::size_t i = 0; i < k; ++i) {
        if (count > max_actions / A) throw std::length_error("macro_wrapper: |A|^k exceeds the action cap");
        count *= A;
    }

    TabularMDP macro(S, count, std::pow(base.gamma(), static_cast<double>(k)));
    std::vector<ActionId> seq(k);
    std::vector<double> dist(S), next(S);
    for (ActionId m = 0; m < count; ++m) {
        ActionId code = m;
        for (std::size_t j = k; j-- > 0;) {
            seq[j] = code % A;
            code /= A;
        }
        for (StateId s = 0; s < S; ++s) {
            std::fill(dist.begin(), dist.end(), 0.0);
            dist[s] = 1.0;
            double reward = 0.0;
            double discount = 1.0;
            for (std::size_t j = 0; j < k; ++j) {
                std::fill(next.begin(), next.end(), 0.0);
                for (StateId x = 0; x < S; ++x) {
                    if (dist[x] == 0.0) continue;
                    reward += discount * dist[x] * base.reward(x, seq[j]);
                    const auto row = base.row(x, seq[j]);
                    for (StateId y = 0; y < S; ++y) next[y] += dist[x] * row[y];
                }
                dist.swap(next);
                discount *= base.gamma();
            }
            macro.set_row(s, m, dist);
            macro.set_reward(s, m, reward);
        }
        if (!base.action_labels.empty()) {
            std::string label;
            for (std::size_t j = 0; j < k; ++j) label += (j ? "+" : "") + base.action_labels[seq[j]];
            macro.action_labels.push_back(label);
        }
    }
    macro.set_initial(base.initial());
    macro.state_labels = base.state_labels;
    require_valid(macro);
    return macro;
}

}  // namespace minred
