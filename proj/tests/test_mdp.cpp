#include "minred/envs.hpp"
#include "minred/mdp.hpp"
#include "minred/mdp_io.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <array>
#include <cmath>

using namespace minred;

namespace {

TabularMDP two_state_cycle(double gamma) {
    TabularMDP mdp(2, 1, gamma);
    mdp.set_successor(0, 0, 1);
    mdp.set_successor(1, 0, 0);
    mdp.set_initial_state(0);
    require_valid(mdp);
    return mdp;
}

}  // namespace

TEST(Validate, Fig1IsValidAndDeterministic) {
    auto mdp = fig1_mdp();
    const auto report = validate(mdp);
    EXPECT_TRUE(report.ok());
    EXPECT_TRUE(report.deterministic);
    ASSERT_TRUE(mdp.deterministic_map().has_value());
    EXPECT_EQ(mdp.successor(0, 0), 1u);
    EXPECT_EQ(mdp.successor(0, 1), 1u);
    EXPECT_EQ(mdp.successor(0, 2), 2u);
}

TEST(Validate, ShortRowIsNamed) {
    TabularMDP mdp(2, 2, 0.9);
    for (StateId s = 0; s < 2; ++s)
        for (ActionId a = 0; a < 2; ++a) mdp.set_successor(s, a, 0);
    mdp.set_row(1, 0, std::array{0.5, 0.4});
    mdp.set_initial_state(0);
    const auto report = validate(mdp);
    ASSERT_FALSE(report.ok());
    ASSERT_EQ(report.violations.size(), 1u);
    EXPECT_NE(report.violations[0].find("(s=1,a=0)"), std::string::npos);
    EXPECT_NE(report.violations[0].find("0.9"), std::string::npos);
    EXPECT_FALSE(mdp.deterministic_map().has_value());
}

TEST(Validate, RandomStochasticIsValidNotDeterministic) {
    auto mdp = random_mdp({5, 3, false, 0.9, 0.3, 11});
    const auto report = validate(mdp);
    EXPECT_TRUE(report.ok()) << report.summary();
    EXPECT_FALSE(mdp.deterministic_map().has_value());
}

TEST(Validate, RejectsBadGammaNegativeEntriesAndInitial) {
    TabularMDP mdp(2, 1, 1.0);
    mdp.set_row(0, 0, std::array{1.5, -0.5});
    mdp.set_successor(1, 0, 1);
    mdp.set_initial(std::array{0.6, 0.6});
    const auto report = validate(mdp);
    EXPECT_EQ(report.violations.size(), 3u) << report.summary();
    EXPECT_THROW(require_valid(mdp), ModelError);
}

TEST(Validate, SetterDropsStaleDeterministicMap) {
    auto mdp = fig1_mdp();
    ASSERT_TRUE(mdp.is_deterministic());
    mdp.set_row(0, 0, std::array{0.0, 0.5, 0.5});
    EXPECT_FALSE(mdp.is_deterministic());
    require_valid(mdp);
    EXPECT_FALSE(mdp.is_deterministic());
}

TEST(Validate, RowSumToleranceIsTight) {
    TabularMDP mdp(2, 1, 0.9);
    mdp.set_row(0, 0, std::array{0.5, 0.5 + 5e-13});
    mdp.set_successor(1, 0, 1);
    mdp.set_initial_state(0);
    EXPECT_TRUE(validate(mdp).ok());
    mdp.set_row(0, 0, std::array{0.5, 0.5 + 5e-12});
    EXPECT_FALSE(validate(mdp).ok());
}

TEST(Indexing, OutOfRangeThrows) {
    const auto mdp = fig1_mdp();
    EXPECT_THROW((void)mdp.prob(3, 0, 0), std::out_of_range);
    EXPECT_THROW((void)mdp.row(0, 3), std::out_of_range);
    EXPECT_THROW((void)next_state_distribution(mdp, 5, Policy::uniform(3, 3)), std::out_of_range);
}

TEST(NextState, Fig1Uniform) {
    const auto p = next_state_distribution(fig1_mdp(), 0, Policy::uniform(3, 3));
    EXPECT_NEAR(p[0], 0.0, 1e-15);
    EXPECT_NEAR(p[1], 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(p[2], 1.0 / 3.0, 1e-15);
}

TEST(NextState, Fig1HalfZeroHalf) {
    const auto p = next_state_distribution(fig1_mdp(), 0, fig1_policy(0.5, 0.0, 0.5));
    EXPECT_DOUBLE_EQ(p[1], 0.5);
    EXPECT_DOUBLE_EQ(p[2], 0.5);
}

TEST(NextState, PointMassReturnsRow) {
    const auto mdp = random_mdp({6, 4, false, 0.9, 0.2, 3});
    for (ActionId a = 0; a < 4; ++a) {
        std::vector<ActionId> choice(6, a);
        const auto p = next_state_distribution(mdp, 2, Policy::deterministic(4, choice));
        const auto row = mdp.row(2, a);
        for (StateId n = 0; n < 6; ++n) EXPECT_EQ(p[n], row[n]);
    }
}

TEST(NextState, LinearInPolicy) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto mdp = random_mdp({5, 3, false, 0.9, 0.3, seed});
        const auto a = random_positive_policy(5, 3, seed + 100);
        const auto b = random_positive_policy(5, 3, seed + 200);
        const double w = 0.3 + 0.02 * static_cast<double>(seed);
        const auto mixed = Policy::mix(a, b, w);
        for (StateId s = 0; s < 5; ++s) {
            const auto pa = next_state_distribution(mdp, s, a);
            const auto pb = next_state_distribution(mdp, s, b);
            const auto pm = next_state_distribution(mdp, s, mixed);
            double sum = 0.0;
            for (StateId n = 0; n < 5; ++n) {
                EXPECT_NEAR(pm[n], w * pa[n] + (1 - w) * pb[n], 1e-12);
                sum += pm[n];
            }
            EXPECT_NEAR(sum, 1.0, 1e-12);
        }
    }
}

TEST(Visitation, SingleState) {
    TabularMDP mdp(1, 2, 0.9);
    mdp.set_successor(0, 0, 0);
    mdp.set_successor(0, 1, 0);
    mdp.set_initial_state(0);
    require_valid(mdp);
    const auto rho = state_visitation(mdp, Policy::uniform(1, 2));
    EXPECT_NEAR(rho[0], 1.0, 1e-12);
}

TEST(Visitation, TwoStateCycleGeometric) {
    const auto rho = state_visitation(two_state_cycle(0.5), Policy::uniform(2, 1));
    EXPECT_NEAR(rho[0], 2.0 / 3.0, 1e-9);
    EXPECT_NEAR(rho[1], 1.0 / 3.0, 1e-9);
}

TEST(Visitation, CycleClosedFormAcrossGamma) {
    // Cycle of length L: rho(k) = (1-g) g^k / (1 - g^L).
    for (std::size_t L : {3, 5, 8}) {
        for (double g : {0.3, 0.9, 0.99}) {
            TabularMDP mdp(L, 1, g);
            for (StateId s = 0; s < L; ++s) mdp.set_successor(s, 0, (s + 1) % L);
            mdp.set_initial_state(0);
            require_valid(mdp);
            const auto rho = state_visitation(mdp, Policy::uniform(L, 1));
            for (StateId k = 0; k < L; ++k)
                EXPECT_NEAR(rho[k], (1 - g) * std::pow(g, k) / (1 - std::pow(g, L)), 1e-9);
        }
    }
}

TEST(Visitation, SumsToOne) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto mdp = random_mdp({7, 3, false, 0.95, 0.3, seed});
        const auto rho = state_visitation(mdp, random_positive_policy(7, 3, seed));
        double sum = 0.0;
        for (double x : rho) {
            EXPECT_GE(x, -1e-12);
            sum += x;
        }
        EXPECT_NEAR(sum, 1.0, 1e-9);
    }
}

TEST(Visitation, FourRoomMatchesMonteCarlo) {
    const auto room = four_room({});
    auto mdp = room.env.mdp;
    mdp.set_gamma(0.95);
    require_valid(mdp);
    const auto pi = Policy::uniform(mdp.num_states(), mdp.num_actions());
    const auto rho = state_visitation(mdp, pi);
    const auto mc = oracle::monte_carlo_visitation(mdp, pi, 1'000'000, 17);
    for (StateId s = 0; s < rho.size(); ++s) EXPECT_NEAR(rho[s], mc[s], 2e-3) << "state " << s;
}

TEST(Sampling, DeterministicAlwaysSuccessor) {
    const auto mdp = fig1_mdp();
    Engine rng(1);
    for (int i = 0; i < 100; ++i) {
        EXPECT_EQ(sample_step(mdp, 0, 1, rng).first, 1u);
        EXPECT_EQ(sample_step(mdp, 0, 2, rng).first, 2u);
    }
}

TEST(Sampling, FairCoinFrequency) {
    TabularMDP mdp(2, 1, 0.9);
    mdp.set_row(0, 0, std::array{0.5, 0.5});
    mdp.set_row(1, 0, std::array{0.5, 0.5});
    mdp.set_reward(0, 0, 2.5);
    mdp.set_initial_state(0);
    require_valid(mdp);
    Engine rng(5);
    int ones = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const auto [next, r] = sample_step(mdp, 0, 0, rng);
        EXPECT_EQ(r, 2.5);
        ones += next == 1;
    }
    EXPECT_NEAR(static_cast<double>(ones) / n, 0.5, 1e-2);
}

TEST(Sampling, RolloutReplaysUnderSeed) {
    const auto mdp = random_mdp({6, 3, false, 0.9, 0.3, 4});
    const auto pi = random_positive_policy(6, 3, 9);
    const auto a = rollout(mdp, pi, 500, 42);
    const auto b = rollout(mdp, pi, 500, 42);
    const auto c = rollout(mdp, pi, 500, 43);
    EXPECT_EQ(a.steps, b.steps);
    EXPECT_NE(a.steps, c.steps);
    EXPECT_TRUE(a.chained());
    EXPECT_EQ(a.seed, 42u);
}

TEST(Sampling, DerivedStreamsAreStable) {
    // Frozen values guard the seeding scheme against accidental changes.
    EXPECT_EQ(derive_seed(0, "env"), derive_seed(0, "env"));
    EXPECT_NE(derive_seed(0, "env"), derive_seed(0, "action"));
    EXPECT_NE(derive_seed(0, "run", 0), derive_seed(0, "run", 1));
    EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Values, ZeroRewardZeroValue) {
    auto mdp = random_mdp({5, 3, false, 0.9, 0.3, 8});
    for (StateId s = 0; s < 5; ++s)
        for (ActionId a = 0; a < 3; ++a) mdp.set_reward(s, a, 0.0);
    const auto values = policy_values(mdp, random_positive_policy(5, 3, 1));
    for (double v : values.v) EXPECT_EQ(v, 0.0);
}

TEST(Values, SingleStateGeometric) {
    TabularMDP mdp(1, 1, 0.9);
    mdp.set_successor(0, 0, 0);
    mdp.set_reward(0, 0, 1.0);
    mdp.set_initial_state(0);
    require_valid(mdp);
    EXPECT_NEAR(policy_values(mdp, Policy::uniform(1, 1)).v[0], 10.0, 1e-9);
}

TEST(Values, BellmanResidualAndConsistency) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto mdp = random_mdp({6, 4, false, 0.95, 0.3, seed});
        const auto pi = random_positive_policy(6, 4, seed);
        const auto values = policy_values(mdp, pi);
        std::vector<double> r_pi(6, 0.0);
        for (StateId s = 0; s < 6; ++s) {
            double v = 0.0;
            for (ActionId a = 0; a < 4; ++a) {
                v += pi(s, a) * values.Q(s, a);
                r_pi[s] += pi(s, a) * mdp.reward(s, a);
                double backup = mdp.reward(s, a);
                for (StateId n = 0; n < 6; ++n) backup += mdp.gamma() * mdp.prob(s, a, n) * values.v[n];
                EXPECT_NEAR(values.Q(s, a), backup, 1e-9);
            }
            EXPECT_NEAR(values.v[s], v, 1e-9);
        }
        const auto iterated = oracle::iterated_values(mdp, pi, r_pi, 2000);
        for (StateId s = 0; s < 6; ++s) EXPECT_NEAR(values.v[s], iterated[s], 1e-9);
    }
}

TEST(Values, FourRoomShortestPath) {
    const auto room = four_room({});
    const auto& mdp = room.env.mdp;
    const auto dist = oracle::distances_to(mdp, room.goal);
    const int d = dist[room.start];
    EXPECT_EQ(d, 20);
    const auto values = policy_values(mdp, oracle::shortest_path_policy(mdp, room.goal));
    EXPECT_NEAR(values.v[room.start], std::pow(mdp.gamma(), d - 1), 1e-9);
}

TEST(Solve, SingularSystemThrows) {
    Eigen::MatrixXd lhs = Eigen::MatrixXd::Zero(2, 2);
    lhs(0, 0) = 1.0;
    Eigen::VectorXd rhs(2);
    rhs << 1.0, 1.0;
    EXPECT_THROW(solve_dense(lhs, rhs), LinearSolveError);
}

TEST(Policy, ShapeAndPositivity) {
    const auto mdp = fig1_mdp();
    EXPECT_THROW(require_compatible(mdp, Policy::uniform(2, 3)), ModelError);
    EXPECT_TRUE(Policy::uniform(3, 3).strictly_positive(0.3));
    EXPECT_FALSE(fig1_policy(0.5, 0.0, 0.5).strictly_positive(1e-4));
    auto bad = Policy::uniform(2, 2);
    bad.at(0, 0) = 0.7;
    EXPECT_EQ(bad.violations().size(), 1u);
    EXPECT_THROW(Policy::from_rows({{0.5, 0.5}, {1.0}}), ModelError);
}

TEST(FileFormat, RoundTrip) {
    auto mdp = random_mdp({4, 3, false, 0.9, 0.3, 2});
    mdp.state_labels = {"a", "b", "c", "d"};
    const auto back = mdp_from_json(to_json(mdp));
    EXPECT_EQ(back.num_states(), 4u);
    EXPECT_EQ(back.gamma(), mdp.gamma());
    EXPECT_EQ(back.state_labels, mdp.state_labels);
    for (StateId s = 0; s < 4; ++s)
        for (ActionId a = 0; a < 3; ++a) {
            EXPECT_EQ(back.reward(s, a), mdp.reward(s, a));
            for (StateId n = 0; n < 4; ++n) EXPECT_EQ(back.prob(s, a, n), mdp.prob(s, a, n));
        }
    const auto pi = random_positive_policy(4, 3, 5);
    const auto pi_back = policy_from_json(to_json(pi));
    for (StateId s = 0; s < 4; ++s)
        for (ActionId a = 0; a < 3; ++a) EXPECT_EQ(pi_back(s, a), pi(s, a));
}

TEST(FileFormat, LoaderRejectsInvalid) {
    auto j = to_json(fig1_mdp());
    j["transition"][0] = {0.5, 0.4, 0.0};
    EXPECT_THROW(mdp_from_json(j), ModelError);
    auto k = to_json(fig1_mdp());
    k.erase("gamma");
    EXPECT_THROW(mdp_from_json(k), ModelError);
    auto p = to_json(Policy::uniform(3, 3));
    p["probs"][1] = {0.9, 0.9, 0.0};
    EXPECT_THROW(policy_from_json(p), ModelError);
}
