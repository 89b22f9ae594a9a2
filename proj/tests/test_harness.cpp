#include "minred/harness.hpp"
#include "minred/mdp_io.hpp"
#include "minred/verify.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace minred;
namespace fs = std::filesystem;

namespace {

/// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("minred_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream os(p);
    os << text;
}

const char* kSmallRun = R"(# two agents on a short four-room run
agents = minred_q, baseline_q
env.name = four_room
env.n_right_copies = 5
agent.total_steps = 6000
agent.learning_starts = 1000
agent.regularization_starts = 2000
agent.buffer_capacity = 5000
agent.eval_episodes = 5
run.num_seeds = 2
run.seed = 42
run.eval_period = 1000
run.final_window = 20
)";

ExperimentConfig small_config() { return build_config(RawConfig::parse(std::string(kSmallRun))); }

std::size_t error_line(const std::string& text) {
    try {
        build_config(RawConfig::parse(text));
    } catch (const ConfigError& e) {
        return e.line();
    }
    return SIZE_MAX;
}

std::string error_text(const std::string& text) {
    try {
        build_config(RawConfig::parse(text));
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

struct CliResult {
    int code = -1;
    std::string output;
};

CliResult cli(const std::string& args) {
    TempDir tmp("cli_out");
    const auto out = tmp.path / "out.txt";
    const std::string cmd = std::string(MINRED_CLI) + " " + args + " > " + out.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out)};
}

}  // namespace

TEST(Config, ParsesAllSections) {
    const auto cfg = small_config();
    EXPECT_EQ(cfg.agents, (std::vector<std::string>{"minred_q", "baseline_q"}));
    EXPECT_EQ(cfg.env.four_room.n_right_copies, 5u);
    EXPECT_EQ(cfg.num_seeds, 2u);
    EXPECT_EQ(cfg.seed, 42u);
    EXPECT_EQ(cfg.agent_configs.at("minred_q").total_steps, 6000u);
    EXPECT_EQ(cfg.agent_configs.at("baseline_q").buffer_capacity, 5000u);
    EXPECT_EQ(cfg.eval_period, 1000u);
}

TEST(Config, ActorCriticDefaultsDiffer) {
    const auto cfg = build_config(RawConfig::parse(std::string("agents = maxent_ac, minred_q\n")));
    EXPECT_EQ(cfg.agent_configs.at("maxent_ac").batch_size, 256u);
    EXPECT_EQ(cfg.agent_configs.at("minred_q").batch_size, 32u);
}

TEST(Config, AgentOverrideWinsRegardlessOfOrder) {
    const auto cfg = build_config(RawConfig::parse(std::string("minred_q.delta = 0.2\nagents = minred_q, baseline_q\n"
                                                               "agent.delta = 0.01\nminred_q.posterior = exact\n")));
    EXPECT_EQ(cfg.agent_configs.at("minred_q").delta, 0.2);
    EXPECT_EQ(cfg.agent_configs.at("baseline_q").delta, 0.01);
    EXPECT_EQ(cfg.agent_configs.at("minred_q").posterior, PosteriorSource::exact);
    EXPECT_EQ(cfg.agent_configs.at("baseline_q").posterior, PosteriorSource::learned);
}

TEST(Config, ErrorsCarryLineNumbers) {
    EXPECT_EQ(error_line("agents = minred_q\n\nthis line has no equals\n"), 3u);
    EXPECT_EQ(error_line("agents = minred_q\nagent.alpha = 0.1\nagent.alpha = 0.2\n"), 3u);
    EXPECT_EQ(error_line("agents = minred_q\nagent.alpha =\n"), 2u);
    EXPECT_EQ(error_line("agents = minred_q\n# comment\nagent.not_a_field = 1\n"), 3u);
    EXPECT_EQ(error_line("agents = minred_q\nagent.alpha = fast\n"), 2u);
    EXPECT_EQ(error_line("agents = minred_q\nbogus.key = 1\n"), 2u);
    EXPECT_EQ(error_line("agents = minred_q\nenv.name = atari\n"), 2u);
    EXPECT_EQ(error_line("agents = minred_q\nbaseline_q.delta = 0.1\n"), 2u);
    EXPECT_EQ(error_line("agents = minred_q\nrun.num_seeds = 0\n"), 2u);
    EXPECT_EQ(error_line("agents = minred_q\nagent.posterior = magic\n"), 2u);
    EXPECT_NE(error_text("agents = minred_q\nagent.delta = 0\n").find("delta must be positive"), std::string::npos);
}

TEST(Config, UnknownAgentNamesValidOnes) {
    const auto message = error_text("agents = minred_q, sac\n");
    EXPECT_NE(message.find("line 1"), std::string::npos);
    EXPECT_NE(message.find("`sac`"), std::string::npos);
    for (const auto& name : known_agents()) EXPECT_NE(message.find(name), std::string::npos) << name;
    EXPECT_NE(error_text("env.name = fig1\n").find("valid agents"), std::string::npos);
    EXPECT_THROW(run_agent("sac", four_room({}).env, AgentConfig{}, 0), std::invalid_argument);
}

TEST(Config, CanonicalRoundTrip) {
    const auto raw = RawConfig::parse(std::string(kSmallRun));
    const auto again = RawConfig::parse(raw.canonical());
    EXPECT_EQ(again.canonical(), raw.canonical());
    EXPECT_EQ(build_config(again).hash(), build_config(raw).hash());
}

TEST(Config, MakesEveryEnvironment) {
    TempDir tmp("env");
    save_json((tmp.path / "fig1.json").string(), to_json(fig1_mdp()));
    const auto file_cfg = build_config(RawConfig::parse("agents = baseline_q\nenv.name = mdp_file\nenv.path = " +
                                                        (tmp.path / "fig1.json").string() + "\nenv.terminal = 1, 2\n"));
    const auto from_file = make_env(file_cfg.env);
    EXPECT_EQ(from_file.terminal, (std::vector<bool>{false, true, true}));
    const auto fig1 = make_env(build_config(RawConfig::parse(std::string("agents = baseline_q\nenv.name = fig1\n"))).env);
    EXPECT_EQ(fig1.terminal, from_file.terminal);
    EXPECT_EQ(error_line("agents = baseline_q\nenv.name = mdp_file\n"), 0u);
}

TEST(Logs, RoundTripBothFormats) {
    std::vector<LogRecord> records{{100, 0, 1.0, 0.5, 0, 3, std::nan("")}, {250, 1, 0.0, std::nan(""), 2, 9, -0.25}};
    for (auto format : {LogFormat::csv, LogFormat::records}) {
        std::stringstream io;
        write_log(io, records, format, {{"agent", "x"}});
        EXPECT_EQ(read_log(io, format), records);
    }
    EXPECT_EQ(parse_log_format("records"), LogFormat::records);
    EXPECT_THROW(parse_log_format("parquet"), std::invalid_argument);
}

TEST(Aggregate, HandComputedValues) {
    // Seed A finishes episodes with returns 1,0,1 at steps 10,20,30; seed B
    // with 0,0 at steps 15,30. Window 2, eval every 10 steps.
    const std::vector<std::vector<LogRecord>> per_seed{{{10, 0, 1.0}, {20, 1, 0.0}, {30, 2, 1.0}}, {{15, 0, 0.0}, {30, 1, 0.0}}};
    const auto points = aggregate(per_seed, 30, 10, 2);
    ASSERT_EQ(points.size(), 3u);
    EXPECT_EQ(points[0].step, 10u);
    EXPECT_DOUBLE_EQ(points[0].mean_return, 0.5);  // A: 1, B: none yet -> 0
    EXPECT_DOUBLE_EQ(points[0].std_return, 0.5);
    EXPECT_DOUBLE_EQ(points[1].mean_return, 0.25);  // A: (1+0)/2, B: 0
    EXPECT_DOUBLE_EQ(points[2].mean_return, 0.25);  // A: (0+1)/2, B: 0
}

TEST(Run, WritesEveryArtifactAndAggregatesFromLogs) {
    TempDir tmp("run");
    const auto cfg = small_config();
    const auto result = cmd_run(cfg, tmp.path, 2);
    ASSERT_EQ(result.seeds.size(), 4u);
    for (const char* name : {"minred_q_seed0.csv", "minred_q_seed1.csv", "baseline_q_seed0.csv", "minred_q_aggregate.csv",
                             "minred_q_visitation.csv", "minred_q_histogram.csv", "baseline_q_aggregate.csv", "summary.csv"})
        EXPECT_TRUE(fs::exists(tmp.path / name)) << name;

    // Metadata block on every CSV.
    for (const auto& entry : fs::directory_iterator(tmp.path)) {
        const auto text = slurp(entry.path());
        EXPECT_EQ(text.rfind("# artifact_version: ", 0), 0u) << entry.path();
        EXPECT_NE(text.find("# config_hash: "), std::string::npos) << entry.path();
        EXPECT_NE(text.find("# seeds: "), std::string::npos) << entry.path();
    }

    // Recompute the aggregate longhand from the per-seed files.
    std::vector<std::vector<LogRecord>> per_seed;
    for (int i = 0; i < 2; ++i) {
        std::ifstream in(tmp.path / ("minred_q_seed" + std::to_string(i) + ".csv"));
        per_seed.push_back(read_log(in, LogFormat::csv));
    }
    std::ostringstream expected;
    expected << "step,mean_return,std_return\n";
    for (std::size_t step = 1000; step <= 6000; step += 1000) {
        double values[2];
        for (int i = 0; i < 2; ++i) {
            double sum = 0.0;
            std::size_t n = 0;
            for (auto it = per_seed[i].rbegin(); it != per_seed[i].rend() && n < 20; ++it)
                if (it->step <= step) sum += it->ret, ++n;
            values[i] = n ? sum / static_cast<double>(n) : 0.0;
        }
        const double mean = (values[0] + values[1]) / 2;
        const double sd = std::abs(values[0] - values[1]) / 2;
        expected << step << ',' << format_number(mean) << ',' << format_number(sd) << '\n';
    }
    const auto aggregate_text = slurp(tmp.path / "minred_q_aggregate.csv");
    EXPECT_EQ(aggregate_text.substr(aggregate_text.find("step,")), expected.str());

    // Visitation sums to the number of training steps across seeds.
    std::ifstream visits(tmp.path / "minred_q_visitation.csv");
    std::string line;
    std::uint64_t total = 0;
    while (std::getline(visits, line)) {
        if (line.empty() || line[0] == '#' || line.starts_with("row")) continue;
        total += std::stoull(line.substr(line.rfind(',') + 1));
    }
    EXPECT_EQ(total, 2u * 6000u);
}

TEST(Run, RerunIsByteIdentical) {
    TempDir a("rerun_a"), b("rerun_b");
    auto cfg = small_config();
    cfg.num_seeds = 1;
    cmd_run(cfg, a.path, 1, LogFormat::records);
    cmd_run(cfg, b.path, 2, LogFormat::records);
    std::size_t files = 0;
    for (const auto& entry : fs::directory_iterator(a.path)) {
        ++files;
        EXPECT_EQ(slurp(entry.path()), slurp(b.path / entry.path().filename())) << entry.path().filename();
    }
    EXPECT_EQ(files, 9u);
    EXPECT_TRUE(fs::exists(a.path / "minred_q_seed0.jsonl"));
}

TEST(Sweep, EmptyGridIsAnError) {
    TempDir tmp("sweep_empty");
    EXPECT_THROW(cmd_sweep(small_config(), {}, tmp.path, 1), ConfigError);
    EXPECT_THROW(parse_grid("agent.delta"), ConfigError);
    EXPECT_THROW(parse_grid("agent.delta="), ConfigError);
    EXPECT_EQ(parse_grid(" agent.delta = 0.1, 0.2 ; env.n_right_copies=1").size(), 2u);
}

TEST(Sweep, DeltaReducesSyntheticInserts) {
    TempDir tmp("sweep_delta");
    auto raw = RawConfig::parse(std::string(kSmallRun));
    raw.entries["agents"] = {"minred_q", 1};
    raw.entries["env.n_right_copies"] = {"35", 4};
    raw.entries["agent.posterior"] = {"exact", 0};
    raw.entries["sweep.agent.delta"] = {"0.01, 0.05, 0.2", 0};
    const auto cfg = build_config(raw);
    ASSERT_EQ(cfg.sweep.at("agent.delta").size(), 3u);
    const auto result = cmd_sweep(cfg, {}, tmp.path, 2);
    ASSERT_EQ(result.rows.size(), 3u);
    EXPECT_GT(result.rows[0].mean_synthetic_inserts, result.rows[1].mean_synthetic_inserts);
    EXPECT_GE(result.rows[1].mean_synthetic_inserts, result.rows[2].mean_synthetic_inserts);
    EXPECT_TRUE(fs::exists(tmp.path / "sweep_summary.csv"));
    EXPECT_TRUE(fs::exists(tmp.path / "agent.delta=0.05" / "minred_q_aggregate.csv"));
    const auto summary = slurp(tmp.path / "sweep_summary.csv");
    EXPECT_NE(summary.find("agent.delta,agent,mean_final_return,std_final_return,mean_synthetic_inserts\n"),
              std::string::npos);
}

TEST(Report, Fig1Columns) {
    std::ostringstream os;
    cmd_report(fig1_mdp(), fig1_policy(1.0 / 3, 1.0 / 3, 1.0 / 3), 1.0, os, {{"mdp", "fig1"}});
    std::istringstream in(os.str());
    std::string line;
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line.starts_with("state")) continue;
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    ASSERT_EQ(rows.size(), 9u);
    // Columns: state, action, H, F, g, model_entropy, redundancy_kl, eta, zeta_mean.
    EXPECT_NEAR(std::stod(rows[0][4]), 0.405465108108, 1e-10);
    EXPECT_NEAR(std::stod(rows[1][4]), 0.405465108108, 1e-10);
    EXPECT_NEAR(std::stod(rows[2][4]), 1.09861228867, 1e-10);
    EXPECT_NEAR(std::stod(rows[0][7]), 1.0 / 3, 1e-10);
    EXPECT_NEAR(std::stod(rows[2][7]), 0.0, 1e-15);
    EXPECT_NEAR(std::stod(rows[0][3]), 0.636514168295, 1e-10);
}

TEST(Verify, DefaultSuitePassesAndIsReproducible) {
    const auto first = run_identity_suite();
    const auto second = run_identity_suite();
    ASSERT_EQ(first.size(), 7u);
    for (std::size_t i = 0; i < first.size(); ++i) {
        EXPECT_TRUE(first[i].ok()) << first[i].name << " " << first[i].max_residual;
        EXPECT_LE(first[i].max_residual, 1e-9) << first[i].name;
        EXPECT_GE(first[i].instances, 100u);
        EXPECT_EQ(first[i].max_residual, second[i].max_residual);
    }
}

TEST(Verify, PerturbedBayesIsFlagged) {
    VerifyOptions options;
    options.perturb_bayes = true;
    const auto results = run_identity_suite(options);
    bool flagged = false;
    for (const auto& r : results)
        if (!r.ok() && r.max_residual > 1e-3) flagged = true;
    EXPECT_TRUE(flagged);
    std::ostringstream os;
    EXPECT_FALSE(print_identity_report(os, results));
    EXPECT_NE(os.str().find("FAIL"), std::string::npos);
}

TEST(Cli, ExitCodes) {
    EXPECT_EQ(cli("--help").code, 0);
    EXPECT_EQ(cli("").code, 1);
    EXPECT_EQ(cli("frobnicate").code, 1);
    EXPECT_EQ(cli("run --config /nonexistent/file.cfg").code, 1);

    const auto verify = cli("verify --instances 20");
    EXPECT_EQ(verify.code, 0) << verify.output;
    EXPECT_NE(verify.output.find("PASS"), std::string::npos);
    const auto broken = cli("verify --instances 20 --perturb-bayes");
    EXPECT_EQ(broken.code, 2) << broken.output;
    EXPECT_NE(broken.output.find("FAIL"), std::string::npos);

    TempDir tmp("cli");
    write_file(tmp.path / "bad.cfg", "agents = minred_q\nagent.alpha = oops\n");
    const auto bad = cli("run --config " + (tmp.path / "bad.cfg").string());
    EXPECT_EQ(bad.code, 1);
    EXPECT_NE(bad.output.find("line 2"), std::string::npos) << bad.output;

    write_file(tmp.path / "broken.json", "{ not json");
    EXPECT_EQ(cli("report --mdp " + (tmp.path / "broken.json").string()).code, 3);

    const auto mdp = (tmp.path / "fig1.json").string();
    EXPECT_EQ(cli("export --env fig1 --out " + mdp).code, 0);
    save_json((tmp.path / "policy.json").string(), to_json(fig1_policy(0.5, 0.0, 0.5)));
    const auto report = cli("report --mdp " + mdp + " --policy " + (tmp.path / "policy.json").string());
    EXPECT_EQ(report.code, 0) << report.output;
    EXPECT_NE(report.output.find("state,action,H,F,g"), std::string::npos);
    EXPECT_NE(report.output.find("0.69314718056"), std::string::npos);  // log 2

    write_file(tmp.path / "run.cfg", std::string(kSmallRun) + "agent.total_steps = 1500\n");
    EXPECT_EQ(cli("run --config " + (tmp.path / "run.cfg").string()).code, 1);  // duplicate key
    std::string text = kSmallRun;
    text.replace(text.find("6000"), 4, "1500");
    write_file(tmp.path / "run.cfg", text);
    const auto run = cli("run --config " + (tmp.path / "run.cfg").string() + " --workers 1 --out " +
                         (tmp.path / "out").string());
    EXPECT_EQ(run.code, 0) << run.output;
    EXPECT_TRUE(fs::exists(tmp.path / "out" / "summary.csv"));
}

TEST(Configs, ShippedFilesLoad) {
    std::size_t configs = 0, policies = 0;
    const fs::path dir = fs::path(MINRED_SOURCE_DIR) / "configs";
    for (const auto& entry : fs::directory_iterator(dir)) {
        const auto path = entry.path().string();
        if (entry.path().extension() == ".cfg") {
            EXPECT_NO_THROW(load_config(path)) << path;
            ++configs;
        } else if (entry.path().filename().string().starts_with("fig1_policy")) {
            EXPECT_NO_THROW(load_policy(path)) << path;
            ++policies;
        }
    }
    EXPECT_EQ(configs, 3u);
    EXPECT_EQ(policies, 3u);
    const auto shipped = load_config((dir / "four_room_n35.cfg").string());
    EXPECT_EQ(shipped.agent_configs.at("minred_q").delta, 0.01);
    EXPECT_EQ(shipped.agent_configs.at("minred_ac").alpha, 0.003);
    EXPECT_EQ(shipped.agent_configs.at("maxent_ac").posterior, PosteriorSource::learned);
    EXPECT_NEAR(transition_entropy_togo(load_mdp((dir / "fig1.json").string()),
                                        load_policy((dir / "fig1_policy_half_zero_half.json").string()))[0],
                std::log(2.0), 1e-12);
}
