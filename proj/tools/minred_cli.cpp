// Command-line front end: run, sweep, report, verify, export.

#include "minred/harness.hpp"
#include "minred/mdp_io.hpp"
#include "minred/verify.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitVerifyFailed = 2;
constexpr int kExitRuntime = 3;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Transition-entropy and action-redundancy toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", minred::kArtifactVersion);

    std::string config_path, out_dir = "out", format = "csv", grid;
    std::optional<std::uint64_t> seed;
    std::size_t workers = minred::default_workers();

    auto* run = app.add_subcommand("run", "Train agents for every configured seed");
    auto* sweep = app.add_subcommand("sweep", "Run a grid of configurations and summarize final returns");
    for (auto* sub : {run, sweep}) {
        sub->add_option("--config", config_path, "Experiment config file")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "Root seed (overrides run.seed)");
        sub->add_option("--out", out_dir, "Output directory (overrides run.out)");
        sub->add_option("--workers", workers, "Concurrent runs")->check(CLI::PositiveNumber);
        sub->add_option("--format", format, "Training log format")->check(CLI::IsMember({"csv", "records"}));
    }
    sweep->add_option("--grid", grid, "Grid as key=v1,v2;key2=w1,w2 (defaults to sweep.* keys)");

    std::string mdp_path, policy_path, report_out;
    double alpha = 1.0;
    auto* report = app.add_subcommand("report", "Exact entropy and redundancy quantities for an MDP and policy");
    report->add_option("--mdp", mdp_path, "MDP document")->required()->check(CLI::ExistingFile);
    report->add_option("--policy", policy_path, "Policy document (uniform when omitted)")->check(CLI::ExistingFile);
    report->add_option("--alpha", alpha, "Entropy weight in the objective columns");
    report->add_option("--out", report_out, "Output CSV (stdout when omitted)");

    minred::VerifyOptions verify_options;
    auto* verify = app.add_subcommand("verify", "Randomized identity suite");
    verify->add_option("--instances", verify_options.instances, "Random MDPs per identity")->check(CLI::PositiveNumber);
    verify->add_option("--seed", verify_options.seed, "Seed for the random instances");
    verify->add_flag("--perturb-bayes", verify_options.perturb_bayes, "Corrupt the posterior to exercise failure reporting");

    std::string env_name = "four_room", export_out;
    std::size_t copies = 1;
    auto* exporter = app.add_subcommand("export", "Write a built-in environment as an MDP document");
    exporter->add_option("--env", env_name, "Environment")->check(CLI::IsMember({"four_room", "fig1"}));
    exporter->add_option("--n-right-copies", copies, "Right copies for four_room")->check(CLI::PositiveNumber);
    exporter->add_option("--out", export_out, "Output file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*run || *sweep) {
            auto raw = minred::RawConfig::load(config_path);
            if (seed) raw.entries["run.seed"] = {std::to_string(*seed), 0};
            const auto cfg = minred::build_config(raw);
            const std::string dir = run->count("--out") || sweep->count("--out") || cfg.out.empty() ? out_dir : cfg.out;
            const auto fmt = minred::parse_log_format(format);
            if (*run) {
                const auto result = minred::cmd_run(cfg, dir, workers, fmt);
                for (const auto& agent : cfg.agents) {
                    const auto finals = result.final_returns(agent);
                    std::printf("%-12s mean_final_return=%.4f std=%.4f seeds=%zu\n", agent.c_str(), minred::mean_of(finals),
                                minred::std_of(finals), finals.size());
                }
            } else {
                const auto result = minred::cmd_sweep(cfg, minred::parse_grid(grid), dir, workers, fmt);
                for (const auto& row : result.rows) {
                    std::string point;
                    for (std::size_t k = 0; k < result.keys.size(); ++k)
                        point += (k ? " " : "") + result.keys[k] + "=" + row.values[k];
                    std::printf("%s %-12s mean_final_return=%.4f std=%.4f synthetic_inserts=%.0f\n", point.c_str(),
                                row.agent.c_str(), row.mean_final_return, row.std_final_return, row.mean_synthetic_inserts);
                }
            }
            std::printf("outputs written to %s\n", dir.c_str());
        } else if (*report) {
            const auto mdp = minred::load_mdp(mdp_path);
            const auto policy = policy_path.empty() ? minred::Policy::uniform(mdp.num_states(), mdp.num_actions())
                                                    : minred::load_policy(policy_path);
            const minred::Metadata meta{{"mdp", mdp_path}, {"policy", policy_path.empty() ? "uniform" : policy_path},
                                        {"alpha", minred::format_number(alpha)}};
            if (report_out.empty()) {
                minred::cmd_report(mdp, policy, alpha, std::cout, meta);
            } else {
                std::ofstream os(report_out);
                if (!os) throw std::runtime_error("cannot write " + report_out);
                minred::cmd_report(mdp, policy, alpha, os, meta);
            }
        } else if (*verify) {
            const auto results = minred::run_identity_suite(verify_options);
            return minred::print_identity_report(std::cout, results) ? kExitOk : kExitVerifyFailed;
        } else if (*exporter) {
            minred::FourRoomSpec spec;
            spec.n_right_copies = copies;
            const auto mdp = env_name == "fig1" ? minred::fig1_mdp() : minred::four_room(spec).env.mdp;
            minred::save_json(export_out, minred::to_json(mdp));
        }
    } catch (const minred::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitOk;
}
