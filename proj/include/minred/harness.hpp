#pragma once

#include "minred/config.hpp"
#include "minred/csv.hpp"
#include "minred/report.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace minred {

enum class LogFormat { csv, records };

inline LogFormat parse_log_format(const std::string& s) {
    if (s == "csv") return LogFormat::csv;
    if (s == "records") return LogFormat::records;
    throw std::invalid_argument("format must be `csv` or `records`");
}

// ---------------------------------------------------------------------------
// Training log serialization

inline nlohmann::json to_json(const LogRecord& r) {
    nlohmann::json j;
    j["step"] = r.step;
    j["episode"] = r.episode;
    j["return"] = r.ret;
    j["epsilon"] = std::isnan(r.epsilon) ? nlohmann::json(nullptr) : nlohmann::json(r.epsilon);
    j["clamp_count"] = r.clamp_count;
    j["synthetic_insert_count"] = r.synthetic_insert_count;
    j["mean_zeta"] = std::isnan(r.mean_zeta) ? nlohmann::json(nullptr) : nlohmann::json(r.mean_zeta);
    return j;
}

inline LogRecord record_from_json(const nlohmann::json& j) {
    const auto real = [&](const char* k) {
        return j.at(k).is_null() ? std::numeric_limits<double>::quiet_NaN() : j.at(k).get<double>();
    };
    LogRecord r;
    r.step = j.at("step").get<std::size_t>();
    r.episode = j.at("episode").get<std::size_t>();
    r.ret = j.at("return").get<double>();
    r.epsilon = real("epsilon");
    r.clamp_count = j.at("clamp_count").get<std::size_t>();
    r.synthetic_insert_count = j.at("synthetic_insert_count").get<std::size_t>();
    r.mean_zeta = real("mean_zeta");
    return r;
}

inline constexpr const char* kLogColumns = "step,episode,return,epsilon,clamp_count,synthetic_insert_count,mean_zeta";

/// One JSON object per line, or a CSV table with a metadata block.
inline void write_log(std::ostream& os, const std::vector<LogRecord>& records, LogFormat format, const Metadata& meta) {
    if (format == LogFormat::records) {
        for (const auto& r : records) os << to_json(r).dump() << '\n';
        return;
    }
    write_metadata(os, meta);
    os << kLogColumns << '\n';
    for (const auto& r : records)
        write_row(os, {std::to_string(r.step), std::to_string(r.episode), format_number(r.ret), format_number(r.epsilon),
                       std::to_string(r.clamp_count), std::to_string(r.synthetic_insert_count),
                       format_number(r.mean_zeta)});
}

inline std::vector<LogRecord> read_log(std::istream& is, LogFormat format) {
    std::vector<LogRecord> out;
    std::string line;
    bool header = false;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (format == LogFormat::records) {
            out.push_back(record_from_json(nlohmann::json::parse(line)));
            continue;
        }
        if (!header) {
            header = true;
            continue;
        }
        std::vector<std::string> c;
        std::string cell;
        std::istringstream in(line);
        while (std::getline(in, cell, ',')) c.push_back(cell);
        if (c.size() != 7) throw std::runtime_error("malformed log line: " + line);
        LogRecord r;
        r.step = std::stoul(c[0]);
        r.episode = std::stoul(c[1]);
        r.ret = std::stod(c[2]);
        r.epsilon = std::stod(c[3]);
        r.clamp_count = std::stoul(c[4]);
        r.synthetic_insert_count = std::stoul(c[5]);
        r.mean_zeta = std::stod(c[6]);
        out.push_back(r);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Aggregation

struct AggregatePoint {
    std::size_t step = 0;
    double mean_return = 0.0;
    double std_return = 0.0;
};

/// Mean of the last `window` episode returns completed by `step`; 0 before
/// the first episode ends.
inline double trailing_return(const std::vector<LogRecord>& records, std::size_t step, std::size_t window) {
    TrainingLog view;
    view.records = records;
    return view.trailing_mean_return(step, window);
}

inline double mean_of(const std::vector<double>& xs) {
    double m = 0.0;
    for (double x : xs) m += x;
    return xs.empty() ? 0.0 : m / static_cast<double>(xs.size());
}

/// Population standard deviation.
inline double std_of(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean_of(xs);
    double v = 0.0;
    for (double x : xs) v += (x - m) * (x - m);
    return std::sqrt(v / static_cast<double>(xs.size()));
}

/// Across-seed mean and std of the trailing return at every eval_period steps.
inline std::vector<AggregatePoint> aggregate(const std::vector<std::vector<LogRecord>>& per_seed, std::size_t total_steps,
                                             std::size_t eval_period, std::size_t window) {
    std::vector<AggregatePoint> out;
    for (std::size_t step = eval_period; step <= total_steps; step += eval_period) {
        std::vector<double> values;
        for (const auto& records : per_seed) values.push_back(trailing_return(records, step, window));
        out.push_back({step, mean_of(values), std_of(values)});
    }
    return out;
}

inline void write_aggregate_csv(std::ostream& os, const std::vector<AggregatePoint>& points, const Metadata& meta) {
    write_metadata(os, meta);
    os << "step,mean_return,std_return\n";
    for (const auto& p : points) write_row(os, {std::to_string(p.step), format_number(p.mean_return), format_number(p.std_return)});
}

// ---------------------------------------------------------------------------
// Runs

struct SeedResult {
    std::string agent;
    std::uint64_t seed = 0;
    double final_return = 0.0;
    double eval_return = 0.0;
    std::size_t synthetic_inserts = 0;
    std::size_t clamp_count = 0;
    std::uint64_t trajectory_hash = 0;
};

struct RunResult {
    std::vector<SeedResult> seeds;
    std::vector<std::filesystem::path> files;

    std::vector<double> final_returns(const std::string& agent) const {
        std::vector<double> out;
        for (const auto& s : seeds)
            if (s.agent == agent) out.push_back(s.final_return);
        return out;
    }
};

/// Seeds for a run: derived from the root seed, one per seed index.
inline std::vector<std::uint64_t> run_seeds(const ExperimentConfig& cfg) {
    std::vector<std::uint64_t> out;
    for (std::size_t i = 0; i < cfg.num_seeds; ++i) out.push_back(derive_seed(cfg.seed, "run", i));
    return out;
}

inline Metadata run_metadata(const ExperimentConfig& cfg, const std::string& agent) {
    std::string seeds;
    for (auto s : run_seeds(cfg)) seeds += (seeds.empty() ? "" : " ") + std::to_string(s);
    char hash[24];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(cfg.hash()));
    return {{"config_hash", hash}, {"root_seed", std::to_string(cfg.seed)}, {"seeds", seeds}, {"agent", agent},
            {"env", cfg.env.name}};
}

inline std::size_t default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

/// Calls job(i) for i in [0, count) on up to `workers` threads. The first
/// exception is rethrown after all threads finish.
template <class Job>
void parallel_for(std::size_t count, std::size_t workers, Job&& job) {
    workers = std::max<std::size_t>(1, std::min(workers, count));
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    const auto worker = [&] {
        for (std::size_t i; (i = next++) < count;) {
            try {
                job(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    if (failure) std::rethrow_exception(failure);
}

namespace detail {

inline std::vector<std::uint64_t> sum_counts(const std::vector<TrainingLog>& logs,
                                             std::vector<std::uint64_t> TrainingLog::*field) {
    std::vector<std::uint64_t> total;
    for (const auto& log : logs) {
        const auto& v = log.*field;
        if (total.empty()) total.assign(v.size(), 0);
        for (std::size_t i = 0; i < v.size(); ++i) total[i] += v[i];
    }
    return total;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream os(p);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    return os;
}

}  // namespace detail

/// Executes every configured agent for every seed and writes, per agent:
///   <agent>_seed<i>.{csv,jsonl}   training log
///   <agent>_aggregate.csv         step,mean_return,std_return (recomputed from the log files)
///   <agent>_visitation.csv        training visits summed over seeds
///   <agent>_histogram.csv         evaluation action counts summed over seeds
/// plus summary.csv with one row per (agent, seed).
inline RunResult cmd_run(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, std::size_t workers,
                         LogFormat format = LogFormat::csv) {
    std::filesystem::create_directories(out_dir);
    const auto env = make_env(cfg.env);
    std::optional<FourRoom> room;
    if (cfg.env.name == "four_room") room = four_room(cfg.env.four_room);
    const auto seeds = run_seeds(cfg);

    struct Job {
        std::string agent;
        std::size_t index;
    };
    std::vector<Job> jobs;
    for (const auto& agent : cfg.agents)
        for (std::size_t i = 0; i < seeds.size(); ++i) jobs.push_back({agent, i});
    std::vector<TrainingLog> logs(jobs.size());
    parallel_for(jobs.size(), workers, [&](std::size_t j) {
        logs[j] = run_agent(jobs[j].agent, env, cfg.agent_configs.at(jobs[j].agent), seeds[jobs[j].index]);
    });

    RunResult result;
    const std::string ext = format == LogFormat::records ? ".jsonl" : ".csv";
    for (const auto& agent : cfg.agents) {
        const auto meta = run_metadata(cfg, agent);
        const auto& acfg = cfg.agent_configs.at(agent);
        std::vector<TrainingLog> agent_logs;
        std::vector<std::filesystem::path> log_files;
        for (std::size_t j = 0; j < jobs.size(); ++j) {
            if (jobs[j].agent != agent) continue;
            const auto& log = logs[j];
            const auto path = out_dir / (agent + "_seed" + std::to_string(jobs[j].index) + ext);
            auto os = detail::open_out(path);
            auto seed_meta = meta;
            seed_meta.emplace_back("seed", std::to_string(log.seed));
            write_log(os, log.records, format, seed_meta);
            log_files.push_back(path);
            result.files.push_back(path);
            agent_logs.push_back(log);
            result.seeds.push_back({agent, log.seed, log.final_mean_return(cfg.final_window), mean_of(log.eval_returns),
                                    log.synthetic_insert_count, log.clamp_count, log.trajectory_hash});
        }

        // Aggregate strictly from what was written.
        std::vector<std::vector<LogRecord>> per_seed;
        for (const auto& path : log_files) {
            std::ifstream in(path);
            per_seed.push_back(read_log(in, format));
        }
        {
            const auto path = out_dir / (agent + "_aggregate.csv");
            auto os = detail::open_out(path);
            write_aggregate_csv(os, aggregate(per_seed, acfg.total_steps, cfg.eval_period, cfg.final_window), meta);
            result.files.push_back(path);
        }
        {
            const auto path = out_dir / (agent + "_visitation.csv");
            auto os = detail::open_out(path);
            const auto visits = detail::sum_counts(agent_logs, &TrainingLog::visitation);
            if (room) {
                room->write_visitation_csv(os, visits, meta);
            } else {
                write_metadata(os, meta);
                os << "state,count\n";
                for (StateId s = 0; s < visits.size(); ++s) write_row(os, {std::to_string(s), std::to_string(visits[s])});
            }
            result.files.push_back(path);
        }
        {
            const auto path = out_dir / (agent + "_histogram.csv");
            auto os = detail::open_out(path);
            const auto counts = detail::sum_counts(agent_logs, &TrainingLog::eval_action_counts);
            write_metadata(os, meta);
            os << "action,label,count\n";
            for (ActionId a = 0; a < counts.size(); ++a) {
                const auto label = a < env.mdp.action_labels.size() ? env.mdp.action_labels[a] : std::to_string(a);
                write_row(os, {std::to_string(a), label, std::to_string(counts[a])});
            }
            result.files.push_back(path);
        }
    }

    const auto path = out_dir / "summary.csv";
    auto os = detail::open_out(path);
    write_metadata(os, run_metadata(cfg, detail::join(cfg.agents, " ")));
    os << "agent,seed,final_return,eval_return,synthetic_inserts,clamp_count,trajectory_hash\n";
    for (const auto& s : result.seeds) {
        char hash[24];
        std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(s.trajectory_hash));
        write_row(os, {s.agent, std::to_string(s.seed), format_number(s.final_return), format_number(s.eval_return),
                       std::to_string(s.synthetic_inserts), std::to_string(s.clamp_count), hash});
    }
    result.files.push_back(path);
    return result;
}

// ---------------------------------------------------------------------------
// Sweeps

/// Parses `key=v1,v2;key2=w1,w2` into a sweep grid.
inline std::map<std::string, std::vector<std::string>> parse_grid(const std::string& text) {
    std::map<std::string, std::vector<std::string>> grid;
    std::istringstream in(text);
    std::string part;
    while (std::getline(in, part, ';')) {
        part = detail::trim(part);
        if (part.empty()) continue;
        const auto eq = part.find('=');
        if (eq == std::string::npos) throw ConfigError(0, "grid entry `" + part + "` must be key=v1,v2,...");
        auto values = detail::split_list(part.substr(eq + 1));
        if (values.empty()) throw ConfigError(0, "grid entry `" + part + "` has no values");
        grid[detail::trim(part.substr(0, eq))] = std::move(values);
    }
    return grid;
}

struct SweepRow {
    std::vector<std::string> values;  ///< one per grid key, in key order
    std::string agent;
    double mean_final_return = 0.0;
    double std_final_return = 0.0;
    double mean_synthetic_inserts = 0.0;
};

struct SweepResult {
    std::vector<std::string> keys;
    std::vector<SweepRow> rows;
};

/// Runs the Cartesian product of `grid` (or the config's sweep.* keys when
/// grid is empty). Each point is written under out_dir/<key>=<value>_... and
/// summarized in out_dir/sweep_summary.csv.
inline SweepResult cmd_sweep(const ExperimentConfig& base, std::map<std::string, std::vector<std::string>> grid,
                             const std::filesystem::path& out_dir, std::size_t workers, LogFormat format = LogFormat::csv) {
    if (grid.empty()) grid = base.sweep;
    if (grid.empty()) throw ConfigError(0, "sweep grid is empty; add sweep.<key> = v1, v2 entries or pass --grid");
    SweepResult result;
    for (const auto& [k, _] : grid) result.keys.push_back(k);

    std::vector<std::size_t> index(result.keys.size(), 0);
    while (true) {
        RawConfig raw = base.raw;
        std::erase_if(raw.entries, [](const auto& kv) { return kv.first.starts_with("sweep."); });
        std::vector<std::string> values;
        std::string label;
        for (std::size_t k = 0; k < result.keys.size(); ++k) {
            const auto& key = result.keys[k];
            const auto& value = grid.at(key)[index[k]];
            raw.entries[key] = {value, 0};
            values.push_back(value);
            label += (label.empty() ? "" : "_") + key + "=" + value;
        }
        const auto cfg = build_config(raw);
        const auto run = cmd_run(cfg, out_dir / label, workers, format);
        for (const auto& agent : cfg.agents) {
            SweepRow row{values, agent};
            const auto finals = run.final_returns(agent);
            row.mean_final_return = mean_of(finals);
            row.std_final_return = std_of(finals);
            std::vector<double> inserts;
            for (const auto& s : run.seeds)
                if (s.agent == agent) inserts.push_back(static_cast<double>(s.synthetic_inserts));
            row.mean_synthetic_inserts = mean_of(inserts);
            result.rows.push_back(std::move(row));
        }

        std::size_t k = 0;
        for (; k < index.size(); ++k) {
            if (++index[k] < grid.at(result.keys[k]).size()) break;
            index[k] = 0;
        }
        if (k == index.size()) break;
    }

    auto os = detail::open_out(out_dir / "sweep_summary.csv");
    write_metadata(os, run_metadata(base, detail::join(base.agents, " ")));
    os << detail::join(result.keys, ",") << ",agent,mean_final_return,std_final_return,mean_synthetic_inserts\n";
    for (const auto& row : result.rows) {
        auto cells = row.values;
        cells.push_back(row.agent);
        cells.push_back(format_number(row.mean_final_return));
        cells.push_back(format_number(row.std_final_return));
        cells.push_back(format_number(row.mean_synthetic_inserts));
        write_row(os, cells);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Report

inline void cmd_report(const TabularMDP& mdp, const Policy& policy, double alpha, std::ostream& os, const Metadata& meta = {}) {
    write_report_csv(os, entropy_report(mdp, policy, alpha), meta);
}

}  // namespace minred
