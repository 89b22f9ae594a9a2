#pragma once

#include "minred/mdp.hpp"

#include <cstdint>
#include <istream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <vector>

namespace minred {

/// Raised when a posterior row for an unobserved (s, s') pair is required.
class InsufficientDataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class PosteriorMode { exact, estimated };

inline const char* to_string(PosteriorMode mode) noexcept {
    return mode == PosteriorMode::exact ? "exact" : "estimated";
}

/// One (s, s', a) transition sample.
struct Transition {
    StateId state = 0;
    ActionId action = 0;
    StateId next_state = 0;
};

/// Action posterior q(a | s, s'), stored sparsely by observed (s, s') rows.
///
/// Exact rows hold probabilities directly. Estimated rows hold counts
/// N(s, a, s') and report the maximum-likelihood q = N / sum_a N.
class ActionPosterior {
public:
    ActionPosterior() = default;
    ActionPosterior(std::size_t num_states, std::size_t num_actions, PosteriorMode mode,
                    double support_threshold = 0.0)
        : num_states_(num_states), num_actions_(num_actions), mode_(mode), support_threshold_(support_threshold) {}

    std::size_t num_states() const noexcept { return num_states_; }
    std::size_t num_actions() const noexcept { return num_actions_; }
    PosteriorMode mode() const noexcept { return mode_; }
    double support_threshold() const noexcept { return support_threshold_; }
    void set_support_threshold(double t) noexcept { support_threshold_ = t; }

    /// Adds `delta` to N(s, a, s'). Negative deltas retire samples; rows that
    /// drop to zero total become undefined again.
    void observe(StateId s, ActionId a, StateId next, std::int64_t delta = 1) {
        require_mode(PosteriorMode::estimated);
        check(s, a, next);
        auto it = rows_.find(key(s, next));
        if (it == rows_.end()) {
            if (delta < 0) throw std::logic_error("cannot retire a sample from an empty posterior row");
            it = rows_.emplace(key(s, next), Row{std::vector<double>(num_actions_, 0.0), 0.0}).first;
        }
        Row& row = it->second;
        const double d = static_cast<double>(delta);
        if (row.weights[a] + d < 0.0) throw std::logic_error("posterior count would become negative");
        row.weights[a] += d;
        row.total += d;
        if (row.total <= 0.0) rows_.erase(it);
    }

    /// Installs an exact row q(. | s, s').
    void set_row(StateId s, StateId next, std::span<const double> q) {
        require_mode(PosteriorMode::exact);
        check(s, 0, next);
        if (q.size() != num_actions_) throw ModelError("posterior row has wrong length");
        double total = 0.0;
        for (double v : q) total += v;
        rows_[key(s, next)] = Row{std::vector<double>(q.begin(), q.end()), total};
    }

    bool defined(StateId s, StateId next) const { return rows_.contains(key(s, next)); }

    /// q(a | s, s'); nullopt when the row is undefined.
    std::optional<double> q(StateId s, ActionId a, StateId next) const {
        const auto it = rows_.find(key(s, next));
        if (it == rows_.end()) return std::nullopt;
        return it->second.weights[a] / it->second.total;
    }

    /// Whole row q(. | s, s'); empty when undefined.
    std::vector<double> row(StateId s, StateId next) const {
        const auto it = rows_.find(key(s, next));
        if (it == rows_.end()) return {};
        std::vector<double> out(it->second.weights);
        for (double& v : out) v /= it->second.total;
        return out;
    }

    /// Raw N(s, a, s'); zero for exact posteriors.
    double count(StateId s, ActionId a, StateId next) const {
        if (mode_ == PosteriorMode::exact) return 0.0;
        const auto it = rows_.find(key(s, next));
        return it == rows_.end() ? 0.0 : it->second.weights[a];
    }

    /// q(a|s,s') > support_threshold. Estimated rows use the raw count.
    bool in_support(StateId s, ActionId a, StateId next) const {
        const auto it = rows_.find(key(s, next));
        if (it == rows_.end()) return false;
        return it->second.weights[a] / it->second.total > support_threshold_;
    }

    std::size_t num_rows() const noexcept { return rows_.size(); }

    /// Defined (s, s') pairs in ascending order.
    std::vector<std::pair<StateId, StateId>> keys() const {
        std::vector<std::pair<StateId, StateId>> out;
        out.reserve(rows_.size());
        for (const auto& [k, _] : rows_) out.emplace_back(k / num_states_, k % num_states_);
        return out;
    }

    /// Writes the flat table `s,s_next,a,count,q`, one line per nonzero entry,
    /// preceded by a `#` header recording the mode and threshold.
    void write_snapshot(std::ostream& os) const {
        os << "# action posterior mode=" << to_string(mode_) << " num_states=" << num_states_
           << " num_actions=" << num_actions_ << " support_threshold=" << support_threshold_ << '\n';
        os << "s,s_next,a,count,q\n";
        std::ostringstream line;
        line.precision(17);
        for (const auto& [k, row] : rows_) {
            for (ActionId a = 0; a < num_actions_; ++a) {
                if (row.weights[a] == 0.0) continue;
                line.str("");
                line << k / num_states_ << ',' << k % num_states_ << ',' << a << ','
                     << (mode_ == PosteriorMode::estimated ? row.weights[a] : 0.0) << ','
                     << row.weights[a] / row.total;
                os << line.str() << '\n';
            }
        }
    }

    static ActionPosterior read_snapshot(std::istream& is) {
        std::string line;
        if (!std::getline(is, line) || line.rfind("# action posterior", 0) != 0)
            throw std::runtime_error("posterior snapshot: missing header");
        const auto field = [&](const std::string& name) {
            const auto pos = line.find(name + "=");
            if (pos == std::string::npos) throw std::runtime_error("posterior snapshot: missing " + name);
            std::istringstream in(line.substr(pos + name.size() + 1));
            std::string value;
            in >> value;
            return value;
        };
        const auto mode = field("mode") == "exact" ? PosteriorMode::exact : PosteriorMode::estimated;
        ActionPosterior post(std::stoul(field("num_states")), std::stoul(field("num_actions")), mode,
                             std::stod(field("support_threshold")));
        std::getline(is, line);  // column header
        std::map<std::uint64_t, std::vector<double>> exact_rows;
        while (std::getline(is, line)) {
            if (line.empty() || line[0] == '#') continue;
            std::istringstream in(line);
            std::string cell;
            std::vector<std::string> cells;
            while (std::getline(in, cell, ',')) cells.push_back(cell);
            if (cells.size() != 5) throw std::runtime_error("posterior snapshot: malformed line: " + line);
            const auto s = std::stoul(cells[0]);
            const auto n = std::stoul(cells[1]);
            const auto a = std::stoul(cells[2]);
            if (mode == PosteriorMode::estimated) {
                post.observe(s, a, n, std::llround(std::stod(cells[3])));
            } else {
                auto& row = exact_rows[post.key(s, n)];
                row.resize(post.num_actions_, 0.0);
                row[a] = std::stod(cells[4]);
            }
        }
        for (const auto& [k, row] : exact_rows) post.set_row(k / post.num_states_, k % post.num_states_, row);
        return post;
    }

private:
    struct Row {
        std::vector<double> weights;
        double total = 0.0;
    };

    std::uint64_t key(StateId s, StateId next) const { return static_cast<std::uint64_t>(s) * num_states_ + next; }

    void require_mode(PosteriorMode mode) const {
        if (mode_ != mode) throw std::logic_error(std::string("operation requires a ") + to_string(mode) + " posterior");
    }

    void check(StateId s, ActionId a, StateId next) const {
        if (s >= num_states_ || next >= num_states_ || a >= num_actions_)
            throw std::out_of_range("posterior index out of range");
    }

    std::size_t num_states_ = 0;
    std::size_t num_actions_ = 0;
    PosteriorMode mode_ = PosteriorMode::estimated;
    double support_threshold_ = 0.0;
    std::map<std::uint64_t, Row> rows_;
};

/// Count-based maximum-likelihood posterior over a dataset of transitions.
inline ActionPosterior fit_posterior(std::span<const Transition> data, std::size_t num_states, std::size_t num_actions) {
    if (data.empty()) throw std::invalid_argument("fit_posterior: empty dataset");
    ActionPosterior post(num_states, num_actions, PosteriorMode::estimated);
    for (const auto& t : data) post.observe(t.state, t.action, t.next_state);
    return post;
}

/// Estimated posterior guarded for one writer (the learning loop) and many
/// concurrent readers. Each count update is applied under an exclusive lock.
class SharedPosterior {
public:
    explicit SharedPosterior(ActionPosterior posterior) : posterior_(std::move(posterior)) {}

    void observe(StateId s, ActionId a, StateId next, std::int64_t delta = 1) {
        std::unique_lock lock(mutex_);
        posterior_.observe(s, a, next, delta);
    }

    template <class Fn>
    auto read(Fn&& fn) const {
        std::shared_lock lock(mutex_);
        return fn(static_cast<const ActionPosterior&>(posterior_));
    }

    ActionPosterior snapshot() const {
        std::shared_lock lock(mutex_);
        return posterior_;
    }

private:
    mutable std::shared_mutex mutex_;
    ActionPosterior posterior_;
};

}  // namespace minred
