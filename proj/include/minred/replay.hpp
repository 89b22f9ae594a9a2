#pragma once

#include "minred/csv.hpp"
#include "minred/mdp.hpp"
#include "minred/rng.hpp"

#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace minred {

/// One stored transition. Synthetic entries are copies of a real transition
/// with the action replaced by a redundant one.
struct ReplayEntry {
    StateId state = 0;
    ActionId action = 0;
    double reward = 0.0;
    StateId next_state = 0;
    bool terminal = false;
    bool synthetic = false;
    /// pi_i(.|s) at collection time; empty when the agent does not record it.
    std::vector<double> behavior_probs;

    bool operator==(const ReplayEntry&) const = default;
};

/// Fixed-capacity FIFO ring with uniform sampling.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
        entries_.reserve(std::min<std::size_t>(capacity, 1 << 16));
    }

    std::size_t size() const noexcept { return entries_.size(); }
    std::size_t capacity() const noexcept { return capacity_; }
    bool empty() const noexcept { return entries_.empty(); }

    /// Appends an entry and returns the one it overwrote, if any.
    std::optional<ReplayEntry> push(ReplayEntry entry) {
        if (entries_.size() < capacity_) {
            entries_.push_back(std::move(entry));
            return std::nullopt;
        }
        std::optional<ReplayEntry> evicted(std::move(entries_[head_]));
        entries_[head_] = std::move(entry);
        head_ = (head_ + 1) % capacity_;
        return evicted;
    }

    /// i-th entry in insertion order, oldest first.
    const ReplayEntry& operator[](std::size_t i) const { return entries_[(head_ + i) % entries_.size()]; }

    const ReplayEntry& sample(Engine& rng) const { return entries_[uniform_index(rng, entries_.size())]; }

    /// Flat table `s,a,r,s_next,terminal,synthetic,behavior_probs`, with the
    /// behavior distribution written as `;`-separated probabilities.
    void write_snapshot(std::ostream& os, const Metadata& meta = {}) const {
        write_metadata(os, meta);
        os << "s,a,r,s_next,terminal,synthetic,behavior_probs\n";
        for (std::size_t i = 0; i < size(); ++i) {
            const auto& e = (*this)[i];
            std::string probs;
            for (std::size_t k = 0; k < e.behavior_probs.size(); ++k) {
                if (k) probs += ';';
                char buf[32];
                std::snprintf(buf, sizeof buf, "%.17g", e.behavior_probs[k]);
                probs += buf;
            }
            char reward[32];
            std::snprintf(reward, sizeof reward, "%.17g", e.reward);
            write_row(os, {std::to_string(e.state), std::to_string(e.action), reward, std::to_string(e.next_state),
                           e.terminal ? "1" : "0", e.synthetic ? "1" : "0", probs});
        }
    }

    static std::vector<ReplayEntry> read_snapshot(std::istream& is) {
        std::vector<ReplayEntry> out;
        std::string line;
        bool header_seen = false;
        while (std::getline(is, line)) {
            if (line.empty() || line[0] == '#') continue;
            if (!header_seen) {
                header_seen = true;
                continue;
            }
            std::vector<std::string> cells;
            std::string cell;
            std::istringstream in(line);
            while (std::getline(in, cell, ',')) cells.push_back(cell);
            if (cells.size() == 6) cells.emplace_back();
            if (cells.size() != 7) throw std::runtime_error("replay snapshot: malformed line: " + line);
            ReplayEntry e;
            e.state = std::stoul(cells[0]);
            e.action = std::stoul(cells[1]);
            e.reward = std::stod(cells[2]);
            e.next_state = std::stoul(cells[3]);
            e.terminal = cells[4] == "1";
            e.synthetic = cells[5] == "1";
            std::istringstream probs(cells[6]);
            while (std::getline(probs, cell, ';'))
                if (!cell.empty()) e.behavior_probs.push_back(std::stod(cell));
            out.push_back(std::move(e));
        }
        return out;
    }

private:
    std::size_t capacity_;
    std::size_t head_ = 0;
    std::vector<ReplayEntry> entries_;
};

}  // namespace minred
