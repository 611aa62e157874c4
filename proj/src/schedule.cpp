#include "hift/schedule.hpp"

#include <algorithm>

#include "hift/rng.hpp"

namespace hift {

const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::bottom2up: return "bottom2up";
        case Strategy::top2down: return "top2down";
        case Strategy::random_once: return "random";
    }
    return "bottom2up";
}

Strategy strategy_from_name(const std::string& name) {
    if (name == "bottom2up" || name == "b2u") return Strategy::bottom2up;
    if (name == "top2down" || name == "t2d") return Strategy::top2down;
    if (name == "random" || name == "ran") return Strategy::random_once;
    throw ConfigError("unknown update strategy: " + name);
}

GroupSchedule GroupSchedule::init(const LayeredModel& model, Strategy strategy, std::size_t m,
                                  std::uint64_t seed) {
    const std::size_t n = model.unit_count();
    if (m < 1 || m > n) {
        throw ConfigError("group size m=" + std::to_string(m) + " outside [1, " +
                          std::to_string(n) + "]");
    }
    GroupSchedule sched;
    sched.queue_ = model.units();
    sched.strategy_ = strategy;
    sched.m_ = m;
    sched.n_ = n;
    sched.k_ = (n % m == 0) ? n / m : n / m + 1;
    sched.seed_ = seed;
    switch (strategy) {
        case Strategy::bottom2up:
            break;  // units are already in bottom-to-top index order
        case Strategy::top2down:
            std::reverse(sched.queue_.begin(), sched.queue_.end());
            break;
        case Strategy::random_once: {
            // Shuffled exactly once, before training; order is fixed afterwards.
            Rng rng(seed);
            for (std::size_t i = sched.queue_.size() - 1; i > 0; --i) {
                const std::size_t j = static_cast<std::size_t>(rng.next_below(i + 1));
                std::swap(sched.queue_[i], sched.queue_[j]);
            }
            break;
        }
    }
    return sched;
}

std::vector<LayerId> GroupSchedule::next_group() {
    // A sweep tail never wraps: take fewer than m at the boundary so every
    // sweep partitions the layer set exactly.
    const std::size_t take = std::min(m_, n_ - taken_in_sweep_);
    std::vector<LayerId> group(queue_.begin(), queue_.begin() + static_cast<std::ptrdiff_t>(take));
    queue_.erase(queue_.begin(), queue_.begin() + static_cast<std::ptrdiff_t>(take));
    queue_.insert(queue_.end(), group.begin(), group.end());
    taken_in_sweep_ += take;
    sweep_completed_ = taken_in_sweep_ == n_;
    if (sweep_completed_) taken_in_sweep_ = 0;
    ++step_;
    return group;
}

const char* decay_name(Decay d) {
    return d == Decay::constant ? "constant" : "linear";
}

Decay decay_from_name(const std::string& name) {
    if (name == "constant") return Decay::constant;
    if (name == "linear") return Decay::linear;
    throw ConfigError("unknown decay: " + name);
}

double LrSchedule::value_at(std::size_t sweep) const {
    const auto warmup_sweeps =
        static_cast<std::size_t>(warmup_fraction * static_cast<double>(total_sweeps) + 0.5);
    if (warmup_sweeps > 0 && sweep < warmup_sweeps) {
        return base_lr * static_cast<double>(sweep + 1) / static_cast<double>(warmup_sweeps);
    }
    if (decay == Decay::constant) return base_lr;
    if (sweep >= total_sweeps) return 0.0;
    const double remaining = static_cast<double>(total_sweeps - sweep);
    const double span = static_cast<double>(total_sweeps - warmup_sweeps);
    return base_lr * remaining / span;
}

}  // namespace hift
