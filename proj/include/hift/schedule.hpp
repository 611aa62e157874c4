#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hift/model.hpp"

namespace hift {

enum class Strategy : std::uint8_t { bottom2up, top2down, random_once };

const char* strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

// Rotation queue over layer units. Each call to next_group removes the head
// group and re-appends it at the tail; a sweep covers every unit exactly once
// (ragged tail: the last group of a sweep carries n mod m units when m does
// not divide n).
class GroupSchedule {
  public:
    static GroupSchedule init(const LayeredModel& model, Strategy strategy, std::size_t m,
                              std::uint64_t seed);

    std::vector<LayerId> next_group();
    // True iff the group returned by the most recent next_group completed a sweep.
    bool is_all_layer_update() const { return sweep_completed_; }

    std::size_t unit_count() const { return n_; }
    std::size_t layers_per_group() const { return m_; }
    std::size_t group_count() const { return k_; }
    std::size_t step() const { return step_; }
    Strategy strategy() const { return strategy_; }
    std::uint64_t seed() const { return seed_; }
    const std::vector<LayerId>& queue() const { return queue_; }

  private:
    std::vector<LayerId> queue_;
    Strategy strategy_{Strategy::bottom2up};
    std::size_t m_{1};
    std::size_t n_{0};
    std::size_t k_{0};
    std::uint64_t seed_{0};
    std::size_t taken_in_sweep_{0};
    std::size_t step_{0};
    bool sweep_completed_{false};
};

enum class Decay : std::uint8_t { constant, linear };

const char* decay_name(Decay d);
Decay decay_from_name(const std::string& name);

// Delayed learning-rate schedule: the value is a pure function of the number
// of completed sweeps, never of the raw step counter.
struct LrSchedule {
    double base_lr{1e-3};
    double warmup_fraction{0.0};
    Decay decay{Decay::constant};
    std::size_t total_sweeps{1};
    std::size_t sweep_index{0};

    double value() const { return value_at(sweep_index); }
    double value_at(std::size_t sweep) const;
    void advance_sweep() { ++sweep_index; }
};

}  // namespace hift
