#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hift/model.hpp"

namespace hift {

enum class TaskKind : std::uint8_t {
    synthetic_regression,
    synthetic_classification,
    csv_classification,
};

const char* task_name(TaskKind t);
TaskKind task_from_name(const std::string& name);

struct DatasetSpec {
    TaskKind task{TaskKind::synthetic_classification};
    std::uint64_t data_seed{0};
    std::size_t num_samples{512};      // synthetic tasks
    std::filesystem::path csv_path;    // csv task
    std::string label_column{"label"}; // csv task
    double holdout_fraction{0.2};
};

// Deterministic dataset with a fixed shuffled order (seeded Fisher-Yates) and
// an 80/20 train/holdout split. Batches cycle through the training split in
// the shuffled order; the final batch of each pass may be short.
class Dataset {
  public:
    static Dataset make(const DatasetSpec& spec, const ModelArch& arch);

    Batch next_batch(std::size_t batch_size);
    void reset() { cursor_ = 0; }

    std::size_t size() const { return order_.size(); }
    std::size_t train_size() const { return train_count_; }
    std::size_t eval_size() const { return order_.size() - train_count_; }
    const std::vector<std::size_t>& order() const { return order_; }

    Batch eval_examples() const;  // the whole holdout split as one batch
    const ModelArch& arch() const { return arch_; }
    TaskKind task() const { return spec_.task; }

  private:
    Batch gather(std::size_t first, std::size_t count) const;

    DatasetSpec spec_;
    ModelArch arch_;
    std::vector<std::size_t> order_;  // shuffled example indices
    std::size_t train_count_{0};
    std::size_t cursor_{0};

    // column-major-free flat storage
    std::vector<std::int64_t> tokens_;   // [n * seq_len]
    std::vector<double> features_;       // [n * in_dim]
    std::vector<std::int64_t> labels_;   // [n]
    std::vector<double> targets_;        // [n * out_dim]
};

// Seeded Fisher-Yates over 0..n-1 with splitmix64 draws; exposed so tests can
// check the shuffle against an independent implementation.
std::vector<std::size_t> fisher_yates_order(std::size_t n, std::uint64_t seed);

}  // namespace hift
