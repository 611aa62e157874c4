#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hift/dataset.hpp"
#include "hift/memory.hpp"
#include "hift/model.hpp"
#include "hift/optim.hpp"
#include "hift/schedule.hpp"

namespace hift {

enum class TrainMode : std::uint8_t { hift, fpft };

const char* train_mode_name(TrainMode m);
TrainMode train_mode_from_name(const std::string& name);

struct TrainConfig {
    ModelArch arch;
    TaskKind task{TaskKind::synthetic_classification};
    TrainMode mode{TrainMode::hift};
    Strategy strategy{Strategy::bottom2up};
    std::size_t m{1};
    OptimKind optimizer{OptimKind::adamw};
    Hyperparams hyper;
    bool mixed_precision{false};
    std::size_t batch_size{8};
    std::size_t steps{64};
    double base_lr{1e-2};
    double warmup_fraction{0.0};
    Decay decay{Decay::constant};
    double grad_clip{0.0};  // 0 disables clipping
    std::uint64_t init_seed{1};
    std::uint64_t data_seed{2};
    std::uint64_t strategy_seed{3};
    std::size_t num_samples{512};
    std::filesystem::path csv_path;
    std::string label_column{"label"};

    void validate() const;  // throws ConfigError
    std::string to_json() const;
    static TrainConfig from_json(const std::string& text);       // throws ParseError/ConfigError
    static TrainConfig from_json_file(const std::filesystem::path& path);
};

struct StepRecord {
    std::size_t step{0};
    double loss{0.0};
    double lr{0.0};
    std::size_t trainable_params{0};
    std::size_t device_pgs_peak_bytes{0};
    std::size_t device_total_peak_bytes{0};
    std::size_t transfer_bytes{0};
};

struct RunReport {
    TrainConfig config;
    std::vector<StepRecord> steps;
    double final_loss{0.0};
    double eval_metric{0.0};    // accuracy for classification, mse for regression
    bool eval_is_accuracy{true};
    std::size_t group_count{1};       // k
    std::size_t total_param_elements{0};
    std::size_t total_param_bytes{0};
    MemoryReport memory;

    std::string to_json() const;
    static RunReport from_json(const std::string& text);
    static RunReport from_json_file(const std::filesystem::path& path);
};

// Runs Algorithm-1 style hierarchical training (one group per step, delayed
// learning-rate updates, simulated host/device state movement).
RunReport train_hift(const TrainConfig& config);

// Full-parameter baseline: every parameter trainable every step, learning
// rate advances every step, no state movement.
RunReport train_fpft(const TrainConfig& config);

// Instrumented variant: `observer`, when set, is called after every completed
// step with the live model (used by trajectory-equivalence checks).
using StepObserver = std::function<void(std::size_t step, const LayeredModel& model)>;
RunReport train_with_observer(const TrainConfig& config, const StepObserver& observer);

struct ComparisonReport {
    std::string task;
    double final_loss_a{0.0}, final_loss_b{0.0};
    double eval_a{0.0}, eval_b{0.0};
    bool eval_is_accuracy{true};
    std::size_t pgs_peak_a{0}, pgs_peak_b{0};
    std::size_t total_peak_a{0}, total_peak_b{0};
    std::size_t transfer_peak_a{0}, transfer_peak_b{0};
    std::array<std::size_t, kCategoryCount> device_peak_a{}, device_peak_b{};
    std::vector<double> loss_curve_a, loss_curve_b;

    std::string to_text() const;
};

// Requires matching task and architecture; throws ComparisonError otherwise.
ComparisonReport compare_runs(const RunReport& a, const RunReport& b);

// Writes steps.csv and memory.csv (and report.json) under `dir`.
void emit_metrics(const RunReport& report, const std::filesystem::path& dir);

// Writes the comparison's loss-curve CSV pair under `dir`.
void emit_comparison(const ComparisonReport& cmp, const std::filesystem::path& dir);

inline constexpr const char* kStepsCsvHeader =
    "step,loss,lr,trainable_params,device_pgs_peak_bytes,device_total_peak_bytes,transfer_bytes";

}  // namespace hift
