#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "hift/model.hpp"
#include "hift/optim.hpp"
#include "hift/ratio.hpp"

namespace hift {

enum class Category : std::uint8_t { param, grad, state, master_copy, residual };
inline constexpr std::size_t kCategoryCount = 5;
inline constexpr std::array<Category, kCategoryCount> kAllCategories = {
    Category::param, Category::grad, Category::state, Category::master_copy, Category::residual};

const char* category_name(Category c);

enum class Placement : std::uint8_t { host, device };
enum class Direction : std::uint8_t { host_to_device, device_to_host };

struct TransferRecord {
    std::size_t step;
    Direction direction;
    Category category;
    std::size_t bytes;
};

struct LedgerEvent {
    enum class Kind : std::uint8_t { alloc, release, move_h2d, move_d2h };
    std::size_t step;
    Kind kind;
    Category category;
    Placement placement;  // side affected by alloc/release; source side for moves
    std::size_t bytes;
};

struct MemoryReport {
    std::array<std::size_t, kCategoryCount> host_peak{};
    std::array<std::size_t, kCategoryCount> device_peak{};
    std::size_t device_total_peak{0};
    std::size_t device_pgs_peak{0};  // param + grad + state high-water
    std::size_t peak_step_transfer_bytes{0};
    std::size_t total_transfer_bytes{0};

    std::string to_csv() const;
    static MemoryReport from_csv(const std::string& text);  // throws ParseError
};

// Byte ledger for the simulated host/device split. Balances change only
// through alloc/release/move events; every event is logged so a replay can
// reproduce the final state (conservation check).
class MemoryLedger {
  public:
    void begin_step(std::size_t step);
    std::size_t current_step() const { return step_; }

    void on_alloc(Category c, Placement p, std::size_t bytes);
    void on_release(Category c, Placement p, std::size_t bytes);
    void on_move(Category c, Direction d, std::size_t bytes);

    std::size_t current(Category c, Placement p) const;
    std::size_t device_total() const;
    std::size_t host_total() const;

    std::size_t peak(Category c, Placement p) const;
    std::size_t device_total_peak() const { return device_total_peak_; }
    std::size_t device_pgs_peak() const { return device_pgs_peak_; }
    std::size_t step_pgs_peak() const { return step_pgs_peak_; }
    std::size_t step_device_total_peak() const { return step_device_total_peak_; }
    std::size_t step_transfer_bytes() const { return step_transfer_bytes_; }

    const std::vector<TransferRecord>& transfer_log() const { return transfers_; }
    const std::vector<LedgerEvent>& event_log() const { return events_; }
    std::size_t peak_step_transfer_bytes() const { return peak_step_transfer_bytes_; }
    std::size_t total_transfer_bytes() const { return total_transfer_bytes_; }

    MemoryReport report() const;

    // Applies an event log to a fresh ledger; used to verify conservation.
    static MemoryLedger replay(std::span<const LedgerEvent> events);

  private:
    void after_change();

    std::array<std::size_t, kCategoryCount> host_{};
    std::array<std::size_t, kCategoryCount> device_{};
    std::array<std::size_t, kCategoryCount> host_peak_{};
    std::array<std::size_t, kCategoryCount> device_peak_{};
    std::size_t device_total_peak_{0};
    std::size_t device_pgs_peak_{0};
    std::size_t step_{0};
    std::size_t step_pgs_peak_{0};
    std::size_t step_device_total_peak_{0};
    std::size_t step_transfer_bytes_{0};
    std::size_t peak_step_transfer_bytes_{0};
    std::size_t total_transfer_bytes_{0};
    std::vector<TransferRecord> transfers_;
    std::vector<LedgerEvent> events_;
};

// Moves the active group's optimizer state across the simulated interconnect.
// Returns bytes moved (zero for stateless kinds like sgd).
std::size_t move_state_to_device(MemoryLedger& ledger, OptimizerState& state, const ParamSet& group);
std::size_t move_state_to_host(MemoryLedger& ledger, OptimizerState& state, const ParamSet& group);

// --- analytic estimators ----------------------------------------------------

enum class PrecisionMode : std::uint8_t { fp32, mixed };

const char* precision_name(PrecisionMode m);
PrecisionMode precision_from_name(const std::string& name);

struct EstimateReport {
    Ratio param_bytes;        // working weights, always resident
    Ratio master_bytes;       // mixed precision master copies (average resident)
    Ratio grad_bytes;         // average resident gradient bytes
    Ratio state_bytes;        // average resident optimizer-state bytes
    Ratio total;              // average bytes per step
    Ratio peak;               // high-water estimate across a sweep
    Ratio savings_vs_fpft;    // zero for the fpft estimate itself
    std::size_t groups{1};
    std::string note;         // filled when the inputs match a known worked example
};

// Full-parameter baseline: everything resident every step.
EstimateReport estimate_fpft(Ratio param_bytes, Ratio state_bytes, PrecisionMode mode);
EstimateReport estimate_fpft(Ratio param_bytes, OptimKind kind, PrecisionMode mode);

// Hierarchical schedule: only one group's grads/state (and master copy under
// mixed precision) resident at a time. group_state_bytes, when provided, give
// exact per-group (grad, state) byte pairs for the peak estimate.
struct GroupBytes {
    Ratio grad;
    Ratio state;
};
EstimateReport estimate_hift(Ratio param_bytes, Ratio state_bytes, std::size_t k,
                             PrecisionMode mode, std::span<const GroupBytes> groups = {});
EstimateReport estimate_hift(Ratio param_bytes, std::size_t k, OptimKind kind, PrecisionMode mode,
                             std::span<const GroupBytes> groups = {});

// Exact per-model variants: state bytes computed from the registry shapes
// (required for adafactor, whose state is shape-dependent).
EstimateReport estimate_fpft_for_model(const LayeredModel& model, OptimKind kind,
                                       PrecisionMode mode);
EstimateReport estimate_hift_for_model(const LayeredModel& model, OptimKind kind,
                                       PrecisionMode mode, std::size_t m);

// Largest group's parameter share under the ragged-tail grouping; 1.0 at m=n.
double trainable_peak_fraction(const LayeredModel& model, std::size_t m);

}  // namespace hift
