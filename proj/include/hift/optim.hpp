#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hift/model.hpp"
#include "hift/tensor.hpp"

namespace hift {

class MemoryLedger;

enum class OptimKind : std::uint8_t { sgd, sgdm, adagrad, adafactor, adamw };

const char* optim_kind_name(OptimKind k);
OptimKind optim_kind_from_name(const std::string& name);

// Whole-parameter state multiplier for the non-factored kinds; adafactor has
// shape-dependent state and is handled by state_footprint directly.
int state_slot_multiplier(OptimKind k);

struct Hyperparams {
    double beta1{0.9};
    double beta2{0.999};
    double eps{1e-8};
    double weight_decay{0.0};  // decoupled, applied by adamw only
    double momentum{0.9};
    double adafactor_eps1{1e-30};
    double adafactor_clip{1.0};       // update-RMS clipping threshold d
    double adafactor_decay_exp{0.8};  // beta2_hat(t) = 1 - t^(-exp)

    void validate(OptimKind kind) const;  // throws ConfigError
};

enum class Residency : std::uint8_t { host, device };

struct StateSlot {
    std::string suffix;  // ".m", ".v", ".row", ".col", ".acc", ".buf"
    Tensor buffer;
};

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

struct ParamUpdate {
    std::string name;   // qualified parameter name
    Tensor weights;     // tensor updated in place (master copy under mixed precision)
    std::span<const double> grad;
};

// Per-parameter optimizer state with explicit, relocatable buffers. Slots are
// allocated lazily the first time a parameter enters the active set, and keep
// a host/device residency tag that the memory module flips on moves.
class OptimizerState {
  public:
    OptimizerState(OptimKind kind, Hyperparams hyper, DType state_dtype);

    OptimKind kind() const { return kind_; }
    const Hyperparams& hyper() const { return hyper_; }
    DType state_dtype() const { return state_dtype_; }

    // Sets the update target to exactly `active`; allocates missing slots at
    // `placement` (booked against the ledger when given).
    void update_optimizer_parameter(const LayeredModel& model, const ParamSet& active,
                                    Residency placement, MemoryLedger* ledger);
    void update_optimizer_parameter(std::span<const NamedTensor> params, Residency placement,
                                    MemoryLedger* ledger);

    // In-place update of every entry; each must carry a gradient and have its
    // slots device-resident.
    void step(std::span<ParamUpdate> updates, double lr);

    const ParamSet& active() const { return active_; }

    bool has_slots(const std::string& name) const;
    std::size_t slot_count(const std::string& name) const;
    std::size_t slot_bytes(const std::string& name) const;
    std::size_t total_slot_bytes() const;
    Residency residency(const std::string& name) const;  // throws LookupError
    void set_residency(const std::string& name, Residency r);
    std::uint64_t step_count(const std::string& name) const;
    void set_step_count(const std::string& name, std::uint64_t t) { step_counts_[name] = t; }

    template <typename Fn>
    void for_each_slot(Fn&& fn) const {  // fn(param_name, StateSlot)
        for (const auto& [name, slots] : slots_) {
            for (const auto& slot : slots) fn(name, slot);
        }
    }

    // Bytes of all state slots for one parameter of this shape.
    static std::size_t state_footprint(OptimKind kind, std::span<const std::size_t> shape,
                                       DType dtype);

  private:
    std::vector<StateSlot> make_slots(const Tensor& param) const;
    void apply_one(const ParamUpdate& u, double lr);

    OptimKind kind_;
    Hyperparams hyper_;
    DType state_dtype_;
    ParamSet active_;
    std::map<std::string, std::vector<StateSlot>> slots_;
    std::map<std::string, Residency> residency_;
    std::map<std::string, std::uint64_t> step_counts_;
};

}  // namespace hift
