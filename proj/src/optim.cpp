#include "hift/optim.hpp"

#include <cmath>

#include "hift/memory.hpp"

namespace hift {

const char* optim_kind_name(OptimKind k) {
    switch (k) {
        case OptimKind::sgd: return "sgd";
        case OptimKind::sgdm: return "sgdm";
        case OptimKind::adagrad: return "adagrad";
        case OptimKind::adafactor: return "adafactor";
        case OptimKind::adamw: return "adamw";
    }
    return "sgd";
}

OptimKind optim_kind_from_name(const std::string& name) {
    if (name == "sgd") return OptimKind::sgd;
    if (name == "sgdm") return OptimKind::sgdm;
    if (name == "adagrad") return OptimKind::adagrad;
    if (name == "adafactor") return OptimKind::adafactor;
    if (name == "adamw") return OptimKind::adamw;
    throw ConfigError("unknown optimizer: " + name);
}

int state_slot_multiplier(OptimKind k) {
    switch (k) {
        case OptimKind::sgd: return 0;
        case OptimKind::sgdm: return 1;
        case OptimKind::adagrad: return 1;
        case OptimKind::adamw: return 2;
        case OptimKind::adafactor: return -1;  // factored, shape-dependent
    }
    return 0;
}

void Hyperparams::validate(OptimKind kind) const {
    if (kind == OptimKind::adamw) {
        if (beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 || beta2 >= 1.0) {
            throw ConfigError("adamw: betas must lie in (0,1)");
        }
        if (eps <= 0.0) throw ConfigError("adamw: eps must be positive");
    }
    if (kind == OptimKind::sgdm && (momentum <= 0.0 || momentum >= 1.0)) {
        throw ConfigError("sgdm: momentum must lie in (0,1)");
    }
    if (kind == OptimKind::adagrad && eps < 0.0) {
        throw ConfigError("adagrad: eps must be non-negative");
    }
    if (kind == OptimKind::adafactor) {
        if (adafactor_clip <= 0.0) throw ConfigError("adafactor: clip threshold must be positive");
        if (adafactor_decay_exp <= 0.0) throw ConfigError("adafactor: decay exponent must be positive");
    }
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
}

OptimizerState::OptimizerState(OptimKind kind, Hyperparams hyper, DType state_dtype)
    : kind_(kind), hyper_(hyper), state_dtype_(state_dtype) {
    hyper_.validate(kind_);
}

std::size_t OptimizerState::state_footprint(OptimKind kind, std::span<const std::size_t> shape,
                                            DType dtype) {
    if (shape.empty()) throw ContractError("state_footprint: empty shape");
    std::size_t numel = 1;
    for (std::size_t e : shape) numel *= e;
    const std::size_t esize = dtype_size(dtype);
    switch (kind) {
        case OptimKind::sgd: return 0;
        case OptimKind::sgdm:
        case OptimKind::adagrad: return numel * esize;
        case OptimKind::adamw: return 2 * numel * esize;
        case OptimKind::adafactor:
            if (shape.size() == 2) return (shape[0] + shape[1]) * esize;
            return numel * esize;  // vectors keep a full-size accumulator
    }
    return 0;
}

std::vector<StateSlot> OptimizerState::make_slots(const Tensor& param) const {
    std::vector<StateSlot> slots;
    auto zeros_like = [&](std::vector<std::size_t> shape) {
        return Tensor::zeros(std::move(shape), state_dtype_);
    };
    switch (kind_) {
        case OptimKind::sgd:
            break;
        case OptimKind::sgdm:
            slots.push_back({".buf", zeros_like(param.shape())});
            break;
        case OptimKind::adagrad:
            slots.push_back({".acc", zeros_like(param.shape())});
            break;
        case OptimKind::adamw:
            slots.push_back({".m", zeros_like(param.shape())});
            slots.push_back({".v", zeros_like(param.shape())});
            break;
        case OptimKind::adafactor:
            if (param.rank() == 2) {
                slots.push_back({".row", zeros_like({param.shape()[0]})});
                slots.push_back({".col", zeros_like({param.shape()[1]})});
            } else {
                slots.push_back({".acc", zeros_like(param.shape())});
            }
            break;
    }
    return slots;
}

void OptimizerState::update_optimizer_parameter(const LayeredModel& model, const ParamSet& active,
                                                Residency placement, MemoryLedger* ledger) {
    std::vector<NamedTensor> named;
    named.reserve(active.size());
    for (const std::string& name : active.names()) {
        named.push_back(NamedTensor{name, model.param(name)});
    }
    update_optimizer_parameter(named, placement, ledger);
}

void OptimizerState::update_optimizer_parameter(std::span<const NamedTensor> params,
                                                Residency placement, MemoryLedger* ledger) {
    std::vector<std::string> names;
    names.reserve(params.size());
    for (const NamedTensor& p : params) names.push_back(p.name);
    active_ = ParamSet(std::move(names));
    for (const NamedTensor& p : params) {
        if (slots_.count(p.name)) continue;  // lazy-once
        std::vector<StateSlot> slots = make_slots(p.tensor);
        std::size_t bytes = 0;
        for (const auto& s : slots) bytes += s.buffer.data_bytes();
        if (ledger && bytes > 0) {
            ledger->on_alloc(Category::state,
                             placement == Residency::device ? Placement::device : Placement::host,
                             bytes);
        }
        slots_.emplace(p.name, std::move(slots));
        residency_.emplace(p.name, placement);
        step_counts_.emplace(p.name, 0);
    }
}

bool OptimizerState::has_slots(const std::string& name) const { return slots_.count(name) > 0; }

std::size_t OptimizerState::slot_count(const std::string& name) const {
    auto it = slots_.find(name);
    return it == slots_.end() ? 0 : it->second.size();
}

std::size_t OptimizerState::slot_bytes(const std::string& name) const {
    auto it = slots_.find(name);
    if (it == slots_.end()) return 0;
    std::size_t bytes = 0;
    for (const auto& s : it->second) bytes += s.buffer.data_bytes();
    return bytes;
}

std::size_t OptimizerState::total_slot_bytes() const {
    std::size_t bytes = 0;
    for (const auto& [name, slots] : slots_) {
        for (const auto& s : slots) bytes += s.buffer.data_bytes();
    }
    return bytes;
}

Residency OptimizerState::residency(const std::string& name) const {
    auto it = residency_.find(name);
    if (it == residency_.end()) throw LookupError("no optimizer state for: " + name);
    return it->second;
}

void OptimizerState::set_residency(const std::string& name, Residency r) {
    auto it = residency_.find(name);
    if (it == residency_.end()) throw LookupError("no optimizer state for: " + name);
    it->second = r;
}

std::uint64_t OptimizerState::step_count(const std::string& name) const {
    auto it = step_counts_.find(name);
    return it == step_counts_.end() ? 0 : it->second;
}

void OptimizerState::step(std::span<ParamUpdate> updates, double lr) {
    for (const ParamUpdate& u : updates) {
        if (!active_.contains(u.name)) {
            throw ContractError("optimizer_step: " + u.name + " is not in the active set");
        }
        if (u.grad.size() != u.weights.numel()) {
            throw ContractError("optimizer_step: missing or mismatched gradient for " + u.name);
        }
        auto slot_it = slots_.find(u.name);
        if (slot_it != slots_.end() && !slot_it->second.empty() &&
            residency_.at(u.name) != Residency::device) {
            throw ResidencyError("optimizer_step: state of " + u.name +
                                 " is host-resident; scheduler must move it first");
        }
    }
    for (const ParamUpdate& u : updates) apply_one(u, lr);
}

void OptimizerState::apply_one(const ParamUpdate& u, double lr) {
    Tensor w = u.weights;
    const std::span<const double> g = u.grad;
    const std::size_t n = w.numel();
    std::uint64_t& t = step_counts_[u.name];
    ++t;

    switch (kind_) {
        case OptimKind::sgd: {
            for (std::size_t i = 0; i < n; ++i) w.set_value(i, w.value_at(i) - lr * g[i]);
            break;
        }
        case OptimKind::sgdm: {
            Tensor buf = slots_.at(u.name)[0].buffer;
            for (std::size_t i = 0; i < n; ++i) {
                buf.set_value(i, hyper_.momentum * buf.value_at(i) + g[i]);
                w.set_value(i, w.value_at(i) - lr * buf.value_at(i));
            }
            break;
        }
        case OptimKind::adagrad: {
            Tensor acc = slots_.at(u.name)[0].buffer;
            for (std::size_t i = 0; i < n; ++i) {
                acc.set_value(i, acc.value_at(i) + g[i] * g[i]);
                w.set_value(i, w.value_at(i) - lr * g[i] / (std::sqrt(acc.value_at(i)) + hyper_.eps));
            }
            break;
        }
        case OptimKind::adamw: {
            // Decoupled weight decay, then bias-corrected moment update.
            // Per-parameter step counts keep the correction exact when a
            // parameter is only updated every k-th global step.
            Tensor m = slots_.at(u.name)[0].buffer;
            Tensor v = slots_.at(u.name)[1].buffer;
            const double bc1 = 1.0 - std::pow(hyper_.beta1, static_cast<double>(t));
            const double bc2 = 1.0 - std::pow(hyper_.beta2, static_cast<double>(t));
            for (std::size_t i = 0; i < n; ++i) {
                double wi = w.value_at(i) * (1.0 - lr * hyper_.weight_decay);
                m.set_value(i, hyper_.beta1 * m.value_at(i) + (1.0 - hyper_.beta1) * g[i]);
                v.set_value(i, hyper_.beta2 * v.value_at(i) + (1.0 - hyper_.beta2) * g[i] * g[i]);
                const double mhat = m.value_at(i) / bc1;
                const double vhat = v.value_at(i) / bc2;
                w.set_value(i, wi - lr * mhat / (std::sqrt(vhat) + hyper_.eps));
            }
            break;
        }
        case OptimKind::adafactor: {
            // Factored second moment, no first moment, update-RMS clipping.
            const double beta = 1.0 - std::pow(static_cast<double>(t), -hyper_.adafactor_decay_exp);
            const double eps1 = hyper_.adafactor_eps1;
            std::vector<double> update(n);
            if (w.rank() == 2) {
                Tensor row = slots_.at(u.name)[0].buffer;
                Tensor col = slots_.at(u.name)[1].buffer;
                const std::size_t r = w.shape()[0], c = w.shape()[1];
                for (std::size_t i = 0; i < r; ++i) {
                    double rs = 0.0;
                    for (std::size_t j = 0; j < c; ++j) rs += g[i * c + j] * g[i * c + j] + eps1;
                    row.set_value(i, beta * row.value_at(i) + (1.0 - beta) * rs);
                }
                for (std::size_t j = 0; j < c; ++j) {
                    double cs = 0.0;
                    for (std::size_t i = 0; i < r; ++i) cs += g[i * c + j] * g[i * c + j] + eps1;
                    col.set_value(j, beta * col.value_at(j) + (1.0 - beta) * cs);
                }
                double row_sum = 0.0;
                for (std::size_t i = 0; i < r; ++i) row_sum += row.value_at(i);
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) {
                        const double vij = row.value_at(i) * col.value_at(j) / row_sum;
                        update[i * c + j] = g[i * c + j] / std::sqrt(vij);
                    }
            } else {
                Tensor acc = slots_.at(u.name)[0].buffer;
                for (std::size_t i = 0; i < n; ++i) {
                    acc.set_value(i, beta * acc.value_at(i) + (1.0 - beta) * (g[i] * g[i] + eps1));
                    update[i] = g[i] / std::sqrt(acc.value_at(i));
                }
            }
            double rms = 0.0;
            for (std::size_t i = 0; i < n; ++i) rms += update[i] * update[i];
            rms = std::sqrt(rms / static_cast<double>(n));
            const double clip = std::max(1.0, rms / hyper_.adafactor_clip);
            for (std::size_t i = 0; i < n; ++i) {
                w.set_value(i, w.value_at(i) - lr * update[i] / clip);
            }
            break;
        }
    }
}

}  // namespace hift
