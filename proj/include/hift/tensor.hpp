#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hift/errors.hpp"

namespace hift {

// Storage precisions. f16 is storage-simulated: values live in a double
// buffer but every write is round-tripped through IEEE binary16, so byte
// accounting and quantization error are faithful while compute stays simple.
enum class DType : std::uint8_t { f64, f32, f16 };

std::size_t dtype_size(DType dt);
const char* dtype_name(DType dt);
DType dtype_from_name(const std::string& name);

// Round a value to what the given storage precision can represent.
double quantize(double v, DType dt);

// IEEE 754 binary16 conversion helpers (round-to-nearest-even).
std::uint16_t f32_to_f16_bits(float f);
float f16_bits_to_f32(std::uint16_t bits);

class Tape;

struct TensorImpl {
    std::vector<std::size_t> shape;
    DType dtype{DType::f64};
    std::vector<double> data;
    bool trainable{false};   // leaf parameter flag; only trainable leaves keep grads
    bool needs_grad{false};  // trainable, or derived from a needs_grad operand
    std::vector<double> grad;
    const Tape* producer{nullptr};  // tape that recorded this tensor, if any
};

// Shared-handle dense tensor. Copying a Tensor aliases the same buffer; the
// trainer owns all mutation (single-threaded core).
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(std::vector<std::size_t> shape, DType dt);
    static Tensor from_data(std::vector<std::size_t> shape, std::vector<double> values, DType dt);
    static Tensor scalar(double value, DType dt);

    bool defined() const { return impl_ != nullptr; }

    const std::vector<std::size_t>& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t numel() const;
    std::size_t rows() const;  // 2-D only
    std::size_t cols() const;  // 2-D only
    DType dtype() const { return impl_->dtype; }
    std::size_t data_bytes() const { return numel() * dtype_size(dtype()); }

    std::span<const double> values() const { return impl_->data; }
    double value_at(std::size_t i) const { return impl_->data[i]; }
    double scalar_value() const;

    // Writes are quantized to the tensor's storage precision.
    void set_value(std::size_t i, double v);
    void fill(double v);
    void assign(std::span<const double> values);

    bool trainable() const { return impl_->trainable; }
    void set_trainable(bool flag);

    bool has_grad() const { return !impl_->grad.empty(); }
    std::span<const double> grad() const { return impl_->grad; }
    void clear_grad() { impl_->grad.clear(); }

    TensorImpl* impl() const { return impl_.get(); }
    const std::shared_ptr<TensorImpl>& handle() const { return impl_; }

    bool same_as(const Tensor& other) const { return impl_ == other.impl_; }

  private:
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<TensorImpl> impl_;
};

struct BackwardStats {
    std::size_t intermediate_grad_bytes{0};  // grad buffers for non-leaf tensors
};

struct TapeNode {
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::shared_ptr<TensorImpl> output;
    // Reads output->grad and accumulates into the inputs that need gradients.
    std::function<void(BackwardStats*)> backward;
};

// Per-step recording of primitive applications, replayed once in reverse by
// backward(). Rebuilt every step; never retained across steps.
class Tape {
  public:
    void record(TapeNode node);
    std::size_t node_count() const { return nodes_.size(); }

    // Bytes of op outputs plus cached auxiliary buffers held for backward;
    // the trainer books these as residual (activation) memory.
    std::size_t activation_bytes() const { return activation_bytes_; }
    void note_aux_bytes(std::size_t bytes) { activation_bytes_ += bytes; }

    void clear();

  private:
    std::vector<TapeNode> nodes_;
    std::size_t activation_bytes_{0};

    friend BackwardStats backward(const Tensor& loss, Tape& tape);
};

// Reverse sweep from a scalar loss. Exactly the tensors with trainable=true
// hold gradients afterwards; intermediates are released and the tape cleared.
BackwardStats backward(const Tensor& loss, Tape& tape);

// --- primitives -----------------------------------------------------------
// Each op validates shapes, computes forward in double, quantizes the result
// to the operands' dtype, and records a backward rule when any operand sits
// in a trainable subgraph.

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& a);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor hadamard(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double factor);
Tensor bias_add(Tape& tape, const Tensor& x, const Tensor& bias);
// x is [groups*rows_per_group, w]; pos is [rows_per_group, w], tiled across groups.
Tensor add_positional(Tape& tape, const Tensor& x, const Tensor& pos);
Tensor relu(Tape& tape, const Tensor& x);
Tensor gelu(Tape& tape, const Tensor& x);
// Normalizes the last axis; zero-variance rows map to zeros before gain/shift.
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& shift,
                  double eps = 1e-5);
Tensor softmax_rows(Tape& tape, const Tensor& x);
Tensor slice_rows(Tape& tape, const Tensor& x, std::size_t start, std::size_t count);
Tensor concat_rows(Tape& tape, std::span<const Tensor> parts);
// [groups*rows_per_group, w] -> [groups, w], mean over each group's rows.
Tensor mean_pool(Tape& tape, const Tensor& x, std::size_t groups);
Tensor embedding_lookup(Tape& tape, const Tensor& table, std::span<const std::int64_t> ids);
// logits [b, c], labels [b]; returns the scalar mean negative log-likelihood.
Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits, std::span<const std::int64_t> labels);
Tensor mse_loss(Tape& tape, const Tensor& pred, const Tensor& target);
Tensor sum_all(Tape& tape, const Tensor& x);

}  // namespace hift
