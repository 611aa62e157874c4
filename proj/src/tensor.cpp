#include "hift/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <sstream>

namespace hift {

namespace {

std::string shape_str(std::span<const std::size_t> shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

std::size_t product(std::span<const std::size_t> shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require_same_dtype(const Tensor& a, const Tensor& b, const char* op) {
    if (a.dtype() != b.dtype()) {
        throw ShapeError(std::string(op) + ": dtype mismatch (" + dtype_name(a.dtype()) + " vs " +
                         dtype_name(b.dtype()) + ")");
    }
}

void require_2d(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
        throw ShapeError(std::string(op) + ": expected 2-D tensor, got " + shape_str(t.shape()));
    }
}

}  // namespace

// --- dtype ------------------------------------------------------------------

std::size_t dtype_size(DType dt) {
    switch (dt) {
        case DType::f64: return 8;
        case DType::f32: return 4;
        case DType::f16: return 2;
    }
    return 8;
}

const char* dtype_name(DType dt) {
    switch (dt) {
        case DType::f64: return "f64";
        case DType::f32: return "f32";
        case DType::f16: return "f16";
    }
    return "f64";
}

DType dtype_from_name(const std::string& name) {
    if (name == "f64" || name == "fp64") return DType::f64;
    if (name == "f32" || name == "fp32") return DType::f32;
    if (name == "f16" || name == "fp16") return DType::f16;
    throw ConfigError("unknown dtype: " + name);
}

std::uint16_t f32_to_f16_bits(float f) {
    const std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
    const std::uint32_t sign = (bits >> 16) & 0x8000u;
    const std::int32_t exponent = static_cast<std::int32_t>((bits >> 23) & 0xFFu) - 127 + 15;
    std::uint32_t mantissa = bits & 0x7FFFFFu;

    if (((bits >> 23) & 0xFFu) == 0xFFu) {  // inf / nan
        return static_cast<std::uint16_t>(sign | 0x7C00u | (mantissa ? 0x200u : 0u));
    }
    if (exponent >= 0x1F) {  // overflow -> inf
        return static_cast<std::uint16_t>(sign | 0x7C00u);
    }
    if (exponent <= 0) {  // subnormal or underflow
        if (exponent < -10) return static_cast<std::uint16_t>(sign);
        mantissa |= 0x800000u;
        const int shift = 14 - exponent;
        std::uint32_t half_mant = mantissa >> shift;
        const std::uint32_t rem = mantissa & ((1u << shift) - 1u);
        const std::uint32_t halfway = 1u << (shift - 1);
        if (rem > halfway || (rem == halfway && (half_mant & 1u))) half_mant += 1;
        return static_cast<std::uint16_t>(sign | half_mant);
    }
    std::uint32_t half = sign | (static_cast<std::uint32_t>(exponent) << 10) | (mantissa >> 13);
    const std::uint32_t rem = mantissa & 0x1FFFu;
    if (rem > 0x1000u || (rem == 0x1000u && (half & 1u))) half += 1;  // carry may bump exponent
    return static_cast<std::uint16_t>(half);
}

float f16_bits_to_f32(std::uint16_t bits) {
    const std::uint32_t sign = static_cast<std::uint32_t>(bits & 0x8000u) << 16;
    const std::uint32_t exponent = (bits >> 10) & 0x1Fu;
    const std::uint32_t mantissa = bits & 0x3FFu;

    std::uint32_t out;
    if (exponent == 0) {
        if (mantissa == 0) {
            out = sign;
        } else {  // subnormal: normalize
            int e = -1;
            std::uint32_t m = mantissa;
            do {
                ++e;
                m <<= 1;
            } while ((m & 0x400u) == 0);
            out = sign | (static_cast<std::uint32_t>(127 - 15 - e) << 23) | ((m & 0x3FFu) << 13);
        }
    } else if (exponent == 0x1F) {
        out = sign | 0x7F800000u | (mantissa << 13);
    } else {
        out = sign | ((exponent - 15 + 127) << 23) | (mantissa << 13);
    }
    return std::bit_cast<float>(out);
}

double quantize(double v, DType dt) {
    switch (dt) {
        case DType::f64: return v;
        case DType::f32: return static_cast<double>(static_cast<float>(v));
        case DType::f16:
            return static_cast<double>(f16_bits_to_f32(f32_to_f16_bits(static_cast<float>(v))));
    }
    return v;
}

// --- Tensor -----------------------------------------------------------------

Tensor Tensor::zeros(std::vector<std::size_t> shape, DType dt) {
    if (shape.empty()) throw ShapeError("Tensor: empty shape");
    for (std::size_t extent : shape) {
        if (extent == 0) throw ShapeError("Tensor: zero extent in shape " + shape_str(shape));
    }
    auto impl = std::make_shared<TensorImpl>();
    impl->dtype = dt;
    impl->data.assign(product(shape), 0.0);
    impl->shape = std::move(shape);
    return Tensor(std::move(impl));
}

Tensor Tensor::from_data(std::vector<std::size_t> shape, std::vector<double> values, DType dt) {
    if (product(shape) != values.size()) {
        throw ShapeError("Tensor: data length " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
    }
    Tensor t = zeros(std::move(shape), dt);
    for (std::size_t i = 0; i < values.size(); ++i) t.impl_->data[i] = quantize(values[i], dt);
    return t;
}

Tensor Tensor::scalar(double value, DType dt) { return from_data({1}, {value}, dt); }

std::size_t Tensor::numel() const { return impl_->data.size(); }

std::size_t Tensor::rows() const {
    require_2d(*this, "rows");
    return impl_->shape[0];
}

std::size_t Tensor::cols() const {
    require_2d(*this, "cols");
    return impl_->shape[1];
}

double Tensor::scalar_value() const {
    if (numel() != 1) {
        throw ContractError("scalar_value: tensor has " + std::to_string(numel()) + " elements");
    }
    return impl_->data[0];
}

void Tensor::set_value(std::size_t i, double v) { impl_->data[i] = quantize(v, impl_->dtype); }

void Tensor::fill(double v) {
    const double q = quantize(v, impl_->dtype);
    std::fill(impl_->data.begin(), impl_->data.end(), q);
}

void Tensor::assign(std::span<const double> values) {
    if (values.size() != impl_->data.size()) throw ShapeError("assign: size mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) {
        impl_->data[i] = quantize(values[i], impl_->dtype);
    }
}

void Tensor::set_trainable(bool flag) {
    impl_->trainable = flag;
    impl_->needs_grad = flag;
    if (!flag) impl_->grad.clear();
}

// --- Tape / backward ----------------------------------------------------------

void Tape::record(TapeNode node) {
    activation_bytes_ += node.output->data.size() * dtype_size(node.output->dtype);
    nodes_.push_back(std::move(node));
}

void Tape::clear() {
    nodes_.clear();
    activation_bytes_ = 0;
}

namespace {

// Ensure impl holds a zeroed grad buffer; count fresh non-leaf allocations.
std::vector<double>& grad_buffer(TensorImpl* impl, BackwardStats* stats) {
    if (impl->grad.empty()) {
        impl->grad.assign(impl->data.size(), 0.0);
        if (!impl->trainable && stats) {
            stats->intermediate_grad_bytes += impl->data.size() * dtype_size(impl->dtype);
        }
    }
    return impl->grad;
}

void accumulate_at(TensorImpl* target, std::size_t i, double contribution, BackwardStats* stats) {
    if (!target->needs_grad) return;
    auto& g = grad_buffer(target, stats);
    g[i] = quantize(g[i] + contribution, target->dtype);
}

// Records a forward result as a tape node when any input needs gradients.
Tensor record_op(Tape& tape, std::vector<std::size_t> shape, DType dt, std::vector<double> values,
                 std::vector<std::shared_ptr<TensorImpl>> inputs,
                 const std::function<void(const TensorImpl*, BackwardStats*)>& rule) {
    Tensor out = Tensor::from_data(std::move(shape), std::move(values), dt);
    bool needs = false;
    for (const auto& in : inputs) needs = needs || in->needs_grad;
    if (needs) {
        out.impl()->needs_grad = true;
        out.impl()->producer = &tape;
        std::shared_ptr<TensorImpl> out_handle = out.handle();
        tape.record(TapeNode{
            std::move(inputs), out_handle,
            [rule, out_handle](BackwardStats* stats) { rule(out_handle.get(), stats); }});
    }
    return out;
}

}  // namespace

BackwardStats backward(const Tensor& loss, Tape& tape) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ContractError("backward: loss must be a scalar tensor");
    }
    BackwardStats stats;
    TensorImpl* loss_impl = loss.impl();
    if (loss_impl->needs_grad) {
        if (loss_impl->producer != &tape) {
            throw ContractError("backward: loss was not produced on this tape");
        }
        loss_impl->grad.assign(1, quantize(1.0, loss_impl->dtype));
        if (!loss_impl->trainable) stats.intermediate_grad_bytes += dtype_size(loss_impl->dtype);
        for (auto it = tape.nodes_.rbegin(); it != tape.nodes_.rend(); ++it) {
            if (it->output->grad.empty()) continue;  // branch not reached from the loss
            it->backward(&stats);
        }
        // Drop gradients everywhere except trainable leaves.
        for (auto& node : tape.nodes_) {
            if (!node.output->trainable) node.output->grad.clear();
            for (auto& in : node.inputs) {
                if (!in->trainable) in->grad.clear();
            }
        }
    }
    tape.clear();
    return stats;
}

// --- primitives ----------------------------------------------------------------

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    require_same_dtype(a, b, "matmul");
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape()) + " * " +
                         shape_str(b.shape()));
    }
    const std::size_t r = a.rows(), s = a.cols(), c = b.cols();
    std::vector<double> out(r * c, 0.0);
    const auto av = a.values();
    const auto bv = b.values();
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t k = 0; k < s; ++k) {
            const double aik = av[i * s + k];
            for (std::size_t j = 0; j < c; ++j) out[i * c + j] += aik * bv[k * c + j];
        }
    }
    auto ai = a.handle(), bi = b.handle();
    return record_op(tape, {r, c}, a.dtype(), std::move(out), {ai, bi},
                     [ai, bi, r, s, c](const TensorImpl* o, BackwardStats* stats) {
                         const auto& g = o->grad;
                         if (ai->needs_grad) {
                             auto& ga = grad_buffer(ai.get(), stats);
                             for (std::size_t i = 0; i < r; ++i)
                                 for (std::size_t j = 0; j < c; ++j) {
                                     const double gij = g[i * c + j];
                                     for (std::size_t k = 0; k < s; ++k)
                                         ga[i * s + k] = quantize(
                                             ga[i * s + k] + gij * bi->data[k * c + j], ai->dtype);
                                 }
                         }
                         if (bi->needs_grad) {
                             auto& gb = grad_buffer(bi.get(), stats);
                             for (std::size_t i = 0; i < r; ++i)
                                 for (std::size_t j = 0; j < c; ++j) {
                                     const double gij = g[i * c + j];
                                     for (std::size_t k = 0; k < s; ++k)
                                         gb[k * c + j] = quantize(
                                             gb[k * c + j] + ai->data[i * s + k] * gij, bi->dtype);
                                 }
                         }
                     });
}

Tensor transpose(Tape& tape, const Tensor& a) {
    require_2d(a, "transpose");
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(r * c);
    const auto av = a.values();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
    auto ai = a.handle();
    return record_op(tape, {c, r}, a.dtype(), std::move(out), {ai},
                     [ai, r, c](const TensorImpl* o, BackwardStats* stats) {
                         for (std::size_t i = 0; i < r; ++i)
                             for (std::size_t j = 0; j < c; ++j)
                                 accumulate_at(ai.get(), i * c + j, o->grad[j * r + i], stats);
                     });
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same_dtype(a, b, "add");
    if (a.shape() != b.shape()) {
        throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value_at(i) + b.value_at(i);
    auto ai = a.handle(), bi = b.handle();
    return record_op(tape, a.shape(), a.dtype(), std::move(out), {ai, bi},
                     [ai, bi](const TensorImpl* o, BackwardStats* stats) {
                         for (std::size_t i = 0; i < o->grad.size(); ++i) {
                             accumulate_at(ai.get(), i, o->grad[i], stats);
                             accumulate_at(bi.get(), i, o->grad[i], stats);
                         }
                     });
}

Tensor hadamard(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same_dtype(a, b, "hadamard");
    if (a.shape() != b.shape()) {
        throw ShapeError("hadamard: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value_at(i) * b.value_at(i);
    auto ai = a.handle(), bi = b.handle();
    return record_op(tape, a.shape(), a.dtype(), std::move(out), {ai, bi},
                     [ai, bi](const TensorImpl* o, BackwardStats* stats) {
                         for (std::size_t i = 0; i < o->grad.size(); ++i) {
                             accumulate_at(ai.get(), i, o->grad[i] * bi->data[i], stats);
                             accumulate_at(bi.get(), i, o->grad[i] * ai->data[i], stats);
                         }
                     });
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value_at(i) * factor;
    auto ai = a.handle();
    return record_op(tape, a.shape(), a.dtype(), std::move(out), {ai},
                     [ai, factor](const TensorImpl* o, BackwardStats* stats) {
                         for (std::size_t i = 0; i < o->grad.size(); ++i)
                             accumulate_at(ai.get(), i, o->grad[i] * factor, stats);
                     });
}

Tensor bias_add(Tape& tape, const Tensor& x, const Tensor& bias) {
    require_2d(x, "bias_add");
    require_same_dtype(x, bias, "bias_add");
    if (bias.rank() != 1 || bias.shape()[0] != x.cols()) {
        throw ShapeError("bias_add: bias " + shape_str(bias.shape()) + " does not match columns of " +
                         shape_str(x.shape()));
    }
    const std::size_t n = x.rows(), w = x.cols();
    std::vector<double> out(n * w);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < w; ++j) out[i * w + j] = x.value_at(i * w + j) + bias.value_at(j);
    auto xi = x.handle(), bi = bias.handle();
    return record_op(tape, {n, w}, x.dtype(), std::move(out), {xi, bi},
                     [xi, bi, n, w](const TensorImpl* o, BackwardStats* stats) {
                         for (std::size_t i = 0; i < n; ++i)
                             for (std::size_t j = 0; j < w; ++j) {
                                 accumulate_at(xi.get(), i * w + j, o->grad[i * w + j], stats);
                                 accumulate_at(bi.get(), j, o->grad[i * w + j], stats);
                             }
                     });
}

Tensor add_positional(Tape& tape, const Tensor& x, const Tensor& pos) {
    require_2d(x, "add_positional");
    require_2d(pos, "add_positional");
    require_same_dtype(x, pos, "add_positional");
    const std::size_t l = pos.rows(), w = pos.cols();
    if (x.cols() != w || x.rows() % l != 0) {
        throw ShapeError("add_positional: " + shape_str(pos.shape()) + " does not tile " +
                         shape_str(x.shape()));
    }
    const std::size_t n = x.rows();
    std::vector<double> out(n * w);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t p = i % l;
        for (std::size_t j = 0; j < w; ++j)
            out[i * w + j] = x.value_at(i * w + j) + pos.value_at(p * w + j);
    }
    auto xi = x.handle(), pi = pos.handle();
    return record_op(tape, {n, w}, x.dtype(), std::move(out), {xi, pi},
                     [xi, pi, n, l, w](const TensorImpl* o, BackwardStats* stats) {
                         for (std::size_t i = 0; i < n; ++i) {
                             const std::size_t p = i % l;
                             for (std::size_t j = 0; j < w; ++j) {
                                 accumulate_at(xi.get(), i * w + j, o->grad[i * w + j], stats);
                                 accumulate_at(pi.get(), p * w + j, o->grad[i * w + j], stats);
                             }
                         }
                     });
}

Tensor relu(Tape& tape, const Tensor& x) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value_at(i) > 0.0 ? x.value_at(i) : 0.0;
    auto xi = x.handle();
    return record_op(tape, x.shape(), x.dtype(), std::move(out), {xi},
                     [xi](const TensorImpl* o, BackwardStats* stats) {
                         for (std::size_t i = 0; i < o->grad.size(); ++i)
                             accumulate_at(xi.get(), i, xi->data[i] > 0.0 ? o->grad[i] : 0.0, stats);
                     });
}

Tensor gelu(Tape& tape, const Tensor& x) {
    // Exact erf form: 0.5 x (1 + erf(x/sqrt(2)))
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    constexpr double inv_sqrt2pi = 0.3989422804014326779;
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = x.value_at(i);
        out[i] = 0.5 * v * (1.0 + std::erf(v * inv_sqrt2));
    }
    auto xi = x.handle();
    return record_op(tape, x.shape(), x.dtype(), std::move(out), {xi},
                     [xi](const TensorImpl* o, BackwardStats* stats) {
                         for (std::size_t i = 0; i < o->grad.size(); ++i) {
                             const double v = xi->data[i];
                             const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
                             const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
                             accumulate_at(xi.get(), i, o->grad[i] * (cdf + v * pdf), stats);
                         }
                     });
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& shift, double eps) {
    require_same_dtype(x, gain, "layer_norm");
    require_same_dtype(x, shift, "layer_norm");
    if (x.rank() < 1) throw ShapeError("layer_norm: rank-0 input");
    const std::size_t w = x.shape().back();
    if (gain.numel() != w || shift.numel() != w) {
        throw ShapeError("layer_norm: gain/shift size differs from last axis " + std::to_string(w));
    }
    const std::size_t rows = x.numel() / w;
    std::vector<double> out(x.numel());
    std::vector<double> xhat(x.numel());
    std::vector<double> inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        double mean = 0.0;
        for (std::size_t j = 0; j < w; ++j) mean += x.value_at(r * w + j);
        mean /= static_cast<double>(w);
        double var = 0.0;
        for (std::size_t j = 0; j < w; ++j) {
            const double d = x.value_at(r * w + j) - mean;
            var += d * d;
        }
        var /= static_cast<double>(w);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[r] = is;
        for (std::size_t j = 0; j < w; ++j) {
            const double xh = (x.value_at(r * w + j) - mean) * is;
            xhat[r * w + j] = xh;
            out[r * w + j] = xh * gain.value_at(j) + shift.value_at(j);
        }
    }
    tape.note_aux_bytes((xhat.size() + inv_std.size()) * dtype_size(x.dtype()));
    auto xi = x.handle(), gi = gain.handle(), si = shift.handle();
    return record_op(
        tape, x.shape(), x.dtype(), std::move(out), {xi, gi, si},
        [xi, gi, si, rows, w, xhat = std::move(xhat),
         inv_std = std::move(inv_std)](const TensorImpl* o, BackwardStats* stats) {
            for (std::size_t r = 0; r < rows; ++r) {
                double sum_gy = 0.0, sum_gy_xhat = 0.0;
                for (std::size_t j = 0; j < w; ++j) {
                    const double gy = o->grad[r * w + j] * gi->data[j];
                    sum_gy += gy;
                    sum_gy_xhat += gy * xhat[r * w + j];
                }
                const double inv_w = 1.0 / static_cast<double>(w);
                for (std::size_t j = 0; j < w; ++j) {
                    const double gy = o->grad[r * w + j] * gi->data[j];
                    const double dx =
                        inv_std[r] * (gy - inv_w * sum_gy - xhat[r * w + j] * inv_w * sum_gy_xhat);
                    accumulate_at(xi.get(), r * w + j, dx, stats);
                    accumulate_at(gi.get(), j, o->grad[r * w + j] * xhat[r * w + j], stats);
                    accumulate_at(si.get(), j, o->grad[r * w + j], stats);
                }
            }
        });
}

Tensor softmax_rows(Tape& tape, const Tensor& x) {
    require_2d(x, "softmax_rows");
    const std::size_t n = x.rows(), w = x.cols();
    std::vector<double> out(n * w);
    for (std::size_t i = 0; i < n; ++i) {
        double mx = x.value_at(i * w);
        for (std::size_t j = 1; j < w; ++j) mx = std::max(mx, x.value_at(i * w + j));
        double denom = 0.0;
        for (std::size_t j = 0; j < w; ++j) {
            out[i * w + j] = std::exp(x.value_at(i * w + j) - mx);
            denom += out[i * w + j];
        }
        for (std::size_t j = 0; j < w; ++j) out[i * w + j] /= denom;
    }
    auto xi = x.handle();
    return record_op(tape, {n, w}, x.dtype(), std::move(out), {xi},
                     [xi, n, w](const TensorImpl* o, BackwardStats* stats) {
                         // dx = s * (g - sum(g*s)) per row
                         for (std::size_t i = 0; i < n; ++i) {
                             double dot = 0.0;
                             for (std::size_t j = 0; j < w; ++j)
                                 dot += o->grad[i * w + j] * o->data[i * w + j];
                             for (std::size_t j = 0; j < w; ++j) {
                                 const double s = o->data[i * w + j];
                                 accumulate_at(xi.get(), i * w + j,
                                               s * (o->grad[i * w + j] - dot), stats);
                             }
                         }
                     });
}

Tensor slice_rows(Tape& tape, const Tensor& x, std::size_t start, std::size_t count) {
    require_2d(x, "slice_rows");
    if (start + count > x.rows() || count == 0) {
        throw ShapeError("slice_rows: range [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") out of " + std::to_string(x.rows()) +
                         " rows");
    }
    const std::size_t w = x.cols();
    std::vector<double> out(count * w);
    for (std::size_t i = 0; i < count * w; ++i) out[i] = x.value_at(start * w + i);
    auto xi = x.handle();
    return record_op(tape, {count, w}, x.dtype(), std::move(out), {xi},
                     [xi, start, count, w](const TensorImpl* o, BackwardStats* stats) {
                         for (std::size_t i = 0; i < count * w; ++i)
                             accumulate_at(xi.get(), start * w + i, o->grad[i], stats);
                     });
}

Tensor concat_rows(Tape& tape, std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    const std::size_t w = parts[0].cols();
    const DType dt = parts[0].dtype();
    std::size_t total = 0;
    for (const Tensor& p : parts) {
        require_2d(p, "concat_rows");
        if (p.cols() != w || p.dtype() != dt) throw ShapeError("concat_rows: inconsistent parts");
        total += p.rows();
    }
    std::vector<double> out;
    out.reserve(total * w);
    std::vector<std::shared_ptr<TensorImpl>> handles;
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const Tensor& p : parts) {
        out.insert(out.end(), p.values().begin(), p.values().end());
        handles.push_back(p.handle());
        offsets.push_back(off);
        off += p.numel();
    }
    auto handles_copy = handles;
    return record_op(tape, {total, w}, dt, std::move(out), std::move(handles),
                     [parts_h = std::move(handles_copy), offsets](const TensorImpl* o,
                                                                  BackwardStats* stats) {
                         for (std::size_t p = 0; p < parts_h.size(); ++p) {
                             const std::size_t n = parts_h[p]->data.size();
                             for (std::size_t i = 0; i < n; ++i)
                                 accumulate_at(parts_h[p].get(), i, o->grad[offsets[p] + i], stats);
                         }
                     });
}

Tensor mean_pool(Tape& tape, const Tensor& x, std::size_t groups) {
    require_2d(x, "mean_pool");
    if (groups == 0 || x.rows() % groups != 0) {
        throw ShapeError("mean_pool: " + std::to_string(groups) + " groups do not divide " +
                         std::to_string(x.rows()) + " rows");
    }
    const std::size_t l = x.rows() / groups, w = x.cols();
    const double inv_l = 1.0 / static_cast<double>(l);
    std::vector<double> out(groups * w, 0.0);
    for (std::size_t g = 0; g < groups; ++g)
        for (std::size_t r = 0; r < l; ++r)
            for (std::size_t j = 0; j < w; ++j)
                out[g * w + j] += x.value_at((g * l + r) * w + j) * inv_l;
    auto xi = x.handle();
    return record_op(tape, {groups, w}, x.dtype(), std::move(out), {xi},
                     [xi, groups, l, w, inv_l](const TensorImpl* o, BackwardStats* stats) {
                         for (std::size_t g = 0; g < groups; ++g)
                             for (std::size_t r = 0; r < l; ++r)
                                 for (std::size_t j = 0; j < w; ++j)
                                     accumulate_at(xi.get(), (g * l + r) * w + j,
                                                   o->grad[g * w + j] * inv_l, stats);
                     });
}

Tensor embedding_lookup(Tape& tape, const Tensor& table, std::span<const std::int64_t> ids) {
    require_2d(table, "embedding_lookup");
    const std::size_t vocab = table.rows(), w = table.cols();
    for (std::int64_t id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
            throw VocabularyError("embedding_lookup: id " + std::to_string(id) +
                                  " outside vocabulary of " + std::to_string(vocab));
        }
    }
    if (ids.empty()) throw ShapeError("embedding_lookup: empty id list");
    std::vector<double> out(ids.size() * w);
    for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t j = 0; j < w; ++j)
            out[i * w + j] = table.value_at(static_cast<std::size_t>(ids[i]) * w + j);
    auto ti = table.handle();
    std::vector<std::int64_t> ids_copy(ids.begin(), ids.end());
    return record_op(tape, {ids.size(), w}, table.dtype(), std::move(out), {ti},
                     [ti, ids = std::move(ids_copy), w](const TensorImpl* o, BackwardStats* stats) {
                         for (std::size_t i = 0; i < ids.size(); ++i)
                             for (std::size_t j = 0; j < w; ++j)
                                 accumulate_at(ti.get(),
                                               static_cast<std::size_t>(ids[i]) * w + j,
                                               o->grad[i * w + j], stats);
                     });
}

Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits,
                             std::span<const std::int64_t> labels) {
    require_2d(logits, "softmax_cross_entropy");
    const std::size_t b = logits.rows(), c = logits.cols();
    if (labels.size() != b) {
        throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(b) + " rows");
    }
    for (std::int64_t y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= c) {
            throw VocabularyError("softmax_cross_entropy: label " + std::to_string(y) +
                                  " outside " + std::to_string(c) + " classes");
        }
    }
    std::vector<double> probs(b * c);
    double loss = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        double mx = logits.value_at(i * c);
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, logits.value_at(i * c + j));
        double denom = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            probs[i * c + j] = std::exp(logits.value_at(i * c + j) - mx);
            denom += probs[i * c + j];
        }
        for (std::size_t j = 0; j < c; ++j) probs[i * c + j] /= denom;
        loss -= std::log(probs[i * c + static_cast<std::size_t>(labels[i])]);
    }
    loss /= static_cast<double>(b);
    tape.note_aux_bytes(probs.size() * dtype_size(logits.dtype()));
    auto li = logits.handle();
    std::vector<std::int64_t> labels_copy(labels.begin(), labels.end());
    return record_op(tape, {1}, logits.dtype(), {loss}, {li},
                     [li, labels = std::move(labels_copy), b, c,
                      probs = std::move(probs)](const TensorImpl* o, BackwardStats* stats) {
                         const double g = o->grad[0] / static_cast<double>(b);
                         for (std::size_t i = 0; i < b; ++i)
                             for (std::size_t j = 0; j < c; ++j) {
                                 const double onehot =
                                     (static_cast<std::size_t>(labels[i]) == j) ? 1.0 : 0.0;
                                 accumulate_at(li.get(), i * c + j,
                                               g * (probs[i * c + j] - onehot), stats);
                             }
                     });
}

Tensor mse_loss(Tape& tape, const Tensor& pred, const Tensor& target) {
    require_same_dtype(pred, target, "mse_loss");
    if (pred.shape() != target.shape()) {
        throw ShapeError("mse_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                         shape_str(target.shape()));
    }
    const std::size_t n = pred.numel();
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = pred.value_at(i) - target.value_at(i);
        loss += d * d;
    }
    loss /= static_cast<double>(n);
    auto pi = pred.handle(), ti = target.handle();
    return record_op(tape, {1}, pred.dtype(), {loss}, {pi, ti},
                     [pi, ti, n](const TensorImpl* o, BackwardStats* stats) {
                         const double g = o->grad[0] * 2.0 / static_cast<double>(n);
                         for (std::size_t i = 0; i < n; ++i) {
                             const double d = pi->data[i] - ti->data[i];
                             accumulate_at(pi.get(), i, g * d, stats);
                             accumulate_at(ti.get(), i, -g * d, stats);
                         }
                     });
}

Tensor sum_all(Tape& tape, const Tensor& x) {
    double total = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) total += x.value_at(i);
    auto xi = x.handle();
    return record_op(tape, {1}, x.dtype(), {total}, {xi},
                     [xi](const TensorImpl* o, BackwardStats* stats) {
                         for (std::size_t i = 0; i < xi->data.size(); ++i)
                             accumulate_at(xi.get(), i, o->grad[0], stats);
                     });
}

}  // namespace hift
