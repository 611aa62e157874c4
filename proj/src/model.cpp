#include "hift/model.hpp"

#include <algorithm>
#include <cmath>

#include "hift/rng.hpp"

namespace hift {

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::embedding: return "embedding";
        case LayerKind::hidden: return "hidden";
        case LayerKind::head: return "head";
    }
    return "hidden";
}

void ModelArch::validate() const {
    if (width == 0) throw ConfigError("arch: width must be positive");
    if (hidden_units == 0) throw ConfigError("arch: at least one hidden unit required");
    if (input == InputKind::tokens) {
        if (vocab == 0) throw ConfigError("arch: vocab must be positive for token input");
        if (seq_len == 0) throw ConfigError("arch: seq_len must be positive for token input");
    } else {
        if (in_dim == 0) throw ConfigError("arch: in_dim must be positive for vector input");
        if (hidden_kind == HiddenKind::transformer) {
            throw ConfigError("arch: transformer hidden units require token input");
        }
    }
    if (head == HeadKind::classifier) {
        if (classes < 2) throw ConfigError("arch: classifier needs at least 2 classes");
    } else {
        if (out_dim == 0) throw ConfigError("arch: regressor out_dim must be positive");
    }
    if (hidden_kind == HiddenKind::transformer && ffn_mult == 0) {
        throw ConfigError("arch: ffn_mult must be positive");
    }
}

ParamSet::ParamSet(std::vector<std::string> names) : names_(std::move(names)) {
    std::sort(names_.begin(), names_.end());
    names_.erase(std::unique(names_.begin(), names_.end()), names_.end());
}

bool ParamSet::contains(const std::string& qualified) const {
    return std::binary_search(names_.begin(), names_.end(), qualified);
}

namespace {

Tensor init_weight(Rng& rng, std::size_t fan_in, std::vector<std::size_t> shape, DType dt) {
    Tensor t = Tensor::zeros(std::move(shape), dt);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < t.numel(); ++i) t.set_value(i, rng.next_symmetric(bound));
    return t;
}

Tensor init_table(Rng& rng, std::vector<std::size_t> shape, std::size_t width, DType dt) {
    Tensor t = Tensor::zeros(std::move(shape), dt);
    const double bound = std::sqrt(3.0 / static_cast<double>(width));
    for (std::size_t i = 0; i < t.numel(); ++i) t.set_value(i, rng.next_symmetric(bound));
    return t;
}

Tensor init_const(double v, std::vector<std::size_t> shape, DType dt) {
    Tensor t = Tensor::zeros(std::move(shape), dt);
    t.fill(v);
    return t;
}

}  // namespace

LayeredModel LayeredModel::build(const ModelArch& arch, std::uint64_t seed) {
    arch.validate();
    LayeredModel model;
    model.arch_ = arch;
    Rng rng(seed);
    const DType dt = arch.dtype;
    const std::size_t w = arch.width;

    auto add_unit = [&](LayerKind kind, const std::string& name) -> std::vector<NamedParam>& {
        LayerId id{model.units_.size(), kind, name};
        model.units_.push_back(id);
        model.params_.emplace_back();
        return model.params_.back();
    };
    auto add_param = [&](std::vector<NamedParam>& unit, const std::string& unit_name,
                         const std::string& local, Tensor t) {
        unit.push_back(NamedParam{local, unit_name + "." + local, std::move(t)});
    };

    {
        auto& u = add_unit(LayerKind::embedding, "embedding");
        if (arch.input == InputKind::tokens) {
            add_param(u, "embedding", "tok_table", init_table(rng, {arch.vocab, w}, w, dt));
            add_param(u, "embedding", "pos_table", init_table(rng, {arch.seq_len, w}, w, dt));
        } else {
            add_param(u, "embedding", "in_proj", init_weight(rng, arch.in_dim, {arch.in_dim, w}, dt));
            add_param(u, "embedding", "in_bias", init_const(0.0, {w}, dt));
        }
    }

    for (std::size_t h = 0; h < arch.hidden_units; ++h) {
        const std::string name = "h" + std::to_string(h + 1);
        auto& u = add_unit(LayerKind::hidden, name);
        if (arch.hidden_kind == HiddenKind::dense) {
            add_param(u, name, "w", init_weight(rng, w, {w, w}, dt));
            add_param(u, name, "b", init_const(0.0, {w}, dt));
            add_param(u, name, "ln_gain", init_const(1.0, {w}, dt));
            add_param(u, name, "ln_shift", init_const(0.0, {w}, dt));
        } else {
            add_param(u, name, "wq", init_weight(rng, w, {w, w}, dt));
            add_param(u, name, "bq", init_const(0.0, {w}, dt));
            add_param(u, name, "wk", init_weight(rng, w, {w, w}, dt));
            add_param(u, name, "bk", init_const(0.0, {w}, dt));
            add_param(u, name, "wv", init_weight(rng, w, {w, w}, dt));
            add_param(u, name, "bv", init_const(0.0, {w}, dt));
            add_param(u, name, "wo", init_weight(rng, w, {w, w}, dt));
            add_param(u, name, "bo", init_const(0.0, {w}, dt));
            add_param(u, name, "ln1_gain", init_const(1.0, {w}, dt));
            add_param(u, name, "ln1_shift", init_const(0.0, {w}, dt));
            const std::size_t f = arch.ffn_mult * w;
            add_param(u, name, "ffn_w1", init_weight(rng, w, {w, f}, dt));
            add_param(u, name, "ffn_b1", init_const(0.0, {f}, dt));
            add_param(u, name, "ffn_w2", init_weight(rng, f, {f, w}, dt));
            add_param(u, name, "ffn_b2", init_const(0.0, {w}, dt));
            add_param(u, name, "ln2_gain", init_const(1.0, {w}, dt));
            add_param(u, name, "ln2_shift", init_const(0.0, {w}, dt));
        }
    }

    {
        auto& u = add_unit(LayerKind::head, "head");
        const std::size_t out = arch.head == HeadKind::classifier ? arch.classes : arch.out_dim;
        add_param(u, "head", "w", init_weight(rng, w, {w, out}, dt));
        add_param(u, "head", "b", init_const(0.0, {out}, dt));
    }

    model.freeze_all();
    return model;
}

const std::vector<NamedParam>& LayeredModel::unit_params(std::size_t unit_index) const {
    if (unit_index >= params_.size()) {
        throw LookupError("unit index " + std::to_string(unit_index) + " out of range");
    }
    return params_[unit_index];
}

const LayerId& LayeredModel::unit(std::size_t index) const {
    if (index >= units_.size()) {
        throw LookupError("unit index " + std::to_string(index) + " out of range");
    }
    return units_[index];
}

const LayerId& LayeredModel::find_unit(const std::string& name) const {
    for (const auto& u : units_) {
        if (u.name == name) return u;
    }
    throw LookupError("unknown layer unit: " + name);
}

Tensor LayeredModel::param(const std::string& qualified) const {
    for (const auto& unit : params_) {
        for (const auto& p : unit) {
            if (p.qualified == qualified) return p.tensor;
        }
    }
    throw LookupError("unknown parameter: " + qualified);
}

ParamSet LayeredModel::select_parameters(std::span<const LayerId> layers) const {
    std::vector<std::string> names;
    for (const LayerId& id : layers) {
        if (id.index >= units_.size() || !(units_[id.index] == id)) {
            throw LookupError("unknown layer unit: " + id.name);
        }
        for (const auto& p : params_[id.index]) names.push_back(p.qualified);
    }
    return ParamSet(std::move(names));
}

ParamSet LayeredModel::all_parameters() const {
    std::vector<std::string> names;
    for_each_param([&](const NamedParam& p) { names.push_back(p.qualified); });
    return ParamSet(std::move(names));
}

void LayeredModel::freeze_all() {
    for (auto& unit : params_) {
        for (auto& p : unit) p.tensor.set_trainable(false);
    }
}

void LayeredModel::set_trainable(const ParamSet& set, bool flag) {
    std::size_t hits = 0;
    for (auto& unit : params_) {
        for (auto& p : unit) {
            if (set.contains(p.qualified)) {
                p.tensor.set_trainable(flag);
                ++hits;
            }
        }
    }
    if (hits != set.size()) {
        for (const auto& name : set.names()) {
            (void)param(name);  // throws LookupError naming the missing entry
        }
    }
}

std::size_t LayeredModel::param_element_count() const {
    std::size_t n = 0;
    for_each_param([&](const NamedParam& p) { n += p.tensor.numel(); });
    return n;
}

std::size_t LayeredModel::param_bytes() const {
    std::size_t n = 0;
    for_each_param([&](const NamedParam& p) { n += p.tensor.data_bytes(); });
    return n;
}

std::size_t LayeredModel::trainable_element_count() const {
    std::size_t n = 0;
    for_each_param([&](const NamedParam& p) {
        if (p.tensor.trainable()) n += p.tensor.numel();
    });
    return n;
}

std::size_t LayeredModel::grad_holding_tensor_count() const {
    std::size_t n = 0;
    for_each_param([&](const NamedParam& p) {
        if (p.tensor.has_grad()) ++n;
    });
    return n;
}

namespace {

Tensor dense_block(Tape& tape, const Tensor& x, const std::vector<NamedParam>& u) {
    // linear -> gelu -> layer_norm
    const Tensor& w = u[0].tensor;
    const Tensor& b = u[1].tensor;
    const Tensor& g = u[2].tensor;
    const Tensor& s = u[3].tensor;
    return layer_norm(tape, gelu(tape, bias_add(tape, matmul(tape, x, w), b)), g, s);
}

Tensor transformer_block(Tape& tape, const Tensor& x, const std::vector<NamedParam>& u,
                         std::size_t batch, std::size_t seq_len, std::size_t width) {
    auto P = [&](std::size_t i) -> const Tensor& { return u[i].tensor; };
    const Tensor q = bias_add(tape, matmul(tape, x, P(0)), P(1));
    const Tensor k = bias_add(tape, matmul(tape, x, P(2)), P(3));
    const Tensor v = bias_add(tape, matmul(tape, x, P(4)), P(5));
    const double inv_sqrt_w = 1.0 / std::sqrt(static_cast<double>(width));
    std::vector<Tensor> heads;
    heads.reserve(batch);
    for (std::size_t bidx = 0; bidx < batch; ++bidx) {
        const Tensor qb = slice_rows(tape, q, bidx * seq_len, seq_len);
        const Tensor kb = slice_rows(tape, k, bidx * seq_len, seq_len);
        const Tensor vb = slice_rows(tape, v, bidx * seq_len, seq_len);
        const Tensor scores = scale(tape, matmul(tape, qb, transpose(tape, kb)), inv_sqrt_w);
        heads.push_back(matmul(tape, softmax_rows(tape, scores), vb));
    }
    const Tensor attn = bias_add(tape, matmul(tape, concat_rows(tape, heads), P(6)), P(7));
    const Tensor x1 = layer_norm(tape, add(tape, x, attn), P(8), P(9));
    const Tensor h = gelu(tape, bias_add(tape, matmul(tape, x1, P(10)), P(11)));
    const Tensor f = bias_add(tape, matmul(tape, h, P(12)), P(13));
    return layer_norm(tape, add(tape, x1, f), P(14), P(15));
}

}  // namespace

Tensor LayeredModel::forward(Tape& tape, const Batch& batch) const {
    if (batch.size == 0) throw ContractError("forward: empty batch");
    Tensor x;
    if (arch_.input == InputKind::tokens) {
        if (batch.tokens.size() != batch.size * arch_.seq_len) {
            throw ShapeError("forward: token buffer does not match batch size * seq_len");
        }
        const auto& emb = params_[0];
        x = embedding_lookup(tape, emb[0].tensor, batch.tokens);
        x = add_positional(tape, x, emb[1].tensor);
    } else {
        if (batch.features.size() != batch.size * arch_.in_dim) {
            throw ShapeError("forward: feature buffer does not match batch size * in_dim");
        }
        Tensor input =
            Tensor::from_data({batch.size, arch_.in_dim}, batch.features, arch_.dtype);
        const auto& emb = params_[0];
        x = bias_add(tape, matmul(tape, input, emb[0].tensor), emb[1].tensor);
    }

    for (std::size_t h = 0; h < arch_.hidden_units; ++h) {
        const auto& u = params_[1 + h];
        if (arch_.hidden_kind == HiddenKind::dense) {
            x = dense_block(tape, x, u);
        } else {
            x = transformer_block(tape, x, u, batch.size, arch_.seq_len, arch_.width);
        }
    }

    if (arch_.input == InputKind::tokens) {
        x = mean_pool(tape, x, batch.size);
    }
    const auto& head = params_.back();
    return bias_add(tape, matmul(tape, x, head[0].tensor), head[1].tensor);
}

}  // namespace hift
