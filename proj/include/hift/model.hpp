#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hift/tensor.hpp"

namespace hift {

enum class LayerKind : std::uint8_t { embedding, hidden, head };

const char* layer_kind_name(LayerKind k);

// One layer unit in the bottom-to-top ordering: embedding at index 0, head at
// index n-1, hidden units in between.
struct LayerId {
    std::size_t index{0};
    LayerKind kind{LayerKind::hidden};
    std::string name;

    bool operator==(const LayerId& o) const { return index == o.index && name == o.name; }
};

enum class HiddenKind : std::uint8_t { dense, transformer };

enum class InputKind : std::uint8_t { tokens, vector };
enum class HeadKind : std::uint8_t { classifier, regressor };

struct ModelArch {
    InputKind input{InputKind::tokens};
    std::size_t vocab{16};     // tokens input
    std::size_t seq_len{8};    // tokens input
    std::size_t in_dim{4};     // vector input
    std::size_t width{16};
    std::size_t hidden_units{2};
    HiddenKind hidden_kind{HiddenKind::dense};
    std::size_t ffn_mult{2};  // transformer feed-forward width multiplier
    HeadKind head{HeadKind::classifier};
    std::size_t classes{2};   // classifier head
    std::size_t out_dim{1};   // regressor head
    DType dtype{DType::f32};

    std::size_t unit_count() const { return hidden_units + 2; }
    void validate() const;  // throws ConfigError
};

// A binary parameter mask, stored as the ordered set of qualified names
// ("unit.param") it selects.
class ParamSet {
  public:
    ParamSet() = default;
    explicit ParamSet(std::vector<std::string> names);

    bool contains(const std::string& qualified) const;
    bool empty() const { return names_.empty(); }
    std::size_t size() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }

  private:
    std::vector<std::string> names_;  // sorted, unique
};

struct NamedParam {
    std::string local_name;  // e.g. "w", "ln_gain"
    std::string qualified;   // e.g. "h1.w"
    Tensor tensor;
};

// A batch of examples, already in model-consumable layout.
struct Batch {
    std::size_t size{0};
    std::vector<std::int64_t> tokens;   // [size * seq_len] for token input
    std::vector<double> features;       // [size * in_dim] for vector input
    std::vector<std::int64_t> labels;   // classification targets
    std::vector<double> targets;        // regression targets [size * out_dim]
};

// Ordered layer units owning named parameter tensors; the registry partitions
// every parameter into exactly one unit.
class LayeredModel {
  public:
    static LayeredModel build(const ModelArch& arch, std::uint64_t seed);

    const ModelArch& arch() const { return arch_; }
    const std::vector<LayerId>& units() const { return units_; }
    std::size_t unit_count() const { return units_.size(); }

    const std::vector<NamedParam>& unit_params(std::size_t unit_index) const;
    const LayerId& unit(std::size_t index) const;
    const LayerId& find_unit(const std::string& name) const;  // throws LookupError

    Tensor param(const std::string& qualified) const;  // throws LookupError

    ParamSet select_parameters(std::span<const LayerId> layers) const;
    ParamSet all_parameters() const;
    void freeze_all();
    void set_trainable(const ParamSet& set, bool flag);  // throws LookupError on unknown names

    std::size_t param_element_count() const;
    std::size_t param_bytes() const;
    std::size_t trainable_element_count() const;
    std::size_t grad_holding_tensor_count() const;

    template <typename Fn>
    void for_each_param(Fn&& fn) const {
        for (const auto& unit : params_) {
            for (const auto& p : unit) fn(p);
        }
    }

    // Produces logits [b, classes] or predictions [b, out_dim].
    Tensor forward(Tape& tape, const Batch& batch) const;

  private:
    ModelArch arch_;
    std::vector<LayerId> units_;
    std::vector<std::vector<NamedParam>> params_;  // one vector per unit, registry order

    friend void checkpoint_install_raw(LayeredModel&, const std::string&, std::span<const double>);
};

}  // namespace hift
