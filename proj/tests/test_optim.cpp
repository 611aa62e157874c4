#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include "hift/rng.hpp"
#include <vector>

#include "hift/memory.hpp"
#include "hift/checkpoint.hpp"
#include "hift/optim.hpp"
#include "hift/tensor.hpp"

using namespace hift;

namespace {

// One registered scalar/vector/matrix parameter driven step by step.
struct Rig {
    OptimizerState opt;
    Tensor w;

    Rig(OptimKind kind, Hyperparams hp, std::vector<std::size_t> shape, std::vector<double> init)
        : opt(kind, hp, DType::f64), w(Tensor::from_data(std::move(shape), std::move(init), DType::f64)) {
        std::vector<NamedTensor> named = {{"w", w}};
        opt.update_optimizer_parameter(named, Residency::device, nullptr);
    }

    void step(std::vector<double> grad, double lr) {
        ParamUpdate u{"w", w, grad};
        opt.step(std::span<ParamUpdate>(&u, 1), lr);
    }
};

}  // namespace

// Expected sequences below were derived from the published recurrences by
// direct evaluation before the implementation was written.

TEST_CASE("sgd single step") {
    Rig rig(OptimKind::sgd, {}, {1}, {1.0});
    rig.step({0.5}, 0.1);
    CHECK(rig.w.value_at(0) == doctest::Approx(0.95).epsilon(1e-15));
    CHECK(rig.opt.slot_count("w") == 0);
    CHECK(rig.opt.total_slot_bytes() == 0);
}

TEST_CASE("adamw three-step oracle") {
    Hyperparams hp;
    hp.beta1 = 0.9;
    hp.beta2 = 0.999;
    hp.eps = 1e-8;
    hp.weight_decay = 0.0;
    Rig rig(OptimKind::adamw, hp, {1}, {1.0});
    const double expected[] = {0.90000000099999999, 0.87336629737090321, 0.83932338306484655};
    const double grads[] = {1.0, -0.5, 0.25};
    for (int t = 0; t < 3; ++t) {
        rig.step({grads[t]}, 0.1);
        CHECK(std::abs(rig.w.value_at(0) - expected[t]) < 1e-12);
    }
    // first-step delta is nearly -lr
    CHECK(std::abs((expected[0] - 1.0) + 0.1) < 1e-8);
}

TEST_CASE("adamw decoupled weight decay oracle") {
    Hyperparams hp;
    hp.weight_decay = 0.01;
    Rig rig(OptimKind::adamw, hp, {1}, {1.0});
    const double expected[] = {0.89900000099999999, 0.87146729736990325, 0.83655291576647672};
    const double grads[] = {1.0, -0.5, 0.25};
    for (int t = 0; t < 3; ++t) {
        rig.step({grads[t]}, 0.1);
        CHECK(std::abs(rig.w.value_at(0) - expected[t]) < 1e-12);
    }
}

TEST_CASE("sgdm three-step oracle") {
    Hyperparams hp;
    hp.momentum = 0.9;
    Rig rig(OptimKind::sgdm, hp, {1}, {1.0});
    const double expected[] = {0.9, 0.86, 0.799};
    const double grads[] = {1.0, -0.5, 0.25};
    for (int t = 0; t < 3; ++t) {
        rig.step({grads[t]}, 0.1);
        CHECK(std::abs(rig.w.value_at(0) - expected[t]) < 1e-12);
    }
}

TEST_CASE("adagrad oracle: eps=0 gives -1 then -1/sqrt(2)") {
    Hyperparams hp;
    hp.eps = 0.0;
    Rig rig(OptimKind::adagrad, hp, {1}, {0.0});
    rig.step({1.0}, 1.0);
    CHECK(std::abs(rig.w.value_at(0) - (-1.0)) < 1e-12);
    rig.step({1.0}, 1.0);
    CHECK(std::abs(rig.w.value_at(0) - (-1.0 - 1.0 / std::sqrt(2.0))) < 1e-12);
}

TEST_CASE("adagrad three-step oracle with eps") {
    Hyperparams hp;
    hp.eps = 1e-10;
    Rig rig(OptimKind::adagrad, hp, {1}, {1.0});
    const double expected[] = {0.90000000001000002, 0.94472135955599579, 0.92289957053430127};
    const double grads[] = {1.0, -0.5, 0.25};
    for (int t = 0; t < 3; ++t) {
        rig.step({grads[t]}, 0.1);
        CHECK(std::abs(rig.w.value_at(0) - expected[t]) < 1e-12);
    }
}

TEST_CASE("adafactor factored-matrix three-step oracle") {
    Rig rig(OptimKind::adafactor, {}, {2, 2}, {1.0, 2.0, -1.0, 0.5});
    const std::vector<std::vector<double>> grads = {
        {0.5, -0.25, 1.0, 0.75}, {-0.2, 0.4, 0.3, -0.6}, {0.1, 0.2, -0.3, 0.45}};
    const std::vector<std::vector<double>> expected = {
        {0.89045548849896683, 2.0774596669241485, -1.0979795897113271, 0.39607695154586736},
        {0.94627212089951596, 1.9617460034941585, -1.1413559992224229, 0.48600074370425939},
        {0.91078180077128579, 1.8936740079466512, -1.0880659397629129, 0.4093412346364188}};
    for (int t = 0; t < 3; ++t) {
        rig.step(grads[t], 0.1);
        for (int i = 0; i < 4; ++i) CHECK(std::abs(rig.w.value_at(i) - expected[t][i]) < 1e-12);
    }
    CHECK(rig.opt.slot_count("w") == 2);  // row + col accumulators
    CHECK(rig.opt.slot_bytes("w") == (2 + 2) * 8);
}

TEST_CASE("adafactor vector three-step oracle") {
    Rig rig(OptimKind::adafactor, {}, {3}, {1.0, -2.0, 0.5});
    const std::vector<std::vector<double>> grads = {
        {0.5, 0.25, -1.0}, {0.1, -0.2, 0.3}, {-0.4, 0.6, 0.2}};
    const std::vector<std::vector<double>> expected = {
        {0.9, -2.1, 0.6},
        {0.87014009911434598, -2.0101766505652829, 0.55657835049166204},
        {0.97409711111574959, -2.1442916137313048, 0.52184916520440494}};
    for (int t = 0; t < 3; ++t) {
        rig.step(grads[t], 0.1);
        for (int i = 0; i < 3; ++i) CHECK(std::abs(rig.w.value_at(i) - expected[t][i]) < 1e-12);
    }
    CHECK(rig.opt.slot_count("w") == 1);  // full-size accumulator for vectors
}

TEST_CASE("state_footprint matches the per-kind byte rules") {
    const std::vector<std::size_t> mat = {10, 10};
    const std::vector<std::size_t> wide = {768, 768};
    const std::vector<std::size_t> vec = {100};
    CHECK(OptimizerState::state_footprint(OptimKind::adamw, mat, DType::f32) == 800);
    CHECK(OptimizerState::state_footprint(OptimKind::adafactor, wide, DType::f32) == 6144);
    CHECK(OptimizerState::state_footprint(OptimKind::adafactor, vec, DType::f32) == 400);
    CHECK(OptimizerState::state_footprint(OptimKind::sgd, mat, DType::f64) == 0);
    CHECK(OptimizerState::state_footprint(OptimKind::sgdm, mat, DType::f64) == 800);
    CHECK(OptimizerState::state_footprint(OptimKind::adagrad, vec, DType::f16) == 200);
}

TEST_CASE("lazy slot allocation happens exactly once") {
    OptimizerState opt(OptimKind::adamw, {}, DType::f32);
    Tensor w1 = Tensor::zeros({4, 4}, DType::f32);
    Tensor w2 = Tensor::zeros({4}, DType::f32);
    MemoryLedger ledger;
    std::vector<NamedTensor> group1 = {{"a.w", w1}};
    opt.update_optimizer_parameter(group1, Residency::host, &ledger);
    CHECK(opt.slot_count("a.w") == 2);
    CHECK(ledger.current(Category::state, Placement::host) == 2 * 16 * 4);

    std::vector<NamedTensor> group2 = {{"b.w", w2}};
    opt.update_optimizer_parameter(group2, Residency::host, &ledger);
    CHECK(ledger.current(Category::state, Placement::host) == 2 * 16 * 4 + 2 * 4 * 4);

    // revisiting group 1 allocates nothing new
    opt.update_optimizer_parameter(group1, Residency::host, &ledger);
    CHECK(ledger.current(Category::state, Placement::host) == 2 * 16 * 4 + 2 * 4 * 4);
    CHECK(opt.active().contains("a.w"));
    CHECK_FALSE(opt.active().contains("b.w"));
}

TEST_CASE("host-resident state blocks the step") {
    OptimizerState opt(OptimKind::adamw, {}, DType::f64);
    Tensor w = Tensor::from_data({1}, {1.0}, DType::f64);
    std::vector<NamedTensor> named = {{"w", w}};
    opt.update_optimizer_parameter(named, Residency::host, nullptr);
    std::vector<double> g = {1.0};
    ParamUpdate u{"w", w, g};
    CHECK_THROWS_AS(opt.step(std::span<ParamUpdate>(&u, 1), 0.1), ResidencyError);

    // sgd has no slots, so host placement never blocks
    OptimizerState sgd(OptimKind::sgd, {}, DType::f64);
    sgd.update_optimizer_parameter(named, Residency::host, nullptr);
    sgd.step(std::span<ParamUpdate>(&u, 1), 0.1);
    CHECK(w.value_at(0) == doctest::Approx(0.9));
}

TEST_CASE("missing gradients and non-active parameters are contract errors") {
    OptimizerState opt(OptimKind::sgd, {}, DType::f64);
    Tensor w = Tensor::from_data({2}, {1.0, 2.0}, DType::f64);
    std::vector<NamedTensor> named = {{"w", w}};
    opt.update_optimizer_parameter(named, Residency::device, nullptr);

    std::vector<double> short_grad = {1.0};
    ParamUpdate bad_grad{"w", w, short_grad};
    CHECK_THROWS_AS(opt.step(std::span<ParamUpdate>(&bad_grad, 1), 0.1), ContractError);

    std::vector<double> g = {1.0, 1.0};
    ParamUpdate foreign{"other", w, g};
    CHECK_THROWS_AS(opt.step(std::span<ParamUpdate>(&foreign, 1), 0.1), ContractError);
}

TEST_CASE("per-parameter step counts drive bias correction") {
    // p2 joins one global step later; its first update must use t=1 correction,
    // i.e. match a fresh parameter's first update exactly.
    Hyperparams hp;
    OptimizerState opt(OptimKind::adamw, hp, DType::f64);
    Tensor p1 = Tensor::from_data({1}, {1.0}, DType::f64);
    Tensor p2 = Tensor::from_data({1}, {1.0}, DType::f64);
    std::vector<NamedTensor> g1 = {{"p1", p1}};
    opt.update_optimizer_parameter(g1, Residency::device, nullptr);
    std::vector<double> grad = {1.0};
    ParamUpdate u1{"p1", p1, grad};
    opt.step(std::span<ParamUpdate>(&u1, 1), 0.1);

    std::vector<NamedTensor> g2 = {{"p2", p2}};
    opt.update_optimizer_parameter(g2, Residency::device, nullptr);
    ParamUpdate u2{"p2", p2, grad};
    opt.step(std::span<ParamUpdate>(&u2, 1), 0.1);

    OptimizerState fresh(OptimKind::adamw, hp, DType::f64);
    Tensor q = Tensor::from_data({1}, {1.0}, DType::f64);
    std::vector<NamedTensor> gq = {{"q", q}};
    fresh.update_optimizer_parameter(gq, Residency::device, nullptr);
    ParamUpdate uq{"q", q, grad};
    fresh.step(std::span<ParamUpdate>(&uq, 1), 0.1);

    CHECK(p2.value_at(0) == q.value_at(0));  // bitwise
    CHECK(opt.step_count("p1") == 1);
    CHECK(opt.step_count("p2") == 1);
}

TEST_CASE("hyperparameter validation") {
    Hyperparams bad;
    bad.beta1 = 1.5;
    CHECK_THROWS_AS(OptimizerState(OptimKind::adamw, bad, DType::f64), ConfigError);
    Hyperparams neg;
    neg.weight_decay = -1.0;
    CHECK_THROWS_AS(OptimizerState(OptimKind::adamw, neg, DType::f64), ConfigError);
}

TEST_CASE("optimizer state checkpoints in the shared container format") {
    namespace fs = std::filesystem;
    ModelArch arch;
    arch.vocab = 8;
    arch.seq_len = 4;
    arch.width = 6;
    arch.hidden_units = 2;
    arch.classes = 2;
    arch.dtype = DType::f64;
    LayeredModel model = LayeredModel::build(arch, 9);

    OptimizerState opt(OptimKind::adamw, {}, DType::f64);
    const ParamSet all = model.all_parameters();
    opt.update_optimizer_parameter(model, all, Residency::device, nullptr);

    // a couple of steps so moments and step counts are non-trivial
    Rng rng(4);
    for (int t = 0; t < 3; ++t) {
        std::vector<std::vector<double>> grads;
        std::vector<ParamUpdate> updates;
        for (const std::string& name : all.names()) {
            Tensor p = model.param(name);
            std::vector<double> g(p.numel());
            for (double& v : g) v = rng.next_symmetric(1.0);
            grads.push_back(std::move(g));
            updates.push_back({name, p, grads.back()});
        }
        opt.step(updates, 1e-2);
    }

    const fs::path path = fs::temp_directory_path() / "hift_opt_ckpt.bin";
    save_optimizer(opt, path);

    OptimizerState fresh(OptimKind::adamw, {}, DType::f64);
    load_optimizer(fresh, model, path);
    opt.for_each_slot([&](const std::string& name, const StateSlot& slot) {
        bool matched = false;
        fresh.for_each_slot([&](const std::string& fname, const StateSlot& fslot) {
            if (fname == name && fslot.suffix == slot.suffix) {
                matched = true;
                REQUIRE(fslot.buffer.numel() == slot.buffer.numel());
                for (std::size_t i = 0; i < slot.buffer.numel(); ++i) {
                    CHECK(fslot.buffer.value_at(i) == slot.buffer.value_at(i));  // bitwise
                }
            }
        });
        CHECK(matched);
        CHECK(fresh.step_count(name) == opt.step_count(name));
    });
    fs::remove(path);
}

TEST_CASE("total state bytes after a sweep match the footprint sum for any order") {
    // hift changes residency and timing, never totals
    ModelArch arch;
    arch.vocab = 10;
    arch.seq_len = 4;
    arch.width = 6;
    arch.hidden_units = 3;
    arch.classes = 2;
    arch.dtype = DType::f32;
    LayeredModel model = LayeredModel::build(arch, 9);

    std::size_t footprint_sum = 0;
    model.for_each_param([&](const NamedParam& p) {
        footprint_sum += OptimizerState::state_footprint(OptimKind::adamw, p.tensor.shape(),
                                                         p.tensor.dtype());
    });

    // group-by-group (hift order)
    OptimizerState grouped(OptimKind::adamw, {}, DType::f32);
    for (std::size_t u = 0; u < model.unit_count(); ++u) {
        std::vector<LayerId> group = {model.unit(u)};
        grouped.update_optimizer_parameter(model, model.select_parameters(group), Residency::host,
                                           nullptr);
    }

    // all at once (fpft order)
    OptimizerState whole(OptimKind::adamw, {}, DType::f32);
    whole.update_optimizer_parameter(model, model.all_parameters(), Residency::device, nullptr);

    CHECK(grouped.total_slot_bytes() == footprint_sum);
    CHECK(whole.total_slot_bytes() == footprint_sum);
}
