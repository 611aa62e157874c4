// Acceptance suite: one pass/fail line per criterion, non-zero exit on any
// failure. Heavier end-to-end checks live here; unit suites cover the rest.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "fd_check.hpp"
#include "hift/dataset.hpp"
#include "hift/memory.hpp"
#include "hift/model.hpp"
#include "hift/optim.hpp"
#include "hift/ratio.hpp"
#include "hift/rng.hpp"
#include "hift/schedule.hpp"
#include "hift/tensor.hpp"
#include "hift/trainer.hpp"

using namespace hift;

namespace {

int failures = 0;

void report(int index, const std::string& name, bool pass, const std::string& detail = "") {
    std::printf("[%s] %2d. %s%s%s\n", pass ? "PASS" : "FAIL", index, name.c_str(),
                detail.empty() ? "" : " -- ", detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

TrainConfig classify_config(std::size_t hidden_units, std::size_t steps) {
    TrainConfig c;
    c.arch.input = InputKind::tokens;
    c.arch.vocab = 16;
    c.arch.seq_len = 8;
    c.arch.width = 20;
    c.arch.hidden_units = hidden_units;
    c.arch.hidden_kind = HiddenKind::dense;
    c.arch.classes = 2;
    c.arch.dtype = DType::f64;
    c.task = TaskKind::synthetic_classification;
    c.mode = TrainMode::hift;
    c.m = 1;
    c.optimizer = OptimKind::adamw;
    c.batch_size = 48;
    c.steps = steps;
    c.base_lr = 2.5e-2;
    c.warmup_fraction = 0.06;
    c.decay = Decay::linear;
    c.num_samples = 600;
    c.init_seed = 11;
    c.data_seed = 22;
    c.strategy_seed = 33;
    return c;
}

// --- 1. FPFT-equivalence oracle ------------------------------------------------

void criterion_1() {
    const auto t0 = std::chrono::steady_clock::now();
    TrainConfig cfg;
    cfg.arch.input = InputKind::tokens;
    cfg.arch.vocab = 12;
    cfg.arch.seq_len = 6;
    cfg.arch.width = 8;
    cfg.arch.hidden_units = 1;  // 3 layer units in total
    cfg.arch.classes = 2;
    cfg.arch.dtype = DType::f64;
    cfg.task = TaskKind::synthetic_classification;
    cfg.mode = TrainMode::hift;
    cfg.m = cfg.arch.unit_count();  // k = 1
    cfg.optimizer = OptimKind::adamw;
    cfg.batch_size = 8;
    cfg.steps = 120;
    cfg.base_lr = 5e-3;
    cfg.num_samples = 96;

    std::vector<std::vector<double>> traj_hift;
    auto capture = [](std::vector<std::vector<double>>& sink) {
        return [&sink](std::size_t, const LayeredModel& model) {
            std::vector<double> flat;
            model.for_each_param([&](const NamedParam& p) {
                flat.insert(flat.end(), p.tensor.values().begin(), p.tensor.values().end());
            });
            sink.push_back(std::move(flat));
        };
    };
    train_with_observer(cfg, capture(traj_hift));

    TrainConfig fpft_cfg = cfg;
    fpft_cfg.mode = TrainMode::fpft;
    std::vector<std::vector<double>> traj_fpft;
    train_with_observer(fpft_cfg, capture(traj_fpft));

    bool pass = traj_hift.size() == 120 && traj_fpft.size() == 120;
    for (std::size_t t = 0; pass && t < traj_hift.size(); ++t) {
        pass = traj_hift[t].size() == traj_fpft[t].size();
        for (std::size_t i = 0; pass && i < traj_hift[t].size(); ++i) {
            pass = traj_hift[t][i] == traj_fpft[t][i];  // bitwise
        }
    }
    const double secs = seconds_since(t0);
    pass = pass && secs < 10.0;
    char detail[128];
    std::snprintf(detail, sizeof(detail),
                  "120 steps bitwise-identical (k=1, f64, adamw), %.2fs", secs);
    report(1, "fpft-equivalence of hift with m=n", pass, detail);
}

// --- 2. closed-form memory regression -------------------------------------------

void criterion_2() {
    const Ratio z1(2608, 100);  // 26.08 in GiB units
    bool pass = true;

    const auto fpft = estimate_fpft(z1, OptimKind::adamw, PrecisionMode::fp32);
    pass = pass && fpft.total == Ratio(10432, 100);  // exactly 104.32

    // k=1 degeneracy across all five optimizers (per-model path covers the
    // factored adafactor state)
    ModelArch arch;
    arch.vocab = 12;
    arch.seq_len = 4;
    arch.width = 8;
    arch.hidden_units = 3;
    arch.classes = 2;
    arch.dtype = DType::f32;
    const LayeredModel model = LayeredModel::build(arch, 1);
    for (OptimKind kind : {OptimKind::sgd, OptimKind::sgdm, OptimKind::adagrad,
                           OptimKind::adafactor, OptimKind::adamw}) {
        const auto f = estimate_fpft_for_model(model, kind, PrecisionMode::fp32);
        const auto h = estimate_hift_for_model(model, kind, PrecisionMode::fp32,
                                               model.unit_count());
        pass = pass && f.total == h.total && h.savings_vs_fpft == Ratio(0);
    }

    const auto k34 = estimate_hift(z1, 34, OptimKind::adamw, PrecisionMode::fp32);
    pass = pass && k34.total == Ratio(37, 34) * z1;
    pass = pass && k34.savings_vs_fpft == Ratio(99, 34) * z1;
    pass = pass && k34.note.find("31.13") != std::string::npos &&
           k34.note.find("73.19") != std::string::npos;

    report(2, "closed-form estimates: 104.32 exact, k=1 degeneracy, k=34 note", pass,
           "avg=" + k34.total.str() + " saved=" + k34.savings_vs_fpft.str());
}

// --- 3. measured vs analytic memory ----------------------------------------------

void criterion_3() {
    const auto t0 = std::chrono::steady_clock::now();
    TrainConfig base;
    base.arch.input = InputKind::tokens;
    base.arch.vocab = 16;
    base.arch.seq_len = 6;
    base.arch.width = 12;
    base.arch.hidden_units = 6;  // n = 8 units
    base.arch.classes = 2;
    base.arch.dtype = DType::f32;
    base.task = TaskKind::synthetic_classification;
    base.optimizer = OptimKind::adamw;
    base.batch_size = 8;
    base.num_samples = 64;

    TrainConfig fpft_cfg = base;
    fpft_cfg.mode = TrainMode::fpft;
    fpft_cfg.m = base.arch.unit_count();
    fpft_cfg.steps = 8;
    const RunReport fpft = train_fpft(fpft_cfg);

    bool pass = true;
    std::string detail;
    const std::size_t n = base.arch.unit_count();
    for (std::size_t m : {std::size_t{4}, std::size_t{2}, std::size_t{1}}) {
        TrainConfig cfg = base;
        cfg.mode = TrainMode::hift;
        cfg.m = m;
        const std::size_t k = (n % m == 0) ? n / m : n / m + 1;
        cfg.steps = 2 * k;
        const RunReport run = train_hift(cfg);

        // average of the per-step param+grad+state peaks over the first sweep
        double avg = 0.0;
        for (std::size_t i = 0; i < k; ++i) avg += static_cast<double>(run.steps[i].device_pgs_peak_bytes);
        avg /= static_cast<double>(k);
        const double formula = static_cast<double>(k + 3) / static_cast<double>(k) *
                               static_cast<double>(run.total_param_bytes);
        const double rel = std::abs(avg / formula - 1.0);
        pass = pass && rel < 0.01;

        // strict peak dominance for k > 1
        pass = pass && run.memory.device_pgs_peak < fpft.memory.device_pgs_peak;
        detail += "k=" + std::to_string(k) + " rel=" + std::to_string(rel) + " ";
    }
    const double secs = seconds_since(t0);
    pass = pass && secs < 60.0;
    report(3, "measured average matches (k+3)/k and hift peak < fpft peak", pass, detail);
}

// --- 4. gradient correctness over 50 random instances per primitive ---------------

void criterion_4() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(777);
    const double tol = 1e-4;
    double worst = 0.0;
    std::string worst_op = "none";
    auto run = [&](const char* op, const std::function<double(Rng&)>& one) {
        for (int i = 0; i < 50; ++i) {
            const double err = one(rng);
            if (err > worst) {
                worst = err;
                worst_op = op;
            }
        }
    };

    run("matmul", [](Rng& r) {
        std::vector<Tensor> wrt = {fdtest::random_tensor(r, {3, 4}), fdtest::random_tensor(r, {4, 2})};
        const auto s = r.next_u64();
        return fdtest::fd_check(wrt, [&](Tape& t) {
            return fdtest::weighted_sum(t, matmul(t, wrt[0], wrt[1]), s);
        }).max_rel_err;
    });
    run("transpose", [](Rng& r) {
        std::vector<Tensor> wrt = {fdtest::random_tensor(r, {3, 5})};
        const auto s = r.next_u64();
        return fdtest::fd_check(wrt, [&](Tape& t) {
            return fdtest::weighted_sum(t, transpose(t, wrt[0]), s);
        }).max_rel_err;
    });
    run("add", [](Rng& r) {
        std::vector<Tensor> wrt = {fdtest::random_tensor(r, {2, 4}), fdtest::random_tensor(r, {2, 4})};
        const auto s = r.next_u64();
        return fdtest::fd_check(wrt, [&](Tape& t) {
            return fdtest::weighted_sum(t, add(t, wrt[0], wrt[1]), s);
        }).max_rel_err;
    });
    run("hadamard", [](Rng& r) {
        std::vector<Tensor> wrt = {fdtest::random_tensor(r, {2, 4}), fdtest::random_tensor(r, {2, 4})};
        const auto s = r.next_u64();
        return fdtest::fd_check(wrt, [&](Tape& t) {
            return fdtest::weighted_sum(t, hadamard(t, wrt[0], wrt[1]), s);
        }).max_rel_err;
    });
    run("scale", [](Rng& r) {
        std::vector<Tensor> wrt = {fdtest::random_tensor(r, {3, 3})};
        const auto s = r.next_u64();
        return fdtest::fd_check(wrt, [&](Tape& t) {
            return fdtest::weighted_sum(t, scale(t, wrt[0], -0.37), s);
        }).max_rel_err;
    });
    run("bias_add", [](Rng& r) {
        std::vector<Tensor> wrt = {fdtest::random_tensor(r, {4, 3}), fdtest::random_tensor(r, {3})};
        const auto s = r.next_u64();
        return fdtest::fd_check(wrt, [&](Tape& t) {
            return fdtest::weighted_sum(t, bias_add(t, wrt[0], wrt[1]), s);
        }).max_rel_err;
    });
    run("add_positional", [](Rng& r) {
        std::vector<Tensor> wrt = {fdtest::random_tensor(r, {6, 3}), fdtest::random_tensor(r, {2, 3})};
        const auto s = r.next_u64();
        return fdtest::fd_check(wrt, [&](Tape& t) {
            return fdtest::weighted_sum(t, add_positional(t, wrt[0], wrt[1]), s);
        }).max_rel_err;
    });
    run("relu", [](Rng& r) {
        std::vector<Tensor> wrt = {fdtest::random_tensor_off_kink(r, {3, 4})};
        const auto s = r.next_u64();
        return fdtest::fd_check(wrt, [&](Tape& t) {
            return fdtest::weighted_sum(t, relu(t, wrt[0]), s);
        }).max_rel_err;
    });
    run("gelu", [](Rng& r) {
        std::vector<Tensor> wrt = {fdtest::random_tensor(r, {3, 4})};
        const auto s = r.next_u64();
        return fdtest::fd_check(wrt, [&](Tape& t) {
            return fdtest::weighted_sum(t, gelu(t, wrt[0]), s);
        }).max_rel_err;
    });
    run("layer_norm", [](Rng& r) {
        std::vector<Tensor> wrt = {fdtest::random_tensor(r, {3, 5}), fdtest::random_tensor(r, {5}),
                                   fdtest::random_tensor(r, {5})};
        const auto s = r.next_u64();
        return fdtest::fd_check(wrt, [&](Tape& t) {
            return fdtest::weighted_sum(t, layer_norm(t, wrt[0], wrt[1], wrt[2]), s);
        }).max_rel_err;
    });
    run("softmax_rows", [](Rng& r) {
        std::vector<Tensor> wrt = {fdtest::random_tensor(r, {3, 4})};
        const auto s = r.next_u64();
        return fdtest::fd_check(wrt, [&](Tape& t) {
            return fdtest::weighted_sum(t, softmax_rows(t, wrt[0]), s);
        }).max_rel_err;
    });
    run("slice_rows", [](Rng& r) {
        std::vector<Tensor> wrt = {fdtest::random_tensor(r, {6, 3})};
        const auto s = r.next_u64();
        return fdtest::fd_check(wrt, [&](Tape& t) {
            return fdtest::weighted_sum(t, slice_rows(t, wrt[0], 1, 4), s);
        }).max_rel_err;
    });
    run("concat_rows", [](Rng& r) {
        std::vector<Tensor> wrt = {fdtest::random_tensor(r, {2, 3}), fdtest::random_tensor(r, {3, 3})};
        const auto s = r.next_u64();
        return fdtest::fd_check(wrt, [&](Tape& t) {
            std::vector<Tensor> parts = {wrt[0], wrt[1]};
            return fdtest::weighted_sum(t, concat_rows(t, parts), s);
        }).max_rel_err;
    });
    run("mean_pool", [](Rng& r) {
        std::vector<Tensor> wrt = {fdtest::random_tensor(r, {6, 4})};
        const auto s = r.next_u64();
        return fdtest::fd_check(wrt, [&](Tape& t) {
            return fdtest::weighted_sum(t, mean_pool(t, wrt[0], 2), s);
        }).max_rel_err;
    });
    run("embedding_lookup", [](Rng& r) {
        std::vector<Tensor> wrt = {fdtest::random_tensor(r, {7, 4})};
        std::vector<std::int64_t> ids;
        for (int i = 0; i < 5; ++i) ids.push_back(static_cast<std::int64_t>(r.next_below(7)));
        const auto s = r.next_u64();
        return fdtest::fd_check(wrt, [&](Tape& t) {
            return fdtest::weighted_sum(t, embedding_lookup(t, wrt[0], ids), s);
        }).max_rel_err;
    });
    run("softmax_cross_entropy", [](Rng& r) {
        std::vector<Tensor> wrt = {fdtest::random_tensor(r, {4, 3})};
        std::vector<std::int64_t> labels;
        for (int i = 0; i < 4; ++i) labels.push_back(static_cast<std::int64_t>(r.next_below(3)));
        return fdtest::fd_check(wrt, [&](Tape& t) {
            return softmax_cross_entropy(t, wrt[0], labels);
        }).max_rel_err;
    });
    run("mse_loss", [](Rng& r) {
        std::vector<Tensor> wrt = {fdtest::random_tensor(r, {3, 2})};
        Tensor target = fdtest::random_tensor(r, {3, 2});
        return fdtest::fd_check(wrt, [&](Tape& t) {
            return mse_loss(t, wrt[0], target);
        }).max_rel_err;
    });
    run("sum_all", [](Rng& r) {
        std::vector<Tensor> wrt = {fdtest::random_tensor(r, {4, 4})};
        return fdtest::fd_check(wrt, [&](Tape& t) {
            return sum_all(t, wrt[0]);
        }).max_rel_err;
    });

    const double secs = seconds_since(t0);
    const bool pass = worst < tol && secs < 30.0;
    char detail[128];
    std::snprintf(detail, sizeof(detail), "worst rel err %.3e (%s), %.2fs", worst,
                  worst_op.c_str(), secs);
    report(4, "finite differences over 50 instances per primitive", pass, detail);
}

// --- 5. optimizer oracles ------------------------------------------------------

void criterion_5() {
    bool pass = true;
    auto drive = [&](OptimKind kind, Hyperparams hp, std::vector<std::size_t> shape,
                     std::vector<double> w0, const std::vector<std::vector<double>>& grads,
                     const std::vector<std::vector<double>>& expected, double lr) {
        OptimizerState opt(kind, hp, DType::f64);
        Tensor w = Tensor::from_data(std::move(shape), std::move(w0), DType::f64);
        std::vector<NamedTensor> named = {{"w", w}};
        opt.update_optimizer_parameter(named, Residency::device, nullptr);
        for (std::size_t t = 0; t < grads.size(); ++t) {
            ParamUpdate u{"w", w, grads[t]};
            opt.step(std::span<ParamUpdate>(&u, 1), lr);
            for (std::size_t i = 0; i < expected[t].size(); ++i) {
                pass = pass && std::abs(w.value_at(i) - expected[t][i]) < 1e-12;
            }
        }
    };

    drive(OptimKind::sgd, {}, {1}, {1.0}, {{0.5}}, {{0.95}}, 0.1);
    drive(OptimKind::sgdm, {}, {1}, {1.0}, {{1.0}, {-0.5}, {0.25}},
          {{0.9}, {0.86}, {0.799}}, 0.1);
    {
        Hyperparams hp;
        hp.eps = 0.0;
        drive(OptimKind::adagrad, hp, {1}, {0.0}, {{1.0}, {1.0}},
              {{-1.0}, {-1.0 - 1.0 / std::sqrt(2.0)}}, 1.0);
    }
    drive(OptimKind::adamw, {}, {1}, {1.0}, {{1.0}, {-0.5}, {0.25}},
          {{0.90000000099999999}, {0.87336629737090321}, {0.83932338306484655}}, 0.1);
    drive(OptimKind::adafactor, {}, {2, 2}, {1.0, 2.0, -1.0, 0.5},
          {{0.5, -0.25, 1.0, 0.75}, {-0.2, 0.4, 0.3, -0.6}, {0.1, 0.2, -0.3, 0.45}},
          {{0.89045548849896683, 2.0774596669241485, -1.0979795897113271, 0.39607695154586736},
           {0.94627212089951596, 1.9617460034941585, -1.1413559992224229, 0.48600074370425939},
           {0.91078180077128579, 1.8936740079466512, -1.0880659397629129, 0.4093412346364188}},
          0.1);
    drive(OptimKind::adafactor, {}, {3}, {1.0, -2.0, 0.5},
          {{0.5, 0.25, -1.0}, {0.1, -0.2, 0.3}, {-0.4, 0.6, 0.2}},
          {{0.9, -2.1, 0.6},
           {0.87014009911434598, -2.0101766505652829, 0.55657835049166204},
           {0.97409711111574959, -2.1442916137313048, 0.52184916520440494}},
          0.1);

    report(5, "hand-derived optimizer sequences match to 1e-12", pass);
}

// --- 6. order invariance --------------------------------------------------------

void criterion_6() {
    const auto t0 = std::chrono::steady_clock::now();
    TrainConfig base = classify_config(4, 0);  // n = 6 units
    const std::size_t n = base.arch.unit_count();
    base.steps = 30 * n;  // 30 sweeps at m=1

    std::vector<double> accs;
    std::string detail;
    for (Strategy s : {Strategy::bottom2up, Strategy::top2down, Strategy::random_once}) {
        TrainConfig cfg = base;
        cfg.strategy = s;
        const RunReport r = train_hift(cfg);
        accs.push_back(r.eval_metric);
        detail += std::string(strategy_name(s)) + "=" + std::to_string(r.eval_metric) + " ";
    }
    const double spread = *std::max_element(accs.begin(), accs.end()) -
                          *std::min_element(accs.begin(), accs.end());
    const double secs = seconds_since(t0);
    const bool pass = spread <= 0.02 + 1e-12 && secs < 300.0;
    detail += "spread=" + std::to_string(spread);
    report(6, "b2u/t2d/random accuracies within 2 points (30 sweeps, m=1)", pass, detail);
}

// --- 7. grouping robustness ------------------------------------------------------

void criterion_7() {
    // Paired at equal sweep counts: under the delayed-lr rule every
    // configuration then sees the same per-parameter update schedule.
    const auto t0 = std::chrono::steady_clock::now();
    TrainConfig base = classify_config(4, 0);
    const std::size_t n = base.arch.unit_count();
    const std::size_t sweeps = 40;

    TrainConfig fpft_cfg = base;
    fpft_cfg.mode = TrainMode::fpft;
    fpft_cfg.m = n;
    fpft_cfg.steps = sweeps;
    const RunReport fpft = train_fpft(fpft_cfg);

    bool pass = fpft.eval_metric > 0.0;
    std::string detail = "fpft=" + std::to_string(fpft.eval_metric) + " ";
    for (std::size_t m : {std::size_t{1}, std::size_t{2}, n / 2, n}) {
        TrainConfig cfg = base;
        cfg.m = m;
        const std::size_t k = (n % m == 0) ? n / m : n / m + 1;
        cfg.steps = sweeps * k;
        const RunReport r = train_hift(cfg);
        pass = pass && r.eval_metric >= 0.95 * fpft.eval_metric;
        detail += "m" + std::to_string(m) + "=" + std::to_string(r.eval_metric) + " ";
    }
    const double secs = seconds_since(t0);
    pass = pass && secs < 600.0;
    report(7, "m in {1,2,n/2,n} all reach 95% of fpft accuracy", pass, detail);
}

// --- 8. delayed-lr contract (property) --------------------------------------------

void criterion_8() {
    Rng rng(4242);
    bool pass = true;
    for (int trial = 0; trial < 200 && pass; ++trial) {
        const std::size_t n = 3 + rng.next_below(12);
        const std::size_t m = 1 + rng.next_below(n);
        const std::size_t k = (n % m == 0) ? n / m : n / m + 1;
        const std::size_t sweeps = 1 + rng.next_below(6);
        const std::size_t T = k * sweeps + rng.next_below(k);

        ModelArch arch;
        arch.vocab = 8;
        arch.seq_len = 4;
        arch.width = 4;
        arch.hidden_units = n - 2;
        arch.classes = 2;
        arch.dtype = DType::f32;
        LayeredModel model = LayeredModel::build(arch, 1);
        const Strategy strat = static_cast<Strategy>(rng.next_below(3));
        GroupSchedule sched = GroupSchedule::init(model, strat, m, rng.next_u64());
        LrSchedule lrs{1e-2, 0.0, Decay::linear, sweeps + 1, 0};

        std::set<std::string> sweep_cover;
        double sweep_lr = lrs.value();
        for (std::size_t t = 1; t <= T; ++t) {
            const auto group = sched.next_group();
            // lr must not change inside a sweep
            pass = pass && lrs.value() == sweep_lr;
            for (const auto& id : group) {
                pass = pass && sweep_cover.insert(id.name).second;  // disjoint within sweep
            }
            if (sched.is_all_layer_update()) {
                pass = pass && sweep_cover.size() == n;  // exact partition
                sweep_cover.clear();
                lrs.advance_sweep();
                sweep_lr = lrs.value();
            }
        }
    }

    // observable on a real run: lr column changes only at sweep boundaries
    TrainConfig cfg = classify_config(3, 0);  // n=5
    cfg.m = 2;                                // k=3, ragged
    cfg.steps = 12;
    cfg.decay = Decay::linear;
    const RunReport r = train_hift(cfg);
    for (std::size_t i = 0; i < r.steps.size() && pass; ++i) {
        pass = r.steps[i].lr == r.steps[(i / 3) * 3].lr;
    }
    report(8, "lr changes only at sweep boundaries; sweeps partition layers", pass);
}

// --- 9. masked-update safety (fuzzed) ----------------------------------------------

void criterion_9() {
    Rng rng(31337);
    bool pass = true;
    std::string detail;
    for (int trial = 0; trial < 10 && pass; ++trial) {
        TrainConfig cfg = classify_config(1 + rng.next_below(4), 0);
        cfg.arch.dtype = DType::f64;
        cfg.optimizer = static_cast<OptimKind>(trial % 5);  // cover every kind twice
        cfg.strategy = static_cast<Strategy>(rng.next_below(3));
        cfg.m = 1 + rng.next_below(cfg.arch.unit_count());
        const std::size_t k = (cfg.arch.unit_count() % cfg.m == 0)
                                  ? cfg.arch.unit_count() / cfg.m
                                  : cfg.arch.unit_count() / cfg.m + 1;
        cfg.steps = 2 * k;
        cfg.num_samples = 64;
        cfg.base_lr = 1e-3;
        cfg.init_seed = rng.next_u64();
        cfg.data_seed = rng.next_u64();
        cfg.strategy_seed = rng.next_u64();

        // frozen-parameter checksums across each step
        LayeredModel shadow = LayeredModel::build(cfg.arch, cfg.init_seed);
        GroupSchedule shadow_sched =
            GroupSchedule::init(shadow, cfg.strategy, cfg.m, cfg.strategy_seed);
        std::vector<std::vector<double>> prev;
        bool first = true;
        const RunReport r = train_with_observer(cfg, [&](std::size_t, const LayeredModel& model) {
            const auto group = shadow_sched.next_group();
            const ParamSet active = shadow.select_parameters(group);
            if (!first) {
                // parameters outside the active group must equal the previous snapshot
                std::size_t idx = 0;
                model.for_each_param([&](const NamedParam& p) {
                    if (!active.contains(p.qualified)) {
                        for (std::size_t i = 0; i < p.tensor.numel(); ++i) {
                            pass = pass && prev[idx][i] == p.tensor.value_at(i);
                        }
                    }
                    ++idx;
                });
            }
            prev.clear();
            model.for_each_param([&](const NamedParam& p) {
                prev.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
            });
            first = false;
        });

        if (cfg.optimizer == OptimKind::sgd) {
            pass = pass && r.memory.total_transfer_bytes == 0 &&
                   r.memory.peak_step_transfer_bytes == 0;
        }
        detail += std::string(optim_kind_name(cfg.optimizer)) + " ";
    }

    // stateless kinds must never touch the interconnect, fuzz draws aside
    TrainConfig sgd_cfg = classify_config(2, 0);
    sgd_cfg.optimizer = OptimKind::sgd;
    sgd_cfg.steps = 8;
    sgd_cfg.base_lr = 1e-3;
    const RunReport sgd_run = train_hift(sgd_cfg);
    const bool sgd_silent = sgd_run.memory.total_transfer_bytes == 0 &&
                            sgd_run.memory.peak_step_transfer_bytes == 0 &&
                            sgd_run.memory.device_peak[static_cast<std::size_t>(Category::state)] == 0;
    pass = pass && sgd_silent;
    detail += sgd_silent ? "sgd-transfers=0" : "sgd-transfers!=0";
    report(9, "fuzzed runs: frozen params unchanged; sgd logs zero transfers", pass, detail);
}

// --- 10. trainable-peak monotonicity -----------------------------------------------

void criterion_10() {
    bool pass = true;
    for (std::size_t hidden : {std::size_t{2}, std::size_t{5}, std::size_t{9}}) {
        ModelArch arch;
        arch.vocab = 24;
        arch.seq_len = 6;
        arch.width = 10;
        arch.hidden_units = hidden;
        arch.classes = 4;
        arch.dtype = DType::f32;
        LayeredModel model = LayeredModel::build(arch, 1);
        const std::size_t n = model.unit_count();
        pass = pass && trainable_peak_fraction(model, n) == 1.0;
        double prev = 0.0;
        for (std::size_t m = 1; m <= n; ++m) {
            const double f = trainable_peak_fraction(model, m);
            pass = pass && f >= prev && f > 0.0 && f <= 1.0;
            prev = f;
        }
    }
    report(10, "trainable peak fraction is 1 at m=n and non-increasing as m shrinks", pass);
}

}  // namespace

int main() {
    std::printf("acceptance suite\n");
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    criterion_8();
    criterion_9();
    criterion_10();
    if (failures == 0) {
        std::printf("all criteria passed\n");
        return 0;
    }
    std::printf("%d criteria FAILED\n", failures);
    return 1;
}
