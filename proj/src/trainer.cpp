#include "hift/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "hift/checkpoint.hpp"
#include "hift/tensor.hpp"

namespace hift {

const char* train_mode_name(TrainMode m) { return m == TrainMode::hift ? "hift" : "fpft"; }

TrainMode train_mode_from_name(const std::string& name) {
    if (name == "hift") return TrainMode::hift;
    if (name == "fpft") return TrainMode::fpft;
    throw ConfigError("unknown mode: " + name);
}

void TrainConfig::validate() const {
    arch.validate();
    hyper.validate(optimizer);
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (steps < 1) throw ConfigError("steps must be at least 1");
    if (base_lr <= 0.0) throw ConfigError("base_lr must be positive");
    if (warmup_fraction < 0.0 || warmup_fraction > 1.0) {
        throw ConfigError("warmup_fraction must lie in [0,1]");
    }
    const std::size_t n = arch.unit_count();
    if (m < 1 || m > n) {
        throw ConfigError("m=" + std::to_string(m) + " outside [1, " + std::to_string(n) + "]");
    }
    const std::size_t k = (n % m == 0) ? n / m : n / m + 1;
    if (steps < k) {
        throw ConfigError("step budget " + std::to_string(steps) +
                          " is smaller than one full sweep of k=" + std::to_string(k) + " groups");
    }
    if (mixed_precision && arch.dtype != DType::f16) {
        throw ConfigError("mixed precision requires arch dtype f16 (working weights)");
    }
    if (task == TaskKind::csv_classification && csv_path.empty()) {
        throw ConfigError("csv task requires csv_path");
    }
}

std::string TrainConfig::to_json() const {
    nlohmann::json j;
    j["arch"] = nlohmann::json::parse(arch_to_text(arch));
    j["task"] = task_name(task);
    j["mode"] = train_mode_name(mode);
    j["strategy"] = strategy_name(strategy);
    j["m"] = m;
    j["optimizer"] = optim_kind_name(optimizer);
    j["hyper"] = {{"beta1", hyper.beta1},
                  {"beta2", hyper.beta2},
                  {"eps", hyper.eps},
                  {"weight_decay", hyper.weight_decay},
                  {"momentum", hyper.momentum}};
    j["mixed_precision"] = mixed_precision;
    j["batch_size"] = batch_size;
    j["steps"] = steps;
    j["base_lr"] = base_lr;
    j["warmup_fraction"] = warmup_fraction;
    j["decay"] = decay_name(decay);
    j["grad_clip"] = grad_clip;
    j["init_seed"] = init_seed;
    j["data_seed"] = data_seed;
    j["strategy_seed"] = strategy_seed;
    j["num_samples"] = num_samples;
    j["csv_path"] = csv_path.string();
    j["label_column"] = label_column;
    return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
    TrainConfig c;
    try {
        if (j.contains("arch")) c.arch = arch_from_text(j["arch"].dump());
        if (j.contains("task")) c.task = task_from_name(j["task"].get<std::string>());
        if (j.contains("mode")) c.mode = train_mode_from_name(j["mode"].get<std::string>());
        if (j.contains("strategy")) c.strategy = strategy_from_name(j["strategy"].get<std::string>());
        if (j.contains("m")) c.m = j["m"].get<std::size_t>();
        if (j.contains("optimizer")) c.optimizer = optim_kind_from_name(j["optimizer"].get<std::string>());
        if (j.contains("hyper")) {
            const auto& h = j["hyper"];
            if (h.contains("beta1")) c.hyper.beta1 = h["beta1"].get<double>();
            if (h.contains("beta2")) c.hyper.beta2 = h["beta2"].get<double>();
            if (h.contains("eps")) c.hyper.eps = h["eps"].get<double>();
            if (h.contains("weight_decay")) c.hyper.weight_decay = h["weight_decay"].get<double>();
            if (h.contains("momentum")) c.hyper.momentum = h["momentum"].get<double>();
        }
        if (j.contains("mixed_precision")) c.mixed_precision = j["mixed_precision"].get<bool>();
        if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<std::size_t>();
        if (j.contains("steps")) c.steps = j["steps"].get<std::size_t>();
        if (j.contains("base_lr")) c.base_lr = j["base_lr"].get<double>();
        if (j.contains("warmup_fraction")) c.warmup_fraction = j["warmup_fraction"].get<double>();
        if (j.contains("decay")) c.decay = decay_from_name(j["decay"].get<std::string>());
        if (j.contains("grad_clip")) c.grad_clip = j["grad_clip"].get<double>();
        if (j.contains("init_seed")) c.init_seed = j["init_seed"].get<std::uint64_t>();
        if (j.contains("data_seed")) c.data_seed = j["data_seed"].get<std::uint64_t>();
        if (j.contains("strategy_seed")) c.strategy_seed = j["strategy_seed"].get<std::uint64_t>();
        if (j.contains("num_samples")) c.num_samples = j["num_samples"].get<std::size_t>();
        if (j.contains("csv_path")) c.csv_path = j["csv_path"].get<std::string>();
        if (j.contains("label_column")) c.label_column = j["label_column"].get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

TrainConfig TrainConfig::from_json_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config: " + path.string());
    std::ostringstream buf;
    buf << is.rdbuf();
    return from_json(buf.str());
}

// --- run report ---------------------------------------------------------------

std::string RunReport::to_json() const {
    nlohmann::json j;
    j["config"] = nlohmann::json::parse(config.to_json());
    j["final_loss"] = final_loss;
    j["eval_metric"] = eval_metric;
    j["eval_is_accuracy"] = eval_is_accuracy;
    j["group_count"] = group_count;
    j["total_param_elements"] = total_param_elements;
    j["total_param_bytes"] = total_param_bytes;
    nlohmann::json steps_json = nlohmann::json::array();
    for (const StepRecord& s : steps) {
        steps_json.push_back({{"step", s.step},
                              {"loss", s.loss},
                              {"lr", s.lr},
                              {"trainable_params", s.trainable_params},
                              {"device_pgs_peak_bytes", s.device_pgs_peak_bytes},
                              {"device_total_peak_bytes", s.device_total_peak_bytes},
                              {"transfer_bytes", s.transfer_bytes}});
    }
    j["steps"] = std::move(steps_json);
    nlohmann::json mem;
    for (Category c : kAllCategories) {
        mem[category_name(c)] = {
            {"host_peak", memory.host_peak[static_cast<std::size_t>(c)]},
            {"device_peak", memory.device_peak[static_cast<std::size_t>(c)]}};
    }
    mem["device_total_peak"] = memory.device_total_peak;
    mem["device_pgs_peak"] = memory.device_pgs_peak;
    mem["peak_step_transfer_bytes"] = memory.peak_step_transfer_bytes;
    mem["total_transfer_bytes"] = memory.total_transfer_bytes;
    j["memory"] = std::move(mem);
    return j.dump(2);
}

RunReport RunReport::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("report: ") + e.what());
    }
    RunReport r;
    try {
        r.config = TrainConfig::from_json(j["config"].dump());
        r.final_loss = j["final_loss"].get<double>();
        r.eval_metric = j["eval_metric"].get<double>();
        r.eval_is_accuracy = j["eval_is_accuracy"].get<bool>();
        r.group_count = j["group_count"].get<std::size_t>();
        r.total_param_elements = j["total_param_elements"].get<std::size_t>();
        r.total_param_bytes = j["total_param_bytes"].get<std::size_t>();
        for (const auto& s : j["steps"]) {
            StepRecord rec;
            rec.step = s["step"].get<std::size_t>();
            rec.loss = s["loss"].get<double>();
            rec.lr = s["lr"].get<double>();
            rec.trainable_params = s["trainable_params"].get<std::size_t>();
            rec.device_pgs_peak_bytes = s["device_pgs_peak_bytes"].get<std::size_t>();
            rec.device_total_peak_bytes = s["device_total_peak_bytes"].get<std::size_t>();
            rec.transfer_bytes = s["transfer_bytes"].get<std::size_t>();
            r.steps.push_back(rec);
        }
        const auto& mem = j["memory"];
        for (Category c : kAllCategories) {
            const auto& m = mem[category_name(c)];
            r.memory.host_peak[static_cast<std::size_t>(c)] = m["host_peak"].get<std::size_t>();
            r.memory.device_peak[static_cast<std::size_t>(c)] = m["device_peak"].get<std::size_t>();
        }
        r.memory.device_total_peak = mem["device_total_peak"].get<std::size_t>();
        r.memory.device_pgs_peak = mem["device_pgs_peak"].get<std::size_t>();
        r.memory.peak_step_transfer_bytes = mem["peak_step_transfer_bytes"].get<std::size_t>();
        r.memory.total_transfer_bytes = mem["total_transfer_bytes"].get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("report: ") + e.what());
    }
    return r;
}

RunReport RunReport::from_json_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open report: " + path.string());
    std::ostringstream buf;
    buf << is.rdbuf();
    return RunReport::from_json(buf.str());
}

// --- training loop --------------------------------------------------------------

namespace {

Tensor batch_loss(const LayeredModel& model, Tape& tape, const Batch& batch, TaskKind task) {
    const Tensor out = model.forward(tape, batch);
    if (task == TaskKind::synthetic_regression) {
        Tensor target = Tensor::from_data({batch.size, model.arch().out_dim}, batch.targets,
                                          model.arch().dtype);
        return mse_loss(tape, out, target);
    }
    return softmax_cross_entropy(tape, out, batch.labels);
}

double evaluate(const LayeredModel& model, const Dataset& data, TaskKind task) {
    Tape tape;  // nothing trainable during eval, so nothing is recorded
    const Batch eval = data.eval_examples();
    const Tensor out = model.forward(tape, eval);
    if (task == TaskKind::synthetic_regression) {
        Tensor target =
            Tensor::from_data({eval.size, model.arch().out_dim}, eval.targets, model.arch().dtype);
        const Tensor loss = mse_loss(tape, out, target);
        return loss.scalar_value();
    }
    const std::size_t classes = model.arch().classes;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < eval.size; ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < classes; ++c) {
            if (out.value_at(i * classes + c) > out.value_at(i * classes + best)) best = c;
        }
        if (static_cast<std::int64_t>(best) == eval.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(eval.size);
}

void clip_gradients(const LayeredModel& model, const ParamSet& active, double max_norm) {
    double sq = 0.0;
    for (const std::string& name : active.names()) {
        const Tensor p = model.param(name);
        if (!p.has_grad()) continue;
        for (double g : p.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm <= max_norm) return;
    const double factor = max_norm / norm;
    for (const std::string& name : active.names()) {
        const Tensor p = model.param(name);
        if (!p.has_grad()) continue;
        auto& g = p.impl()->grad;
        for (double& v : g) v = quantize(v * factor, p.dtype());
    }
}

// Working f16 weights shadowed by f32 master copies; the optimizer updates the
// master, and the working copy is re-quantized afterwards.
struct MasterCopies {
    std::map<std::string, Tensor> tensors;
    std::size_t total_bytes{0};
};

MasterCopies make_masters(const LayeredModel& model) {
    MasterCopies mc;
    model.for_each_param([&](const NamedParam& p) {
        Tensor master = Tensor::zeros(p.tensor.shape(), DType::f32);
        master.assign(p.tensor.values());
        mc.total_bytes += master.data_bytes();
        mc.tensors.emplace(p.qualified, std::move(master));
    });
    return mc;
}

RunReport run_training(const TrainConfig& config, const StepObserver& observer) {
    config.validate();
    const bool hift = config.mode == TrainMode::hift;

    LayeredModel model = LayeredModel::build(config.arch, config.init_seed);

    DatasetSpec dspec;
    dspec.task = config.task;
    dspec.data_seed = config.data_seed;
    dspec.num_samples = config.num_samples;
    dspec.csv_path = config.csv_path;
    dspec.label_column = config.label_column;
    Dataset data = Dataset::make(dspec, config.arch);

    const std::size_t n = model.unit_count();
    const std::size_t m = hift ? config.m : n;
    GroupSchedule sched = GroupSchedule::init(
        model, hift ? config.strategy : Strategy::bottom2up, m, config.strategy_seed);
    const std::size_t k = sched.group_count();

    LrSchedule lrs;
    lrs.base_lr = config.base_lr;
    lrs.warmup_fraction = config.warmup_fraction;
    lrs.decay = config.decay;
    lrs.total_sweeps = (config.steps + k - 1) / k;

    const DType state_dtype = config.mixed_precision ? DType::f32 : config.arch.dtype;
    OptimizerState optim(config.optimizer, config.hyper, state_dtype);

    MemoryLedger ledger;
    ledger.begin_step(0);
    ledger.on_alloc(Category::param, Placement::device, model.param_bytes());

    MasterCopies masters;
    if (config.mixed_precision) {
        masters = make_masters(model);
        // FPFT keeps every master on the device; HiFT stages them from the host.
        ledger.on_alloc(Category::master_copy, hift ? Placement::host : Placement::device,
                        masters.total_bytes);
    }

    // HiFT stages optimizer state host-side and moves the active group in and
    // out; the baseline allocates state directly on the device.
    const Residency state_home = hift ? Residency::host : Residency::device;

    RunReport report;
    report.config = config;
    report.group_count = hift ? k : 1;
    report.total_param_elements = model.param_element_count();
    report.total_param_bytes = model.param_bytes();

    for (std::size_t t = 1; t <= config.steps; ++t) {
        ledger.begin_step(t);

        // a) freeze everything; b) sample the batch
        model.freeze_all();
        const Batch batch = data.next_batch(config.batch_size);

        // c, d) rotate the queue; e, f) select and unfreeze the group
        const std::vector<LayerId> group = sched.next_group();
        const ParamSet active = model.select_parameters(group);
        model.set_trainable(active, true);

        // g) point the optimizer at the active set (lazy state allocation)
        optim.update_optimizer_parameter(model, active, state_home, &ledger);

        // h) forward pass, recording only the trainable subgraph
        Tape tape;
        const Tensor loss = batch_loss(model, tape, batch, config.task);
        const double loss_value = loss.scalar_value();
        if (!std::isfinite(loss_value)) {
            throw DivergedError(t, "non-finite loss at step " + std::to_string(t));
        }
        const std::size_t activation_bytes = tape.activation_bytes();
        ledger.on_alloc(Category::residual, Placement::device, activation_bytes);

        // i) stage the active group's state (and master copies) onto the device
        std::size_t master_moved = 0;
        if (hift) {
            move_state_to_device(ledger, optim, active);
            if (config.mixed_precision) {
                for (const std::string& name : active.names()) {
                    master_moved += masters.tensors.at(name).data_bytes();
                }
                ledger.on_move(Category::master_copy, Direction::host_to_device, master_moved);
            }
        }

        // g) backward, gradient clipping, optimizer step, clear gradients
        const BackwardStats bw = backward(loss, tape);
        ledger.on_alloc(Category::residual, Placement::device, bw.intermediate_grad_bytes);
        if (config.grad_clip > 0.0) clip_gradients(model, active, config.grad_clip);
        std::size_t grad_bytes = 0;
        std::vector<ParamUpdate> updates;
        for (const std::string& name : active.names()) {
            const Tensor p = model.param(name);
            if (!p.has_grad()) {
                throw ContractError("training: no gradient for active parameter " + name);
            }
            grad_bytes += p.grad().size() * dtype_size(p.dtype());
            Tensor target =
                config.mixed_precision ? masters.tensors.at(name) : p;
            updates.push_back(ParamUpdate{name, target, p.grad()});
        }
        ledger.on_alloc(Category::grad, Placement::device, grad_bytes);
        optim.step(updates, lrs.value());
        if (config.mixed_precision) {
            for (const std::string& name : active.names()) {
                const Tensor master = masters.tensors.at(name);
                model.param(name).assign(master.values());
            }
        }
        for (const std::string& name : active.names()) model.param(name).clear_grad();
        ledger.on_release(Category::grad, Placement::device, grad_bytes);
        ledger.on_release(Category::residual, Placement::device,
                          activation_bytes + bw.intermediate_grad_bytes);

        // k) return state (and masters) to the host
        if (hift) {
            move_state_to_host(ledger, optim, active);
            if (config.mixed_precision && master_moved > 0) {
                ledger.on_move(Category::master_copy, Direction::device_to_host, master_moved);
            }
        }

        StepRecord rec;
        rec.step = t;
        rec.loss = loss_value;
        rec.lr = lrs.value();
        rec.trainable_params = model.trainable_element_count();
        rec.device_pgs_peak_bytes = ledger.step_pgs_peak();
        rec.device_total_peak_bytes = ledger.step_device_total_peak();
        rec.transfer_bytes = ledger.step_transfer_bytes();
        report.steps.push_back(rec);
        if (observer) observer(t, model);

        // Delayed learning-rate branch: advance only at sweep boundaries.
        if (sched.is_all_layer_update()) {
            lrs.advance_sweep();
        }
    }

    model.freeze_all();
    report.final_loss = report.steps.back().loss;
    report.eval_is_accuracy = config.task != TaskKind::synthetic_regression;
    report.eval_metric = evaluate(model, data, config.task);
    report.memory = ledger.report();
    return report;
}

}  // namespace

RunReport train_hift(const TrainConfig& config) {
    if (config.mode != TrainMode::hift) throw ConfigError("train_hift: config.mode must be hift");
    return run_training(config, {});
}

RunReport train_fpft(const TrainConfig& config) {
    if (config.mode != TrainMode::fpft) throw ConfigError("train_fpft: config.mode must be fpft");
    return run_training(config, {});
}

RunReport train_with_observer(const TrainConfig& config, const StepObserver& observer) {
    return run_training(config, observer);
}

// --- comparison / metrics ---------------------------------------------------------

ComparisonReport compare_runs(const RunReport& a, const RunReport& b) {
    if (a.config.task != b.config.task) {
        throw ComparisonError("compare: runs trained on different tasks");
    }
    if (arch_to_text(a.config.arch) != arch_to_text(b.config.arch)) {
        throw ComparisonError("compare: runs trained on different architectures");
    }
    ComparisonReport cmp;
    cmp.task = task_name(a.config.task);
    cmp.final_loss_a = a.final_loss;
    cmp.final_loss_b = b.final_loss;
    cmp.eval_a = a.eval_metric;
    cmp.eval_b = b.eval_metric;
    cmp.eval_is_accuracy = a.eval_is_accuracy;
    cmp.pgs_peak_a = a.memory.device_pgs_peak;
    cmp.pgs_peak_b = b.memory.device_pgs_peak;
    cmp.total_peak_a = a.memory.device_total_peak;
    cmp.total_peak_b = b.memory.device_total_peak;
    cmp.transfer_peak_a = a.memory.peak_step_transfer_bytes;
    cmp.transfer_peak_b = b.memory.peak_step_transfer_bytes;
    cmp.device_peak_a = a.memory.device_peak;
    cmp.device_peak_b = b.memory.device_peak;
    for (const StepRecord& s : a.steps) cmp.loss_curve_a.push_back(s.loss);
    for (const StepRecord& s : b.steps) cmp.loss_curve_b.push_back(s.loss);
    return cmp;
}

std::string ComparisonReport::to_text() const {
    std::ostringstream os;
    auto delta = [](double x, double y) { return y - x; };
    os << "task: " << task << "\n";
    os << "metric: " << (eval_is_accuracy ? "accuracy" : "mse") << "\n";
    os << "                          run_a            run_b            delta(b-a)\n";
    auto row = [&](const char* label, double x, double y) {
        os << label;
        os.width(17);
        os << x;
        os.width(17);
        os << y;
        os.width(17);
        os << delta(x, y) << "\n";
    };
    row("final_loss        ", final_loss_a, final_loss_b);
    row("eval_metric       ", eval_a, eval_b);
    auto brow = [&](const char* label, std::size_t x, std::size_t y) {
        os << label;
        os.width(17);
        os << x;
        os.width(17);
        os << y;
        os.width(17);
        os << (static_cast<long long>(y) - static_cast<long long>(x)) << "\n";
    };
    for (Category c : kAllCategories) {
        std::string label = std::string("peak_") + category_name(c);
        label.resize(18, ' ');
        brow(label.c_str(), device_peak_a[static_cast<std::size_t>(c)],
             device_peak_b[static_cast<std::size_t>(c)]);
    }
    brow("peak_param+grd+sta", pgs_peak_a, pgs_peak_b);
    brow("peak_device_total ", total_peak_a, total_peak_b);
    brow("peak_step_transfer", transfer_peak_a, transfer_peak_b);
    return os.str();
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write: " + path.string());
    os << content;
    if (!os) throw IoError("write failed: " + path.string());
}

}  // namespace

void emit_metrics(const RunReport& report, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory: " + dir.string());

    std::ostringstream steps;
    steps << kStepsCsvHeader << "\n";
    for (const StepRecord& s : report.steps) {
        steps << s.step << "," << s.loss << "," << s.lr << "," << s.trainable_params << ","
              << s.device_pgs_peak_bytes << "," << s.device_total_peak_bytes << ","
              << s.transfer_bytes << "\n";
    }
    write_file(dir / "steps.csv", steps.str());
    write_file(dir / "memory.csv", report.memory.to_csv());
    write_file(dir / "report.json", report.to_json());
}

void emit_comparison(const ComparisonReport& cmp, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory: " + dir.string());
    auto curve_csv = [](const std::vector<double>& curve) {
        std::ostringstream os;
        os << "step,loss\n";
        for (std::size_t i = 0; i < curve.size(); ++i) os << (i + 1) << "," << curve[i] << "\n";
        return os.str();
    };
    write_file(dir / "loss_a.csv", curve_csv(cmp.loss_curve_a));
    write_file(dir / "loss_b.csv", curve_csv(cmp.loss_curve_b));
    write_file(dir / "comparison.txt", cmp.to_text());
}

}  // namespace hift
