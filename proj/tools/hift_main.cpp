#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "hift/checkpoint.hpp"
#include "hift/memory.hpp"
#include "hift/trainer.hpp"

namespace fs = std::filesystem;

namespace {

fs::path resolve_out_dir(const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("HIFT_OUTPUT_DIR"); env && *env) return env;
    return "hift-out";
}

std::string human_bytes(double bytes) {
    std::ostringstream os;
    os.precision(4);
    if (bytes >= 1024.0 * 1024.0 * 1024.0) {
        os << bytes / (1024.0 * 1024.0 * 1024.0) << " GiB";
    } else if (bytes >= 1024.0 * 1024.0) {
        os << bytes / (1024.0 * 1024.0) << " MiB";
    } else if (bytes >= 1024.0) {
        os << bytes / 1024.0 << " KiB";
    } else {
        os << bytes << " B";
    }
    return os.str();
}

void print_estimate(const char* label, const hift::EstimateReport& e) {
    std::cout << label << "\n"
              << "  params          " << human_bytes(e.param_bytes.to_double()) << "\n";
    if (e.master_bytes != hift::Ratio(0)) {
        std::cout << "  master copies   " << human_bytes(e.master_bytes.to_double()) << "\n";
    }
    std::cout << "  gradients       " << human_bytes(e.grad_bytes.to_double()) << "\n"
              << "  optimizer state " << human_bytes(e.state_bytes.to_double()) << "\n"
              << "  average total   " << human_bytes(e.total.to_double()) << "\n"
              << "  peak            " << human_bytes(e.peak.to_double()) << "\n";
    if (e.savings_vs_fpft != hift::Ratio(0)) {
        std::cout << "  saved vs fpft   " << human_bytes(e.savings_vs_fpft.to_double()) << "\n";
    }
    if (!e.note.empty()) std::cout << "  note: " << e.note << "\n";
}

int run_train(const std::string& config_path, const std::string& out_flag) {
    const hift::TrainConfig config = hift::TrainConfig::from_json_file(config_path);
    const hift::RunReport report = config.mode == hift::TrainMode::hift
                                       ? hift::train_hift(config)
                                       : hift::train_fpft(config);
    const fs::path out = resolve_out_dir(out_flag);
    hift::emit_metrics(report, out);
    std::cout << "mode=" << hift::train_mode_name(config.mode) << " steps=" << report.steps.size()
              << " k=" << report.group_count << " final_loss=" << report.final_loss << " "
              << (report.eval_is_accuracy ? "accuracy=" : "mse=") << report.eval_metric << "\n"
              << "peak device bytes (param+grad+state): " << report.memory.device_pgs_peak << "\n"
              << "wrote " << (out / "steps.csv").string() << ", " << (out / "memory.csv").string()
              << ", " << (out / "report.json").string() << "\n";
    return 0;
}

int run_compare(const std::string& a_path, const std::string& b_path, const std::string& out_flag) {
    const hift::RunReport a = hift::RunReport::from_json_file(a_path);
    const hift::RunReport b = hift::RunReport::from_json_file(b_path);
    const hift::ComparisonReport cmp = hift::compare_runs(a, b);
    std::cout << cmp.to_text();
    if (!out_flag.empty() || std::getenv("HIFT_OUTPUT_DIR")) {
        const fs::path out = resolve_out_dir(out_flag);
        hift::emit_comparison(cmp, out);
        std::cout << "wrote loss-curve pair under " << out.string() << "\n";
    }
    return 0;
}

int run_estimate(const std::string& arch_path, const std::string& optimizer_name, std::size_t m,
                 const std::string& precision_name_str) {
    std::ifstream is(arch_path);
    if (!is) throw hift::IoError("cannot open arch file: " + arch_path);
    std::ostringstream buf;
    buf << is.rdbuf();
    hift::ModelArch arch = hift::arch_from_text(buf.str());
    const hift::PrecisionMode mode = hift::precision_from_name(precision_name_str);
    if (mode == hift::PrecisionMode::mixed) arch.dtype = hift::DType::f16;
    const hift::OptimKind kind = hift::optim_kind_from_name(optimizer_name);
    const hift::LayeredModel model = hift::LayeredModel::build(arch, 0);
    const std::size_t n = model.unit_count();

    const auto fpft = hift::estimate_fpft_for_model(model, kind, mode);
    const auto hift_est = hift::estimate_hift_for_model(model, kind, mode, m);
    std::cout << "layers n=" << n << "  group size m=" << m << "  groups k=" << hift_est.groups
              << "  optimizer=" << optimizer_name << "  precision=" << precision_name_str << "\n"
              << "peak trainable fraction: " << hift::trainable_peak_fraction(model, m) << "\n\n";
    print_estimate("full-parameter fine-tuning:", fpft);
    std::cout << "\n";
    print_estimate("hierarchical fine-tuning:", hift_est);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hierarchical fine-tuning engine: train, compare, and estimate memory"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    auto* train = app.add_subcommand("train", "run a training experiment from a config file");
    train->add_option("--config", config_path, "JSON config file")->required();
    train->add_option("--out", out_dir, "output directory (default $HIFT_OUTPUT_DIR or ./hift-out)");

    std::string report_a, report_b, cmp_out;
    auto* compare = app.add_subcommand("compare", "compare two run reports side by side");
    compare->add_option("report_a", report_a, "first report.json")->required();
    compare->add_option("report_b", report_b, "second report.json")->required();
    compare->add_option("--out", cmp_out, "directory for the loss-curve CSV pair");

    std::string arch_path, optimizer_name = "adamw", precision = "fp32";
    std::size_t group_m = 1;
    auto* estimate = app.add_subcommand("estimate", "analytic memory estimate, no training");
    estimate->add_option("--arch", arch_path, "architecture JSON file")->required();
    estimate->add_option("--optimizer", optimizer_name, "sgd|sgdm|adagrad|adafactor|adamw");
    estimate->add_option("--m", group_m, "layers per group");
    estimate->add_option("--precision", precision, "fp32|mixed");

    try {
        app.parse(argc, argv);
        if (train->parsed()) return run_train(config_path, out_dir);
        if (compare->parsed()) return run_compare(report_a, report_b, cmp_out);
        if (estimate->parsed()) return run_estimate(arch_path, optimizer_name, group_m, precision);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const hift::DivergedError& e) {
        std::cerr << "error: diverged: " << e.what() << "\n";
        return 3;
    } catch (const hift::ConfigError& e) {
        std::cerr << "error: config: " << e.what() << "\n";
        return 2;
    } catch (const hift::ParseError& e) {
        std::cerr << "error: parse: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
