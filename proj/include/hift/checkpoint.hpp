#pragma once

#include <filesystem>
#include <string>

#include "hift/model.hpp"
#include "hift/optim.hpp"

namespace hift {

// Flat binary container: a plain-text architecture header followed by
// (name, shape, dtype, raw bytes) records. Round trips are bit-exact because
// values are serialized at their storage precision.
void save_model(const LayeredModel& model, const std::filesystem::path& path);
LayeredModel load_model(const std::filesystem::path& path);

// Optimizer state uses the same container; slot records are named
// "<param>.<suffix>" and per-parameter step counts "<param>.steps".
void save_optimizer(const OptimizerState& state, const std::filesystem::path& path);
void load_optimizer(OptimizerState& state, const LayeredModel& model,
                    const std::filesystem::path& path);

// Serialized architecture line used as the container header (also the CLI's
// --arch file payload).
std::string arch_to_text(const ModelArch& arch);
ModelArch arch_from_text(const std::string& text);

}  // namespace hift
