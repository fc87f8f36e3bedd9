#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include "mcgcl/config.hpp"
#include "mcgcl/framework.hpp"

namespace mcgcl {

// Flat key=value report: a timestamp line, the config snapshot, per-seed
// losses for every epoch of every stage, final metrics per seed and the
// mean and sample standard deviation across seeds.
std::string render_manifest(const TrainConfig& config, std::span<const FrameworkResult> runs,
                            std::string_view timestamp);

// seed,stage,epoch,objective,same,cross,task
std::string render_loss_csv(std::span<const FrameworkResult> runs);

// Removes the timestamp line so two manifests can be compared.
std::string strip_timestamp(std::string_view manifest);

void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace mcgcl
