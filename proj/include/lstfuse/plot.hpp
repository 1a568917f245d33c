#pragma once

#include "lstfuse/io.hpp"
#include "lstfuse/training.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace lstfuse {

/// Trailing mean over up to `window` values ending at each index.
std::vector<double> moving_average(std::span<const double> v, std::size_t window);

/// Two stacked panels, generator loss above discriminator loss, each with the raw series and its
/// moving average against the training step.
RgbImage render_loss_curves(const LossTrace& trace, std::size_t window = 100, Index width = 900, Index height = 600);

void write_loss_plot(const std::filesystem::path& path, const LossTrace& trace, std::size_t window = 100);

}  // namespace lstfuse
