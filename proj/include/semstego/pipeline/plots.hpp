#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "semstego/pipeline/sweep.hpp"

namespace semstego::pipeline {

inline constexpr const char* kPlotMetrics[] = {"psnr_db", "ssim", "mse", "lpips"};

// One SVG per (metric, role) named <metric>_<role>.svg: metric mean against
// snr_test, one line per snr_train. Throws RangeError on an empty table and
// IoError when out_dir cannot be written.
std::vector<std::filesystem::path> emit_plots(const std::vector<ResultRow>& rows,
                                              const std::filesystem::path& out_dir);

}  // namespace semstego::pipeline
