#pragma once

#include <filesystem>

#include "semstego/core/tensor.hpp"

namespace semstego {

// Lossless 8-bit PNG export; values are rounded to the nearest of 256 levels.
void write_png(const std::filesystem::path& path, const ImageTensor& image);
ImageTensor read_png(const std::filesystem::path& path);

}  // namespace semstego
