#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "semstego/core/tensor.hpp"

namespace semstego {

// On-disk array layout, all integers little-endian:
//   bytes 0..3   magic "SSAR"
//   byte  4      format version (1)
//   byte  5      dtype code (1 = float64, 2 = float32)
//   bytes 6..7   rank (uint16)
//   rank x uint64 dimensions
//   raw little-endian element values
enum class DType : std::uint8_t { float64 = 1, float32 = 2 };

std::string encode_array(const Tensor& array, DType dtype = DType::float64);
Tensor decode_array(const std::string& bytes);

void save_array(const std::filesystem::path& path, const Tensor& array,
                DType dtype = DType::float64);
Tensor load_array(const std::filesystem::path& path);
// Also rejects files whose header shape differs from `expected`.
Tensor load_array(const std::filesystem::path& path, const Shape& expected);

std::string base64_encode(const std::string& bytes);
std::string base64_decode(const std::string& text);

}  // namespace semstego
