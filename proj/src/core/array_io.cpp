#include "semstego/core/array_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "semstego/core/error.hpp"

namespace semstego {

namespace {

constexpr char kMagic[4] = {'S', 'S', 'A', 'R'};
constexpr std::uint8_t kVersion = 1;

template <typename U>
void put_le(std::string& out, U bits) {
  static_assert(std::is_unsigned_v<U>);
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>(bits & 0xFF));
    bits = static_cast<U>(bits >> 8);
  }
}

template <typename U>
U get_le(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(U) > in.size()) throw CorruptDataError("array payload truncated");
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bits |= static_cast<U>(static_cast<std::uint8_t>(in[pos + i])) << (8 * i);
  }
  pos += sizeof(U);
  return bits;
}

}  // namespace

std::string encode_array(const Tensor& array, DType dtype) {
  std::string out(kMagic, 4);
  out.push_back(static_cast<char>(kVersion));
  out.push_back(static_cast<char>(dtype));
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(array.rank()));
  for (std::size_t d : array.shape()) put_le<std::uint64_t>(out, d);
  for (double v : array.values()) {
    if (dtype == DType::float64) {
      put_le(out, std::bit_cast<std::uint64_t>(v));
    } else {
      put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
  return out;
}

Tensor decode_array(const std::string& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CorruptDataError("not an array file (bad magic)");
  }
  if (static_cast<std::uint8_t>(bytes[4]) != kVersion) {
    throw CorruptDataError("unsupported array format version");
  }
  const auto dtype = static_cast<DType>(static_cast<std::uint8_t>(bytes[5]));
  if (dtype != DType::float64 && dtype != DType::float32) {
    throw CorruptDataError("unsupported array dtype code");
  }
  std::size_t pos = 6;
  const auto rank = get_le<std::uint16_t>(bytes, pos);
  Shape shape(rank);
  for (auto& d : shape) d = get_le<std::uint64_t>(bytes, pos);
  const std::size_t n = shape_numel(shape);
  const std::size_t width = dtype == DType::float64 ? 8 : 4;
  if (bytes.size() - pos != n * width) {
    throw CorruptDataError("array payload is " + std::to_string(bytes.size() - pos) +
                           " bytes, header expects " + std::to_string(n * width));
  }
  std::vector<double> values(n);
  for (auto& v : values) {
    if (dtype == DType::float64) {
      v = std::bit_cast<double>(get_le<std::uint64_t>(bytes, pos));
    } else {
      v = std::bit_cast<float>(get_le<std::uint32_t>(bytes, pos));
    }
  }
  return Tensor(std::move(shape), std::move(values));
}

void save_array(const std::filesystem::path& path, const Tensor& array, DType dtype) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const std::string bytes = encode_array(array, dtype);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Tensor load_array(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return decode_array(buffer.str());
  } catch (const CorruptDataError& e) {
    throw CorruptDataError(path.string() + ": " + e.what());
  }
}

Tensor load_array(const std::filesystem::path& path, const Shape& expected) {
  Tensor t = load_array(path);
  if (t.shape() != expected) {
    throw DimensionError(path.string() + ": header shape " + shape_to_string(t.shape()) +
                         " differs from expected " + shape_to_string(expected));
  }
  return t;
}

namespace {
constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(const std::string& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (static_cast<std::uint8_t>(bytes[i]) << 16) |
                            (static_cast<std::uint8_t>(bytes[i + 1]) << 8) |
                            static_cast<std::uint8_t>(bytes[i + 2]);
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += kB64[(v >> 6) & 63];
    out += kB64[v & 63];
  }
  if (i < bytes.size()) {
    std::uint32_t v = static_cast<std::uint8_t>(bytes[i]) << 16;
    if (i + 1 < bytes.size()) v |= static_cast<std::uint8_t>(bytes[i + 1]) << 8;
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += i + 1 < bytes.size() ? kB64[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::string base64_decode(const std::string& text) {
  auto value_of = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (text.size() % 4 != 0) throw ParseError("base64 length is not a multiple of 4");
  std::string out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::uint32_t v = 0;
    int pad = 0;
    for (int j = 0; j < 4; ++j) {
      const char c = text[i + j];
      if (c == '=') {
        ++pad;
        v <<= 6;
        continue;
      }
      const int x = value_of(c);
      if (x < 0 || pad) throw ParseError("invalid base64 character");
      v = (v << 6) | static_cast<std::uint32_t>(x);
    }
    out += static_cast<char>((v >> 16) & 0xFF);
    if (pad < 2) out += static_cast<char>((v >> 8) & 0xFF);
    if (pad < 1) out += static_cast<char>(v & 0xFF);
  }
  return out;
}

}  // namespace semstego
