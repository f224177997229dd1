#pragma once

#include <filesystem>
#include <string>

#include "psteer/tensor.hpp"

namespace psteer {

// "PST1" binary tensor container.
//
//   bytes 0-3   magic "PST1"
//   byte  4     dtype code: 0 = f64, 1 = f32
//   byte  5     rank R, 1..4
//   bytes 6-7   reserved, zero
//   R x u64     dims, little endian
//   payload     row-major, little endian, no padding
//
// f32 payloads are promoted to f64 on read; all in-memory arithmetic is f64.

enum class Dtype : unsigned char { kF64 = 0, kF32 = 1 };

void write_tensor(const std::filesystem::path& path, const Tensor& t,
                  Dtype dtype = Dtype::kF64);

Tensor read_tensor(const std::filesystem::path& path);

}  // namespace psteer
