#pragma once

#include <string>
#include <variant>

#include "flattenet/tensor.hpp"

namespace flattenet {

// FLT1 container: magic "FLT1", u8 dtype code (0=f32, 1=f64), four u32
// little-endian dims (n,c,h,w), then raw little-endian values row-major.
inline constexpr std::uint8_t kDtypeF32 = 0;
inline constexpr std::uint8_t kDtypeF64 = 1;

using AnyTensor = std::variant<Tensor<float>, Tensor<double>>;

void write_flt1(const std::string& path, const Tensor<float>& t);
void write_flt1(const std::string& path, const Tensor<double>& t);
AnyTensor read_flt1(const std::string& path);

std::uint8_t dtype_code(const AnyTensor& t);
Dims any_dims(const AnyTensor& t);

} // namespace flattenet
