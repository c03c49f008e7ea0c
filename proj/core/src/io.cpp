#include "flattenet/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace flattenet {

static_assert(std::endian::native == std::endian::little,
              "FLT1 i/o assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'F', 'L', 'T', '1'};

void write_u32(std::ofstream& f, std::uint32_t v) {
    f.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::ifstream& f) {
    std::uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    return v;
}

template <typename T>
void write_impl(const std::string& path, const Tensor<T>& t, std::uint8_t code) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f.write(kMagic, 4);
    f.write(reinterpret_cast<const char*>(&code), 1);
    write_u32(f, static_cast<std::uint32_t>(t.dims().n));
    write_u32(f, static_cast<std::uint32_t>(t.dims().c));
    write_u32(f, static_cast<std::uint32_t>(t.dims().h));
    write_u32(f, static_cast<std::uint32_t>(t.dims().w));
    f.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(T)));
    if (!f) throw std::runtime_error("short write: " + path);
}

template <typename T>
Tensor<T> read_payload(std::ifstream& f, Dims d, const std::string& path) {
    Tensor<T> t(d);
    f.read(reinterpret_cast<char*>(t.data()),
           static_cast<std::streamsize>(t.numel() * sizeof(T)));
    if (!f) throw std::runtime_error("truncated FLT1 payload: " + path);
    return t;
}

} // namespace

void write_flt1(const std::string& path, const Tensor<float>& t) { write_impl(path, t, kDtypeF32); }
void write_flt1(const std::string& path, const Tensor<double>& t) { write_impl(path, t, kDtypeF64); }

AnyTensor read_flt1(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("not an FLT1 file: " + path);
    std::uint8_t code = 0;
    f.read(reinterpret_cast<char*>(&code), 1);
    Dims d;
    d.n = read_u32(f);
    d.c = read_u32(f);
    d.h = read_u32(f);
    d.w = read_u32(f);
    if (!f) throw std::runtime_error("truncated FLT1 header: " + path);
    switch (code) {
        case kDtypeF32: return read_payload<float>(f, d, path);
        case kDtypeF64: return read_payload<double>(f, d, path);
        default: throw std::runtime_error("unknown FLT1 dtype code " + std::to_string(code));
    }
}

std::uint8_t dtype_code(const AnyTensor& t) {
    return std::holds_alternative<Tensor<float>>(t) ? kDtypeF32 : kDtypeF64;
}

Dims any_dims(const AnyTensor& t) {
    return std::visit([](const auto& x) { return x.dims(); }, t);
}

} // namespace flattenet
