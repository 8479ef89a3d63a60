#pragma once

// Little-endian scalar I/O shared by the binary file formats.

#include "hetgraph/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

namespace hetgraph::detail {

template <typename T>
void write_le(std::ostream& out, T value) {
    static_assert(std::is_integral_v<T>);
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(value);
    char bytes[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        bytes[i] = static_cast<char>(u & 0xFF);
        u = static_cast<U>(u >> 8);
    }
    out.write(bytes, sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const char* what) {
    static_assert(std::is_integral_v<T>);
    unsigned char bytes[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
        throw DataError(std::string("truncated file while reading ") + what);
    }
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = sizeof(T); i-- > 0;) u = static_cast<std::make_unsigned_t<T>>((u << 8) | bytes[i]);
    return static_cast<T>(u);
}

inline void write_f32(std::ostream& out, float v) { write_le(out, std::bit_cast<std::uint32_t>(v)); }
inline float read_f32(std::istream& in, const char* what) { return std::bit_cast<float>(read_le<std::uint32_t>(in, what)); }
inline void write_f64(std::ostream& out, double v) { write_le(out, std::bit_cast<std::uint64_t>(v)); }
inline double read_f64(std::istream& in, const char* what) { return std::bit_cast<double>(read_le<std::uint64_t>(in, what)); }

inline void expect_magic(std::istream& in, const char (&magic)[5], const char* what) {
    char got[4];
    if (!in.read(got, 4) || std::memcmp(got, magic, 4) != 0) {
        throw DataError(std::string(what) + ": bad magic, expected \"" + magic + "\"");
    }
}

}  // namespace hetgraph::detail
