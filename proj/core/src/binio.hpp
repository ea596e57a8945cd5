#pragma once

// Little-endian primitives shared by the binary file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "ammpl/array.hpp"
#include "ammpl/errors.hpp"

namespace ammpl::binio {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
    os.write(b, 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
    os.write(b, 8);
}

inline void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

inline void put_magic(std::ostream& os, std::string_view magic) { os.write(magic.data(), 4); }

inline void put_string(std::ostream& os, std::string_view s) {
    put_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline void put_values(std::ostream& os, const Array& a) {
    for (double v : a.values()) put_f64(os, v);
}

inline void need(std::istream& is, const char* what) {
    if (!is) throw FormatError(std::string("truncated file while reading ") + what);
}

inline std::uint32_t get_u32(std::istream& is, const char* what = "u32") {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    need(is, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{b[i]} << (8 * i);
    return v;
}

inline std::uint64_t get_u64(std::istream& is, const char* what = "u64") {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    need(is, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{b[i]} << (8 * i);
    return v;
}

inline double get_f64(std::istream& is, const char* what = "f64") {
    return std::bit_cast<double>(get_u64(is, what));
}

inline void expect_magic(std::istream& is, std::string_view magic) {
    char b[4] = {};
    is.read(b, 4);
    if (!is || std::memcmp(b, magic.data(), 4) != 0) {
        throw FormatError("bad magic bytes: expected \"" + std::string(magic) + "\"");
    }
}

inline std::string get_string(std::istream& is, std::uint32_t max_len = 1u << 20) {
    const std::uint32_t n = get_u32(is, "string length");
    if (n > max_len) throw FormatError("string length " + std::to_string(n) + " exceeds limit");
    std::string s(n, '\0');
    is.read(s.data(), n);
    need(is, "string");
    return s;
}

inline void get_values(std::istream& is, Array& a) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = get_f64(is, "array values");
}

}  // namespace ammpl::binio
