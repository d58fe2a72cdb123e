#pragma once

// Little-endian primitives for the on-disk containers.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>

#include "printattr/error.hpp"

namespace printattr::bin {

template <class U>
void put(std::ostream& out, U value) {
    static_assert(std::is_unsigned_v<U>);
    unsigned char buf[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>(value >> (8 * i));
    out.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <class U>
U get(std::istream& in) {
    static_assert(std::is_unsigned_v<U>);
    unsigned char buf[sizeof(U)];
    if (!in.read(reinterpret_cast<char*>(buf), sizeof(U))) throw IoError("unexpected end of file");
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(static_cast<U>(buf[i]) << (8 * i));
    return value;
}

inline void put_f32(std::ostream& out, float v) { put(out, std::bit_cast<std::uint32_t>(v)); }
inline float get_f32(std::istream& in) { return std::bit_cast<float>(get<std::uint32_t>(in)); }

inline void put_floats(std::ostream& out, std::span<const float> v) {
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
    } else {
        for (float f : v) put_f32(out, f);
    }
}

inline void get_floats(std::istream& in, std::span<float> v) {
    if constexpr (std::endian::native == std::endian::little) {
        if (!in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float))))
            throw IoError("unexpected end of file");
    } else {
        for (float& f : v) f = get_f32(in);
    }
}

inline void put_magic(std::ostream& out, const char (&magic)[5]) { out.write(magic, 4); }

inline void expect_magic(std::istream& in, const char (&magic)[5], const std::string& what) {
    char buf[4];
    if (!in.read(buf, 4) || std::memcmp(buf, magic, 4) != 0) throw IoError(what + ": bad magic, not a " + magic + " file");
}

}  // namespace printattr::bin
