#pragma once

// "PTPC" patch cache: header (magic, u16 version, u16 P, u16 channels,
// u16 classes, u32 records) followed by records of u16 label, u32 meta
// length, UTF-8 meta, P*P*2 little-endian f32.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "printattr/binary_io.hpp"
#include "printattr/error.hpp"
#include "printattr/preprocess.hpp"

namespace printattr {

inline constexpr std::uint16_t kPatchCacheVersion = 1;

struct PatchCache {
    int patch = 30;
    int channels = 2;
    int classes = 0;
    std::vector<TwoChannelPatch> records;
};

// Meta text: "<source_id>\t<row>,<col>,<height>,<width>".
inline std::string encode_meta(const PatchMeta& m) {
    std::ostringstream os;
    os << m.source_id << '\t' << m.bbox.row << ',' << m.bbox.col << ',' << m.bbox.height << ',' << m.bbox.width;
    return os.str();
}

inline PatchMeta decode_meta(const std::string& s) {
    PatchMeta m;
    const auto tab = s.rfind('\t');
    if (tab == std::string::npos) {
        m.source_id = s;
        return m;
    }
    m.source_id = s.substr(0, tab);
    std::istringstream is(s.substr(tab + 1));
    char comma;
    if (!(is >> m.bbox.row >> comma >> m.bbox.col >> comma >> m.bbox.height >> comma >> m.bbox.width))
        throw IoError("malformed patch meta: " + s);
    return m;
}

inline void write_patch_cache(const std::filesystem::path& path, const PatchCache& cache) {
    if (cache.patch < 1 || cache.patch > 0xFFFF) throw ConfigError("patch size out of range");
    if (cache.channels != 2) throw ConfigError("patch cache holds two-channel patches only");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    bin::put_magic(out, "PTPC");
    bin::put<std::uint16_t>(out, kPatchCacheVersion);
    bin::put<std::uint16_t>(out, static_cast<std::uint16_t>(cache.patch));
    bin::put<std::uint16_t>(out, static_cast<std::uint16_t>(cache.channels));
    bin::put<std::uint16_t>(out, static_cast<std::uint16_t>(cache.classes));
    bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(cache.records.size()));
    const std::size_t n = static_cast<std::size_t>(cache.patch) * cache.patch * 2;
    for (const auto& r : cache.records) {
        if (r.size != cache.patch || r.data.size() != n) throw ShapeError("patch record does not match cache size");
        if (r.label < 0 || r.label >= cache.classes) throw ConfigError("patch label out of class range");
        bin::put<std::uint16_t>(out, static_cast<std::uint16_t>(r.label));
        const auto meta = encode_meta(r.meta);
        bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
        out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
        bin::put_floats(out, r.data);
    }
    if (!out) throw IoError("write failed: " + path.string());
}

inline PatchCache read_patch_cache(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    bin::expect_magic(in, "PTPC", path.string());
    const auto version = bin::get<std::uint16_t>(in);
    if (version != kPatchCacheVersion) throw IoError("unsupported patch cache version " + std::to_string(version));
    PatchCache c;
    c.patch = bin::get<std::uint16_t>(in);
    c.channels = bin::get<std::uint16_t>(in);
    c.classes = bin::get<std::uint16_t>(in);
    if (c.channels != 2) throw IoError("patch cache channel count must be 2");
    const auto count = bin::get<std::uint32_t>(in);
    const std::size_t n = static_cast<std::size_t>(c.patch) * c.patch * 2;
    c.records.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        TwoChannelPatch p;
        p.size = c.patch;
        p.label = bin::get<std::uint16_t>(in);
        if (p.label >= c.classes) throw IoError("record label exceeds class count");
        const auto len = bin::get<std::uint32_t>(in);
        std::string meta(len, '\0');
        if (!in.read(meta.data(), len)) throw IoError("unexpected end of file");
        p.meta = decode_meta(meta);
        p.data.resize(n);
        bin::get_floats(in, p.data);
        c.records.push_back(std::move(p));
    }
    return c;
}

}  // namespace printattr
