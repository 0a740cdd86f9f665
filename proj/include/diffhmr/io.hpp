#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "diffhmr/errors.hpp"

namespace diffhmr {
namespace io {

// All on-disk numeric payloads are little-endian f32, matching the declared
// container formats. Values are quantized through float on write.
inline std::vector<float> to_f32(const std::vector<double>& v) {
    std::vector<float> f(v.size());
    for (size_t i = 0; i < v.size(); ++i) f[i] = static_cast<float>(v[i]);
    return f;
}

inline std::vector<double> to_f64(const std::vector<float>& f) {
    std::vector<double> v(f.size());
    for (size_t i = 0; i < f.size(); ++i) v[i] = static_cast<double>(f[i]);
    return v;
}

inline void write_f32_blob(std::ostream& os, const std::vector<double>& v) {
    auto f = to_f32(v);
    os.write(reinterpret_cast<const char*>(f.data()),
             static_cast<std::streamsize>(f.size() * sizeof(float)));
    if (!os) throw IoError("failed writing f32 blob");
}

inline std::vector<double> read_f32_blob(std::istream& is, size_t n) {
    std::vector<float> f(n);
    is.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (static_cast<size_t>(is.gcount()) != n * sizeof(float))
        throw FormatError("truncated f32 blob");
    return to_f64(f);
}

inline const char* base64_chars() {
    return "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

inline std::string base64_encode(const unsigned char* data, size_t len) {
    const char* tbl = base64_chars();
    std::string out;
    out.reserve((len + 2) / 3 * 4);
    for (size_t i = 0; i < len; i += 3) {
        uint32_t n = static_cast<uint32_t>(data[i]) << 16;
        if (i + 1 < len) n |= static_cast<uint32_t>(data[i + 1]) << 8;
        if (i + 2 < len) n |= static_cast<uint32_t>(data[i + 2]);
        out.push_back(tbl[(n >> 18) & 63]);
        out.push_back(tbl[(n >> 12) & 63]);
        out.push_back(i + 1 < len ? tbl[(n >> 6) & 63] : '=');
        out.push_back(i + 2 < len ? tbl[n & 63] : '=');
    }
    return out;
}

inline std::string encode_f32_base64(const std::vector<double>& v) {
    auto f = to_f32(v);
    return base64_encode(reinterpret_cast<const unsigned char*>(f.data()),
                         f.size() * sizeof(float));
}

inline std::vector<unsigned char> base64_decode(const std::string& s) {
    auto val = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        if (c == '=') return -1;
        throw FormatError("invalid base64 character");
    };
    if (s.size() % 4 != 0) throw FormatError("base64 length not a multiple of 4");
    std::vector<unsigned char> out;
    out.reserve(s.size() / 4 * 3);
    for (size_t i = 0; i < s.size(); i += 4) {
        int a = val(s[i]), b = val(s[i + 1]), c = val(s[i + 2]), d = val(s[i + 3]);
        if (a < 0 || b < 0) throw FormatError("malformed base64 block");
        uint32_t n = (static_cast<uint32_t>(a) << 18) | (static_cast<uint32_t>(b) << 12);
        if (c >= 0) n |= static_cast<uint32_t>(c) << 6;
        if (d >= 0) n |= static_cast<uint32_t>(d);
        out.push_back(static_cast<unsigned char>((n >> 16) & 255));
        if (c >= 0) out.push_back(static_cast<unsigned char>((n >> 8) & 255));
        if (d >= 0) out.push_back(static_cast<unsigned char>(n & 255));
    }
    return out;
}

inline std::vector<double> decode_f32_base64(const std::string& s, size_t expected) {
    auto bytes = base64_decode(s);
    if (bytes.size() != expected * sizeof(float))
        throw FormatError("f32 payload has wrong length");
    std::vector<float> f(expected);
    std::memcpy(f.data(), bytes.data(), bytes.size());
    return to_f64(f);
}

}  // namespace io
}  // namespace diffhmr
