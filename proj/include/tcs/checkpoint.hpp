#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tcs/tensor.hpp"

namespace tcs {

// Parameter checkpoint: little-endian binary, magic "TCSW", version u32,
// then per-tensor records: name length u32, name bytes, rank u32,
// dims u32 each, f32 payload.

namespace detail {

template <typename T>
void write_raw(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool read_raw(std::istream& is, T& v) {
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    return static_cast<bool>(is);
}

}  // namespace detail

inline void save_checkpoint(const std::string& path,
                            const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("save_checkpoint: cannot open " + path);
    os.write("TCSW", 4);
    detail::write_raw<uint32_t>(os, 1u);
    for (const auto& [name, tensor] : tensors) {
        detail::write_raw<uint32_t>(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::write_raw<uint32_t>(os, static_cast<uint32_t>(tensor->shape.size()));
        for (auto d : tensor->shape) detail::write_raw<uint32_t>(os, static_cast<uint32_t>(d));
        for (double v : tensor->data) detail::write_raw<float>(os, static_cast<float>(v));
    }
    if (!os) throw IoError("save_checkpoint: write failed for " + path);
}

inline std::map<std::string, Tensor> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("load_checkpoint: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "TCSW", 4) != 0) {
        throw SchemaError("load_checkpoint: bad magic in " + path);
    }
    uint32_t version = 0;
    if (!detail::read_raw(is, version) || version != 1u) {
        throw SchemaError("load_checkpoint: unsupported version in " + path);
    }
    std::map<std::string, Tensor> out;
    while (true) {
        uint32_t name_len = 0;
        is.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
        if (is.eof()) break;
        if (!is || name_len > 1024) throw SchemaError("load_checkpoint: corrupt record header");
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        uint32_t rank = 0;
        if (!detail::read_raw(is, rank) || rank > 8) {
            throw SchemaError("load_checkpoint: corrupt rank for tensor " + name);
        }
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) {
            uint32_t dim = 0;
            if (!detail::read_raw(is, dim)) throw SchemaError("load_checkpoint: truncated dims");
            d = dim;
        }
        Tensor t(shape);
        for (auto& v : t.data) {
            float f = 0.0f;
            if (!detail::read_raw(is, f)) {
                throw SchemaError("load_checkpoint: truncated payload for tensor " + name);
            }
            v = static_cast<double>(f);
        }
        out.emplace(std::move(name), std::move(t));
    }
    return out;
}

}  // namespace tcs
