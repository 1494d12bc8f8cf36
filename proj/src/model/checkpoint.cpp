// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "pathmoe/model/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace pathmoe {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr std::array<char, 4> kMagic{'P', 'M', 'L', 'B'};
constexpr std::uint8_t kDtypeF32 = 0;

template <typename U>
void put(std::ostream& out, U v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

class Reader {
public:
    Reader(std::istream& in, const std::string& path) : in_(in), path_(path) {}

    template <typename U>
    U get() {
        U v{};
        bytes(reinterpret_cast<char*>(&v), sizeof(U));
        return v;
    }
    void bytes(char* dst, std::size_t n) {
        in_.read(dst, static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) throw DataError(path_ + ": truncated checkpoint");
    }
    std::string string() {
        const auto n = get<std::uint32_t>();
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }
    bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

private:
    std::istream& in_;
    const std::string& path_;
};

}  // namespace

const NamedArray* Checkpoint::find(const std::string& name) const {
    for (const auto& a : arrays)
        if (a.name == name) return &a;
    return nullptr;
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(path + ": cannot open for writing");
    out.write(kMagic.data(), kMagic.size());
    put<std::uint32_t>(out, ckpt.version);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.config_text.size()));
    out.write(ckpt.config_text.data(), static_cast<std::streamsize>(ckpt.config_text.size()));
    for (const auto& a : ckpt.arrays) {
        if (shape_numel(a.shape) != a.data.size()) {
            throw UsageError("checkpoint array '" + a.name + "': shape " + shape_str(a.shape) +
                             " does not match " + std::to_string(a.data.size()) + " values");
        }
        put<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
        out.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
        put<std::uint8_t>(out, kDtypeF32);
        put<std::uint32_t>(out, static_cast<std::uint32_t>(a.shape.size()));
        for (auto e : a.shape) put<std::uint64_t>(out, e);
        out.write(reinterpret_cast<const char*>(a.data.data()),
                  static_cast<std::streamsize>(a.data.size() * sizeof(float)));
    }
    if (!out) throw DataError(path + ": write failed");
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path + ": cannot open checkpoint");
    Reader r(in, path);
    std::array<char, 4> magic{};
    r.bytes(magic.data(), magic.size());
    if (magic != kMagic) throw DataError(path + ": not a checkpoint (bad magic)");
    Checkpoint ckpt;
    ckpt.version = r.get<std::uint32_t>();
    if (ckpt.version != kCheckpointVersion) {
        throw DataError(path + ": checkpoint version " + std::to_string(ckpt.version) +
                        " unsupported (expected " + std::to_string(kCheckpointVersion) + ")");
    }
    ckpt.config_text = r.string();
    while (!r.at_end()) {
        NamedArray a;
        a.name = r.string();
        if (r.get<std::uint8_t>() != kDtypeF32) throw DataError(path + ": array '" + a.name + "' has unknown dtype");
        const auto rank = r.get<std::uint32_t>();
        if (rank > 8) throw DataError(path + ": array '" + a.name + "' has implausible rank");
        for (std::uint32_t i = 0; i < rank; ++i) a.shape.push_back(r.get<std::uint64_t>());
        a.data.resize(shape_numel(a.shape));
        r.bytes(reinterpret_cast<char*>(a.data.data()), a.data.size() * sizeof(float));
        ckpt.arrays.push_back(std::move(a));
    }
    return ckpt;
}

}  // namespace pathmoe
