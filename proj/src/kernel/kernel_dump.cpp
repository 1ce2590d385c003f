#include "drift/kernel/kernel_dump.hpp"

#include "drift/core/error.hpp"

#include <zlib.h>

#include <array>
#include <cstring>
#include <fstream>

namespace drift {
namespace {

constexpr std::array<char, 4> kMagic = {'D', 'R', 'K', 'D'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) {
        throw IoError("truncated kernel dump");
    }
    return v;
}

template <typename T>
void append_column(std::vector<unsigned char>& raw, const std::vector<T>& column) {
    const auto* p = reinterpret_cast<const unsigned char*>(column.data());
    raw.insert(raw.end(), p, p + column.size() * sizeof(T));
}

template <typename T>
std::size_t take_column(const std::vector<unsigned char>& raw, std::size_t offset, std::vector<T>& column,
                        std::size_t count) {
    if (offset + count * sizeof(T) > raw.size()) {
        throw IoError("kernel dump payload too short");
    }
    column.resize(count);
    std::memcpy(column.data(), raw.data() + offset, count * sizeof(T));
    return offset + count * sizeof(T);
}

} // namespace

void write_kernel_dump(const std::filesystem::path& path, const PropagationKernel& kernel, const KernelDumpKey& key) {
    std::vector<unsigned char> raw;
    append_column(raw, kernel.row_offsets);
    append_column(raw, kernel.slots);
    append_column(raw, kernel.locations);
    append_column(raw, kernel.values);
    uLongf packed_size = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> packed(packed_size);
    if (compress2(packed.data(), &packed_size, raw.data(), static_cast<uLong>(raw.size()), Z_BEST_SPEED) != Z_OK) {
        throw IoError("zlib compression failed");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out.write(kMagic.data(), kMagic.size());
    put<std::uint32_t>(out, kVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(key.video.size()));
    out.write(key.video.data(), static_cast<std::streamsize>(key.video.size()));
    put<std::int32_t>(out, key.frame);
    put<std::int32_t>(out, key.object);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(kernel.target_count));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(kernel.source_locations));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(kernel.source_frames.size()));
    for (int f : kernel.source_frames) {
        put<std::int32_t>(out, f);
    }
    put<std::uint64_t>(out, kernel.values.size());
    put<std::uint64_t>(out, raw.size());
    put<std::uint64_t>(out, packed_size);
    out.write(reinterpret_cast<const char*>(packed.data()), static_cast<std::streamsize>(packed_size));
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

KernelDump read_kernel_dump(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read " + path.string());
    }
    std::array<char, 4> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kMagic || get<std::uint32_t>(in) != kVersion) {
        throw IoError(path.string() + " is not a kernel dump");
    }
    KernelDump dump;
    dump.key.video.resize(get<std::uint32_t>(in));
    in.read(dump.key.video.data(), static_cast<std::streamsize>(dump.key.video.size()));
    dump.key.frame = get<std::int32_t>(in);
    dump.key.object = get<std::int32_t>(in);
    auto& k = dump.kernel;
    k.target_count = static_cast<int>(get<std::uint32_t>(in));
    k.source_locations = static_cast<int>(get<std::uint32_t>(in));
    k.source_frames.resize(get<std::uint32_t>(in));
    for (auto& f : k.source_frames) {
        f = get<std::int32_t>(in);
    }
    const auto entries = get<std::uint64_t>(in);
    const auto raw_size = get<std::uint64_t>(in);
    const auto packed_size = get<std::uint64_t>(in);
    std::vector<unsigned char> packed(packed_size);
    in.read(reinterpret_cast<char*>(packed.data()), static_cast<std::streamsize>(packed_size));
    if (!in) {
        throw IoError("truncated kernel dump " + path.string());
    }
    std::vector<unsigned char> raw(raw_size);
    uLongf out_size = static_cast<uLongf>(raw_size);
    if (uncompress(raw.data(), &out_size, packed.data(), static_cast<uLong>(packed_size)) != Z_OK ||
        out_size != raw_size) {
        throw IoError("corrupt kernel dump payload in " + path.string());
    }
    std::size_t off = 0;
    off = take_column(raw, off, k.row_offsets, static_cast<std::size_t>(k.target_count) + 1);
    off = take_column(raw, off, k.slots, entries);
    off = take_column(raw, off, k.locations, entries);
    take_column(raw, off, k.values, entries);
    return dump;
}

} // namespace drift
