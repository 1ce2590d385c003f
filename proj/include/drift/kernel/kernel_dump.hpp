#pragma once

#include "drift/kernel/propagation.hpp"

#include <filesystem>
#include <string>

namespace drift {

struct KernelDumpKey {
    std::string video;
    int frame = 0;
    int object = 0;
};

/// Debug dump of a kernel: "DRKD" magic, u32 version, key (u32-length-prefixed
/// video id, i32 frame, i32 object), u32 target_count, u32 source_locations,
/// u32 slot count + i32 frame per slot, u64 entry count, u64 raw and u64
/// compressed payload sizes, then a zlib stream of the columns
/// row_offsets | slots | locations | values (little-endian u32/u32/u32/f32).
void write_kernel_dump(const std::filesystem::path& path, const PropagationKernel& kernel, const KernelDumpKey& key);

struct KernelDump {
    KernelDumpKey key;
    PropagationKernel kernel;
};

KernelDump read_kernel_dump(const std::filesystem::path& path);

} // namespace drift
