#include "drift/inversion/latent_cache.hpp"

#include "drift/core/error.hpp"
#include "drift/core/hash.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <functional>
#include <thread>

namespace drift {
namespace {

constexpr std::array<char, 4> kMagic = {'D', 'R', 'L', 'T'};
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
        throw IoError("truncated latent blob");
    }
    return v;
}

} // namespace

std::string LatentKey::digest() const {
    return sha1_hex(video + '\x1f' + std::to_string(frame) + '\x1f' + std::to_string(timestep) + '\x1f' +
                    backbone + '\x1f' + std::string(to_string(provenance)));
}

void write_latent(const std::filesystem::path& path, const LatentState& latent) {
    latent.validate();
    const auto tmp = path.string() + ".tmp." + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) {
            throw IoError("cannot write " + tmp);
        }
        out.write(kMagic.data(), kMagic.size());
        put<std::uint32_t>(out, kVersion);
        put<std::uint32_t>(out, 0);
        put<std::uint32_t>(out, static_cast<std::uint32_t>(latent.height));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(latent.width));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(latent.channels));
        put<std::int32_t>(out, latent.timestep);
        put<std::uint32_t>(out, static_cast<std::uint32_t>(latent.provenance));
        out.write(reinterpret_cast<const char*>(latent.values.data()),
                  static_cast<std::streamsize>(latent.values.size() * sizeof(float)));
        if (!out) {
            throw IoError("write failed for " + tmp);
        }
    }
    std::filesystem::rename(tmp, path);
}

LatentState read_latent(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read " + path.string());
    }
    std::array<char, 4> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kMagic) {
        throw IoError(path.string() + " is not a latent blob");
    }
    if (get<std::uint32_t>(in) != kVersion) {
        throw IoError(path.string() + ": unsupported latent blob version");
    }
    if (get<std::uint32_t>(in) != 0) {
        throw IoError(path.string() + ": unsupported dtype");
    }
    const auto h = get<std::uint32_t>(in);
    const auto w = get<std::uint32_t>(in);
    const auto c = get<std::uint32_t>(in);
    LatentState latent(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
    latent.timestep = get<std::int32_t>(in);
    const auto prov = get<std::uint32_t>(in);
    if (prov > 2) {
        throw IoError(path.string() + ": bad provenance tag");
    }
    latent.provenance = static_cast<LatentProvenance>(prov);
    in.read(reinterpret_cast<char*>(latent.values.data()),
            static_cast<std::streamsize>(latent.values.size() * sizeof(float)));
    if (!in) {
        throw IoError("truncated latent blob " + path.string());
    }
    latent.validate();
    return latent;
}

LatentCache::LatentCache(std::filesystem::path root) : root_(std::move(root)) {
    if (enabled()) {
        std::filesystem::create_directories(root_);
    }
}

std::filesystem::path LatentCache::path_for(const LatentKey& key) const {
    return root_ / (key.digest() + ".lat");
}

std::optional<LatentState> LatentCache::load(const LatentKey& key) const {
    if (!enabled()) {
        return std::nullopt;
    }
    const auto path = path_for(key);
    if (!std::filesystem::exists(path)) {
        return std::nullopt;
    }
    return read_latent(path);
}

void LatentCache::store(const LatentKey& key, const LatentState& latent) const {
    if (enabled()) {
        write_latent(path_for(key), latent);
    }
}

} // namespace drift
