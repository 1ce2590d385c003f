#include "drift/adapt/prompt_store.hpp"

#include "drift/core/hash.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>

namespace drift {
namespace {

using nlohmann::json;

std::string blob_hash(const std::vector<double>& values) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
    return sha1_hex(std::span<const std::uint8_t>(p, values.size() * sizeof(double)));
}

std::filesystem::path temp_name(const std::filesystem::path& path) {
    std::ostringstream os;
    os << path.string() << ".tmp" << std::hash<std::thread::id>{}(std::this_thread::get_id());
    return os.str();
}

void write_atomic(const std::filesystem::path& path, const std::string& bytes) {
    const auto tmp = temp_name(path);
    {
        std::ofstream out(tmp, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw IoError("cannot write " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

std::string read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read " + path.string());
    }
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

} // namespace

std::string PromptKey::digest() const {
    return sha1_hex("prompt\n" + video + "\n" + std::to_string(object) + "\n" + fingerprint);
}

PromptStore::PromptStore(std::filesystem::path root) : root_(std::move(root)) {
    std::filesystem::create_directories(root_);
}

bool PromptStore::contains(const PromptKey& key) const {
    const auto base = root_ / key.digest();
    return std::filesystem::exists(base.string() + ".json") && std::filesystem::exists(base.string() + ".bin");
}

void PromptStore::store(const PromptKey& key, const AdaptedPrompt& prompt) const {
    const auto base = (root_ / key.digest()).string();
    const auto& values = prompt.prompt.values;
    json meta = {
        {"video", key.video},
        {"object", key.object},
        {"fingerprint", key.fingerprint},
        {"token_count", prompt.prompt.shape.token_count},
        {"embedding_dim", prompt.prompt.shape.embedding_dim},
        {"parameter_count", prompt.parameter_count()},
        {"head_logits", prompt.heads.logits()},
        {"head_weights", prompt.heads.weights()},
        {"steps", prompt.steps()},
        {"loss_trace", prompt.loss_trace},
        {"blob_sha1", blob_hash(values)},
    };
    if (!prompt.loss_trace.empty()) {
        meta["initial_loss"] = prompt.initial_loss();
        meta["final_loss"] = prompt.final_loss();
    }
    write_atomic(base + ".bin", std::string(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(double)));
    // Metadata last: its presence marks a complete entry.
    write_atomic(base + ".json", meta.dump(1));
}

std::optional<AdaptedPrompt> PromptStore::load(const PromptKey& key) const {
    if (!contains(key)) {
        return std::nullopt;
    }
    const auto base = (root_ / key.digest()).string();
    json meta;
    try {
        meta = json::parse(read_all(base + ".json"));
    } catch (const json::exception& e) {
        throw IoError("corrupt prompt metadata " + base + ".json: " + e.what());
    }
    if (meta.at("video") != key.video || meta.at("object") != key.object || meta.at("fingerprint") != key.fingerprint) {
        throw IoError("prompt store entry " + base + " does not match its key");
    }
    const std::string blob = read_all(base + ".bin");
    AdaptedPrompt out;
    out.object = key.object;
    out.prompt = PromptEmbedding(PromptShape{meta.at("token_count").get<int>(), meta.at("embedding_dim").get<int>()}, true);
    if (blob.size() != out.prompt.values.size() * sizeof(double)) {
        throw IoError("prompt blob " + base + ".bin has the wrong size");
    }
    std::memcpy(out.prompt.values.data(), blob.data(), blob.size());
    if (blob_hash(out.prompt.values) != meta.at("blob_sha1").get<std::string>()) {
        throw IoError("prompt blob " + base + ".bin fails its checksum");
    }
    out.heads = HeadWeights(meta.at("head_logits").get<std::vector<double>>());
    out.loss_trace = meta.at("loss_trace").get<std::vector<double>>();
    return out;
}

} // namespace drift
