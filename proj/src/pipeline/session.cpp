#include "drift/pipeline/session.hpp"

#include "drift/core/error.hpp"
#include "drift/core/hash.hpp"
#include "drift/core/mask_ops.hpp"
#include "drift/inversion/inversion.hpp"
#include "drift/kernel/propagate.hpp"
#include "drift/kernel/propagation.hpp"
#include "drift/kernel/reference_bank.hpp"
#include "drift/pipeline/factory.hpp"
#include "drift/refine/crf.hpp"
#include "drift/refine/refine.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

namespace drift {
namespace {

std::span<const std::uint8_t> bytes_of(const auto& v) {
    return {reinterpret_cast<const std::uint8_t*>(v.data()), v.size() * sizeof(v[0])};
}

std::string read_sidecar(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("missing prompt sidecar " + path.string());
    }
    std::ostringstream os;
    os << in.rdbuf();
    std::string text = os.str();
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r' || text.back() == ' ')) {
        text.pop_back();
    }
    return text;
}

QueryKeySet keys_only(const QueryKeySet& qk) {
    QueryKeySet out;
    out.location_count = qk.location_count;
    out.head_dim = qk.head_dim;
    out.heads.resize(qk.heads.size());
    for (std::size_t h = 0; h < qk.heads.size(); ++h) {
        out.heads[h].keys = qk.heads[h].keys;
    }
    return out;
}

// Paste the ground truth of objects initialized at this frame over the prediction.
void paste_new_objects(HardMask& mask, const HardMask& truth, const std::vector<int>& objects) {
    for (std::size_t i = 0; i < mask.labels.size(); ++i) {
        const int g = truth.labels[i];
        if (std::find(objects.begin(), objects.end(), g) != objects.end()) {
            mask.labels[i] = static_cast<std::uint8_t>(g);
        }
    }
}

} // namespace

void SequenceData::validate() const {
    if (frames.empty()) {
        throw IoError(name + ": no frames");
    }
    for (const auto& f : frames) {
        if (f.height() != frames.front().height() || f.width() != frames.front().width()) {
            throw IoError(name + ": frames differ in size");
        }
    }
    if (!annotations.contains(0)) {
        throw IoError(name + ": missing annotation for frame 0");
    }
    for (const auto& [frame, mask] : annotations) {
        if (mask.height() != frames.front().height() || mask.width() != frames.front().width()) {
            throw IoError(name + ": annotation of frame " + std::to_string(frame) + " differs in size from the frames");
        }
    }
}

SequenceData load_sequence(const SequenceEntry& entry) {
    SequenceData seq;
    seq.name = entry.name;
    seq.first_frame = entry.first_frame;
    seq.seen = entry.seen;
    seq.palette = entry.palette;
    for (int i = 0; i < entry.frame_count(); ++i) {
        seq.frames.push_back(read_image(entry.frames[static_cast<std::size_t>(i)]));
        seq.stems.push_back(entry.frame_stem(i));
    }
    for (const auto& [frame, path] : entry.annotations) {
        seq.annotations.emplace(frame, load_annotation(path, entry.object_count()));
    }
    seq.validate();
    return seq;
}

std::shared_ptr<const QueryKeySet> QueryKeyCache::find(const std::string& key) const {
    std::lock_guard lock(mutex_);
    const auto it = entries_.find(key);
    if (it == entries_.end()) {
        return nullptr;
    }
    ++hits_;
    return it->second;
}

void QueryKeyCache::insert(const std::string& key, std::shared_ptr<const QueryKeySet> value) {
    std::size_t bytes = 0;
    for (const auto& h : value->heads) {
        bytes += (h.queries.size() + h.keys.size()) * sizeof(float);
    }
    std::lock_guard lock(mutex_);
    if (bytes > budget_ || entries_.contains(key)) {
        return;
    }
    while (used_ + bytes > budget_ && !order_.empty()) {
        const auto victim = entries_.find(order_.front());
        for (const auto& h : victim->second->heads) {
            used_ -= (h.queries.size() + h.keys.size()) * sizeof(float);
        }
        entries_.erase(victim);
        order_.erase(order_.begin());
    }
    entries_.emplace(key, std::move(value));
    order_.push_back(key);
    used_ += bytes;
}

std::size_t QueryKeyCache::hits() const {
    std::lock_guard lock(mutex_);
    return hits_;
}

RunCaches::RunCaches(const std::filesystem::path& root) {
    if (!root.empty()) {
        latents = LatentCache(root / "latents");
        prompts = std::make_unique<PromptStore>(root / "prompts");
    }
}

std::string latent_digest(const LatentState& latent) {
    std::ostringstream os;
    os << latent.height << 'x' << latent.width << 'x' << latent.channels << '@' << latent.timestep << ':'
       << to_string(latent.provenance) << ':' << sha1_hex(bytes_of(latent.values));
    return sha1_hex(os.str());
}

TrackingSession::TrackingSession(const RunConfig& config, const Backend& backend, RunCaches* caches)
    : config_(config), backend_(backend), caches_(caches) {
    config_.validate();
}

LatticeGeometry TrackingSession::geometry_for(const SequenceData& sequence) const {
    return backend_geometry(backend_, sequence.frames.front().height(), sequence.frames.front().width());
}

LatentState TrackingSession::frame_latent(const SequenceData& sequence, int frame) const {
    LatentProvenance provenance = LatentProvenance::clean;
    if (config_.inversion == InversionMode::ddim && config_.timestep > 0) {
        provenance = LatentProvenance::ddim_inversion;
    } else if (config_.inversion == InversionMode::random_noise && config_.timestep > 0) {
        provenance = LatentProvenance::random_noise;
    }
    std::ostringstream backbone;
    backbone << backend_.id() << '|' << backend_.weights_checksum() << "|steps=" << config_.inversion_steps
             << "|seed=" << config_.seed;
    const LatentKey key{sequence.name, frame, config_.timestep, backbone.str(), provenance};
    if (caches_ != nullptr) {
        if (auto hit = caches_->latents.load(key)) {
            return *hit;
        }
    }

    Image image = sequence.frames.at(static_cast<std::size_t>(frame));
    if (image.height() != backend_.input_height() || image.width() != backend_.input_width()) {
        image = resize_image(image, backend_.input_height(), backend_.input_width());
    }
    LatentState latent = encode_frame(backend_, image);
    switch (provenance) {
    case LatentProvenance::ddim_inversion:
        latent = ddim_invert(backend_, latent, backend_.null_prompt(), config_.timestep, config_.inversion_steps);
        break;
    case LatentProvenance::random_noise: {
        const NoiseSchedule schedule =
            backend_.noise_predictor() ? backend_.noise_predictor()->schedule() : NoiseSchedule::scaled_linear();
        const int t = schedule.resolve_timestep(config_.timestep, config_.inversion_steps);
        std::mt19937_64 rng(config_.seed ^ stable_hash(sequence.name + "#" + std::to_string(frame)));
        latent = random_noise_latent(schedule, latent, t, rng);
        break;
    }
    case LatentProvenance::clean:
        break;
    }
    if (caches_ != nullptr) {
        caches_->latents.store(key, latent);
    }
    return latent;
}

std::string TrackingSession::prompt_fingerprint(const LatentState& latent, const SoftMaskStack& mask, int object) const {
    std::ostringstream os;
    os << backend_.id() << '|' << backend_.weights_checksum() << '|' << latent_digest(latent) << '|'
       << sha1_hex(bytes_of(mask[object].values())) << '|' << config_.optimizer.fingerprint();
    return sha1_hex(os.str());
}

ChannelPrompt TrackingSession::object_prompt(const SequenceData& sequence, int object, int frame,
                                             const LatentState& latent, const SoftMaskStack& mask) const {
    ChannelPrompt out;
    out.heads = HeadWeights::uniform(backend_.head_layout().head_count());
    switch (config_.prompt) {
    case PromptMode::null:
        out.prompt = backend_.null_prompt();
        return out;
    case PromptMode::class_name:
    case PromptMode::caption: {
        const std::string suffix = config_.prompt == PromptMode::class_name ? ".class.txt" : ".caption.txt";
        out.prompt = backend_.encode_prompt(
            read_sidecar(config_.prompt_dir / sequence.name / (std::to_string(object) + suffix)));
        return out;
    }
    case PromptMode::learned:
        break;
    }
    const PromptKey key{sequence.name, object, prompt_fingerprint(latent, mask, object)};
    if (caches_ != nullptr && caches_->prompts) {
        if (auto hit = caches_->prompts->load(key)) {
            out.prompt = hit->prompt;
            out.heads = hit->heads;
            out.adapted = std::move(*hit);
            return out;
        }
    }
    AdaptedPrompt adapted = optimize_instance(backend_, latent, mask, object, config_.optimizer);
    spdlog::debug("{} object {} (frame {}): loss {:.6f} -> {:.6f}", sequence.name, object, frame,
                  adapted.initial_loss(), adapted.final_loss());
    if (caches_ != nullptr && caches_->prompts) {
        caches_->prompts->store(key, adapted);
    }
    out.prompt = adapted.prompt;
    out.heads = adapted.heads;
    out.adapted = std::move(adapted);
    return out;
}

std::shared_ptr<const QueryKeySet> TrackingSession::query_keys(const LatentState& latent, const std::string& digest,
                                                               const PromptEmbedding& prompt) const {
    std::string key;
    if (caches_ != nullptr) {
        key = sha1_hex(backend_.id() + '|' + digest + '|' + sha1_hex(bytes_of(prompt.values)));
        if (auto hit = caches_->query_keys.find(key)) {
            return hit;
        }
    }
    auto qk = std::make_shared<const QueryKeySet>(backend_.extract_qk(latent, prompt));
    if (caches_ != nullptr) {
        caches_->query_keys.insert(key, qk);
    }
    return qk;
}

TrackResult TrackingSession::run(const SequenceData& sequence, StageTimer& timer) {
    sequence.validate();
    const LatticeGeometry geometry = geometry_for(sequence);
    const int objects = sequence.object_count();
    const int channels = objects + 1;
    const int height = geometry.image_height();
    const int width = geometry.image_width();
    const SparsifyOptions sparsify{config_.radius, config_.top_k, config_.block_rows};
    sparsify.validate();

    TrackResult result;
    result.sequence = sequence.name;
    result.masks.resize(static_cast<std::size_t>(sequence.frame_count()));

    std::unique_ptr<Segmenter> segmenter;
    if (config_.refinement == RefinementMode::segmenter) {
        segmenter = make_segmenter(config_.segmenter, sequence.annotations, sequence.frame_count());
    }

    std::vector<std::optional<ChannelPrompt>> prompts(static_cast<std::size_t>(channels));
    prompts[0] = ChannelPrompt{backend_.null_prompt(), HeadWeights::uniform(backend_.head_layout().head_count()), {}};

    ReferenceBank bank(config_.history);
    std::mt19937_64 rng(config_.seed ^ stable_hash(sequence.name));

    std::string stage = "inversion";
    int t = 0;
    try {
    for (; t < sequence.frame_count(); ++t) {
        stage = "inversion";
        const LatentState latent = frame_latent(sequence, t);
        const std::string digest = latent_digest(latent);
        timer.lap("inversion");

        stage = "adaptation";
        std::vector<int> starting;
        for (const auto& [object, first] : sequence.first_frame) {
            if (first == t) {
                starting.push_back(object);
            }
        }
        if (!starting.empty()) {
            const SoftMaskStack truth = downsample_mask(sequence.annotations.at(t), geometry);
            for (int o : starting) {
                prompts[static_cast<std::size_t>(o)] = object_prompt(sequence, o, t, latent, truth);
                if (auto& a = prompts[static_cast<std::size_t>(o)]->adapted) {
                    result.adapted.push_back(*a);
                }
            }
        }
        timer.lap("adaptation");

        stage = "kernel";
        std::vector<std::shared_ptr<const QueryKeySet>> qk(static_cast<std::size_t>(channels));
        for (int c = 0; c < channels; ++c) {
            if (prompts[static_cast<std::size_t>(c)] && config_.kernel == KernelMode::attention) {
                qk[static_cast<std::size_t>(c)] = query_keys(latent, digest, prompts[static_cast<std::size_t>(c)]->prompt);
            }
        }
        FeatureSet features;
        if (config_.kernel == KernelMode::cosine) {
            features = backend_.extract_features(latent);
        }

        HardMask fused(height, width, objects);
        if (t == 0) {
            fused = sequence.annotations.at(0);
            timer.lap("kernel");
        } else {
            const std::vector<int> frames = bank.frame_indices();
            SoftMaskStack propagated(channels, geometry.latent_height(), geometry.latent_width());
            std::vector<PropagationKernel> kernels(static_cast<std::size_t>(channels));
            std::vector<bool> unkeyed(static_cast<std::size_t>(channels), false);
            if (config_.kernel == KernelMode::cosine) {
                std::vector<const FeatureSet*> refs;
                for (const auto& e : bank.entries()) {
                    refs.push_back(&e.features);
                }
                kernels[0] = build_cosine_kernel(features, refs, frames, config_.cosine_temperature, geometry, sparsify);
                for (int c = 1; c < channels; ++c) {
                    kernels[static_cast<std::size_t>(c)] = kernels[0];
                }
            } else {
                for (int c = 0; c < channels; ++c) {
                    if (!prompts[static_cast<std::size_t>(c)]) {
                        continue;
                    }
                    // Frames stored before an object started carry no keys for its channel.
                    std::vector<const QueryKeySet*> refs;
                    std::vector<int> keyed;
                    for (const auto& e : bank.entries()) {
                        const auto& k = e.keys.at(static_cast<std::size_t>(c));
                        if (!k.heads.empty()) {
                            refs.push_back(&k);
                            keyed.push_back(e.frame_index);
                        }
                    }
                    if (refs.empty()) {
                        unkeyed[static_cast<std::size_t>(c)] = true;
                        continue;
                    }
                    kernels[static_cast<std::size_t>(c)] =
                        build_attention_kernel(*qk[static_cast<std::size_t>(c)], refs, keyed,
                                               prompts[static_cast<std::size_t>(c)]->heads, geometry, sparsify);
                }
            }
            timer.lap("kernel");
            stage = "propagation";
            for (int c = 0; c < channels; ++c) {
                if (prompts[static_cast<std::size_t>(c)] && !unkeyed[static_cast<std::size_t>(c)]) {
                    propagated[c] = propagate_channel(kernels[static_cast<std::size_t>(c)], bank, c);
                }
            }
            timer.lap("propagation");

            stage = "refinement";
            const Grid<float> background = upsample_channel(propagated[0], height, width);
            std::vector<Grid<float>> object_channels;
            bool segmenter_ready = false;
            if (segmenter) {
                try {
                    segmenter->prepare(sequence.frames[static_cast<std::size_t>(t)], t);
                    segmenter_ready = true;
                } catch (const std::exception& e) {
                    result.warnings.push_back("frame " + std::to_string(t) + ": segmenter unavailable: " + e.what());
                    spdlog::warn("{} frame {}: segmenter unavailable: {}", sequence.name, t, e.what());
                }
            }
            for (int o = 1; o < channels; ++o) {
                if (segmenter_ready && prompts[static_cast<std::size_t>(o)]) {
                    RefineOutcome r = refine_object(propagated[o], geometry, *segmenter,
                                                    RefineOptions{config_.points, config_.point_sets}, rng);
                    object_channels.push_back(std::move(r.channel));
                } else {
                    object_channels.push_back(upsample_channel(propagated[o], height, width));
                }
            }
            fused = fuse_channels(background, object_channels);
            if (config_.refinement == RefinementMode::crf) {
                fused = crf_refine(fused, sequence.frames[static_cast<std::size_t>(t)], config_.crf);
            }
            if (!starting.empty()) {
                paste_new_objects(fused, sequence.annotations.at(t), starting);
            }
            timer.lap("refinement");
        }

        stage = "bank";
        std::vector<QueryKeySet> keys(static_cast<std::size_t>(channels));
        for (int c = 0; c < channels; ++c) {
            if (qk[static_cast<std::size_t>(c)]) {
                keys[static_cast<std::size_t>(c)] = keys_only(*qk[static_cast<std::size_t>(c)]);
            }
        }
        bank_update(bank, t, std::move(keys), std::move(features), downsample_mask(fused, geometry));
        result.masks[static_cast<std::size_t>(t)] = std::move(fused);
        timer.lap("propagation");
    }
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, sequence.name, t, e.what());
    }
    return result;
}

} // namespace drift
