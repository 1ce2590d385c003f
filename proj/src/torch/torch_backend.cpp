#include "drift/torch/torch_backend.hpp"

#include "drift/core/error.hpp"
#include "drift/core/hash.hpp"

#include <torch/csrc/autograd/autograd.h>
#include <torch/script.h>

#include <mutex>

namespace drift {
namespace {

torch::Tensor image_tensor(const Image& frame) {
    auto t = torch::empty({1, 3, frame.height(), frame.width()}, torch::kFloat32);
    auto a = t.accessor<float, 4>();
    for (int y = 0; y < frame.height(); ++y) {
        for (int x = 0; x < frame.width(); ++x) {
            for (int c = 0; c < 3; ++c) {
                a[0][c][y][x] = frame.at(y, x, c);
            }
        }
    }
    return t;
}

Image tensor_image(const torch::Tensor& t) {
    const auto f = t.to(torch::kFloat32).contiguous();
    if (f.dim() != 4 || f.size(0) != 1 || f.size(1) != 3) {
        throw ShapeError("torchscript: decoded image must be [1,3,H,W]");
    }
    auto a = f.accessor<float, 4>();
    Image out(static_cast<int>(f.size(2)), static_cast<int>(f.size(3)));
    for (int y = 0; y < out.height(); ++y) {
        for (int x = 0; x < out.width(); ++x) {
            for (int c = 0; c < 3; ++c) {
                out.at(y, x, c) = a[0][c][y][x];
            }
        }
    }
    return out;
}

torch::Tensor latent_tensor(const LatentState& latent) {
    latent.validate();
    // Interleaved h x w x c -> 1 x c x h x w.
    auto t = torch::from_blob(const_cast<float*>(latent.values.data()), {1, latent.height, latent.width, latent.channels},
                              torch::kFloat32);
    return t.permute({0, 3, 1, 2}).contiguous();
}

LatentState tensor_latent(const torch::Tensor& t, int timestep, LatentProvenance provenance) {
    if (t.dim() != 4 || t.size(0) != 1) {
        throw ShapeError("torchscript: latent must be [1,C,h,w]");
    }
    const auto hwc = t.to(torch::kFloat32).permute({0, 2, 3, 1}).contiguous();
    LatentState out(static_cast<int>(t.size(2)), static_cast<int>(t.size(3)), static_cast<int>(t.size(1)));
    std::copy_n(hwc.data_ptr<float>(), out.values.size(), out.values.begin());
    out.timestep = timestep;
    out.provenance = provenance;
    return out;
}

torch::Tensor prompt_tensor(const PromptEmbedding& prompt) {
    auto t = torch::empty({1, prompt.shape.token_count, prompt.shape.embedding_dim}, torch::kFloat32);
    float* p = t.data_ptr<float>();
    for (std::size_t i = 0; i < prompt.values.size(); ++i) {
        p[i] = static_cast<float>(prompt.values[i]);
    }
    return t;
}

// Interpreter errors carry a script traceback; keep the final line.
std::string last_line(const char* what) {
    std::string_view s(what);
    while (!s.empty() && s.back() == '\n') {
        s.remove_suffix(1);
    }
    const auto nl = s.rfind('\n');
    return std::string(nl == std::string_view::npos ? s : s.substr(nl + 1));
}

int meta_value(const c10::Dict<std::string, int64_t>& meta, const std::string& key) {
    if (!meta.contains(key)) {
        throw NotInitializedError("torchscript backbone: meta() lacks '" + key + "'");
    }
    return static_cast<int>(meta.at(key));
}

} // namespace

class TorchNoisePredictor final : public NoisePredictor {
  public:
    TorchNoisePredictor(NoiseSchedule schedule, std::function<std::vector<float>(const LatentState&, int,
                                                                              const PromptEmbedding&)> fn)
        : schedule_(std::move(schedule)), fn_(std::move(fn)) {}
    const NoiseSchedule& schedule() const override { return schedule_; }
    std::vector<float> predict_noise(const LatentState& latent, int timestep,
                                     const PromptEmbedding& prompt) const override {
        return fn_(latent, timestep, prompt);
    }

  private:
    NoiseSchedule schedule_;
    std::function<std::vector<float>(const LatentState&, int, const PromptEmbedding&)> fn_;
};

struct TorchBackend::Impl {
    std::filesystem::path path;
    mutable torch::jit::Module module;
    mutable std::mutex mutex;
    int latent_height = 0;
    int latent_width = 0;
    int latent_channels = 0;
    int input_height = 0;
    int input_width = 0;
    HeadLayout layout;
    PromptShape prompt_shape;
    std::string checksum;
    std::unique_ptr<TorchNoisePredictor> predictor;

    torch::IValue call(const std::string& method, std::vector<torch::IValue> args) const {
        return module.get_method(method)(std::move(args));
    }

    std::pair<torch::Tensor, torch::Tensor> qk(const LatentState& latent, const torch::Tensor& prompt) const {
        const auto out = call("qk", {latent_tensor(latent), static_cast<int64_t>(latent.timestep), prompt}).toTuple();
        auto q = out->elements().at(0).toTensor();
        auto k = out->elements().at(1).toTensor();
        const std::vector<int64_t> expect = {layout.head_count(), latent_height * latent_width, layout.head_dim};
        if (q.sizes().vec() != expect || k.sizes().vec() != expect) {
            throw ShapeError("torchscript backbone: qk() returned " + c10::str(q.sizes()) + ", expected " +
                             c10::str(c10::IntArrayRef(expect)));
        }
        return {q, k};
    }

    void check_latent(const LatentState& latent) const {
        if (latent.height != latent_height || latent.width != latent_width || latent.channels != latent_channels) {
            throw ShapeError("torchscript backbone: latent shape differs from the exported lattice");
        }
    }

    void check_prompt(const PromptEmbedding& prompt) const {
        if (prompt.shape != prompt_shape || prompt.values.size() != static_cast<std::size_t>(prompt_shape.parameter_count())) {
            throw ShapeError("torchscript backbone: prompt shape differs from the exported text encoder");
        }
    }
};

TorchBackend::TorchBackend(const std::filesystem::path& module, const std::vector<std::string>& layers)
    : impl_(std::make_unique<Impl>()) {
    impl_->path = module;
    try {
        impl_->module = torch::jit::load(module.string());
    } catch (const c10::Error& e) {
        throw NotInitializedError("torchscript backbone " + module.string() + ": " + e.what_without_backtrace());
    }
    impl_->module.eval();
    const auto meta = c10::impl::toTypedDict<std::string, int64_t>(impl_->call("meta", {}).toGenericDict());
    impl_->latent_height = meta_value(meta, "latent_height");
    impl_->latent_width = meta_value(meta, "latent_width");
    impl_->latent_channels = meta_value(meta, "latent_channels");
    impl_->input_height = meta_value(meta, "input_height");
    impl_->input_width = meta_value(meta, "input_width");
    impl_->layout.heads_per_layer = meta_value(meta, "heads_per_layer");
    impl_->layout.head_dim = meta_value(meta, "head_dim");
    impl_->prompt_shape = {meta_value(meta, "token_count"), meta_value(meta, "embedding_dim")};
    for (const auto& name : impl_->call("layer_names", {}).toListRef()) {
        impl_->layout.layers.push_back(name.toStringRef());
    }
    if (!layers.empty() && layers != impl_->layout.layers) {
        std::string exported;
        for (const auto& l : impl_->layout.layers) {
            exported += (exported.empty() ? "" : ",") + l;
        }
        throw ConfigError("torchscript backbone: configured layers differ from the exported ones (" + exported + ")");
    }
    const auto alphas = impl_->call("alphas_cumprod", {}).toTensor().to(torch::kFloat64).contiguous();
    std::vector<double> ac(alphas.data_ptr<double>(), alphas.data_ptr<double>() + alphas.numel());
    Impl* impl = impl_.get();
    impl_->predictor = std::make_unique<TorchNoisePredictor>(
        NoiseSchedule::from_alphas_cumprod(std::move(ac)),
        [impl](const LatentState& latent, int timestep, const PromptEmbedding& prompt) {
            impl->check_latent(latent);
            impl->check_prompt(prompt);
            torch::NoGradGuard guard;
            std::lock_guard lock(impl->mutex);
            const auto eps =
                impl->call("predict_noise", {latent_tensor(latent), static_cast<int64_t>(timestep), prompt_tensor(prompt)})
                    .toTensor();
            const LatentState out = tensor_latent(eps, timestep, latent.provenance);
            if (out.values.size() != latent.values.size()) {
                throw ShapeError("torchscript backbone: predict_noise() changed the latent shape");
            }
            return out.values;
        });
    impl_->checksum = sha1_file(module);
}

TorchBackend::~TorchBackend() = default;

std::string TorchBackend::id() const { return "torchscript:" + impl_->path.filename().string(); }
int TorchBackend::latent_height() const { return impl_->latent_height; }
int TorchBackend::latent_width() const { return impl_->latent_width; }
int TorchBackend::latent_channels() const { return impl_->latent_channels; }
int TorchBackend::input_height() const { return impl_->input_height; }
int TorchBackend::input_width() const { return impl_->input_width; }
HeadLayout TorchBackend::head_layout() const { return impl_->layout; }
PromptShape TorchBackend::prompt_shape() const { return impl_->prompt_shape; }
const NoisePredictor* TorchBackend::noise_predictor() const { return impl_->predictor.get(); }
std::string TorchBackend::weights_checksum() const { return impl_->checksum; }

PromptEmbedding TorchBackend::encode_prompt(std::string_view text) const {
    torch::NoGradGuard guard;
    std::lock_guard lock(impl_->mutex);
    torch::Tensor t;
    try {
        t = impl_->call("encode_prompt", {std::string(text)}).toTensor();
    } catch (const std::exception& e) {
        throw ConfigError("torchscript backbone: cannot encode prompt '" + std::string(text) + "': " +
                          last_line(e.what()));
    }
    t = t.to(torch::kFloat64).contiguous();
    if (t.numel() != impl_->prompt_shape.parameter_count()) {
        throw ShapeError("torchscript backbone: encode_prompt() returned " + c10::str(t.sizes()));
    }
    PromptEmbedding p(impl_->prompt_shape);
    std::copy_n(t.data_ptr<double>(), p.values.size(), p.values.begin());
    return p;
}

LatentState TorchBackend::encode_frame(const Image& frame) const {
    if (frame.height() != impl_->input_height || frame.width() != impl_->input_width) {
        throw ShapeError("torchscript backbone: frame is " + std::to_string(frame.height()) + "x" +
                         std::to_string(frame.width()) + ", expected " + std::to_string(impl_->input_height) + "x" +
                         std::to_string(impl_->input_width));
    }
    torch::NoGradGuard guard;
    std::lock_guard lock(impl_->mutex);
    LatentState out = tensor_latent(impl_->call("encode_frame", {image_tensor(frame)}).toTensor(), 0,
                                    LatentProvenance::clean);
    impl_->check_latent(out);
    return out;
}

Image TorchBackend::decode_latent(const LatentState& latent) const {
    impl_->check_latent(latent);
    torch::NoGradGuard guard;
    std::lock_guard lock(impl_->mutex);
    return tensor_image(impl_->call("decode_latent", {latent_tensor(latent)}).toTensor());
}

QueryKeySet TorchBackend::extract_qk(const LatentState& latent, const PromptEmbedding& prompt) const {
    impl_->check_latent(latent);
    impl_->check_prompt(prompt);
    torch::NoGradGuard guard;
    std::lock_guard lock(impl_->mutex);
    const auto [q, k] = impl_->qk(latent, prompt_tensor(prompt));
    const auto qf = q.to(torch::kFloat32).contiguous();
    const auto kf = k.to(torch::kFloat32).contiguous();
    QueryKeySet out(impl_->latent_height * impl_->latent_width, impl_->layout.head_dim, impl_->layout.head_count());
    const auto per_head = out.heads.front().queries.size();
    for (std::size_t h = 0; h < out.heads.size(); ++h) {
        std::copy_n(qf.data_ptr<float>() + h * per_head, per_head, out.heads[h].queries.begin());
        std::copy_n(kf.data_ptr<float>() + h * per_head, per_head, out.heads[h].keys.begin());
    }
    return out;
}

std::vector<double> TorchBackend::prompt_vjp(const LatentState& latent, const PromptEmbedding& prompt,
                                             const QueryKeySet64& cotangent) const {
    impl_->check_latent(latent);
    impl_->check_prompt(prompt);
    cotangent.validate();
    if (cotangent.head_count() != impl_->layout.head_count() ||
        cotangent.location_count != impl_->latent_height * impl_->latent_width ||
        cotangent.head_dim != impl_->layout.head_dim) {
        throw ShapeError("torchscript backbone: cotangent layout differs from the exported heads");
    }
    const auto n = static_cast<int64_t>(cotangent.location_count);
    const auto d = static_cast<int64_t>(cotangent.head_dim);
    auto cq = torch::empty({cotangent.head_count(), n, d}, torch::kFloat32);
    auto ck = torch::empty_like(cq);
    const auto per_head = static_cast<std::size_t>(n * d);
    for (std::size_t h = 0; h < cotangent.heads.size(); ++h) {
        std::transform(cotangent.heads[h].queries.begin(), cotangent.heads[h].queries.end(),
                       cq.data_ptr<float>() + h * per_head, [](double v) { return static_cast<float>(v); });
        std::transform(cotangent.heads[h].keys.begin(), cotangent.heads[h].keys.end(),
                       ck.data_ptr<float>() + h * per_head, [](double v) { return static_cast<float>(v); });
    }
    std::lock_guard lock(impl_->mutex);
    auto theta = prompt_tensor(prompt).requires_grad_(true);
    const auto [q, k] = impl_->qk(latent, theta);
    const auto objective = (q.to(torch::kFloat32) * cq).sum() + (k.to(torch::kFloat32) * ck).sum();
    const auto grads = torch::autograd::grad({objective}, {theta}, {}, std::nullopt, false, true);
    std::vector<double> out(prompt.values.size(), 0.0);
    if (grads.front().defined()) {
        const auto g = grads.front().to(torch::kFloat64).contiguous();
        std::copy_n(g.data_ptr<double>(), out.size(), out.begin());
    }
    return out;
}

FeatureSet TorchBackend::extract_features(const LatentState& latent) const {
    impl_->check_latent(latent);
    torch::NoGradGuard guard;
    std::lock_guard lock(impl_->mutex);
    const auto f = impl_->call("features", {latent_tensor(latent), static_cast<int64_t>(latent.timestep)})
                       .toTensor()
                       .to(torch::kFloat32)
                       .contiguous();
    const int n = impl_->latent_height * impl_->latent_width;
    if (f.dim() != 2 || f.size(0) != n) {
        throw ShapeError("torchscript backbone: features() returned " + c10::str(f.sizes()));
    }
    FeatureSet out;
    out.location_count = n;
    out.channels = static_cast<int>(f.size(1));
    out.values.assign(f.data_ptr<float>(), f.data_ptr<float>() + f.numel());
    return out;
}

} // namespace drift
