#include "drift/torch/torch_segmenter.hpp"

#include "drift/core/error.hpp"

#include <torch/script.h>

#include <mutex>

namespace drift {

struct TorchSegmenter::Impl {
    std::filesystem::path path;
    mutable torch::jit::Module module;
    mutable std::mutex mutex;
    torch::IValue embedding;
    int frame = -1;
    int height = 0;
    int width = 0;
};

TorchSegmenter::TorchSegmenter(const std::filesystem::path& module) : impl_(std::make_unique<Impl>()) {
    impl_->path = module;
    try {
        impl_->module = torch::jit::load(module.string());
    } catch (const c10::Error& e) {
        throw NotInitializedError("torchscript segmenter " + module.string() + ": " + e.what_without_backtrace());
    }
    impl_->module.eval();
}

TorchSegmenter::~TorchSegmenter() = default;

std::string TorchSegmenter::id() const { return "torchscript:" + impl_->path.filename().string(); }

void TorchSegmenter::prepare(const Image& frame, int frame_index) {
    auto t = torch::empty({1, 3, frame.height(), frame.width()}, torch::kFloat32);
    auto a = t.accessor<float, 4>();
    for (int y = 0; y < frame.height(); ++y) {
        for (int x = 0; x < frame.width(); ++x) {
            for (int c = 0; c < 3; ++c) {
                a[0][c][y][x] = frame.at(y, x, c);
            }
        }
    }
    torch::NoGradGuard guard;
    std::lock_guard lock(impl_->mutex);
    impl_->embedding = impl_->module.get_method("embed")({t});
    impl_->frame = frame_index;
    impl_->height = frame.height();
    impl_->width = frame.width();
}

std::vector<SegmenterMask> TorchSegmenter::segment(std::span<const Point> points) const {
    if (impl_->frame < 0) {
        throw NotInitializedError("torchscript segmenter: segment() before prepare()");
    }
    if (points.empty()) {
        throw ConfigError("torchscript segmenter: no prompt points");
    }
    const auto count = static_cast<int64_t>(points.size());
    auto coords = torch::empty({1, count, 2}, torch::kFloat32);
    for (int64_t i = 0; i < count; ++i) {
        coords[0][i][0] = static_cast<float>(points[static_cast<std::size_t>(i)].x);
        coords[0][i][1] = static_cast<float>(points[static_cast<std::size_t>(i)].y);
    }
    const auto labels = torch::ones({1, count}, torch::kInt64);
    torch::NoGradGuard guard;
    std::lock_guard lock(impl_->mutex);
    const auto out = impl_->module.get_method("segment")({impl_->embedding, coords, labels}).toTuple();
    const auto logits = out->elements().at(0).toTensor().to(torch::kFloat32).contiguous();
    const auto scores = out->elements().at(1).toTensor().to(torch::kFloat64).contiguous();
    if (logits.dim() != 4 || logits.size(0) != 1 || logits.size(1) < 1 || logits.size(2) != impl_->height ||
        logits.size(3) != impl_->width || scores.numel() != logits.size(1)) {
        throw ShapeError("torchscript segmenter: segment() returned " + c10::str(logits.sizes()) + " masks and " +
                         std::to_string(scores.numel()) + " scores for a " + std::to_string(impl_->height) + "x" +
                         std::to_string(impl_->width) + " frame");
    }
    std::vector<SegmenterMask> masks(static_cast<std::size_t>(logits.size(1)));
    const auto plane = static_cast<std::size_t>(impl_->height) * static_cast<std::size_t>(impl_->width);
    for (std::size_t m = 0; m < masks.size(); ++m) {
        masks[m].logits = Grid<float>(impl_->height, impl_->width);
        std::copy_n(logits.data_ptr<float>() + m * plane, plane, masks[m].logits.values().begin());
        masks[m].score = scores.data_ptr<double>()[m];
    }
    return masks;
}

} // namespace drift
