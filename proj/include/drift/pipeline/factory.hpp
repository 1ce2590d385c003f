#pragma once

#include "drift/backend/backend.hpp"
#include "drift/pipeline/config.hpp"
#include "drift/refine/segmenter.hpp"

#include <map>
#include <memory>

namespace drift {

/// Backend for frames of the given size. Synthetic backends put one lattice
/// cell on every `stride` pixels; torchscript backends load the exported
/// backbone (fails with NotInitializedError when weights are missing or the
/// build lacks TorchScript support).
std::unique_ptr<Backend> make_backend(const BackendConfig& config, int image_height, int image_width);

/// Segmenter for refinement. The oracle answers from `truth` (frame -> mask).
std::unique_ptr<Segmenter> make_segmenter(const SegmenterConfig& config, const std::map<int, HardMask>& truth,
                                          int frame_count);

/// Lattice of `backend` for frames of the given size.
LatticeGeometry backend_geometry(const Backend& backend, int image_height, int image_width);

/// True when the library was built with TorchScript adapters.
bool torch_available();

} // namespace drift
