#pragma once

#include "drift/pipeline/commands.hpp"

#include "toy_dataset.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace drift::testing {

/// Tracking config for the toy fixtures: pixel-resolution lattice (so the
/// upsampling back to the frame is exact), no refinement, short adaptation.
inline RunConfig toy_config(const std::filesystem::path& output) {
    RunConfig c;
    c.backend.stride = 1;
    c.refinement = RefinementMode::none;
    c.prompt = PromptMode::learned;
    c.optimizer.steps = 10;
    c.output_dir = output;
    return c;
}

/// DAVIS-layout root holding the 3-frame translation sequence "square".
inline std::filesystem::path write_translation_dataset(const std::string& tag) {
    const auto root = fresh_dir(tag);
    write_toy_sequence(root, "square", 32, 32, 1, translation_frames());
    return root;
}

inline std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

} // namespace drift::testing
