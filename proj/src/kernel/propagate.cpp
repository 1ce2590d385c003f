#include "drift/kernel/propagate.hpp"

#include "drift/core/error.hpp"

#include <string>

namespace drift {
namespace {

std::vector<const Grid<float>*> gather_sources(const PropagationKernel& kernel, const ReferenceBank& bank,
                                               int channel) {
    if (bank.empty()) {
        throw ConfigError("propagate: reference bank is empty");
    }
    std::vector<const Grid<float>*> sources;
    for (int frame : kernel.source_frames) {
        const auto& entry = bank.find(frame);
        if (channel < 0 || channel >= entry.mask.channel_count()) {
            throw ShapeError("propagate: channel " + std::to_string(channel) + " missing from frame " +
                             std::to_string(frame));
        }
        const auto& grid = entry.mask[channel];
        if (static_cast<int>(grid.size()) != kernel.source_locations) {
            throw ShapeError("propagate: reference mask is not at latent resolution");
        }
        sources.push_back(&grid);
    }
    return sources;
}

int output_height(const ReferenceBank& bank) {
    return bank.entries().front().mask.height();
}

int output_width(const ReferenceBank& bank) {
    return bank.entries().front().mask.width();
}

} // namespace

Grid<float> propagate_channel(const PropagationKernel& kernel, const ReferenceBank& bank, int channel) {
    const auto sources = gather_sources(kernel, bank, channel);
    Grid<float> out(output_height(bank), output_width(bank));
    if (static_cast<int>(out.size()) != kernel.target_count) {
        throw ShapeError("propagate: kernel rows do not match the latent lattice");
    }
#pragma omp parallel for schedule(static)
    for (int q = 0; q < kernel.target_count; ++q) {
        double acc = 0.0;
        for (auto i = kernel.row_begin(q); i < kernel.row_end(q); ++i) {
            acc += static_cast<double>(kernel.values[i]) * (*sources[kernel.slots[i]])[kernel.locations[i]];
        }
        out[static_cast<std::size_t>(q)] = static_cast<float>(acc);
    }
    return out;
}

SoftMaskStack propagate(const PropagationKernel& kernel, const ReferenceBank& bank) {
    if (bank.empty()) {
        throw ConfigError("propagate: reference bank is empty");
    }
    SoftMaskStack out;
    const int channels = bank.entries().front().mask.channel_count();
    for (int c = 0; c < channels; ++c) {
        out.channels.push_back(propagate_channel(kernel, bank, c));
    }
    return out;
}

namespace reference {

Grid<float> propagate_channel(const PropagationKernel& kernel, const ReferenceBank& bank, int channel) {
    const auto sources = gather_sources(kernel, bank, channel);
    Grid<float> out(output_height(bank), output_width(bank));
    for (int q = 0; q < kernel.target_count; ++q) {
        double acc = 0.0;
        for (auto i = kernel.row_begin(q); i < kernel.row_end(q); ++i) {
            acc += static_cast<double>(kernel.values[i]) * (*sources[kernel.slots[i]])[kernel.locations[i]];
        }
        out[static_cast<std::size_t>(q)] = static_cast<float>(acc);
    }
    return out;
}

} // namespace reference

} // namespace drift
