#pragma once

#include "drift/kernel/propagation.hpp"
#include "drift/kernel/reference_bank.hpp"

namespace drift {

/// One channel of M_t = sum_s A_{t,s} M_s over the kernel's reference frames.
Grid<float> propagate_channel(const PropagationKernel& kernel, const ReferenceBank& bank, int channel);

/// Every channel of the bank masks pushed through the same kernel.
SoftMaskStack propagate(const PropagationKernel& kernel, const ReferenceBank& bank);

namespace reference {

Grid<float> propagate_channel(const PropagationKernel& kernel, const ReferenceBank& bank, int channel);

} // namespace reference

} // namespace drift
