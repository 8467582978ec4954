#pragma once

#include <cstdint>
#include <string>

#include "ntpu/config.hpp"
#include "ntpu/network.hpp"
#include "ntpu/sim.hpp"
#include "ntpu/tensor.hpp"
#include "ntpu/weights.hpp"

namespace ntpu {

// Outcome of a bit-exactness check between the simulated accelerator and the
// reference executor. On mismatch the checker re-runs growing prefixes of the
// network to name the first layer whose output diverges.
struct VerifyResult {
    bool ok = false;
    int32_t layer = -1;  // first diverging layer (0-based), -1 if outputs match
    int64_t index = -1;  // first diverging flat element within that layer's output
    int32_t got = 0;     // simulated value at that element
    int32_t want = 0;    // reference value at that element
    std::string message; // human-readable verdict
    PerfReport report;   // perf counters from the full-network run
};

// Compile the network, run it on the simulator, run the reference executor on
// the same input, and compare final outputs element-for-element.
VerifyResult verify_network(const NetworkDesc& net, const NetworkWeights& w,
                            const AcceleratorConfig& cfg, const QTensor& input);

} // namespace ntpu
