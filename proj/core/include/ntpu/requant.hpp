#pragma once

#include <cstdint>

#include "ntpu/errors.hpp"

namespace ntpu {

// Accumulator-to-int8 rescale: v * multiplier, arithmetic shift right with
// round-half-away-from-zero, then saturate to [-128, 127]. This is the one
// numeric definition shared by the datapath and the reference executor.
struct RequantParams {
    int32_t multiplier = 1;
    uint8_t shift = 0; // 0..31

    bool operator==(const RequantParams&) const = default;
};

// Scaled, rounded value before saturation. Exposed so calibration code can
// measure how often a candidate (multiplier, shift) would clip.
inline int64_t requantize_preclamp(int32_t v, RequantParams rq) {
    if (rq.shift > 31) throw Error("requantize: shift out of range");
    int64_t t = int64_t(v) * rq.multiplier;
    if (rq.shift == 0) return t;
    int64_t bias = int64_t(1) << (rq.shift - 1);
    return t >= 0 ? (t + bias) >> rq.shift : -((-t + bias) >> rq.shift);
}

inline int8_t requantize(int32_t v, RequantParams rq) {
    int64_t r = requantize_preclamp(v, rq);
    if (r > 127) return 127;
    if (r < -128) return -128;
    return int8_t(r);
}

} // namespace ntpu
