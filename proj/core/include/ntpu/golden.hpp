#pragma once

#include <cstdint>
#include <vector>

#include "ntpu/network.hpp"
#include "ntpu/tensor.hpp"
#include "ntpu/weights.hpp"

namespace ntpu {

// Reference executor: plain loop nests over the logical tensors, nothing
// shared with the accelerator model except the requantize definition.
// Accumulation runs in int64 and is truncated to int32 before requantize;
// truncation mod 2^32 distributes over addition, so this matches int32
// wraparound accumulation in any summation order.

QTensor conv2d_ref(const QTensor& in, const Conv2D& p, const QTensor& w,
                   const std::vector<int32_t>& biases);
QTensor fc_ref(const QTensor& in, const FullyConnected& p, const QTensor& w,
               const std::vector<int32_t>& biases);
QTensor maxpool_ref(const QTensor& in, const MaxPool2D& p);
QTensor relu_ref(const QTensor& in);

// Activations after every layer; result[0] is the input, result[i+1] the
// output of layer i. Validates the weights against the description first.
std::vector<QTensor> run_network_ref(const NetworkDesc& net, const NetworkWeights& w,
                                     const QTensor& input);

enum class SizeClass {
    Tiny,  // 1-4 layers, <= 12x12 input: fuzzing throughput
    Small, // 2-6 layers, <= 28x28 input: LeNet-scale coverage
};

// Deterministic random network with matching weights. Requantizers are
// calibrated against those weights and the same-seed random input:
// multiplier drawn from {1, 3}, then the smallest shift that clips at most
// 1% of that layer's accumulator values, so outputs exercise the int8 range
// instead of slamming into the clamps.
std::pair<NetworkDesc, NetworkWeights> gen_random_network(uint64_t seed,
                                                          SizeClass size = SizeClass::Tiny);

} // namespace ntpu
