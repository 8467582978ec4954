#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ntpu/network.hpp"
#include "ntpu/tensor.hpp"

namespace ntpu {

// Parameters for one conv or fully-connected layer, in the canonical logical
// layout ({out, kh, kw, in} / {out, in}) -- deliberately not the MAC-tiled
// order, so the same file is valid for every accelerator geometry.
struct LayerWeights {
    uint32_t layer_index = 0; // position in NetworkDesc::layers
    QTensor weights;
    std::vector<int32_t> biases; // one per output channel / output dim

    bool operator==(const LayerWeights&) const = default;
};

struct NetworkWeights {
    std::vector<LayerWeights> layers; // parameterized layers only, in order

    bool operator==(const NetworkWeights&) const = default;
};

// Throws IoError naming the first layer whose entry is missing, duplicated,
// or shaped differently than the description requires.
void validate_weights(const NetworkDesc& net, const NetworkWeights& w);

// Deterministic parameters for a description: weights and biases drawn
// uniformly from [-128, 127] (biases ride an int8 lane, see the compiler).
NetworkWeights gen_random_weights(uint64_t seed, const NetworkDesc& net);

// Container: magic "NTPUWGT", version byte 1, u32 LE entry count, then per
// entry: u32 layer index, u8 ndims, u32 LE dims, raw int8 weights,
// u32 LE bias count, i32 LE biases.
std::vector<uint8_t> serialize_weights(const NetworkWeights& w);
NetworkWeights deserialize_weights(const std::vector<uint8_t>& bytes);
void write_weights_file(const std::string& path, const NetworkWeights& w);
NetworkWeights read_weights_file(const std::string& path);

} // namespace ntpu
