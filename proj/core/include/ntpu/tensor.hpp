#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ntpu/network.hpp"

namespace ntpu {

// Dense int8 tensor, row-major. Conventions used throughout:
//   activations: {height, width, channels}
//   conv weights: {out_ch, kernel_h, kernel_w, in_ch}
//   fully-connected weights: {out_dim, in_dim}, in_dim indexing the
//   height-major, then width, then channel flattening of the input.
struct QTensor {
    std::vector<uint32_t> shape;
    std::vector<int8_t> data;

    static QTensor zeros(std::vector<uint32_t> shape);

    uint64_t size() const;
    uint32_t dim(size_t i) const { return shape.at(i); }

    int8_t& at3(uint32_t i, uint32_t j, uint32_t k);
    int8_t at3(uint32_t i, uint32_t j, uint32_t k) const;
    int8_t& at4(uint32_t i, uint32_t j, uint32_t k, uint32_t l);
    int8_t at4(uint32_t i, uint32_t j, uint32_t k, uint32_t l) const;

    bool operator==(const QTensor&) const = default;
};

QTensor activation_tensor(const Shape3& s); // zeros, shape {h, w, c}

// Deterministic int8 input for a given seed, full [-128, 127] range.
QTensor gen_random_input(uint64_t seed, const Shape3& shape);

// Container: magic "NTPUTEN", version byte 1, u8 ndims, u32 LE dims, data.
std::vector<uint8_t> serialize_tensor(const QTensor& t);
QTensor deserialize_tensor(const std::vector<uint8_t>& bytes);
void write_tensor_file(const std::string& path, const QTensor& t);
QTensor read_tensor_file(const std::string& path);

} // namespace ntpu
