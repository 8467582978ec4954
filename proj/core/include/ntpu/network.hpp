#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "ntpu/errors.hpp"
#include "ntpu/isa.hpp"

namespace ntpu {

// Semantic problems with a network that parsed fine (shape underflow,
// mismatched weights). The CLI reports these as compile failures.
class NetworkError : public Error {
public:
    using Error::Error;
};

struct Shape3 {
    uint32_t c = 0, h = 0, w = 0; // channels, height, width

    bool operator==(const Shape3&) const = default;
    uint64_t elems() const { return uint64_t(c) * h * w; }
};

struct Conv2D {
    uint32_t out_ch = 1;
    uint32_t kernel_h = 1, kernel_w = 1;
    uint32_t stride = 1;
    uint32_t pad = 0;
    ActFunc act = ActFunc::Identity;
    RequantParams rq;

    bool operator==(const Conv2D&) const = default;
};

struct FullyConnected {
    uint32_t out_dim = 1;
    ActFunc act = ActFunc::Identity;
    RequantParams rq;

    bool operator==(const FullyConnected&) const = default;
};

struct MaxPool2D {
    uint32_t window = 2;
    uint32_t stride = 2;

    bool operator==(const MaxPool2D&) const = default;
};

using LayerSpec = std::variant<Conv2D, FullyConnected, MaxPool2D>;

struct NetworkDesc {
    std::string name;
    Shape3 input;
    std::vector<LayerSpec> layers;
};

bool layer_has_params(const LayerSpec& layer);

// Per-layer output shapes; result[0] is the input shape, result[i+1] the
// output of layer i. Throws NetworkError naming the first layer whose
// output would underflow.
std::vector<Shape3> infer_shapes(const NetworkDesc& net);

// Weights plus biases: conv counts out_ch*(in_ch*kh*kw + 1), fully connected
// out*(in + 1), pooling nothing.
uint64_t count_params(const NetworkDesc& net);

// Text format, one directive per line, '#' comments:
//   input <channels> <height> <width>
//   conv out=6 k=5 s=1 p=0 act=relu rq=1:0
//   pool w=2 s=2
//   fc out=120 act=relu rq=1:0
// Optional "name <string>" line. k= sets a square kernel; kh=/kw= set the
// sides individually. s/p/act/rq are optional (1, 0, identity, 1:0); pool
// stride defaults to the window. Errors carry 1-based line numbers.
NetworkDesc parse_network(const std::string& text);
NetworkDesc load_network_file(const std::string& path);

// Canonical text round-trippable through parse_network.
std::string format_network(const NetworkDesc& net);

} // namespace ntpu
