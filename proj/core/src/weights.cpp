#include "ntpu/weights.hpp"

#include <cstring>
#include <fstream>
#include <random>

#include "ntpu/errors.hpp"

namespace ntpu {

namespace {

// Expected weight shape for layer i, or empty if the layer has no parameters.
std::vector<uint32_t> expected_shape(const LayerSpec& layer, const Shape3& in) {
    if (auto* c = std::get_if<Conv2D>(&layer))
        return {c->out_ch, c->kernel_h, c->kernel_w, in.c};
    if (auto* f = std::get_if<FullyConnected>(&layer))
        return {f->out_dim, uint32_t(in.elems())};
    return {};
}

} // namespace

void validate_weights(const NetworkDesc& net, const NetworkWeights& w) {
    auto shapes = infer_shapes(net);
    size_t next = 0;
    for (size_t i = 0; i < net.layers.size(); ++i) {
        auto want = expected_shape(net.layers[i], shapes[i]);
        if (want.empty()) continue;
        if (next >= w.layers.size())
            throw IoError("weights missing for layer " + std::to_string(i));
        const LayerWeights& lw = w.layers[next++];
        if (lw.layer_index != i)
            throw IoError("weights entry for layer " + std::to_string(lw.layer_index) +
                          " where layer " + std::to_string(i) + " was expected");
        if (lw.weights.shape != want) {
            std::string got, exp;
            for (uint32_t d : lw.weights.shape) got += (got.empty() ? "" : "x") + std::to_string(d);
            for (uint32_t d : want) exp += (exp.empty() ? "" : "x") + std::to_string(d);
            throw IoError("layer " + std::to_string(i) + " weight shape " + got +
                          " does not match network (expected " + exp + ")");
        }
        if (lw.weights.data.size() != lw.weights.size())
            throw IoError("layer " + std::to_string(i) + " weight data length mismatch");
        if (lw.biases.size() != want[0])
            throw IoError("layer " + std::to_string(i) + " has " + std::to_string(lw.biases.size()) +
                          " biases, expected " + std::to_string(want[0]));
    }
    if (next != w.layers.size())
        throw IoError("weights file has " + std::to_string(w.layers.size() - next) +
                      " extra layer entries");
}

NetworkWeights gen_random_weights(uint64_t seed, const NetworkDesc& net) {
    auto shapes = infer_shapes(net);
    NetworkWeights w;
    std::mt19937_64 rng(seed ^ 0x776774ULL);
    for (size_t i = 0; i < net.layers.size(); ++i) {
        auto shape = expected_shape(net.layers[i], shapes[i]);
        if (shape.empty()) continue;
        LayerWeights lw;
        lw.layer_index = uint32_t(i);
        lw.weights = QTensor::zeros(shape);
        for (auto& v : lw.weights.data) v = int8_t(int(rng() % 256) - 128);
        lw.biases.resize(shape[0]);
        for (auto& b : lw.biases) b = int(rng() % 256) - 128;
        w.layers.push_back(std::move(lw));
    }
    return w;
}

namespace {

constexpr char kWeightsMagic[7] = {'N', 'T', 'P', 'U', 'W', 'G', 'T'};
constexpr uint8_t kWeightsVersion = 1;

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(uint8_t(v >> (8 * i)));
}

struct Cursor {
    const std::vector<uint8_t>& bytes;
    size_t pos = 0;

    void need(size_t n) const {
        if (bytes.size() - pos < n) throw IoError("truncated weights file");
    }
    uint8_t u8() {
        need(1);
        return bytes[pos++];
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
};

} // namespace

std::vector<uint8_t> serialize_weights(const NetworkWeights& w) {
    std::vector<uint8_t> out;
    out.insert(out.end(), kWeightsMagic, kWeightsMagic + 7);
    out.push_back(kWeightsVersion);
    put_u32(out, uint32_t(w.layers.size()));
    for (const LayerWeights& lw : w.layers) {
        if (lw.weights.shape.empty() || lw.weights.shape.size() > 255)
            throw IoError("weight tensor rank must be in [1, 255]");
        if (lw.weights.data.size() != lw.weights.size())
            throw IoError("weight tensor data length does not match shape");
        put_u32(out, lw.layer_index);
        out.push_back(uint8_t(lw.weights.shape.size()));
        for (uint32_t d : lw.weights.shape) put_u32(out, d);
        const uint8_t* p = reinterpret_cast<const uint8_t*>(lw.weights.data.data());
        out.insert(out.end(), p, p + lw.weights.data.size());
        put_u32(out, uint32_t(lw.biases.size()));
        for (int32_t b : lw.biases) put_u32(out, uint32_t(b));
    }
    return out;
}

NetworkWeights deserialize_weights(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kWeightsMagic, 7) != 0)
        throw IoError("bad weights magic (expected NTPUWGT)");
    if (bytes[7] != kWeightsVersion)
        throw IoError("unsupported weights version " + std::to_string(bytes[7]));
    Cursor c{bytes, 8};
    uint32_t count = c.u32();
    NetworkWeights w;
    w.layers.reserve(count);
    for (uint32_t e = 0; e < count; ++e) {
        LayerWeights lw;
        lw.layer_index = c.u32();
        size_t ndims = c.u8();
        if (ndims == 0) throw IoError("weight tensor rank 0 in entry " + std::to_string(e));
        lw.weights.shape.resize(ndims);
        uint64_t n = 1;
        for (size_t d = 0; d < ndims; ++d) {
            lw.weights.shape[d] = c.u32();
            n *= lw.weights.shape[d];
        }
        c.need(n);
        lw.weights.data.resize(n);
        std::memcpy(lw.weights.data.data(), bytes.data() + c.pos, n);
        c.pos += n;
        uint32_t nb = c.u32();
        lw.biases.resize(nb);
        for (uint32_t i = 0; i < nb; ++i) lw.biases[i] = int32_t(c.u32());
        w.layers.push_back(std::move(lw));
    }
    if (c.pos != bytes.size()) throw IoError("trailing bytes after last weights entry");
    return w;
}

void write_weights_file(const std::string& path, const NetworkWeights& w) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    auto bytes = serialize_weights(w);
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw IoError("failed writing '" + path + "'");
}

NetworkWeights read_weights_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open weights file '" + path + "'");
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    return deserialize_weights(bytes);
}

} // namespace ntpu
