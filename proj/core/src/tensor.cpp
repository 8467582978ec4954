#include "ntpu/tensor.hpp"

#include <cstring>
#include <fstream>
#include <random>

#include "ntpu/errors.hpp"

namespace ntpu {

QTensor QTensor::zeros(std::vector<uint32_t> shape) {
    QTensor t;
    t.shape = std::move(shape);
    t.data.assign(t.size(), 0);
    return t;
}

uint64_t QTensor::size() const {
    uint64_t n = 1;
    for (uint32_t d : shape) n *= d;
    return n;
}

int8_t& QTensor::at3(uint32_t i, uint32_t j, uint32_t k) {
    return data[(uint64_t(i) * shape[1] + j) * shape[2] + k];
}
int8_t QTensor::at3(uint32_t i, uint32_t j, uint32_t k) const {
    return data[(uint64_t(i) * shape[1] + j) * shape[2] + k];
}
int8_t& QTensor::at4(uint32_t i, uint32_t j, uint32_t k, uint32_t l) {
    return data[((uint64_t(i) * shape[1] + j) * shape[2] + k) * shape[3] + l];
}
int8_t QTensor::at4(uint32_t i, uint32_t j, uint32_t k, uint32_t l) const {
    return data[((uint64_t(i) * shape[1] + j) * shape[2] + k) * shape[3] + l];
}

QTensor activation_tensor(const Shape3& s) {
    return QTensor::zeros({s.h, s.w, s.c});
}

QTensor gen_random_input(uint64_t seed, const Shape3& shape) {
    QTensor t = activation_tensor(shape);
    // mt19937_64 output is fully specified, so this is reproducible across
    // platforms (std:: distributions are not, hence the modulo draw).
    std::mt19937_64 rng(seed ^ 0x746e7075ULL);
    for (auto& v : t.data) v = int8_t(int(rng() % 256) - 128);
    return t;
}

namespace {
constexpr char kTensorMagic[7] = {'N', 'T', 'P', 'U', 'T', 'E', 'N'};
constexpr uint8_t kTensorVersion = 1;
} // namespace

std::vector<uint8_t> serialize_tensor(const QTensor& t) {
    if (t.shape.empty() || t.shape.size() > 255)
        throw IoError("tensor rank must be in [1, 255]");
    if (t.data.size() != t.size())
        throw IoError("tensor data length does not match shape");
    std::vector<uint8_t> out;
    out.reserve(9 + 4 * t.shape.size() + t.data.size());
    out.insert(out.end(), kTensorMagic, kTensorMagic + 7);
    out.push_back(kTensorVersion);
    out.push_back(uint8_t(t.shape.size()));
    for (uint32_t d : t.shape)
        for (int i = 0; i < 4; ++i) out.push_back(uint8_t(d >> (8 * i)));
    const uint8_t* p = reinterpret_cast<const uint8_t*>(t.data.data());
    out.insert(out.end(), p, p + t.data.size());
    return out;
}

QTensor deserialize_tensor(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 9 || std::memcmp(bytes.data(), kTensorMagic, 7) != 0)
        throw IoError("bad tensor magic (expected NTPUTEN)");
    if (bytes[7] != kTensorVersion)
        throw IoError("unsupported tensor version " + std::to_string(bytes[7]));
    size_t ndims = bytes[8];
    if (ndims == 0 || bytes.size() < 9 + 4 * ndims)
        throw IoError("truncated tensor header");
    QTensor t;
    t.shape.resize(ndims);
    for (size_t d = 0; d < ndims; ++d) {
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(bytes[9 + 4 * d + i]) << (8 * i);
        t.shape[d] = v;
    }
    uint64_t n = t.size();
    if (bytes.size() != 9 + 4 * ndims + n)
        throw IoError("tensor file size does not match shape");
    t.data.resize(n);
    std::memcpy(t.data.data(), bytes.data() + 9 + 4 * ndims, n);
    return t;
}

void write_tensor_file(const std::string& path, const QTensor& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    auto bytes = serialize_tensor(t);
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw IoError("failed writing '" + path + "'");
}

QTensor read_tensor_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open tensor file '" + path + "'");
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    return deserialize_tensor(bytes);
}

} // namespace ntpu
