#include "ntpu/machine.hpp"

#include <algorithm>
#include <cstring>

#include "ntpu/errors.hpp"
#include "ntpu/requant.hpp"

namespace ntpu {

MachineState::MachineState(const AcceleratorConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    ub_.assign(size_t(cfg_.ub_rows) * cfg_.ub_width, 0);
    acc_.assign(size_t(cfg_.acc_rows) * cfg_.acc_width, 0);
}

void MachineState::load_host_image(const std::vector<int8_t>& image) {
    if (image.size() > host_.size())
        throw MachineError("host image (" + std::to_string(image.size()) +
                           " bytes) exceeds host memory (" +
                           std::to_string(host_.size()) + " bytes)");
    std::copy(image.begin(), image.end(), host_.begin());
}

void MachineState::load_dram_image(const std::vector<int8_t>& image) {
    if (image.size() > dram_.size())
        throw MachineError("dram image (" + std::to_string(image.size()) +
                           " bytes) exceeds dram (" + std::to_string(dram_.size()) +
                           " bytes)");
    std::copy(image.begin(), image.end(), dram_.begin());
}

int8_t MachineState::ub_at(uint32_t row, uint32_t lane) const {
    check_ub_range(row, 1, "ub_at");
    if (lane >= cfg_.ub_width) throw MachineError("ub_at: lane out of range");
    return ub_[size_t(row) * cfg_.ub_width + lane];
}

int32_t MachineState::acc_at(uint32_t row, uint32_t lane) const {
    check_acc_range(row, 1, "acc_at");
    if (lane >= cfg_.acc_width) throw MachineError("acc_at: lane out of range");
    return acc_[size_t(row) * cfg_.acc_width + lane];
}

void MachineState::poke_ub(uint32_t row, uint32_t lane, int8_t v) {
    check_ub_range(row, 1, "poke_ub");
    if (lane >= cfg_.ub_width) throw MachineError("poke_ub: lane out of range");
    ub_[size_t(row) * cfg_.ub_width + lane] = v;
}

void MachineState::poke_acc(uint32_t row, uint32_t lane, int32_t v) {
    check_acc_range(row, 1, "poke_acc");
    if (lane >= cfg_.acc_width) throw MachineError("poke_acc: lane out of range");
    acc_[size_t(row) * cfg_.acc_width + lane] = v;
}

void MachineState::push_weight_tile(std::vector<int8_t> tile) {
    if (tile.size() != cfg_.tile_bytes())
        throw MachineError("weight tile has " + std::to_string(tile.size()) +
                           " bytes, expected " + std::to_string(cfg_.tile_bytes()));
    if (fifo_.size() >= cfg_.weight_fifo_tiles)
        throw MachineError("weight FIFO full (capacity " +
                           std::to_string(cfg_.weight_fifo_tiles) + " tiles)");
    fifo_.push_back(std::move(tile));
}

void MachineState::advance_tile() {
    if (fifo_.empty()) throw MachineError("weight FIFO empty");
    loaded_ = std::move(fifo_.front());
    fifo_.pop_front();
}

std::vector<int8_t> MachineState::read_dram_tile(uint64_t dram_addr) const {
    uint64_t bytes = cfg_.tile_bytes();
    if (dram_addr > dram_.size() || dram_.size() - dram_addr < bytes)
        throw MachineError("dram read [" + std::to_string(dram_addr) + ", " +
                           std::to_string(dram_addr + bytes) + ") out of bounds (" +
                           std::to_string(dram_.size()) + " bytes)");
    return std::vector<int8_t>(dram_.begin() + long(dram_addr),
                               dram_.begin() + long(dram_addr + bytes));
}

void MachineState::read_host_to_ub(uint64_t host_addr, uint32_t ub_row,
                                   uint32_t num_rows, uint32_t valid_lanes) {
    if (valid_lanes < 1 || valid_lanes > cfg_.ub_width)
        throw MachineError("valid_lanes " + std::to_string(valid_lanes) +
                           " out of range [1, " + std::to_string(cfg_.ub_width) + "]");
    check_ub_range(ub_row, num_rows, "read_host_to_ub");
    uint64_t bytes = uint64_t(num_rows) * valid_lanes;
    if (host_addr > host_.size() || host_.size() - host_addr < bytes)
        throw MachineError("host read [" + std::to_string(host_addr) + ", " +
                           std::to_string(host_addr + bytes) + ") out of bounds (" +
                           std::to_string(host_.size()) + " bytes)");
    for (uint32_t n = 0; n < num_rows; ++n) {
        int8_t* row = &ub_[size_t(ub_row + n) * cfg_.ub_width];
        const int8_t* src = &host_[host_addr + uint64_t(n) * valid_lanes];
        std::memcpy(row, src, valid_lanes);
        std::memset(row + valid_lanes, 0, cfg_.ub_width - valid_lanes);
    }
}

void MachineState::write_ub_to_host(uint32_t ub_row, uint32_t num_rows,
                                    uint64_t host_addr, uint32_t valid_lanes) {
    if (valid_lanes < 1 || valid_lanes > cfg_.ub_width)
        throw MachineError("valid_lanes " + std::to_string(valid_lanes) +
                           " out of range [1, " + std::to_string(cfg_.ub_width) + "]");
    check_ub_range(ub_row, num_rows, "write_ub_to_host");
    uint64_t bytes = uint64_t(num_rows) * valid_lanes;
    if (host_addr > host_.size() || host_.size() - host_addr < bytes)
        throw MachineError("host write [" + std::to_string(host_addr) + ", " +
                           std::to_string(host_addr + bytes) + ") out of bounds (" +
                           std::to_string(host_.size()) + " bytes)");
    for (uint32_t n = 0; n < num_rows; ++n) {
        const int8_t* row = &ub_[size_t(ub_row + n) * cfg_.ub_width];
        std::memcpy(&host_[host_addr + uint64_t(n) * valid_lanes], row, valid_lanes);
    }
}

void MachineState::systolic_matmul(uint32_t ub_row, uint32_t num_rows,
                                   uint32_t acc_row, bool accumulate) {
    if (!loaded_) throw MachineError("no loaded tile");
    check_ub_range(ub_row, num_rows, "systolic_matmul");
    check_acc_range(acc_row, num_rows, "systolic_matmul");

    const std::vector<int8_t>& tile = *loaded_;
    uint32_t depth = std::min(cfg_.mac_rows, cfg_.ub_width);
    for (uint32_t n = 0; n < num_rows; ++n) {
        const int8_t* in = &ub_[size_t(ub_row + n) * cfg_.ub_width];
        int32_t* out = &acc_[size_t(acc_row + n) * cfg_.acc_width];
        for (uint32_t j = 0; j < cfg_.mac_cols; ++j) {
            uint32_t sum = 0; // unsigned for defined two's-complement wrap
            for (uint32_t r = 0; r < depth; ++r)
                sum += uint32_t(int32_t(in[r]) * int32_t(tile[size_t(r) * cfg_.mac_cols + j]));
            if (accumulate) sum += uint32_t(out[j]);
            out[j] = int32_t(sum);
        }
    }
}

void MachineState::post_process(const Activate& op) {
    check_acc_range(op.acc_row, op.num_rows, "post_process");
    if (op.func == ActFunc::MaxPool) {
        if (op.window < 1 || op.window > op.num_rows)
            throw MachineError("maxpool window " + std::to_string(op.window) +
                               " out of range for num_rows " + std::to_string(op.num_rows));
        if (op.stride < 1 || (op.num_rows - op.window) % op.stride != 0)
            throw MachineError("maxpool window/stride does not tile num_rows exactly");
        uint32_t out_rows = (op.num_rows - op.window) / op.stride + 1;
        check_ub_range(op.ub_dest_row, out_rows, "post_process");
        for (uint32_t o = 0; o < out_rows; ++o) {
            int8_t* dst = &ub_[size_t(op.ub_dest_row + o) * cfg_.ub_width];
            for (uint32_t j = 0; j < cfg_.acc_width; ++j) {
                int32_t m = acc_[size_t(op.acc_row + uint64_t(o) * op.stride) * cfg_.acc_width + j];
                for (uint32_t k = 1; k < op.window; ++k)
                    m = std::max(m, acc_[size_t(op.acc_row + uint64_t(o) * op.stride + k) *
                                             cfg_.acc_width + j]);
                dst[j] = requantize(m, op.rq);
            }
        }
    } else {
        check_ub_range(op.ub_dest_row, op.num_rows, "post_process");
        for (uint32_t n = 0; n < op.num_rows; ++n) {
            int8_t* dst = &ub_[size_t(op.ub_dest_row + n) * cfg_.ub_width];
            const int32_t* src = &acc_[size_t(op.acc_row + n) * cfg_.acc_width];
            for (uint32_t j = 0; j < cfg_.acc_width; ++j) {
                int32_t v = src[j];
                if (op.func == ActFunc::Relu && v < 0) v = 0;
                dst[j] = requantize(v, op.rq);
            }
        }
    }
}

bool MachineState::functional_equal(const MachineState& other) const {
    return ub_ == other.ub_ && acc_ == other.acc_ && fifo_ == other.fifo_ &&
           loaded_ == other.loaded_ && host_ == other.host_ && dram_ == other.dram_;
}

void MachineState::check_ub_range(uint32_t row, uint32_t num_rows, const char* who) const {
    if (row > cfg_.ub_rows || uint64_t(row) + num_rows > cfg_.ub_rows)
        throw MachineError(std::string(who) + ": ub rows [" + std::to_string(row) +
                           ", " + std::to_string(uint64_t(row) + num_rows) +
                           ") out of range (ub_rows=" + std::to_string(cfg_.ub_rows) + ")");
}

void MachineState::check_acc_range(uint32_t row, uint32_t num_rows, const char* who) const {
    if (row > cfg_.acc_rows || uint64_t(row) + num_rows > cfg_.acc_rows)
        throw MachineError(std::string(who) + ": acc rows [" + std::to_string(row) +
                           ", " + std::to_string(uint64_t(row) + num_rows) +
                           ") out of range (acc_rows=" + std::to_string(cfg_.acc_rows) + ")");
}

} // namespace ntpu
