#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <vector>

#include "ntpu/config.hpp"
#include "ntpu/isa.hpp"

namespace ntpu {

// Architectural state plus the functional datapath operations. Everything
// here is purely functional: no cycle accounting, no instruction sequencing.
// All indices are bounds-checked and throw MachineError, never wrap.
//
// Datapath widths: UB lanes are int8, accumulator lanes int32. Multiply
// products are sign-extended to 32 bits and sums wrap in two's complement.
class MachineState {
public:
    explicit MachineState(const AcceleratorConfig& cfg);

    const AcceleratorConfig& cfg() const { return cfg_; }

    // Host memory and DRAM are sized by the runner before execution.
    void resize_host(uint64_t bytes) { host_.resize(bytes, 0); }
    void resize_dram(uint64_t bytes) { dram_.resize(bytes, 0); }
    void load_host_image(const std::vector<int8_t>& image);
    void load_dram_image(const std::vector<int8_t>& image);

    const std::vector<int8_t>& host_mem() const { return host_; }
    const std::vector<int8_t>& dram() const { return dram_; }
    std::vector<int8_t>& host_mem() { return host_; }
    std::vector<int8_t>& dram() { return dram_; }

    int8_t ub_at(uint32_t row, uint32_t lane) const;
    int32_t acc_at(uint32_t row, uint32_t lane) const;
    void poke_ub(uint32_t row, uint32_t lane, int8_t v);
    void poke_acc(uint32_t row, uint32_t lane, int32_t v);

    size_t fifo_depth() const { return fifo_.size(); }
    bool has_loaded_tile() const { return loaded_.has_value(); }
    const std::vector<int8_t>* loaded_tile() const {
        return loaded_ ? &*loaded_ : nullptr;
    }

    // Weight path. Tiles are mac_rows*mac_cols int8, row-major.
    void push_weight_tile(std::vector<int8_t> tile);
    void advance_tile(); // pops FIFO front into the array
    std::vector<int8_t> read_dram_tile(uint64_t dram_addr) const;

    // Host transfers. Rows are valid_lanes bytes, packed at host_addr; UB
    // lanes beyond valid_lanes are zero-filled on reads.
    void read_host_to_ub(uint64_t host_addr, uint32_t ub_row, uint32_t num_rows,
                         uint32_t valid_lanes);
    void write_ub_to_host(uint32_t ub_row, uint32_t num_rows, uint64_t host_addr,
                          uint32_t valid_lanes);

    // Streams num_rows UB rows through the loaded tile. Lane r of an input
    // row feeds array row r; output lane j accumulates sum(in[r]*tile[r][j]).
    void systolic_matmul(uint32_t ub_row, uint32_t num_rows, uint32_t acc_row,
                         bool accumulate);

    // Accumulator -> UB through the post-processor (see Activate).
    void post_process(const Activate& op);

    // Functional-state comparison: memories, FIFO and loaded tile. Used to
    // check that timing parameters never change what is computed.
    bool functional_equal(const MachineState& other) const;

private:
    void check_ub_range(uint32_t row, uint32_t num_rows, const char* who) const;
    void check_acc_range(uint32_t row, uint32_t num_rows, const char* who) const;

    AcceleratorConfig cfg_;
    std::vector<int8_t> ub_;    // ub_rows * ub_width
    std::vector<int32_t> acc_;  // acc_rows * acc_width
    std::deque<std::vector<int8_t>> fifo_;
    std::optional<std::vector<int8_t>> loaded_;
    std::vector<int8_t> host_;
    std::vector<int8_t> dram_;
};

} // namespace ntpu
