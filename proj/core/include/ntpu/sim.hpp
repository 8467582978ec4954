#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ntpu/errors.hpp"
#include "ntpu/isa.hpp"
#include "ntpu/machine.hpp"

namespace ntpu {

// Controller phases. Each retired instruction runs in one phase: host and
// weight reads in DataPrep, MatMulConv in Compute (gated on RowReady: a tile
// must be loaded, or advance_tile finds the FIFO non-empty), Activate in
// PostProcess, WriteHostMemory in WriteBack. Done after the last instruction.
enum class Phase : uint8_t {
    DataPrep,
    RowReady,
    Compute,
    PostProcess,
    WriteBack,
    Done,
};

const char* phase_name(Phase p);

struct ExecState {
    Phase phase = Phase::DataPrep;
    uint32_t pc = 0;
};

// Cycle and traffic accounting for one run. total_cycles always equals the
// sum of the per-opcode buckets plus stall_cycles_weight_fifo.
//
// Weight loads executed early to unblock a stalled MatMulConv (see
// Simulator) bill their duration to stall_cycles_weight_fifo instead of
// cycles_read_weights, attributing the wait to the stalled instruction.
struct PerfReport {
    uint64_t total_cycles = 0;
    uint64_t cycles_read_host_memory = 0;
    uint64_t cycles_read_weights = 0;
    uint64_t cycles_matmul_conv = 0;
    uint64_t cycles_activate = 0;
    uint64_t cycles_write_host_memory = 0;
    uint64_t stall_cycles_weight_fifo = 0;

    uint64_t mac_ops = 0;        // num_rows * mac_rows * mac_cols per MatMulConv
    double mac_utilization = 0;  // mac_ops / (total_cycles * mac_rows * mac_cols)

    uint64_t host_bytes_read = 0;
    uint64_t host_bytes_written = 0;
    uint64_t dram_bytes_read = 0;
    uint64_t dram_bytes_written = 0;

    uint64_t cycles_for(Opcode op) const;

    // key=value lines, one per field, fixed order.
    std::string to_text() const;
    static std::string csv_header();
    std::string to_csv_row() const;
};

// Execution failure. Carries the pc and the accounting gathered so far.
class SimError : public Error {
public:
    SimError(uint32_t pc, const std::string& msg, PerfReport partial)
        : Error(msg + " at pc " + std::to_string(pc)),
          pc_(pc),
          partial_(std::move(partial)) {}
    uint32_t pc() const { return pc_; }
    const PerfReport& partial_report() const { return partial_; }

private:
    uint32_t pc_;
    PerfReport partial_;
};

// Analytic per-instruction cost:
//   ReadHostMemory / WriteHostMemory: ceil(num_rows*valid_lanes / host_bw)
//   ReadWeights: dram_latency + ceil(num_tiles*mac_rows*mac_cols / dram_bw)
//   MatMulConv: num_rows + mac_rows + mac_cols - 1, plus mac_rows if advance_tile
//   Activate: num_rows + 4
uint64_t cycle_cost(const Instruction& inst, const AcceleratorConfig& cfg);

// In-order, blocking interpreter. One exception to strict ordering: when a
// MatMulConv with advance_tile finds the weight FIFO empty, the controller
// falls back to DataPrep and services the next ReadWeights ahead of program
// order, charging its duration as weight-FIFO stall cycles; with no pending
// ReadWeights left, that MatMulConv is a FIFO underflow error. Instructions
// executed early this way retire for free when the pc reaches them.
class Simulator {
public:
    Simulator(MachineState& machine, const Program& program);

    const ExecState& exec() const { return exec_; }
    bool done() const { return exec_.phase == Phase::Done; }

    // Executes the instruction at pc. Throws SimError (machine untrustworthy
    // afterwards; the error carries the partial report).
    void step();
    void run_to_end();

    // Finalizes total_cycles and mac_utilization.
    PerfReport report() const;

private:
    void execute_read_weights(const ReadWeights& rw);

    MachineState& machine_;
    const Program& program_;
    ExecState exec_;
    PerfReport acc_;
    std::vector<bool> hoisted_; // ReadWeights already serviced during a stall
};

// Builds a machine sized for the program and the images, executes to
// completion, and returns the final state with the report.
std::pair<MachineState, PerfReport> run(const Program& program,
                                        const AcceleratorConfig& cfg,
                                        const std::vector<int8_t>& host_image,
                                        const std::vector<int8_t>& dram_image);

} // namespace ntpu
