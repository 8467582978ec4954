#include "ntpu/sim.hpp"

#include <cinttypes>
#include <cstdio>

namespace ntpu {

const char* phase_name(Phase p) {
    switch (p) {
        case Phase::DataPrep: return "DataPrep";
        case Phase::RowReady: return "RowReady";
        case Phase::Compute: return "Compute";
        case Phase::PostProcess: return "PostProcess";
        case Phase::WriteBack: return "WriteBack";
        case Phase::Done: return "Done";
    }
    return "?";
}

uint64_t PerfReport::cycles_for(Opcode op) const {
    switch (op) {
        case Opcode::ReadHostMemory: return cycles_read_host_memory;
        case Opcode::ReadWeights: return cycles_read_weights;
        case Opcode::MatMulConv: return cycles_matmul_conv;
        case Opcode::Activate: return cycles_activate;
        case Opcode::WriteHostMemory: return cycles_write_host_memory;
    }
    return 0;
}

std::string PerfReport::to_text() const {
    char util[32];
    std::snprintf(util, sizeof util, "%.6f", mac_utilization);
    std::string s;
    s += "total_cycles=" + std::to_string(total_cycles) + "\n";
    s += "cycles_read_host_memory=" + std::to_string(cycles_read_host_memory) + "\n";
    s += "cycles_read_weights=" + std::to_string(cycles_read_weights) + "\n";
    s += "cycles_matmul_conv=" + std::to_string(cycles_matmul_conv) + "\n";
    s += "cycles_activate=" + std::to_string(cycles_activate) + "\n";
    s += "cycles_write_host_memory=" + std::to_string(cycles_write_host_memory) + "\n";
    s += "stall_cycles_weight_fifo=" + std::to_string(stall_cycles_weight_fifo) + "\n";
    s += "mac_ops=" + std::to_string(mac_ops) + "\n";
    s += std::string("mac_utilization=") + util + "\n";
    s += "host_bytes_read=" + std::to_string(host_bytes_read) + "\n";
    s += "host_bytes_written=" + std::to_string(host_bytes_written) + "\n";
    s += "dram_bytes_read=" + std::to_string(dram_bytes_read) + "\n";
    s += "dram_bytes_written=" + std::to_string(dram_bytes_written) + "\n";
    return s;
}

std::string PerfReport::csv_header() {
    return "total_cycles,cycles_read_host_memory,cycles_read_weights,"
           "cycles_matmul_conv,cycles_activate,cycles_write_host_memory,"
           "stall_cycles_weight_fifo,mac_ops,mac_utilization,host_bytes_read,"
           "host_bytes_written,dram_bytes_read,dram_bytes_written";
}

std::string PerfReport::to_csv_row() const {
    char util[32];
    std::snprintf(util, sizeof util, "%.6f", mac_utilization);
    std::string s;
    s += std::to_string(total_cycles) + ",";
    s += std::to_string(cycles_read_host_memory) + ",";
    s += std::to_string(cycles_read_weights) + ",";
    s += std::to_string(cycles_matmul_conv) + ",";
    s += std::to_string(cycles_activate) + ",";
    s += std::to_string(cycles_write_host_memory) + ",";
    s += std::to_string(stall_cycles_weight_fifo) + ",";
    s += std::to_string(mac_ops) + ",";
    s += util;
    s += "," + std::to_string(host_bytes_read);
    s += "," + std::to_string(host_bytes_written);
    s += "," + std::to_string(dram_bytes_read);
    s += "," + std::to_string(dram_bytes_written);
    return s;
}

namespace {

uint64_t ceil_div(uint64_t a, uint64_t b) { return (a + b - 1) / b; }

} // namespace

uint64_t cycle_cost(const Instruction& inst, const AcceleratorConfig& cfg) {
    return std::visit(
        [&cfg](const auto& i) -> uint64_t {
            using T = std::decay_t<decltype(i)>;
            if constexpr (std::is_same_v<T, ReadHostMemory>) {
                return ceil_div(uint64_t(i.num_rows) * i.valid_lanes, cfg.host_bw);
            } else if constexpr (std::is_same_v<T, ReadWeights>) {
                return cfg.dram_latency +
                       ceil_div(uint64_t(i.num_tiles) * cfg.tile_bytes(), cfg.dram_bw);
            } else if constexpr (std::is_same_v<T, MatMulConv>) {
                uint64_t c = uint64_t(i.num_rows) + cfg.mac_rows + cfg.mac_cols - 1;
                if (i.advance_tile) c += cfg.mac_rows;
                return c;
            } else if constexpr (std::is_same_v<T, Activate>) {
                return uint64_t(i.num_rows) + 4;
            } else {
                return ceil_div(uint64_t(i.num_rows) * i.valid_lanes, cfg.host_bw);
            }
        },
        inst);
}

Simulator::Simulator(MachineState& machine, const Program& program)
    : machine_(machine), program_(program), hoisted_(program.code.size(), false) {
    if (program_.code.empty()) exec_.phase = Phase::Done;
}

void Simulator::execute_read_weights(const ReadWeights& rw) {
    for (uint32_t t = 0; t < rw.num_tiles; ++t)
        machine_.push_weight_tile(
            machine_.read_dram_tile(rw.dram_addr + uint64_t(t) * machine_.cfg().tile_bytes()));
    acc_.dram_bytes_read += uint64_t(rw.num_tiles) * machine_.cfg().tile_bytes();
}

void Simulator::step() {
    if (exec_.phase == Phase::Done)
        throw SimError(exec_.pc, "step past end of program", report());

    uint32_t pc = exec_.pc;
    const Instruction& inst = program_.code[pc];
    const AcceleratorConfig& cfg = machine_.cfg();

    try {
        if (hoisted_[pc]) {
            // Already serviced while a MatMulConv was stalled; retires free.
            exec_.phase = Phase::DataPrep;
        } else if (auto* rhm = std::get_if<ReadHostMemory>(&inst)) {
            machine_.read_host_to_ub(rhm->host_addr, rhm->ub_row, rhm->num_rows,
                                     rhm->valid_lanes);
            acc_.cycles_read_host_memory += cycle_cost(inst, cfg);
            acc_.host_bytes_read += uint64_t(rhm->num_rows) * rhm->valid_lanes;
            exec_.phase = Phase::DataPrep;
        } else if (auto* rw = std::get_if<ReadWeights>(&inst)) {
            execute_read_weights(*rw);
            acc_.cycles_read_weights += cycle_cost(inst, cfg);
            exec_.phase = Phase::DataPrep;
        } else if (auto* mm = std::get_if<MatMulConv>(&inst)) {
            if (mm->advance_tile) {
                if (machine_.fifo_depth() == 0) {
                    // RowReady gate failed: fall back to DataPrep for the next
                    // pending weight load, billing it as a stall of this
                    // instruction.
                    uint32_t next = pc + 1;
                    while (next < program_.code.size() &&
                           !(std::holds_alternative<ReadWeights>(program_.code[next]) &&
                             !hoisted_[next]))
                        ++next;
                    if (next == program_.code.size())
                        throw MachineError("weight FIFO underflow");
                    const auto& pending = std::get<ReadWeights>(program_.code[next]);
                    execute_read_weights(pending);
                    acc_.stall_cycles_weight_fifo += cycle_cost(program_.code[next], cfg);
                    hoisted_[next] = true;
                }
                machine_.advance_tile();
            }
            machine_.systolic_matmul(mm->ub_row, mm->num_rows, mm->acc_row,
                                     mm->accumulate);
            acc_.cycles_matmul_conv += cycle_cost(inst, cfg);
            acc_.mac_ops += uint64_t(mm->num_rows) * cfg.mac_rows * cfg.mac_cols;
            exec_.phase = Phase::Compute;
        } else if (auto* act = std::get_if<Activate>(&inst)) {
            machine_.post_process(*act);
            acc_.cycles_activate += cycle_cost(inst, cfg);
            exec_.phase = Phase::PostProcess;
        } else {
            const auto& whm = std::get<WriteHostMemory>(inst);
            machine_.write_ub_to_host(whm.ub_row, whm.num_rows, whm.host_addr,
                                      whm.valid_lanes);
            acc_.cycles_write_host_memory += cycle_cost(inst, cfg);
            acc_.host_bytes_written += uint64_t(whm.num_rows) * whm.valid_lanes;
            exec_.phase = Phase::WriteBack;
        }
    } catch (const MachineError& e) {
        throw SimError(pc, e.what(), report());
    }

    exec_.pc = pc + 1;
    if (exec_.pc == program_.code.size()) exec_.phase = Phase::Done;
}

void Simulator::run_to_end() {
    while (!done()) step();
}

PerfReport Simulator::report() const {
    PerfReport r = acc_;
    r.total_cycles = r.cycles_read_host_memory + r.cycles_read_weights +
                     r.cycles_matmul_conv + r.cycles_activate +
                     r.cycles_write_host_memory + r.stall_cycles_weight_fifo;
    uint64_t peak = r.total_cycles * machine_.cfg().mac_rows * machine_.cfg().mac_cols;
    r.mac_utilization = peak == 0 ? 0.0 : double(r.mac_ops) / double(peak);
    return r;
}

namespace {

// Smallest memory sizes covering the images and every access in the program.
void size_memories(MachineState& m, const Program& program,
                   const std::vector<int8_t>& host_image,
                   const std::vector<int8_t>& dram_image) {
    uint64_t host_needed = host_image.size();
    uint64_t dram_needed = dram_image.size();
    uint64_t tile_bytes = m.cfg().tile_bytes();
    for (const auto& inst : program.code) {
        if (auto* r = std::get_if<ReadHostMemory>(&inst)) {
            host_needed = std::max(host_needed,
                                   r->host_addr + uint64_t(r->num_rows) * r->valid_lanes);
        } else if (auto* w = std::get_if<WriteHostMemory>(&inst)) {
            host_needed = std::max(host_needed,
                                   w->host_addr + uint64_t(w->num_rows) * w->valid_lanes);
        } else if (auto* rw = std::get_if<ReadWeights>(&inst)) {
            dram_needed = std::max(dram_needed,
                                   rw->dram_addr + uint64_t(rw->num_tiles) * tile_bytes);
        }
    }
    m.resize_host(host_needed);
    m.resize_dram(dram_needed);
}

} // namespace

std::pair<MachineState, PerfReport> run(const Program& program,
                                        const AcceleratorConfig& cfg,
                                        const std::vector<int8_t>& host_image,
                                        const std::vector<int8_t>& dram_image) {
    MachineState machine(cfg);
    size_memories(machine, program, host_image, dram_image);
    machine.load_host_image(host_image);
    machine.load_dram_image(dram_image);
    Simulator sim(machine, program);
    sim.run_to_end();
    return {std::move(machine), sim.report()};
}

} // namespace ntpu
