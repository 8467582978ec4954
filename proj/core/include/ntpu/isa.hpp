#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "ntpu/requant.hpp"

namespace ntpu {

// Five straight-line instructions, one 16-byte word each. Byte 0 is the
// opcode; operands follow little-endian in field declaration order; unused
// trailing bytes must be zero. Row indices are 24-bit, row counts and lane
// counts 16-bit, addresses 64-bit byte offsets.

enum class Opcode : uint8_t {
    ReadHostMemory = 1,
    ReadWeights = 2,
    MatMulConv = 3,
    Activate = 4,
    WriteHostMemory = 5,
};

constexpr size_t kWordBytes = 16;
using Word = std::array<uint8_t, kWordBytes>;

// Host memory -> UB. Each transferred row is valid_lanes bytes, packed
// contiguously at host_addr; UB lanes beyond valid_lanes are zero-filled.
struct ReadHostMemory {
    uint64_t host_addr = 0;
    uint32_t ub_row = 0;
    uint32_t num_rows = 1;
    uint32_t valid_lanes = 1;

    bool operator==(const ReadHostMemory&) const = default;
};

// DRAM -> weight FIFO. Tiles are mac_rows*mac_cols int8, row-major,
// consecutive from dram_addr.
struct ReadWeights {
    uint64_t dram_addr = 0;
    uint32_t num_tiles = 1;

    bool operator==(const ReadWeights&) const = default;
};

// Streams num_rows UB rows through the loaded tile into the accumulators.
// advance_tile pops the next FIFO tile into the array first; accumulate adds
// into the destination rows instead of overwriting them.
struct MatMulConv {
    uint32_t ub_row = 0;
    uint32_t num_rows = 1;
    uint32_t acc_row = 0;
    bool accumulate = false;
    bool advance_tile = false;

    bool operator==(const MatMulConv&) const = default;
};

enum class ActFunc : uint8_t {
    Identity = 0,
    Relu = 1,
    MaxPool = 2,
};

// Drains accumulator rows back to the UB through the post-processor:
// optional ReLU or row-window max-pool, then requantize to int8. window and
// stride are accumulator row counts, meaningful only for MaxPool (both must
// be zero otherwise).
struct Activate {
    uint32_t acc_row = 0;
    uint32_t num_rows = 1;
    ActFunc func = ActFunc::Identity;
    uint32_t window = 0;
    uint32_t stride = 0;
    RequantParams rq;
    uint32_t ub_dest_row = 0;

    bool operator==(const Activate&) const = default;
};

// UB -> host memory, inverse addressing of ReadHostMemory.
struct WriteHostMemory {
    uint32_t ub_row = 0;
    uint32_t num_rows = 1;
    uint64_t host_addr = 0;
    uint32_t valid_lanes = 1;

    bool operator==(const WriteHostMemory&) const = default;
};

using Instruction =
    std::variant<ReadHostMemory, ReadWeights, MatMulConv, Activate, WriteHostMemory>;

struct Program {
    std::vector<Instruction> code;
    std::string name;      // in-memory metadata, not serialized
    std::string config_id; // config the program was compiled against

    bool operator==(const Program& o) const { return code == o.code; }
};

Opcode opcode_of(const Instruction& inst);
const char* mnemonic(Opcode op);

// encode throws EncodeError naming the offending field; decode throws
// DecodeError on unknown opcodes, nonzero padding, or out-of-range fields.
// The two are mutually inverse between valid instructions and valid words.
Word encode(const Instruction& inst);
Instruction decode(const Word& word);

// Assembly text: one instruction per line, "MNEMONIC key=value ...", '#'
// comments, blank lines ignored. disassemble emits the canonical form
// (keys in field order, booleans as 0/1) and assemble(disassemble(p)) == p.
std::string disassemble(const Program& prog);
Program assemble(const std::string& text);

// Binary container: magic "NTPUPROG", version byte 1, u32 LE instruction
// count, then the encoded words.
std::vector<uint8_t> serialize_program(const Program& prog);
Program deserialize_program(const std::vector<uint8_t>& bytes);
void write_program_file(const std::string& path, const Program& prog);
Program read_program_file(const std::string& path);

} // namespace ntpu
