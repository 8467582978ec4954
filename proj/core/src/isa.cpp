#include "ntpu/isa.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "ntpu/errors.hpp"

namespace ntpu {

namespace {

constexpr uint32_t kMaxRow = 0xFFFFFF;  // 24-bit row indices
constexpr uint32_t kMaxU16 = 0xFFFF;

void put_u16(Word& w, size_t at, uint32_t v) {
    w[at] = uint8_t(v);
    w[at + 1] = uint8_t(v >> 8);
}
void put_u24(Word& w, size_t at, uint32_t v) {
    w[at] = uint8_t(v);
    w[at + 1] = uint8_t(v >> 8);
    w[at + 2] = uint8_t(v >> 16);
}
void put_u32(Word& w, size_t at, uint32_t v) {
    for (int i = 0; i < 4; ++i) w[at + i] = uint8_t(v >> (8 * i));
}
void put_u64(Word& w, size_t at, uint64_t v) {
    for (int i = 0; i < 8; ++i) w[at + i] = uint8_t(v >> (8 * i));
}
uint32_t get_u16(const Word& w, size_t at) {
    return uint32_t(w[at]) | uint32_t(w[at + 1]) << 8;
}
uint32_t get_u24(const Word& w, size_t at) {
    return uint32_t(w[at]) | uint32_t(w[at + 1]) << 8 | uint32_t(w[at + 2]) << 16;
}
uint32_t get_u32(const Word& w, size_t at) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(w[at + i]) << (8 * i);
    return v;
}
uint64_t get_u64(const Word& w, size_t at) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(w[at + i]) << (8 * i);
    return v;
}

void check_range(bool ok, const char* field, const char* why) {
    if (!ok) throw EncodeError(std::string("field ") + field + " " + why);
}

void check_word(bool ok, const std::string& msg) {
    if (!ok) throw DecodeError(msg);
}

// Shared by encode and decode so both enforce identical field ranges.
void validate_fields(const ReadHostMemory& i) {
    check_range(i.ub_row <= kMaxRow, "ub_row", "exceeds 24-bit range");
    check_range(i.num_rows >= 1, "num_rows", "must be >= 1");
    check_range(i.num_rows <= kMaxU16, "num_rows", "exceeds 16-bit range");
    check_range(i.valid_lanes >= 1, "valid_lanes", "must be >= 1");
    check_range(i.valid_lanes <= kMaxU16, "valid_lanes", "exceeds 16-bit range");
}
void validate_fields(const ReadWeights& i) {
    check_range(i.num_tiles >= 1, "num_tiles", "must be >= 1");
}
void validate_fields(const MatMulConv& i) {
    check_range(i.ub_row <= kMaxRow, "ub_row", "exceeds 24-bit range");
    check_range(i.num_rows >= 1, "num_rows", "must be >= 1");
    check_range(i.num_rows <= kMaxU16, "num_rows", "exceeds 16-bit range");
    check_range(i.acc_row <= kMaxU16, "acc_row", "exceeds 16-bit range");
}
void validate_fields(const Activate& i) {
    check_range(i.acc_row <= kMaxU16, "acc_row", "exceeds 16-bit range");
    check_range(i.num_rows >= 1, "num_rows", "must be >= 1");
    check_range(i.num_rows <= kMaxU16, "num_rows", "exceeds 16-bit range");
    check_range(i.rq.shift <= 31, "shift", "must be <= 31");
    check_range(i.ub_dest_row <= kMaxRow, "ub_dest_row", "exceeds 24-bit range");
    if (i.func == ActFunc::MaxPool) {
        check_range(i.window >= 1, "window", "must be >= 1 for func=maxpool");
        check_range(i.window <= 255, "window", "exceeds 8-bit range");
        check_range(i.stride >= 1, "stride", "must be >= 1 for func=maxpool");
        check_range(i.stride <= 255, "stride", "exceeds 8-bit range");
    } else {
        check_range(i.window == 0, "window", "must be zero unless func=maxpool");
        check_range(i.stride == 0, "stride", "must be zero unless func=maxpool");
    }
}
void validate_fields(const WriteHostMemory& i) {
    check_range(i.ub_row <= kMaxRow, "ub_row", "exceeds 24-bit range");
    check_range(i.num_rows >= 1, "num_rows", "must be >= 1");
    check_range(i.num_rows <= kMaxU16, "num_rows", "exceeds 16-bit range");
    check_range(i.valid_lanes >= 1, "valid_lanes", "must be >= 1");
    check_range(i.valid_lanes <= kMaxU16, "valid_lanes", "exceeds 16-bit range");
}

} // namespace

Opcode opcode_of(const Instruction& inst) {
    return std::visit(
        [](const auto& i) -> Opcode {
            using T = std::decay_t<decltype(i)>;
            if constexpr (std::is_same_v<T, ReadHostMemory>) return Opcode::ReadHostMemory;
            if constexpr (std::is_same_v<T, ReadWeights>) return Opcode::ReadWeights;
            if constexpr (std::is_same_v<T, MatMulConv>) return Opcode::MatMulConv;
            if constexpr (std::is_same_v<T, Activate>) return Opcode::Activate;
            if constexpr (std::is_same_v<T, WriteHostMemory>) return Opcode::WriteHostMemory;
        },
        inst);
}

const char* mnemonic(Opcode op) {
    switch (op) {
        case Opcode::ReadHostMemory: return "READ_HOST_MEMORY";
        case Opcode::ReadWeights: return "READ_WEIGHTS";
        case Opcode::MatMulConv: return "MATMUL_CONV";
        case Opcode::Activate: return "ACTIVATE";
        case Opcode::WriteHostMemory: return "WRITE_HOST_MEMORY";
    }
    return "?";
}

Word encode(const Instruction& inst) {
    Word w{};
    w.fill(0);
    std::visit(
        [&w](const auto& i) {
            using T = std::decay_t<decltype(i)>;
            validate_fields(i);
            if constexpr (std::is_same_v<T, ReadHostMemory>) {
                w[0] = uint8_t(Opcode::ReadHostMemory);
                put_u64(w, 1, i.host_addr);
                put_u24(w, 9, i.ub_row);
                put_u16(w, 12, i.num_rows);
                put_u16(w, 14, i.valid_lanes);
            } else if constexpr (std::is_same_v<T, ReadWeights>) {
                w[0] = uint8_t(Opcode::ReadWeights);
                put_u64(w, 1, i.dram_addr);
                put_u32(w, 9, i.num_tiles);
            } else if constexpr (std::is_same_v<T, MatMulConv>) {
                w[0] = uint8_t(Opcode::MatMulConv);
                put_u24(w, 1, i.ub_row);
                put_u16(w, 4, i.num_rows);
                put_u16(w, 6, i.acc_row);
                w[8] = uint8_t(i.accumulate ? 1 : 0) | uint8_t(i.advance_tile ? 2 : 0);
            } else if constexpr (std::is_same_v<T, Activate>) {
                w[0] = uint8_t(Opcode::Activate);
                put_u16(w, 1, i.acc_row);
                put_u16(w, 3, i.num_rows);
                w[5] = uint8_t(i.func);
                w[6] = uint8_t(i.window);
                w[7] = uint8_t(i.stride);
                put_u32(w, 8, uint32_t(i.rq.multiplier));
                w[12] = i.rq.shift;
                put_u24(w, 13, i.ub_dest_row);
            } else if constexpr (std::is_same_v<T, WriteHostMemory>) {
                w[0] = uint8_t(Opcode::WriteHostMemory);
                put_u24(w, 1, i.ub_row);
                put_u16(w, 4, i.num_rows);
                put_u64(w, 6, i.host_addr);
                put_u16(w, 14, i.valid_lanes);
            }
        },
        inst);
    return w;
}

namespace {

// Bytes at offsets [from, 16) must be zero.
void check_padding(const Word& w, size_t from) {
    for (size_t i = from; i < kWordBytes; ++i)
        check_word(w[i] == 0,
                   "nonzero padding byte at offset " + std::to_string(i));
}

} // namespace

Instruction decode(const Word& w) {
    switch (w[0]) {
        case uint8_t(Opcode::ReadHostMemory): {
            ReadHostMemory i;
            i.host_addr = get_u64(w, 1);
            i.ub_row = get_u24(w, 9);
            i.num_rows = get_u16(w, 12);
            i.valid_lanes = get_u16(w, 14);
            check_word(i.num_rows >= 1, "num_rows must be >= 1");
            check_word(i.valid_lanes >= 1, "valid_lanes must be >= 1");
            return i;
        }
        case uint8_t(Opcode::ReadWeights): {
            check_padding(w, 13);
            ReadWeights i;
            i.dram_addr = get_u64(w, 1);
            i.num_tiles = get_u32(w, 9);
            check_word(i.num_tiles >= 1, "num_tiles must be >= 1");
            return i;
        }
        case uint8_t(Opcode::MatMulConv): {
            check_padding(w, 9);
            check_word((w[8] & ~3u) == 0, "unknown flag bits in MatMulConv");
            MatMulConv i;
            i.ub_row = get_u24(w, 1);
            i.num_rows = get_u16(w, 4);
            i.acc_row = get_u16(w, 6);
            i.accumulate = (w[8] & 1) != 0;
            i.advance_tile = (w[8] & 2) != 0;
            check_word(i.num_rows >= 1, "num_rows must be >= 1");
            return i;
        }
        case uint8_t(Opcode::Activate): {
            Activate i;
            i.acc_row = get_u16(w, 1);
            i.num_rows = get_u16(w, 3);
            check_word(w[5] <= 2, "unknown activation function " + std::to_string(w[5]));
            i.func = ActFunc(w[5]);
            i.window = w[6];
            i.stride = w[7];
            i.rq.multiplier = int32_t(get_u32(w, 8));
            i.rq.shift = w[12];
            i.ub_dest_row = get_u24(w, 13);
            check_word(i.num_rows >= 1, "num_rows must be >= 1");
            check_word(i.rq.shift <= 31, "shift must be <= 31");
            if (i.func == ActFunc::MaxPool) {
                check_word(i.window >= 1, "window must be >= 1 for func=maxpool");
                check_word(i.stride >= 1, "stride must be >= 1 for func=maxpool");
            } else {
                check_word(i.window == 0 && i.stride == 0,
                           "nonzero window/stride without func=maxpool");
            }
            return i;
        }
        case uint8_t(Opcode::WriteHostMemory): {
            WriteHostMemory i;
            i.ub_row = get_u24(w, 1);
            i.num_rows = get_u16(w, 4);
            i.host_addr = get_u64(w, 6);
            i.valid_lanes = get_u16(w, 14);
            check_word(i.num_rows >= 1, "num_rows must be >= 1");
            check_word(i.valid_lanes >= 1, "valid_lanes must be >= 1");
            return i;
        }
        default:
            throw DecodeError("unknown opcode " + std::to_string(w[0]));
    }
}

namespace {

const char* act_name(ActFunc f) {
    switch (f) {
        case ActFunc::Identity: return "identity";
        case ActFunc::Relu: return "relu";
        case ActFunc::MaxPool: return "maxpool";
    }
    return "?";
}

void format_instruction(std::ostream& os, const Instruction& inst) {
    std::visit(
        [&os](const auto& i) {
            using T = std::decay_t<decltype(i)>;
            if constexpr (std::is_same_v<T, ReadHostMemory>) {
                os << "READ_HOST_MEMORY host_addr=" << i.host_addr
                   << " ub_row=" << i.ub_row << " num_rows=" << i.num_rows
                   << " valid_lanes=" << i.valid_lanes;
            } else if constexpr (std::is_same_v<T, ReadWeights>) {
                os << "READ_WEIGHTS dram_addr=" << i.dram_addr
                   << " num_tiles=" << i.num_tiles;
            } else if constexpr (std::is_same_v<T, MatMulConv>) {
                os << "MATMUL_CONV ub_row=" << i.ub_row << " num_rows=" << i.num_rows
                   << " acc_row=" << i.acc_row << " accumulate=" << (i.accumulate ? 1 : 0)
                   << " advance_tile=" << (i.advance_tile ? 1 : 0);
            } else if constexpr (std::is_same_v<T, Activate>) {
                os << "ACTIVATE acc_row=" << i.acc_row << " num_rows=" << i.num_rows
                   << " func=" << act_name(i.func);
                if (i.func == ActFunc::MaxPool)
                    os << " window=" << i.window << " stride=" << i.stride;
                os << " multiplier=" << i.rq.multiplier << " shift=" << int(i.rq.shift)
                   << " ub_dest_row=" << i.ub_dest_row;
            } else if constexpr (std::is_same_v<T, WriteHostMemory>) {
                os << "WRITE_HOST_MEMORY ub_row=" << i.ub_row
                   << " num_rows=" << i.num_rows << " host_addr=" << i.host_addr
                   << " valid_lanes=" << i.valid_lanes;
            }
        },
        inst);
}

} // namespace

std::string disassemble(const Program& prog) {
    std::ostringstream os;
    for (const auto& inst : prog.code) {
        format_instruction(os, inst);
        os << '\n';
    }
    return os.str();
}

namespace {

struct KeyValues {
    std::vector<std::pair<std::string, std::string>> kv;
    int line;

    bool has(const std::string& k) const {
        for (const auto& [key, _] : kv)
            if (key == k) return true;
        return false;
    }
    const std::string& get(const std::string& k) const {
        for (const auto& [key, value] : kv)
            if (key == k) return value;
        throw AsmError(line, "missing key '" + k + "'");
    }
    void check_known(std::initializer_list<const char*> known) const {
        for (const auto& [key, _] : kv) {
            bool ok = false;
            for (const char* k : known)
                if (key == k) ok = true;
            if (!ok) throw AsmError(line, "unknown key '" + key + "'");
        }
    }
};

uint64_t asm_u64(const KeyValues& kvs, const std::string& key) {
    const std::string& v = kvs.get(key);
    try {
        size_t pos = 0;
        unsigned long long r = std::stoull(v, &pos);
        if (pos != v.size() || v[0] == '-') throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw AsmError(kvs.line, "bad value '" + v + "' for " + key);
    }
}

int32_t asm_i32(const KeyValues& kvs, const std::string& key) {
    const std::string& v = kvs.get(key);
    try {
        size_t pos = 0;
        long long r = std::stoll(v, &pos);
        if (pos != v.size() || r < INT32_MIN || r > INT32_MAX)
            throw std::invalid_argument(v);
        return int32_t(r);
    } catch (const std::exception&) {
        throw AsmError(kvs.line, "bad value '" + v + "' for " + key);
    }
}

bool asm_flag(const KeyValues& kvs, const std::string& key) {
    const std::string& v = kvs.get(key);
    if (v == "0") return false;
    if (v == "1") return true;
    throw AsmError(kvs.line, "bad value '" + v + "' for " + key + " (expected 0 or 1)");
}

} // namespace

Program assemble(const std::string& text) {
    Program prog;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);

        std::istringstream ls(line);
        std::string mnem;
        if (!(ls >> mnem)) continue; // blank line

        KeyValues kvs;
        kvs.line = lineno;
        std::string tok;
        while (ls >> tok) {
            auto eq = tok.find('=');
            if (eq == std::string::npos || eq == 0)
                throw AsmError(lineno, "expected key=value, got '" + tok + "'");
            std::string key = tok.substr(0, eq);
            if (kvs.has(key)) throw AsmError(lineno, "duplicate key '" + key + "'");
            kvs.kv.emplace_back(key, tok.substr(eq + 1));
        }

        Instruction inst;
        if (mnem == "READ_HOST_MEMORY") {
            kvs.check_known({"host_addr", "ub_row", "num_rows", "valid_lanes"});
            ReadHostMemory i;
            i.host_addr = asm_u64(kvs, "host_addr");
            i.ub_row = uint32_t(asm_u64(kvs, "ub_row"));
            i.num_rows = uint32_t(asm_u64(kvs, "num_rows"));
            i.valid_lanes = uint32_t(asm_u64(kvs, "valid_lanes"));
            inst = i;
        } else if (mnem == "READ_WEIGHTS") {
            kvs.check_known({"dram_addr", "num_tiles"});
            ReadWeights i;
            i.dram_addr = asm_u64(kvs, "dram_addr");
            i.num_tiles = uint32_t(asm_u64(kvs, "num_tiles"));
            inst = i;
        } else if (mnem == "MATMUL_CONV") {
            kvs.check_known({"ub_row", "num_rows", "acc_row", "accumulate", "advance_tile"});
            MatMulConv i;
            i.ub_row = uint32_t(asm_u64(kvs, "ub_row"));
            i.num_rows = uint32_t(asm_u64(kvs, "num_rows"));
            i.acc_row = uint32_t(asm_u64(kvs, "acc_row"));
            i.accumulate = asm_flag(kvs, "accumulate");
            i.advance_tile = asm_flag(kvs, "advance_tile");
            inst = i;
        } else if (mnem == "ACTIVATE") {
            kvs.check_known({"acc_row", "num_rows", "func", "window", "stride",
                             "multiplier", "shift", "ub_dest_row"});
            Activate i;
            i.acc_row = uint32_t(asm_u64(kvs, "acc_row"));
            i.num_rows = uint32_t(asm_u64(kvs, "num_rows"));
            const std::string& f = kvs.get("func");
            if (f == "identity") i.func = ActFunc::Identity;
            else if (f == "relu") i.func = ActFunc::Relu;
            else if (f == "maxpool") i.func = ActFunc::MaxPool;
            else throw AsmError(lineno, "unknown func '" + f + "'");
            if (i.func == ActFunc::MaxPool) {
                i.window = uint32_t(asm_u64(kvs, "window"));
                i.stride = uint32_t(asm_u64(kvs, "stride"));
            } else if (kvs.has("window") || kvs.has("stride")) {
                throw AsmError(lineno, "window/stride only valid for func=maxpool");
            }
            i.rq.multiplier = asm_i32(kvs, "multiplier");
            uint64_t shift = asm_u64(kvs, "shift");
            if (shift > 31) throw AsmError(lineno, "shift must be <= 31");
            i.rq.shift = uint8_t(shift);
            i.ub_dest_row = uint32_t(asm_u64(kvs, "ub_dest_row"));
            inst = i;
        } else if (mnem == "WRITE_HOST_MEMORY") {
            kvs.check_known({"ub_row", "num_rows", "host_addr", "valid_lanes"});
            WriteHostMemory i;
            i.ub_row = uint32_t(asm_u64(kvs, "ub_row"));
            i.num_rows = uint32_t(asm_u64(kvs, "num_rows"));
            i.host_addr = asm_u64(kvs, "host_addr");
            i.valid_lanes = uint32_t(asm_u64(kvs, "valid_lanes"));
            inst = i;
        } else {
            throw AsmError(lineno, "unknown mnemonic " + mnem);
        }

        try {
            encode(inst); // field range validation
        } catch (const EncodeError& e) {
            throw AsmError(lineno, e.what());
        }
        prog.code.push_back(inst);
    }
    return prog;
}

namespace {
constexpr char kProgMagic[8] = {'N', 'T', 'P', 'U', 'P', 'R', 'O', 'G'};
constexpr uint8_t kProgVersion = 1;
} // namespace

std::vector<uint8_t> serialize_program(const Program& prog) {
    std::vector<uint8_t> out;
    out.reserve(13 + prog.code.size() * kWordBytes);
    out.insert(out.end(), kProgMagic, kProgMagic + 8);
    out.push_back(kProgVersion);
    uint32_t n = uint32_t(prog.code.size());
    for (int i = 0; i < 4; ++i) out.push_back(uint8_t(n >> (8 * i)));
    for (const auto& inst : prog.code) {
        Word w = encode(inst);
        out.insert(out.end(), w.begin(), w.end());
    }
    return out;
}

Program deserialize_program(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 13 || std::memcmp(bytes.data(), kProgMagic, 8) != 0)
        throw IoError("bad program magic (expected NTPUPROG)");
    if (bytes[8] != kProgVersion)
        throw IoError("unsupported program version " + std::to_string(bytes[8]));
    uint32_t n = 0;
    for (int i = 0; i < 4; ++i) n |= uint32_t(bytes[9 + i]) << (8 * i);
    if (bytes.size() != 13 + size_t(n) * kWordBytes)
        throw IoError("program file size does not match instruction count");
    Program prog;
    prog.code.reserve(n);
    for (uint32_t i = 0; i < n; ++i) {
        Word w;
        std::memcpy(w.data(), bytes.data() + 13 + size_t(i) * kWordBytes, kWordBytes);
        try {
            prog.code.push_back(decode(w));
        } catch (const DecodeError& e) {
            throw IoError("instruction " + std::to_string(i) + ": " + e.what());
        }
    }
    return prog;
}

void write_program_file(const std::string& path, const Program& prog) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    auto bytes = serialize_program(prog);
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw IoError("failed writing '" + path + "'");
}

Program read_program_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open program file '" + path + "'");
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    return deserialize_program(bytes);
}

} // namespace ntpu
