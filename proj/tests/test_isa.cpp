#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <random>

#include "doctest.h"
#include "ntpu/errors.hpp"
#include "ntpu/isa.hpp"

using namespace ntpu;

namespace {

Word word_of(std::initializer_list<int> bytes) {
    Word w{};
    size_t i = 0;
    for (int b : bytes) w[i++] = uint8_t(b);
    return w;
}

// Uniform random valid instruction, exercising the full encodable ranges.
Instruction random_instruction(std::mt19937_64& rng) {
    auto u = [&](uint64_t lo, uint64_t hi) {
        return lo + rng() % (hi - lo + 1);
    };
    switch (u(0, 4)) {
        case 0: {
            ReadHostMemory i;
            i.host_addr = rng();
            i.ub_row = uint32_t(u(0, 0xFFFFFF));
            i.num_rows = uint32_t(u(1, 0xFFFF));
            i.valid_lanes = uint32_t(u(1, 0xFFFF));
            return i;
        }
        case 1: {
            ReadWeights i;
            i.dram_addr = rng();
            i.num_tiles = uint32_t(u(1, 0xFFFFFFFF));
            return i;
        }
        case 2: {
            MatMulConv i;
            i.ub_row = uint32_t(u(0, 0xFFFFFF));
            i.num_rows = uint32_t(u(1, 0xFFFF));
            i.acc_row = uint32_t(u(0, 0xFFFF));
            i.accumulate = u(0, 1) != 0;
            i.advance_tile = u(0, 1) != 0;
            return i;
        }
        case 3: {
            Activate i;
            i.acc_row = uint32_t(u(0, 0xFFFF));
            i.num_rows = uint32_t(u(1, 0xFFFF));
            i.func = ActFunc(u(0, 2));
            if (i.func == ActFunc::MaxPool) {
                i.window = uint32_t(u(1, 255));
                i.stride = uint32_t(u(1, 255));
            }
            i.rq.multiplier = int32_t(uint32_t(rng()));
            i.rq.shift = uint8_t(u(0, 31));
            i.ub_dest_row = uint32_t(u(0, 0xFFFFFF));
            return i;
        }
        default: {
            WriteHostMemory i;
            i.ub_row = uint32_t(u(0, 0xFFFFFF));
            i.num_rows = uint32_t(u(1, 0xFFFF));
            i.host_addr = rng();
            i.valid_lanes = uint32_t(u(1, 0xFFFF));
            return i;
        }
    }
}

} // namespace

TEST_CASE("pinned word layouts") {
    CHECK(encode(ReadWeights{0, 1}) ==
          word_of({0x02, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0}));

    Word mm = encode(MatMulConv{0, 1, 0, false, true});
    CHECK(mm[0] == 0x03);
    CHECK(mm[8] == 0b10);
    CHECK(mm == word_of({0x03, 0, 0, 0, 1, 0, 0, 0, 0b10, 0, 0, 0, 0, 0, 0, 0}));

    // Every field position of ReadHostMemory, little-endian.
    Word rhm = encode(ReadHostMemory{0x1122334455667788ull, 0xABCDEF, 0x1234, 0x20});
    CHECK(rhm == word_of({0x01, 0x88, 0x77, 0x66, 0x55, 0x44, 0x33, 0x22, 0x11, 0xEF,
                          0xCD, 0xAB, 0x34, 0x12, 0x20, 0x00}));

    Activate act;
    act.acc_row = 5;
    act.num_rows = 2;
    act.func = ActFunc::MaxPool;
    act.window = 4;
    act.stride = 4;
    act.rq = RequantParams{-3, 7};
    act.ub_dest_row = 9;
    CHECK(encode(act) == word_of({0x04, 0x05, 0x00, 0x02, 0x00, 0x02, 0x04, 0x04, 0xFD,
                                  0xFF, 0xFF, 0xFF, 0x07, 0x09, 0x00, 0x00}));

    Word whm = encode(WriteHostMemory{7, 3, 0x00000000CAFEF00Dull, 31});
    CHECK(whm == word_of({0x05, 0x07, 0x00, 0x00, 0x03, 0x00, 0x0D, 0xF0, 0xFE, 0xCA,
                          0x00, 0x00, 0x00, 0x00, 0x1F, 0x00}));
}

TEST_CASE("decode rejects malformed words") {
    CHECK_THROWS_WITH_AS(decode(word_of({0x00})), doctest::Contains("unknown opcode 0"),
                         DecodeError);
    CHECK_THROWS_AS(decode(word_of({0x06})), DecodeError);
    CHECK_THROWS_AS(decode(word_of({0xFF})), DecodeError);

    // Nonzero padding in the two opcodes that have padding bytes.
    Word mm = encode(MatMulConv{0, 1, 0, false, false});
    mm[15] = 1;
    CHECK_THROWS_WITH_AS(decode(mm), doctest::Contains("padding"), DecodeError);
    Word rw = encode(ReadWeights{0, 1});
    rw[13] = 0x40;
    CHECK_THROWS_WITH_AS(decode(rw), doctest::Contains("padding"), DecodeError);

    Word flags = encode(MatMulConv{0, 1, 0, true, true});
    flags[8] = 0x07;
    CHECK_THROWS_AS(decode(flags), DecodeError);

    Word badfunc = encode(Activate{});
    badfunc[5] = 3;
    CHECK_THROWS_AS(decode(badfunc), DecodeError);

    Word zrows = encode(ReadHostMemory{0, 0, 1, 1});
    zrows[12] = zrows[13] = 0;
    CHECK_THROWS_AS(decode(zrows), DecodeError);

    Word shift = encode(Activate{});
    shift[12] = 32;
    CHECK_THROWS_AS(decode(shift), DecodeError);

    // window/stride must be zero unless maxpool, >= 1 with it.
    Word ident = encode(Activate{});
    ident[6] = 2;
    CHECK_THROWS_AS(decode(ident), DecodeError);
    Activate mp;
    mp.func = ActFunc::MaxPool;
    mp.window = 2;
    mp.stride = 2;
    Word mpw = encode(mp);
    mpw[6] = 0;
    CHECK_THROWS_AS(decode(mpw), DecodeError);
}

TEST_CASE("encode rejects out-of-range fields") {
    CHECK_THROWS_WITH_AS(encode(ReadHostMemory{0, 0, 0, 1}),
                         doctest::Contains("num_rows"), EncodeError);
    CHECK_THROWS_AS(encode(ReadHostMemory{0, 0, 0x10000, 1}), EncodeError);
    CHECK_THROWS_AS(encode(ReadHostMemory{0, 0x1000000, 1, 1}), EncodeError);
    CHECK_THROWS_AS(encode(ReadHostMemory{0, 0, 1, 0}), EncodeError);
    CHECK_THROWS_AS(encode(ReadWeights{0, 0}), EncodeError);
    CHECK_THROWS_AS(encode(MatMulConv{0, 1, 0x10000, false, false}), EncodeError);
    CHECK_THROWS_AS(encode(WriteHostMemory{0, 1, 0, 0x10000}), EncodeError);

    Activate act;
    act.rq.shift = 32;
    CHECK_THROWS_WITH_AS(encode(act), doctest::Contains("shift"), EncodeError);

    Activate win;
    win.window = 1; // identity with nonzero window
    CHECK_THROWS_AS(encode(win), EncodeError);

    Activate mp;
    mp.func = ActFunc::MaxPool;
    mp.window = 0;
    mp.stride = 1;
    CHECK_THROWS_AS(encode(mp), EncodeError);
    mp.window = 256;
    CHECK_THROWS_AS(encode(mp), EncodeError);
}

TEST_CASE("10000 random instructions roundtrip through all four codecs") {
    std::mt19937_64 rng(0xA11CE);
    for (int n = 0; n < 10000; ++n) {
        Instruction inst = random_instruction(rng);
        CAPTURE(n);

        Word w = encode(inst);
        Instruction back = decode(w);
        REQUIRE(back == inst);
        REQUIRE(encode(back) == w);

        Program p;
        p.code.push_back(inst);
        Program asm_back = assemble(disassemble(p));
        REQUIRE(asm_back.code.size() == 1);
        REQUIRE(asm_back.code[0] == inst);
    }
}

TEST_CASE("assembly syntax") {
    Program p = assemble("READ_WEIGHTS dram_addr=0 num_tiles=4");
    REQUIRE(p.code.size() == 1);
    CHECK(std::get<ReadWeights>(p.code[0]) == ReadWeights{0, 4});

    SUBCASE("comments and blank lines") {
        Program q = assemble("# top comment\n\n"
                             "READ_WEIGHTS dram_addr=64 num_tiles=1 # trailing\n"
                             "   \n"
                             "MATMUL_CONV ub_row=0 num_rows=8 acc_row=0 accumulate=0 "
                             "advance_tile=1\n");
        REQUIRE(q.code.size() == 2);
        CHECK(std::get<ReadWeights>(q.code[0]).dram_addr == 64);
        CHECK(std::get<MatMulConv>(q.code[1]).advance_tile);
    }

    SUBCASE("canonical activate spelling") {
        Activate act;
        act.func = ActFunc::Relu;
        act.rq = RequantParams{3, 4};
        Program q;
        q.code.push_back(act);
        std::string text = disassemble(q);
        CHECK(text.find("func=relu") != std::string::npos);
        CHECK(text.find("multiplier=3") != std::string::npos);
        // identity/relu lines carry no window/stride keys
        CHECK(text.find("window") == std::string::npos);
    }

    SUBCASE("empty program") {
        CHECK(disassemble(Program{}).empty());
        CHECK(assemble("").code.empty());
        CHECK(assemble("# only a comment\n").code.empty());
    }
}

TEST_CASE("assembly errors carry 1-based line numbers") {
    CHECK_THROWS_WITH_AS(assemble("FOO x=1"),
                         doctest::Contains("unknown mnemonic FOO"), AsmError);
    try {
        assemble("READ_WEIGHTS dram_addr=0 num_tiles=1\n\nFOO x=1\n");
        FAIL("expected AsmError");
    } catch (const AsmError& e) {
        CHECK(e.line() == 3);
        CHECK(std::string(e.what()).find("line 3:") != std::string::npos);
    }

    CHECK_THROWS_WITH_AS(assemble("READ_WEIGHTS dram_addr=0"),
                         doctest::Contains("missing key 'num_tiles'"), AsmError);
    CHECK_THROWS_WITH_AS(assemble("READ_WEIGHTS dram_addr=0 dram_addr=1 num_tiles=1"),
                         doctest::Contains("duplicate key"), AsmError);
    CHECK_THROWS_WITH_AS(assemble("READ_WEIGHTS dram_addr=0 num_tiles=1 bogus=7"),
                         doctest::Contains("unknown key"), AsmError);
    CHECK_THROWS_WITH_AS(assemble("READ_WEIGHTS dram_addr=zzz num_tiles=1"),
                         doctest::Contains("bad value"), AsmError);
    // Out-of-range values are rejected with the encoder's field message.
    CHECK_THROWS_AS(assemble("READ_WEIGHTS dram_addr=0 num_tiles=0"), AsmError);
    CHECK_THROWS_AS(
        assemble("ACTIVATE acc_row=0 num_rows=1 func=identity window=3 stride=0 "
                 "multiplier=1 shift=0 ub_dest_row=0"),
        AsmError);
    CHECK_THROWS_AS(assemble("MATMUL_CONV ub_row=0 num_rows=1 acc_row=0 accumulate=2 "
                             "advance_tile=0"),
                    AsmError);
}

TEST_CASE("program container format") {
    std::mt19937_64 rng(0xB0B);
    for (int trial = 0; trial < 100; ++trial) {
        Program p;
        size_t n = rng() % 50;
        for (size_t i = 0; i < n; ++i) p.code.push_back(random_instruction(rng));
        auto bytes = serialize_program(p);
        REQUIRE(bytes.size() == 13 + n * kWordBytes);
        CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "NTPUPROG");
        CHECK(bytes[8] == 1);
        Program back = deserialize_program(bytes);
        REQUIRE(back == p);
    }

    Program p;
    p.code.push_back(ReadWeights{0, 1});
    auto bytes = serialize_program(p);

    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_WITH_AS(deserialize_program(bad_magic),
                         doctest::Contains("bad program magic"), IoError);

    auto bad_version = bytes;
    bad_version[8] = 2;
    CHECK_THROWS_WITH_AS(deserialize_program(bad_version),
                         doctest::Contains("unsupported program version 2"), IoError);

    auto truncated = bytes;
    truncated.pop_back();
    CHECK_THROWS_WITH_AS(deserialize_program(truncated),
                         doctest::Contains("does not match"), IoError);

    auto bad_word = bytes;
    bad_word[13] = 0; // opcode 0 in instruction 0
    CHECK_THROWS_WITH_AS(deserialize_program(bad_word),
                         doctest::Contains("instruction 0"), IoError);

    CHECK_THROWS_AS(deserialize_program({}), IoError);
}
