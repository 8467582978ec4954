#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <deque>
#include <fstream>
#include <random>

#include "doctest.h"
#include "ntpu/config.hpp"
#include "ntpu/errors.hpp"
#include "ntpu/machine.hpp"
#include "ntpu/requant.hpp"
#include "ntpu/sim.hpp"

using namespace ntpu;

namespace {

std::vector<int8_t> random_tile(std::mt19937_64& rng, const AcceleratorConfig& cfg) {
    std::vector<int8_t> t(cfg.tile_bytes());
    for (auto& v : t) v = int8_t(int(rng() % 256) - 128);
    return t;
}

std::vector<int8_t> identity_tile(const AcceleratorConfig& cfg) {
    std::vector<int8_t> t(cfg.tile_bytes(), 0);
    for (uint32_t r = 0; r < std::min(cfg.mac_rows, cfg.mac_cols); ++r)
        t[size_t(r) * cfg.mac_cols + r] = 1;
    return t;
}

} // namespace

TEST_CASE("presets match the published geometries") {
    AcceleratorConfig n = preset_config("naivetpu");
    CHECK(n.mac_rows == 32);
    CHECK(n.mac_cols == 32);
    CHECK(n.ub_rows == 16384);
    CHECK(n.ub_width == 32);
    CHECK(n.acc_rows == 4096);
    CHECK(n.acc_width == 32);
    CHECK(n.weight_fifo_tiles == 4);
    CHECK(n.onchip_budget_bits == 4'900'000);
    CHECK(n.dram_capacity_bits == 8'000'000'000);
    CHECK(n.ub_bits() == 4'194'304);
    CHECK(n.acc_bits() == 4'194'304);
    CHECK(n.tile_bytes() == 1024);

    AcceleratorConfig g = preset_config("googletpu");
    CHECK(g.mac_rows == 256);
    CHECK(g.ub_rows == 96 * 1024);
    CHECK(g.acc_rows == 4096);
    CHECK(g.ub_bits() == 201'326'592);
    CHECK(g.acc_bits() == 33'554'432);
    CHECK(g.onchip_budget_bits == 236'978'176);

    // The board preset is the same machine under its board name.
    AcceleratorConfig a = preset_config("ax7020");
    a.name = n.name;
    CHECK(a.ub_rows == n.ub_rows);
    CHECK(a.onchip_budget_bits == n.onchip_budget_bits);

    CHECK(preset_names().size() == 3);
    CHECK_THROWS_AS(preset_config("tpu9000"), ConfigError);
}

TEST_CASE("new machines are fully zeroed") {
    MachineState naive(preset_config("naivetpu"));
    for (uint32_t r = 0; r < 16384; r += 257)
        for (uint32_t l = 0; l < 32; ++l) CHECK(naive.ub_at(r, l) == 0);
    CHECK(naive.ub_at(16383, 31) == 0);
    CHECK(naive.fifo_depth() == 0);
    CHECK_FALSE(naive.has_loaded_tile());

    MachineState google(preset_config("googletpu"));
    for (uint32_t r = 0; r < 4096; r += 129)
        for (uint32_t l = 0; l < 256; l += 17) CHECK(google.acc_at(r, l) == 0);
    CHECK(google.acc_at(4095, 255) == 0);
}

TEST_CASE("config validation") {
    AcceleratorConfig cfg = preset_config("naivetpu");
    cfg.mac_rows = 0;
    CHECK_THROWS_AS(MachineState{cfg}, ConfigError);

    cfg = preset_config("naivetpu");
    cfg.ub_width = 16;
    CHECK_THROWS_WITH_AS(cfg.validate(), "ub_width must equal mac_cols", ConfigError);

    cfg = preset_config("naivetpu");
    cfg.host_bw = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("config files override a preset base") {
    std::string path = "test_arch_config.txt";
    {
        std::ofstream f(path);
        f << "# overrides\npreset=googletpu\ndram_bw=128\nweight_fifo_tiles=2\n";
    }
    AcceleratorConfig cfg = resolve_config(path);
    CHECK(cfg.mac_rows == 256);
    CHECK(cfg.dram_bw == 128);
    CHECK(cfg.weight_fifo_tiles == 2);
    CHECK(cfg.name == path);

    {
        std::ofstream f(path);
        f << "mac_cols=16\nmac_rows=16\n";
    }
    cfg = resolve_config(path);
    CHECK(cfg.mac_rows == 16);
    CHECK(cfg.ub_width == 16); // follows mac_cols

    {
        std::ofstream f(path);
        f << "frobnicate=1\n";
    }
    CHECK_THROWS_WITH_AS(resolve_config(path), doctest::Contains("unknown key"),
                         ConfigError);
    {
        std::ofstream f(path);
        f << "dram_bw=1\npreset=naivetpu\n";
    }
    CHECK_THROWS_WITH_AS(resolve_config(path), doctest::Contains("first directive"),
                         ConfigError);
    std::remove(path.c_str());

    CHECK_THROWS_AS(resolve_config("no_such_file.cfg"), IoError);
}

TEST_CASE("weight FIFO laws") {
    AcceleratorConfig cfg = preset_config("naivetpu");
    MachineState m(cfg);
    std::mt19937_64 rng(42);

    auto t1 = random_tile(rng, cfg);
    m.push_weight_tile(t1);
    CHECK(m.fifo_depth() == 1);
    m.advance_tile();
    CHECK(m.fifo_depth() == 0);
    REQUIRE(m.has_loaded_tile());
    CHECK(*m.loaded_tile() == t1);

    SUBCASE("capacity is enforced") {
        for (uint32_t i = 0; i < cfg.weight_fifo_tiles; ++i)
            m.push_weight_tile(random_tile(rng, cfg));
        CHECK_THROWS_WITH_AS(m.push_weight_tile(random_tile(rng, cfg)),
                             doctest::Contains("FIFO full"), MachineError);
    }

    SUBCASE("underflow is an error") {
        CHECK_THROWS_WITH_AS(m.advance_tile(), doctest::Contains("FIFO empty"),
                             MachineError);
    }

    SUBCASE("wrong tile size is rejected") {
        CHECK_THROWS_AS(m.push_weight_tile(std::vector<int8_t>(7)), MachineError);
    }

    SUBCASE("FIFO order under random interleaving") {
        std::deque<std::vector<int8_t>> model;
        for (int step = 0; step < 1000; ++step) {
            bool can_push = m.fifo_depth() < cfg.weight_fifo_tiles;
            bool do_push = can_push && (m.fifo_depth() == 0 || rng() % 2 == 0);
            if (do_push) {
                auto t = random_tile(rng, cfg);
                model.push_back(t);
                m.push_weight_tile(std::move(t));
            } else {
                m.advance_tile();
                REQUIRE(*m.loaded_tile() == model.front());
                model.pop_front();
            }
            REQUIRE(m.fifo_depth() == model.size());
        }
    }
}

TEST_CASE("systolic matmul basics") {
    AcceleratorConfig cfg = preset_config("naivetpu");
    MachineState m(cfg);
    m.push_weight_tile(identity_tile(cfg));
    m.advance_tile();
    for (uint32_t l = 0; l < 32; ++l) m.poke_ub(3, l, int8_t(l + 1));
    m.systolic_matmul(3, 1, 5, false);
    for (uint32_t l = 0; l < 32; ++l) CHECK(m.acc_at(5, l) == int32_t(l + 1));

    SUBCASE("zero tile clears when not accumulating") {
        m.push_weight_tile(std::vector<int8_t>(cfg.tile_bytes(), 0));
        m.advance_tile();
        m.systolic_matmul(3, 1, 5, false);
        for (uint32_t l = 0; l < 32; ++l) CHECK(m.acc_at(5, l) == 0);
    }

    SUBCASE("accumulate adds with two's-complement wrap") {
        m.poke_acc(5, 0, INT32_MAX);
        m.systolic_matmul(3, 1, 5, true); // identity adds ub[3][0] == 1
        CHECK(m.acc_at(5, 0) == INT32_MIN); // INT32_MAX + 1 wraps
    }

    SUBCASE("errors") {
        MachineState fresh(cfg);
        CHECK_THROWS_WITH_AS(fresh.systolic_matmul(0, 1, 0, false),
                             doctest::Contains("no loaded tile"), MachineError);
        CHECK_THROWS_AS(m.systolic_matmul(16384, 1, 0, false), MachineError);
        CHECK_THROWS_AS(m.systolic_matmul(16383, 2, 0, false), MachineError);
        CHECK_THROWS_AS(m.systolic_matmul(0, 1, 4096, false), MachineError);
    }
}

TEST_CASE("systolic matmul equals the brute-force oracle on 1000 random instances") {
    AcceleratorConfig cfg = preset_config("naivetpu");
    std::mt19937_64 rng(0xACC);
    MachineState m(cfg);
    for (int inst = 0; inst < 1000; ++inst) {
        CAPTURE(inst);
        auto tile = random_tile(rng, cfg);
        m.push_weight_tile(tile);
        m.advance_tile();

        uint32_t num_rows = 1 + uint32_t(rng() % 8);
        uint32_t ub_row = uint32_t(rng() % (cfg.ub_rows - num_rows));
        uint32_t acc_row = uint32_t(rng() % (cfg.acc_rows - num_rows));
        bool accumulate = rng() % 2 == 0;

        std::vector<std::vector<int8_t>> rows(num_rows, std::vector<int8_t>(32));
        std::vector<std::vector<int32_t>> prior(num_rows, std::vector<int32_t>(32));
        for (uint32_t n = 0; n < num_rows; ++n)
            for (uint32_t l = 0; l < 32; ++l) {
                rows[n][l] = int8_t(int(rng() % 256) - 128);
                m.poke_ub(ub_row + n, l, rows[n][l]);
                prior[n][l] = int32_t(uint32_t(rng()));
                m.poke_acc(acc_row + n, l, prior[n][l]);
            }

        m.systolic_matmul(ub_row, num_rows, acc_row, accumulate);

        for (uint32_t n = 0; n < num_rows; ++n)
            for (uint32_t j = 0; j < 32; ++j) {
                int64_t sum = accumulate ? prior[n][j] : 0;
                for (uint32_t r = 0; r < 32; ++r)
                    sum += int32_t(rows[n][r]) * int32_t(tile[r * 32 + j]);
                int32_t want = int32_t(uint32_t(uint64_t(sum))); // wrap mod 2^32
                REQUIRE(m.acc_at(acc_row + n, j) == want);
            }
    }
}

TEST_CASE("requantize pinned values and rounding") {
    CHECK(requantize(100, {1, 0}) == 100);
    CHECK(requantize(300, {1, 0}) == 127);
    CHECK(requantize(-1000, {3, 4}) == -128); // -3000/16 = -187.5 -> -188 -> clamp
    CHECK(requantize(-300, {1, 0}) == -128);
    CHECK(requantize(5, {-1, 0}) == -5);

    // round-half-away-from-zero
    CHECK(requantize(3, {1, 1}) == 2);   // 1.5 -> 2
    CHECK(requantize(-3, {1, 1}) == -2); // -1.5 -> -2
    CHECK(requantize(1, {1, 1}) == 1);   // 0.5 -> 1
    CHECK(requantize(-1, {1, 1}) == -1);
    CHECK(requantize(5, {1, 2}) == 1); // 1.25 -> 1
    CHECK(requantize(7, {1, 2}) == 2); // 1.75 -> 2

    // full-magnitude products survive the 64-bit intermediate
    CHECK(requantize(INT32_MIN, {INT32_MIN, 31}) == 127);
    CHECK(requantize(INT32_MAX, {INT32_MIN, 31}) == -128);
}

TEST_CASE("requantize properties") {
    std::mt19937_64 rng(0x5EED);
    for (int i = 0; i < 1000; ++i) {
        RequantParams rq{int32_t(uint32_t(rng())), uint8_t(rng() % 32)};
        CHECK(requantize(0, rq) == 0);
    }
    for (int i = 0; i < 10000; ++i) {
        RequantParams rq{1 + int32_t(rng() % 1000), uint8_t(rng() % 32)};
        int32_t a = int32_t(uint32_t(rng()));
        int32_t b = int32_t(uint32_t(rng()));
        if (a > b) std::swap(a, b);
        CHECK(requantize(a, rq) <= requantize(b, rq));
    }
}

TEST_CASE("post-processor semantics") {
    AcceleratorConfig cfg = preset_config("naivetpu");
    MachineState m(cfg);

    SUBCASE("relu zeroes negatives before requantization") {
        m.poke_acc(0, 0, -5);
        m.poke_acc(0, 1, 7);
        m.poke_acc(0, 2, 0);
        Activate op;
        op.acc_row = 0;
        op.num_rows = 1;
        op.func = ActFunc::Relu;
        op.rq = RequantParams{1, 0};
        op.ub_dest_row = 2;
        m.post_process(op);
        CHECK(m.ub_at(2, 0) == 0);
        CHECK(m.ub_at(2, 1) == 7);
        CHECK(m.ub_at(2, 2) == 0);

        // relu applies to the accumulator value, not the requantized one
        m.poke_acc(1, 0, 6);
        op.acc_row = 1;
        op.rq = RequantParams{-1, 0};
        op.ub_dest_row = 3;
        m.post_process(op);
        CHECK(m.ub_at(3, 0) == -6);
    }

    SUBCASE("identity with unit requant is a lossless int8 copy") {
        for (uint32_t l = 0; l < 32; ++l) m.poke_acc(9, l, int32_t(l) * 8 - 128);
        Activate op;
        op.acc_row = 9;
        op.num_rows = 1;
        op.rq = RequantParams{1, 0};
        op.ub_dest_row = 0;
        m.post_process(op);
        for (uint32_t l = 0; l < 32; ++l) CHECK(m.ub_at(0, l) == int8_t(int(l) * 8 - 128));
    }

    SUBCASE("maxpool takes lane-wise maxima over row windows") {
        // rows valued [1,3,2,0] plus a lane-dependent offset
        int base[4] = {1, 3, 2, 0};
        for (uint32_t r = 0; r < 4; ++r)
            for (uint32_t l = 0; l < 32; ++l)
                m.poke_acc(r, l, base[r] * 10 + int32_t(l % 3));
        Activate op;
        op.acc_row = 0;
        op.num_rows = 4;
        op.func = ActFunc::MaxPool;
        op.window = 2;
        op.stride = 2;
        op.rq = RequantParams{1, 0};
        op.ub_dest_row = 0;
        m.post_process(op);
        for (uint32_t l = 0; l < 32; ++l) {
            CHECK(m.ub_at(0, l) == int8_t(30 + int(l % 3))); // max(1x, 3x)
            CHECK(m.ub_at(1, l) == int8_t(20 + int(l % 3))); // max(2x, 0x)
        }
    }

    SUBCASE("maxpool with stride < window (overlapping windows)") {
        int vals[5] = {4, 1, 9, 2, 3};
        for (uint32_t r = 0; r < 5; ++r) m.poke_acc(r, 0, vals[r]);
        Activate op;
        op.acc_row = 0;
        op.num_rows = 5;
        op.func = ActFunc::MaxPool;
        op.window = 3;
        op.stride = 1;
        op.rq = RequantParams{1, 0};
        op.ub_dest_row = 0;
        m.post_process(op); // (5-3)/1+1 = 3 output rows
        CHECK(m.ub_at(0, 0) == 9);
        CHECK(m.ub_at(1, 0) == 9);
        CHECK(m.ub_at(2, 0) == 9);
    }

    SUBCASE("maxpool tiling must be exact") {
        Activate op;
        op.acc_row = 0;
        op.num_rows = 5;
        op.func = ActFunc::MaxPool;
        op.window = 2;
        op.stride = 2;
        op.rq = RequantParams{1, 0};
        op.ub_dest_row = 0;
        CHECK_THROWS_WITH_AS(m.post_process(op), doctest::Contains("tile"),
                             MachineError);
        op.window = 6; // larger than num_rows
        CHECK_THROWS_AS(m.post_process(op), MachineError);
    }

    SUBCASE("writes stay inside the declared destination rows") {
        for (uint32_t l = 0; l < 32; ++l) {
            m.poke_ub(4, l, 99);
            m.poke_ub(7, l, 99);
        }
        Activate op;
        op.acc_row = 0;
        op.num_rows = 2;
        op.rq = RequantParams{1, 0};
        op.ub_dest_row = 5;
        m.post_process(op); // writes rows 5..6 only
        for (uint32_t l = 0; l < 32; ++l) {
            CHECK(m.ub_at(4, l) == 99);
            CHECK(m.ub_at(7, l) == 99);
        }
    }

    SUBCASE("reads do not depend on rows outside the range") {
        Activate op;
        op.acc_row = 2;
        op.num_rows = 2;
        op.func = ActFunc::MaxPool;
        op.window = 2;
        op.stride = 2;
        op.rq = RequantParams{1, 0};
        op.ub_dest_row = 0;
        m.poke_acc(2, 0, 11);
        m.poke_acc(3, 0, 22);
        m.poke_acc(1, 0, 1000);
        m.poke_acc(4, 0, 1000);
        m.post_process(op);
        int8_t first = m.ub_at(0, 0);
        m.poke_acc(1, 0, -1000);
        m.poke_acc(4, 0, -1000);
        m.post_process(op);
        CHECK(m.ub_at(0, 0) == first);
        CHECK(first == 22);
    }

    SUBCASE("range errors") {
        Activate op;
        op.acc_row = 4095;
        op.num_rows = 2;
        op.rq = RequantParams{1, 0};
        CHECK_THROWS_AS(m.post_process(op), MachineError);
        op.acc_row = 0;
        op.ub_dest_row = 16383;
        CHECK_THROWS_AS(m.post_process(op), MachineError);
    }
}

TEST_CASE("host and dram transfers") {
    AcceleratorConfig cfg = preset_config("naivetpu");
    MachineState m(cfg);
    m.resize_host(4096);
    m.resize_dram(4096);

    for (int i = 0; i < 64; ++i) m.host_mem()[i] = int8_t(i - 20);

    SUBCASE("read zero-fills lanes beyond valid_lanes") {
        for (uint32_t l = 0; l < 32; ++l) m.poke_ub(0, l, 77);
        m.read_host_to_ub(4, 0, 1, 3);
        CHECK(m.ub_at(0, 0) == -16);
        CHECK(m.ub_at(0, 2) == -14);
        for (uint32_t l = 3; l < 32; ++l) CHECK(m.ub_at(0, l) == 0);
    }

    SUBCASE("rows are packed at valid_lanes bytes") {
        m.read_host_to_ub(0, 10, 2, 5); // rows at host 0..4 and 5..9
        CHECK(m.ub_at(10, 4) == -16);
        CHECK(m.ub_at(11, 0) == -15);
        m.write_ub_to_host(10, 2, 100, 5);
        for (int i = 0; i < 10; ++i) CHECK(m.host_mem()[100 + i] == int8_t(i - 20));
    }

    SUBCASE("transfer bounds are checked") {
        CHECK_THROWS_AS(m.read_host_to_ub(4090, 0, 1, 32), MachineError);
        CHECK_THROWS_AS(m.read_host_to_ub(0, 0, 1, 33), MachineError);
        CHECK_THROWS_AS(m.read_host_to_ub(0, 0, 1, 0), MachineError);
        CHECK_THROWS_AS(m.write_ub_to_host(0, 1, 4090, 32), MachineError);
        CHECK_THROWS_AS(m.read_host_to_ub(uint64_t(-17), 0, 1, 32), MachineError);
    }

    SUBCASE("dram tile reads") {
        for (int i = 0; i < 1024; ++i) m.dram()[512 + i] = int8_t(i * 7);
        auto tile = m.read_dram_tile(512);
        REQUIRE(tile.size() == 1024);
        CHECK(tile[0] == 0);
        CHECK(tile[13] == int8_t(91));
        CHECK_THROWS_AS(m.read_dram_tile(4096 - 1023), MachineError);
        CHECK_THROWS_AS(m.read_dram_tile(uint64_t(-1)), MachineError);
    }

    SUBCASE("oversized images are rejected") {
        CHECK_THROWS_AS(m.load_host_image(std::vector<int8_t>(5000)), MachineError);
        CHECK_THROWS_AS(m.load_dram_image(std::vector<int8_t>(5000)), MachineError);
    }
}

TEST_CASE("timing parameters never change what is computed") {
    Program p = assemble(
        "READ_HOST_MEMORY host_addr=0 ub_row=0 num_rows=4 valid_lanes=32\n"
        "READ_WEIGHTS dram_addr=0 num_tiles=2\n"
        "MATMUL_CONV ub_row=0 num_rows=4 acc_row=0 accumulate=0 advance_tile=1\n"
        "MATMUL_CONV ub_row=0 num_rows=4 acc_row=4 accumulate=0 advance_tile=1\n"
        "ACTIVATE acc_row=0 num_rows=8 func=relu multiplier=7 shift=3 ub_dest_row=64\n"
        "WRITE_HOST_MEMORY ub_row=64 num_rows=8 host_addr=256 valid_lanes=32\n");
    std::mt19937_64 rng(77);
    std::vector<int8_t> host(1024), dram(4096);
    for (auto& v : host) v = int8_t(int(rng() % 256) - 128);
    for (auto& v : dram) v = int8_t(int(rng() % 256) - 128);

    AcceleratorConfig slow = preset_config("naivetpu");
    AcceleratorConfig fast = slow;
    fast.host_bw = 1024;
    fast.dram_bw = 4096;
    fast.dram_latency = 0;

    auto [m1, r1] = run(p, slow, host, dram);
    auto [m2, r2] = run(p, fast, host, dram);
    CHECK(m1.functional_equal(m2));
    CHECK(r1.total_cycles > r2.total_cycles);
}
