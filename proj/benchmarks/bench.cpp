#include <benchmark/benchmark.h>

#include "ntpu/compiler.hpp"
#include "ntpu/config.hpp"
#include "ntpu/golden.hpp"
#include "ntpu/machine.hpp"
#include "ntpu/network.hpp"
#include "ntpu/sim.hpp"
#include "ntpu/tensor.hpp"
#include "ntpu/weights.hpp"

using namespace ntpu;

namespace {

const char* kLenetText = R"(name lenet5
input 1 32 32
conv out=6 k=5 act=relu rq=1:10
pool w=2
conv out=16 k=5 act=relu rq=1:11
pool w=2
fc out=120 act=relu rq=1:10
fc out=84 act=relu rq=1:9
fc out=10 rq=1:8
)";

const NetworkDesc& lenet() {
    static NetworkDesc net = parse_network(kLenetText);
    return net;
}

const NetworkWeights& lenet_weights() {
    static NetworkWeights w = gen_random_weights(1, lenet());
    return w;
}

void bm_systolic_matmul(benchmark::State& state) {
    AcceleratorConfig cfg = preset_config("naivetpu");
    MachineState m(cfg);
    std::vector<int8_t> tile(cfg.tile_bytes());
    for (size_t i = 0; i < tile.size(); ++i) tile[i] = int8_t(i * 37);
    m.push_weight_tile(tile);
    m.advance_tile();
    const uint32_t rows = 1024;
    for (uint32_t r = 0; r < rows; ++r)
        for (uint32_t l = 0; l < cfg.ub_width; ++l)
            m.poke_ub(r, l, int8_t(r * 31 + l));
    for (auto _ : state) {
        m.systolic_matmul(0, rows, 0, false);
        benchmark::DoNotOptimize(m.acc_at(0, 0));
    }
    state.SetItemsProcessed(int64_t(state.iterations()) * rows * cfg.mac_rows *
                            cfg.mac_cols);
}
BENCHMARK(bm_systolic_matmul);

void bm_compile_lenet(benchmark::State& state) {
    AcceleratorConfig cfg = preset_config("naivetpu");
    for (auto _ : state) {
        CompiledNetwork c = compile(lenet(), lenet_weights(), cfg);
        benchmark::DoNotOptimize(c.program.code.size());
    }
}
BENCHMARK(bm_compile_lenet);

void bm_run_lenet(benchmark::State& state) {
    AcceleratorConfig cfg = preset_config("naivetpu");
    CompiledNetwork c = compile(lenet(), lenet_weights(), cfg);
    QTensor input = gen_random_input(2, lenet().input);
    auto image = build_host_image(c, input);
    for (auto _ : state) {
        auto [m, report] = run(c.program, cfg, image, c.dram_image);
        benchmark::DoNotOptimize(report.total_cycles);
    }
}
BENCHMARK(bm_run_lenet);

void bm_golden_lenet(benchmark::State& state) {
    QTensor input = gen_random_input(2, lenet().input);
    for (auto _ : state) {
        auto acts = run_network_ref(lenet(), lenet_weights(), input);
        benchmark::DoNotOptimize(acts.back().data[0]);
    }
}
BENCHMARK(bm_golden_lenet);

} // namespace

BENCHMARK_MAIN();
