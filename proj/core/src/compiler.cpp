#include "ntpu/compiler.hpp"

#include <algorithm>
#include <cstring>

#include "ntpu/errors.hpp"

namespace ntpu {

namespace {

constexpr uint64_t kMaxNumRows = 0xFFFF; // 16-bit row-count instruction fields

uint64_t ceil_div(uint64_t a, uint64_t b) { return (a + b - 1) / b; }

enum class Kind { Conv, Fc, Pool };

// Uniform tiling geometry for one layer. For conv/fc a staging row is one
// output position's K lanes (bias lane appended when present); for pool a
// staging row is one window cell's channels, window^2 consecutive rows per
// output position.
struct Geo {
    Kind kind = Kind::Conv;
    Shape3 in, out;
    uint64_t n_pos = 0;   // output positions
    uint64_t k_logical = 0; // conv/fc reduction length without the bias lane
    uint64_t k_lanes = 0; // lanes per position (conv/fc) or channels (pool)
    uint32_t k_chunks = 0;
    uint32_t oc_chunks = 0;
    uint32_t out_c = 0;
    uint32_t cells = 1; // pool: window^2
    bool has_bias = false;
    uint64_t pitch = 0;
    uint64_t staging_rows = 0;
    ActFunc act = ActFunc::Identity;
    RequantParams rq;

    uint64_t staging_bytes() const { return pitch * staging_rows; }
};

Geo make_geo(const LayerSpec& layer, const Shape3& in, const Shape3& out,
             uint32_t W, bool has_bias, size_t layer_idx) {
    Geo g;
    g.in = in;
    g.out = out;
    g.has_bias = has_bias;
    if (auto* c = std::get_if<Conv2D>(&layer)) {
        g.kind = Kind::Conv;
        g.n_pos = uint64_t(out.h) * out.w;
        g.k_logical = uint64_t(in.c) * c->kernel_h * c->kernel_w;
        g.k_lanes = g.k_logical + (has_bias ? 1 : 0);
        g.k_chunks = uint32_t(ceil_div(g.k_lanes, W));
        g.out_c = c->out_ch;
        g.oc_chunks = uint32_t(ceil_div(g.out_c, W));
        g.staging_rows = g.n_pos;
        g.act = c->act;
        g.rq = c->rq;
    } else if (auto* f = std::get_if<FullyConnected>(&layer)) {
        g.kind = Kind::Fc;
        g.n_pos = 1;
        g.k_logical = in.elems();
        g.k_lanes = g.k_logical + (has_bias ? 1 : 0);
        g.k_chunks = uint32_t(ceil_div(g.k_lanes, W));
        g.out_c = f->out_dim;
        g.oc_chunks = uint32_t(ceil_div(g.out_c, W));
        g.staging_rows = 1;
        g.act = f->act;
        g.rq = f->rq;
    } else {
        const auto& p = std::get<MaxPool2D>(layer);
        g.kind = Kind::Pool;
        g.n_pos = uint64_t(out.h) * out.w;
        uint64_t cells = uint64_t(p.window) * p.window;
        if (cells > 255)
            throw CapacityError("layer " + std::to_string(layer_idx) + ": pool window " +
                                std::to_string(p.window) +
                                " needs " + std::to_string(cells) +
                                " accumulator rows per position; the post-processor window "
                                "field holds at most 255");
        g.cells = uint32_t(cells);
        g.k_lanes = in.c;
        g.k_chunks = uint32_t(ceil_div(in.c, W));
        g.oc_chunks = g.k_chunks;
        g.out_c = in.c;
        g.staging_rows = g.n_pos * g.cells;
    }
    g.pitch = uint64_t(g.k_chunks) * W;
    if (g.staging_rows > 0xFFFFFFFFull)
        throw CapacityError("layer " + std::to_string(layer_idx) +
                            ": staging rows exceed the addressable range");
    return g;
}

struct Batching {
    uint32_t batch = 0; // positions per pass
    uint32_t num_batches = 0;
    uint32_t ub_staging_rows = 0;
    uint32_t ub_out_rows = 0;
    uint32_t acc_rows_used = 0;
};

Batching plan_batch(const Geo& g, const AcceleratorConfig& cfg, uint64_t ub_avail,
                    size_t layer_idx) {
    // UB rows needed per position: the staged chunks plus one output row.
    uint64_t per_pos = (g.kind == Kind::Pool ? g.cells : g.k_chunks) + uint64_t(1);
    uint64_t acc_per_pos = g.kind == Kind::Pool ? g.cells : 1;
    uint64_t b = std::min<uint64_t>(g.n_pos, ub_avail / per_pos);
    b = std::min(b, cfg.acc_rows / acc_per_pos);
    b = std::min(b, kMaxNumRows / acc_per_pos);
    if (b == 0)
        throw CapacityError(
            "layer " + std::to_string(layer_idx) + ": one position needs " +
            std::to_string(per_pos) + " unified-buffer rows and " +
            std::to_string(acc_per_pos) + " accumulator rows, but only " +
            std::to_string(ub_avail) + " UB rows / " + std::to_string(cfg.acc_rows) +
            " accumulator rows are available");
    Batching r;
    r.batch = uint32_t(b);
    r.num_batches = uint32_t(ceil_div(g.n_pos, b));
    r.ub_staging_rows = uint32_t(b * (per_pos - 1));
    r.ub_out_rows = uint32_t(b);
    r.acc_rows_used = uint32_t(b * acc_per_pos);
    return r;
}

// One consumer slot fed by a source element (y, x, ·): channels c land at
// staging byte row*pitch + cell_base + c.
struct Unit {
    uint32_t row = 0;
    uint32_t cell_base = 0;
};

// Slots grouped by source element flat index y*in_w + x.
using UnitIndex = std::vector<std::vector<Unit>>;

UnitIndex build_unit_index(const LayerSpec& layer, const Shape3& in, const Shape3& out) {
    UnitIndex idx(uint64_t(in.h) * in.w);
    if (auto* c = std::get_if<Conv2D>(&layer)) {
        for (uint32_t oy = 0; oy < out.h; ++oy)
            for (uint32_t ox = 0; ox < out.w; ++ox)
                for (uint32_t ky = 0; ky < c->kernel_h; ++ky) {
                    int64_t iy = int64_t(oy) * c->stride + ky - c->pad;
                    if (iy < 0 || iy >= in.h) continue;
                    for (uint32_t kx = 0; kx < c->kernel_w; ++kx) {
                        int64_t ix = int64_t(ox) * c->stride + kx - c->pad;
                        if (ix < 0 || ix >= in.w) continue;
                        idx[uint64_t(iy) * in.w + ix].push_back(
                            {oy * out.w + ox, (ky * c->kernel_w + kx) * in.c});
                    }
                }
    } else if (std::holds_alternative<FullyConnected>(layer)) {
        for (uint32_t y = 0; y < in.h; ++y)
            for (uint32_t x = 0; x < in.w; ++x)
                idx[uint64_t(y) * in.w + x].push_back({0, (y * in.w + x) * in.c});
    } else {
        const auto& p = std::get<MaxPool2D>(layer);
        uint32_t cells = p.window * p.window;
        for (uint32_t oy = 0; oy < out.h; ++oy)
            for (uint32_t ox = 0; ox < out.w; ++ox)
                for (uint32_t wy = 0; wy < p.window; ++wy)
                    for (uint32_t wx = 0; wx < p.window; ++wx) {
                        uint32_t iy = oy * p.stride + wy;
                        uint32_t ix = ox * p.stride + wx;
                        idx[uint64_t(iy) * in.w + ix].push_back(
                            {(oy * out.w + ox) * cells + wy * p.window + wx, 0});
                    }
    }
    return idx;
}

// Where a layer's outputs go: the next layer's staging arena, or the packed
// output region after the last layer.
struct Consumer {
    uint64_t base = 0;
    uint64_t pitch = 0;
    UnitIndex units; // by producer output position y*out_w + x
};

Consumer output_consumer(const Shape3& out, uint64_t base) {
    Consumer c;
    c.base = base;
    c.pitch = out.c;
    c.units.resize(uint64_t(out.h) * out.w);
    for (uint32_t y = 0; y < out.h; ++y)
        for (uint32_t x = 0; x < out.w; ++x)
            c.units[uint64_t(y) * out.w + x].push_back({y * out.w + x, 0});
    return c;
}

uint64_t align64(uint64_t v) { return (v + 63) & ~uint64_t(63); }

uint64_t layer_param_bits(const LayerSpec& layer, const Shape3& in) {
    if (auto* c = std::get_if<Conv2D>(&layer))
        return 8 * uint64_t(c->out_ch) * (uint64_t(in.c) * c->kernel_h * c->kernel_w + 1);
    if (auto* f = std::get_if<FullyConnected>(&layer))
        return 8 * uint64_t(f->out_dim) * (in.elems() + 1);
    return 0;
}

// Shared planning core. bias_flags, when provided, says per layer whether a
// bias lane is emitted; the planner assumes one everywhere otherwise. The
// placement decision itself always uses the assumed-bias working set so
// plan_memory and compile agree.
MemoryMap plan_impl(const NetworkDesc& net, const AcceleratorConfig& cfg,
                    const std::vector<char>* bias_flags) {
    cfg.validate();
    if (cfg.mac_rows != cfg.mac_cols)
        throw CapacityError("lowering requires a square MAC array (got " +
                            std::to_string(cfg.mac_rows) + "x" +
                            std::to_string(cfg.mac_cols) + ")");
    const uint32_t W = cfg.mac_rows;
    auto shapes = infer_shapes(net);

    MemoryMap map;
    if (net.layers.empty()) {
        map.on_chip = true;
        return map;
    }

    map.weight_bits = count_params(net) * 8;

    // Decision working set: assumed bias lanes, no UB rows reserved.
    uint64_t peak0_rows = 0;
    for (size_t i = 0; i < net.layers.size(); ++i) {
        Geo g = make_geo(net.layers[i], shapes[i], shapes[i + 1], W, true, i);
        Batching b = plan_batch(g, cfg, cfg.ub_rows, i);
        peak0_rows = std::max<uint64_t>(peak0_rows, uint64_t(b.ub_staging_rows) + b.ub_out_rows);
    }
    bool on_chip =
        map.weight_bits + peak0_rows * cfg.ub_width * 8 <= cfg.onchip_budget_bits;

    // Per-layer plans, retried as DRAM-streamed if the weight reservation
    // leaves some layer without a legal batch.
    for (int attempt = 0;; ++attempt) {
        map.on_chip = on_chip;
        map.layers.clear();
        uint64_t reserved = 0;
        if (on_chip)
            for (size_t i = 0; i < net.layers.size(); ++i)
                reserved += ceil_div(layer_param_bits(net.layers[i], shapes[i]) / 8,
                                     cfg.ub_width);
        if (reserved >= cfg.ub_rows) {
            on_chip = false;
            continue;
        }
        uint64_t ub_avail = cfg.ub_rows - reserved;
        uint64_t next_weight_row = cfg.ub_rows - reserved;
        uint64_t dram_addr = 0;
        uint64_t peak_rows = 0;
        bool any_pool = false;
        try {
            for (size_t i = 0; i < net.layers.size(); ++i) {
                bool bias = bias_flags ? (*bias_flags)[i] != 0
                                       : layer_has_params(net.layers[i]);
                Geo g = make_geo(net.layers[i], shapes[i], shapes[i + 1], W, bias, i);
                Batching b = plan_batch(g, cfg, ub_avail, i);
                LayerPlan lp;
                lp.layer_index = uint32_t(i);
                lp.k_lanes = g.k_lanes;
                lp.k_chunks = g.k_chunks;
                lp.oc_chunks = g.oc_chunks;
                lp.n_positions = g.n_pos;
                lp.batch_rows = b.batch;
                lp.num_batches = b.num_batches;
                lp.weight_bits = layer_param_bits(net.layers[i], shapes[i]);
                lp.ub_staging_rows = b.ub_staging_rows;
                lp.ub_out_rows = b.ub_out_rows;
                lp.acc_rows_used = b.acc_rows_used;
                lp.host_staging_bytes = g.staging_bytes();
                if (g.kind == Kind::Pool) {
                    any_pool = true;
                } else {
                    lp.placement.on_chip = on_chip;
                    lp.placement.num_tiles = uint64_t(g.oc_chunks) * g.k_chunks;
                    lp.placement.dram_addr = dram_addr;
                    dram_addr += lp.placement.num_tiles * cfg.tile_bytes();
                    if (on_chip) {
                        uint64_t rows = ceil_div(lp.weight_bits / 8, cfg.ub_width);
                        lp.placement.ub_row_begin = uint32_t(next_weight_row);
                        lp.placement.ub_num_rows = uint32_t(rows);
                        next_weight_row += rows;
                    }
                }
                peak_rows = std::max<uint64_t>(peak_rows,
                                               uint64_t(b.ub_staging_rows) + b.ub_out_rows);
                map.layers.push_back(std::move(lp));
            }
        } catch (const CapacityError&) {
            if (on_chip && attempt == 0) {
                on_chip = false;
                continue;
            }
            throw;
        }
        map.peak_activation_bits = peak_rows * cfg.ub_width * 8;
        map.onchip_bits_used =
            map.peak_activation_bits + (on_chip ? map.weight_bits : 0);
        uint64_t image_bytes = dram_addr + (any_pool ? cfg.tile_bytes() : 0);
        map.dram_bits_used = image_bytes * 8;
        if (map.dram_bits_used > cfg.dram_capacity_bits)
            throw CapacityError("staged weights need " +
                                std::to_string(map.dram_bits_used) +
                                " bits of DRAM but capacity is " +
                                std::to_string(cfg.dram_capacity_bits));
        return map;
    }
}

int8_t tile_value(const Geo& g, const LayerSpec& layer, const LayerWeights& lw,
                  uint64_t lane, uint32_t och) {
    if (och >= g.out_c) return 0;
    if (lane < g.k_logical) {
        if (g.kind == Kind::Fc) return lw.weights.data[uint64_t(och) * g.k_logical + lane];
        const auto& c = std::get<Conv2D>(layer);
        uint32_t per_ky = c.kernel_w * g.in.c;
        uint32_t ky = uint32_t(lane / per_ky);
        uint32_t rem = uint32_t(lane % per_ky);
        return lw.weights.at4(och, ky, rem / g.in.c, rem % g.in.c);
    }
    if (g.has_bias && lane == g.k_logical) return int8_t(lw.biases[och]);
    return 0;
}

} // namespace

MemoryMap plan_memory(const NetworkDesc& net, const AcceleratorConfig& cfg) {
    return plan_impl(net, cfg, nullptr);
}

CompiledNetwork compile(const NetworkDesc& net, const NetworkWeights& w,
                        const AcceleratorConfig& cfg) {
    validate_weights(net, w);
    auto shapes = infer_shapes(net);
    const uint32_t W = cfg.mac_rows;
    const size_t L = net.layers.size();

    // Bias lanes only where some bias is nonzero; values must fit the lane.
    std::vector<char> bias_flags(L, 0);
    {
        size_t wi = 0;
        for (size_t i = 0; i < L; ++i) {
            if (!layer_has_params(net.layers[i])) continue;
            const LayerWeights& lw = w.layers[wi++];
            for (size_t j = 0; j < lw.biases.size(); ++j) {
                int32_t b = lw.biases[j];
                if (b < -128 || b > 127)
                    throw NetworkError("layer " + std::to_string(i) + " bias[" +
                                       std::to_string(j) + "] = " + std::to_string(b) +
                                       " does not fit the int8 bias lane");
                if (b != 0) bias_flags[i] = 1;
            }
        }
    }

    CompiledNetwork c;
    c.map = plan_impl(net, cfg, &bias_flags);
    c.net = net;
    c.config_id = cfg.name;
    c.program.name = net.name;
    c.program.config_id = cfg.name;
    c.output_shape = shapes.back();
    c.output_bytes = shapes.back().elems();

    std::vector<Geo> geos;
    geos.reserve(L);
    for (size_t i = 0; i < L; ++i)
        geos.push_back(make_geo(net.layers[i], shapes[i], shapes[i + 1], W,
                                bias_flags[i] != 0, i));

    // Host layout: one staging arena per layer, then the output region.
    std::vector<uint64_t> arena(L, 0);
    uint64_t haddr = 0;
    for (size_t i = 0; i < L; ++i) {
        arena[i] = haddr;
        haddr = align64(haddr + geos[i].staging_bytes());
    }
    if (L == 0) haddr = align64(net.input.elems());
    c.input_staging_addr = 0;
    c.input_pitch = L ? geos[0].pitch : 0;
    c.output_addr = haddr;
    c.host_image_bytes = haddr + c.output_bytes;

    // Bias-lane ones for every arena that has a bias lane.
    for (size_t i = 0; i < L; ++i) {
        const Geo& g = geos[i];
        if (!g.has_bias) continue;
        for (uint64_t r = 0; r < g.staging_rows; ++r)
            c.host_template.push_back({arena[i] + r * g.pitch + g.k_logical, {1}});
    }

    // DRAM image: tiles at the addresses the plan assigned, identity last.
    uint64_t identity_addr = 0;
    bool any_pool = false;
    {
        uint64_t end = 0;
        for (size_t i = 0; i < L; ++i) {
            if (!layer_has_params(net.layers[i])) {
                any_pool = true;
                continue;
            }
            const LayerPlan& lp = c.map.layers[i];
            end = std::max(end, lp.placement.dram_addr +
                                    lp.placement.num_tiles * cfg.tile_bytes());
        }
        identity_addr = end;
        c.dram_image.assign(end + (any_pool ? cfg.tile_bytes() : 0), 0);
        size_t wi = 0;
        for (size_t i = 0; i < L; ++i) {
            if (!layer_has_params(net.layers[i])) continue;
            const Geo& g = geos[i];
            const LayerWeights& lw = w.layers[wi++];
            uint64_t base = c.map.layers[i].placement.dram_addr;
            for (uint32_t o = 0; o < g.oc_chunks; ++o)
                for (uint32_t kc = 0; kc < g.k_chunks; ++kc) {
                    uint64_t tbase = base + (uint64_t(o) * g.k_chunks + kc) * cfg.tile_bytes();
                    for (uint32_t r = 0; r < W; ++r)
                        for (uint32_t j = 0; j < W; ++j)
                            c.dram_image[tbase + uint64_t(r) * W + j] = tile_value(
                                g, net.layers[i], lw, uint64_t(kc) * W + r, o * W + j);
                }
        }
        if (any_pool)
            for (uint32_t r = 0; r < W; ++r)
                c.dram_image[identity_addr + uint64_t(r) * W + r] = 1;
    }

    auto& code = c.program.code;

    if (L == 0) {
        // Plain copy, windowed through the UB.
        uint64_t n = net.input.elems();
        uint64_t window = std::min<uint64_t>(cfg.ub_rows, kMaxNumRows);
        uint64_t full = n / W;
        for (uint64_t row = 0; row < full; row += window) {
            uint32_t cnt = uint32_t(std::min(window, full - row));
            code.push_back(ReadHostMemory{row * W, 0, cnt, W});
            code.push_back(WriteHostMemory{0, cnt, c.output_addr + row * W, W});
        }
        if (uint32_t rem = uint32_t(n % W)) {
            code.push_back(ReadHostMemory{full * W, 0, 1, rem});
            code.push_back(WriteHostMemory{0, 1, c.output_addr + full * W, rem});
        }
        return c;
    }

    for (size_t l = 0; l < L; ++l) {
        const Geo& g = geos[l];
        const LayerPlan& lp = c.map.layers[l];
        const uint64_t B = lp.batch_rows;

        Consumer cons;
        if (l + 1 < L) {
            cons.base = arena[l + 1];
            cons.pitch = geos[l + 1].pitch;
            cons.units = build_unit_index(net.layers[l + 1], shapes[l + 1], shapes[l + 2]);
        } else {
            cons = output_consumer(shapes[l + 1], c.output_addr);
        }

        const uint32_t out_base =
            uint32_t((g.kind == Kind::Pool ? g.cells : g.k_chunks) * B);

        for (uint64_t p0 = 0; p0 < g.n_pos; p0 += B) {
            const uint32_t bc = uint32_t(std::min<uint64_t>(B, g.n_pos - p0));

            auto scatter = [&](uint32_t chunk, uint32_t v) {
                for (uint32_t p = 0; p < bc; ++p) {
                    uint64_t gp = p0 + p;
                    for (const Unit& u : cons.units[gp])
                        code.push_back(WriteHostMemory{
                            out_base + p, 1,
                            cons.base + uint64_t(u.row) * cons.pitch + u.cell_base +
                                uint64_t(chunk) * W,
                            v});
                }
            };

            if (g.kind == Kind::Pool) {
                for (uint32_t cc = 0; cc < g.k_chunks; ++cc) {
                    uint32_t rows = bc * g.cells;
                    if (g.pitch == W) {
                        code.push_back(ReadHostMemory{
                            arena[l] + p0 * g.cells * W, 0, rows, W});
                    } else {
                        for (uint32_t r = 0; r < rows; ++r)
                            code.push_back(ReadHostMemory{
                                arena[l] + (p0 * g.cells + r) * g.pitch + uint64_t(cc) * W,
                                r, 1, W});
                    }
                    code.push_back(ReadWeights{identity_addr, 1});
                    code.push_back(MatMulConv{0, rows, 0, false, true});
                    Activate act;
                    act.acc_row = 0;
                    act.num_rows = rows;
                    act.func = ActFunc::MaxPool;
                    act.window = g.cells;
                    act.stride = g.cells;
                    act.rq = RequantParams{1, 0};
                    act.ub_dest_row = out_base;
                    code.push_back(act);
                    scatter(cc, std::min(W, g.out_c - cc * W));
                }
            } else {
                if (g.pitch == W) {
                    code.push_back(ReadHostMemory{arena[l] + p0 * W, 0, bc, W});
                } else {
                    for (uint32_t p = 0; p < bc; ++p)
                        for (uint32_t kc = 0; kc < g.k_chunks; ++kc)
                            code.push_back(ReadHostMemory{
                                arena[l] + (p0 + p) * g.pitch + uint64_t(kc) * W,
                                uint32_t(kc * B) + p, 1, W});
                }
                for (uint32_t o = 0; o < g.oc_chunks; ++o) {
                    for (uint32_t kc = 0; kc < g.k_chunks; ++kc) {
                        code.push_back(ReadWeights{
                            lp.placement.dram_addr +
                                (uint64_t(o) * g.k_chunks + kc) * cfg.tile_bytes(),
                            1});
                        code.push_back(
                            MatMulConv{uint32_t(kc * B), bc, 0, kc > 0, true});
                    }
                    Activate act;
                    act.acc_row = 0;
                    act.num_rows = bc;
                    act.func = g.act;
                    act.rq = g.rq;
                    act.ub_dest_row = out_base;
                    code.push_back(act);
                    scatter(o, std::min(W, g.out_c - o * W));
                }
            }
        }
    }
    return c;
}

std::vector<int8_t> build_host_image(const CompiledNetwork& c, const QTensor& input) {
    const Shape3& in = c.net.input;
    if (input.shape != std::vector<uint32_t>{in.h, in.w, in.c})
        throw NetworkError("input tensor shape does not match the network input " +
                           std::to_string(in.c) + "x" + std::to_string(in.h) + "x" +
                           std::to_string(in.w));
    std::vector<int8_t> img(c.host_image_bytes, 0);
    for (const HostRun& run : c.host_template)
        std::memcpy(img.data() + run.addr, run.bytes.data(), run.bytes.size());
    if (c.net.layers.empty()) {
        std::memcpy(img.data() + c.input_staging_addr, input.data.data(),
                    input.data.size());
        return img;
    }
    auto shapes = infer_shapes(c.net);
    UnitIndex units = build_unit_index(c.net.layers[0], shapes[0], shapes[1]);
    for (uint32_t y = 0; y < in.h; ++y)
        for (uint32_t x = 0; x < in.w; ++x)
            for (const Unit& u : units[uint64_t(y) * in.w + x]) {
                int8_t* dst = img.data() + c.input_staging_addr +
                              uint64_t(u.row) * c.input_pitch + u.cell_base;
                for (uint32_t ch = 0; ch < in.c; ++ch) dst[ch] = input.at3(y, x, ch);
            }
    return img;
}

QTensor extract_output(const CompiledNetwork& c, const MachineState& final_state) {
    const auto& host = final_state.host_mem();
    if (host.size() < c.output_addr + c.output_bytes)
        throw Error("machine host memory does not cover the output region");
    QTensor t = activation_tensor(c.output_shape);
    std::memcpy(t.data.data(), host.data() + c.output_addr, c.output_bytes);
    return t;
}

} // namespace ntpu
