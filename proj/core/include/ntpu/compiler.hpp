#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ntpu/config.hpp"
#include "ntpu/isa.hpp"
#include "ntpu/machine.hpp"
#include "ntpu/network.hpp"
#include "ntpu/tensor.hpp"
#include "ntpu/weights.hpp"

namespace ntpu {

// Lowering strategy, in brief:
//
// Convolutions become matrix multiplies (im2col): every output position is
// one staged row of K = in_ch*kh*kw lanes living in a host staging arena,
// K tiled into ceil/mac_rows chunks, out_ch into ceil/mac_cols chunks; one
// weight tile per (k-chunk, outch-chunk), k-chunks accumulate. A fully-
// connected layer is the same thing with a full-extent kernel (one
// position). Max-pool stages each window's rows consecutively, pushes them
// through an identity tile so they land in consecutive accumulator rows,
// and lets the post-processor take the window max.
//
// Layer 0's arena is gathered from the input tensor by build_host_image;
// every later arena is filled by the producing layer, which scatters each
// output row into every slot the consumer will read it from. Biases, when
// any are nonzero, ride an appended constant-1 lane feeding one extra tile
// row; the ones are pre-set in the host image template.
//
// Weight tiles live in a DRAM image in first-use order (layer, then output
// chunk, then k-chunk, identity tile last) and are always streamed through
// the weight FIFO just in time; "on-chip" placement reserves unified-buffer
// rows and means every tile is fetched exactly once, while layers too big
// to batch in one pass re-fetch their tiles per batch (DRAM streaming).

// Where a layer's parameters live during execution.
struct WeightPlacement {
    bool on_chip = false;
    uint32_t ub_row_begin = 0; // reserved UB rows, on-chip plans only
    uint32_t ub_num_rows = 0;
    uint64_t dram_addr = 0; // first tile of this layer in the DRAM image
    uint64_t num_tiles = 0;

    bool operator==(const WeightPlacement&) const = default;
};

// Tiling and allocation numbers for one layer.
struct LayerPlan {
    uint32_t layer_index = 0;
    uint64_t k_lanes = 0;   // lanes fed per position, bias lane included
    uint32_t k_chunks = 0;  // conv/fc: K tiling; pool: channel chunks
    uint32_t oc_chunks = 0; // output-channel tiling (pool: channel chunks)
    uint64_t n_positions = 0;
    uint32_t batch_rows = 0; // positions per pass through the accumulators
    uint32_t num_batches = 0;
    uint64_t weight_bits = 0; // logical parameter bits (weights + biases)
    WeightPlacement placement;
    uint32_t ub_staging_rows = 0; // UB rows holding staged inputs
    uint32_t ub_out_rows = 0;     // UB rows holding post-processed outputs
    uint32_t acc_rows_used = 0;
    uint64_t host_staging_bytes = 0; // this layer's input arena

    bool operator==(const LayerPlan&) const = default;
};

struct MemoryMap {
    bool on_chip = false; // all weights resident on-chip vs DRAM-streamed
    uint64_t weight_bits = 0;
    uint64_t peak_activation_bits = 0; // largest UB working set over layers
    uint64_t onchip_bits_used = 0;     // peak activations + on-chip weights
    uint64_t dram_bits_used = 0;       // staged DRAM image
    std::vector<LayerPlan> layers;
};

// Placement planner, usable without weights (it assumes every conv/fc layer
// carries nonzero biases; compile() refines chunk counts once it can see
// them). All weights go on-chip iff weight_bits plus the peak UB working
// set fit onchip_budget_bits; the working set is measured with unreserved
// UB so the decision does not depend on its own outcome. Throws
// CapacityError when some layer fits no legal tiling or the DRAM image
// exceeds dram_capacity_bits.
MemoryMap plan_memory(const NetworkDesc& net, const AcceleratorConfig& cfg);

// Nonzero bytes of the host image template (the bias-lane ones).
struct HostRun {
    uint64_t addr = 0;
    std::vector<int8_t> bytes;

    bool operator==(const HostRun&) const = default;
};

struct CompiledNetwork {
    Program program;
    MemoryMap map;
    NetworkDesc net; // copy used by build_host_image / extract_output
    std::string config_id;

    std::vector<int8_t> dram_image;
    uint64_t host_image_bytes = 0;
    std::vector<HostRun> host_template;

    uint64_t input_staging_addr = 0; // layer-0 arena (raw input if no layers)
    uint64_t input_pitch = 0;        // bytes per layer-0 staging row
    uint64_t output_addr = 0;        // packed height-major h*w*c int8
    uint64_t output_bytes = 0;
    Shape3 output_shape;
};

// Deterministic: identical (net, weights, cfg) give identical programs and
// images. Throws CapacityError (tiling/DRAM limits), IoError (weights do
// not pair with the network), NetworkError (bias outside int8),
// ConfigError (invalid cfg).
CompiledNetwork compile(const NetworkDesc& net, const NetworkWeights& w,
                        const AcceleratorConfig& cfg);

// Host arena for one run: template bytes plus the input tensor gathered
// into layer 0's staging pattern.
std::vector<int8_t> build_host_image(const CompiledNetwork& c, const QTensor& input);

// Reads the packed output region back out of a finished machine.
QTensor extract_output(const CompiledNetwork& c, const MachineState& final_state);

} // namespace ntpu
