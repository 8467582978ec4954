#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ntpu {

// Geometry and plumbing parameters of one accelerator instance. All
// capacities are element counts, all bandwidths bytes per cycle.
struct AcceleratorConfig {
    std::string name;

    uint32_t mac_rows = 0;          // systolic array height (K direction)
    uint32_t mac_cols = 0;          // systolic array width (output lanes)
    uint32_t ub_rows = 0;           // unified buffer entries
    uint32_t ub_width = 0;          // int8 lanes per UB entry, must equal mac_cols
    uint32_t acc_rows = 0;          // accumulator entries
    uint32_t acc_width = 0;         // int32 lanes per accumulator entry, must equal mac_cols
    uint32_t weight_fifo_tiles = 0; // tile slots between DRAM and the array

    uint64_t host_bw = 0;           // host <-> UB bytes/cycle
    uint64_t dram_bw = 0;           // DRAM -> weight FIFO bytes/cycle
    uint64_t dram_latency = 0;      // fixed cycles per DRAM transaction

    uint64_t onchip_budget_bits = 0;   // planning budget for weights + live activations
    uint64_t dram_capacity_bits = 0;   // staging DRAM size

    // Throws ConfigError naming the first offending field.
    void validate() const;

    uint64_t tile_bytes() const { return uint64_t(mac_rows) * mac_cols; }
    uint64_t ub_bits() const { return uint64_t(ub_rows) * ub_width * 8; }
    uint64_t acc_bits() const { return uint64_t(acc_rows) * acc_width * 32; }
};

// Built-in presets: "naivetpu", "googletpu", "ax7020".
AcceleratorConfig preset_config(const std::string& name);
std::vector<std::string> preset_names();

// key=value file, one per line, '#' comments. An optional leading
// "preset=<name>" line selects the base everything else overrides;
// the default base is naivetpu.
AcceleratorConfig load_config_file(const std::string& path);

// Resolves a --config argument: preset name first, else a file path.
AcceleratorConfig resolve_config(const std::string& name_or_path);

} // namespace ntpu
