#include "ntpu/config.hpp"

#include <fstream>
#include <sstream>

#include "ntpu/errors.hpp"

namespace ntpu {

void AcceleratorConfig::validate() const {
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigError(msg);
    };
    require(mac_rows >= 1, "mac_rows must be >= 1");
    require(mac_cols >= 1, "mac_cols must be >= 1");
    require(ub_rows >= 1, "ub_rows must be >= 1");
    require(acc_rows >= 1, "acc_rows must be >= 1");
    require(ub_width == mac_cols, "ub_width must equal mac_cols");
    require(acc_width == mac_cols, "acc_width must equal mac_cols");
    require(weight_fifo_tiles >= 1, "weight_fifo_tiles must be >= 1");
    require(host_bw >= 1, "host_bw must be >= 1");
    require(dram_bw >= 1, "dram_bw must be >= 1");
    require(onchip_budget_bits >= 1, "onchip_budget_bits must be >= 1");
    require(dram_capacity_bits >= 1, "dram_capacity_bits must be >= 1");
}

AcceleratorConfig preset_config(const std::string& name) {
    AcceleratorConfig cfg;
    cfg.name = name;
    if (name == "naivetpu" || name == "ax7020") {
        // 32x32 array, 16K-entry UB, 4K-entry accumulators; budgets match the
        // AX7020 board the design targets (4.9 Mbit BRAM, 8 Gbit DDR).
        cfg.mac_rows = 32;
        cfg.mac_cols = 32;
        cfg.ub_rows = 16384;
        cfg.ub_width = 32;
        cfg.acc_rows = 4096;
        cfg.acc_width = 32;
        cfg.weight_fifo_tiles = 4;
        cfg.host_bw = 16;
        cfg.dram_bw = 16;
        cfg.dram_latency = 32;
        cfg.onchip_budget_bits = 4'900'000;
        cfg.dram_capacity_bits = 8'000'000'000;
    } else if (name == "googletpu") {
        // 256x256 array, 96K-entry UB, 4K-entry accumulators. Budget is the
        // sum of UB, accumulator and FIFO storage; DRAM models an 8 GiB DIMM.
        cfg.mac_rows = 256;
        cfg.mac_cols = 256;
        cfg.ub_rows = 96 * 1024;
        cfg.ub_width = 256;
        cfg.acc_rows = 4096;
        cfg.acc_width = 256;
        cfg.weight_fifo_tiles = 4;
        cfg.host_bw = 64;
        cfg.dram_bw = 64;
        cfg.dram_latency = 64;
        cfg.onchip_budget_bits = cfg.ub_bits() + cfg.acc_bits() +
                                 uint64_t(cfg.weight_fifo_tiles) * 256 * 256 * 8;
        cfg.dram_capacity_bits = 8ull * 1024 * 1024 * 1024 * 8;
    } else {
        throw ConfigError("unknown config preset '" + name + "'");
    }
    cfg.validate();
    return cfg;
}

std::vector<std::string> preset_names() {
    return {"naivetpu", "googletpu", "ax7020"};
}

namespace {

uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        unsigned long long v = std::stoull(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("bad value '" + value + "' for " + key);
    }
}

} // namespace

AcceleratorConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");

    AcceleratorConfig cfg = preset_config("naivetpu");
    cfg.name = path;
    std::string line;
    int lineno = 0;
    bool first_directive = true;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto begin = line.find_first_not_of(" \t\r");
        if (begin == std::string::npos) continue;
        auto end = line.find_last_not_of(" \t\r");
        std::string stmt = line.substr(begin, end - begin + 1);

        auto eq = stmt.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
        std::string key = stmt.substr(0, eq);
        std::string value = stmt.substr(eq + 1);

        if (key == "preset") {
            if (!first_directive)
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": preset= must be the first directive");
            cfg = preset_config(value);
            cfg.name = path;
        } else if (key == "mac_rows") {
            cfg.mac_rows = uint32_t(parse_u64(key, value));
        } else if (key == "mac_cols") {
            cfg.mac_cols = uint32_t(parse_u64(key, value));
            cfg.ub_width = cfg.mac_cols;
            cfg.acc_width = cfg.mac_cols;
        } else if (key == "ub_rows") {
            cfg.ub_rows = uint32_t(parse_u64(key, value));
        } else if (key == "acc_rows") {
            cfg.acc_rows = uint32_t(parse_u64(key, value));
        } else if (key == "weight_fifo_tiles") {
            cfg.weight_fifo_tiles = uint32_t(parse_u64(key, value));
        } else if (key == "host_bw") {
            cfg.host_bw = parse_u64(key, value);
        } else if (key == "dram_bw") {
            cfg.dram_bw = parse_u64(key, value);
        } else if (key == "dram_latency") {
            cfg.dram_latency = parse_u64(key, value);
        } else if (key == "onchip_budget_bits") {
            cfg.onchip_budget_bits = parse_u64(key, value);
        } else if (key == "dram_capacity_bits") {
            cfg.dram_capacity_bits = parse_u64(key, value);
        } else {
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": unknown key '" + key + "'");
        }
        first_directive = false;
    }
    cfg.validate();
    return cfg;
}

AcceleratorConfig resolve_config(const std::string& name_or_path) {
    for (const auto& p : preset_names())
        if (name_or_path == p) return preset_config(p);
    return load_config_file(name_or_path);
}

} // namespace ntpu
