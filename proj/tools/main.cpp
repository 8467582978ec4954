// ntpu: compile, run, verify and inspect networks on the simulated
// accelerator. Exit codes: 0 success, 1 verification failure, 2 usage or
// parse error, 3 capacity/compile/simulation error.

#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ntpu/compiler.hpp"
#include "ntpu/config.hpp"
#include "ntpu/errors.hpp"
#include "ntpu/golden.hpp"
#include "ntpu/isa.hpp"
#include "ntpu/network.hpp"
#include "ntpu/sim.hpp"
#include "ntpu/tensor.hpp"
#include "ntpu/verify.hpp"
#include "ntpu/weights.hpp"

namespace fs = std::filesystem;
using namespace ntpu;

namespace {

NetworkWeights load_weights_arg(const std::string& spec, uint64_t seed,
                                const NetworkDesc& net) {
    if (spec == "random") return gen_random_weights(seed, net);
    return read_weights_file(spec);
}

QTensor load_input_arg(const std::string& spec, uint64_t seed, const NetworkDesc& net) {
    if (spec == "random") return gen_random_input(seed, net.input);
    return read_tensor_file(spec);
}

uint64_t layer_param_count(const LayerSpec& layer, const Shape3& in) {
    if (auto* c = std::get_if<Conv2D>(&layer))
        return uint64_t(c->out_ch) * (uint64_t(in.c) * c->kernel_h * c->kernel_w + 1);
    if (auto* f = std::get_if<FullyConnected>(&layer))
        return uint64_t(f->out_dim) * (in.elems() + 1);
    return 0;
}

const char* layer_kind(const LayerSpec& layer) {
    if (std::holds_alternative<Conv2D>(layer)) return "conv";
    if (std::holds_alternative<FullyConnected>(layer)) return "fc";
    return "pool";
}

std::string shape_str(const Shape3& s) {
    return std::to_string(s.c) + "x" + std::to_string(s.h) + "x" + std::to_string(s.w);
}

struct RunOutcome {
    PerfReport report;
    QTensor output;
};

RunOutcome run_once(const NetworkDesc& net, const NetworkWeights& w,
                    const AcceleratorConfig& cfg, const QTensor& input) {
    CompiledNetwork c = compile(net, w, cfg);
    auto image = build_host_image(c, input);
    auto [state, report] = run(c.program, cfg, image, c.dram_image);
    return {report, extract_output(c, state)};
}

void append_csv(const std::string& path, const std::vector<std::string>& rows) {
    bool need_header = !fs::exists(path) || fs::file_size(path) == 0;
    std::ofstream out(path, std::ios::app);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    if (need_header) out << "config," << PerfReport::csv_header() << "\n";
    for (const auto& r : rows) out << r << "\n";
    if (!out) throw IoError("failed writing '" + path + "'");
}

std::vector<std::string> read_config_list(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open sweep list '" + path + "'");
    std::vector<std::string> names;
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        auto e = line.find_last_not_of(" \t\r");
        names.push_back(line.substr(b, e - b + 1));
    }
    return names;
}

int cmd_compile(const std::string& net_path, const std::string& weights,
                uint64_t seed, const std::string& config, std::string out_path) {
    NetworkDesc net = load_network_file(net_path);
    AcceleratorConfig cfg = resolve_config(config);
    NetworkWeights w = load_weights_arg(weights, seed, net);
    CompiledNetwork c = compile(net, w, cfg);
    if (out_path.empty())
        out_path = fs::path(net_path).stem().string() + ".ntpuprog";
    write_program_file(out_path, c.program);
    std::cout << "network: " << net.name << "\n"
              << "config: " << cfg.name << "\n"
              << "instructions: " << c.program.code.size() << "\n"
              << "weight_bits: " << c.map.weight_bits << "\n"
              << "peak_activation_bits: " << c.map.peak_activation_bits << "\n"
              << "onchip_bits_used: " << c.map.onchip_bits_used << "\n"
              << "dram_bits_used: " << c.map.dram_bits_used << "\n"
              << "placement: " << (c.map.on_chip ? "on-chip" : "dram-streamed") << "\n"
              << "wrote: " << out_path << "\n";
    return 0;
}

int cmd_run(const std::string& net_path, const std::string& weights,
            const std::string& input_spec, const std::string& config, uint64_t seed,
            const std::string& out_path, const std::string& csv_path,
            const std::string& sweep_path) {
    NetworkDesc net = load_network_file(net_path);
    NetworkWeights w = load_weights_arg(weights, seed, net);
    QTensor input = load_input_arg(input_spec, seed, net);

    if (!sweep_path.empty()) {
        auto names = read_config_list(sweep_path);
        std::vector<std::future<std::string>> futs;
        futs.reserve(names.size());
        for (const auto& name : names)
            futs.push_back(std::async(std::launch::async, [&, name]() {
                AcceleratorConfig cfg = resolve_config(name);
                RunOutcome o = run_once(net, w, cfg, input);
                return cfg.name + "," + o.report.to_csv_row();
            }));
        std::vector<std::string> rows;
        rows.reserve(futs.size());
        for (auto& f : futs) rows.push_back(f.get());
        if (csv_path.empty()) {
            std::cout << "config," << PerfReport::csv_header() << "\n";
            for (const auto& r : rows) std::cout << r << "\n";
        } else {
            append_csv(csv_path, rows);
        }
        return 0;
    }

    AcceleratorConfig cfg = resolve_config(config);
    RunOutcome o = run_once(net, w, cfg, input);
    std::cout << o.report.to_text();
    if (!out_path.empty()) write_tensor_file(out_path, o.output);
    if (!csv_path.empty()) append_csv(csv_path, {cfg.name + "," + o.report.to_csv_row()});
    return 0;
}

int cmd_verify(const std::string& net_path, const std::string& weights,
               const std::string& input_spec, const std::string& config,
               uint64_t seed, const std::string& expected_path) {
    NetworkDesc net = load_network_file(net_path);
    NetworkWeights w = load_weights_arg(weights, seed, net);
    QTensor input = load_input_arg(input_spec, seed, net);
    AcceleratorConfig cfg = resolve_config(config);
    VerifyResult r = verify_network(net, w, cfg, input);
    if (!r.ok) {
        std::cout << "FAIL " << r.message << "\n";
        return 1;
    }
    if (!expected_path.empty()) {
        // Regression check against a previously captured output tensor.
        QTensor expected = read_tensor_file(expected_path);
        RunOutcome o = run_once(net, w, cfg, input);
        if (o.output.shape != expected.shape) {
            std::cout << "FAIL output shape differs from the expected tensor\n";
            return 1;
        }
        for (size_t i = 0; i < o.output.data.size(); ++i)
            if (o.output.data[i] != expected.data[i]) {
                std::cout << "FAIL output diverges from expected at element " << i
                          << ": got " << int(o.output.data[i]) << ", want "
                          << int(expected.data[i]) << "\n";
                return 1;
            }
    }
    std::cout << "PASS " << r.message << "\n";
    return 0;
}

int cmd_check_capacity(const std::string& net_path, const std::string& config) {
    AcceleratorConfig cfg = resolve_config(config);
    std::cout << "config: " << cfg.name << "\n"
              << "mac_array: " << cfg.mac_rows << "x" << cfg.mac_cols << "\n"
              << "ub_bits: " << cfg.ub_bits() << "\n"
              << "acc_bits: " << cfg.acc_bits() << "\n"
              << "weight_fifo_bits: " << cfg.weight_fifo_tiles * cfg.tile_bytes() * 8
              << "\n"
              << "onchip_budget_bits: " << cfg.onchip_budget_bits << "\n"
              << "dram_capacity_bits: " << cfg.dram_capacity_bits << "\n";
    if (net_path.empty()) return 0;
    NetworkDesc net = load_network_file(net_path);
    auto shapes = infer_shapes(net);
    std::cout << "network: " << net.name << "\n";
    uint64_t total = 0;
    for (size_t i = 0; i < net.layers.size(); ++i) {
        uint64_t p = layer_param_count(net.layers[i], shapes[i]);
        total += p;
        std::cout << "layer " << i << " " << layer_kind(net.layers[i]) << " "
                  << shape_str(shapes[i]) << " -> " << shape_str(shapes[i + 1])
                  << " params " << p << " bits " << p * 8 << "\n";
    }
    std::cout << "total_params: " << total << "\n"
              << "total_weight_bits: " << total * 8 << "\n"
              << "weights_fit_budget: "
              << (total * 8 <= cfg.onchip_budget_bits ? "yes" : "no") << "\n";
    try {
        MemoryMap map = plan_memory(net, cfg);
        std::cout << "placement: " << (map.on_chip ? "on-chip" : "dram-streamed")
                  << "\n";
    } catch (const CapacityError& e) {
        std::cout << "placement: infeasible (" << e.what() << ")\n";
    }
    return 0;
}

int cmd_disasm(const std::string& prog_path, const std::string& out_path) {
    Program p = read_program_file(prog_path);
    std::string text = disassemble(p);
    if (out_path.empty()) {
        std::cout << text;
    } else {
        std::ofstream out(out_path, std::ios::binary);
        if (!out) throw IoError("cannot open '" + out_path + "' for writing");
        out << text;
    }
    return 0;
}

int cmd_gen_weights(const std::string& net_path, uint64_t seed,
                    const std::string& out_path) {
    NetworkDesc net = load_network_file(net_path);
    write_weights_file(out_path, gen_random_weights(seed, net));
    std::cout << "wrote: " << out_path << "\n";
    return 0;
}

int cmd_gen_input(const std::string& net_path, uint64_t seed,
                  const std::string& out_path) {
    NetworkDesc net = load_network_file(net_path);
    write_tensor_file(out_path, gen_random_input(seed, net.input));
    std::cout << "wrote: " << out_path << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"systolic-array accelerator compiler and simulator"};
    app.require_subcommand(1);

    std::string net_path, weights = "random", input = "random", config = "naivetpu";
    std::string out_path, csv_path, sweep_path, prog_path, expected_path;
    uint64_t seed = 0;

    auto* comp = app.add_subcommand("compile", "lower a network to a program file");
    comp->add_option("network", net_path, "network description file")->required();
    comp->add_option("--weights", weights, "weights file, or 'random'");
    comp->add_option("--seed", seed, "seed for random weights");
    comp->add_option("--config", config, "config preset name or file");
    comp->add_option("-o,--output", out_path, "program file to write");

    auto* runc = app.add_subcommand("run", "compile and simulate a network");
    runc->add_option("network", net_path, "network description file")->required();
    runc->add_option("--weights", weights, "weights file, or 'random'");
    runc->add_option("--input", input, "input tensor file, or 'random'");
    runc->add_option("--config", config, "config preset name or file");
    runc->add_option("--seed", seed, "seed for random weights/input");
    runc->add_option("-o,--output", out_path, "output tensor file to write");
    runc->add_option("--csv", csv_path, "append perf counters as a CSV row");
    runc->add_option("--sweep", sweep_path, "file listing configs, one per line");

    auto* ver = app.add_subcommand("verify", "check the simulator against the reference");
    ver->add_option("network", net_path, "network description file")->required();
    ver->add_option("--weights", weights, "weights file, or 'random'");
    ver->add_option("--input", input, "input tensor file, or 'random'");
    ver->add_option("--config", config, "config preset name or file");
    ver->add_option("--seed", seed, "seed for random weights/input");
    ver->add_option("--expected", expected_path,
                    "also require the output to match this tensor file");

    auto* cap = app.add_subcommand("check-capacity", "report parameter bits vs budgets");
    cap->add_option("network", net_path, "network description file (optional)");
    cap->add_option("--config", config, "config preset name or file");

    auto* dis = app.add_subcommand("disasm", "disassemble a program file");
    dis->add_option("program", prog_path, "program file")->required();
    dis->add_option("-o,--output", out_path, "write assembly here instead of stdout");

    auto* genw = app.add_subcommand("gen-weights", "write seeded random weights");
    genw->add_option("network", net_path, "network description file")->required();
    genw->add_option("--seed", seed, "generator seed");
    genw->add_option("-o,--output", out_path, "weights file to write")->required();

    auto* geni = app.add_subcommand("gen-input", "write a seeded random input tensor");
    geni->add_option("network", net_path, "network description file")->required();
    geni->add_option("--seed", seed, "generator seed");
    geni->add_option("-o,--output", out_path, "tensor file to write")->required();

    try {
        app.parse(argc, argv);
        if (app.got_subcommand(comp))
            return cmd_compile(net_path, weights, seed, config, out_path);
        if (app.got_subcommand(runc))
            return cmd_run(net_path, weights, input, config, seed, out_path, csv_path,
                           sweep_path);
        if (app.got_subcommand(ver))
            return cmd_verify(net_path, weights, input, config, seed, expected_path);
        if (app.got_subcommand(cap)) return cmd_check_capacity(net_path, config);
        if (app.got_subcommand(dis)) return cmd_disasm(prog_path, out_path);
        if (app.got_subcommand(genw)) return cmd_gen_weights(net_path, seed, out_path);
        if (app.got_subcommand(geni)) return cmd_gen_input(net_path, seed, out_path);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    } catch (const AsmError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NetParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DecodeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
