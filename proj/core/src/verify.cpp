#include "ntpu/verify.hpp"

#include "ntpu/compiler.hpp"
#include "ntpu/golden.hpp"
#include "ntpu/machine.hpp"

namespace ntpu {

namespace {

struct Diff {
    bool differs = false;
    int64_t index = -1;
    int8_t got = 0;
    int8_t want = 0;
};

Diff first_diff(const QTensor& got, const QTensor& want) {
    Diff d;
    size_t n = std::min(got.data.size(), want.data.size());
    for (size_t i = 0; i < n; ++i)
        if (got.data[i] != want.data[i]) {
            d.differs = true;
            d.index = int64_t(i);
            d.got = got.data[i];
            d.want = want.data[i];
            return d;
        }
    if (got.data.size() != want.data.size()) {
        d.differs = true;
        d.index = int64_t(n);
    }
    return d;
}

QTensor run_on_machine(const NetworkDesc& net, const NetworkWeights& w,
                       const AcceleratorConfig& cfg, const QTensor& input,
                       PerfReport* report_out) {
    CompiledNetwork c = compile(net, w, cfg);
    auto image = build_host_image(c, input);
    auto [state, report] = run(c.program, cfg, image, c.dram_image);
    if (report_out) *report_out = report;
    return extract_output(c, state);
}

const char* kind_name(const LayerSpec& layer) {
    if (std::holds_alternative<Conv2D>(layer)) return "conv";
    if (std::holds_alternative<FullyConnected>(layer)) return "fc";
    return "pool";
}

} // namespace

VerifyResult verify_network(const NetworkDesc& net, const NetworkWeights& w,
                            const AcceleratorConfig& cfg, const QTensor& input) {
    VerifyResult r;
    auto ref_acts = run_network_ref(net, w, input);
    QTensor got = run_on_machine(net, w, cfg, input, &r.report);
    Diff d = first_diff(got, ref_acts.back());
    if (!d.differs) {
        r.ok = true;
        r.message = "outputs match (" + std::to_string(got.data.size()) +
                    " elements, " + std::to_string(net.layers.size()) + " layers)";
        return r;
    }
    r.ok = false;
    r.index = d.index;
    r.got = d.got;
    r.want = d.want;

    // Walk growing prefixes of the network to localize the first bad layer.
    for (size_t p = 1; p <= net.layers.size(); ++p) {
        NetworkDesc prefix;
        prefix.name = net.name;
        prefix.input = net.input;
        prefix.layers.assign(net.layers.begin(), net.layers.begin() + p);
        NetworkWeights pw;
        for (const auto& lw : w.layers)
            if (lw.layer_index < p) pw.layers.push_back(lw);
        QTensor pg = run_on_machine(prefix, pw, cfg, input, nullptr);
        Diff pd = first_diff(pg, ref_acts[p]);
        if (pd.differs) {
            r.layer = int32_t(p - 1);
            r.index = pd.index;
            r.got = pd.got;
            r.want = pd.want;
            r.message = "layer " + std::to_string(p - 1) + " (" +
                        kind_name(net.layers[p - 1]) + ") diverges at element " +
                        std::to_string(pd.index) + ": got " + std::to_string(pd.got) +
                        ", want " + std::to_string(pd.want);
            return r;
        }
    }
    r.message = "output region diverges at element " + std::to_string(d.index) +
                ": got " + std::to_string(d.got) + ", want " + std::to_string(d.want);
    return r;
}

} // namespace ntpu
