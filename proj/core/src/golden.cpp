#include "ntpu/golden.hpp"

#include <algorithm>
#include <random>

#include "ntpu/errors.hpp"
#include "ntpu/requant.hpp"

namespace ntpu {

namespace {

Shape3 shape_of(const QTensor& t) {
    return {t.dim(2), t.dim(0), t.dim(1)}; // tensor is {h, w, c}
}

int8_t finish(int64_t acc, ActFunc act, RequantParams rq) {
    int32_t v = int32_t(uint32_t(uint64_t(acc))); // truncate, matching wraparound
    if (act == ActFunc::Relu && v < 0) v = 0;
    return requantize(v, rq);
}

std::vector<int64_t> conv_acc(const QTensor& in, const Conv2D& p, const QTensor& w,
                              const std::vector<int32_t>& biases, const Shape3& out) {
    Shape3 is = shape_of(in);
    std::vector<int64_t> acc(out.elems());
    size_t idx = 0;
    for (uint32_t oy = 0; oy < out.h; ++oy)
        for (uint32_t ox = 0; ox < out.w; ++ox)
            for (uint32_t oc = 0; oc < out.c; ++oc) {
                int64_t s = biases[oc];
                for (uint32_t ky = 0; ky < p.kernel_h; ++ky) {
                    int64_t iy = int64_t(oy) * p.stride + ky - p.pad;
                    if (iy < 0 || iy >= is.h) continue;
                    for (uint32_t kx = 0; kx < p.kernel_w; ++kx) {
                        int64_t ix = int64_t(ox) * p.stride + kx - p.pad;
                        if (ix < 0 || ix >= is.w) continue;
                        for (uint32_t ic = 0; ic < is.c; ++ic)
                            s += int64_t(in.at3(uint32_t(iy), uint32_t(ix), ic)) *
                                 w.at4(oc, ky, kx, ic);
                    }
                }
                acc[idx++] = s;
            }
    return acc;
}

std::vector<int64_t> fc_acc(const QTensor& in, const QTensor& w,
                            const std::vector<int32_t>& biases, uint32_t out_dim) {
    // in.data is already the height-major, width, channel flattening
    std::vector<int64_t> acc(out_dim);
    uint64_t in_dim = in.size();
    for (uint32_t o = 0; o < out_dim; ++o) {
        int64_t s = biases[o];
        const int8_t* row = w.data.data() + uint64_t(o) * in_dim;
        for (uint64_t i = 0; i < in_dim; ++i) s += int64_t(in.data[i]) * row[i];
        acc[o] = s;
    }
    return acc;
}

} // namespace

QTensor conv2d_ref(const QTensor& in, const Conv2D& p, const QTensor& w,
                   const std::vector<int32_t>& biases) {
    Shape3 is = shape_of(in);
    NetworkDesc one{"", is, {p}};
    Shape3 out = infer_shapes(one)[1];
    auto acc = conv_acc(in, p, w, biases, out);
    QTensor r = activation_tensor(out);
    for (size_t i = 0; i < acc.size(); ++i) r.data[i] = finish(acc[i], p.act, p.rq);
    return r;
}

QTensor fc_ref(const QTensor& in, const FullyConnected& p, const QTensor& w,
               const std::vector<int32_t>& biases) {
    auto acc = fc_acc(in, w, biases, p.out_dim);
    QTensor r = QTensor::zeros({1, 1, p.out_dim});
    for (size_t i = 0; i < acc.size(); ++i) r.data[i] = finish(acc[i], p.act, p.rq);
    return r;
}

QTensor relu_ref(const QTensor& in) {
    QTensor r = in;
    for (auto& v : r.data)
        if (v < 0) v = 0;
    return r;
}

QTensor maxpool_ref(const QTensor& in, const MaxPool2D& p) {
    Shape3 is = shape_of(in);
    NetworkDesc one{"", is, {p}};
    Shape3 out = infer_shapes(one)[1];
    QTensor r = activation_tensor(out);
    for (uint32_t oy = 0; oy < out.h; ++oy)
        for (uint32_t ox = 0; ox < out.w; ++ox)
            for (uint32_t c = 0; c < out.c; ++c) {
                int8_t m = -128;
                for (uint32_t ky = 0; ky < p.window; ++ky)
                    for (uint32_t kx = 0; kx < p.window; ++kx)
                        m = std::max(m, in.at3(oy * p.stride + ky, ox * p.stride + kx, c));
                r.at3(oy, ox, c) = m;
            }
    return r;
}

std::vector<QTensor> run_network_ref(const NetworkDesc& net, const NetworkWeights& w,
                                     const QTensor& input) {
    validate_weights(net, w);
    std::vector<QTensor> acts;
    acts.reserve(net.layers.size() + 1);
    acts.push_back(input);
    size_t wi = 0;
    for (const auto& layer : net.layers) {
        const QTensor& x = acts.back();
        if (auto* c = std::get_if<Conv2D>(&layer)) {
            const LayerWeights& lw = w.layers[wi++];
            acts.push_back(conv2d_ref(x, *c, lw.weights, lw.biases));
        } else if (auto* f = std::get_if<FullyConnected>(&layer)) {
            const LayerWeights& lw = w.layers[wi++];
            acts.push_back(fc_ref(x, *f, lw.weights, lw.biases));
        } else {
            acts.push_back(maxpool_ref(x, std::get<MaxPool2D>(layer)));
        }
    }
    return acts;
}

namespace {

uint64_t draw(std::mt19937_64& rng, uint64_t lo, uint64_t hi) {
    return lo + rng() % (hi - lo + 1);
}

// Smallest shift whose pre-clamp values clip at most 1% of the time.
uint8_t calibrate_shift(const std::vector<int64_t>& acc, ActFunc act, int32_t mult) {
    for (uint8_t s = 0; s <= 31; ++s) {
        size_t clipped = 0;
        for (int64_t a : acc) {
            int32_t v = int32_t(uint32_t(uint64_t(a)));
            if (act == ActFunc::Relu && v < 0) v = 0;
            int64_t r = requantize_preclamp(v, {mult, s});
            if (r > 127 || r < -128) ++clipped;
        }
        if (clipped * 100 <= acc.size()) return s;
    }
    return 31;
}

} // namespace

std::pair<NetworkDesc, NetworkWeights> gen_random_network(uint64_t seed, SizeClass size) {
    std::mt19937_64 rng(seed ^ 0x6e6574ULL);
    bool tiny = size == SizeClass::Tiny;

    NetworkDesc net;
    net.name = (tiny ? "rand-tiny-" : "rand-small-") + std::to_string(seed);
    uint32_t hw = uint32_t(tiny ? draw(rng, 4, 12) : draw(rng, 8, 28));
    net.input = {uint32_t(draw(rng, 1, tiny ? 8 : 16)), hw, hw};

    uint64_t n_layers = tiny ? draw(rng, 1, 4) : draw(rng, 2, 6);
    Shape3 cur = net.input;
    bool seen_fc = false;
    for (uint64_t i = 0; i < n_layers; ++i) {
        uint64_t kind = seen_fc ? 2 : draw(rng, 0, 2); // 0 conv, 1 pool, 2 fc
        if (kind == 1 && std::min(cur.h, cur.w) < 2) kind = 0;
        if (kind == 0) {
            Conv2D c;
            c.out_ch = uint32_t(draw(rng, 1, tiny ? 16 : 32));
            uint32_t kmax = std::min(std::min(cur.h, cur.w), 5u);
            c.kernel_h = c.kernel_w = uint32_t(draw(rng, 1, kmax));
            c.stride = uint32_t(draw(rng, 1, 2));
            c.pad = uint32_t(draw(rng, 0, 1));
            c.act = draw(rng, 0, 1) ? ActFunc::Relu : ActFunc::Identity;
            net.layers.push_back(c);
        } else if (kind == 1) {
            MaxPool2D p;
            p.window = uint32_t(draw(rng, 2, std::min(std::min(cur.h, cur.w), 3u)));
            p.stride = p.window;
            net.layers.push_back(p);
        } else {
            FullyConnected f;
            f.out_dim = uint32_t(draw(rng, 1, tiny ? 32 : 64));
            f.act = draw(rng, 0, 1) ? ActFunc::Relu : ActFunc::Identity;
            net.layers.push_back(f);
            seen_fc = true;
        }
        cur = infer_shapes(net).back();
    }

    // Calibrate requantizers layer by layer against same-seed weights/input.
    NetworkWeights w = gen_random_weights(seed, net);
    QTensor x = gen_random_input(seed, net.input);
    size_t wi = 0;
    for (auto& layer : net.layers) {
        if (auto* c = std::get_if<Conv2D>(&layer)) {
            const LayerWeights& lw = w.layers[wi++];
            Shape3 is = shape_of(x);
            NetworkDesc one{"", is, {*c}};
            auto acc = conv_acc(x, *c, lw.weights, lw.biases, infer_shapes(one)[1]);
            c->rq.multiplier = draw(rng, 0, 1) ? 3 : 1;
            c->rq.shift = calibrate_shift(acc, c->act, c->rq.multiplier);
            x = conv2d_ref(x, *c, lw.weights, lw.biases);
        } else if (auto* f = std::get_if<FullyConnected>(&layer)) {
            const LayerWeights& lw = w.layers[wi++];
            auto acc = fc_acc(x, lw.weights, lw.biases, f->out_dim);
            f->rq.multiplier = draw(rng, 0, 1) ? 3 : 1;
            f->rq.shift = calibrate_shift(acc, f->act, f->rq.multiplier);
            x = fc_ref(x, *f, lw.weights, lw.biases);
        } else {
            x = maxpool_ref(x, std::get<MaxPool2D>(layer));
        }
    }
    return {std::move(net), std::move(w)};
}

} // namespace ntpu
