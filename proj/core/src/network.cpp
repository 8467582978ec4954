#include "ntpu/network.hpp"

#include <fstream>
#include <sstream>

namespace ntpu {

bool layer_has_params(const LayerSpec& layer) {
    return !std::holds_alternative<MaxPool2D>(layer);
}

std::vector<Shape3> infer_shapes(const NetworkDesc& net) {
    if (net.input.c < 1 || net.input.h < 1 || net.input.w < 1)
        throw NetworkError("input shape must have all dimensions >= 1");
    std::vector<Shape3> shapes;
    shapes.reserve(net.layers.size() + 1);
    shapes.push_back(net.input);
    for (size_t i = 0; i < net.layers.size(); ++i) {
        const Shape3& in = shapes.back();
        Shape3 out;
        std::string where = "layer " + std::to_string(i);
        if (auto* conv = std::get_if<Conv2D>(&net.layers[i])) {
            uint64_t eh = uint64_t(in.h) + 2 * conv->pad;
            uint64_t ew = uint64_t(in.w) + 2 * conv->pad;
            if (eh < conv->kernel_h || ew < conv->kernel_w)
                throw NetworkError(where + ": kernel " + std::to_string(conv->kernel_h) +
                                   "x" + std::to_string(conv->kernel_w) +
                                   " exceeds padded input " + std::to_string(eh) + "x" +
                                   std::to_string(ew));
            out.c = conv->out_ch;
            out.h = uint32_t((eh - conv->kernel_h) / conv->stride + 1);
            out.w = uint32_t((ew - conv->kernel_w) / conv->stride + 1);
        } else if (auto* fc = std::get_if<FullyConnected>(&net.layers[i])) {
            out = {fc->out_dim, 1, 1};
        } else {
            const auto& pool = std::get<MaxPool2D>(net.layers[i]);
            if (in.h < pool.window || in.w < pool.window)
                throw NetworkError(where + ": pool window " + std::to_string(pool.window) +
                                   " exceeds input " + std::to_string(in.h) + "x" +
                                   std::to_string(in.w));
            out.c = in.c;
            out.h = (in.h - pool.window) / pool.stride + 1;
            out.w = (in.w - pool.window) / pool.stride + 1;
        }
        shapes.push_back(out);
    }
    return shapes;
}

uint64_t count_params(const NetworkDesc& net) {
    auto shapes = infer_shapes(net);
    uint64_t total = 0;
    for (size_t i = 0; i < net.layers.size(); ++i) {
        const Shape3& in = shapes[i];
        if (auto* conv = std::get_if<Conv2D>(&net.layers[i])) {
            total += uint64_t(conv->out_ch) *
                     (uint64_t(in.c) * conv->kernel_h * conv->kernel_w + 1);
        } else if (auto* fc = std::get_if<FullyConnected>(&net.layers[i])) {
            total += uint64_t(fc->out_dim) * (in.elems() + 1);
        }
    }
    return total;
}

namespace {

struct Directive {
    std::vector<std::pair<std::string, std::string>> kv;
    int line;

    bool has(const std::string& k) const {
        for (const auto& [key, _] : kv)
            if (key == k) return true;
        return false;
    }
    const std::string& get(const std::string& k) const {
        for (const auto& [key, value] : kv)
            if (key == k) return value;
        throw NetParseError(line, "missing key '" + k + "'");
    }
    void check_known(std::initializer_list<const char*> known) const {
        for (const auto& [key, _] : kv) {
            bool ok = false;
            for (const char* k : known)
                if (key == k) ok = true;
            if (!ok) throw NetParseError(line, "unknown key '" + key + "'");
        }
    }
};

uint32_t net_u32(const Directive& d, const std::string& key, uint32_t min_value) {
    const std::string& v = d.get(key);
    try {
        size_t pos = 0;
        unsigned long long r = std::stoull(v, &pos);
        if (pos != v.size() || v[0] == '-' || r > UINT32_MAX)
            throw std::invalid_argument(v);
        if (r < min_value)
            throw NetParseError(d.line, key + " must be >= " + std::to_string(min_value));
        return uint32_t(r);
    } catch (const NetParseError&) {
        throw;
    } catch (const std::exception&) {
        throw NetParseError(d.line, "bad value '" + v + "' for " + key);
    }
}

ActFunc net_act(const Directive& d) {
    if (!d.has("act")) return ActFunc::Identity;
    const std::string& v = d.get("act");
    if (v == "identity") return ActFunc::Identity;
    if (v == "relu") return ActFunc::Relu;
    throw NetParseError(d.line, "unknown act '" + v + "' (expected identity or relu)");
}

RequantParams net_rq(const Directive& d) {
    RequantParams rq;
    if (!d.has("rq")) return rq;
    const std::string& v = d.get("rq");
    auto colon = v.find(':');
    try {
        if (colon == std::string::npos) throw std::invalid_argument(v);
        size_t p1 = 0, p2 = 0;
        std::string ms = v.substr(0, colon), ss = v.substr(colon + 1);
        long long m = std::stoll(ms, &p1);
        unsigned long long s = std::stoull(ss, &p2);
        if (p1 != ms.size() || p2 != ss.size() || m < INT32_MIN || m > INT32_MAX || s > 31)
            throw std::invalid_argument(v);
        rq.multiplier = int32_t(m);
        rq.shift = uint8_t(s);
    } catch (const std::exception&) {
        throw NetParseError(d.line, "bad rq '" + v + "' (expected multiplier:shift, shift <= 31)");
    }
    return rq;
}

} // namespace

NetworkDesc parse_network(const std::string& text) {
    NetworkDesc net;
    bool have_input = false;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string kind;
        if (!(ls >> kind)) continue;

        if (kind == "name") {
            std::string n;
            if (!(ls >> n)) throw NetParseError(lineno, "name requires a value");
            net.name = n;
            continue;
        }
        if (kind == "input") {
            if (have_input) throw NetParseError(lineno, "duplicate input directive");
            uint64_t c, h, w;
            if (!(ls >> c >> h >> w))
                throw NetParseError(lineno, "input requires <channels> <height> <width>");
            if (c < 1 || h < 1 || w < 1 || c > UINT32_MAX || h > UINT32_MAX || w > UINT32_MAX)
                throw NetParseError(lineno, "input dimensions must be >= 1");
            net.input = {uint32_t(c), uint32_t(h), uint32_t(w)};
            have_input = true;
            continue;
        }

        Directive d;
        d.line = lineno;
        std::string tok;
        while (ls >> tok) {
            auto eq = tok.find('=');
            if (eq == std::string::npos || eq == 0)
                throw NetParseError(lineno, "expected key=value, got '" + tok + "'");
            std::string key = tok.substr(0, eq);
            if (d.has(key)) throw NetParseError(lineno, "duplicate key '" + key + "'");
            d.kv.emplace_back(key, tok.substr(eq + 1));
        }

        if (kind == "conv") {
            d.check_known({"out", "k", "kh", "kw", "s", "p", "act", "rq"});
            Conv2D conv;
            conv.out_ch = net_u32(d, "out", 1);
            if (d.has("k")) {
                if (d.has("kh") || d.has("kw"))
                    throw NetParseError(lineno, "use either k= or kh=/kw=, not both");
                conv.kernel_h = conv.kernel_w = net_u32(d, "k", 1);
            } else if (d.has("kh") && d.has("kw")) {
                conv.kernel_h = net_u32(d, "kh", 1);
                conv.kernel_w = net_u32(d, "kw", 1);
            } else {
                throw NetParseError(lineno, "conv requires k= or kh=/kw=");
            }
            conv.stride = d.has("s") ? net_u32(d, "s", 1) : 1;
            conv.pad = d.has("p") ? net_u32(d, "p", 0) : 0;
            conv.act = net_act(d);
            conv.rq = net_rq(d);
            net.layers.push_back(conv);
        } else if (kind == "fc") {
            d.check_known({"out", "act", "rq"});
            FullyConnected fc;
            fc.out_dim = net_u32(d, "out", 1);
            fc.act = net_act(d);
            fc.rq = net_rq(d);
            net.layers.push_back(fc);
        } else if (kind == "pool") {
            d.check_known({"w", "s"});
            MaxPool2D pool;
            pool.window = net_u32(d, "w", 1);
            pool.stride = d.has("s") ? net_u32(d, "s", 1) : pool.window;
            net.layers.push_back(pool);
        } else {
            throw NetParseError(lineno, "unknown directive '" + kind + "'");
        }
    }
    if (!have_input) throw NetParseError(lineno, "missing input directive");
    return net;
}

NetworkDesc load_network_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open network file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    NetworkDesc net = parse_network(ss.str());
    if (net.name.empty()) {
        auto slash = path.find_last_of('/');
        net.name = slash == std::string::npos ? path : path.substr(slash + 1);
    }
    return net;
}

std::string format_network(const NetworkDesc& net) {
    std::ostringstream os;
    if (!net.name.empty()) os << "name " << net.name << "\n";
    os << "input " << net.input.c << " " << net.input.h << " " << net.input.w << "\n";
    for (const auto& layer : net.layers) {
        if (auto* conv = std::get_if<Conv2D>(&layer)) {
            os << "conv out=" << conv->out_ch;
            if (conv->kernel_h == conv->kernel_w)
                os << " k=" << conv->kernel_h;
            else
                os << " kh=" << conv->kernel_h << " kw=" << conv->kernel_w;
            os << " s=" << conv->stride << " p=" << conv->pad;
            os << " act=" << (conv->act == ActFunc::Relu ? "relu" : "identity");
            os << " rq=" << conv->rq.multiplier << ":" << int(conv->rq.shift) << "\n";
        } else if (auto* fc = std::get_if<FullyConnected>(&layer)) {
            os << "fc out=" << fc->out_dim;
            os << " act=" << (fc->act == ActFunc::Relu ? "relu" : "identity");
            os << " rq=" << fc->rq.multiplier << ":" << int(fc->rq.shift) << "\n";
        } else {
            const auto& pool = std::get<MaxPool2D>(layer);
            os << "pool w=" << pool.window << " s=" << pool.stride << "\n";
        }
    }
    return os.str();
}

} // namespace ntpu
