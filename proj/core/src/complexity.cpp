#include "flattenet/complexity.hpp"

#include <json.hpp>

#include <sstream>
#include <stdexcept>

namespace flattenet {

namespace {

const char* kind_str(ArchLayer::Kind k) {
    switch (k) {
        case ArchLayer::Kind::Conv: return "conv";
        case ArchLayer::Kind::BatchNorm: return "bn";
        case ArchLayer::Kind::Prelu: return "prelu";
        case ArchLayer::Kind::Relu: return "relu";
        case ArchLayer::Kind::ChannelShuffle: return "channel_shuffle";
        case ArchLayer::Kind::PixelShuffle: return "pixel_shuffle";
        case ArchLayer::Kind::MaxPool: return "maxpool";
        case ArchLayer::Kind::Add: return "add";
        case ArchLayer::Kind::Bilinear: return "bilinear";
    }
    return "?";
}

// tracks the running (c, h, w) while a builder appends layers
struct Cursor {
    ArchDescriptor desc;
    std::int64_t c, h, w;

    Cursor(std::string name, Dims input) : c(input.c), h(input.h), w(input.w) {
        desc.name = std::move(name);
        desc.input = input;
    }

    static std::int64_t conv_out(std::int64_t in, std::int64_t k, std::int64_t s, std::int64_t p) {
        const std::int64_t out = (in + 2 * p - k) / s + 1;
        if (out <= 0) throw std::invalid_argument("descriptor: feature map shrank to nothing");
        return out;
    }

    void conv(const std::string& name, std::int64_t c_out, std::int64_t k, std::int64_t stride = 1,
              std::int64_t groups = 1, bool bias = false, std::int64_t pad = -1) {
        if (pad < 0) pad = k / 2;
        if (c % groups != 0 || c_out % groups != 0)
            throw std::invalid_argument("descriptor: groups do not divide channels at " + name);
        ArchLayer l;
        l.kind = ArchLayer::Kind::Conv;
        l.name = name;
        l.c_in = c;
        l.c_out = c_out;
        l.k = k;
        l.stride = stride;
        l.groups = groups;
        l.bias = bias;
        h = conv_out(h, k, stride, pad);
        w = conv_out(w, k, stride, pad);
        l.h_out = h;
        l.w_out = w;
        c = c_out;
        desc.layers.push_back(l);
    }

    // projection convs hang off the block input, not the running cursor
    void conv_at(const std::string& name, std::int64_t c_in, std::int64_t h_in, std::int64_t w_in,
                 std::int64_t c_out, std::int64_t k, std::int64_t stride) {
        ArchLayer l;
        l.kind = ArchLayer::Kind::Conv;
        l.name = name;
        l.c_in = c_in;
        l.c_out = c_out;
        l.k = k;
        l.stride = stride;
        l.groups = 1;
        l.h_out = conv_out(h_in, k, stride, k / 2);
        l.w_out = conv_out(w_in, k, stride, k / 2);
        desc.layers.push_back(l);
    }

    void simple(ArchLayer::Kind kind, const std::string& name) {
        ArchLayer l;
        l.kind = kind;
        l.name = name;
        l.c_in = c;
        l.c_out = c;
        l.h_out = h;
        l.w_out = w;
        desc.layers.push_back(l);
    }

    void maxpool(const std::string& name, std::int64_t k, std::int64_t stride, std::int64_t pad) {
        ArchLayer l;
        l.kind = ArchLayer::Kind::MaxPool;
        l.name = name;
        l.c_in = c;
        l.c_out = c;
        l.k = k;
        l.stride = stride;
        h = conv_out(h, k, stride, pad);
        w = conv_out(w, k, stride, pad);
        l.h_out = h;
        l.w_out = w;
        desc.layers.push_back(l);
    }

    void pixel_shuffle(const std::string& name, std::int64_t r) {
        if (c % (r * r) != 0)
            throw std::invalid_argument("descriptor: pixel shuffle channel mismatch at " + name);
        ArchLayer l;
        l.kind = ArchLayer::Kind::PixelShuffle;
        l.name = name;
        l.c_in = c;
        c = c / (r * r);
        h *= r;
        w *= r;
        l.c_out = c;
        l.k = r;
        l.h_out = h;
        l.w_out = w;
        desc.layers.push_back(l);
    }
};

void append_bottleneck(Cursor& cur, const std::string& name, std::int64_t width,
                       std::int64_t stride, bool project) {
    const std::int64_t c_in = cur.c, h_in = cur.h, w_in = cur.w;
    cur.conv(name + ".conv1", width, 1, 1);
    cur.simple(ArchLayer::Kind::BatchNorm, name + ".bn1");
    cur.simple(ArchLayer::Kind::Relu, name + ".relu1");
    cur.conv(name + ".conv2", width, 3, stride);
    cur.simple(ArchLayer::Kind::BatchNorm, name + ".bn2");
    cur.simple(ArchLayer::Kind::Relu, name + ".relu2");
    cur.conv(name + ".conv3", width * 4, 1, 1);
    cur.simple(ArchLayer::Kind::BatchNorm, name + ".bn3");
    if (project) {
        cur.conv_at(name + ".downsample.conv", c_in, h_in, w_in, width * 4, 1, stride);
        ArchLayer bn;
        bn.kind = ArchLayer::Kind::BatchNorm;
        bn.name = name + ".downsample.bn";
        bn.c_in = width * 4;
        bn.c_out = width * 4;
        bn.h_out = cur.h;
        bn.w_out = cur.w;
        cur.desc.layers.push_back(bn);
    }
    cur.simple(ArchLayer::Kind::Add, name + ".add");
    cur.simple(ArchLayer::Kind::Relu, name + ".relu3");
}

ArchDescriptor resnet_descriptor(const std::string& name, Dims input,
                                 const std::vector<std::int64_t>& blocks) {
    Cursor cur(name, input);
    cur.conv("conv1", 64, 7, 2, 1, false, 3);
    cur.simple(ArchLayer::Kind::BatchNorm, "bn1");
    cur.simple(ArchLayer::Kind::Relu, "relu1");
    cur.maxpool("maxpool", 3, 2, 1);
    const std::int64_t widths[4] = {64, 128, 256, 512};
    for (int st = 0; st < 4; ++st) {
        const std::int64_t stride = st == 0 ? 1 : 2;
        for (std::int64_t b = 0; b < blocks[static_cast<std::size_t>(st)]; ++b) {
            const std::string bname = "layer" + std::to_string(st + 1) + "." + std::to_string(b);
            append_bottleneck(cur, bname, widths[st], b == 0 ? stride : 1, b == 0);
        }
    }
    return cur.desc;
}

} // namespace

std::int64_t layer_params(const ArchLayer& l) {
    switch (l.kind) {
        case ArchLayer::Kind::Conv:
            return l.c_out * (l.c_in / l.groups) * l.k * l.k + (l.bias ? l.c_out : 0);
        case ArchLayer::Kind::BatchNorm: return 2 * l.c_out;
        case ArchLayer::Kind::Prelu: return l.c_out;
        default: return 0;
    }
}

std::int64_t layer_macs(const ArchLayer& l) {
    if (l.kind != ArchLayer::Kind::Conv) return 0;
    return l.c_out * (l.c_in / l.groups) * l.k * l.k * l.h_out * l.w_out;
}

ComplexityReport analyze(const ArchDescriptor& desc) {
    ComplexityReport rep;
    rep.arch = desc.name;
    for (const ArchLayer& l : desc.layers) {
        LayerCount lc;
        lc.name = l.name;
        lc.kind = kind_str(l.kind);
        lc.params = layer_params(l);
        lc.macs = layer_macs(l);
        rep.total_params += lc.params;
        rep.total_macs += lc.macs;
        rep.layers.push_back(std::move(lc));
    }
    return rep;
}

ArchDescriptor head_descriptor(const FlatteningModuleSpec& spec, std::int64_t c_in, Dims input,
                               const std::string& name) {
    if (input.c != c_in) throw std::invalid_argument("head descriptor: input channel mismatch");
    spec.validate(c_in);
    Cursor cur(name, input);
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const DwsgConvSpec& l = spec.layers[i];
        const std::string p = "l" + std::to_string(i);
        const std::int64_t c = cur.c;
        cur.conv(p + ".dw", c, l.k, l.s, c);
        cur.simple(ArchLayer::Kind::BatchNorm, p + ".dw_bn");
        cur.conv(p + ".fpg", c, 1, 1, l.g1);
        cur.simple(ArchLayer::Kind::BatchNorm, p + ".fpg_bn");
        cur.simple(l.prelu ? ArchLayer::Kind::Prelu : ArchLayer::Kind::Relu, p + ".act");
        cur.simple(ArchLayer::Kind::ChannelShuffle, p + ".shuffle");
        cur.conv(p + ".spg", l.out_channels(c), 1, 1, l.g3);
        cur.simple(ArchLayer::Kind::BatchNorm, p + ".spg_bn");
        cur.simple(ArchLayer::Kind::Relu, p + ".out_act");
    }
    if (spec.rearrange != RearrangeMode::PsOnly)
        cur.simple(ArchLayer::Kind::ChannelShuffle, "r.shuffle");
    cur.pixel_shuffle("r.pixel_shuffle", spec.s2);
    return cur.desc;
}

ArchDescriptor predictor_descriptor(const PredictorSpec& spec, Dims input) {
    spec.validate();
    if (input.c != spec.c_tilde)
        throw std::invalid_argument("predictor descriptor: input channel mismatch");
    Cursor cur("predictor", input);
    cur.conv("predictor", spec.classes, 1, 1, 1, true);
    return cur.desc;
}

ArchDescriptor toy_backbone_descriptor(const ToyBackboneSpec& spec, Dims input) {
    spec.validate();
    if (input.c != spec.c_in)
        throw std::invalid_argument("toy descriptor: input channel mismatch");
    Cursor cur("toy", input);
    for (std::size_t i = 0; i < spec.widths.size(); ++i) {
        const std::string p = "s" + std::to_string(i);
        cur.conv(p + ".conv", spec.widths[i], spec.k, 2);
        cur.simple(ArchLayer::Kind::BatchNorm, p + ".bn");
        cur.simple(ArchLayer::Kind::Relu, p + ".act");
    }
    return cur.desc;
}

ArchDescriptor resnet50_descriptor(Dims input) {
    return resnet_descriptor("resnet50", input, {3, 4, 6, 3});
}

ArchDescriptor resnet101_descriptor(Dims input) {
    return resnet_descriptor("resnet101", input, {3, 4, 23, 3});
}

ArchDescriptor chain_descriptors(const std::string& name,
                                 const std::vector<ArchDescriptor>& parts) {
    if (parts.empty()) throw std::invalid_argument("chain: no parts");
    ArchDescriptor out;
    out.name = name;
    out.input = parts.front().input;
    Dims cursor = out.input;
    for (const ArchDescriptor& part : parts) {
        if (!(part.input == cursor))
            throw std::invalid_argument("chain: " + part.name + " expects input " +
                                        part.input.str() + " but gets " + cursor.str());
        for (const ArchLayer& l : part.layers) {
            out.layers.push_back(l);
            out.layers.back().name = part.name + "." + l.name;
        }
        if (!part.layers.empty()) {
            const ArchLayer& last = part.layers.back();
            cursor = Dims{1, last.c_out, last.h_out, last.w_out};
        }
    }
    return out;
}

std::string report_text(const ComplexityReport& rep, bool per_layer) {
    std::ostringstream os;
    os << "arch: " << rep.arch << "\n";
    if (per_layer) {
        os << "  " << std::string(34, '-') << "\n";
        for (const LayerCount& l : rep.layers) {
            char line[160];
            std::snprintf(line, sizeof line, "  %-32s %-16s %12lld %16lld\n", l.name.c_str(),
                          l.kind.c_str(), static_cast<long long>(l.params),
                          static_cast<long long>(l.macs));
            os << line;
        }
    }
    char tot[160];
    std::snprintf(tot, sizeof tot, "  total params %lld (%.2fM)  macs %lld (%.3fG)\n",
                  static_cast<long long>(rep.total_params), rep.total_params / 1e6,
                  static_cast<long long>(rep.total_macs), rep.total_macs / 1e9);
    os << tot;
    os << "  convention: " << rep.convention << "\n";
    return os.str();
}

std::string report_json(const ComplexityReport& rep) {
    nlohmann::json j;
    j["arch"] = rep.arch;
    j["convention"] = rep.convention;
    j["total_params"] = rep.total_params;
    j["total_macs"] = rep.total_macs;
    j["layers"] = nlohmann::json::array();
    for (const LayerCount& l : rep.layers)
        j["layers"].push_back({{"name", l.name}, {"kind", l.kind}, {"params", l.params}, {"macs", l.macs}});
    return j.dump(2);
}

} // namespace flattenet
