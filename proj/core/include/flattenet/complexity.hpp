#pragma once

#include <string>
#include <vector>

#include "flattenet/backbone.hpp"
#include "flattenet/flatten_head.hpp"
#include "flattenet/predictor.hpp"
#include "flattenet/tensor.hpp"

namespace flattenet {

// One symbolic layer of an architecture descriptor. Builders fill in the full geometry (channel
// counts and output spatial size), so analysis is pure per-layer arithmetic and branching
// topologies (residual projections) need no graph walk.
struct ArchLayer {
    enum class Kind { Conv, BatchNorm, Prelu, Relu, ChannelShuffle, PixelShuffle, MaxPool, Add, Bilinear };

    Kind kind = Kind::Conv;
    std::string name;
    std::int64_t c_in = 0;
    std::int64_t c_out = 0;
    std::int64_t k = 1;
    std::int64_t stride = 1;
    std::int64_t groups = 1;
    bool bias = false;
    std::int64_t h_out = 0;
    std::int64_t w_out = 0;
};

struct ArchDescriptor {
    std::string name;
    Dims input; // (1, c, h, w)
    std::vector<ArchLayer> layers;
};

struct LayerCount {
    std::string name;
    std::string kind;
    std::int64_t params = 0;
    std::int64_t macs = 0;
};

// Convention: params = conv weights (bias only where declared) + BN affine pairs + channel-wise
// PReLU slopes; running statistics excluded. MACs = convolution multiply-adds only; BN,
// activations, shuffles, pooling and interpolation count zero.
struct ComplexityReport {
    std::string arch;
    std::string convention =
        "params: conv weights + BN affine + PReLU slopes; MACs: conv multiply-adds only";
    std::vector<LayerCount> layers;
    std::int64_t total_params = 0;
    std::int64_t total_macs = 0;
};

std::int64_t layer_params(const ArchLayer& l);
std::int64_t layer_macs(const ArchLayer& l);

ComplexityReport analyze(const ArchDescriptor& desc);

// descriptor builders; geometry is propagated and validated while building
ArchDescriptor head_descriptor(const FlatteningModuleSpec& spec, std::int64_t c_in, Dims input,
                               const std::string& name = "flatten-head");
ArchDescriptor predictor_descriptor(const PredictorSpec& spec, Dims input);
ArchDescriptor toy_backbone_descriptor(const ToyBackboneSpec& spec, Dims input);
ArchDescriptor resnet50_descriptor(Dims input);
ArchDescriptor resnet101_descriptor(Dims input);

// concatenates parts, checking that geometry lines up at the seams
ArchDescriptor chain_descriptors(const std::string& name, const std::vector<ArchDescriptor>& parts);

std::string report_text(const ComplexityReport& rep, bool per_layer = true);
std::string report_json(const ComplexityReport& rep);

} // namespace flattenet
