#pragma once

#include <functional>
#include <string>
#include <vector>

#include "flattenet/layer.hpp"

namespace flattenet {

struct GradCheckReport {
    std::string op;
    double max_rel_err = 0.0;
    double eps = 0.0;
    double tol = 0.0;
    std::int64_t coords = 0; // probed coordinates across input and params
    bool pass = false;
};

// Central finite-difference check of a layer's backward pass, f64 only (f32 differences drown in
// rounding at these tolerances). The scalar objective is a fixed random projection of the output;
// numeric derivatives subtract the two perturbed output tensors elementwise before projecting, so
// untouched coordinates cancel exactly. Probes every coordinate of the input and of each param,
// capped at max_coords per tensor (0 = no cap) via a deterministic stride.
// eps must stay within [1e-6, 1e-3].
GradCheckReport grad_check_layer(const std::string& op_name, Layer<double>& layer,
                                 Tensor<double>& x, std::uint64_t seed, double eps = 1e-5,
                                 double tol = 1e-4, bool train_mode = true,
                                 std::int64_t max_coords = 0);

// paramless op adapter so pure functions fit the layer contract
class FnLayer : public Layer<double> {
  public:
    using Fwd = std::function<Tensor<double>(const Tensor<double>&)>;
    using Vjp = std::function<Tensor<double>(const Tensor<double>&, const Tensor<double>&)>;

    FnLayer(std::string name, Fwd fwd, Vjp vjp)
        : name_(std::move(name)), fwd_(std::move(fwd)), vjp_(std::move(vjp)) {}

    std::string name() const override { return name_; }

    Tensor<double> forward(const Tensor<double>& x, bool) override {
        x_ = x;
        return fwd_(x);
    }

    Tensor<double> backward(const Tensor<double>& dy) override { return vjp_(x_, dy); }

  private:
    std::string name_;
    Fwd fwd_;
    Vjp vjp_;
    Tensor<double> x_;
};

struct GradCheckCase {
    std::string name;
    std::function<GradCheckReport()> run;
};

// every differentiable op in the library, each on a seeded shape
std::vector<GradCheckCase> standard_gradcheck_cases();

} // namespace flattenet
