#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "flattenet/activation.hpp"
#include "flattenet/batchnorm.hpp"
#include "flattenet/conv.hpp"
#include "flattenet/param.hpp"
#include "flattenet/shuffle.hpp"
#include "flattenet/tensor.hpp"

namespace flattenet {

// Differentiation contract: forward(x, train) caches whatever backward needs; backward(dy)
// returns dx and accumulates (+=) into each Param's grad slot. backward without a prior forward
// is a logic error.
template <typename T>
class Layer {
  public:
    virtual ~Layer() = default;
    virtual std::string name() const = 0;
    virtual Tensor<T> forward(const Tensor<T>& x, bool train) = 0;
    virtual Tensor<T> backward(const Tensor<T>& dy) = 0;
    virtual std::vector<Param<T>*> params() { return {}; }
};

template <typename T>
class Conv2dLayer : public Layer<T> {
  public:
    Conv2dLayer(ConvSpec spec, std::string name, Rng& rng) : spec_(spec), name_(std::move(name)) {
        spec_.validate();
        // He-uniform over fan-in
        const T bound = static_cast<T>(
            std::sqrt(6.0 / static_cast<double>((spec_.c_in / spec_.groups) * spec_.k * spec_.k)));
        w_ = Param<T>(name_ + ".w", Tensor<T>::uniform(spec_.weight_dims(), bound, rng));
        if (spec_.bias) b_ = Param<T>(name_ + ".b", Tensor<T>::zeros({spec_.c_out, 1, 1, 1}));
    }

    std::string name() const override { return name_; }

    Tensor<T> forward(const Tensor<T>& x, bool) override {
        x_ = x;
        has_cache_ = true;
        return conv2d_forward(x, spec_, w_.value, spec_.bias ? &b_.value : nullptr);
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        if (!has_cache_) throw std::logic_error(name_ + ": backward before forward");
        ConvGrads<T> g = conv2d_backward(x_, spec_, w_.value, dy, spec_.bias);
        accumulate(w_.grad, g.dw);
        if (spec_.bias) accumulate(b_.grad, g.db);
        return std::move(g.dx);
    }

    std::vector<Param<T>*> params() override {
        std::vector<Param<T>*> ps{&w_};
        if (spec_.bias) ps.push_back(&b_);
        return ps;
    }

    const ConvSpec& spec() const { return spec_; }
    Param<T>& weight() { return w_; }

  private:
    static void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
        for (std::int64_t i = 0; i < dst.numel(); ++i) dst[i] += src[i];
    }

    ConvSpec spec_;
    std::string name_;
    Param<T> w_;
    Param<T> b_;
    Tensor<T> x_;
    bool has_cache_ = false;
};

template <typename T>
class BatchNormLayer : public Layer<T> {
  public:
    BatchNormLayer(std::int64_t channels, std::string name, T eps = T(1e-5), T momentum = T(0.1))
        : c_(channels),
          name_(std::move(name)),
          eps_(eps),
          momentum_(momentum),
          gamma_(name_ + ".gamma", Tensor<T>::ones({channels, 1, 1, 1})),
          beta_(name_ + ".beta", Tensor<T>::zeros({channels, 1, 1, 1})),
          running_mean_(static_cast<std::size_t>(channels), T(0)),
          running_var_(static_cast<std::size_t>(channels), T(1)) {}

    std::string name() const override { return name_; }

    Tensor<T> forward(const Tensor<T>& x, bool train) override {
        if (x.dims().c != c_)
            throw std::invalid_argument(name_ + ": expected " + std::to_string(c_) + " channels, got " +
                                        std::to_string(x.dims().c));
        x_ = x;
        trained_ = train;
        has_cache_ = true;
        if (train) {
            stats_ = bn_batch_stats(x);
            // running var keeps the unbiased estimate, normalization divides by the biased one
            const double m = static_cast<double>(x.dims().n * x.dims().h * x.dims().w);
            const T corr = static_cast<T>(m / (m - 1.0));
            for (std::size_t c = 0; c < running_mean_.size(); ++c) {
                running_mean_[c] = (T(1) - momentum_) * running_mean_[c] + momentum_ * stats_.mean[c];
                running_var_[c] = (T(1) - momentum_) * running_var_[c] + momentum_ * corr * stats_.var[c];
            }
            return bn_apply(x, stats_.mean, stats_.var, gamma_.value, beta_.value, eps_);
        }
        return bn_apply(x, running_mean_, running_var_, gamma_.value, beta_.value, eps_);
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        if (!has_cache_) throw std::logic_error(name_ + ": backward before forward");
        BnGrads<T> g = trained_
                           ? bn_backward_train(x_, gamma_.value, stats_, dy, eps_)
                           : bn_backward_eval(x_, gamma_.value, running_mean_, running_var_, dy, eps_);
        for (std::int64_t c = 0; c < c_; ++c) {
            gamma_.grad[c] += g.dgamma[c];
            beta_.grad[c] += g.dbeta[c];
        }
        return std::move(g.dx);
    }

    std::vector<Param<T>*> params() override { return {&gamma_, &beta_}; }

    std::vector<T>& running_mean() { return running_mean_; }
    std::vector<T>& running_var() { return running_var_; }

  private:
    std::int64_t c_;
    std::string name_;
    T eps_;
    T momentum_;
    Param<T> gamma_;
    Param<T> beta_;
    std::vector<T> running_mean_;
    std::vector<T> running_var_;
    Tensor<T> x_;
    BnStats<T> stats_;
    bool trained_ = false;
    bool has_cache_ = false;
};

template <typename T>
class ReluLayer : public Layer<T> {
  public:
    explicit ReluLayer(std::string name) : name_(std::move(name)) {}
    std::string name() const override { return name_; }

    Tensor<T> forward(const Tensor<T>& x, bool) override {
        x_ = x;
        has_cache_ = true;
        return relu_forward(x);
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        if (!has_cache_) throw std::logic_error(name_ + ": backward before forward");
        return relu_backward(x_, dy);
    }

  private:
    std::string name_;
    Tensor<T> x_;
    bool has_cache_ = false;
};

template <typename T>
class PreluLayer : public Layer<T> {
  public:
    // channel-wise slope, initialized to 1 so the layer starts as the identity
    PreluLayer(std::int64_t channels, std::string name, T init = T(1))
        : name_(std::move(name)), a_(name_ + ".a", Tensor<T>::full({channels, 1, 1, 1}, init)) {}

    std::string name() const override { return name_; }

    Tensor<T> forward(const Tensor<T>& x, bool) override {
        x_ = x;
        has_cache_ = true;
        return prelu_forward(x, a_.value);
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        if (!has_cache_) throw std::logic_error(name_ + ": backward before forward");
        PreluGrads<T> g = prelu_backward(x_, a_.value, dy);
        for (std::int64_t c = 0; c < a_.value.numel(); ++c) a_.grad[c] += g.dslope[c];
        return std::move(g.dx);
    }

    std::vector<Param<T>*> params() override { return {&a_}; }

  private:
    std::string name_;
    Param<T> a_;
    Tensor<T> x_;
    bool has_cache_ = false;
};

template <typename T>
class ChannelShuffleLayer : public Layer<T> {
  public:
    ChannelShuffleLayer(std::int64_t groups, std::string name)
        : g_(groups), name_(std::move(name)) {}

    std::string name() const override { return name_; }
    Tensor<T> forward(const Tensor<T>& x, bool) override { return channel_shuffle(x, g_); }

    // permutation Jacobian: transpose = inverse shuffle, i.e. shuffle with c/g groups
    Tensor<T> backward(const Tensor<T>& dy) override {
        return channel_shuffle(dy, dy.dims().c / g_);
    }

  private:
    std::int64_t g_;
    std::string name_;
};

template <typename T>
class RearrangeLayer : public Layer<T> {
  public:
    RearrangeLayer(RearrangeSpec spec, std::string name) : spec_(spec), name_(std::move(name)) {
        spec_.validate();
    }

    std::string name() const override { return name_; }
    const RearrangeSpec& spec() const { return spec_; }

    Tensor<T> forward(const Tensor<T>& x, bool) override { return rearrange_R(x, spec_); }
    Tensor<T> backward(const Tensor<T>& dy) override { return rearrange_R_inv(dy, spec_); }

  private:
    RearrangeSpec spec_;
    std::string name_;
};

template <typename T>
class Sequential : public Layer<T> {
  public:
    explicit Sequential(std::string name = "seq") : name_(std::move(name)) {}

    std::string name() const override { return name_; }

    Sequential& add(std::unique_ptr<Layer<T>> layer) {
        layers_.push_back(std::move(layer));
        return *this;
    }

    Tensor<T> forward(const Tensor<T>& x, bool train) override {
        Tensor<T> y = x;
        for (auto& l : layers_) y = l->forward(y, train);
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        Tensor<T> g = dy;
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
        return g;
    }

    std::vector<Param<T>*> params() override {
        std::vector<Param<T>*> ps;
        for (auto& l : layers_) {
            auto sub = l->params();
            ps.insert(ps.end(), sub.begin(), sub.end());
        }
        return ps;
    }

    std::size_t size() const { return layers_.size(); }
    Layer<T>& at(std::size_t i) { return *layers_.at(i); }

  private:
    std::string name_;
    std::vector<std::unique_ptr<Layer<T>>> layers_;
};

template <typename T>
void zero_grads(const std::vector<Param<T>*>& params) {
    for (Param<T>* p : params) p->zero_grad();
}

} // namespace flattenet
