#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "floodsr/grid.hpp"
#include "floodsr/tensor.hpp"

namespace floodsr {

/// Shape of the residual dense downscaling network.
struct NetConfig {
    int features = 12;        // G0
    int blocks = 8;           // D
    int layers = 8;           // C, convolutions per dense block
    int growth = 12;          // G
    int kernel = 3;
    bool attention = false;
    int reduction = 16;       // channel-attention bottleneck ratio
    std::vector<int> upsample{2, 5};

    friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

/// Throws InvalidConfig / ChannelIndivisible when the shape is inconsistent.
void validate(const NetConfig& config, ScaleFactor scale = ScaleFactor{});
int upsample_product(const NetConfig& config);

template <typename T>
struct ParamTensor {
    std::string name;
    std::vector<int> shape;
    std::vector<T> values;
};

template <typename T>
struct BasicNetParams {
    NetConfig config;
    std::uint64_t init_seed = 0;
    std::uint64_t train_seed = 0;
    std::vector<ParamTensor<T>> tensors;

    std::size_t count() const noexcept {
        std::size_t n = 0;
        for (const auto& t : tensors) n += t.values.size();
        return n;
    }
    const ParamTensor<T>* find(const std::string& name) const noexcept {
        for (const auto& t : tensors) {
            if (t.name == name) return &t;
        }
        return nullptr;
    }
    ParamTensor<T>* find(const std::string& name) noexcept {
        for (auto& t : tensors) {
            if (t.name == name) return &t;
        }
        return nullptr;
    }
};

using NetParams = BasicNetParams<float>;

/// Per-tensor gradient buffers aligned with BasicNetParams::tensors.
template <typename T>
using GradSet = std::vector<std::vector<T>>;

template <typename T>
GradSet<T> zero_grads(const BasicNetParams<T>& params);

/// He-normal weights (variance 2 / fan_in), zero biases.
NetParams init_params(const NetConfig& config, std::uint64_t seed);

template <typename To, typename From>
BasicNetParams<To> convert_params(const BasicNetParams<From>& params) {
    BasicNetParams<To> out;
    out.config = params.config;
    out.init_seed = params.init_seed;
    out.train_seed = params.train_seed;
    for (const auto& t : params.tensors) {
        out.tensors.push_back({t.name, t.shape, std::vector<To>(t.values.begin(), t.values.end())});
    }
    return out;
}

/// Total learnable scalars implied by a config, without allocating.
std::size_t parameter_count(const NetConfig& config);

/// output(c, r*y+dy, r*x+dx) = input(c*r*r + dy*r + dx, y, x)
template <typename T>
Tensor<T> subpixel_rearrange(const Tensor<T>& in, int r);
/// Adjoint of subpixel_rearrange (also its inverse).
template <typename T>
Tensor<T> subpixel_gather(const Tensor<T>& out, int r);

template <typename T>
struct AttentionWeights {
    std::span<const T> down_w;  // (C/r) x C
    std::span<const T> down_b;  // C/r
    std::span<const T> up_w;    // C x (C/r)
    std::span<const T> up_b;    // C
};

template <typename T>
struct AttentionCache {
    std::vector<T> pooled;  // C
    std::vector<T> hidden;  // C/r, after rectifier
    std::vector<T> gate;    // C, after logistic
};

/// Squeeze (global average pool), bottleneck with rectifier, logistic gate,
/// channel-wise rescale.
template <typename T>
Tensor<T> channel_attention(const Tensor<T>& in, int reduction, const AttentionWeights<T>& weights,
                            AttentionCache<T>* cache = nullptr);

/// Every intermediate activation the backward pass needs.
template <typename T>
struct ForwardTrace {
    Tensor<T> input;
    Tensor<T> shallow1;
    Tensor<T> shallow2;
    std::vector<Tensor<T>> block_cat;   // block input followed by each layer's rectified output
    std::vector<Tensor<T>> block_sum;   // block input + local fusion
    std::vector<AttentionCache<T>> attention;
    Tensor<T> global_cat;               // outputs of all blocks
    Tensor<T> fused1;
    Tensor<T> features;                 // global fusion + shallow skip
    std::vector<Tensor<T>> up_in;       // input of each upsampling convolution
    Tensor<T> tail_in;
    Tensor<T> tail1;                    // rectified
    Tensor<T> residual;                 // bilinear upsampling of the input
    Tensor<T> logits;
    Tensor<T> prob;
};

/// WFM (L x L, values in [0, 1]) -> pixel-on probabilities (fL x fL).
template <typename T>
void forward(const FractionGrid& wfm, const BasicNetParams<T>& params, ForwardTrace<T>& trace);

FractionGrid forward(const FractionGrid& wfm, const NetParams& params);

/// Accumulates dLoss/dParam into grads given dLoss/dProb (same shape as
/// trace.prob).
template <typename T>
void backward(const ForwardTrace<T>& trace, const BasicNetParams<T>& params, std::span<const T> dprob,
              GradSet<T>& grads);

}  // namespace floodsr
