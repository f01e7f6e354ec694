#pragma once

#include "aircast/autodiff.hpp"

#include <random>
#include <string>

namespace aircast {

/// Two-layer perceptron with a ReLU in between.
struct Mlp {
    nn::Parameter* w1 = nullptr; ///< [in x hidden]
    nn::Parameter* b1 = nullptr;
    nn::Parameter* w2 = nullptr; ///< [hidden x out]
    nn::Parameter* b2 = nullptr;

    static Mlp create(nn::ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden,
                      std::size_t out, std::mt19937_64& rng);
};

nn::Var apply_mlp(nn::Graph& g, nn::Var x, const Mlp& mlp);

struct LayerNormParams {
    nn::Parameter* gain = nullptr;
    nn::Parameter* bias = nullptr;

    static LayerNormParams create(nn::ParamStore& store, const std::string& prefix, std::size_t width);
};

nn::Var apply_layer_norm(nn::Graph& g, nn::Var x, const LayerNormParams& ln);

/// x[rows x in] * w[in x out] (+ b).
nn::Var linear(nn::Graph& g, nn::Var x, nn::Parameter& w, nn::Parameter* b = nullptr);

/// Scaled dot-product attention weights softmax(q k^T / sqrt(d)), rows = queries.
nn::Var attention_weights(nn::Var q, nn::Var k);

} // namespace aircast
