#pragma once

#include "aircast/layers.hpp"

#include <utility>
#include <vector>

namespace aircast {

/// conv3x3 -> channel norm -> ReLU -> conv3x3 -> channel norm, plus a skip
/// (1x1 projection when the width changes), then ReLU.
struct ResidualBlock {
    nn::Parameter* conv1_w = nullptr;
    nn::Parameter* conv1_b = nullptr;
    LayerNormParams norm1;
    nn::Parameter* conv2_w = nullptr;
    nn::Parameter* conv2_b = nullptr;
    LayerNormParams norm2;
    nn::Parameter* proj_w = nullptr; ///< null when in == out
};

struct CouplingWeights {
    std::vector<ResidualBlock> blocks;
    nn::Parameter* out_w = nullptr; ///< [width x d_model]
    nn::Parameter* out_b = nullptr;
    nn::Parameter* w_q = nullptr;   ///< [d_model x d_model]
    nn::Parameter* w_k = nullptr;
    nn::Parameter* w_v = nullptr;
    LayerNormParams norm;
    Mlp mlp;

    static CouplingWeights create(nn::ParamStore& store, const std::string& prefix, std::size_t in_channels,
                                  std::size_t width, std::size_t depth, std::size_t d_model, std::size_t hidden,
                                  std::mt19937_64& rng);
};

/// Grid latents, one row per cell in row-major (lat, lon) order.
struct GridLatent {
    nn::Var h_em; ///< [N_grids x d_model]
    std::size_t n_lat = 0;
    std::size_t n_lon = 0;

    std::pair<std::size_t, std::size_t> cell_of(std::size_t row) const { return {row / n_lon, row % n_lon}; }
};

/// Layer normalisation across channels at every cell of x[C x H x W].
nn::Var channel_norm(nn::Graph& g, nn::Var x, const LayerNormParams& ln);
nn::Var residual_block(nn::Graph& g, nn::Var x, const ResidualBlock& b);
/// Encodes the stacked grid input [C_met + C_ems + 2 x H x W].
GridLatent grid_encode(nn::Graph& g, nn::Var grid_input, const CouplingWeights& w);

struct CouplingResult {
    nn::Var output;    ///< H_coupled [N_s x d_model]
    nn::Var attention; ///< A_MEA [N_s x N_grids]
    nn::Var query;     ///< Q
    nn::Var attended;  ///< H_MEA = A V
};

/// Sites attend over grid cells; output = MLP(LayerNorm(Q + A V)).
CouplingResult cross_attention_coupling(nn::Graph& g, nn::Var site_latent, const GridLatent& grid,
                                        const CouplingWeights& w);

} // namespace aircast
