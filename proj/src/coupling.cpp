#include "aircast/coupling.hpp"

#include "aircast/error.hpp"

#include <cmath>

namespace aircast {

namespace {

nn::Parameter& conv_weight(nn::ParamStore& store, const std::string& name, std::size_t co, std::size_t ci,
                           std::size_t k, std::mt19937_64& rng)
{
    const double fan_in = static_cast<double>(ci * k * k);
    return store.create(name, nn::normal_tensor({co, ci, k, k}, std::sqrt(2.0 / fan_in), rng));
}

} // namespace

CouplingWeights CouplingWeights::create(nn::ParamStore& store, const std::string& prefix, std::size_t in_channels,
                                        std::size_t width, std::size_t depth, std::size_t d_model,
                                        std::size_t hidden, std::mt19937_64& rng)
{
    if (depth == 0 || width < 2) {
        throw ValidationError("grid encoder needs depth >= 1 and width >= 2");
    }
    CouplingWeights w;
    std::size_t in = in_channels;
    for (std::size_t i = 0; i < depth; ++i) {
        const std::string p = prefix + ".block" + std::to_string(i);
        ResidualBlock b;
        b.conv1_w = &conv_weight(store, p + ".conv1.w", width, in, 3, rng);
        b.conv1_b = &store.create(p + ".conv1.b", Tensor({width}, 0.0));
        b.norm1 = LayerNormParams::create(store, p + ".norm1", width);
        b.conv2_w = &conv_weight(store, p + ".conv2.w", width, width, 3, rng);
        b.conv2_b = &store.create(p + ".conv2.b", Tensor({width}, 0.0));
        b.norm2 = LayerNormParams::create(store, p + ".norm2", width);
        if (in != width) {
            b.proj_w = &conv_weight(store, p + ".proj.w", width, in, 1, rng);
        }
        w.blocks.push_back(b);
        in = width;
    }
    const double s = 1.0 / std::sqrt(static_cast<double>(width));
    w.out_w = &store.create(prefix + ".out.w", nn::normal_tensor({width, d_model}, s, rng));
    w.out_b = &store.create(prefix + ".out.b", Tensor({d_model}, 0.0));
    const double sd = 1.0 / std::sqrt(static_cast<double>(d_model));
    w.w_q = &store.create(prefix + ".w_q", nn::normal_tensor({d_model, d_model}, sd, rng));
    w.w_k = &store.create(prefix + ".w_k", nn::normal_tensor({d_model, d_model}, sd, rng));
    w.w_v = &store.create(prefix + ".w_v", nn::normal_tensor({d_model, d_model}, sd, rng));
    w.norm = LayerNormParams::create(store, prefix + ".norm", d_model);
    w.mlp = Mlp::create(store, prefix + ".mlp", d_model, hidden, d_model, rng);
    return w;
}

nn::Var channel_norm(nn::Graph& g, nn::Var x, const LayerNormParams& ln)
{
    const Shape shape = x.shape();
    const std::size_t c = shape[0];
    const std::size_t cells = shape[1] * shape[2];
    const nn::Var rows = nn::transpose(nn::reshape(x, {c, cells}));
    const nn::Var normed = apply_layer_norm(g, rows, ln);
    return nn::reshape(nn::transpose(normed), shape);
}

nn::Var residual_block(nn::Graph& g, nn::Var x, const ResidualBlock& b)
{
    nn::Var h = nn::conv2d(x, g.parameter(*b.conv1_w), g.parameter(*b.conv1_b), 1, 1);
    h = nn::relu(channel_norm(g, h, b.norm1));
    h = nn::conv2d(h, g.parameter(*b.conv2_w), g.parameter(*b.conv2_b), 1, 1);
    h = channel_norm(g, h, b.norm2);
    const nn::Var skip = b.proj_w != nullptr ? nn::conv2d(x, g.parameter(*b.proj_w), std::nullopt, 1, 0) : x;
    return nn::relu(nn::add(h, skip));
}

GridLatent grid_encode(nn::Graph& g, nn::Var grid_input, const CouplingWeights& w)
{
    const Tensor& in = grid_input.value();
    if (in.rank() != 3) {
        throw ShapeError("grid input must be [C x H x W], got " + shape_string(in.shape()));
    }
    const std::size_t expected = w.blocks.front().conv1_w->value.dim(1);
    if (in.dim(0) != expected) {
        throw ShapeError("grid input has " + std::to_string(in.dim(0)) + " channels, encoder expects "
                         + std::to_string(expected));
    }
    nn::Var h = grid_input;
    for (const auto& b : w.blocks) {
        h = residual_block(g, h, b);
    }
    const std::size_t width = h.value().dim(0);
    const std::size_t cells = in.dim(1) * in.dim(2);
    const nn::Var rows = nn::transpose(nn::reshape(h, {width, cells}));
    return {linear(g, rows, *w.out_w, w.out_b), in.dim(1), in.dim(2)};
}

CouplingResult cross_attention_coupling(nn::Graph& g, nn::Var site_latent, const GridLatent& grid,
                                        const CouplingWeights& w)
{
    const std::size_t d = w.w_q->value.dim(0);
    if (site_latent.value().rank() != 2 || site_latent.value().dim(1) != d || grid.h_em.value().dim(1) != d) {
        throw ShapeError("cross-attention: site " + shape_string(site_latent.shape()) + ", grid "
                         + shape_string(grid.h_em.shape()));
    }
    const nn::Var q = linear(g, site_latent, *w.w_q);
    const nn::Var k = linear(g, grid.h_em, *w.w_k);
    const nn::Var v = linear(g, grid.h_em, *w.w_v);
    const nn::Var a = attention_weights(q, k);
    const nn::Var h = nn::matmul(a, v);
    const nn::Var out = apply_mlp(g, apply_layer_norm(g, nn::add(q, h), w.norm), w.mlp);
    return {out, a, q, h};
}

} // namespace aircast
