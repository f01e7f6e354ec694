#include "aircast/site_interaction.hpp"

#include "aircast/error.hpp"

#include <cmath>
#include <numbers>

namespace aircast {

TemporalEmbedding TemporalEmbedding::create(nn::ParamStore& store, const std::string& prefix, std::size_t temb_dim,
                                            std::mt19937_64& rng)
{
    if (temb_dim < 2 || temb_dim % 2 != 0) {
        throw ValidationError("temporal embedding width must be a positive even number");
    }
    TemporalEmbedding e;
    // Day-of-year rows start as annual harmonics so unseen days sit between their neighbours.
    const std::size_t half = temb_dim / 2;
    Tensor doy({366, half});
    for (std::size_t r = 0; r < 366; ++r) {
        for (std::size_t k = 0; k < half; ++k) {
            const double phase = 2.0 * std::numbers::pi * static_cast<double>(k / 2 + 1) * static_cast<double>(r) / 365.25;
            doy.at(r, k) = k % 2 == 0 ? std::sin(phase) : std::cos(phase);
        }
    }
    e.doy_table = &store.create(prefix + ".doy", std::move(doy));
    e.hod_table = &store.create(prefix + ".hod", nn::normal_tensor({24, temb_dim / 2}, 0.1, rng));
    return e;
}

nn::Var temporal_embed(nn::Graph& g, TimeCode tc, const TemporalEmbedding& emb)
{
    if (tc.doy < 1 || tc.doy > 366 || tc.hod < 0 || tc.hod > 23) {
        throw OutOfBoundsError("time code (doy=" + std::to_string(tc.doy) + ", hod=" + std::to_string(tc.hod)
                               + ") outside embedding tables");
    }
    const nn::Var parts[] = {nn::embedding_row(g.parameter(*emb.doy_table), static_cast<std::size_t>(tc.doy - 1)),
                             nn::embedding_row(g.parameter(*emb.hod_table), static_cast<std::size_t>(tc.hod))};
    return nn::concat_cols(parts);
}

nn::Var assemble_site_input(nn::Var x_prev, nn::Var x_curr, nn::Var pe, nn::Var t_emb)
{
    const std::size_t n = x_prev.value().dim(0);
    if (x_curr.value().shape() != x_prev.value().shape() || pe.value().dim(0) != n || pe.value().dim(1) != 4) {
        throw ShapeError("site input: x_prev " + shape_string(x_prev.shape()) + ", x_curr "
                         + shape_string(x_curr.shape()) + ", pe " + shape_string(pe.shape()));
    }
    const nn::Var parts[] = {x_prev, x_curr, pe, nn::broadcast_rows(t_emb, n)};
    return nn::concat_cols(parts);
}

SiteAttentionWeights SiteAttentionWeights::create(nn::ParamStore& store, const std::string& prefix,
                                                  std::size_t in_features, std::size_t d_model, std::size_t hidden,
                                                  std::mt19937_64& rng)
{
    const double s = 1.0 / std::sqrt(static_cast<double>(in_features));
    SiteAttentionWeights w;
    w.w_q = &store.create(prefix + ".w_q", nn::normal_tensor({in_features, d_model}, s, rng));
    w.w_k = &store.create(prefix + ".w_k", nn::normal_tensor({in_features, d_model}, s, rng));
    w.w_v = &store.create(prefix + ".w_v", nn::normal_tensor({in_features, d_model}, s, rng));
    w.norm = LayerNormParams::create(store, prefix + ".norm", d_model);
    w.mlp = Mlp::create(store, prefix + ".mlp", d_model, hidden, d_model, rng);
    return w;
}

SiteAttentionResult site_self_attention(nn::Graph& g, nn::Var inp, const SiteAttentionWeights& w)
{
    if (inp.value().rank() != 2 || inp.value().dim(0) == 0) {
        throw ValidationError("site self-attention needs at least one station");
    }
    const nn::Var q = linear(g, inp, *w.w_q);
    const nn::Var k = linear(g, inp, *w.w_k);
    const nn::Var v = linear(g, inp, *w.w_v);
    const nn::Var a = attention_weights(q, k);
    const nn::Var h = nn::matmul(a, v);
    const nn::Var out = apply_mlp(g, apply_layer_norm(g, nn::add(v, h), w.norm), w.mlp);
    return {out, a, v, h};
}

} // namespace aircast
