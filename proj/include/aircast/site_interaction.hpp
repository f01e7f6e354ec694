#pragma once

#include "aircast/layers.hpp"
#include "aircast/timeutil.hpp"

namespace aircast {

/// Trainable day-of-year and hour-of-day lookup tables, each temb_dim/2 wide.
struct TemporalEmbedding {
    nn::Parameter* doy_table = nullptr; ///< [366 x temb_dim/2]
    nn::Parameter* hod_table = nullptr; ///< [24 x temb_dim/2]

    static TemporalEmbedding create(nn::ParamStore& store, const std::string& prefix, std::size_t temb_dim,
                                    std::mt19937_64& rng);
    std::size_t dim() const { return 2 * doy_table->value.dim(1); }
};

/// concat(doy_table[doy-1], hod_table[hod]) as a [1 x temb_dim] row.
nn::Var temporal_embed(nn::Graph& g, TimeCode tc, const TemporalEmbedding& emb);

/// Per-site rows [x_prev | x_curr | pe | t_emb], giving [N_s x (2D + 4 + temb_dim)].
/// Sites are rows here; this is the transpose of the column-per-site layout.
nn::Var assemble_site_input(nn::Var x_prev, nn::Var x_curr, nn::Var pe, nn::Var t_emb);

struct SiteAttentionWeights {
    nn::Parameter* w_q = nullptr; ///< [F x d_model]
    nn::Parameter* w_k = nullptr;
    nn::Parameter* w_v = nullptr;
    LayerNormParams norm;
    Mlp mlp;

    static SiteAttentionWeights create(nn::ParamStore& store, const std::string& prefix, std::size_t in_features,
                                       std::size_t d_model, std::size_t hidden, std::mt19937_64& rng);
};

struct SiteAttentionResult {
    nn::Var output;    ///< H'_sa [N_s x d_model]
    nn::Var attention; ///< A [N_s x N_s], rows sum to one
    nn::Var values;    ///< V
    nn::Var attended;  ///< H_sa = A V
};

/// Self-attention across stations followed by MLP(LayerNorm(V + A V)).
SiteAttentionResult site_self_attention(nn::Graph& g, nn::Var inp, const SiteAttentionWeights& w);

} // namespace aircast
