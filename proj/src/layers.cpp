#include "aircast/layers.hpp"

#include <cmath>

namespace aircast {

Mlp Mlp::create(nn::ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden,
                std::size_t out, std::mt19937_64& rng)
{
    Mlp m;
    m.w1 = &store.create(prefix + ".w1", nn::normal_tensor({in, hidden}, std::sqrt(2.0 / static_cast<double>(in)), rng));
    m.b1 = &store.create(prefix + ".b1", Tensor({hidden}, 0.0));
    m.w2 = &store.create(prefix + ".w2", nn::normal_tensor({hidden, out}, 1.0 / std::sqrt(static_cast<double>(hidden)), rng));
    m.b2 = &store.create(prefix + ".b2", Tensor({out}, 0.0));
    return m;
}

nn::Var apply_mlp(nn::Graph& g, nn::Var x, const Mlp& mlp)
{
    const nn::Var h = nn::relu(linear(g, x, *mlp.w1, mlp.b1));
    return linear(g, h, *mlp.w2, mlp.b2);
}

LayerNormParams LayerNormParams::create(nn::ParamStore& store, const std::string& prefix, std::size_t width)
{
    LayerNormParams ln;
    ln.gain = &store.create(prefix + ".gain", Tensor({width}, 1.0));
    ln.bias = &store.create(prefix + ".bias", Tensor({width}, 0.0));
    return ln;
}

nn::Var apply_layer_norm(nn::Graph& g, nn::Var x, const LayerNormParams& ln)
{
    return nn::layer_norm_rows(x, g.parameter(*ln.gain), g.parameter(*ln.bias));
}

nn::Var linear(nn::Graph& g, nn::Var x, nn::Parameter& w, nn::Parameter* b)
{
    nn::Var y = nn::matmul(x, g.parameter(w));
    if (b != nullptr) {
        y = nn::add_bias(y, g.parameter(*b));
    }
    return y;
}

nn::Var attention_weights(nn::Var q, nn::Var k)
{
    const double d = static_cast<double>(q.value().dim(1));
    return nn::softmax_rows(nn::scale(nn::matmul(q, nn::transpose(k)), 1.0 / std::sqrt(d)));
}

} // namespace aircast
