#include "aircast/autodiff.hpp"

#include "aircast/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace aircast::nn {

const Tensor& Var::value() const
{
    return graph->value(*this);
}

Var Graph::constant(Tensor value)
{
    if (!value.all_finite()) {
        throw NumericError("non-finite value entering graph as constant");
    }
    nodes_.push_back(Node{std::move(value), {}, false, nullptr, {}});
    return Var{this, nodes_.size() - 1};
}

Var Graph::parameter(Parameter& p)
{
    if (!tracking_) {
        // Inference graphs copy the value; nothing flows back.
        return constant(p.value);
    }
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) {
        return Var{this, it->second};
    }
    nodes_.push_back(Node{p.value, {}, true, &p, {}});
    param_nodes_.emplace(&p, nodes_.size() - 1);
    return Var{this, nodes_.size() - 1};
}

const Tensor& Graph::grad(Var v) const
{
    return nodes_[v.id].grad;
}

Tensor& Graph::grad_buffer(std::size_t id)
{
    Node& n = nodes_[id];
    if (n.grad.size() != n.value.size()) {
        n.grad = Tensor(n.value.shape(), 0.0);
    }
    return n.grad;
}

Var Graph::record(Tensor value, std::span<const Var> inputs, BackwardFn fn)
{
    if (!value.all_finite()) {
        throw NumericError("non-finite value produced by op (node " + std::to_string(nodes_.size()) + ")");
    }
    bool needs = false;
    if (tracking_) {
        for (const Var& in : inputs) {
            needs = needs || nodes_[in.id].requires_grad;
        }
    }
    nodes_.push_back(Node{std::move(value), {}, needs, nullptr, needs ? std::move(fn) : BackwardFn{}});
    return Var{this, nodes_.size() - 1};
}

void Graph::backward(Var loss)
{
    if (nodes_[loss.id].value.size() != 1) {
        throw ShapeError("backward requires a scalar loss, got " + shape_string(nodes_[loss.id].value.shape()));
    }
    if (!nodes_[loss.id].requires_grad) {
        return;
    }
    grad_buffer(loss.id).fill(1.0);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.requires_grad || n.grad.empty()) {
            continue;
        }
        if (n.param != nullptr) {
            if (n.param->grad.size() != n.value.size()) {
                n.param->grad = Tensor(n.value.shape(), 0.0);
            }
            n.param->grad += n.grad;
        } else if (n.backward) {
            n.backward(*this, i);
        }
    }
}

namespace {

void expect_rank(const Tensor& t, std::size_t rank, const char* op)
{
    if (t.rank() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got "
                         + shape_string(t.shape()));
    }
}

} // namespace

Var matmul(Var a, Var b)
{
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    expect_rank(A, 2, "matmul");
    expect_rank(B, 2, "matmul");
    const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
    if (B.dim(0) != k) {
        throw ShapeError("matmul: " + shape_string(A.shape()) + " x " + shape_string(B.shape()));
    }
    Tensor C({m, n}, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = A[i * k + p];
            if (aip == 0.0) {
                continue;
            }
            const double* brow = &B[p * n];
            double* crow = &C[i * n];
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += aip * brow[j];
            }
        }
    }
    const Var ins[] = {a, b};
    return a.graph->record(std::move(C), ins, [a, b, m, k, n](Graph& g, std::size_t self) {
        const Tensor& G = g.grad_of(self);
        const Tensor& A = g.value_of(a.id);
        const Tensor& B = g.value_of(b.id);
        if (g.requires_grad(a.id)) {
            Tensor& GA = g.grad_buffer(a.id);
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        acc += G[i * n + j] * B[p * n + j];
                    }
                    GA[i * k + p] += acc;
                }
            }
        }
        if (g.requires_grad(b.id)) {
            Tensor& GB = g.grad_buffer(b.id);
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = A[i * k + p];
                    for (std::size_t j = 0; j < n; ++j) {
                        GB[p * n + j] += aip * G[i * n + j];
                    }
                }
            }
        }
    });
}

Var transpose(Var a)
{
    const Tensor& A = a.value();
    expect_rank(A, 2, "transpose");
    const std::size_t m = A.dim(0), n = A.dim(1);
    Tensor T({n, m});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            T[j * m + i] = A[i * n + j];
        }
    }
    const Var ins[] = {a};
    return a.graph->record(std::move(T), ins, [a, m, n](Graph& g, std::size_t self) {
        const Tensor& G = g.grad_of(self);
        Tensor& GA = g.grad_buffer(a.id);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                GA[i * n + j] += G[j * m + i];
            }
        }
    });
}

Var add(Var a, Var b)
{
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    if (A.shape() != B.shape()) {
        throw ShapeError("add: " + shape_string(A.shape()) + " vs " + shape_string(B.shape()));
    }
    Tensor C = A;
    C += B;
    const Var ins[] = {a, b};
    return a.graph->record(std::move(C), ins, [a, b](Graph& g, std::size_t self) {
        const Tensor& G = g.grad_of(self);
        if (g.requires_grad(a.id)) {
            g.grad_buffer(a.id) += G;
        }
        if (g.requires_grad(b.id)) {
            g.grad_buffer(b.id) += G;
        }
    });
}

Var add_bias(Var a, Var bias)
{
    const Tensor& A = a.value();
    const Tensor& b = bias.value();
    expect_rank(A, 2, "add_bias");
    const std::size_t m = A.dim(0), n = A.dim(1);
    if (b.size() != n) {
        throw ShapeError("add_bias: bias " + shape_string(b.shape()) + " for " + shape_string(A.shape()));
    }
    Tensor C = A;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            C[i * n + j] += b[j];
        }
    }
    const Var ins[] = {a, bias};
    return a.graph->record(std::move(C), ins, [a, bias, m, n](Graph& g, std::size_t self) {
        const Tensor& G = g.grad_of(self);
        if (g.requires_grad(a.id)) {
            g.grad_buffer(a.id) += G;
        }
        if (g.requires_grad(bias.id)) {
            Tensor& GB = g.grad_buffer(bias.id);
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    GB[j] += G[i * n + j];
                }
            }
        }
    });
}

Var scale(Var a, double s)
{
    Tensor C = a.value();
    C *= s;
    const Var ins[] = {a};
    return a.graph->record(std::move(C), ins, [a, s](Graph& g, std::size_t self) {
        const Tensor& G = g.grad_of(self);
        Tensor& GA = g.grad_buffer(a.id);
        for (std::size_t i = 0; i < G.size(); ++i) {
            GA[i] += s * G[i];
        }
    });
}

Var relu(Var a)
{
    Tensor C = a.value();
    for (double& v : C.data()) {
        v = v > 0.0 ? v : 0.0;
    }
    const Var ins[] = {a};
    return a.graph->record(std::move(C), ins, [a](Graph& g, std::size_t self) {
        const Tensor& G = g.grad_of(self);
        const Tensor& X = g.value_of(a.id);
        Tensor& GA = g.grad_buffer(a.id);
        for (std::size_t i = 0; i < G.size(); ++i) {
            if (X[i] > 0.0) {
                GA[i] += G[i];
            }
        }
    });
}

Var softmax_rows(Var a)
{
    const Tensor& A = a.value();
    expect_rank(A, 2, "softmax_rows");
    const std::size_t m = A.dim(0), n = A.dim(1);
    if (n == 0) {
        throw ShapeError("softmax_rows: empty rows");
    }
    Tensor Y({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const double* x = &A[i * n];
        double* y = &Y[i * n];
        const double mx = *std::max_element(x, x + n);
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            y[j] = std::exp(x[j] - mx);
            total += y[j];
        }
        for (std::size_t j = 0; j < n; ++j) {
            y[j] /= total;
        }
    }
    const Var ins[] = {a};
    return a.graph->record(std::move(Y), ins, [a, m, n](Graph& g, std::size_t self) {
        const Tensor& G = g.grad_of(self);
        const Tensor& Y = g.value_of(self);
        Tensor& GA = g.grad_buffer(a.id);
        for (std::size_t i = 0; i < m; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                dot += G[i * n + j] * Y[i * n + j];
            }
            for (std::size_t j = 0; j < n; ++j) {
                GA[i * n + j] += Y[i * n + j] * (G[i * n + j] - dot);
            }
        }
    });
}

Var layer_norm_rows(Var x, Var gain, Var bias, double eps)
{
    const Tensor& X = x.value();
    expect_rank(X, 2, "layer_norm_rows");
    const std::size_t m = X.dim(0), n = X.dim(1);
    if (n < 2) {
        throw ShapeError("layer_norm_rows: normalised axis must have length >= 2");
    }
    if (gain.value().size() != n || bias.value().size() != n) {
        throw ShapeError("layer_norm_rows: gain/bias length must be " + std::to_string(n));
    }
    const Tensor& gam = gain.value();
    const Tensor& bet = bias.value();
    Tensor Y({m, n});
    Tensor xhat({m, n});
    std::vector<double> inv_std(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double* r = &X[i * n];
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            mean += r[j];
        }
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            var += (r[j] - mean) * (r[j] - mean);
        }
        var /= static_cast<double>(n);
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) {
            const double h = (r[j] - mean) * inv_std[i];
            xhat[i * n + j] = h;
            Y[i * n + j] = gam[j] * h + bet[j];
        }
    }
    const Var ins[] = {x, gain, bias};
    return x.graph->record(
        std::move(Y), ins,
        [x, gain, bias, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph& g, std::size_t self) {
            const Tensor& G = g.grad_of(self);
            const Tensor& gam = g.value_of(gain.id);
            if (g.requires_grad(gain.id)) {
                Tensor& GG = g.grad_buffer(gain.id);
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        GG[j] += G[i * n + j] * xhat[i * n + j];
                    }
                }
            }
            if (g.requires_grad(bias.id)) {
                Tensor& GB = g.grad_buffer(bias.id);
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        GB[j] += G[i * n + j];
                    }
                }
            }
            if (g.requires_grad(x.id)) {
                Tensor& GX = g.grad_buffer(x.id);
                const double nn = static_cast<double>(n);
                for (std::size_t i = 0; i < m; ++i) {
                    double s1 = 0.0, s2 = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        const double d = G[i * n + j] * gam[j];
                        s1 += d;
                        s2 += d * xhat[i * n + j];
                    }
                    for (std::size_t j = 0; j < n; ++j) {
                        const double d = G[i * n + j] * gam[j];
                        GX[i * n + j] += inv_std[i] / nn * (nn * d - s1 - xhat[i * n + j] * s2);
                    }
                }
            }
        });
}

Var conv2d(Var x, Var w, std::optional<Var> bias, std::size_t stride, std::size_t padding)
{
    const Tensor& X = x.value();
    const Tensor& W = w.value();
    expect_rank(X, 3, "conv2d input");
    expect_rank(W, 4, "conv2d kernels");
    const std::size_t ci = X.dim(0), h = X.dim(1), wd = X.dim(2);
    const std::size_t co = W.dim(0), k = W.dim(2);
    if (W.dim(1) != ci) {
        throw ShapeError("conv2d: kernels expect " + std::to_string(W.dim(1)) + " input channels, got "
                         + std::to_string(ci));
    }
    if (W.dim(3) != k || k % 2 == 0) {
        throw ShapeError("conv2d: kernels must be square with odd size, got " + shape_string(W.shape()));
    }
    if (stride == 0) {
        throw ShapeError("conv2d: stride must be positive");
    }
    if (bias && bias->value().size() != co) {
        throw ShapeError("conv2d: bias length must equal output channels");
    }
    if (h + 2 * padding < k || wd + 2 * padding < k) {
        throw ShapeError("conv2d: kernel larger than padded input");
    }
    const std::size_t ho = (h + 2 * padding - k) / stride + 1;
    const std::size_t wo = (wd + 2 * padding - k) / stride + 1;
    const auto pad = static_cast<std::ptrdiff_t>(padding);

    Tensor Y({co, ho, wo}, 0.0);
    for (std::size_t o = 0; o < co; ++o) {
        const double b = bias ? bias->value()[o] : 0.0;
        for (std::size_t r = 0; r < ho; ++r) {
            for (std::size_t c = 0; c < wo; ++c) {
                double acc = b;
                for (std::size_t i = 0; i < ci; ++i) {
                    for (std::size_t kr = 0; kr < k; ++kr) {
                        const std::ptrdiff_t ir = static_cast<std::ptrdiff_t>(r * stride + kr) - pad;
                        if (ir < 0 || ir >= static_cast<std::ptrdiff_t>(h)) {
                            continue;
                        }
                        for (std::size_t kc = 0; kc < k; ++kc) {
                            const std::ptrdiff_t ic = static_cast<std::ptrdiff_t>(c * stride + kc) - pad;
                            if (ic < 0 || ic >= static_cast<std::ptrdiff_t>(wd)) {
                                continue;
                            }
                            acc += W[((o * ci + i) * k + kr) * k + kc]
                                 * X[(i * h + static_cast<std::size_t>(ir)) * wd + static_cast<std::size_t>(ic)];
                        }
                    }
                }
                Y[(o * ho + r) * wo + c] = acc;
            }
        }
    }

    std::vector<Var> ins{x, w};
    if (bias) {
        ins.push_back(*bias);
    }
    return x.graph->record(std::move(Y), ins, [=](Graph& g, std::size_t self) {
        const Tensor& G = g.grad_of(self);
        const Tensor& X = g.value_of(x.id);
        const Tensor& W = g.value_of(w.id);
        const bool gx = g.requires_grad(x.id);
        const bool gw = g.requires_grad(w.id);
        Tensor* GX = gx ? &g.grad_buffer(x.id) : nullptr;
        Tensor* GW = gw ? &g.grad_buffer(w.id) : nullptr;
        if (bias && g.requires_grad(bias->id)) {
            Tensor& GB = g.grad_buffer(bias->id);
            for (std::size_t o = 0; o < co; ++o) {
                double acc = 0.0;
                for (std::size_t p = 0; p < ho * wo; ++p) {
                    acc += G[o * ho * wo + p];
                }
                GB[o] += acc;
            }
        }
        if (!gx && !gw) {
            return;
        }
        for (std::size_t o = 0; o < co; ++o) {
            for (std::size_t r = 0; r < ho; ++r) {
                for (std::size_t c = 0; c < wo; ++c) {
                    const double go = G[(o * ho + r) * wo + c];
                    if (go == 0.0) {
                        continue;
                    }
                    for (std::size_t i = 0; i < ci; ++i) {
                        for (std::size_t kr = 0; kr < k; ++kr) {
                            const std::ptrdiff_t ir = static_cast<std::ptrdiff_t>(r * stride + kr) - pad;
                            if (ir < 0 || ir >= static_cast<std::ptrdiff_t>(h)) {
                                continue;
                            }
                            for (std::size_t kc = 0; kc < k; ++kc) {
                                const std::ptrdiff_t ic = static_cast<std::ptrdiff_t>(c * stride + kc) - pad;
                                if (ic < 0 || ic >= static_cast<std::ptrdiff_t>(wd)) {
                                    continue;
                                }
                                const std::size_t xi =
                                    (i * h + static_cast<std::size_t>(ir)) * wd + static_cast<std::size_t>(ic);
                                const std::size_t wi = ((o * ci + i) * k + kr) * k + kc;
                                if (gw) {
                                    (*GW)[wi] += go * X[xi];
                                }
                                if (gx) {
                                    (*GX)[xi] += go * W[wi];
                                }
                            }
                        }
                    }
                }
            }
        }
    });
}

Var reshape(Var a, Shape shape)
{
    Tensor C = a.value().reshaped(std::move(shape));
    const Var ins[] = {a};
    return a.graph->record(std::move(C), ins, [a](Graph& g, std::size_t self) {
        const Tensor& G = g.grad_of(self);
        Tensor& GA = g.grad_buffer(a.id);
        for (std::size_t i = 0; i < G.size(); ++i) {
            GA[i] += G[i];
        }
    });
}

Var concat_cols(std::span<const Var> parts)
{
    if (parts.empty()) {
        throw ShapeError("concat_cols: no inputs");
    }
    const std::size_t m = parts[0].value().dim(0);
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const Var& p : parts) {
        expect_rank(p.value(), 2, "concat_cols");
        if (p.value().dim(0) != m) {
            throw ShapeError("concat_cols: row count mismatch " + shape_string(p.value().shape()) + " vs "
                             + std::to_string(m) + " rows");
        }
        widths.push_back(p.value().dim(1));
        total += widths.back();
    }
    Tensor C({m, total});
    std::size_t off = 0;
    for (std::size_t q = 0; q < parts.size(); ++q) {
        const Tensor& P = parts[q].value();
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < widths[q]; ++j) {
                C[i * total + off + j] = P[i * widths[q] + j];
            }
        }
        off += widths[q];
    }
    std::vector<Var> ins(parts.begin(), parts.end());
    return parts[0].graph->record(std::move(C), ins, [ins, widths, m, total](Graph& g, std::size_t self) {
        const Tensor& G = g.grad_of(self);
        std::size_t off = 0;
        for (std::size_t q = 0; q < ins.size(); ++q) {
            if (g.requires_grad(ins[q].id)) {
                Tensor& GP = g.grad_buffer(ins[q].id);
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < widths[q]; ++j) {
                        GP[i * widths[q] + j] += G[i * total + off + j];
                    }
                }
            }
            off += widths[q];
        }
    });
}

Var broadcast_rows(Var row, std::size_t rows)
{
    const Tensor& R = row.value();
    expect_rank(R, 2, "broadcast_rows");
    if (R.dim(0) != 1) {
        throw ShapeError("broadcast_rows: expected a single row, got " + shape_string(R.shape()));
    }
    const std::size_t n = R.dim(1);
    Tensor C({rows, n});
    for (std::size_t i = 0; i < rows; ++i) {
        std::copy_n(&R[0], n, &C[i * n]);
    }
    const Var ins[] = {row};
    return row.graph->record(std::move(C), ins, [row, rows, n](Graph& g, std::size_t self) {
        const Tensor& G = g.grad_of(self);
        Tensor& GR = g.grad_buffer(row.id);
        for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                GR[j] += G[i * n + j];
            }
        }
    });
}

Var embedding_row(Var table, std::size_t index)
{
    const Tensor& T = table.value();
    expect_rank(T, 2, "embedding_row");
    if (index >= T.dim(0)) {
        throw OutOfBoundsError("embedding index " + std::to_string(index) + " outside table of "
                               + std::to_string(T.dim(0)) + " rows");
    }
    const std::size_t n = T.dim(1);
    Tensor C({1, n});
    std::copy_n(&T[index * n], n, &C[0]);
    const Var ins[] = {table};
    return table.graph->record(std::move(C), ins, [table, index, n](Graph& g, std::size_t self) {
        const Tensor& G = g.grad_of(self);
        Tensor& GT = g.grad_buffer(table.id);
        for (std::size_t j = 0; j < n; ++j) {
            GT[index * n + j] += G[j];
        }
    });
}

Var sum(Var a)
{
    double total = 0.0;
    for (double v : a.value().data()) {
        total += v;
    }
    const Var ins[] = {a};
    return a.graph->record(Tensor::scalar(total), ins, [a](Graph& g, std::size_t self) {
        const double G = g.grad_of(self)[0];
        Tensor& GA = g.grad_buffer(a.id);
        for (double& v : GA.data()) {
            v += G;
        }
    });
}

Var pinball_loss(Var pred, const Tensor& target, std::span<const double> taus)
{
    const Tensor& P = pred.value();
    const std::size_t q = taus.size();
    if (q == 0 || P.size() % q != 0 || P.size() / q != target.size()) {
        throw ShapeError("pinball_loss: prediction " + shape_string(P.shape()) + " with " + std::to_string(q)
                         + " quantiles does not match target " + shape_string(target.shape()));
    }
    if (!target.all_finite()) {
        throw NumericError("pinball_loss: non-finite target");
    }
    const std::size_t cells = target.size();
    double total = 0.0;
    for (std::size_t c = 0; c < cells; ++c) {
        for (std::size_t j = 0; j < q; ++j) {
            const double u = target[c] - P[c * q + j];
            total += std::max(taus[j] * u, (taus[j] - 1.0) * u);
        }
    }
    const double denom = static_cast<double>(P.size());
    const Var ins[] = {pred};
    std::vector<double> tau_copy(taus.begin(), taus.end());
    return pred.graph->record(
        Tensor::scalar(total / denom), ins, [pred, target, tau_copy, cells, q, denom](Graph& g, std::size_t self) {
            const double G = g.grad_of(self)[0];
            const Tensor& P = g.value_of(pred.id);
            Tensor& GP = g.grad_buffer(pred.id);
            for (std::size_t c = 0; c < cells; ++c) {
                for (std::size_t j = 0; j < q; ++j) {
                    const double u = target[c] - P[c * q + j];
                    // d/dpred of max(tau*u, (tau-1)*u); u == 0 takes the tau branch.
                    const double d = u >= 0.0 ? -tau_copy[j] : 1.0 - tau_copy[j];
                    GP[c * q + j] += G * d / denom;
                }
            }
        });
}

} // namespace aircast::nn
