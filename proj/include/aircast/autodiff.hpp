#pragma once

#include "aircast/params.hpp"
#include "aircast/tensor.hpp"

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

namespace aircast::nn {

class Graph;

/// Handle to a node of a Graph.
struct Var {
    Graph* graph = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
};

/// Tape for reverse-mode differentiation. Nodes are appended in execution
/// order, so reverse insertion order is a valid topological order.
class Graph {
public:
    using BackwardFn = std::function<void(Graph&, std::size_t self)>;

    /// With `track_gradients == false` parameters enter as constants and no
    /// backward closures are kept; used for inference.
    explicit Graph(bool track_gradients = true) : tracking_(track_gradients) {}

    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var constant(Tensor value);
    Var parameter(Parameter& p);

    const Tensor& value(Var v) const { return nodes_[v.id].value; }
    const Tensor& grad(Var v) const;
    std::size_t size() const noexcept { return nodes_.size(); }
    bool tracking() const noexcept { return tracking_; }

    /// Backpropagates from a scalar node, accumulating into Parameter::grad.
    void backward(Var loss);

    // Op plumbing.
    Var record(Tensor value, std::span<const Var> inputs, BackwardFn fn);
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    const Tensor& value_of(std::size_t id) const { return nodes_[id].value; }
    const Tensor& grad_of(std::size_t id) const { return nodes_[id].grad; }
    Tensor& grad_buffer(std::size_t id);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        Parameter* param = nullptr;
        BackwardFn backward;
    };

    bool tracking_;
    std::deque<Node> nodes_; // deque keeps value references stable while recording
    std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

// Differentiable ops. 2-D tensors are [rows x cols].
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
/// a[m x n] + bias[n] broadcast over rows.
Var add_bias(Var a, Var bias);
Var scale(Var a, double s);
Var relu(Var a);
/// Softmax along the last axis of a 2-D tensor, max-subtracted.
Var softmax_rows(Var a);
/// Layer normalisation of each row with gain/bias of the row length.
Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5);
/// Cross-correlation of x[C_in x H x W] with w[C_out x C_in x k x k].
Var conv2d(Var x, Var w, std::optional<Var> bias, std::size_t stride, std::size_t padding);
Var reshape(Var a, Shape shape);
/// Concatenates 2-D tensors with equal row counts along columns.
Var concat_cols(std::span<const Var> parts);
/// Repeats a [1 x n] row `rows` times.
Var broadcast_rows(Var row, std::size_t rows);
/// Row `index` of table[R x n] as a [1 x n] tensor.
Var embedding_row(Var table, std::size_t index);
Var sum(Var a);
/// Mean pinball loss. pred has Q as its innermost axis; target has
/// pred.size() / Q elements in the same order.
Var pinball_loss(Var pred, const Tensor& target, std::span<const double> taus);

} // namespace aircast::nn
