#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "lebm/tensor.hpp"

namespace lebm {

using NodeId = std::size_t;

// Minimal reverse-mode autodiff tape over tensor-valued nodes.
//
// Recording appends nodes in topological order (parents always precede
// children, enforced by construction: an op can only reference ids already on
// the tape). Forward values are cached on the node. `gradients` runs one
// backward sweep from a scalar root and returns the adjoint of each requested
// leaf; adjoint buffers are local to the call, so the tape itself can be
// queried repeatedly and extended between queries. `reset` drops all nodes.
//
// The op set is exactly what the MLP energy / Gaussian log-likelihood
// composites need; everything is dense f64.
class Tape {
    enum class Op {
        Leaf,
        MatMul,     // a (n x p) * b (p x q)
        AddRow,     // a (n x q) + row b (q), broadcast over rows
        Add,        // a + b, same shape
        Sub,        // a - b, same shape
        Affine,     // c0 * a + c1, elementwise
        LeakyRelu,  // x > 0 ? x : c0 * x
        Tanh,
        RowSumSq,   // (n x q) -> (n): sum of squares per row
        SqueezeCol, // (n x 1) -> (n)
        Sum,        // -> scalar
        Mean,       // -> scalar
    };

    struct Node {
        Op op;
        NodeId a = 0;
        NodeId b = 0;
        double c0 = 0.0;
        double c1 = 0.0;
        Tensor value;
    };

public:
    NodeId leaf(Tensor v) { return push({Op::Leaf, 0, 0, 0.0, 0.0, std::move(v)}); }

    NodeId matmul(NodeId a, NodeId b) {
        const Tensor& ta = value(a);
        const Tensor& tb = value(b);
        if (ta.cols() != tb.rows()) {
            throw std::invalid_argument("tape: matmul inner dimensions " + ta.shape_str() +
                                        " vs " + tb.shape_str());
        }
        Tensor out({ta.rows(), tb.cols()});
        lebm::matmul(ta, tb, out);
        return push({Op::MatMul, a, b, 0.0, 0.0, std::move(out)});
    }

    NodeId add_row(NodeId a, NodeId row) {
        const Tensor& ta = value(a);
        const Tensor& tr = value(row);
        if (tr.size() != ta.cols()) {
            throw std::invalid_argument("tape: add_row width mismatch " + ta.shape_str() +
                                        " vs " + tr.shape_str());
        }
        Tensor out = ta;
        for (std::size_t i = 0; i < out.rows(); ++i)
            for (std::size_t j = 0; j < out.cols(); ++j) out.at(i, j) += tr[j];
        return push({Op::AddRow, a, row, 0.0, 0.0, std::move(out)});
    }

    NodeId add(NodeId a, NodeId b) { return binary(Op::Add, a, b, +1.0); }
    NodeId sub(NodeId a, NodeId b) { return binary(Op::Sub, a, b, -1.0); }

    NodeId affine(NodeId a, double mul, double shift) {
        Tensor out = value(a);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = mul * out[i] + shift;
        return push({Op::Affine, a, 0, mul, shift, std::move(out)});
    }

    NodeId scale(NodeId a, double mul) { return affine(a, mul, 0.0); }

    NodeId leaky_relu(NodeId a, double slope) {
        Tensor out = value(a);
        for (std::size_t i = 0; i < out.size(); ++i)
            if (out[i] < 0.0) out[i] *= slope;
        return push({Op::LeakyRelu, a, 0, slope, 0.0, std::move(out)});
    }

    NodeId tanh(NodeId a) {
        Tensor out = value(a);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
        return push({Op::Tanh, a, 0, 0.0, 0.0, std::move(out)});
    }

    NodeId row_sumsq(NodeId a) {
        const Tensor& ta = value(a);
        Tensor out({ta.rows()});
        for (std::size_t i = 0; i < ta.rows(); ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < ta.cols(); ++j) {
                const double v = ta.at(i, j);
                acc += v * v;
            }
            out[i] = acc;
        }
        return push({Op::RowSumSq, a, 0, 0.0, 0.0, std::move(out)});
    }

    NodeId squeeze_col(NodeId a) {
        const Tensor& ta = value(a);
        if (ta.cols() != 1) {
            throw std::invalid_argument("tape: squeeze_col expects (n x 1), got " +
                                        ta.shape_str());
        }
        Tensor out({ta.rows()});
        for (std::size_t i = 0; i < ta.rows(); ++i) out[i] = ta[i];
        return push({Op::SqueezeCol, a, 0, 0.0, 0.0, std::move(out)});
    }

    NodeId sum(NodeId a) {
        const Tensor& ta = value(a);
        double acc = 0.0;
        for (std::size_t i = 0; i < ta.size(); ++i) acc += ta[i];
        return push({Op::Sum, a, 0, 0.0, 0.0, Tensor::scalar(acc)});
    }

    NodeId mean(NodeId a) {
        const Tensor& ta = value(a);
        double acc = 0.0;
        for (std::size_t i = 0; i < ta.size(); ++i) acc += ta[i];
        return push({Op::Mean, a, 0, 0.0, 0.0,
                     Tensor::scalar(acc / static_cast<double>(ta.size()))});
    }

    const Tensor& value(NodeId id) const { return nodes_.at(id).value; }

    std::size_t size() const { return nodes_.size(); }

    void reset() { nodes_.clear(); }

    // Reverse sweep from `root` (must be scalar). Returns the gradient of
    // root w.r.t. each leaf in `leaves`, in order; a leaf the root does not
    // depend on gets a zero tensor of its shape. Each leaf's gradient is
    // accumulated exactly once per backward pass.
    std::vector<Tensor> gradients(NodeId root, std::span<const NodeId> leaves) const {
        if (root >= nodes_.size()) throw std::out_of_range("tape: unknown root node");
        if (nodes_[root].value.size() != 1) {
            throw std::invalid_argument("backward_gradients: root must be scalar, got " +
                                        nodes_[root].value.shape_str());
        }
        std::vector<Tensor> adj(root + 1);
        std::vector<char> live(root + 1, 0);
        adj[root] = Tensor::scalar(1.0);
        live[root] = 1;

        for (NodeId id = root + 1; id-- > 0;) {
            if (!live[id]) continue;
            const Node& n = nodes_[id];
            const Tensor& g = adj[id];
            switch (n.op) {
                case Op::Leaf:
                    break;
                case Op::MatMul: {
                    matmul_accum_nt(g, nodes_[n.b].value, grad_of(adj, live, n.a));
                    matmul_accum_tn(nodes_[n.a].value, g, grad_of(adj, live, n.b));
                    break;
                }
                case Op::AddRow: {
                    accum(grad_of(adj, live, n.a), g, +1.0);
                    Tensor& db = grad_of(adj, live, n.b);
                    for (std::size_t i = 0; i < g.rows(); ++i)
                        for (std::size_t j = 0; j < g.cols(); ++j) db[j] += g.at(i, j);
                    break;
                }
                case Op::Add:
                    accum(grad_of(adj, live, n.a), g, +1.0);
                    accum(grad_of(adj, live, n.b), g, +1.0);
                    break;
                case Op::Sub:
                    accum(grad_of(adj, live, n.a), g, +1.0);
                    accum(grad_of(adj, live, n.b), g, -1.0);
                    break;
                case Op::Affine:
                    accum(grad_of(adj, live, n.a), g, n.c0);
                    break;
                case Op::LeakyRelu: {
                    const Tensor& x = nodes_[n.a].value;
                    Tensor& da = grad_of(adj, live, n.a);
                    for (std::size_t i = 0; i < g.size(); ++i)
                        da[i] += g[i] * (x[i] > 0.0 ? 1.0 : n.c0);
                    break;
                }
                case Op::Tanh: {
                    const Tensor& y = n.value;
                    Tensor& da = grad_of(adj, live, n.a);
                    for (std::size_t i = 0; i < g.size(); ++i)
                        da[i] += g[i] * (1.0 - y[i] * y[i]);
                    break;
                }
                case Op::RowSumSq: {
                    const Tensor& x = nodes_[n.a].value;
                    Tensor& da = grad_of(adj, live, n.a);
                    for (std::size_t i = 0; i < x.rows(); ++i) {
                        const double gi = g[i];
                        for (std::size_t j = 0; j < x.cols(); ++j)
                            da.at(i, j) += 2.0 * x.at(i, j) * gi;
                    }
                    break;
                }
                case Op::SqueezeCol: {
                    Tensor& da = grad_of(adj, live, n.a);
                    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
                    break;
                }
                case Op::Sum: {
                    accum_scalar(grad_of(adj, live, n.a), g[0]);
                    break;
                }
                case Op::Mean: {
                    const double w = g[0] / static_cast<double>(nodes_[n.a].value.size());
                    accum_scalar(grad_of(adj, live, n.a), w);
                    break;
                }
            }
        }

        std::vector<Tensor> out;
        out.reserve(leaves.size());
        for (NodeId id : leaves) {
            if (id >= nodes_.size()) throw std::out_of_range("tape: unknown leaf node");
            if (id <= root && live[id]) {
                out.push_back(std::move(adj[id]));
            } else {
                out.push_back(Tensor::zeros(nodes_[id].value.shape()));
            }
        }
        return out;
    }

    Tensor gradient(NodeId root, NodeId leaf) const {
        NodeId ls[1] = {leaf};
        return std::move(gradients(root, ls)[0]);
    }

private:
    NodeId binary(Op op, NodeId a, NodeId b, double sign) {
        const Tensor& ta = value(a);
        const Tensor& tb = value(b);
        if (!ta.same_shape(tb)) {
            throw std::invalid_argument("tape: shape mismatch " + ta.shape_str() + " vs " +
                                        tb.shape_str());
        }
        Tensor out = ta;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += sign * tb[i];
        return push({op, a, b, 0.0, 0.0, std::move(out)});
    }

    NodeId push(Node n) {
        nodes_.push_back(std::move(n));
        return nodes_.size() - 1;
    }

    Tensor& grad_of(std::vector<Tensor>& adj, std::vector<char>& live, NodeId id) const {
        // adj/live are indexed up to root; parents always precede children
        if (!live[id]) {
            adj[id] = Tensor::zeros(nodes_[id].value.shape());
            live[id] = 1;
        }
        return adj[id];
    }

    static void accum(Tensor& dst, const Tensor& g, double sign) {
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += sign * g[i];
    }

    static void accum_scalar(Tensor& dst, double v) {
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += v;
    }

    std::vector<Node> nodes_;
};

}  // namespace lebm
