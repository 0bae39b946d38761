#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "vogcl/tensor.hpp"

namespace vogcl {

struct NodeId {
    std::size_t index = 0;
    friend bool operator==(NodeId, NodeId) = default;
};

enum class OpKind {
    Leaf,
    MatMul,
    Conv2d,
    AddBias,
    Relu,
    MaxPool2d,
    Reshape,
    Add,
    Mul,
    Scale,
    Sum,
    Pick,
    SoftmaxCrossEntropy,
};

std::string_view op_name(OpKind kind);

// Define-by-run reverse-mode graph. Nodes are appended in evaluation order,
// so the node vector is already a topological order and backward simply
// walks it in reverse. A graph is a value: build one per batch and drop it.
class Graph {
public:
    NodeId leaf(Tensor value, bool requires_grad = false);

    // a: [m x k], b: [k x n].
    NodeId matmul(NodeId a, NodeId b);
    // input: [C x H x W] or [B x C x H x W]; kernels: [F x C x kh x kw].
    NodeId conv2d(NodeId input, NodeId kernels, std::size_t stride, std::size_t padding);
    // Adds bias[j] along axis 1 for rank >= 2 inputs of rank 2 or 4, or along
    // axis 0 for a [C x H x W] input.
    NodeId add_bias(NodeId x, NodeId bias);
    NodeId relu(NodeId x);
    // Non-overlapping k x k window max over the two trailing axes.
    NodeId maxpool2d(NodeId x, std::size_t k);
    NodeId reshape(NodeId x, Shape shape);
    NodeId add(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId x, double factor);
    NodeId sum(NodeId x);
    // x: [B x C]; returns [B] with out[b] = x[b, columns[b]].
    NodeId pick(NodeId x, std::span<const std::size_t> columns);
    // Mean over the batch of -log softmax(logits)[label].
    NodeId softmax_cross_entropy(NodeId logits, std::span<const std::size_t> labels);

    // Seeds d(loss)/d(loss) = 1 and fills the gradient buffer of every node
    // that depends on a requires_grad leaf. Gradients from a previous call are
    // discarded first.
    void backward(NodeId loss);

    const Tensor& value(NodeId id) const { return node(id).value; }
    std::span<const double> grad(NodeId id) const { return node(id).value.grad(); }
    bool requires_grad(NodeId id) const { return node(id).value.requires_grad(); }
    OpKind kind(NodeId id) const { return node(id).kind; }
    const std::vector<NodeId>& inputs(NodeId id) const { return node(id).inputs; }
    std::size_t size() const noexcept { return nodes_.size(); }

    // Number of nodes whose backward rule ran in the last backward() call.
    std::size_t last_backward_visits() const noexcept { return last_visits_; }

private:
    struct Node {
        OpKind kind = OpKind::Leaf;
        std::vector<NodeId> inputs;
        Tensor value;
        std::size_t stride = 1;
        std::size_t padding = 0;
        double factor = 1.0;
        std::vector<std::size_t> indices;
        std::vector<double> cache;
    };

    const Node& node(NodeId id) const;
    Node& node(NodeId id);
    NodeId push(Node n);
    void backward_node(std::size_t index);

    std::vector<Node> nodes_;
    std::size_t last_visits_ = 0;
};

}  // namespace vogcl
