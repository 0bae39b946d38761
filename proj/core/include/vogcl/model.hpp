#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vogcl/graph.hpp"
#include "vogcl/tensor.hpp"

namespace vogcl {

struct ConvBlock {
    std::size_t filters = 8;
    std::size_t kernel = 3;
    std::size_t pool = 2;
    friend bool operator==(const ConvBlock&, const ConvBlock&) = default;
};

// VGG-style classifier description: conv(kernel, same padding) + ReLU +
// max-pool per block, then dense layers with ReLU between them. The last
// dense layer emits the pre-softmax logits.
struct ModelArch {
    std::size_t channels = 1;
    std::size_t height = 32;
    std::size_t width = 32;
    std::vector<ConvBlock> conv_blocks{{8, 3, 2}, {16, 3, 2}};
    std::vector<std::size_t> dense_widths{64, 2};
    std::size_t num_classes = 2;

    friend bool operator==(const ModelArch&, const ModelArch&) = default;
};

// Default desk architecture for the given input and class count.
ModelArch default_arch(std::size_t channels, std::size_t height, std::size_t width, std::size_t num_classes);

// Throws ArchError when the arch is inconsistent.
void validate_arch(const ModelArch& arch);

// Closed-form parameter count.
std::size_t parameter_count(const ModelArch& arch);

struct NamedTensor {
    std::string name;
    Tensor tensor;
    friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

// Parameter names and shapes in canonical order.
std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelArch& arch);

struct Model {
    ModelArch arch;
    std::vector<NamedTensor> parameters;
    std::uint64_t init_seed = 0;

    const Tensor& parameter(const std::string& name) const;
    std::size_t num_parameters() const;
};

// He (fan-in) normal init for weights, zero biases, drawn from the `init`
// stream of `seed`.
Model build_model(const ModelArch& arch, std::uint64_t seed);

// Model rebuilt from a parameter set (e.g. a checkpoint); shapes are checked.
Model model_from_parameters(const ModelArch& arch, std::vector<NamedTensor> parameters);

// A forward pass recorded on a fresh graph.
struct ForwardTrace {
    Graph graph;
    NodeId input;
    NodeId logits;
    std::vector<NodeId> parameters;
};

// batch: [B x C x H x W]. Parameters enter the graph as leaves; the model
// itself is never mutated.
ForwardTrace trace_forward(const Model& model, const Tensor& batch, bool parameters_require_grad,
                           bool input_requires_grad);

// Pre-softmax logits [B x num_classes].
Tensor forward(const Model& model, const Tensor& batch);

// Channel-averaged gradient of one pre-softmax logit with respect to the
// input pixels, shape [H x W].
Tensor input_gradient(const Model& model, const Tensor& image, std::size_t class_index);

// Same as input_gradient for every image of a [B x C x H x W] batch, one
// class index per image. Samples do not interact, so row b equals
// input_gradient(model, batch[b], class_indices[b]) bit-for-bit.
std::vector<Tensor> input_gradients(const Model& model, const Tensor& batch,
                                    std::span<const std::size_t> class_indices);

// Softmax of each logit row.
std::vector<std::vector<double>> softmax_rows(const Tensor& logits);

}  // namespace vogcl
