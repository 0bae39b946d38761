#include "vogcl/model.hpp"

#include <cmath>

#include "vogcl/errors.hpp"
#include "vogcl/rng.hpp"

namespace vogcl {

ModelArch default_arch(std::size_t channels, std::size_t height, std::size_t width, std::size_t num_classes) {
    ModelArch arch;
    arch.channels = channels;
    arch.height = height;
    arch.width = width;
    arch.num_classes = num_classes;
    arch.dense_widths = {64, num_classes};
    return arch;
}

void validate_arch(const ModelArch& arch) {
    if (arch.channels == 0 || arch.height == 0 || arch.width == 0) throw ArchError("input shape must be positive");
    if (arch.num_classes == 0) throw ArchError("num_classes must be positive");
    std::size_t h = arch.height, w = arch.width;
    for (std::size_t i = 0; i < arch.conv_blocks.size(); ++i) {
        const ConvBlock& b = arch.conv_blocks[i];
        if (b.filters == 0) throw ArchError("conv block " + std::to_string(i) + " has zero filters");
        if (b.kernel == 0 || b.kernel % 2 == 0) {
            throw ArchError("conv block " + std::to_string(i) + " kernel must be odd, got " + std::to_string(b.kernel));
        }
        if (b.pool == 0 || h % b.pool != 0 || w % b.pool != 0) {
            throw ArchError("conv block " + std::to_string(i) + ": spatial " + std::to_string(h) + "x" +
                            std::to_string(w) + " not divisible by pool " + std::to_string(b.pool));
        }
        h /= b.pool;
        w /= b.pool;
    }
    if (arch.dense_widths.empty()) throw ArchError("dense tail must not be empty");
    for (std::size_t d : arch.dense_widths) {
        if (d == 0) throw ArchError("dense width must be positive");
    }
    if (arch.dense_widths.back() != arch.num_classes) {
        throw ArchError("last dense width " + std::to_string(arch.dense_widths.back()) + " must equal num_classes " +
                        std::to_string(arch.num_classes));
    }
}

std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelArch& arch) {
    validate_arch(arch);
    std::vector<std::pair<std::string, Shape>> layout;
    std::size_t c = arch.channels, h = arch.height, w = arch.width;
    for (std::size_t i = 0; i < arch.conv_blocks.size(); ++i) {
        const ConvBlock& b = arch.conv_blocks[i];
        const std::string prefix = "conv" + std::to_string(i + 1);
        layout.emplace_back(prefix + ".weight", Shape{b.filters, c, b.kernel, b.kernel});
        layout.emplace_back(prefix + ".bias", Shape{b.filters});
        c = b.filters;
        h /= b.pool;
        w /= b.pool;
    }
    std::size_t in = c * h * w;
    for (std::size_t j = 0; j < arch.dense_widths.size(); ++j) {
        const std::string prefix = "fc" + std::to_string(j + 1);
        layout.emplace_back(prefix + ".weight", Shape{in, arch.dense_widths[j]});
        layout.emplace_back(prefix + ".bias", Shape{arch.dense_widths[j]});
        in = arch.dense_widths[j];
    }
    return layout;
}

std::size_t parameter_count(const ModelArch& arch) {
    std::size_t total = 0;
    for (const auto& [name, shape] : parameter_layout(arch)) total += shape_numel(shape);
    return total;
}

const Tensor& Model::parameter(const std::string& name) const {
    for (const NamedTensor& p : parameters) {
        if (p.name == name) return p.tensor;
    }
    throw ContractError("model has no parameter named " + name);
}

std::size_t Model::num_parameters() const {
    std::size_t n = 0;
    for (const NamedTensor& p : parameters) n += p.tensor.numel();
    return n;
}

Model build_model(const ModelArch& arch, std::uint64_t seed) {
    Model model;
    model.arch = arch;
    model.init_seed = seed;
    Rng rng = make_stream(seed, "init");
    for (auto& [name, shape] : parameter_layout(arch)) {
        Tensor t(shape);
        if (shape.size() > 1) {
            // conv: fan_in = C*kh*kw; dense [in x out]: fan_in = in.
            const std::size_t fan_in = shape.size() == 4 ? shape[1] * shape[2] * shape[3] : shape[0];
            const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
            for (double& v : t.data()) v = std_dev * standard_normal(rng);
        }
        model.parameters.push_back({name, std::move(t)});
    }
    return model;
}

Model model_from_parameters(const ModelArch& arch, std::vector<NamedTensor> parameters) {
    const auto layout = parameter_layout(arch);
    if (layout.size() != parameters.size()) {
        throw ArchError("expected " + std::to_string(layout.size()) + " parameter tensors, got " +
                        std::to_string(parameters.size()));
    }
    for (std::size_t i = 0; i < layout.size(); ++i) {
        if (layout[i].first != parameters[i].name || layout[i].second != parameters[i].tensor.shape()) {
            throw ArchError("parameter " + std::to_string(i) + " is " + parameters[i].name + " " +
                            shape_to_string(parameters[i].tensor.shape()) + ", arch expects " + layout[i].first + " " +
                            shape_to_string(layout[i].second));
        }
    }
    Model model;
    model.arch = arch;
    model.parameters = std::move(parameters);
    return model;
}

ForwardTrace trace_forward(const Model& model, const Tensor& batch, bool parameters_require_grad,
                           bool input_requires_grad) {
    const ModelArch& arch = model.arch;
    if (batch.rank() != 4 || batch.dim(1) != arch.channels || batch.dim(2) != arch.height ||
        batch.dim(3) != arch.width) {
        throw DimensionError("batch shape " + shape_to_string(batch.shape()) + " does not match model input [Bx" +
                             std::to_string(arch.channels) + "x" + std::to_string(arch.height) + "x" +
                             std::to_string(arch.width) + "]");
    }
    ForwardTrace t;
    t.input = t.graph.leaf(batch, input_requires_grad);
    for (const NamedTensor& p : model.parameters) {
        t.parameters.push_back(t.graph.leaf(p.tensor, parameters_require_grad));
    }
    Graph& g = t.graph;
    NodeId x = t.input;
    std::size_t slot = 0;
    for (const ConvBlock& b : arch.conv_blocks) {
        x = g.conv2d(x, t.parameters[slot], 1, b.kernel / 2);
        x = g.add_bias(x, t.parameters[slot + 1]);
        x = g.relu(x);
        x = g.maxpool2d(x, b.pool);
        slot += 2;
    }
    const std::size_t batch_size = batch.dim(0);
    x = g.reshape(x, {batch_size, g.value(x).numel() / batch_size});
    for (std::size_t j = 0; j < arch.dense_widths.size(); ++j) {
        x = g.matmul(x, t.parameters[slot]);
        x = g.add_bias(x, t.parameters[slot + 1]);
        if (j + 1 < arch.dense_widths.size()) x = g.relu(x);
        slot += 2;
    }
    t.logits = x;
    return t;
}

Tensor forward(const Model& model, const Tensor& batch) {
    ForwardTrace t = trace_forward(model, batch, false, false);
    return t.graph.value(t.logits);
}

std::vector<Tensor> input_gradients(const Model& model, const Tensor& batch,
                                    std::span<const std::size_t> class_indices) {
    ForwardTrace t = trace_forward(model, batch, false, true);
    const std::size_t batch_size = batch.dim(0);
    if (class_indices.size() != batch_size) {
        throw DimensionError("got " + std::to_string(class_indices.size()) + " class indices for batch of " +
                             std::to_string(batch_size));
    }
    for (std::size_t c : class_indices) {
        if (c >= model.arch.num_classes) {
            throw LabelError("class index " + std::to_string(c) + " out of range [0, " +
                             std::to_string(model.arch.num_classes) + ")");
        }
    }
    const NodeId picked = t.graph.pick(t.logits, class_indices);
    const NodeId total = t.graph.sum(picked);
    t.graph.backward(total);

    const std::size_t channels = model.arch.channels;
    const std::size_t plane = model.arch.height * model.arch.width;
    const auto grad = t.graph.grad(t.input);
    std::vector<Tensor> maps;
    maps.reserve(batch_size);
    for (std::size_t b = 0; b < batch_size; ++b) {
        Tensor m({model.arch.height, model.arch.width});
        const double* s = grad.data() + b * channels * plane;
        for (std::size_t c = 0; c < channels; ++c) {
            for (std::size_t i = 0; i < plane; ++i) m[i] += s[c * plane + i];
        }
        if (channels > 1) {
            for (double& v : m.data()) v /= static_cast<double>(channels);
        }
        maps.push_back(std::move(m));
    }
    return maps;
}

Tensor input_gradient(const Model& model, const Tensor& image, std::size_t class_index) {
    if (image.rank() != 3) throw DimensionError("image must be CxHxW, got " + shape_to_string(image.shape()));
    Shape s{1, image.dim(0), image.dim(1), image.dim(2)};
    const std::size_t idx[1] = {class_index};
    return input_gradients(model, image.reshaped(s), idx).front();
}

std::vector<std::vector<double>> softmax_rows(const Tensor& logits) {
    if (logits.rank() != 2) throw DimensionError("softmax_rows needs [B x C], got " + shape_to_string(logits.shape()));
    const std::size_t rows = logits.dim(0), cols = logits.dim(1);
    std::vector<std::vector<double>> out(rows, std::vector<double>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = logits.data().data() + r * cols;
        double mx = row[0];
        for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
        double denom = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            out[r][c] = std::exp(row[c] - mx);
            denom += out[r][c];
        }
        for (double& v : out[r]) v /= denom;
    }
    return out;
}

}  // namespace vogcl
