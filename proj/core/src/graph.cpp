#include "vogcl/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>

#include "vogcl/errors.hpp"

namespace vogcl {

std::string_view op_name(OpKind kind) {
    switch (kind) {
        case OpKind::Leaf: return "leaf";
        case OpKind::MatMul: return "matmul";
        case OpKind::Conv2d: return "conv2d";
        case OpKind::AddBias: return "add_bias";
        case OpKind::Relu: return "relu";
        case OpKind::MaxPool2d: return "maxpool2d";
        case OpKind::Reshape: return "reshape";
        case OpKind::Add: return "add";
        case OpKind::Mul: return "mul";
        case OpKind::Scale: return "scale";
        case OpKind::Sum: return "sum";
        case OpKind::Pick: return "pick";
        case OpKind::SoftmaxCrossEntropy: return "softmax_cross_entropy";
    }
    return "unknown";
}

namespace {

struct ConvGeometry {
    std::size_t batch, channels, height, width;
    std::size_t filters, kh, kw;
    std::size_t stride, padding;
    std::size_t out_h, out_w;
};

// Output positions o in [lo, hi) whose input coordinate o*stride + k - pad
// lands inside [0, extent).
struct ValidRange {
    std::size_t lo, hi;
};

ValidRange valid_range(std::size_t k, std::size_t pad, std::size_t stride, std::size_t extent,
                       std::size_t out_extent) {
    const auto kk = static_cast<std::ptrdiff_t>(k);
    const auto p = static_cast<std::ptrdiff_t>(pad);
    const auto s = static_cast<std::ptrdiff_t>(stride);
    const auto n = static_cast<std::ptrdiff_t>(extent);
    std::ptrdiff_t lo = 0;
    if (kk < p) lo = (p - kk + s - 1) / s;
    const std::ptrdiff_t last = n - 1 + p - kk;
    std::ptrdiff_t hi = last < 0 ? 0 : last / s + 1;
    hi = std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(out_extent));
    if (hi < lo) hi = lo;
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// Stride-1 convolutions work on a zero-padded copy of each input sample and
// keep outputs in the padded row pitch Wp. Output position i then reads the
// input at i + off[q], where q = (c, ky, kx) walks the kernel taps in weight
// layout order, so convolution becomes a product of the [F x Q] weight matrix
// with Q shifted views of one buffer. Columns past Wo in each pitched row are
// scratch. Every accumulation runs in a fixed order, independent of how the
// compiler vectorizes the lane loops.
constexpr std::size_t kLanes = 8;

struct PaddedLayout {
    std::size_t hp, wp;
    std::size_t span;    // pitched output length, rounded up to kLanes
    std::size_t buffer;  // padded input length, with slack for the rounded span
    std::vector<std::size_t> offsets;
};

PaddedLayout padded_layout(const ConvGeometry& g) {
    PaddedLayout l;
    l.hp = g.height + 2 * g.padding;
    l.wp = g.width + 2 * g.padding;
    const std::size_t exact = (g.out_h - 1) * l.wp + g.out_w;
    l.span = (exact + kLanes - 1) / kLanes * kLanes;
    l.buffer = g.channels * l.hp * l.wp + kLanes;
    for (std::size_t c = 0; c < g.channels; ++c) {
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
            for (std::size_t kx = 0; kx < g.kw; ++kx) l.offsets.push_back(c * l.hp * l.wp + ky * l.wp + kx);
        }
    }
    return l;
}

void pad_channels(const ConvGeometry& g, const PaddedLayout& l, const double* in, std::vector<double>& out) {
    out.assign(l.buffer, 0.0);
    for (std::size_t c = 0; c < g.channels; ++c) {
        for (std::size_t y = 0; y < g.height; ++y) {
            const double* src = in + (c * g.height + y) * g.width;
            double* dst = out.data() + (c * l.hp + y + g.padding) * l.wp + g.padding;
            std::copy(src, src + g.width, dst);
        }
    }
}

// out[f][i0 + l] = sum_q w[f][q] * x[off[q] + i0 + l] for FT filters.
template <std::size_t FT>
void forward_tile(const double* w, std::size_t q_count, const std::size_t* off, const double* x, double* out,
                  std::size_t pitch) {
    double acc[FT][kLanes] = {};
    for (std::size_t q = 0; q < q_count; ++q) {
        const double* xv = x + off[q];
        for (std::size_t f = 0; f < FT; ++f) {
            const double wv = w[f * q_count + q];
            for (std::size_t l = 0; l < kLanes; ++l) acc[f][l] += wv * xv[l];
        }
    }
    for (std::size_t f = 0; f < FT; ++f) {
        for (std::size_t l = 0; l < kLanes; ++l) out[f * pitch + l] = acc[f][l];
    }
}

// gw[f][q] += sum_i g[f][i] * x[off[q] + i] for FT filters and QT taps.
template <std::size_t FT, std::size_t QT>
void weight_tile(const double* g, std::size_t pitch, const double* x, const std::size_t* off, std::size_t span,
                 double* gw, std::size_t q_count) {
    double acc[FT][QT][kLanes] = {};
    for (std::size_t i = 0; i < span; i += kLanes) {
        for (std::size_t f = 0; f < FT; ++f) {
            const double* gv = g + f * pitch + i;
            for (std::size_t q = 0; q < QT; ++q) {
                const double* xv = x + off[q] + i;
                for (std::size_t l = 0; l < kLanes; ++l) acc[f][q][l] += gv[l] * xv[l];
            }
        }
    }
    for (std::size_t f = 0; f < FT; ++f) {
        for (std::size_t q = 0; q < QT; ++q) {
            const double* a = acc[f][q];
            gw[f * q_count + q] += ((a[0] + a[1]) + (a[2] + a[3])) + ((a[4] + a[5]) + (a[6] + a[7]));
        }
    }
}

// gx[off[q] + i0 + l] += sum_f w[f][q] * g[f][i0 + l] for QT taps.
template <std::size_t QT>
void input_tile(const double* w, std::size_t q_count, std::size_t filters, const double* g, std::size_t pitch,
                const std::size_t* off, double* gx) {
    double acc[QT][kLanes] = {};
    for (std::size_t f = 0; f < filters; ++f) {
        const double* gv = g + f * pitch;
        for (std::size_t q = 0; q < QT; ++q) {
            const double wv = w[f * q_count + q];
            for (std::size_t l = 0; l < kLanes; ++l) acc[q][l] += wv * gv[l];
        }
    }
    for (std::size_t q = 0; q < QT; ++q) {
        double* dst = gx + off[q];
        for (std::size_t l = 0; l < kLanes; ++l) dst[l] += acc[q][l];
    }
}

void conv_forward_unit_stride(const ConvGeometry& g, const double* in, const double* w, double* out) {
    const PaddedLayout l = padded_layout(g);
    const std::size_t q_count = l.offsets.size();
    const std::size_t in_plane = g.height * g.width;
    const std::size_t out_plane = g.out_h * g.out_w;
    std::vector<double> padded;
    std::vector<double> pitched(g.filters * l.span);
    for (std::size_t b = 0; b < g.batch; ++b) {
        pad_channels(g, l, in + b * g.channels * in_plane, padded);
        for (std::size_t i = 0; i < l.span; i += kLanes) {
            std::size_t f = 0;
            for (; f + 4 <= g.filters; f += 4) {
                forward_tile<4>(w + f * q_count, q_count, l.offsets.data(), padded.data() + i,
                                pitched.data() + f * l.span + i, l.span);
            }
            for (; f < g.filters; ++f) {
                forward_tile<1>(w + f * q_count, q_count, l.offsets.data(), padded.data() + i,
                                pitched.data() + f * l.span + i, l.span);
            }
        }
        for (std::size_t f = 0; f < g.filters; ++f) {
            double* o = out + (b * g.filters + f) * out_plane;
            const double* src = pitched.data() + f * l.span;
            for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                std::copy(src + oy * l.wp, src + oy * l.wp + g.out_w, o + oy * g.out_w);
            }
        }
    }
}

void conv_forward(const ConvGeometry& g, const double* in, const double* w, double* out) {
    if (g.stride == 1) {
        conv_forward_unit_stride(g, in, w, out);
        return;
    }
    const std::size_t in_plane = g.height * g.width;
    const std::size_t out_plane = g.out_h * g.out_w;
    for (std::size_t b = 0; b < g.batch; ++b) {
        const double* in_b = in + b * g.channels * in_plane;
        double* out_b = out + b * g.filters * out_plane;
        for (std::size_t f = 0; f < g.filters; ++f) {
            double* o = out_b + f * out_plane;
            for (std::size_t c = 0; c < g.channels; ++c) {
                const double* x = in_b + c * in_plane;
                const double* wk = w + (f * g.channels + c) * g.kh * g.kw;
                for (std::size_t ky = 0; ky < g.kh; ++ky) {
                    const ValidRange rows = valid_range(ky, g.padding, g.stride, g.height, g.out_h);
                    for (std::size_t kx = 0; kx < g.kw; ++kx) {
                        const ValidRange cols = valid_range(kx, g.padding, g.stride, g.width, g.out_w);
                        const double wv = wk[ky * g.kw + kx];
                        for (std::size_t oy = rows.lo; oy < rows.hi; ++oy) {
                            const double* xr = x + (oy * g.stride + ky - g.padding) * g.width + kx - g.padding;
                            double* orow = o + oy * g.out_w;
                            for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) orow[ox] += wv * xr[ox * g.stride];
                        }
                    }
                }
            }
        }
    }
}

// Input and/or weight gradients of a stride-1 convolution.
void conv_backward_unit_stride(const ConvGeometry& g, const double* gout, const double* in, const double* w,
                               double* gin, double* gw) {
    const PaddedLayout l = padded_layout(g);
    const std::size_t q_count = l.offsets.size();
    const std::size_t* off = l.offsets.data();
    const std::size_t in_plane = g.height * g.width;
    const std::size_t out_plane = g.out_h * g.out_w;
    std::vector<double> padded;
    std::vector<double> gin_padded;
    std::vector<double> pitched(g.filters * l.span, 0.0);
    for (std::size_t b = 0; b < g.batch; ++b) {
        for (std::size_t f = 0; f < g.filters; ++f) {
            const double* go = gout + (b * g.filters + f) * out_plane;
            double* dst = pitched.data() + f * l.span;
            for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                std::copy(go + oy * g.out_w, go + (oy + 1) * g.out_w, dst + oy * l.wp);
            }
        }
        if (gw) {
            pad_channels(g, l, in + b * g.channels * in_plane, padded);
            std::size_t f = 0;
            for (; f + 4 <= g.filters; f += 4) {
                const double* gf = pitched.data() + f * l.span;
                double* gwf = gw + f * q_count;
                std::size_t q = 0;
                for (; q + 2 <= q_count; q += 2) weight_tile<4, 2>(gf, l.span, padded.data(), off + q, l.span, gwf + q, q_count);
                for (; q < q_count; ++q) weight_tile<4, 1>(gf, l.span, padded.data(), off + q, l.span, gwf + q, q_count);
            }
            for (; f < g.filters; ++f) {
                const double* gf = pitched.data() + f * l.span;
                for (std::size_t q = 0; q < q_count; ++q) {
                    weight_tile<1, 1>(gf, l.span, padded.data(), off + q, l.span, gw + f * q_count + q, q_count);
                }
            }
        }
        if (gin) {
            gin_padded.assign(l.buffer, 0.0);
            for (std::size_t i = 0; i < l.span; i += kLanes) {
                std::size_t q = 0;
                for (; q + 4 <= q_count; q += 4) {
                    input_tile<4>(w + q, q_count, g.filters, pitched.data() + i, l.span, off + q, gin_padded.data() + i);
                }
                for (; q < q_count; ++q) {
                    input_tile<1>(w + q, q_count, g.filters, pitched.data() + i, l.span, off + q, gin_padded.data() + i);
                }
            }
            double* gin_b = gin + b * g.channels * in_plane;
            for (std::size_t c = 0; c < g.channels; ++c) {
                for (std::size_t y = 0; y < g.height; ++y) {
                    const double* src = gin_padded.data() + (c * l.hp + y + g.padding) * l.wp + g.padding;
                    double* dst = gin_b + (c * g.height + y) * g.width;
                    for (std::size_t x = 0; x < g.width; ++x) dst[x] += src[x];
                }
            }
        }
    }
}

void conv_backward_input(const ConvGeometry& g, const double* gout, const double* w, double* gin) {
    const std::size_t in_plane = g.height * g.width;
    const std::size_t out_plane = g.out_h * g.out_w;
    for (std::size_t b = 0; b < g.batch; ++b) {
        double* gin_b = gin + b * g.channels * in_plane;
        const double* gout_b = gout + b * g.filters * out_plane;
        for (std::size_t f = 0; f < g.filters; ++f) {
            const double* go = gout_b + f * out_plane;
            for (std::size_t c = 0; c < g.channels; ++c) {
                double* gx = gin_b + c * in_plane;
                const double* wk = w + (f * g.channels + c) * g.kh * g.kw;
                for (std::size_t ky = 0; ky < g.kh; ++ky) {
                    const ValidRange rows = valid_range(ky, g.padding, g.stride, g.height, g.out_h);
                    for (std::size_t kx = 0; kx < g.kw; ++kx) {
                        const ValidRange cols = valid_range(kx, g.padding, g.stride, g.width, g.out_w);
                        const double wv = wk[ky * g.kw + kx];
                        for (std::size_t oy = rows.lo; oy < rows.hi; ++oy) {
                            double* gr = gx + (oy * g.stride + ky - g.padding) * g.width + kx - g.padding;
                            const double* grow = go + oy * g.out_w;
                            for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) gr[ox * g.stride] += wv * grow[ox];
                        }
                    }
                }
            }
        }
    }
}

void conv_backward_weight(const ConvGeometry& g, const double* gout, const double* in, double* gw) {
    const std::size_t in_plane = g.height * g.width;
    const std::size_t out_plane = g.out_h * g.out_w;
    for (std::size_t b = 0; b < g.batch; ++b) {
        const double* in_b = in + b * g.channels * in_plane;
        const double* gout_b = gout + b * g.filters * out_plane;
        for (std::size_t f = 0; f < g.filters; ++f) {
            const double* go = gout_b + f * out_plane;
            for (std::size_t c = 0; c < g.channels; ++c) {
                const double* x = in_b + c * in_plane;
                double* gwk = gw + (f * g.channels + c) * g.kh * g.kw;
                for (std::size_t ky = 0; ky < g.kh; ++ky) {
                    const ValidRange rows = valid_range(ky, g.padding, g.stride, g.height, g.out_h);
                    for (std::size_t kx = 0; kx < g.kw; ++kx) {
                        const ValidRange cols = valid_range(kx, g.padding, g.stride, g.width, g.out_w);
                        double acc = 0.0;
                        for (std::size_t oy = rows.lo; oy < rows.hi; ++oy) {
                            const double* xr = x + (oy * g.stride + ky - g.padding) * g.width + kx - g.padding;
                            const double* grow = go + oy * g.out_w;
                            for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) acc += grow[ox] * xr[ox * g.stride];
                        }
                        gwk[ky * g.kw + kx] += acc;
                    }
                }
            }
        }
    }
}

ConvGeometry conv_geometry(const Shape& in, const Shape& k, std::size_t stride, std::size_t padding) {
    if (in.size() != 3 && in.size() != 4) {
        throw DimensionError("conv2d input must be CxHxW or BxCxHxW, got " + shape_to_string(in));
    }
    if (k.size() != 4) throw DimensionError("conv2d kernels must be FxCxkhxkw, got " + shape_to_string(k));
    if (stride < 1) throw DimensionError("conv2d stride must be >= 1");
    ConvGeometry g{};
    const std::size_t off = in.size() == 4 ? 1 : 0;
    g.batch = in.size() == 4 ? in[0] : 1;
    g.channels = in[off];
    g.height = in[off + 1];
    g.width = in[off + 2];
    g.filters = k[0];
    g.kh = k[2];
    g.kw = k[3];
    g.stride = stride;
    g.padding = padding;
    if (k[1] != g.channels) {
        throw DimensionError("conv2d channel mismatch: input " + shape_to_string(in) + " vs kernels " +
                             shape_to_string(k));
    }
    if (g.kh > g.height + 2 * padding || g.kw > g.width + 2 * padding) {
        throw DimensionError("conv2d kernel " + shape_to_string(k) + " larger than padded input " +
                             shape_to_string(in) + " (padding " + std::to_string(padding) + ")");
    }
    g.out_h = (g.height + 2 * padding - g.kh) / stride + 1;
    g.out_w = (g.width + 2 * padding - g.kw) / stride + 1;
    return g;
}

void accumulate(Tensor& t, std::span<const double> delta) {
    auto g = t.grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

}  // namespace

const Graph::Node& Graph::node(NodeId id) const {
    if (id.index >= nodes_.size()) throw ContractError("node id " + std::to_string(id.index) + " not in graph");
    return nodes_[id.index];
}

Graph::Node& Graph::node(NodeId id) {
    if (id.index >= nodes_.size()) throw ContractError("node id " + std::to_string(id.index) + " not in graph");
    return nodes_[id.index];
}

NodeId Graph::push(Node n) {
    bool needs_grad = false;
    for (NodeId in : n.inputs) needs_grad = needs_grad || nodes_[in.index].value.requires_grad();
    n.value.set_requires_grad(needs_grad);
    nodes_.push_back(std::move(n));
    return NodeId{nodes_.size() - 1};
}

NodeId Graph::leaf(Tensor value, bool requires_grad) {
    Node n;
    n.kind = OpKind::Leaf;
    n.value = std::move(value);
    n.value.clear_grad();
    nodes_.push_back(std::move(n));
    nodes_.back().value.set_requires_grad(requires_grad);
    return NodeId{nodes_.size() - 1};
}

NodeId Graph::matmul(NodeId a_id, NodeId b_id) {
    const Tensor& a = value(a_id);
    const Tensor& b = value(b_id);
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul shape mismatch: " + shape_to_string(a.shape()) + " x " +
                             shape_to_string(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out({m, n});
    const double* ap = a.data().data();
    const double* bp = b.data().data();
    double* cp = out.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = cp + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ap[i * k + p];
            const double* brow = bp + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    Node node;
    node.kind = OpKind::MatMul;
    node.inputs = {a_id, b_id};
    node.value = std::move(out);
    return push(std::move(node));
}

NodeId Graph::conv2d(NodeId input, NodeId kernels, std::size_t stride, std::size_t padding) {
    const Tensor& x = value(input);
    const Tensor& k = value(kernels);
    const ConvGeometry g = conv_geometry(x.shape(), k.shape(), stride, padding);
    Shape out_shape = x.rank() == 4 ? Shape{g.batch, g.filters, g.out_h, g.out_w}
                                    : Shape{g.filters, g.out_h, g.out_w};
    Tensor out(std::move(out_shape));
    conv_forward(g, x.data().data(), k.data().data(), out.data().data());
    Node node;
    node.kind = OpKind::Conv2d;
    node.inputs = {input, kernels};
    node.value = std::move(out);
    node.stride = stride;
    node.padding = padding;
    return push(std::move(node));
}

NodeId Graph::add_bias(NodeId x_id, NodeId bias_id) {
    const Tensor& x = value(x_id);
    const Tensor& bias = value(bias_id);
    std::size_t outer = 1, channels = 0, inner = 1;
    switch (x.rank()) {
        case 1: channels = x.dim(0); break;
        case 2: outer = x.dim(0); channels = x.dim(1); break;
        case 3: channels = x.dim(0); inner = x.dim(1) * x.dim(2); break;
        case 4: outer = x.dim(0); channels = x.dim(1); inner = x.dim(2) * x.dim(3); break;
        default: throw DimensionError("add_bias does not support shape " + shape_to_string(x.shape()));
    }
    if (bias.rank() != 1 || bias.dim(0) != channels) {
        throw DimensionError("add_bias shape mismatch: " + shape_to_string(x.shape()) + " + " +
                             shape_to_string(bias.shape()));
    }
    Tensor out = x;
    out.clear_grad();
    auto o = out.data();
    auto bv = bias.data();
    for (std::size_t b = 0; b < outer; ++b) {
        for (std::size_t c = 0; c < channels; ++c) {
            double* row = o.data() + (b * channels + c) * inner;
            for (std::size_t i = 0; i < inner; ++i) row[i] += bv[c];
        }
    }
    Node node;
    node.kind = OpKind::AddBias;
    node.inputs = {x_id, bias_id};
    node.value = std::move(out);
    node.indices = {outer, channels, inner};
    return push(std::move(node));
}

NodeId Graph::relu(NodeId x_id) {
    Tensor out = value(x_id);
    out.clear_grad();
    for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
    Node node;
    node.kind = OpKind::Relu;
    node.inputs = {x_id};
    node.value = std::move(out);
    return push(std::move(node));
}

NodeId Graph::maxpool2d(NodeId x_id, std::size_t k) {
    const Tensor& x = value(x_id);
    if (x.rank() < 2) throw DimensionError("maxpool2d needs at least two axes, got " + shape_to_string(x.shape()));
    if (k == 0) throw DimensionError("maxpool2d window must be >= 1");
    const std::size_t h = x.dim(x.rank() - 2);
    const std::size_t w = x.dim(x.rank() - 1);
    if (h % k != 0 || w % k != 0) {
        throw DimensionError("maxpool2d window " + std::to_string(k) + " does not divide spatial dims of " +
                             shape_to_string(x.shape()));
    }
    const std::size_t oh = h / k, ow = w / k;
    const std::size_t planes = x.numel() / (h * w);
    Shape out_shape = x.shape();
    out_shape[out_shape.size() - 2] = oh;
    out_shape[out_shape.size() - 1] = ow;
    Tensor out(std::move(out_shape));
    std::vector<std::size_t> argmax(out.numel());
    const double* xp = x.data().data();
    double* op = out.data().data();
    for (std::size_t p = 0; p < planes; ++p) {
        const std::size_t base = p * h * w;
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                std::size_t best = base + (oy * k) * w + ox * k;
                for (std::size_t dy = 0; dy < k; ++dy) {
                    for (std::size_t dx = 0; dx < k; ++dx) {
                        const std::size_t idx = base + (oy * k + dy) * w + ox * k + dx;
                        if (xp[idx] > xp[best]) best = idx;
                    }
                }
                const std::size_t o = p * oh * ow + oy * ow + ox;
                op[o] = xp[best];
                argmax[o] = best;
            }
        }
    }
    Node node;
    node.kind = OpKind::MaxPool2d;
    node.inputs = {x_id};
    node.value = std::move(out);
    node.indices = std::move(argmax);
    return push(std::move(node));
}

NodeId Graph::reshape(NodeId x_id, Shape shape) {
    Tensor out = value(x_id).reshaped(std::move(shape));
    Node node;
    node.kind = OpKind::Reshape;
    node.inputs = {x_id};
    node.value = std::move(out);
    return push(std::move(node));
}

NodeId Graph::add(NodeId a_id, NodeId b_id) {
    const Tensor& a = value(a_id);
    const Tensor& b = value(b_id);
    if (a.shape() != b.shape()) {
        throw DimensionError("add shape mismatch: " + shape_to_string(a.shape()) + " + " + shape_to_string(b.shape()));
    }
    Tensor out = a;
    out.clear_grad();
    auto o = out.data();
    auto bv = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
    Node node;
    node.kind = OpKind::Add;
    node.inputs = {a_id, b_id};
    node.value = std::move(out);
    return push(std::move(node));
}

NodeId Graph::mul(NodeId a_id, NodeId b_id) {
    const Tensor& a = value(a_id);
    const Tensor& b = value(b_id);
    if (a.shape() != b.shape()) {
        throw DimensionError("mul shape mismatch: " + shape_to_string(a.shape()) + " * " + shape_to_string(b.shape()));
    }
    Tensor out = a;
    out.clear_grad();
    auto o = out.data();
    auto bv = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
    Node node;
    node.kind = OpKind::Mul;
    node.inputs = {a_id, b_id};
    node.value = std::move(out);
    return push(std::move(node));
}

NodeId Graph::scale(NodeId x_id, double factor) {
    Tensor out = value(x_id);
    out.clear_grad();
    for (double& v : out.data()) v *= factor;
    Node node;
    node.kind = OpKind::Scale;
    node.inputs = {x_id};
    node.value = std::move(out);
    node.factor = factor;
    return push(std::move(node));
}

NodeId Graph::sum(NodeId x_id) {
    double total = 0.0;
    for (double v : value(x_id).data()) total += v;
    Node node;
    node.kind = OpKind::Sum;
    node.inputs = {x_id};
    node.value = Tensor::scalar(total);
    return push(std::move(node));
}

NodeId Graph::pick(NodeId x_id, std::span<const std::size_t> columns) {
    const Tensor& x = value(x_id);
    if (x.rank() != 2 || columns.size() != x.dim(0)) {
        throw DimensionError("pick needs [B x C] input and B columns, got " + shape_to_string(x.shape()) + " and " +
                             std::to_string(columns.size()) + " columns");
    }
    const std::size_t classes = x.dim(1);
    Tensor out({x.dim(0)});
    for (std::size_t b = 0; b < columns.size(); ++b) {
        if (columns[b] >= classes) {
            throw LabelError("class index " + std::to_string(columns[b]) + " out of range [0, " +
                             std::to_string(classes) + ") at row " + std::to_string(b));
        }
        out[b] = x[b * classes + columns[b]];
    }
    Node node;
    node.kind = OpKind::Pick;
    node.inputs = {x_id};
    node.value = std::move(out);
    node.indices.assign(columns.begin(), columns.end());
    return push(std::move(node));
}

NodeId Graph::softmax_cross_entropy(NodeId logits_id, std::span<const std::size_t> labels) {
    const Tensor& logits = value(logits_id);
    if (logits.rank() != 2) throw DimensionError("softmax_cross_entropy needs [B x C] logits, got " +
                                                 shape_to_string(logits.shape()));
    const std::size_t batch = logits.dim(0), classes = logits.dim(1);
    if (labels.size() != batch) {
        throw DimensionError("softmax_cross_entropy got " + std::to_string(labels.size()) + " labels for batch of " +
                             std::to_string(batch));
    }
    std::vector<double> probs(logits.numel());
    double total = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        if (labels[b] >= classes) {
            throw LabelError("label " + std::to_string(labels[b]) + " out of range [0, " + std::to_string(classes) +
                             ") at index " + std::to_string(b));
        }
        const double* row = logits.data().data() + b * classes;
        double* prow = probs.data() + b * classes;
        const double mx = *std::max_element(row, row + classes);
        double denom = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            prow[c] = std::exp(row[c] - mx);
            denom += prow[c];
        }
        for (std::size_t c = 0; c < classes; ++c) prow[c] /= denom;
        total += -(row[labels[b]] - mx - std::log(denom));
    }
    Node node;
    node.kind = OpKind::SoftmaxCrossEntropy;
    node.inputs = {logits_id};
    node.value = Tensor::scalar(total / static_cast<double>(batch));
    node.indices.assign(labels.begin(), labels.end());
    node.cache = std::move(probs);
    return push(std::move(node));
}

void Graph::backward(NodeId loss) {
    Node& root = node(loss);
    if (root.value.numel() != 1) {
        throw ContractError("backward needs a scalar loss, got shape " + shape_to_string(root.value.shape()));
    }
    for (Node& n : nodes_) {
        if (n.value.requires_grad()) {
            n.value.zero_grad();
        } else {
            n.value.clear_grad();
        }
    }
    last_visits_ = 0;
    if (!root.value.requires_grad()) return;
    root.value.grad()[0] = 1.0;
    std::vector<bool> reached(nodes_.size(), false);
    reached[loss.index] = true;
    for (std::size_t i = loss.index + 1; i-- > 0;) {
        if (!reached[i]) continue;
        Node& n = nodes_[i];
        if (n.kind == OpKind::Leaf) continue;
        backward_node(i);
        ++last_visits_;
        for (NodeId in : n.inputs) {
            if (nodes_[in.index].value.requires_grad()) reached[in.index] = true;
        }
    }
}

void Graph::backward_node(std::size_t index) {
    Node& n = nodes_[index];
    std::span<const double> gout = n.value.grad();
    auto wants = [&](std::size_t slot) -> Tensor* {
        Tensor& t = nodes_[n.inputs[slot].index].value;
        return t.requires_grad() ? &t : nullptr;
    };

    switch (n.kind) {
        case OpKind::Leaf:
            break;
        case OpKind::MatMul: {
            const Tensor& a = nodes_[n.inputs[0].index].value;
            const Tensor& b = nodes_[n.inputs[1].index].value;
            const std::size_t m = a.dim(0), k = a.dim(1), cols = b.dim(1);
            if (Tensor* ta = wants(0)) {
                double* ga = ta->grad().data();
                const double* bp = b.data().data();
                for (std::size_t i = 0; i < m; ++i) {
                    const double* grow = gout.data() + i * cols;
                    for (std::size_t p = 0; p < k; ++p) {
                        const double* brow = bp + p * cols;
                        double acc = 0.0;
                        for (std::size_t j = 0; j < cols; ++j) acc += grow[j] * brow[j];
                        ga[i * k + p] += acc;
                    }
                }
            }
            if (Tensor* tb = wants(1)) {
                double* gb = tb->grad().data();
                const double* ap = a.data().data();
                for (std::size_t i = 0; i < m; ++i) {
                    const double* grow = gout.data() + i * cols;
                    for (std::size_t p = 0; p < k; ++p) {
                        const double av = ap[i * k + p];
                        double* gbrow = gb + p * cols;
                        for (std::size_t j = 0; j < cols; ++j) gbrow[j] += av * grow[j];
                    }
                }
            }
            break;
        }
        case OpKind::Conv2d: {
            const Tensor& x = nodes_[n.inputs[0].index].value;
            const Tensor& k = nodes_[n.inputs[1].index].value;
            const ConvGeometry g = conv_geometry(x.shape(), k.shape(), n.stride, n.padding);
            Tensor* tx = wants(0);
            Tensor* tk = wants(1);
            if (g.stride == 1) {
                conv_backward_unit_stride(g, gout.data(), x.data().data(), k.data().data(),
                                          tx ? tx->grad().data() : nullptr, tk ? tk->grad().data() : nullptr);
            } else {
                if (tx) conv_backward_input(g, gout.data(), k.data().data(), tx->grad().data());
                if (tk) conv_backward_weight(g, gout.data(), x.data().data(), tk->grad().data());
            }
            break;
        }
        case OpKind::AddBias: {
            const std::size_t outer = n.indices[0], channels = n.indices[1], inner = n.indices[2];
            if (Tensor* tx = wants(0)) accumulate(*tx, gout);
            if (Tensor* tb = wants(1)) {
                auto gb = tb->grad();
                for (std::size_t b = 0; b < outer; ++b) {
                    for (std::size_t c = 0; c < channels; ++c) {
                        const double* row = gout.data() + (b * channels + c) * inner;
                        double acc = 0.0;
                        for (std::size_t i = 0; i < inner; ++i) acc += row[i];
                        gb[c] += acc;
                    }
                }
            }
            break;
        }
        case OpKind::Relu: {
            if (Tensor* tx = wants(0)) {
                auto gx = tx->grad();
                auto xv = tx->data();
                for (std::size_t i = 0; i < gx.size(); ++i) {
                    if (xv[i] > 0.0) gx[i] += gout[i];
                }
            }
            break;
        }
        case OpKind::MaxPool2d: {
            if (Tensor* tx = wants(0)) {
                auto gx = tx->grad();
                for (std::size_t o = 0; o < gout.size(); ++o) gx[n.indices[o]] += gout[o];
            }
            break;
        }
        case OpKind::Reshape:
        case OpKind::Add: {
            for (std::size_t s = 0; s < n.inputs.size(); ++s) {
                if (Tensor* t = wants(s)) accumulate(*t, gout);
            }
            break;
        }
        case OpKind::Mul: {
            const Tensor& a = nodes_[n.inputs[0].index].value;
            const Tensor& b = nodes_[n.inputs[1].index].value;
            if (Tensor* ta = wants(0)) {
                auto ga = ta->grad();
                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gout[i] * b[i];
            }
            if (Tensor* tb = wants(1)) {
                auto gb = tb->grad();
                for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gout[i] * a[i];
            }
            break;
        }
        case OpKind::Scale: {
            if (Tensor* tx = wants(0)) {
                auto gx = tx->grad();
                for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gout[i] * n.factor;
            }
            break;
        }
        case OpKind::Sum: {
            if (Tensor* tx = wants(0)) {
                for (double& g : tx->grad()) g += gout[0];
            }
            break;
        }
        case OpKind::Pick: {
            if (Tensor* tx = wants(0)) {
                auto gx = tx->grad();
                const std::size_t classes = tx->dim(1);
                for (std::size_t b = 0; b < n.indices.size(); ++b) gx[b * classes + n.indices[b]] += gout[b];
            }
            break;
        }
        case OpKind::SoftmaxCrossEntropy: {
            if (Tensor* tx = wants(0)) {
                auto gx = tx->grad();
                const std::size_t batch = tx->dim(0), classes = tx->dim(1);
                const double s = gout[0] / static_cast<double>(batch);
                for (std::size_t b = 0; b < batch; ++b) {
                    for (std::size_t c = 0; c < classes; ++c) {
                        const double target = c == n.indices[b] ? 1.0 : 0.0;
                        gx[b * classes + c] += s * (n.cache[b * classes + c] - target);
                    }
                }
            }
            break;
        }
    }
}

}  // namespace vogcl
