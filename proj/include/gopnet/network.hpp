#pragma once

// A grown network: ordered hidden layers of operator-set blocks plus a linear
// readout. Forward evaluation and backpropagation chain through the operator
// partials; gradients at the few nondifferentiable points follow the
// subgradient conventions fixed in operators.hpp.

#include <span>
#include <string>
#include <vector>

#include "gopnet/errors.hpp"
#include "gopnet/matrix.hpp"
#include "gopnet/operators.hpp"

namespace gopnet {

// Fixed-width group of neurons sharing one operator set. One weight column
// per neuron.
struct GopBlock {
    OperatorSet opset;
    Matrix weights;  // fan_in x width
    Vector bias;     // width

    int fan_in() const { return static_cast<int>(weights.rows()); }
    int width() const { return static_cast<int>(weights.cols()); }
};

struct HiddenLayer {
    std::vector<GopBlock> blocks;

    int fan_in() const { return blocks.empty() ? 0 : blocks.front().fan_in(); }
    int width() const {
        int w = 0;
        for (const auto& b : blocks) w += b.width();
        return w;
    }
};

struct Network {
    int input_dim = 0;
    int n_classes = 0;
    std::vector<HiddenLayer> layers;
    Matrix output_weights;  // (last hidden width + 1) x n_classes; last row is the bias

    int last_width() const { return layers.empty() ? 0 : layers.back().width(); }

    // Shape-chain check; throws on any inconsistency.
    void validate() const {
        require(input_dim > 0, "network: input_dim must be positive");
        require(n_classes > 0, "network: n_classes must be positive");
        require(!layers.empty(), "network: no hidden layers");
        int expected_fan_in = input_dim;
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const auto& layer = layers[l];
            require(!layer.blocks.empty(), "network: empty layer " + std::to_string(l));
            for (const auto& block : layer.blocks) {
                require(block.width() >= 1, "network: zero-width block in layer " + std::to_string(l));
                require(block.fan_in() == expected_fan_in,
                        "network: fan-in mismatch in layer " + std::to_string(l));
                require(block.bias.size() == block.width(),
                        "network: bias size mismatch in layer " + std::to_string(l));
                if (!block.weights.allFinite() || !block.bias.allFinite())
                    throw NumericError("network: non-finite parameters", static_cast<int>(l));
            }
            expected_fan_in = layer.width();
        }
        require(output_weights.rows() == last_width() + 1,
                "network: output weight rows must equal last hidden width + 1");
        require(output_weights.cols() == n_classes,
                "network: output weight columns must equal n_classes");
        if (!output_weights.allFinite())
            throw NumericError("network: non-finite output weights");
    }
};

// t = f( rho(psi(x_1, w_1) .. psi(x_K, w_K)) + b )
inline double neuron_forward(const OperatorSet& opset, std::span<const double> x,
                             std::span<const double> w, double bias) {
    if (x.size() != w.size()) throw DimensionError("neuron_forward: input/weight length mismatch");
    if (x.empty()) throw DomainError("neuron_forward: empty input");
    std::vector<double> y(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) y[k] = nodal_forward(opset.nodal, x[k], w[k]);
    return activate(opset.act, pool_forward(opset.pool, y) + bias);
}

namespace detail {

// Whole-matrix neuron evaluation with the operator choice fixed at compile
// time; dispatch happens once per call instead of once per scalar. Matrices
// are row-major, so each sample's inputs and outputs are contiguous rows.
template <typename Tag>
void block_forward_kernel(Tag, const GopBlock& block, const Matrix& h_prev, Matrix& out) {
    const int n = static_cast<int>(h_prev.rows());
    const int k = block.fan_in();
    const int width = block.width();
    std::vector<double> y(k);
    for (int i = 0; i < n; ++i) {
        const double* xi = h_prev.data() + static_cast<std::ptrdiff_t>(i) * k;
        double* oi = out.data() + static_cast<std::ptrdiff_t>(i) * width;
        for (int j = 0; j < width; ++j) {
            for (int c = 0; c < k; ++c)
                y[c] = nodal_forward_t<Tag::nodal>(xi[c], block.weights(c, j));
            const double z = pool_forward_t<Tag::pool>(std::span<const double>(y)) + block.bias[j];
            oi[j] = activate_t<Tag::act>(z);
        }
    }
}

}  // namespace detail

// Row-wise neuron evaluation, one output column per neuron.
inline Matrix block_forward(const GopBlock& block, const Matrix& h_prev) {
    require(h_prev.cols() == block.fan_in(), "block_forward: fan-in mismatch");
    if (block.fan_in() == 0 && h_prev.rows() > 0)
        throw DomainError("pool_forward: empty input vector");
    Matrix out(h_prev.rows(), block.width());
    dispatch_opset(block.opset,
                   [&](auto tag) { detail::block_forward_kernel(tag, block, h_prev, out); });
    return out;
}

inline Matrix layer_forward(const HiddenLayer& layer, const Matrix& h_prev) {
    require(!layer.blocks.empty(), "layer_forward: empty layer");
    Matrix out(h_prev.rows(), layer.width());
    int col = 0;
    for (const auto& block : layer.blocks) {
        out.middleCols(col, block.width()) = block_forward(block, h_prev);
        col += block.width();
    }
    return out;
}

// Activations after the first `n_layers` hidden layers (all of them when
// negative). Growth uses this to obtain the inputs of the layer under
// construction.
inline Matrix forward_hidden(const Network& net, const Matrix& X, int n_layers = -1) {
    require(X.cols() == net.input_dim, "forward: input dimension mismatch");
    const int upto = n_layers < 0 ? static_cast<int>(net.layers.size()) : n_layers;
    Matrix h = X;
    for (int l = 0; l < upto; ++l) {
        h = layer_forward(net.layers[l], h);
        if (!h.allFinite()) throw NumericError("forward: non-finite activations", l);
    }
    return h;
}

struct ForwardResult {
    Matrix hidden;  // last hidden layer activations, N x last_width
    Matrix logits;  // N x C
};

// Full forward pass that keeps every intermediate needed by backpropagation,
// so training can reuse the evaluation it already paid for when computing the
// epoch loss.
struct ForwardStack {
    std::vector<Matrix> inputs;  // inputs[l] = input of hidden layer l; inputs[0] = X
    Matrix hidden;               // last hidden layer activations
    Matrix h_aug;                // hidden with the ones column appended
    Matrix logits;
};

inline ForwardStack forward_stack(const Network& net, const Matrix& X) {
    require(!net.layers.empty(), "forward: network has no hidden layers");
    require(X.cols() == net.input_dim, "forward: input dimension mismatch");
    const int n_layers = static_cast<int>(net.layers.size());
    ForwardStack s;
    s.inputs.resize(n_layers);
    Matrix h = X;
    for (int l = 0; l < n_layers; ++l) {
        s.inputs[l] = std::move(h);
        h = layer_forward(net.layers[l], s.inputs[l]);
        if (!h.allFinite()) throw NumericError("forward: non-finite activations", l);
    }
    s.hidden = std::move(h);
    require(net.output_weights.rows() == s.hidden.cols() + 1,
            "forward: output weight rows mismatch");
    s.h_aug = augment_ones(s.hidden);
    s.logits = s.h_aug * net.output_weights;
    if (!s.logits.allFinite()) throw NumericError("forward: non-finite logits");
    return s;
}

inline ForwardResult forward(const Network& net, const Matrix& X) {
    ForwardStack s = forward_stack(net, X);
    return {std::move(s.hidden), std::move(s.logits)};
}

struct BlockGrad {
    Matrix weights;
    Vector bias;
};

struct Gradients {
    std::vector<std::vector<BlockGrad>> layers;  // empty entries for layers below start_layer
    Matrix output_weights;
};

namespace detail {

// Gradient accumulation for one block, operator choice fixed at compile time.
// Each accumulator receives its contributions in the same order as the scalar
// definition (samples ascending for parameter gradients, neurons ascending
// for the propagated input gradient), so results match it exactly. Matrices
// are row-major: every per-sample access below walks a contiguous row.
template <typename Tag>
void block_backward_kernel(Tag, const GopBlock& block, const Matrix& input, const Matrix& dupper,
                           int col, bool propagate, Matrix* dinput, BlockGrad& bg) {
    const int n = static_cast<int>(input.rows());
    const int k = static_cast<int>(input.cols());
    const int width = block.width();
    const double* dup = dupper.data();
    const std::ptrdiff_t dup_stride = dupper.cols();
    std::vector<double> wj(k), y(k), dw(k), dx(k), pg(k), acc_w(k);
    for (int j = 0; j < width; ++j) {
        for (int c = 0; c < k; ++c) wj[c] = block.weights(c, j);
        const double bj = block.bias[j];
        double acc_b = 0.0;
        std::fill(acc_w.begin(), acc_w.end(), 0.0);
        for (int i = 0; i < n; ++i) {
            const double* xi = input.data() + static_cast<std::ptrdiff_t>(i) * k;
            for (int c = 0; c < k; ++c) {
                const NodalEval e = nodal_eval_t<Tag::nodal>(xi[c], wj[c]);
                y[c] = e.y;
                dw[c] = e.dw;
                dx[c] = e.dx;
            }
            const double z = pool_forward_t<Tag::pool>(std::span<const double>(y)) + bj;
            const double dz = dup[i * dup_stride + col + j] * activate_partial_t<Tag::act>(z);
            if (dz == 0.0) continue;
            acc_b += dz;
            pool_partials_t<Tag::pool>(y, pg);
            if (propagate) {
                double* di = dinput->data() + static_cast<std::ptrdiff_t>(i) * k;
                for (int c = 0; c < k; ++c) {
                    const double dy = dz * pg[c];
                    acc_w[c] += dy * dw[c];
                    di[c] += dy * dx[c];
                }
            } else {
                for (int c = 0; c < k; ++c) acc_w[c] += dz * pg[c] * dw[c];
            }
        }
        bg.bias[j] = acc_b;
        for (int c = 0; c < k; ++c) bg.weights(c, j) = acc_w[c];
    }
}

}  // namespace detail

// Gradients of the weighted MSE loss (1/N) sum_i s_i ||logits_i - Y_i||^2
// w.r.t. every parameter, evaluated from an already computed forward stack.
// `start_layer` limits the chain: gradients are produced for layers >=
// start_layer only, which covers block fine-tuning where earlier layers stay
// frozen. `only_block`, when non-negative, restricts the top layer's block
// gradients to that block (the others stay empty); it is only meaningful when
// start_layer is the last layer, where the skipped gradients feed nothing.
inline Gradients backward_from(const Network& net, const ForwardStack& stack, const Matrix& Y,
                               const Vector& sample_weights, int start_layer = 0,
                               int only_block = -1) {
    net.validate();
    const int n_layers = static_cast<int>(net.layers.size());
    require(static_cast<int>(stack.inputs.size()) == n_layers,
            "backward: forward stack layer count mismatch");
    const int n = static_cast<int>(stack.logits.rows());
    require(Y.rows() == n && Y.cols() == net.n_classes, "backward: target shape mismatch");
    require(sample_weights.size() == n, "backward: sample weight count mismatch");
    require(start_layer >= 0 && start_layer < n_layers, "backward: start_layer out of range");
    require(only_block < 0 || start_layer == n_layers - 1,
            "backward: only_block requires start_layer to be the last layer");

    // d loss / d logits
    Matrix dlogits = stack.logits - Y;
    for (int i = 0; i < n; ++i) dlogits.row(i) *= 2.0 * sample_weights[i] / n;

    Gradients grads;
    grads.layers.resize(n_layers);
    grads.output_weights = stack.h_aug.transpose() * dlogits;
    if (!grads.output_weights.allFinite())
        throw NumericError("backward: non-finite output gradient");

    // d loss / d hidden (bias row dropped)
    const int d_h = static_cast<int>(stack.hidden.cols());
    Matrix dupper = dlogits * net.output_weights.topRows(d_h).transpose();

    for (int l = n_layers - 1; l >= start_layer; --l) {
        const Matrix& input = stack.inputs[l];
        const int k = static_cast<int>(input.cols());
        const bool propagate = l > start_layer;
        Matrix dinput;
        if (propagate) dinput = Matrix::Zero(n, k);

        auto& layer_grads = grads.layers[l];
        layer_grads.resize(net.layers[l].blocks.size());

        int col = 0;
        for (std::size_t b = 0; b < net.layers[l].blocks.size(); ++b) {
            const GopBlock& block = net.layers[l].blocks[b];
            const int width = block.width();
            if (only_block >= 0 && l == start_layer && static_cast<int>(b) != only_block) {
                col += width;
                continue;
            }
            BlockGrad& bg = layer_grads[b];
            bg.weights = Matrix::Zero(k, width);
            bg.bias = Vector::Zero(width);
            dispatch_opset(block.opset, [&](auto tag) {
                detail::block_backward_kernel(tag, block, input, dupper, col, propagate,
                                              propagate ? &dinput : nullptr, bg);
            });
            if (!bg.weights.allFinite() || !bg.bias.allFinite())
                throw NumericError("backward: non-finite block gradient", l);
            col += width;
        }
        if (propagate) {
            if (!dinput.allFinite()) throw NumericError("backward: non-finite input gradient", l);
            dupper = std::move(dinput);
        }
    }
    return grads;
}

// Same gradients from raw inputs, running the forward pass internally.
inline Gradients backward(const Network& net, const Matrix& X, const Matrix& Y,
                          const Vector& sample_weights, int start_layer = 0) {
    net.validate();
    require(X.cols() == net.input_dim, "backward: input dimension mismatch");
    return backward_from(net, forward_stack(net, X), Y, sample_weights, start_layer);
}

// Predicted class per row, lowest index winning ties.
inline std::vector<int> predict_labels(const Matrix& logits) {
    std::vector<int> labels(logits.rows());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) labels[i] = argmax_row(logits, i);
    return labels;
}

}  // namespace gopnet
