#pragma once

// Gradient-descent fine-tuning: class-weighted MSE objective, step-decayed
// learning rate, a single active regularizer (decoupled weight decay or a
// per-neuron max-norm projection) and best-checkpoint tracking by training
// loss.

#include <cmath>
#include <string>
#include <vector>

#include "gopnet/errors.hpp"
#include "gopnet/matrix.hpp"
#include "gopnet/network.hpp"
#include "gopnet/rng.hpp"
#include "gopnet/solver.hpp"

namespace gopnet {

enum class RegularizerKind { WeightDecay, MaxNorm };

// Exactly one of the two is active, chosen by `kind`.
struct Regularizer {
    RegularizerKind kind = RegularizerKind::WeightDecay;
    double weight_decay = 1e-4;
    double max_norm = 3.0;

    static Regularizer decay(double coefficient) {
        return {RegularizerKind::WeightDecay, coefficient, 3.0};
    }
    static Regularizer norm_bound(double bound) {
        return {RegularizerKind::MaxNorm, 1e-4, bound};
    }
};

struct TrainConfig {
    int epochs = 300;
    double lr0 = 0.01;
    double lr_decay_factor = 0.1;
    int lr_decay_every = 100;
    Regularizer regularizer{};
    int batch_size = 0;  // 0 = full batch
};

// lr0 * factor^floor(epoch / every): piecewise constant, non-increasing.
inline double lr_at(int epoch, const TrainConfig& cfg) {
    if (epoch < 0) throw DomainError("lr_at: negative epoch");
    return cfg.lr0 * std::pow(cfg.lr_decay_factor, epoch / cfg.lr_decay_every);
}

// Which parameters a training phase may touch. The output layer is always
// included; everything else is either the whole network or one block.
struct ParamSelector {
    bool all = true;
    int layer = -1;
    int block = -1;

    static ParamSelector everything() { return {true, -1, -1}; }
    static ParamSelector block_and_output(int layer, int block) {
        return {false, layer, block};
    }
};

namespace detail {

template <typename Column>
void project_max_norm(Column&& column, double bound) {
    const double norm = column.norm();
    // Tolerant trigger keeps the projection exactly idempotent.
    if (norm > bound * (1.0 + 1e-12)) column *= bound / norm;
}

inline void check_finite_params(const GopBlock& b, int layer, int block) {
    if (!b.weights.allFinite() || !b.bias.allFinite())
        throw NumericError("non-finite update in layer " + std::to_string(layer) + " block " +
                               std::to_string(block),
                           layer);
}

inline void regularize_block(GopBlock& b, const Regularizer& reg, double lr) {
    if (reg.kind == RegularizerKind::WeightDecay) {
        b.weights -= (lr * reg.weight_decay) * b.weights;
        b.bias -= (lr * reg.weight_decay) * b.bias;
    } else {
        for (Eigen::Index j = 0; j < b.weights.cols(); ++j)
            project_max_norm(b.weights.col(j), reg.max_norm);
    }
}

inline void regularize_output(Matrix& w, const Regularizer& reg, double lr) {
    if (reg.kind == RegularizerKind::WeightDecay) {
        w -= (lr * reg.weight_decay) * w;
    } else {
        for (Eigen::Index j = 0; j < w.cols(); ++j) project_max_norm(w.col(j), reg.max_norm);
    }
}

// One gradient step plus regularization on the selected subset.
inline void apply_step(Network& net, const Gradients& grads, const ParamSelector& sel, double lr,
                       const Regularizer& reg) {
    if (sel.all) {
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            for (std::size_t b = 0; b < net.layers[l].blocks.size(); ++b) {
                GopBlock& blk = net.layers[l].blocks[b];
                const BlockGrad& g = grads.layers[l][b];
                blk.weights -= lr * g.weights;
                blk.bias -= lr * g.bias;
                regularize_block(blk, reg, lr);
                check_finite_params(blk, static_cast<int>(l), static_cast<int>(b));
            }
        }
    } else {
        GopBlock& blk = net.layers.at(sel.layer).blocks.at(sel.block);
        const BlockGrad& g = grads.layers.at(sel.layer).at(sel.block);
        blk.weights -= lr * g.weights;
        blk.bias -= lr * g.bias;
        regularize_block(blk, reg, lr);
        check_finite_params(blk, sel.layer, sel.block);
    }
    net.output_weights -= lr * grads.output_weights;
    regularize_output(net.output_weights, reg, lr);
    if (!net.output_weights.allFinite()) throw NumericError("non-finite update in output weights");
}

inline Matrix take_rows(const Matrix& m, const std::vector<int>& idx) {
    Matrix out(idx.size(), m.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) out.row(r) = m.row(idx[r]);
    return out;
}

}  // namespace detail

// One full pass over the data: full batch by default, otherwise seeded
// shuffled fixed-size batches.
inline void sgd_epoch(Network& net, const ParamSelector& sel, const Matrix& X, const Matrix& Y,
                      const Vector& sample_weights, const TrainConfig& cfg, int epoch,
                      Rng& batch_rng) {
    const double lr = lr_at(epoch, cfg);
    const int start_layer = sel.all ? 0 : sel.layer;
    const int n = static_cast<int>(X.rows());

    if (cfg.batch_size <= 0 || cfg.batch_size >= n) {
        Gradients grads = backward(net, X, Y, sample_weights, start_layer);
        detail::apply_step(net, grads, sel, lr, cfg.regularizer);
        return;
    }

    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    for (int i = n - 1; i > 0; --i)
        std::swap(order[i], order[batch_rng.index(static_cast<std::uint64_t>(i + 1))]);

    for (int begin = 0; begin < n; begin += cfg.batch_size) {
        const int end = std::min(begin + cfg.batch_size, n);
        std::vector<int> idx(order.begin() + begin, order.begin() + end);
        Matrix xb = detail::take_rows(X, idx);
        Matrix yb = detail::take_rows(Y, idx);
        Vector sb(idx.size());
        for (std::size_t r = 0; r < idx.size(); ++r) sb[r] = sample_weights[idx[r]];
        Gradients grads = backward(net, xb, yb, sb, start_layer);
        detail::apply_step(net, grads, sel, lr, cfg.regularizer);
    }
}

struct TrainResult {
    Network net;  // best checkpoint by training weighted loss
    std::vector<double> epoch_losses;
    double initial_loss = 0.0;
    double best_loss = 0.0;
    bool diverged = false;  // stopped early on a non-finite update (recovery mode)
};

// Runs `cfg.epochs` passes on the selected subset, returning the lowest-loss
// snapshot (the untouched starting point counts as a candidate). With
// `recover_on_divergence` a non-finite update ends the phase instead of
// throwing and the best snapshot so far is returned.
inline TrainResult train(const ParamSelector& sel, Network net, const Matrix& X, const Matrix& Y,
                         const Vector& sample_weights, const TrainConfig& cfg,
                         std::uint64_t batch_seed = 0, bool recover_on_divergence = false) {
    net.validate();
    const int n = static_cast<int>(X.rows());
    const bool full_batch = cfg.batch_size <= 0 || cfg.batch_size >= n;
    const int start_layer = sel.all ? 0 : sel.layer;
    const int top_layer = static_cast<int>(net.layers.size()) - 1;
    // When only the top layer's selected block is trainable, the other blocks'
    // gradients feed neither an update nor further propagation.
    const int only_block = (!sel.all && sel.layer == top_layer) ? sel.block : -1;

    TrainResult result;
    ForwardStack stack;  // reused by the next epoch's backward pass (full batch)
    if (full_batch) {
        stack = forward_stack(net, X);
        result.initial_loss = weighted_mse(stack.logits, Y, sample_weights);
    } else {
        result.initial_loss = weighted_mse(forward(net, X).logits, Y, sample_weights);
    }
    result.best_loss = result.initial_loss;
    result.net = net;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        try {
            if (full_batch) {
                Gradients grads =
                    backward_from(net, stack, Y, sample_weights, start_layer, only_block);
                detail::apply_step(net, grads, sel, lr_at(epoch, cfg), cfg.regularizer);
            } else {
                Rng batch_rng = derive_rng(batch_seed, 0xBA7C4u, static_cast<std::uint64_t>(epoch));
                sgd_epoch(net, sel, X, Y, sample_weights, cfg, epoch, batch_rng);
            }
        } catch (const NumericError&) {
            if (!recover_on_divergence) throw;
            result.diverged = true;
            break;
        }
        double loss;
        if (full_batch) {
            stack = forward_stack(net, X);
            loss = weighted_mse(stack.logits, Y, sample_weights);
        } else {
            loss = weighted_mse(forward(net, X).logits, Y, sample_weights);
        }
        result.epoch_losses.push_back(loss);
        if (loss < result.best_loss) {
            result.best_loss = loss;
            result.net = net;
        }
    }
    return result;
}

}  // namespace gopnet
