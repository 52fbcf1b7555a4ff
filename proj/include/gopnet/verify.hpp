#pragma once

// Runtime self-checks behind the `verify` CLI command: analytic derivatives
// against central finite differences, the closed-form output solve against an
// explicit matrix inverse, determinism of the growth procedure, and
// termination invariants. Each check reports pass/fail plus a short detail
// string instead of throwing.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "gopnet/data.hpp"
#include "gopnet/matrix.hpp"
#include "gopnet/model_io.hpp"
#include "gopnet/network.hpp"
#include "gopnet/operators.hpp"
#include "gopnet/progression.hpp"
#include "gopnet/rng.hpp"
#include "gopnet/solver.hpp"

namespace gopnet {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct VerifyOptions {
    std::uint64_t seed = 0x5EEDull;
    // Multiplies analytic derivatives before they are compared against finite
    // differences. Fault-injection seam: any value other than 1.0 must make
    // the derivative checks fail.
    double gradient_fault_scale = 1.0;
};

namespace detail {

inline bool close(double a, double b, double abs_tol, double rel_tol) {
    const double scale = std::max(std::abs(a), std::abs(b));
    return std::abs(a - b) <= std::max(abs_tol, rel_tol * scale);
}

// Layer / block / weights (storage order) / bias, then output weights. The
// gradient flattener below must walk in the same order.
template <typename Fn>
void for_each_parameter(Network& net, Fn&& fn) {
    for (auto& layer : net.layers)
        for (auto& block : layer.blocks) {
            for (Eigen::Index i = 0; i < block.weights.size(); ++i) fn(block.weights.data()[i]);
            for (Eigen::Index i = 0; i < block.bias.size(); ++i) fn(block.bias.data()[i]);
        }
    for (Eigen::Index i = 0; i < net.output_weights.size(); ++i) fn(net.output_weights.data()[i]);
}

inline std::vector<double> flatten_gradients(const Gradients& g) {
    std::vector<double> flat;
    for (const auto& layer : g.layers)
        for (const auto& block : layer) {
            flat.insert(flat.end(), block.weights.data(), block.weights.data() + block.weights.size());
            flat.insert(flat.end(), block.bias.data(), block.bias.data() + block.bias.size());
        }
    flat.insert(flat.end(), g.output_weights.data(),
                g.output_weights.data() + g.output_weights.size());
    return flat;
}

// Distance of the closest pre-activation (or pooled pair) to a point where
// the derivative convention would matter; finite differences are only
// meaningful away from those.
inline double kink_distance(const GopBlock& block, const Matrix& X) {
    double dist = std::numeric_limits<double>::infinity();
    const int fan_in = block.fan_in();
    std::vector<double> y(static_cast<std::size_t>(fan_in));
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
        for (int j = 0; j < block.width(); ++j) {
            for (int k = 0; k < fan_in; ++k)
                y[static_cast<std::size_t>(k)] =
                    nodal_forward(block.opset.nodal, X(r, k), block.weights(k, j));
            if (block.opset.pool == PoolOp::Max && fan_in > 1) {
                std::vector<double> sorted = y;
                std::sort(sorted.begin(), sorted.end());
                dist = std::min(dist, sorted[sorted.size() - 1] - sorted[sorted.size() - 2]);
            }
            const double z = pool_forward(block.opset.pool, y) + block.bias[j];
            if (block.opset.act == ActOp::Relu) dist = std::min(dist, std::abs(z));
            if (block.opset.act == ActOp::Lincut) dist = std::min(dist, std::abs(std::abs(z) - 1.0));
            // The clip of the exponential kernel is a kink in the weight.
            if (block.opset.nodal == NodalOp::Exp)
                for (int k = 0; k < fan_in; ++k)
                    dist = std::min(dist, std::abs(std::abs(X(r, k) * block.weights(k, j)) - kExpArgClip));
        }
    }
    return dist;
}

}  // namespace detail

// Nodal, pooling and activation derivatives against central differences at
// random smooth points.
inline CheckResult check_operator_derivatives(const VerifyOptions& opts) {
    CheckResult result{"operator-derivatives", true, ""};
    const double h = 1e-6;
    const double fault = opts.gradient_fault_scale;
    Rng rng = derive_rng(opts.seed, 0x0Dull);
    std::ostringstream bad;

    for (int n = 0; n < kNodalOpCount; ++n) {
        const NodalOp op = static_cast<NodalOp>(n);
        for (int trial = 0; trial < 16; ++trial) {
            const double x = rng.uniform(-2.0, 2.0);
            const double w = rng.uniform(-2.0, 2.0);
            const NodalPartials p = nodal_partials(op, x, w);
            const double fd_w = (nodal_forward(op, x, w + h) - nodal_forward(op, x, w - h)) / (2 * h);
            const double fd_x = (nodal_forward(op, x + h, w) - nodal_forward(op, x - h, w)) / (2 * h);
            if (!detail::close(p.dw * fault, fd_w, 1e-6, 1e-5) ||
                !detail::close(p.dx * fault, fd_x, 1e-6, 1e-5)) {
                result.passed = false;
                bad << " nodal:" << kNodalNames[n];
                break;
            }
        }
    }

    std::vector<double> y(5), dy(5), probe(5);
    for (int p = 0; p < kPoolOpCount; ++p) {
        const PoolOp op = static_cast<PoolOp>(p);
        bool ok = true;
        for (int trial = 0; trial < 16 && ok; ++trial) {
            for (auto& v : y) v = rng.uniform(-2.0, 2.0);
            if (op == PoolOp::Max) {  // keep the maximizer isolated
                std::vector<double> sorted = y;
                std::sort(sorted.begin(), sorted.end());
                if (sorted[4] - sorted[3] < 1e-3) continue;
            }
            pool_partials(op, y, dy);
            for (std::size_t k = 0; k < y.size(); ++k) {
                probe = y;
                probe[k] = y[k] + h;
                const double up = pool_forward(op, probe);
                probe[k] = y[k] - h;
                const double down = pool_forward(op, probe);
                if (!detail::close(dy[k] * fault, (up - down) / (2 * h), 1e-6, 1e-5)) ok = false;
            }
        }
        if (!ok) {
            result.passed = false;
            bad << " pool:" << kPoolNames[p];
        }
    }

    for (int a = 0; a < kActOpCount; ++a) {
        const ActOp op = static_cast<ActOp>(a);
        bool ok = true;
        for (int trial = 0; trial < 16 && ok; ++trial) {
            const double z = rng.uniform(-2.0, 2.0);
            if (op == ActOp::Relu && std::abs(z) < 1e-3) continue;
            if (op == ActOp::Lincut && std::abs(std::abs(z) - 1.0) < 1e-3) continue;
            const double fd = (activate(op, z + h) - activate(op, z - h)) / (2 * h);
            if (!detail::close(activate_partial(op, z) * fault, fd, 1e-6, 1e-5)) ok = false;
        }
        if (!ok) {
            result.passed = false;
            bad << " act:" << kActNames[a];
        }
    }

    result.detail = result.passed ? "all operator derivatives match finite differences"
                                  : "mismatch at" + bad.str();
    return result;
}

// Full backpropagation against central differences for every operator set,
// on a small network sampled away from derivative kinks.
inline CheckResult check_network_gradients(const VerifyOptions& opts) {
    CheckResult result{"network-gradients", true, ""};
    const double h = 1e-6;
    const int n_samples = 5, input_dim = 4, width = 3, n_classes = 2;
    std::ostringstream bad;
    int checked = 0;

    for (const OperatorSet& opset : enumerate_operator_sets()) {
        const int oi = opset_index(opset);
        Network net;
        Matrix X;
        bool found = false;
        for (std::uint64_t attempt = 0; attempt < 64 && !found; ++attempt) {
            Rng rng = derive_rng(opts.seed, 0x6Dull + attempt, static_cast<std::uint64_t>(oi));
            X.resize(n_samples, input_dim);
            for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.uniform(-1.0, 1.0);
            GopBlock block;
            block.opset = opset;
            block.weights.resize(input_dim, width);
            for (Eigen::Index i = 0; i < block.weights.size(); ++i)
                block.weights.data()[i] = rng.uniform(-1.0, 1.0);
            block.bias.resize(width);
            for (int j = 0; j < width; ++j) block.bias[j] = rng.uniform(-0.5, 0.5);
            net = Network{input_dim, n_classes, {HiddenLayer{{block}}}, Matrix()};
            net.output_weights.resize(width + 1, n_classes);
            for (Eigen::Index i = 0; i < net.output_weights.size(); ++i)
                net.output_weights.data()[i] = rng.uniform(-1.0, 1.0);
            found = detail::kink_distance(block, X) > 1e-3;
        }
        if (!found) continue;  // astronomically unlikely; just skip the set

        Matrix Y = Matrix::Zero(n_samples, n_classes);
        for (int i = 0; i < n_samples; ++i) Y(i, i % n_classes) = 1.0;
        const Vector s = Vector::Ones(n_samples);

        std::vector<double> analytic = detail::flatten_gradients(backward(net, X, Y, s));
        for (double& g : analytic) g *= opts.gradient_fault_scale;

        Network work = net;
        std::vector<double*> params;
        detail::for_each_parameter(work, [&](double& p) { params.push_back(&p); });
        bool ok = true;
        for (std::size_t k = 0; k < params.size(); ++k) {
            const double saved = *params[k];
            *params[k] = saved + h;
            const double up = weighted_mse(forward(work, X).logits, Y, s);
            *params[k] = saved - h;
            const double down = weighted_mse(forward(work, X).logits, Y, s);
            *params[k] = saved;
            const double fd = (up - down) / (2 * h);
            if (std::abs(analytic[k] - fd) > std::max(1e-7, 1e-5 * std::max(std::abs(analytic[k]), std::abs(fd))))
                ok = false;
        }
        ++checked;
        if (!ok) {
            result.passed = false;
            bad << ' ' << opset_label(opset);
        }
    }

    std::ostringstream msg;
    if (result.passed)
        msg << "backpropagation matches finite differences for " << checked << " operator sets";
    else
        msg << "gradient mismatch for" << bad.str();
    result.detail = msg.str();
    return result;
}

namespace detail {

// Straightforward Gauss-Jordan inverse, independent of the factorization the
// production solver uses.
inline Matrix gauss_jordan_inverse(Matrix a) {
    const Eigen::Index n = a.rows();
    Matrix inv = Matrix::Identity(n, n);
    for (Eigen::Index col = 0; col < n; ++col) {
        Eigen::Index pivot = col;
        for (Eigen::Index r = col + 1; r < n; ++r)
            if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
        if (a(pivot, col) == 0.0) throw SingularityError("gauss_jordan_inverse: singular matrix");
        a.row(col).swap(a.row(pivot));
        inv.row(col).swap(inv.row(pivot));
        const double d = a(col, col);
        a.row(col) /= d;
        inv.row(col) /= d;
        for (Eigen::Index r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = a(r, col);
            a.row(r) -= f * a.row(col);
            inv.row(r) -= f * inv.row(col);
        }
    }
    return inv;
}

}  // namespace detail

// Factorization-based output solve against the explicit normal-equation
// inverse on a random weighted problem.
inline CheckResult check_output_solver(const VerifyOptions& opts) {
    CheckResult result{"output-solver", true, ""};
    Rng rng = derive_rng(opts.seed, 0x501ull);
    const int n = 24, dh = 5, c = 3;
    Matrix hidden(n, dh);
    for (Eigen::Index i = 0; i < hidden.size(); ++i) hidden.data()[i] = rng.uniform(-1.0, 1.0);
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) labels[i] = static_cast<int>(rng.index(c));
    labels[0] = 0; labels[1] = 1; labels[2] = 2;  // every class present
    const Matrix targets = one_hot(labels, c);
    const Vector s = class_weights(labels, c).per_sample;
    const double lambda = 0.7;

    const Matrix h_aug = augment_ones(hidden);
    const Matrix solved = solve_output_weights(h_aug, targets, s, lambda);

    Matrix gram = h_aug.transpose() * s.asDiagonal() * h_aug;
    gram.diagonal().array() += lambda;
    const Matrix reference =
        detail::gauss_jordan_inverse(gram) * (h_aug.transpose() * s.asDiagonal() * targets);

    const double err = (solved - reference).cwiseAbs().maxCoeff();
    result.passed = err < 1e-8;
    std::ostringstream msg;
    msg << "max deviation from explicit inverse " << err;
    result.detail = msg.str();
    return result;
}

// Same seed must give bitwise-identical models, independent of thread count.
inline CheckResult check_determinism(const VerifyOptions& opts) {
    CheckResult result{"determinism", true, ""};
    LabeledDataset ds = synth_imbalanced({24, 10, 6}, 5, 3.0, opts.seed + 1);

    ProgressionConfig cfg;
    cfg.block_size = 4;
    cfg.max_blocks_per_layer = 2;
    cfg.max_layers = 2;
    cfg.seed = opts.seed;
    cfg.train.epochs = 8;

    const std::string a = model_to_json(grow(ds, cfg).net).dump();
    const std::string b = model_to_json(grow(ds, cfg).net).dump();
    cfg.threads = 3;
    const std::string c = model_to_json(grow(ds, cfg).net).dump();

    if (a != b) {
        result.passed = false;
        result.detail = "repeated runs with one seed differ";
    } else if (a != c) {
        result.passed = false;
        result.detail = "threaded search differs from serial search";
    } else {
        result.detail = "repeated and threaded runs are bitwise identical";
    }
    return result;
}

// Structural caps and the improvement-rate rule must hold on a real run.
inline CheckResult check_termination(const VerifyOptions& opts) {
    CheckResult result{"termination", true, ""};
    LabeledDataset ds = synth_imbalanced({30, 12, 8}, 6, 4.0, opts.seed + 2);

    ProgressionConfig cfg;
    cfg.block_size = 3;
    cfg.max_blocks_per_layer = 3;
    cfg.max_layers = 3;
    cfg.seed = opts.seed + 3;
    cfg.train.epochs = 10;

    const GrowResult r = grow(ds, cfg);
    std::ostringstream msg;

    if (static_cast<int>(r.net.layers.size()) > cfg.max_layers) {
        result.passed = false;
        msg << "depth cap exceeded;";
    }
    std::size_t accepted = 0;
    for (const HiddenLayer& layer : r.net.layers) {
        if (static_cast<int>(layer.blocks.size()) > cfg.max_blocks_per_layer) {
            result.passed = false;
            msg << "width cap exceeded;";
        }
        accepted += layer.blocks.size();
    }
    std::size_t recorded = 0;
    bool rates_ok = true;
    for (const StepRecord& s : r.steps) {
        if (!s.accepted) continue;
        ++recorded;
        if (std::isfinite(s.baseline) &&
            block_converged(s.baseline, s.loss_after, cfg.eps_block)) rates_ok = false;
    }
    // Accepted steps belonging to a later rolled-back layer are not in the
    // final topology, so recorded >= accepted.
    if (recorded < accepted) {
        result.passed = false;
        msg << "audit trail inconsistent with topology;";
    }
    if (!rates_ok) {
        result.passed = false;
        msg << "kept a block below the improvement threshold;";
    }
    if (result.passed) {
        msg << "stopped at " << r.net.layers.size() << " layer(s), " << accepted
            << " block(s) within caps";
    }
    result.detail = msg.str();
    return result;
}

inline std::vector<CheckResult> run_verification(const VerifyOptions& opts = {}) {
    return {check_operator_derivatives(opts), check_network_gradients(opts),
            check_output_solver(opts), check_determinism(opts), check_termination(opts)};
}

}  // namespace gopnet
