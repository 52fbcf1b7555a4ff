#pragma once

// Progressive construction of the network. Each step searches every operator
// set for the best randomly initialized candidate block (ranked by the
// closed-form output solve), fine-tunes the winner with earlier blocks
// frozen, and keeps it only if the loss improves by a minimum relative rate.
// Depth grows the same way: a layer that fails to earn its keep is rolled
// back and the topology is frozen.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <fstream>
#include <functional>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "gopnet/data.hpp"
#include "gopnet/errors.hpp"
#include "gopnet/matrix.hpp"
#include "gopnet/network.hpp"
#include "gopnet/operators.hpp"
#include "gopnet/rng.hpp"
#include "gopnet/solver.hpp"
#include "gopnet/training.hpp"

namespace gopnet {

struct ProgressionConfig {
    int block_size = 40;
    int max_blocks_per_layer = 4;
    int max_layers = 8;
    double eps_block = 1e-2;  // minimum relative loss improvement for a block to stay
    double eps_layer = 1e-2;  // minimum relative loss improvement for a layer to stay
    double lambda = 1.0;      // ridge strength of the output solve
    double init_range = 1.0;  // candidate weights drawn from U(-init_range, init_range)
    std::uint64_t seed = 0;
    bool use_class_weights = true;
    int threads = 1;
    TrainConfig train{};
};

// Relative improvement (L_prev - L_cur) / L_prev below the threshold means
// the step failed to earn its keep. A non-positive or vanished previous loss
// leaves no room to improve, so it counts as converged.
inline bool improvement_below(double loss_prev, double loss_cur, double eps) {
    if (!(loss_prev > 0.0)) return true;
    return (loss_prev - loss_cur) / loss_prev < eps;
}

inline bool block_converged(double loss_prev, double loss_cur, double eps_block) {
    return improvement_below(loss_prev, loss_cur, eps_block);
}

inline bool layer_converged(double loss_prev, double loss_cur, double eps_layer) {
    return improvement_below(loss_prev, loss_cur, eps_layer);
}

// Inputs shared by all candidates of one search step.
struct SearchContext {
    const Matrix& layer_input;      // N x fan_in, input to the layer being grown
    const Matrix& existing_hidden;  // N x width_so_far (zero columns for a fresh layer)
    const Matrix& targets;
    const Vector& sample_weights;
    double lambda = 1.0;
    int block_size = 1;
    double init_range = 1.0;
};

struct CandidateResult {
    GopBlock block;          // randomly initialized, not fine-tuned
    Matrix output_weights;   // closed-form solve over existing + candidate hidden
    double loss = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

// Neuron-major draw order so a candidate's weights depend only on its own
// random stream.
inline GopBlock draw_block(const OperatorSet& opset, int fan_in, int width, double init_range,
                           Rng& rng) {
    GopBlock b;
    b.opset = opset;
    b.weights.resize(fan_in, width);
    for (int j = 0; j < width; ++j)
        for (int i = 0; i < fan_in; ++i) b.weights(i, j) = rng.uniform(-init_range, init_range);
    b.bias = Vector::Zero(width);
    return b;
}

}  // namespace detail

// Draws one candidate block for the given operator set and scores it by the
// weighted loss after the closed-form output solve. Numeric failures mark the
// candidate as discarded (NaN loss) rather than aborting the search.
inline CandidateResult evaluate_operator_set(const SearchContext& ctx, const OperatorSet& opset,
                                             Rng rng) {
    CandidateResult r;
    r.block = detail::draw_block(opset, static_cast<int>(ctx.layer_input.cols()), ctx.block_size,
                                 ctx.init_range, rng);
    Matrix hidden(ctx.layer_input.rows(), ctx.existing_hidden.cols() + ctx.block_size);
    hidden.leftCols(ctx.existing_hidden.cols()) = ctx.existing_hidden;
    hidden.rightCols(ctx.block_size) = block_forward(r.block, ctx.layer_input);
    try {
        const Matrix h_aug = augment_ones(hidden);
        r.output_weights = solve_output_weights(h_aug, ctx.targets, ctx.sample_weights, ctx.lambda);
        r.loss = weighted_mse(h_aug * r.output_weights, ctx.targets, ctx.sample_weights);
    } catch (const NumericError&) {
    } catch (const SingularityError&) {
    }
    return r;
}

// Test seam: lets a test replace the recorded loss of individual candidates
// (e.g. to force exact ties) without touching the search path itself.
struct SearchHooks {
    std::function<double(int opset_index, double loss)> loss_override;
};

struct SearchOutcome {
    int chosen = -1;
    std::vector<double> losses;  // one per operator set, NaN = discarded
    CandidateResult best;
};

// Scores every operator set with its own derived random stream (identical
// results for any thread count), then re-materializes the winner. Ties go to
// the lowest operator-set index.
inline SearchOutcome search_best_opset(const SearchContext& ctx, std::uint64_t seed,
                                       std::uint64_t step_index, int threads = 1,
                                       const SearchHooks& hooks = {}) {
    const auto opsets = enumerate_operator_sets();
    const int n = static_cast<int>(opsets.size());
    SearchOutcome out;
    out.losses.assign(n, std::numeric_limits<double>::quiet_NaN());

    auto eval_loss = [&](int i) {
        Rng rng = derive_rng(seed, step_index, static_cast<std::uint64_t>(i));
        return evaluate_operator_set(ctx, opsets[i], rng).loss;
    };

    const int workers = std::max(1, std::min(threads, n));
    if (workers == 1) {
        for (int i = 0; i < n; ++i) out.losses[i] = eval_loss(i);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(workers);
        for (int t = 0; t < workers; ++t) {
            pool.emplace_back([&, t] {
                try {
                    for (int i = t; i < n; i += workers) out.losses[i] = eval_loss(i);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    if (hooks.loss_override)
        for (int i = 0; i < n; ++i) out.losses[i] = hooks.loss_override(i, out.losses[i]);

    for (int i = 0; i < n; ++i) {
        const double l = out.losses[i];
        if (!std::isfinite(l)) continue;
        if (out.chosen < 0 || l < out.losses[out.chosen]) out.chosen = i;
    }
    if (out.chosen < 0) throw SearchError("candidate search: no operator set produced a finite loss");

    out.best = evaluate_operator_set(ctx, opsets[out.chosen],
                                     derive_rng(seed, step_index, static_cast<std::uint64_t>(out.chosen)));
    out.best.loss = out.losses[out.chosen];
    return out;
}

// One growth attempt, as recorded in the audit log.
struct StepRecord {
    int step = 0;
    int layer = 0;
    int block_index = 0;
    double baseline = std::numeric_limits<double>::quiet_NaN();  // loss before the block
    std::vector<double> candidate_losses;
    int chosen_opset = -1;
    double candidate_loss = std::numeric_limits<double>::quiet_NaN();  // before fine-tuning
    double loss_after = std::numeric_limits<double>::quiet_NaN();      // after fine-tune + solve
    bool accepted = false;
    int finetune_epochs = 0;
    bool finetune_diverged = false;
};

struct LayerRecord {
    int layer = 0;
    int accepted_blocks = 0;
    double baseline = std::numeric_limits<double>::quiet_NaN();  // loss when the layer started
    double loss_end = std::numeric_limits<double>::quiet_NaN();
    bool accepted = false;
};

struct FinetuneRecord {
    double initial_loss = std::numeric_limits<double>::quiet_NaN();
    double final_loss = std::numeric_limits<double>::quiet_NaN();
    bool diverged = false;
};

struct GrowResult {
    Network net;
    std::vector<StepRecord> steps;
    std::vector<LayerRecord> layers;
    FinetuneRecord finetune;
    double final_loss = std::numeric_limits<double>::quiet_NaN();
    bool warning = false;  // some fine-tuning phase stopped early on divergence
};

// Appends the best candidate block (opening a new layer when `new_layer`),
// fine-tunes only that block plus the output layer, then re-solves the output
// weights in closed form. Acceptance is decided by the caller.
inline StepRecord add_block(Network& net, bool new_layer, const Matrix& X, const Matrix& Y,
                            const Vector& sample_weights, const ProgressionConfig& cfg, int step,
                            const SearchHooks& hooks = {}) {
    StepRecord rec;
    rec.step = step;
    const int layer_index =
        new_layer ? static_cast<int>(net.layers.size()) : static_cast<int>(net.layers.size()) - 1;
    rec.layer = layer_index;
    rec.block_index = new_layer ? 0 : static_cast<int>(net.layers.back().blocks.size());

    const Matrix layer_input = forward_hidden(net, X, layer_index);
    const Matrix existing_hidden = new_layer
                                       ? Matrix(X.rows(), 0)
                                       : layer_forward(net.layers.back(), layer_input);
    SearchContext ctx{layer_input, existing_hidden, Y,          sample_weights,
                      cfg.lambda,  cfg.block_size,  cfg.init_range};
    SearchOutcome found = search_best_opset(ctx, cfg.seed, static_cast<std::uint64_t>(step),
                                            cfg.threads, hooks);
    rec.candidate_losses = found.losses;
    rec.chosen_opset = found.chosen;
    rec.candidate_loss = found.best.loss;

    if (new_layer) net.layers.push_back(HiddenLayer{});
    net.layers.back().blocks.push_back(found.best.block);
    net.output_weights = found.best.output_weights;

    TrainResult tuned = train(ParamSelector::block_and_output(layer_index, rec.block_index), net, X,
                              Y, sample_weights, cfg.train,
                              mix_u64(mix_u64(cfg.seed, 0xB10CFEEDull), static_cast<std::uint64_t>(step)),
                              /*recover_on_divergence=*/true);
    net = tuned.net;
    rec.finetune_epochs = static_cast<int>(tuned.epoch_losses.size());
    rec.finetune_diverged = tuned.diverged;

    const Matrix h_aug = augment_ones(forward_hidden(net, X));
    net.output_weights = solve_output_weights(h_aug, Y, sample_weights, cfg.lambda);
    rec.loss_after = weighted_mse(h_aug * net.output_weights, Y, sample_weights);
    return rec;
}

// Runs the full progression on a dataset: widen each layer until a block is
// rejected or the width cap is hit, deepen until a layer is rejected or the
// depth cap is hit, then fine-tune everything with the topology frozen.
inline GrowResult grow(const LabeledDataset& ds, const ProgressionConfig& cfg,
                       const SearchHooks& hooks = {}) {
    if (cfg.block_size < 1) throw DomainError("grow: block_size must be positive");
    if (cfg.max_blocks_per_layer < 1) throw DomainError("grow: max_blocks_per_layer must be positive");
    if (cfg.max_layers < 1) throw DomainError("grow: max_layers must be positive");
    if (cfg.lambda < 0.0) throw DomainError("grow: lambda must be non-negative");
    if (cfg.init_range <= 0.0) throw DomainError("grow: init_range must be positive");
    if (cfg.threads < 1) throw DomainError("grow: threads must be positive");
    ds.validate();

    const int n_classes = static_cast<int>(ds.Y.cols());
    const Vector sample_weights =
        cfg.use_class_weights ? class_weights(ds.labels, n_classes).per_sample
                              : uniform_weighting(static_cast<int>(ds.X.rows()), n_classes).per_sample;

    GrowResult out;
    out.net.input_dim = static_cast<int>(ds.X.cols());
    out.net.n_classes = n_classes;

    double current_loss = std::numeric_limits<double>::quiet_NaN();
    bool have_loss = false;
    int step = 0;
    bool stop = false;

    for (int layer = 0; layer < cfg.max_layers && !stop; ++layer) {
        const Network layer_snapshot = out.net;
        LayerRecord lrec;
        lrec.layer = layer;
        lrec.baseline = current_loss;

        for (int bi = 0; bi < cfg.max_blocks_per_layer; ++bi) {
            const Network block_snapshot = out.net;
            StepRecord rec = add_block(out.net, bi == 0, ds.X, ds.Y, sample_weights, cfg, step, hooks);
            ++step;
            rec.baseline = current_loss;
            // The very first block has no baseline to beat; afterwards a block
            // must improve the loss at the configured minimum relative rate.
            rec.accepted = !have_loss || !block_converged(current_loss, rec.loss_after, cfg.eps_block);
            out.warning = out.warning || rec.finetune_diverged;
            out.steps.push_back(rec);
            if (!rec.accepted) {
                out.net = block_snapshot;
                break;
            }
            current_loss = rec.loss_after;
            have_loss = true;
            ++lrec.accepted_blocks;
        }

        lrec.loss_end = current_loss;
        if (lrec.accepted_blocks == 0) {
            // A depth level that contributes nothing ends the progression.
            out.net = layer_snapshot;
            stop = true;
        } else if (layer > 0 && layer_converged(lrec.baseline, current_loss, cfg.eps_layer)) {
            // The whole layer failed to earn its keep: roll it back.
            out.net = layer_snapshot;
            current_loss = lrec.baseline;
            stop = true;
        } else {
            lrec.accepted = true;
        }
        out.layers.push_back(lrec);
    }

    // Topology is frozen; fine-tune every parameter, then restore the
    // closed-form output solve.
    out.finetune.initial_loss = current_loss;
    TrainResult tuned = train(ParamSelector::everything(), out.net, ds.X, ds.Y, sample_weights,
                              cfg.train, mix_u64(cfg.seed, 0xF17EA11ull),
                              /*recover_on_divergence=*/true);
    out.net = tuned.net;
    out.finetune.diverged = tuned.diverged;
    out.warning = out.warning || tuned.diverged;

    const Matrix h_aug = augment_ones(forward_hidden(out.net, ds.X));
    out.net.output_weights = solve_output_weights(h_aug, ds.Y, sample_weights, cfg.lambda);
    out.finetune.final_loss = weighted_mse(h_aug * out.net.output_weights, ds.Y, sample_weights);
    out.final_loss = out.finetune.final_loss;
    return out;
}

namespace detail {

inline nlohmann::json num_or_null(double v) {
    if (!std::isfinite(v)) return nullptr;
    return v;
}

inline nlohmann::json nums_or_nulls(const std::vector<double>& values) {
    nlohmann::json arr = nlohmann::json::array();
    for (double v : values) arr.push_back(num_or_null(v));
    return arr;
}

}  // namespace detail

// Chronological JSONL audit of every growth decision: one record per block
// attempt, one per depth level, one for the final fine-tune, one summary.
inline void export_audit(const GrowResult& result, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open audit log for writing: " + path);
    const auto opsets = enumerate_operator_sets();

    std::size_t next_step = 0;
    for (const LayerRecord& lrec : result.layers) {
        for (; next_step < result.steps.size() && result.steps[next_step].layer == lrec.layer;
             ++next_step) {
            const StepRecord& s = result.steps[next_step];
            nlohmann::json j;
            j["kind"] = "block";
            j["step"] = s.step;
            j["layer"] = s.layer;
            j["block"] = s.block_index;
            j["baseline"] = detail::num_or_null(s.baseline);
            j["candidate_losses"] = detail::nums_or_nulls(s.candidate_losses);
            j["chosen"] = s.chosen_opset >= 0 ? nlohmann::json(opset_label(opsets[s.chosen_opset]))
                                              : nlohmann::json(nullptr);
            j["chosen_index"] = s.chosen_opset;
            j["candidate_loss"] = detail::num_or_null(s.candidate_loss);
            j["loss_after"] = detail::num_or_null(s.loss_after);
            j["accepted"] = s.accepted;
            j["finetune_epochs"] = s.finetune_epochs;
            j["finetune_diverged"] = s.finetune_diverged;
            out << j.dump() << '\n';
        }
        nlohmann::json j;
        j["kind"] = "layer";
        j["layer"] = lrec.layer;
        j["accepted_blocks"] = lrec.accepted_blocks;
        j["baseline"] = detail::num_or_null(lrec.baseline);
        j["loss"] = detail::num_or_null(lrec.loss_end);
        j["accepted"] = lrec.accepted;
        out << j.dump() << '\n';
    }

    nlohmann::json jf;
    jf["kind"] = "finetune";
    jf["initial_loss"] = detail::num_or_null(result.finetune.initial_loss);
    jf["final_loss"] = detail::num_or_null(result.finetune.final_loss);
    jf["diverged"] = result.finetune.diverged;
    out << jf.dump() << '\n';

    nlohmann::json js;
    js["kind"] = "summary";
    js["final_loss"] = detail::num_or_null(result.final_loss);
    js["layers"] = result.net.layers.size();
    js["blocks_per_layer"] = nlohmann::json::array();
    for (const HiddenLayer& l : result.net.layers) js["blocks_per_layer"].push_back(l.blocks.size());
    js["warning"] = result.warning;
    out << js.dump() << '\n';
    if (!out) throw IoError("failed writing audit log: " + path);
}

}  // namespace gopnet
