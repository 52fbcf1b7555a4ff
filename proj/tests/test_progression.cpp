#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <gopnet/data.hpp>
#include <gopnet/model_io.hpp>
#include <gopnet/progression.hpp>

using Catch::Approx;
using namespace gopnet;
namespace fs = std::filesystem;

namespace {

ProgressionConfig quick_config() {
    ProgressionConfig cfg;
    cfg.block_size = 4;
    cfg.max_blocks_per_layer = 2;
    cfg.max_layers = 2;
    cfg.seed = 31;
    cfg.train.epochs = 4;
    return cfg;
}

int manual_argmin(const std::vector<double>& losses) {
    int best = -1;
    for (int i = 0; i < static_cast<int>(losses.size()); ++i) {
        if (!std::isfinite(losses[i])) continue;
        if (best < 0 || losses[i] < losses[best]) best = i;
    }
    return best;
}

}  // namespace

TEST_CASE("relative improvement thresholds") {
    CHECK_FALSE(improvement_below(1.0, 0.98, 0.01));  // 2% improvement clears 1%
    CHECK(improvement_below(1.0, 0.999, 0.01));       // 0.1% does not
    CHECK(improvement_below(1.0, 1.05, 0.01));        // getting worse certainly does not
    CHECK(improvement_below(0.0, -1.0, 0.01));        // nothing left to improve
    CHECK(improvement_below(-2.0, -3.0, 0.01));
    CHECK(block_converged(1.0, 0.999, 0.01));
    CHECK(layer_converged(1.0, 0.98, 0.03));
}

TEST_CASE("candidate evaluation is deterministic and self-consistent") {
    const LabeledDataset ds = synth_imbalanced({12, 8}, 3, 2.0, 7);
    const Matrix existing(ds.X.rows(), 0);
    const Vector w = Vector::Ones(ds.X.rows());
    const SearchContext ctx{ds.X, existing, ds.Y, w, 1.0, 3, 1.0};

    const auto opsets = enumerate_operator_sets();
    for (int oi : {0, 37, 71}) {
        const CandidateResult a = evaluate_operator_set(ctx, opsets[oi], derive_rng(5, 1, oi));
        const CandidateResult b = evaluate_operator_set(ctx, opsets[oi], derive_rng(5, 1, oi));
        REQUIRE(std::isfinite(a.loss));
        CHECK(a.loss == b.loss);
        CHECK(a.block.weights == b.block.weights);
        CHECK(a.block.bias.isZero(0.0));  // candidates start with zero bias

        // The recorded loss is exactly the weighted error of the solved readout.
        Matrix hidden(ds.X.rows(), 3);
        hidden = block_forward(a.block, ds.X);
        const Matrix h_aug = augment_ones(hidden);
        CHECK(a.loss == weighted_mse(h_aug * a.output_weights, ds.Y, w));
    }
}

TEST_CASE("operator search scores every candidate and picks the argmin") {
    const LabeledDataset ds = synth_imbalanced({12, 8}, 3, 2.0, 7);
    const Matrix existing(ds.X.rows(), 0);
    const Vector w = Vector::Ones(ds.X.rows());
    const SearchContext ctx{ds.X, existing, ds.Y, w, 1.0, 3, 1.0};

    const SearchOutcome one = search_best_opset(ctx, 5, 1, 1);
    REQUIRE(one.losses.size() == 72);
    CHECK(one.chosen == manual_argmin(one.losses));
    CHECK(one.best.loss == one.losses[one.chosen]);

    // Thread count must not change any recorded loss or the winner.
    const SearchOutcome four = search_best_opset(ctx, 5, 1, 4);
    CHECK(four.chosen == one.chosen);
    for (int i = 0; i < 72; ++i) CHECK(four.losses[i] == one.losses[i]);
    CHECK(four.best.block.weights == one.best.block.weights);
}

TEST_CASE("forced ties resolve to the lowest operator index") {
    const LabeledDataset ds = synth_imbalanced({10, 6}, 3, 2.0, 11);
    const Matrix existing(ds.X.rows(), 0);
    const Vector w = Vector::Ones(ds.X.rows());
    const SearchContext ctx{ds.X, existing, ds.Y, w, 1.0, 2, 1.0};

    SearchHooks all_equal;
    all_equal.loss_override = [](int, double) { return 0.5; };
    CHECK(search_best_opset(ctx, 5, 1, 1, all_equal).chosen == 0);
    CHECK(search_best_opset(ctx, 5, 1, 4, all_equal).chosen == 0);

    SearchHooks two_way;
    two_way.loss_override = [](int oi, double) { return (oi == 10 || oi == 30) ? 0.5 : 1.0; };
    CHECK(search_best_opset(ctx, 5, 1, 1, two_way).chosen == 10);
    CHECK(search_best_opset(ctx, 5, 1, 4, two_way).chosen == 10);
}

TEST_CASE("search fails cleanly when every candidate is discarded") {
    const LabeledDataset ds = synth_imbalanced({10, 6}, 3, 2.0, 11);
    const Matrix existing(ds.X.rows(), 0);
    const Vector w = Vector::Ones(ds.X.rows());
    const SearchContext ctx{ds.X, existing, ds.Y, w, 1.0, 2, 1.0};

    SearchHooks poison;
    poison.loss_override = [](int, double) { return std::numeric_limits<double>::quiet_NaN(); };
    CHECK_THROWS_AS(search_best_opset(ctx, 5, 1, 1, poison), SearchError);
}

TEST_CASE("appending a block leaves earlier blocks untouched") {
    const LabeledDataset ds = synth_imbalanced({16, 10, 6}, 4, 2.5, 13);
    const Vector w = class_weights(ds.labels, 3).per_sample;
    ProgressionConfig cfg = quick_config();

    Network net;
    net.input_dim = 4;
    net.n_classes = 3;

    const StepRecord first = add_block(net, true, ds.X, ds.Y, w, cfg, 0);
    CHECK(first.layer == 0);
    CHECK(first.block_index == 0);
    REQUIRE(first.candidate_losses.size() == 72);
    CHECK(first.chosen_opset == manual_argmin(first.candidate_losses));
    CHECK(std::isfinite(first.loss_after));
    CHECK(first.finetune_epochs == cfg.train.epochs);
    REQUIRE(net.layers.size() == 1);
    REQUIRE(net.layers[0].blocks.size() == 1);

    const Matrix frozen_weights = net.layers[0].blocks[0].weights;
    const Vector frozen_bias = net.layers[0].blocks[0].bias;

    const StepRecord second = add_block(net, false, ds.X, ds.Y, w, cfg, 1);
    CHECK(second.layer == 0);
    CHECK(second.block_index == 1);
    REQUIRE(net.layers[0].blocks.size() == 2);
    // Fine-tuning a new block must not move any parameter of the old one.
    CHECK(net.layers[0].blocks[0].weights == frozen_weights);
    CHECK(net.layers[0].blocks[0].bias == frozen_bias);
}

TEST_CASE("growth respects the configured caps") {
    const LabeledDataset ds = synth_imbalanced({24, 10, 6}, 5, 3.0, 21);
    const ProgressionConfig cfg = quick_config();
    const GrowResult result = grow(ds, cfg);

    CHECK(static_cast<int>(result.net.layers.size()) <= cfg.max_layers);
    for (const HiddenLayer& l : result.net.layers) {
        CHECK(static_cast<int>(l.blocks.size()) <= cfg.max_blocks_per_layer);
        for (const GopBlock& b : l.blocks) CHECK(b.weights.cols() == cfg.block_size);
    }
    REQUIRE(!result.net.layers.empty());  // the first block is always kept
    CHECK(result.steps.front().accepted);
    CHECK(std::isfinite(result.final_loss));
    CHECK_NOTHROW(result.net.validate());

    // Rejected steps never contribute a block to the final topology.
    int accepted_steps = 0;
    for (const StepRecord& s : result.steps) accepted_steps += s.accepted ? 1 : 0;
    int kept_blocks = 0;
    for (const HiddenLayer& l : result.net.layers) kept_blocks += static_cast<int>(l.blocks.size());
    CHECK(kept_blocks <= accepted_steps);
}

TEST_CASE("growth is reproducible and thread-count invariant") {
    const LabeledDataset ds = synth_imbalanced({24, 10, 6}, 5, 3.0, 21);
    ProgressionConfig cfg = quick_config();

    const GrowResult a = grow(ds, cfg);
    const GrowResult b = grow(ds, cfg);
    CHECK(model_to_json(a.net).dump() == model_to_json(b.net).dump());
    REQUIRE(a.steps.size() == b.steps.size());
    for (std::size_t i = 0; i < a.steps.size(); ++i)
        CHECK(a.steps[i].chosen_opset == b.steps[i].chosen_opset);

    cfg.threads = 3;
    const GrowResult c = grow(ds, cfg);
    REQUIRE(c.steps.size() == a.steps.size());
    for (std::size_t i = 0; i < a.steps.size(); ++i)
        CHECK(c.steps[i].chosen_opset == a.steps[i].chosen_opset);
    REQUIRE(c.net.layers.size() == a.net.layers.size());
    for (std::size_t l = 0; l < a.net.layers.size(); ++l) {
        REQUIRE(c.net.layers[l].blocks.size() == a.net.layers[l].blocks.size());
        for (std::size_t k = 0; k < a.net.layers[l].blocks.size(); ++k) {
            CHECK(c.net.layers[l].blocks[k].opset.nodal == a.net.layers[l].blocks[k].opset.nodal);
            CHECK(c.net.layers[l].blocks[k].opset.pool == a.net.layers[l].blocks[k].opset.pool);
            CHECK(c.net.layers[l].blocks[k].opset.act == a.net.layers[l].blocks[k].opset.act);
        }
    }
}

TEST_CASE("class weighting is optional") {
    const LabeledDataset ds = synth_imbalanced({30, 6}, 4, 1.5, 9);
    ProgressionConfig cfg = quick_config();
    const GrowResult weighted = grow(ds, cfg);
    cfg.use_class_weights = false;
    const GrowResult plain = grow(ds, cfg);
    CHECK(std::isfinite(plain.final_loss));
    // The weighting changes the solved readout, so the models differ.
    CHECK(model_to_json(weighted.net).dump() != model_to_json(plain.net).dump());
}

TEST_CASE("audit log is chronological JSONL") {
    const LabeledDataset ds = synth_imbalanced({24, 10, 6}, 5, 3.0, 21);
    const GrowResult result = grow(ds, quick_config());
    const fs::path dir = fs::temp_directory_path() / "gopnet_progression_tests";
    fs::create_directories(dir);
    const fs::path p = dir / "audit.jsonl";
    export_audit(result, p.string());

    std::ifstream in(p);
    std::vector<nlohmann::json> records;
    for (std::string line; std::getline(in, line);) {
        REQUIRE(!line.empty());
        records.push_back(nlohmann::json::parse(line));  // every line parses alone
    }
    REQUIRE(records.size() >= 3);

    CHECK(records.front().at("kind") == "block");
    CHECK(records.front().at("baseline").is_null());  // nothing to compare against yet
    CHECK(records.front().at("candidate_losses").size() == 72);
    CHECK(records.back().at("kind") == "summary");
    CHECK(records[records.size() - 2].at("kind") == "finetune");

    int last_step = -1;
    int block_records = 0;
    for (const auto& r : records) {
        if (r.at("kind") != "block") continue;
        ++block_records;
        const int s = r.at("step").get<int>();
        CHECK(s == last_step + 1);  // chronological, no gaps
        last_step = s;
    }
    CHECK(block_records == static_cast<int>(result.steps.size()));

    const auto& summary = records.back();
    CHECK(summary.at("final_loss").get<double>() == Approx(result.final_loss));
    CHECK(summary.at("layers").get<int>() == static_cast<int>(result.net.layers.size()));
}

TEST_CASE("invalid progression configurations are rejected") {
    const LabeledDataset ds = synth_imbalanced({10, 6}, 3, 2.0, 11);
    ProgressionConfig cfg = quick_config();
    cfg.block_size = 0;
    CHECK_THROWS_AS(grow(ds, cfg), DomainError);
    cfg = quick_config();
    cfg.max_blocks_per_layer = 0;
    CHECK_THROWS_AS(grow(ds, cfg), DomainError);
    cfg = quick_config();
    cfg.max_layers = 0;
    CHECK_THROWS_AS(grow(ds, cfg), DomainError);
    cfg = quick_config();
    cfg.lambda = -1.0;
    CHECK_THROWS_AS(grow(ds, cfg), DomainError);
    cfg = quick_config();
    cfg.init_range = 0.0;
    CHECK_THROWS_AS(grow(ds, cfg), DomainError);
    cfg = quick_config();
    cfg.threads = 0;
    CHECK_THROWS_AS(grow(ds, cfg), DomainError);
}
