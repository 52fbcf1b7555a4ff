// Command-line front end: dataset synthesis, progressive training, anchored
// forward cross-validation, batch prediction and the built-in self-checks.
//
// Exit codes: 0 success, 1 failed verification checks, 2 input/usage errors,
// 3 numeric failures.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <gopnet/gopnet.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Everything a training run can configure, resolved from defaults, an
// optional JSON config file and command-line flags (flags win).
struct RunConfig {
    std::uint64_t seed = 0;
    int block_size = 40;
    int max_blocks = 4;
    int max_layers = 8;
    double eps_block = 1e-2;
    double eps_layer = 1e-2;
    double lambda = 1.0;
    double init_range = 1.0;
    int epochs = 300;
    double lr0 = 0.01;
    double lr_decay_factor = 0.1;
    int lr_decay_every = 100;
    int batch_size = 0;
    std::string regularizer = "decay";  // "decay" or "maxnorm"
    double weight_decay = 1e-4;
    double max_norm = 3.0;
    bool class_weights = true;
    bool standardize = true;
    int threads = 1;
    int folds = 9;
    int horizon = 10;
    int classes = 3;
};

gopnet::ProgressionConfig to_progression(const RunConfig& rc) {
    gopnet::ProgressionConfig cfg;
    cfg.block_size = rc.block_size;
    cfg.max_blocks_per_layer = rc.max_blocks;
    cfg.max_layers = rc.max_layers;
    cfg.eps_block = rc.eps_block;
    cfg.eps_layer = rc.eps_layer;
    cfg.lambda = rc.lambda;
    cfg.init_range = rc.init_range;
    cfg.seed = rc.seed;
    cfg.use_class_weights = rc.class_weights;
    cfg.threads = rc.threads;
    cfg.train.epochs = rc.epochs;
    cfg.train.lr0 = rc.lr0;
    cfg.train.lr_decay_factor = rc.lr_decay_factor;
    cfg.train.lr_decay_every = rc.lr_decay_every;
    cfg.train.batch_size = rc.batch_size;
    cfg.train.regularizer = rc.regularizer == "maxnorm"
                                ? gopnet::Regularizer::norm_bound(rc.max_norm)
                                : gopnet::Regularizer::decay(rc.weight_decay);
    return cfg;
}

json run_config_json(const RunConfig& rc) {
    return json{{"seed", rc.seed},
                {"block_size", rc.block_size},
                {"max_blocks", rc.max_blocks},
                {"max_layers", rc.max_layers},
                {"eps_block", rc.eps_block},
                {"eps_layer", rc.eps_layer},
                {"lambda", rc.lambda},
                {"init_range", rc.init_range},
                {"epochs", rc.epochs},
                {"lr0", rc.lr0},
                {"lr_decay_factor", rc.lr_decay_factor},
                {"lr_decay_every", rc.lr_decay_every},
                {"batch_size", rc.batch_size},
                {"regularizer", rc.regularizer},
                {"weight_decay", rc.weight_decay},
                {"max_norm", rc.max_norm},
                {"class_weights", rc.class_weights},
                {"standardize", rc.standardize},
                {"threads", rc.threads},
                {"folds", rc.folds},
                {"horizon", rc.horizon},
                {"classes", rc.classes}};
}

// Source file layout shared by grow/eval/predict.
struct DataArgs {
    std::string data_path;
    std::string labels_path;
    bool day_column = false;
    int label_columns = 1;
};

void add_data_options(CLI::App* cmd, DataArgs& da) {
    cmd->add_option("data", da.data_path, "delimited sample file")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--labels", da.labels_path, "separate label file (one row per sample)")
        ->check(CLI::ExistingFile);
    cmd->add_flag("--day-column", da.day_column, "first column is a day tag");
    cmd->add_option("--label-columns", da.label_columns,
                    "number of trailing label columns (horizon selects one)")
        ->capture_default_str();
}

void add_hyper_options(CLI::App* cmd, RunConfig& rc, std::string& config_path) {
    cmd->add_option("--config", config_path,
                    "JSON config file; explicit command-line flags take precedence")
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", rc.seed, "base random seed")->capture_default_str();
    cmd->add_option("--block-size", rc.block_size, "neurons added per block")->capture_default_str();
    cmd->add_option("--max-blocks", rc.max_blocks, "width cap per layer, in blocks")
        ->capture_default_str();
    cmd->add_option("--max-layers", rc.max_layers, "depth cap")->capture_default_str();
    cmd->add_option("--eps-block", rc.eps_block,
                    "minimum relative loss improvement for a block to be kept")
        ->capture_default_str();
    cmd->add_option("--eps-layer", rc.eps_layer,
                    "minimum relative loss improvement for a layer to be kept")
        ->capture_default_str();
    cmd->add_option("--lambda", rc.lambda, "ridge strength of the output solve")
        ->capture_default_str();
    cmd->add_option("--init-range", rc.init_range, "candidate weights drawn from U(-r, r)")
        ->capture_default_str();
    cmd->add_option("--epochs", rc.epochs, "fine-tuning epochs per phase")->capture_default_str();
    cmd->add_option("--lr0", rc.lr0, "initial learning rate")->capture_default_str();
    cmd->add_option("--lr-decay-factor", rc.lr_decay_factor, "learning-rate decay multiplier")
        ->capture_default_str();
    cmd->add_option("--lr-decay-every", rc.lr_decay_every, "epochs between learning-rate decays")
        ->capture_default_str();
    cmd->add_option("--batch-size", rc.batch_size, "mini-batch size (0 = full batch)")
        ->capture_default_str();
    cmd->add_option("--regularizer", rc.regularizer, "fine-tuning regularizer")
        ->check(CLI::IsMember({"decay", "maxnorm"}))
        ->capture_default_str();
    cmd->add_option("--weight-decay", rc.weight_decay, "decoupled weight-decay coefficient")
        ->capture_default_str();
    cmd->add_option("--max-norm", rc.max_norm, "per-neuron weight norm bound")
        ->capture_default_str();
    cmd->add_flag("--class-weights,!--no-class-weights", rc.class_weights,
                  "weight samples inversely to class frequency");
    cmd->add_flag("--standardize,!--no-standardize", rc.standardize,
                  "standardize features on the training split");
    cmd->add_option("--threads", rc.threads, "worker threads for the candidate search")
        ->capture_default_str();
    cmd->add_option("--folds", rc.folds, "anchored folds for eval")->capture_default_str();
    cmd->add_option("--horizon", rc.horizon, "prediction horizon selecting the label column")
        ->capture_default_str();
    cmd->add_option("--classes", rc.classes, "number of classes")->capture_default_str();
}

// Config-file values fill in whatever the command line left untouched.
void merge_config_file(CLI::App* cmd, const std::string& path, RunConfig& rc) {
    if (path.empty()) return;
    std::ifstream in(path);
    if (!in) throw gopnet::IoError("cannot open config file: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw gopnet::ParseError("config: " + std::string(e.what()));
    }
    if (!j.is_object()) throw gopnet::ParseError("config: top level must be an object");

    static const std::set<std::string> known = {
        "seed",        "block_size",      "max_blocks",    "max_layers", "eps_block",
        "eps_layer",   "lambda",          "init_range",    "epochs",     "lr0",
        "lr_decay_factor", "lr_decay_every", "batch_size", "regularizer", "weight_decay",
        "max_norm",    "class_weights",   "standardize",   "threads",    "folds",
        "horizon",     "classes"};
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) throw gopnet::ParseError("config: unknown key '" + key + "'");

    auto take = [&](const char* flag, const char* key, auto& target) {
        if (cmd->count(flag) == 0 && j.contains(key)) {
            try {
                target = j.at(key).get<std::decay_t<decltype(target)>>();
            } catch (const json::exception&) {
                throw gopnet::ParseError(std::string("config: bad value for '") + key + "'");
            }
        }
    };
    take("--seed", "seed", rc.seed);
    take("--block-size", "block_size", rc.block_size);
    take("--max-blocks", "max_blocks", rc.max_blocks);
    take("--max-layers", "max_layers", rc.max_layers);
    take("--eps-block", "eps_block", rc.eps_block);
    take("--eps-layer", "eps_layer", rc.eps_layer);
    take("--lambda", "lambda", rc.lambda);
    take("--init-range", "init_range", rc.init_range);
    take("--epochs", "epochs", rc.epochs);
    take("--lr0", "lr0", rc.lr0);
    take("--lr-decay-factor", "lr_decay_factor", rc.lr_decay_factor);
    take("--lr-decay-every", "lr_decay_every", rc.lr_decay_every);
    take("--batch-size", "batch_size", rc.batch_size);
    take("--regularizer", "regularizer", rc.regularizer);
    take("--weight-decay", "weight_decay", rc.weight_decay);
    take("--max-norm", "max_norm", rc.max_norm);
    take("--class-weights", "class_weights", rc.class_weights);
    take("--standardize", "standardize", rc.standardize);
    take("--threads", "threads", rc.threads);
    take("--folds", "folds", rc.folds);
    take("--horizon", "horizon", rc.horizon);
    take("--classes", "classes", rc.classes);
    if (rc.regularizer != "decay" && rc.regularizer != "maxnorm")
        throw gopnet::ParseError("config: regularizer must be 'decay' or 'maxnorm'");
}

gopnet::LabeledDataset load_from_args(const DataArgs& da, const RunConfig& rc) {
    gopnet::LoadOptions opts;
    opts.labels_path = da.labels_path;
    opts.day_column = da.day_column;
    opts.n_label_columns = da.label_columns;
    opts.horizon = rc.horizon;
    opts.n_classes = rc.classes;
    return gopnet::load_dataset(da.data_path, opts);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw gopnet::IoError("cannot open file for writing: " + path.string());
    out << text;
    if (!out) throw gopnet::IoError("failed writing file: " + path.string());
}

void write_run_config(const fs::path& dir, const RunConfig& rc) {
    write_text(dir / "run_config.json", run_config_json(rc).dump(2) + "\n");
}

std::string topology_string(const gopnet::Network& net) {
    std::string s;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        if (l) s += " -> ";
        s += std::to_string(net.layers[l].blocks.size()) + " block(s)/" +
             std::to_string(net.layers[l].width()) + " neuron(s)";
    }
    return s.empty() ? "(empty)" : s;
}

gopnet::MacroScores score_dataset(const gopnet::Network& net, const gopnet::LabeledDataset& ds) {
    const auto predicted = gopnet::predict_labels(gopnet::forward(net, ds.X).logits);
    return gopnet::macro_scores(gopnet::confusion(ds.labels, predicted, ds.n_classes()));
}

json scores_json(const gopnet::MacroScores& m) {
    return json{{"accuracy", m.accuracy},
                {"precision", m.precision},
                {"recall", m.recall},
                {"f1", m.f1}};
}

int cmd_synth(const std::string& out_path, std::vector<int> per_class, int dim, double separation,
              int days, std::uint64_t seed) {
    const gopnet::LabeledDataset ds = gopnet::synth_imbalanced(per_class, dim, separation, seed, days);
    gopnet::save_dataset(ds, out_path);
    std::cout << "wrote " << ds.n() << " samples (" << ds.dim() << " features, "
              << ds.n_classes() << " classes, " << days << " day(s)) to " << out_path << "\n";
    return 0;
}

int cmd_grow(const DataArgs& da, const RunConfig& rc, const std::string& out_dir) {
    gopnet::LabeledDataset ds = load_from_args(da, rc);
    std::optional<gopnet::Standardizer> st;
    if (rc.standardize) {
        st = gopnet::fit_standardizer(ds.X);
        ds.X = gopnet::apply(*st, ds.X);
    }

    const gopnet::GrowResult result = gopnet::grow(ds, to_progression(rc));

    const fs::path dir(out_dir);
    fs::create_directories(dir);
    gopnet::save_model((dir / "model.json").string(), result.net, st);
    gopnet::export_audit(result, (dir / "audit.jsonl").string());
    write_run_config(dir, rc);

    for (const gopnet::StepRecord& s : result.steps) {
        const auto opsets = gopnet::enumerate_operator_sets();
        std::cout << "step " << s.step << ": layer " << s.layer << " block " << s.block_index
                  << " [" << gopnet::opset_label(opsets[s.chosen_opset]) << "] loss "
                  << s.loss_after << (s.accepted ? "" : " (rejected)") << "\n";
    }
    std::cout << "topology: " << topology_string(result.net) << "\n";
    std::cout << "final training loss: " << result.final_loss << "\n";
    if (result.warning)
        std::cerr << "warning: a fine-tuning phase diverged; kept the best checkpoint\n";

    std::cout << gopnet::format_report({{"train", score_dataset(result.net, ds)}});
    std::cout << "model written to " << (dir / "model.json").string() << "\n";
    return 0;
}

int cmd_eval(const DataArgs& da, const RunConfig& rc, const std::string& out_dir) {
    const gopnet::LabeledDataset ds = load_from_args(da, rc);
    const auto folds = gopnet::anchored_folds(ds, rc.folds);

    std::vector<std::pair<std::string, gopnet::MacroScores>> rows;
    json jfolds = json::array();
    for (std::size_t k = 0; k < folds.size(); ++k) {
        gopnet::LabeledDataset train_ds = gopnet::subset_by_days(ds, folds[k].train_days);
        gopnet::LabeledDataset test_ds = gopnet::subset_by_days(ds, {folds[k].test_day});

        std::optional<gopnet::Standardizer> st;
        if (rc.standardize) {
            st = gopnet::fit_standardizer(train_ds.X);
            train_ds.X = gopnet::apply(*st, train_ds.X);
            test_ds.X = gopnet::apply(*st, test_ds.X);
        }

        const gopnet::GrowResult r = gopnet::grow(train_ds, to_progression(rc));
        const gopnet::MacroScores m = score_dataset(r.net, test_ds);
        rows.emplace_back("fold " + std::to_string(k + 1), m);
        std::cout << "fold " << k + 1 << ": trained on " << folds[k].train_days.size()
                  << " day(s), tested on day " << folds[k].test_day << ", accuracy " << m.accuracy
                  << ", f1 " << m.f1 << "\n";

        json jf = scores_json(m);
        jf["fold"] = k + 1;
        jf["test_day"] = folds[k].test_day;
        jf["layers"] = r.net.layers.size();
        json blocks = json::array();
        for (const auto& layer : r.net.layers) blocks.push_back(layer.blocks.size());
        jf["blocks_per_layer"] = blocks;
        jfolds.push_back(jf);
    }

    gopnet::MacroScores mean;
    for (const auto& [name, m] : rows) {
        mean.accuracy += m.accuracy / rows.size();
        mean.precision += m.precision / rows.size();
        mean.recall += m.recall / rows.size();
        mean.f1 += m.f1 / rows.size();
    }

    std::cout << gopnet::format_report(rows);

    const fs::path dir(out_dir);
    fs::create_directories(dir);
    json report{{"horizon", rc.horizon}, {"folds", jfolds}, {"mean", scores_json(mean)}};
    write_text(dir / "report.json", report.dump(2) + "\n");
    write_run_config(dir, rc);
    std::cout << "report written to " << (dir / "report.json").string() << "\n";
    return 0;
}

// Feature-only loader for prediction inputs without label columns.
gopnet::Matrix load_feature_matrix(const std::string& path, bool day_column) {
    const auto rows = gopnet::detail::read_rows(path);
    if (rows.empty()) throw gopnet::ParseError("empty data file: " + path);
    const std::size_t skip = day_column ? 1 : 0;
    const std::size_t width = rows.front().second.size();
    gopnet::Matrix X(rows.size(), width - skip);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& [line_no, tokens] = rows[i];
        if (tokens.size() != width)
            throw gopnet::ParseError::at(path, line_no, "ragged row: expected " +
                                                            std::to_string(width) + " columns");
        for (std::size_t c = skip; c < tokens.size(); ++c)
            X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c - skip)) =
                gopnet::detail::parse_number(tokens[c], path, line_no, static_cast<long>(c + 1));
    }
    return X;
}

int cmd_predict(const std::string& model_path, const DataArgs& da, const RunConfig& rc,
                bool no_labels, const std::string& out_path) {
    const gopnet::LoadedModel model = gopnet::load_model(model_path);

    gopnet::Matrix X;
    std::optional<gopnet::LabeledDataset> ds;
    if (no_labels) {
        X = load_feature_matrix(da.data_path, da.day_column);
    } else {
        ds = load_from_args(da, rc);
        X = ds->X;
    }
    if (model.standardizer) X = gopnet::apply(*model.standardizer, X);

    const std::vector<int> predicted = gopnet::predict_labels(gopnet::forward(model.net, X).logits);

    std::string text;
    for (int label : predicted) text += std::to_string(label) + "\n";
    if (out_path.empty() || out_path == "-")
        std::cout << text;
    else
        write_text(out_path, text);

    if (ds) {
        const gopnet::MacroScores m = gopnet::macro_scores(
            gopnet::confusion(ds->labels, predicted, static_cast<int>(model.net.n_classes)));
        std::cerr << gopnet::format_report({{"predict", m}});
    }
    return 0;
}

int cmd_verify(std::uint64_t seed, double fault_scale) {
    gopnet::VerifyOptions opts;
    opts.seed = seed;
    opts.gradient_fault_scale = fault_scale;
    bool all_passed = true;
    for (const gopnet::CheckResult& r : gopnet::run_verification(opts)) {
        std::cout << (r.passed ? "[PASS] " : "[FAIL] ") << r.name << ": " << r.detail << "\n";
        all_passed = all_passed && r.passed;
    }
    std::cout << (all_passed ? "verification passed" : "verification FAILED") << "\n";
    return all_passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"progressively grown heterogeneous operational networks"};
    app.require_subcommand(1);

    RunConfig rc;
    DataArgs da;
    std::string config_path, out_dir = ".", model_path, predict_out;
    bool no_labels = false;

    // synth
    std::string synth_out;
    std::vector<int> per_class = {300, 60, 40};
    int synth_dim = 20, synth_days = 10;
    double separation = 2.5;
    std::uint64_t synth_seed = 42;
    CLI::App* synth = app.add_subcommand("synth", "generate an imbalanced synthetic dataset");
    synth->add_option("--out", synth_out, "output sample file")->required();
    synth->add_option("--per-class", per_class, "samples per class")->capture_default_str();
    synth->add_option("--dim", synth_dim, "feature dimension")->capture_default_str();
    synth->add_option("--separation", separation, "distance between class centres")
        ->capture_default_str();
    synth->add_option("--days", synth_days, "number of day tags")->capture_default_str();
    synth->add_option("--seed", synth_seed, "random seed")->capture_default_str();

    CLI::App* grow = app.add_subcommand("grow", "train a model on the whole dataset");
    add_data_options(grow, da);
    add_hyper_options(grow, rc, config_path);
    grow->add_option("--out-dir", out_dir, "directory for model/audit/config outputs")
        ->capture_default_str();

    CLI::App* eval = app.add_subcommand("eval", "anchored forward cross-validation");
    add_data_options(eval, da);
    add_hyper_options(eval, rc, config_path);
    eval->add_option("--out-dir", out_dir, "directory for the report")->capture_default_str();

    CLI::App* predict = app.add_subcommand("predict", "label samples with a trained model");
    add_data_options(predict, da);
    predict->add_option("--model", model_path, "model file")->required()->check(CLI::ExistingFile);
    predict->add_option("--horizon", rc.horizon, "label column to score against")
        ->capture_default_str();
    predict->add_option("--classes", rc.classes, "number of classes in the label file")
        ->capture_default_str();
    predict->add_flag("--no-labels", no_labels, "data file has no label columns");
    predict->add_option("--out", predict_out, "write predicted labels here instead of stdout");

    std::uint64_t verify_seed = 0x5EEDull;
    double fault_scale = 1.0;
    CLI::App* verify = app.add_subcommand("verify", "run the built-in self-checks");
    verify->add_option("--seed", verify_seed, "random seed for the checks")->capture_default_str();
    verify->add_option("--inject-gradient-fault", fault_scale,
                       "scale analytic derivatives (diagnostics; must fail when != 1)")
        ->group("");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (app.got_subcommand(synth))
            return cmd_synth(synth_out, per_class, synth_dim, separation, synth_days, synth_seed);
        if (app.got_subcommand(grow)) {
            merge_config_file(grow, config_path, rc);
            return cmd_grow(da, rc, out_dir);
        }
        if (app.got_subcommand(eval)) {
            merge_config_file(eval, config_path, rc);
            return cmd_eval(da, rc, out_dir);
        }
        if (app.got_subcommand(predict))
            return cmd_predict(model_path, da, rc, no_labels, predict_out);
        if (app.got_subcommand(verify)) return cmd_verify(verify_seed, fault_scale);
    } catch (const gopnet::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const gopnet::SingularityError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const gopnet::SearchError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const gopnet::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
