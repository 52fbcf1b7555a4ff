#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <gopnet/data.hpp>

using Catch::Approx;
using namespace gopnet;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& content) {
    const fs::path dir = fs::temp_directory_path() / "gopnet_data_tests";
    fs::create_directories(dir);
    const fs::path p = dir / name;
    std::ofstream out(p);
    out << content;
    return p;
}

}  // namespace

TEST_CASE("one-hot encoding") {
    const Matrix y = one_hot({0, 2, 1}, 3);
    Matrix want(3, 3);
    want << 1, 0, 0, 0, 0, 1, 0, 1, 0;
    CHECK(y == want);
    CHECK_THROWS_AS(one_hot({0, 3}, 3), DomainError);
    CHECK_THROWS_AS(one_hot({-1}, 3), DomainError);
}

TEST_CASE("delimited file with inline labels") {
    const fs::path p = temp_file("inline.txt",
                                 "# comment line\n"
                                 "0.5 1.25 0\n"
                                 "1.5,-2.0,1\n"
                                 "\n"
                                 "2.5\t0.0\t2\n");
    LoadOptions opts;
    const LabeledDataset ds = load_dataset(p.string(), opts);
    CHECK(ds.n() == 3);
    CHECK(ds.dim() == 2);
    CHECK(ds.labels == std::vector<int>{0, 1, 2});
    CHECK(ds.X(1, 1) == -2.0);
    CHECK_FALSE(ds.has_days());
}

TEST_CASE("day column and multi-horizon label columns") {
    // Layout: day, two features, five label columns (one per horizon).
    const fs::path p = temp_file("days.txt",
                                 "1 0.1 0.2 0 1 2 0 1\n"
                                 "1 0.3 0.4 1 2 0 1 2\n"
                                 "2 0.5 0.6 2 0 1 2 0\n");
    LoadOptions opts;
    opts.day_column = true;
    opts.n_label_columns = 5;
    opts.horizon = 20;  // second label column
    const LabeledDataset ds = load_dataset(p.string(), opts);
    CHECK(ds.dim() == 2);
    CHECK(ds.day == std::vector<int>{1, 1, 2});
    CHECK(ds.labels == std::vector<int>{1, 2, 0});
    CHECK(ds.horizon == 20);
}

TEST_CASE("labels can live in a separate file") {
    const fs::path pf = temp_file("feat.txt", "0.1 0.2\n0.3 0.4\n");
    const fs::path pl = temp_file("lab.txt", "1\n0\n");
    LoadOptions opts;
    opts.labels_path = pl.string();
    const LabeledDataset ds = load_dataset(pf.string(), opts);
    CHECK(ds.dim() == 2);
    CHECK(ds.labels == std::vector<int>{1, 0});
}

TEST_CASE("parse failures carry file positions") {
    const fs::path ragged = temp_file("ragged.txt", "1 2 0\n1 2 3 0\n");
    CHECK_THROWS_AS(load_dataset(ragged.string(), {}), ParseError);
    try {
        load_dataset(ragged.string(), {});
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find(":2") != std::string::npos);  // line 2
    }

    const fs::path alpha = temp_file("alpha.txt", "1 x 0\n");
    CHECK_THROWS_AS(load_dataset(alpha.string(), {}), ParseError);

    const fs::path badlabel = temp_file("badlabel.txt", "1 2 7\n");
    CHECK_THROWS_AS(load_dataset(badlabel.string(), {}), ParseError);

    CHECK_THROWS_AS(load_dataset("/nonexistent/file.txt", {}), IoError);
}

TEST_CASE("horizon to label column mapping") {
    CHECK(horizon_label_index(10, 5) == 0);
    CHECK(horizon_label_index(20, 5) == 1);
    CHECK(horizon_label_index(100, 5) == 4);
    CHECK(horizon_label_index(20, 1) == 0);  // single column: nothing to select
    CHECK_THROWS_AS(horizon_label_index(40, 5), DomainError);
    CHECK_THROWS_AS(horizon_label_index(100, 3), DomainError);
}

TEST_CASE("dataset save/load round trip") {
    const LabeledDataset ds = synth_imbalanced({20, 10, 5}, 4, 2.0, 99, 3);
    const fs::path p = fs::temp_directory_path() / "gopnet_data_tests" / "roundtrip.txt";
    fs::create_directories(p.parent_path());
    save_dataset(ds, p.string());

    LoadOptions opts;
    opts.day_column = true;
    const LabeledDataset back = load_dataset(p.string(), opts);
    REQUIRE(back.n() == ds.n());
    REQUIRE(back.dim() == ds.dim());
    // Doubles are written with full round-trip precision.
    CHECK((back.X - ds.X).cwiseAbs().maxCoeff() == 0.0);
    CHECK(back.labels == ds.labels);
    CHECK(back.day == ds.day);
}

TEST_CASE("anchored folds expand one day at a time") {
    const LabeledDataset ds = synth_imbalanced({40, 20, 10}, 3, 2.0, 5, 10);
    const auto folds = anchored_folds(ds, 9);
    REQUIRE(folds.size() == 9);
    const auto days = distinct_days(ds);
    REQUIRE(days.size() == 10);
    for (int k = 0; k < 9; ++k) {
        REQUIRE(folds[k].train_days.size() == static_cast<std::size_t>(k + 1));
        for (int i = 0; i <= k; ++i) CHECK(folds[k].train_days[i] == days[i]);
        CHECK(folds[k].test_day == days[k + 1]);
    }
    // Ten distinct days cannot support ten folds.
    CHECK_THROWS_AS(anchored_folds(ds, 10), DomainError);
    CHECK_THROWS_AS(anchored_folds(ds, 0), DomainError);

    const LabeledDataset no_days = synth_imbalanced({5, 5}, 2, 1.0, 1, 1);
    LabeledDataset stripped = no_days;
    stripped.day.clear();
    CHECK_THROWS_AS(anchored_folds(stripped, 2), DomainError);
}

TEST_CASE("day subsets preserve sample order") {
    const LabeledDataset ds = synth_imbalanced({30, 15}, 3, 2.0, 17, 5);
    const LabeledDataset sub = subset_by_days(ds, {2, 4});
    REQUIRE(sub.n() > 0);
    int expected = 0;
    for (int i = 0; i < ds.n(); ++i)
        if (ds.day[i] == 2 || ds.day[i] == 4) ++expected;
    CHECK(sub.n() == expected);
    for (int d : sub.day) CHECK((d == 2 || d == 4));
    // Order within the subset is the original order.
    for (std::size_t i = 1; i < sub.day.size(); ++i) CHECK(sub.day[i] >= sub.day[i - 1]);
}

TEST_CASE("standardizer uses population statistics with a floored deviation") {
    Matrix X(2, 2);
    X << 1.0, 10.0, 3.0, 10.0;
    const Standardizer s = fit_standardizer(X);
    CHECK(s.mean[0] == 2.0);
    CHECK(s.mean[1] == 10.0);
    CHECK(s.stdev[0] == 1.0);
    CHECK(s.stdev[1] == 1e-8);  // constant column hits the floor

    const Matrix Z = apply(s, X);
    CHECK(Z(0, 0) == -1.0);
    CHECK(Z(1, 0) == 1.0);
    CHECK(Z(0, 1) == 0.0);

    CHECK_THROWS_AS(apply(s, Matrix::Ones(1, 3)), DimensionError);
}

TEST_CASE("synthetic generator respects counts, days and seeds") {
    const LabeledDataset a = synth_imbalanced({50, 20, 9}, 6, 3.0, 1234, 4);
    REQUIRE(a.n() == 79);
    CHECK(a.dim() == 6);
    std::vector<int> counts(3, 0);
    for (int l : a.labels) ++counts[l];
    CHECK(counts == std::vector<int>{50, 20, 9});
    CHECK(a.day.front() == 1);
    CHECK(a.day.back() == 4);
    for (std::size_t i = 1; i < a.day.size(); ++i) CHECK(a.day[i] >= a.day[i - 1]);

    const LabeledDataset b = synth_imbalanced({50, 20, 9}, 6, 3.0, 1234, 4);
    CHECK((a.X - b.X).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.labels == b.labels);

    const LabeledDataset c = synth_imbalanced({50, 20, 9}, 6, 3.0, 4321, 4);
    CHECK((a.X - c.X).cwiseAbs().maxCoeff() > 0.0);

    CHECK_THROWS_AS(synth_imbalanced({10}, 0, 1.0, 1), DomainError);
    CHECK_THROWS_AS(synth_imbalanced({10, -1}, 2, 1.0, 1), DomainError);
}

TEST_CASE("dataset validation") {
    LabeledDataset ds = synth_imbalanced({5, 5}, 2, 1.0, 3, 2);
    CHECK_NOTHROW(ds.validate());
    LabeledDataset bad = ds;
    bad.labels[0] = 1 - bad.labels[0];  // now inconsistent with Y
    CHECK_THROWS_AS(bad.validate(), DomainError);
    bad = ds;
    bad.day[0] = 99;  // decreasing day tags
    CHECK_THROWS_AS(bad.validate(), DomainError);
}
