#pragma once

// Dataset ingestion and preparation: delimited-text loading with a
// configurable column layout, anchored forward cross-validation folds,
// train-statistics standardization and synthetic imbalanced blobs for tests
// and experiments.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "gopnet/errors.hpp"
#include "gopnet/matrix.hpp"
#include "gopnet/rng.hpp"

namespace gopnet {

inline Matrix one_hot(const std::vector<int>& labels, int n_classes) {
    Matrix y = Matrix::Zero(labels.size(), n_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= n_classes)
            throw DomainError("one_hot: label out of range at row " + std::to_string(i + 1));
        y(i, labels[i]) = 1.0;
    }
    return y;
}

struct LabeledDataset {
    Matrix X;                 // N x D
    std::vector<int> labels;  // class ids in [0, C)
    Matrix Y;                 // N x C one-hot
    std::vector<int> day;     // optional, non-decreasing when present
    int horizon = 0;          // metadata: label horizon this dataset was built for

    int n() const { return static_cast<int>(X.rows()); }
    int dim() const { return static_cast<int>(X.cols()); }
    int n_classes() const { return static_cast<int>(Y.cols()); }
    bool has_days() const { return !day.empty(); }

    void validate() const {
        require(static_cast<Eigen::Index>(labels.size()) == X.rows(),
                "dataset: label count mismatch");
        require(Y.rows() == X.rows(), "dataset: target row mismatch");
        if (has_days())
            require(static_cast<Eigen::Index>(day.size()) == X.rows(),
                    "dataset: day tag count mismatch");
        for (Eigen::Index i = 0; i < Y.rows(); ++i) {
            double row_sum = Y.row(i).sum();
            if (std::abs(row_sum - 1.0) > 1e-12 || Y(i, labels[i]) != 1.0)
                throw DomainError("dataset: row " + std::to_string(i + 1) +
                                  " targets are not one-hot consistent with the label");
        }
        for (std::size_t i = 1; i < day.size(); ++i)
            if (day[i] < day[i - 1])
                throw DomainError("dataset: day tags decrease at row " + std::to_string(i + 1));
    }
};

inline LabeledDataset make_dataset(Matrix X, std::vector<int> labels, int n_classes,
                                   std::vector<int> day = {}, int horizon = 0) {
    LabeledDataset ds;
    ds.X = std::move(X);
    ds.Y = one_hot(labels, n_classes);
    ds.labels = std::move(labels);
    ds.day = std::move(day);
    ds.horizon = horizon;
    ds.validate();
    return ds;
}

// ---------------------------------------------------------------------------
// Text ingestion

// Column layout of a delimited sample file. Label columns sit after the
// features; with several of them the horizon picks which one is used.
struct LoadOptions {
    std::string labels_path;  // when set, labels live in a separate file
    bool day_column = false;  // first column is a day tag
    int n_label_columns = 1;
    int label_index = -1;     // 0-based among the label columns; -1 derives it from horizon
    int horizon = 10;
    int n_classes = 3;
};

inline constexpr std::array<int, 5> kKnownHorizons = {10, 20, 30, 50, 100};

inline int horizon_label_index(int horizon, int n_label_columns) {
    if (n_label_columns == 1) return 0;
    for (std::size_t i = 0; i < kKnownHorizons.size(); ++i)
        if (kKnownHorizons[i] == horizon) {
            if (static_cast<int>(i) >= n_label_columns)
                throw DomainError("horizon " + std::to_string(horizon) +
                                  " needs label column " + std::to_string(i + 1) +
                                  " but the layout declares only " +
                                  std::to_string(n_label_columns));
            return static_cast<int>(i);
        }
    throw DomainError("unknown prediction horizon " + std::to_string(horizon) +
                      "; expected one of 10, 20, 30, 50, 100");
}

namespace detail {

inline std::vector<std::string> tokenize(const std::string& line) {
    std::vector<std::string> tokens;
    std::string current;
    for (char ch : line) {
        if (ch == ',' || ch == ' ' || ch == '\t' || ch == '\r') {
            if (!current.empty()) tokens.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(ch);
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

inline double parse_number(const std::string& token, const std::string& file, long line,
                           long column) {
    const char* begin = token.c_str();
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end != begin + token.size())
        throw ParseError::at(file, line, column, "not a number: \"" + token + "\"");
    return v;
}

inline int parse_int(const std::string& token, const std::string& file, long line, long column,
                     const char* what) {
    double v = parse_number(token, file, line, column);
    if (v != std::floor(v))
        throw ParseError::at(file, line, column,
                             std::string(what) + " must be an integer, got \"" + token + "\"");
    return static_cast<int>(v);
}

// All non-empty, non-comment rows of a delimited file as token lists.
inline std::vector<std::pair<long, std::vector<std::string>>> read_rows(
    const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open \"" + path + "\"");
    std::vector<std::pair<long, std::vector<std::string>>> rows;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        auto tokens = tokenize(line);
        if (tokens.empty()) continue;
        rows.emplace_back(line_no, std::move(tokens));
    }
    return rows;
}

}  // namespace detail

inline LabeledDataset load_dataset(const std::string& features_path,
                                   const LoadOptions& opts = {}) {
    const int label_index = opts.label_index >= 0
                                ? opts.label_index
                                : horizon_label_index(opts.horizon, opts.n_label_columns);
    if (label_index >= opts.n_label_columns)
        throw DomainError("label index " + std::to_string(label_index) +
                          " outside the declared " + std::to_string(opts.n_label_columns) +
                          " label columns");

    const bool separate_labels = !opts.labels_path.empty();
    auto rows = detail::read_rows(features_path);
    if (rows.empty()) throw ParseError("\"" + features_path + "\" contains no samples");

    const int day_cols = opts.day_column ? 1 : 0;
    const int inline_label_cols = separate_labels ? 0 : opts.n_label_columns;
    const int total_cols = static_cast<int>(rows.front().second.size());
    const int n_features = total_cols - day_cols - inline_label_cols;
    if (n_features < 1)
        throw ParseError::at(features_path, rows.front().first,
                             "row has too few columns for the declared layout");

    const int n = static_cast<int>(rows.size());
    LabeledDataset ds;
    ds.X.resize(n, n_features);
    ds.labels.resize(n);
    ds.horizon = opts.horizon;
    if (opts.day_column) ds.day.resize(n);

    for (int i = 0; i < n; ++i) {
        const auto& [line_no, tokens] = rows[i];
        if (static_cast<int>(tokens.size()) != total_cols)
            throw ParseError::at(features_path, line_no,
                                 "ragged row: expected " + std::to_string(total_cols) +
                                     " columns, got " + std::to_string(tokens.size()));
        int col = 0;
        if (opts.day_column) {
            ds.day[i] = detail::parse_int(tokens[0], features_path, line_no, 1, "day tag");
            col = 1;
        }
        for (int f = 0; f < n_features; ++f) {
            ds.X(i, f) = detail::parse_number(tokens[col], features_path, line_no, col + 1);
            ++col;
        }
        if (!separate_labels) {
            const int token_index = col + label_index;
            int label = detail::parse_int(tokens[token_index], features_path, line_no,
                                          token_index + 1, "class id");
            if (label < 0 || label >= opts.n_classes)
                throw ParseError::at(features_path, line_no, token_index + 1,
                                     "unknown class id " + std::to_string(label) +
                                         " (expected 0.." + std::to_string(opts.n_classes - 1) +
                                         ")");
            ds.labels[i] = label;
        }
    }

    if (separate_labels) {
        auto label_rows = detail::read_rows(opts.labels_path);
        if (static_cast<int>(label_rows.size()) != n)
            throw ParseError("\"" + opts.labels_path + "\" has " +
                             std::to_string(label_rows.size()) + " rows but \"" + features_path +
                             "\" has " + std::to_string(n));
        for (int i = 0; i < n; ++i) {
            const auto& [line_no, tokens] = label_rows[i];
            if (static_cast<int>(tokens.size()) != opts.n_label_columns)
                throw ParseError::at(opts.labels_path, line_no,
                                     "ragged row: expected " +
                                         std::to_string(opts.n_label_columns) + " columns");
            int label = detail::parse_int(tokens[label_index], opts.labels_path, line_no,
                                          label_index + 1, "class id");
            if (label < 0 || label >= opts.n_classes)
                throw ParseError::at(opts.labels_path, line_no, label_index + 1,
                                     "unknown class id " + std::to_string(label));
            ds.labels[i] = label;
        }
    }

    for (std::size_t i = 1; i < ds.day.size(); ++i)
        if (ds.day[i] < ds.day[i - 1])
            throw ParseError::at(features_path, rows[i].first,
                                 "day tags must be non-decreasing");

    ds.Y = one_hot(ds.labels, opts.n_classes);
    ds.validate();
    return ds;
}

// Writes [day] features label with full round-trip precision (17 significant
// digits), space-delimited. load_dataset reads the result back exactly.
inline void save_dataset(const LabeledDataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write \"" + path + "\"");
    char buffer[64];
    for (int i = 0; i < ds.n(); ++i) {
        std::string line;
        if (ds.has_days()) line += std::to_string(ds.day[i]) + " ";
        for (int f = 0; f < ds.dim(); ++f) {
            std::snprintf(buffer, sizeof(buffer), "%.17g", ds.X(i, f));
            line += buffer;
            line += ' ';
        }
        line += std::to_string(ds.labels[i]);
        out << line << '\n';
    }
    if (!out) throw IoError("failed writing \"" + path + "\"");
}

// ---------------------------------------------------------------------------
// Anchored forward cross-validation

struct FoldSpec {
    std::vector<int> train_days;  // the first K distinct days
    int test_day = 0;             // the (K+1)-th
};

inline std::vector<int> distinct_days(const LabeledDataset& ds) {
    if (!ds.has_days()) throw DomainError("anchored folds need day tags");
    std::vector<int> days = ds.day;
    std::sort(days.begin(), days.end());
    days.erase(std::unique(days.begin(), days.end()), days.end());
    return days;
}

// Fold K (1-based) trains on the first K days and tests on day K+1.
inline std::vector<FoldSpec> anchored_folds(const LabeledDataset& ds, int n_folds) {
    if (n_folds < 1) throw DomainError("anchored_folds: fold count must be positive");
    const auto days = distinct_days(ds);
    if (static_cast<int>(days.size()) < n_folds + 1)
        throw DomainError("anchored_folds: " + std::to_string(n_folds) + " folds need at least " +
                          std::to_string(n_folds + 1) + " distinct days, got " +
                          std::to_string(days.size()));
    std::vector<FoldSpec> folds(n_folds);
    for (int k = 1; k <= n_folds; ++k) {
        folds[k - 1].train_days.assign(days.begin(), days.begin() + k);
        folds[k - 1].test_day = days[k];
    }
    return folds;
}

// Row subset by day membership, preserving order.
inline LabeledDataset subset_by_days(const LabeledDataset& ds, const std::vector<int>& days) {
    std::vector<int> keep;
    for (int i = 0; i < ds.n(); ++i)
        if (std::find(days.begin(), days.end(), ds.day[i]) != days.end()) keep.push_back(i);
    LabeledDataset out;
    out.X.resize(keep.size(), ds.dim());
    out.labels.resize(keep.size());
    out.day.resize(keep.size());
    out.horizon = ds.horizon;
    for (std::size_t r = 0; r < keep.size(); ++r) {
        out.X.row(r) = ds.X.row(keep[r]);
        out.labels[r] = ds.labels[keep[r]];
        out.day[r] = ds.day[keep[r]];
    }
    out.Y = one_hot(out.labels, ds.n_classes());
    return out;
}

// ---------------------------------------------------------------------------
// Standardization

struct Standardizer {
    Vector mean;
    Vector stdev;  // floored at 1e-8
};

inline Standardizer fit_standardizer(const Matrix& X) {
    require(X.rows() >= 1, "fit_standardizer: need at least one row");
    Standardizer s;
    s.mean = X.colwise().mean();
    s.stdev.resize(X.cols());
    const double n = static_cast<double>(X.rows());
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        double var = (X.col(j).array() - s.mean[j]).square().sum() / n;
        s.stdev[j] = std::max(std::sqrt(var), 1e-8);
    }
    return s;
}

inline Matrix apply(const Standardizer& s, const Matrix& X) {
    require(X.cols() == s.mean.size(), "standardizer: column count mismatch");
    Matrix out = X;
    for (Eigen::Index j = 0; j < X.cols(); ++j)
        out.col(j) = (X.col(j).array() - s.mean[j]) / s.stdev[j];
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic data

// Gaussian blobs with unit covariance; class c is centred at
// separation * e_{c mod d}. Rows are shuffled (seeded) and day tags assigned
// in contiguous chunks so fold protocols can be exercised.
inline LabeledDataset synth_imbalanced(const std::vector<int>& n_per_class, int d,
                                       double separation, std::uint64_t seed, int n_days = 1) {
    if (d < 1) throw DomainError("synth_imbalanced: dimension must be positive");
    if (n_days < 1) throw DomainError("synth_imbalanced: day count must be positive");
    long total = 0;
    for (int c : n_per_class) {
        if (c < 0) throw DomainError("synth_imbalanced: negative class count");
        total += c;
    }
    if (total == 0) throw DomainError("synth_imbalanced: all class counts are zero");
    const int n_classes = static_cast<int>(n_per_class.size());

    Rng rng = derive_rng(seed, 0x53594e54u);  // "SYNT"
    Matrix X(total, d);
    std::vector<int> labels(total);
    long row = 0;
    for (int c = 0; c < n_classes; ++c) {
        for (int i = 0; i < n_per_class[c]; ++i, ++row) {
            for (int j = 0; j < d; ++j) X(row, j) = rng.gaussian();
            X(row, c % d) += separation;
            labels[row] = c;
        }
    }

    // Seeded Fisher-Yates so days mix classes.
    for (long i = total - 1; i > 0; --i) {
        long j = static_cast<long>(rng.index(static_cast<std::uint64_t>(i + 1)));
        X.row(i).swap(X.row(j));
        std::swap(labels[i], labels[j]);
    }

    std::vector<int> day(total);
    for (long i = 0; i < total; ++i)
        day[i] = static_cast<int>((i * n_days) / total) + 1;

    return make_dataset(std::move(X), std::move(labels), n_classes, std::move(day));
}

}  // namespace gopnet
