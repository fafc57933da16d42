#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "core.hpp"
#include "distributions.hpp"
#include "ingestion.hpp"
#include "marginal.hpp"

namespace repsuite {

enum class Level { Question, Topic };

constexpr std::string_view to_string(Level level) noexcept {
    return level == Level::Question ? "question" : "topic";
}

/// Minimum number of rows two columns must share to be correlated.
inline constexpr std::size_t kMinOverlapRows = 3;

/// Pearson correlation; empty when either input has zero variance.
inline std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) {
        return std::nullopt;
    }
    const double n = static_cast<double>(x.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) {
        return std::nullopt;
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Expected minmax-normalised response under a distribution.
inline double normalized_mean(const ResponseDistribution &p, const QuestionSpec &question) {
    detail::require_ordinal_scale(question);
    const double lo = question.min_value();
    const double diam = question.diameter();
    double mean = 0.0;
    for (std::size_t i = 0; i < p.support().size(); ++i) {
        mean += ((p.support()[i] - lo) / diam) * p.mass()[i];
    }
    return mean;
}

using CellKey = std::pair<std::string, std::string>; ///< (row id, question id)
using CellDistributions = std::map<CellKey, ResponseDistribution>;

/// Rows x ordinal-question matrix of normalised means; at Topic level the
/// question columns are then averaged within each topic. Questions with no
/// cell at all are left out; individual missing cells stay missing.
inline MeanMatrix mean_matrix(const CellDistributions &dists, const Catalog &catalog,
                              std::span<const std::string> row_ids, Level level = Level::Question) {
    if (row_ids.size() < 2) {
        throw Error(ErrorKind::InsufficientRows, "a mean matrix needs at least two subgroups");
    }
    std::vector<const QuestionSpec *> cols;
    for (const auto &q : catalog.questions) {
        if (!q.is_ordinal() || q.responses.size() < 2) {
            continue;
        }
        const bool any = std::any_of(row_ids.begin(), row_ids.end(),
                                     [&](const std::string &r) { return dists.count({r, q.id}) != 0; });
        if (any) {
            cols.push_back(&q);
        }
    }
    std::vector<std::string> col_ids;
    for (const auto *q : cols) {
        col_ids.push_back(q->id);
    }
    MeanMatrix a(std::vector<std::string>(row_ids.begin(), row_ids.end()), std::move(col_ids));
    for (std::size_t r = 0; r < row_ids.size(); ++r) {
        for (std::size_t c = 0; c < cols.size(); ++c) {
            const auto it = dists.find({row_ids[r], cols[c]->id});
            if (it != dists.end()) {
                a.set(r, c, normalized_mean(it->second, *cols[c]));
            }
        }
    }
    if (level == Level::Topic) {
        return aggregate_by_topic(a, catalog).means;
    }
    return a;
}

namespace detail {

struct PairStats {
    std::optional<double> r;
    std::size_t overlap = 0;
};

inline PairStats pair_correlation(const MeanMatrix &a, std::size_t i, std::size_t j) {
    std::vector<double> x;
    std::vector<double> y;
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const auto &u = a.at(r, i);
        const auto &v = a.at(r, j);
        if (u && v) {
            x.push_back(*u);
            y.push_back(*v);
        }
    }
    PairStats out;
    out.overlap = x.size();
    if (out.overlap >= kMinOverlapRows) {
        out.r = pearson(x, y);
    }
    return out;
}

} // namespace detail

/// Pearson correlation between every pair of columns, using the rows where
/// both are present. Columns with fewer than three present rows or zero
/// variance are dropped; then, while some pair cannot be correlated, the
/// column involved in the most such pairs is dropped (latest column on ties).
inline CorrelationArtifacts correlation_matrix(const MeanMatrix &a) {
    CorrelationArtifacts out;
    out.n_rows = a.rows();
    std::vector<std::size_t> kept;
    for (std::size_t c = 0; c < a.cols(); ++c) {
        std::vector<double> vals;
        for (std::size_t r = 0; r < a.rows(); ++r) {
            if (const auto &v = a.at(r, c)) {
                vals.push_back(*v);
            }
        }
        const bool varies = std::any_of(vals.begin(), vals.end(), [&](double v) { return v != vals.front(); });
        if (vals.size() < kMinOverlapRows || !varies) {
            out.dropped_columns.push_back(a.col_ids()[c]);
        } else {
            kept.push_back(c);
        }
    }

    std::map<std::pair<std::size_t, std::size_t>, detail::PairStats> stats;
    for (std::size_t x = 0; x < kept.size(); ++x) {
        for (std::size_t y = x + 1; y < kept.size(); ++y) {
            stats[{kept[x], kept[y]}] = detail::pair_correlation(a, kept[x], kept[y]);
        }
    }
    for (;;) {
        std::map<std::size_t, std::size_t> bad;
        for (std::size_t x = 0; x < kept.size(); ++x) {
            for (std::size_t y = x + 1; y < kept.size(); ++y) {
                if (!stats[{kept[x], kept[y]}].r) {
                    ++bad[kept[x]];
                    ++bad[kept[y]];
                }
            }
        }
        if (bad.empty()) {
            break;
        }
        std::size_t worst = bad.begin()->first;
        for (const auto &[col, n] : bad) {
            if (n >= bad[worst]) {
                worst = col;
            }
        }
        out.dropped_columns.push_back(a.col_ids()[worst]);
        kept.erase(std::find(kept.begin(), kept.end(), worst));
    }
    if (kept.size() < 2) {
        throw Error(ErrorKind::DegenerateStructure,
                    "fewer than two columns can be correlated (" + std::to_string(kept.size()) + " retained)");
    }
    const std::size_t k = kept.size();
    out.ids.reserve(k);
    for (const auto c : kept) {
        out.ids.push_back(a.col_ids()[c]);
    }
    out.matrix.assign(k * k, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
        out.matrix[i * k + i] = 1.0;
        for (std::size_t j = i + 1; j < k; ++j) {
            const double r = *stats[{kept[i], kept[j]}].r;
            out.matrix[i * k + j] = r;
            out.matrix[j * k + i] = r;
        }
    }
    return out;
}

/// Stacked upper-triangular, off-diagonal entries (row-major, i < j).
inline std::vector<double> upper_triangle(const CorrelationArtifacts &c) { return c.u(); }

/// Upper triangle restricted to `ids`, in that order.
inline std::vector<double> upper_triangle(const CorrelationArtifacts &c, std::span<const std::string> ids) {
    std::vector<std::size_t> idx;
    idx.reserve(ids.size());
    for (const auto &id : ids) {
        const auto i = c.index_of(id);
        if (!i) {
            throw Error(ErrorKind::InvalidArgument, "column " + id + " is not in the correlation matrix");
        }
        idx.push_back(*i);
    }
    std::vector<double> out;
    out.reserve(idx.size() * (idx.size() > 0 ? idx.size() - 1 : 0) / 2);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = i + 1; j < idx.size(); ++j) {
            out.push_back(c.at(idx[i], idx[j]));
        }
    }
    return out;
}

inline double rmse(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.empty()) {
        throw Error(ErrorKind::InvalidArgument, "RMSE needs two non-empty vectors of equal length");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        sum += d * d;
    }
    return std::sqrt(sum / static_cast<double>(x.size()));
}

/// Compares two correlation structures over the columns they share (in the
/// order of `truth`). rho is missing when either vector is constant.
inline StructureComparison structure_similarity(const CorrelationArtifacts &truth, const CorrelationArtifacts &sim) {
    std::vector<std::string> shared;
    for (const auto &id : truth.ids) {
        if (sim.index_of(id)) {
            shared.push_back(id);
        }
    }
    if (shared.size() < 2) {
        throw Error(ErrorKind::DegenerateStructure,
                    "correlation matrices share " + std::to_string(shared.size()) + " column(s)");
    }
    const auto ut = upper_triangle(truth, shared);
    const auto us = upper_triangle(sim, shared);
    StructureComparison out;
    out.rho = pearson(ut, us);
    out.rmse = rmse(ut, us);
    out.n_pairs = ut.size();
    out.columns = std::move(shared);
    return out;
}

inline void write_correlation_csv(std::ostream &out, const CorrelationArtifacts &c,
                                  const std::string &leading_label = {}, bool with_header = true) {
    std::ostringstream num;
    num.precision(17);
    if (with_header) {
        std::vector<std::string> header;
        if (!leading_label.empty()) {
            header.push_back("method");
        }
        header.push_back("id");
        header.insert(header.end(), c.ids.begin(), c.ids.end());
        csv::write_row(out, header);
    }
    for (std::size_t i = 0; i < c.size(); ++i) {
        std::vector<std::string> row;
        if (!leading_label.empty()) {
            row.push_back(leading_label);
        }
        row.push_back(c.ids[i]);
        for (std::size_t j = 0; j < c.size(); ++j) {
            num.str({});
            num << c.at(i, j);
            row.push_back(num.str());
        }
        csv::write_row(out, row);
    }
}

} // namespace repsuite
