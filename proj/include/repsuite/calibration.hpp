#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "core.hpp"
#include "distributions.hpp"
#include "ingestion.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "structure.hpp"

namespace repsuite {

/// Resampled estimate of one structure metric. Iterations where the metric
/// is undefined (constant u, or too few columns survive) hold no value and
/// are left out of the mean.
struct BoundEstimate {
    std::string metric; ///< "rho" or "rmse"
    Level level = Level::Question;
    std::size_t iterations = 0;
    std::optional<double> mean;
    std::vector<std::optional<double>> values;
    std::uint64_t seed = 0;

    std::size_t n_defined() const noexcept {
        return static_cast<std::size_t>(
            std::count_if(values.begin(), values.end(), [](const auto &v) { return v.has_value(); }));
    }

    bool operator==(const BoundEstimate &) const = default;
};

struct BoundPair {
    BoundEstimate rho;
    BoundEstimate rmse;
};

namespace detail {

inline BoundPair collect_bounds(const std::vector<std::optional<StructureComparison>> &runs, Level level,
                                std::uint64_t seed) {
    BoundPair out;
    out.rho.metric = "rho";
    out.rmse.metric = "rmse";
    for (auto *b : {&out.rho, &out.rmse}) {
        b->level = level;
        b->iterations = runs.size();
        b->seed = seed;
        b->values.reserve(runs.size());
    }
    double rho_sum = 0.0;
    double rmse_sum = 0.0;
    std::size_t rho_n = 0;
    std::size_t rmse_n = 0;
    for (const auto &run : runs) {
        if (run && run->rho) {
            out.rho.values.push_back(run->rho);
            rho_sum += *run->rho;
            ++rho_n;
        } else {
            out.rho.values.push_back(std::nullopt);
        }
        if (run) {
            out.rmse.values.push_back(run->rmse);
            rmse_sum += run->rmse;
            ++rmse_n;
        } else {
            out.rmse.values.push_back(std::nullopt);
        }
    }
    if (rho_n > 0) {
        out.rho.mean = rho_sum / static_cast<double>(rho_n);
    }
    if (rmse_n > 0) {
        out.rmse.mean = rmse_sum / static_cast<double>(rmse_n);
    }
    return out;
}

} // namespace detail

/// Lower bound: permute each column of the observed mean matrix
/// independently, rebuild the correlation matrix and compare it with the
/// observed one. Returns the mean rho (floor) and mean RMSE (ceiling).
inline BoundPair permutation_null(const MeanMatrix &observed, std::size_t iterations, std::uint64_t seed,
                                  Level level = Level::Question, std::size_t workers = 1) {
    if (iterations == 0) {
        throw Error(ErrorKind::InvalidArgument, "permutation null needs at least one iteration");
    }
    const auto truth = correlation_matrix(observed);
    std::vector<std::optional<StructureComparison>> runs(iterations);
    parallel_for(iterations, workers, [&](std::size_t b) {
        auto rng = seeded_rng(seed, "perm/" + std::to_string(b));
        MeanMatrix permuted = observed;
        std::vector<std::optional<double>> col;
        for (std::size_t c = 0; c < observed.cols(); ++c) {
            col = observed.column(c);
            rng.shuffle(std::span(col));
            for (std::size_t r = 0; r < observed.rows(); ++r) {
                permuted.set(r, c, col[r]);
            }
        }
        try {
            runs[b] = structure_similarity(truth, correlation_matrix(permuted));
        } catch (const Error &e) {
            if (e.kind() != ErrorKind::DegenerateStructure) {
                throw;
            }
        }
    });
    return detail::collect_bounds(runs, level, seed);
}

/// Respondent data reduced to what split-half resampling needs: per subgroup
/// member lists and each respondent's normalised answers on the ordinal
/// questions (NaN where unanswered).
struct SplitHalfInput {
    std::vector<std::string> subgroup_ids;
    std::vector<std::vector<std::size_t>> members;
    std::vector<std::string> question_ids;
    std::vector<double> normalized; ///< respondent-major, question_ids.size() per row
    std::vector<double> weights;
    std::vector<std::string> warnings;

    static SplitHalfInput prepare(const SurveyData &data, const Catalog &catalog,
                                  std::span<const SubgroupSpec> subgroups) {
        SplitHalfInput in;
        std::vector<std::pair<std::size_t, const QuestionSpec *>> cols;
        for (const auto &q : catalog.questions) {
            if (!q.is_ordinal() || q.responses.size() < 2) {
                continue;
            }
            if (const auto c = data.question_index(q.id)) {
                cols.emplace_back(*c, &q);
                in.question_ids.push_back(q.id);
            }
        }
        const std::size_t k = cols.size();
        in.normalized.assign(data.size() * k, std::numeric_limits<double>::quiet_NaN());
        in.weights.resize(data.size());
        for (std::size_t r = 0; r < data.size(); ++r) {
            in.weights[r] = data.respondents()[r].weight;
            for (std::size_t c = 0; c < k; ++c) {
                if (const auto &a = data.answer(r, cols[c].first)) {
                    in.normalized[r * k + c] = cols[c].second->normalized(*a);
                }
            }
        }
        for (const auto &s : subgroups) {
            auto m = subgroup_members(data, s);
            if (m.size() < 2) {
                in.warnings.push_back("subgroup " + s.id + " has fewer than two respondents; excluded");
                continue;
            }
            in.subgroup_ids.push_back(s.id);
            in.members.push_back(std::move(m));
        }
        if (in.subgroup_ids.empty()) {
            throw Error(ErrorKind::InsufficientRows, "no subgroup has at least two respondents");
        }
        return in;
    }

    /// Weighted normalised means of one respondent set, one row of A.
    void half_means(std::span<const std::size_t> respondents, MeanMatrix &out, std::size_t row) const {
        const std::size_t k = question_ids.size();
        std::vector<double> num(k, 0.0);
        std::vector<double> den(k, 0.0);
        for (const auto r : respondents) {
            const double w = weights[r];
            const double *x = normalized.data() + r * k;
            for (std::size_t c = 0; c < k; ++c) {
                if (!std::isnan(x[c])) {
                    num[c] += w * x[c];
                    den[c] += w;
                }
            }
        }
        for (std::size_t c = 0; c < k; ++c) {
            out.set(row, c, den[c] > 0.0 ? std::optional<double>(num[c] / den[c]) : std::nullopt);
        }
    }
};

/// Arranges a subgroup's member list in place; the first ceil(n/2) entries
/// form half 1.
using HalfSplitter = std::function<void(RandomStream &, std::span<std::size_t>)>;

inline void shuffle_splitter(RandomStream &rng, std::span<std::size_t> members) { rng.shuffle(members); }

/// Upper bound: split every subgroup's respondents at random into two halves
/// (odd sizes give the extra respondent to half 1), build the structure of
/// each half and compare the two. Weights carry over unchanged.
inline BoundPair split_half(const SplitHalfInput &input, const Catalog &catalog, std::size_t iterations,
                            std::uint64_t seed, Level level = Level::Question, std::size_t workers = 1,
                            const HalfSplitter &splitter = shuffle_splitter) {
    if (iterations == 0) {
        throw Error(ErrorKind::InvalidArgument, "split-half needs at least one iteration");
    }
    std::vector<std::optional<StructureComparison>> runs(iterations);
    parallel_for(iterations, workers, [&](std::size_t b) {
        auto rng = seeded_rng(seed, "split/" + std::to_string(b));
        MeanMatrix first(input.subgroup_ids, input.question_ids);
        MeanMatrix second(input.subgroup_ids, input.question_ids);
        std::vector<std::size_t> order;
        for (std::size_t s = 0; s < input.members.size(); ++s) {
            order = input.members[s];
            splitter(rng, std::span(order));
            const std::size_t cut = (order.size() + 1) / 2;
            input.half_means(std::span(order).first(cut), first, s);
            input.half_means(std::span(order).subspan(cut), second, s);
        }
        if (level == Level::Topic) {
            first = aggregate_by_topic(first, catalog).means;
            second = aggregate_by_topic(second, catalog).means;
        }
        try {
            runs[b] = structure_similarity(correlation_matrix(first), correlation_matrix(second));
        } catch (const Error &e) {
            if (e.kind() != ErrorKind::DegenerateStructure) {
                throw;
            }
        }
    });
    return detail::collect_bounds(runs, level, seed);
}

inline BoundPair split_half(const SurveyData &data, std::span<const SubgroupSpec> subgroups, const Catalog &catalog,
                            std::size_t iterations, std::uint64_t seed, Level level = Level::Question,
                            std::size_t workers = 1) {
    return split_half(SplitHalfInput::prepare(data, catalog, subgroups), catalog, iterations, seed, level, workers);
}

/// Position of a model's rho inside the calibrated [lower, upper] range.
inline std::optional<double> calibrated_position(std::optional<double> model, std::optional<double> lower,
                                                 std::optional<double> upper) {
    if (!model || !lower || !upper || *upper == *lower) {
        return std::nullopt;
    }
    return (*model - *lower) / (*upper - *lower);
}

inline void to_json(json &j, const BoundEstimate &b) {
    json values = json::array();
    for (const auto &v : b.values) {
        values.push_back(v ? json(*v) : json(nullptr));
    }
    j = json{{"metric", b.metric},
             {"level", std::string(to_string(b.level))},
             {"iterations", b.iterations},
             {"mean", b.mean ? json(*b.mean) : json(nullptr)},
             {"values", std::move(values)},
             {"seed", b.seed}};
}

/// Trace rows: level, bound, iteration, rho, rmse.
inline void write_bounds_trace(std::ostream &out, const BoundPair &bounds, const std::string &bound_name,
                               bool with_header) {
    if (with_header) {
        csv::write_row(out, {"level", "bound", "iteration", "rho", "rmse"});
    }
    std::ostringstream num;
    num.precision(17);
    const auto fmt = [&](const std::optional<double> &v) {
        if (!v) {
            return std::string{};
        }
        num.str({});
        num << *v;
        return num.str();
    };
    for (std::size_t b = 0; b < bounds.rho.values.size(); ++b) {
        csv::write_row(out, {std::string(to_string(bounds.rho.level)), bound_name, std::to_string(b),
                             fmt(bounds.rho.values[b]), fmt(bounds.rmse.values[b])});
    }
}

} // namespace repsuite
