#pragma once

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "core.hpp"

namespace repsuite {

namespace detail {

inline void require_shared_support(const ResponseDistribution &p, const ResponseDistribution &q) {
    if (p.support() != q.support()) {
        throw Error(ErrorKind::SupportMismatch,
                    "distributions for " + p.question_id() + " and " + q.question_id() + " have different supports");
    }
}

inline void require_ordinal_scale(const QuestionSpec &question) {
    if (!question.is_ordinal()) {
        throw Error(ErrorKind::WrongScaleKind, "question " + question.id + " is nominal");
    }
    if (question.responses.size() < 2 || question.diameter() <= 0.0) {
        throw Error(ErrorKind::DegenerateScale, "question " + question.id + " has zero diameter");
    }
}

} // namespace detail

/// Diameter-normalised 1-D Wasserstein-1 distance. Uses the actual gaps
/// between consecutive values, so non-unit spacing is handled.
inline double wasserstein_normalized(const ResponseDistribution &p, const ResponseDistribution &q,
                                     const QuestionSpec &question) {
    detail::require_ordinal_scale(question);
    detail::require_shared_support(p, q);
    if (p.support() != question.values()) {
        throw Error(ErrorKind::SupportMismatch, "distribution support differs from the scale of " + question.id);
    }
    const auto &support = p.support();
    double cdf_p = 0.0;
    double cdf_q = 0.0;
    double w = 0.0;
    for (std::size_t i = 0; i + 1 < support.size(); ++i) {
        cdf_p += p.mass()[i];
        cdf_q += q.mass()[i];
        w += std::abs(cdf_p - cdf_q) * (static_cast<double>(support[i + 1]) - support[i]);
    }
    return std::clamp(w / question.diameter(), 0.0, 1.0);
}

/// Half the L1 distance between two pmfs on the same support.
inline double total_variation(const ResponseDistribution &p, const ResponseDistribution &q) {
    detail::require_shared_support(p, q);
    double sum = 0.0;
    for (std::size_t i = 0; i < p.mass().size(); ++i) {
        sum += std::abs(p.mass()[i] - q.mass()[i]);
    }
    return std::clamp(0.5 * sum, 0.0, 1.0);
}

/// Wasserstein for ordinal questions, total variation for nominal ones.
inline double per_question_distance(const ResponseDistribution &p, const ResponseDistribution &q,
                                    const QuestionSpec &question) {
    if (question.is_ordinal()) {
        return wasserstein_normalized(p, q, question);
    }
    if (p.support() != question.values()) {
        throw Error(ErrorKind::SupportMismatch, "distribution support differs from the scale of " + question.id);
    }
    return total_variation(p, q);
}

using DistributionMap = std::map<std::string, ResponseDistribution>;

struct Dissimilarity {
    double value = 0.0;
    std::size_t n_questions = 0;
    std::size_t n_skipped = 0; ///< questions present on only one side
};

/// Unweighted mean of per-question distances over questions present in both
/// maps. Questions missing on either side are skipped and counted.
inline Dissimilarity mean_dissimilarity(const DistributionMap &model_dists, const DistributionMap &truth_dists,
                                        const Catalog &catalog) {
    Dissimilarity out;
    double sum = 0.0;
    for (const auto &[qid, pm] : model_dists) {
        const auto it = truth_dists.find(qid);
        if (it == truth_dists.end()) {
            ++out.n_skipped;
            continue;
        }
        sum += per_question_distance(pm, it->second, catalog.question(qid));
        ++out.n_questions;
    }
    for (const auto &[qid, ps] : truth_dists) {
        if (model_dists.find(qid) == model_dists.end()) {
            ++out.n_skipped;
        }
    }
    if (out.n_questions == 0) {
        throw Error(ErrorKind::NoComparableQuestions, "no question has distributions on both sides");
    }
    out.value = sum / static_cast<double>(out.n_questions);
    return out;
}

/// Population variance of the pmf divided by diam(R_q)^2; lies in [0, 0.25].
inline double normalized_variance(const ResponseDistribution &p, const QuestionSpec &question) {
    detail::require_ordinal_scale(question);
    if (p.support() != question.values()) {
        throw Error(ErrorKind::SupportMismatch, "distribution support differs from the scale of " + question.id);
    }
    const double lo = question.min_value();
    const double diam = question.diameter();
    double mean = 0.0;
    for (std::size_t i = 0; i < p.support().size(); ++i) {
        mean += p.mass()[i] * ((p.support()[i] - lo) / diam);
    }
    double var = 0.0;
    for (std::size_t i = 0; i < p.support().size(); ++i) {
        const double d = (p.support()[i] - lo) / diam - mean;
        var += p.mass()[i] * d * d;
    }
    return std::clamp(var, 0.0, 0.25);
}

struct MeanVariance {
    double value = 0.0;
    std::size_t n_questions = 0;
};

/// Mean of normalized_variance over the ordinal questions in the map.
inline MeanVariance mean_variance(const DistributionMap &dists, const Catalog &catalog) {
    MeanVariance out;
    double sum = 0.0;
    for (const auto &[qid, p] : dists) {
        const auto &q = catalog.question(qid);
        if (!q.is_ordinal()) {
            continue;
        }
        sum += normalized_variance(p, q);
        ++out.n_questions;
    }
    if (out.n_questions == 0) {
        throw Error(ErrorKind::NoComparableQuestions, "no ordinal question available for mean variance");
    }
    out.value = sum / static_cast<double>(out.n_questions);
    return out;
}

/// Number of questions whose distribution is a point mass.
inline std::size_t modal_collapse_count(const DistributionMap &model_dists) {
    std::size_t n = 0;
    for (const auto &[qid, p] : model_dists) {
        if (p.is_point_mass()) {
            ++n;
        }
    }
    return n;
}

struct InvalidRates {
    std::map<std::string, double> per_question;
    double overall = 0.0;
    std::size_t invalid = 0;
    std::size_t answered = 0;           ///< samples that returned a generation
    std::size_t transport_failures = 0; ///< excluded from both counts above
};

/// Share of generations that could not be matched to an option. Transport
/// failures produced no generation and are reported separately.
inline InvalidRates invalid_rate(std::span<const SimulatedSample> samples) {
    InvalidRates out;
    std::map<std::string, std::pair<std::size_t, std::size_t>> counts;
    for (const auto &s : samples) {
        if (s.status == SampleStatus::TransportFailure) {
            ++out.transport_failures;
            continue;
        }
        auto &[bad, total] = counts[s.question_id];
        ++total;
        ++out.answered;
        if (!s.is_valid()) {
            ++bad;
            ++out.invalid;
        }
    }
    for (const auto &[qid, c] : counts) {
        out.per_question[qid] = static_cast<double>(c.first) / static_cast<double>(c.second);
    }
    out.overall = out.answered == 0 ? 0.0 : static_cast<double>(out.invalid) / static_cast<double>(out.answered);
    return out;
}

} // namespace repsuite
