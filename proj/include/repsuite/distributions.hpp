#pragma once

#include <algorithm>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "core.hpp"
#include "ingestion.hpp"

namespace repsuite {

/// Survey-weighted pmf of one subgroup's answers to one question:
/// P_s(r|q) = sum_i w_i [x_i = r] / sum_i w_i over valid answers.
inline ResponseDistribution ground_truth_distribution(std::span<const ResponseRecord> records,
                                                      const SubgroupSpec &subgroup, const QuestionSpec &question) {
    std::vector<double> tally(question.responses.size(), 0.0);
    for (const auto &rec : records) {
        if (rec.question_id != question.id || !rec.response || !subgroup.matches(rec.demographic_values())) {
            continue;
        }
        if (const auto idx = question.index_of(*rec.response)) {
            tally[*idx] += rec.weight;
        }
    }
    return ResponseDistribution::from_tally(question, tally);
}

/// Respondent indices whose demographics satisfy the subgroup filter.
inline std::vector<std::size_t> subgroup_members(const SurveyData &data, const SubgroupSpec &subgroup) {
    std::vector<std::size_t> out;
    for (std::size_t r = 0; r < data.size(); ++r) {
        if (subgroup.matches(*data.respondents()[r].demographics)) {
            out.push_back(r);
        }
    }
    return out;
}

/// Table form over an explicit respondent set.
inline ResponseDistribution ground_truth_distribution(const SurveyData &data, std::span<const std::size_t> members,
                                                      const QuestionSpec &question) {
    const auto col = data.question_index(question.id);
    if (!col) {
        throw Error(ErrorKind::EmptyDistribution, "no data column for " + question.id);
    }
    std::vector<double> tally(question.responses.size(), 0.0);
    for (const auto r : members) {
        const auto &a = data.answer(r, *col);
        if (!a) {
            continue;
        }
        if (const auto idx = question.index_of(*a)) {
            tally[*idx] += data.respondents()[r].weight;
        }
    }
    return ResponseDistribution::from_tally(question, tally);
}

inline ResponseDistribution ground_truth_distribution(const SurveyData &data, const SubgroupSpec &subgroup,
                                                      const QuestionSpec &question) {
    const auto members = subgroup_members(data, subgroup);
    return ground_truth_distribution(data, members, question);
}

/// Uniform-weight empirical pmf over the model's valid samples for a question.
inline ResponseDistribution simulated_distribution(std::span<const SimulatedSample> samples,
                                                   std::string_view model_id, const QuestionSpec &question) {
    std::vector<double> tally(question.responses.size(), 0.0);
    for (const auto &s : samples) {
        if (s.model_id != model_id || s.question_id != question.id || !s.is_valid()) {
            continue;
        }
        if (const auto idx = question.index_of(*s.cleaned_value)) {
            tally[*idx] += 1.0;
        }
    }
    return ResponseDistribution::from_tally(question, tally);
}

/// Pools the weighted responses of everyone in any subgroup of the dimension,
/// then builds one distribution. A respondent matching two subgroups of the
/// same dimension counts once.
inline ResponseDistribution aggregate_by_dimension(std::span<const ResponseRecord> records,
                                                   std::span<const SubgroupSpec> subgroups,
                                                   std::string_view dimension, const QuestionSpec &question) {
    std::vector<double> tally(question.responses.size(), 0.0);
    for (const auto &rec : records) {
        if (rec.question_id != question.id || !rec.response) {
            continue;
        }
        const bool member = std::any_of(subgroups.begin(), subgroups.end(), [&](const SubgroupSpec &s) {
            return s.dimension == dimension && s.matches(rec.demographic_values());
        });
        if (!member) {
            continue;
        }
        if (const auto idx = question.index_of(*rec.response)) {
            tally[*idx] += rec.weight;
        }
    }
    return ResponseDistribution::from_tally(question, tally);
}

inline ResponseDistribution aggregate_by_dimension(const SurveyData &data, std::span<const SubgroupSpec> subgroups,
                                                   std::string_view dimension, const QuestionSpec &question) {
    std::vector<std::size_t> members;
    for (std::size_t r = 0; r < data.size(); ++r) {
        const auto &demo = *data.respondents()[r].demographics;
        if (std::any_of(subgroups.begin(), subgroups.end(),
                        [&](const SubgroupSpec &s) { return s.dimension == dimension && s.matches(demo); })) {
            members.push_back(r);
        }
    }
    return ground_truth_distribution(data, members, question);
}

/// Simulated counterpart: pools the valid samples of the given models.
inline ResponseDistribution aggregate_by_dimension(std::span<const SimulatedSample> samples,
                                                   std::span<const std::string> model_ids,
                                                   const QuestionSpec &question) {
    std::vector<double> tally(question.responses.size(), 0.0);
    for (const auto &s : samples) {
        if (s.question_id != question.id || !s.is_valid() ||
            std::find(model_ids.begin(), model_ids.end(), s.model_id) == model_ids.end()) {
            continue;
        }
        if (const auto idx = question.index_of(*s.cleaned_value)) {
            tally[*idx] += 1.0;
        }
    }
    return ResponseDistribution::from_tally(question, tally);
}

struct TopicAggregation {
    MeanMatrix means;
    std::vector<std::string> dropped_topics;
};

/// Topic-level means: for each subgroup, the unweighted mean of the present
/// normalised means of the topic's ordinal questions. Topics without any
/// ordinal question in the matrix are dropped.
inline TopicAggregation aggregate_by_topic(const MeanMatrix &question_means, const Catalog &catalog) {
    std::vector<std::string> kept;
    std::vector<std::vector<std::size_t>> columns;
    TopicAggregation out;
    for (const auto &topic : catalog.topics()) {
        std::vector<std::size_t> cols;
        for (const auto &q : catalog.questions) {
            if (q.topic != topic || !q.is_ordinal()) {
                continue;
            }
            if (const auto c = question_means.col_index(q.id)) {
                cols.push_back(*c);
            }
        }
        if (cols.empty()) {
            out.dropped_topics.push_back(topic);
            continue;
        }
        kept.push_back(topic);
        columns.push_back(std::move(cols));
    }
    out.means = MeanMatrix(question_means.row_ids(), kept);
    for (std::size_t r = 0; r < question_means.rows(); ++r) {
        for (std::size_t t = 0; t < kept.size(); ++t) {
            double sum = 0.0;
            std::size_t n = 0;
            for (const auto c : columns[t]) {
                if (const auto &v = question_means.at(r, c)) {
                    sum += *v;
                    ++n;
                }
            }
            if (n > 0) {
                out.means.set(r, t, sum / static_cast<double>(n));
            }
        }
    }
    return out;
}

/// CSV export: question_id, value, mass, n_effective.
inline void write_distributions_csv(std::ostream &out, std::span<const ResponseDistribution> dists) {
    csv::write_row(out, {"question_id", "value", "mass", "n_effective"});
    std::ostringstream num;
    num.precision(17);
    const auto fmt = [&](double v) {
        num.str({});
        num << v;
        return num.str();
    };
    for (const auto &d : dists) {
        for (std::size_t i = 0; i < d.support().size(); ++i) {
            csv::write_row(out, {d.question_id(), std::to_string(d.support()[i]), fmt(d.mass()[i]),
                                 fmt(d.n_effective())});
        }
    }
}

} // namespace repsuite
