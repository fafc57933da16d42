#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "repsuite/core.hpp"
#include "repsuite/distributions.hpp"
#include "repsuite/ingestion.hpp"

namespace testing_support {

using namespace repsuite;

/// Test-side generator, deliberately separate from the library's streams.
using TestRng = std::mt19937_64;

inline double uniform01(TestRng &rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline std::size_t uniform_index(TestRng &rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline QuestionSpec ordinal(std::string id, std::vector<int> values, std::string topic = "t") {
    QuestionSpec q;
    q.id = std::move(id);
    q.text = "Question " + q.id;
    q.topic = std::move(topic);
    q.scale = ScaleKind::Ordinal;
    for (const int v : values) {
        q.responses.push_back({v, "Option " + std::to_string(v)});
    }
    return q;
}

inline QuestionSpec ordinal_range(std::string id, int lo, int hi, std::string topic = "t") {
    std::vector<int> values;
    for (int v = lo; v <= hi; ++v) {
        values.push_back(v);
    }
    return ordinal(std::move(id), std::move(values), std::move(topic));
}

inline QuestionSpec nominal(std::string id, std::vector<std::string> labels, std::string topic = "t") {
    QuestionSpec q;
    q.id = std::move(id);
    q.text = "Question " + q.id;
    q.topic = std::move(topic);
    q.scale = ScaleKind::Nominal;
    int v = 1;
    for (auto &l : labels) {
        q.responses.push_back({v++, std::move(l)});
    }
    return q;
}

/// The four-option agreement item used in the prompt figures.
inline QuestionSpec agree_question() {
    QuestionSpec q;
    q.id = "Q33";
    q.text = "For each of the following statements I read out, can you tell me how much you agree with each. "
             "When jobs are scarce, men should have more right to a job than women.";
    q.topic = "social values";
    q.responses = {{1, "Agree strongly"}, {2, "Agree"}, {3, "Disagree"}, {4, "Disagree strongly"}};
    return q;
}

/// Random pmf with some exact zeros mixed in.
inline std::vector<double> random_pmf(TestRng &rng, std::size_t k) {
    std::vector<double> p(k);
    double total = 0.0;
    for (auto &x : p) {
        x = uniform01(rng) < 0.2 ? 0.0 : uniform01(rng);
        total += x;
    }
    if (total == 0.0) {
        p[uniform_index(rng, 0, k - 1)] = 1.0;
        return p;
    }
    for (auto &x : p) {
        x /= total;
    }
    return p;
}

inline ResponseDistribution dist(const QuestionSpec &q, std::vector<double> mass) {
    return ResponseDistribution(q.id, q.values(), std::move(mass), 1.0);
}

inline SubgroupSpec group_filter(std::string id, std::string dimension, std::string field,
                                 std::vector<std::string> values) {
    return SubgroupSpec{std::move(id), std::move(dimension), {FilterCondition{std::move(field), std::move(values), {}, {}}}};
}

inline std::shared_ptr<const Demographics> demo(Demographics d) {
    return std::make_shared<const Demographics>(std::move(d));
}

/// Brute-force weighted tally: mass per response value over a subgroup's
/// answered records, straight from the definition.
inline std::map<int, double> weighted_tally_oracle(const std::vector<ResponseRecord> &records,
                                                   const SubgroupSpec &subgroup, const std::string &question_id) {
    std::map<int, double> numerator;
    double denominator = 0.0;
    for (const auto &r : records) {
        if (r.question_id != question_id || !r.response) {
            continue;
        }
        bool member = true;
        for (const auto &c : subgroup.filter) {
            const auto &d = r.demographic_values();
            const auto it = d.find(c.field);
            bool ok = it != d.end() &&
                      (c.values.empty() || std::find(c.values.begin(), c.values.end(), it->second) != c.values.end());
            member = member && ok;
        }
        if (!member) {
            continue;
        }
        numerator[*r.response] += r.weight;
        denominator += r.weight;
    }
    for (auto &[v, m] : numerator) {
        m /= denominator;
    }
    return numerator;
}

/// Textbook single-pass Pearson coefficient in extended precision.
inline double textbook_pearson(const std::vector<double> &x, const std::vector<double> &y) {
    long double n = static_cast<long double>(x.size());
    long double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const long double a = x[i];
        const long double b = y[i];
        sx += a;
        sy += b;
        sxx += a * a;
        syy += b * b;
        sxy += a * b;
    }
    const long double num = n * sxy - sx * sy;
    const long double den = std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
    return static_cast<double>(num / den);
}

} // namespace testing_support
