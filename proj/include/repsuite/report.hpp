#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "calibration.hpp"
#include "core.hpp"
#include "distributions.hpp"
#include "ingestion.hpp"
#include "marginal.hpp"
#include "rng.hpp"
#include "structure.hpp"

namespace repsuite {

inline constexpr std::string_view kReportSchema = "repsuite-report/1";

struct EvaluateOptions {
    std::vector<Level> levels{Level::Question};
    std::size_t bounds_iterations = 0; ///< 0 skips calibration bounds
    std::optional<std::uint64_t> seed;
    std::size_t workers = 1;
};

struct DistanceRow {
    std::string model_id;
    std::string subgroup;
    std::string question_id;
    std::string metric; ///< "wasserstein" or "total_variation"
    double value = 0.0;
    double n_true = 0.0;
    double n_sim = 0.0;
};

struct VarianceRow {
    std::string model_id;
    std::string subgroup;
    std::string question_id;
    double var_true = 0.0;
    double var_sim = 0.0;
};

struct SubgroupSummary {
    std::string model_id;
    std::string series;
    std::string subgroup;
    std::string dimension;
    std::optional<double> dissimilarity;
    std::size_t n_questions = 0;
    std::size_t n_skipped = 0;
    std::optional<double> variance_true;
    std::optional<double> variance_sim;
    std::optional<std::string> error;
};

struct DimensionSummary {
    std::string series;
    std::string dimension;
    std::optional<double> dissimilarity;
    std::size_t n_questions = 0;
    std::optional<double> variance_true;
    std::optional<double> variance_sim;
    std::optional<std::string> error;
};

struct TopicSummary {
    std::string model_id;
    std::string subgroup;
    std::string topic;
    double dissimilarity = 0.0;
    std::optional<double> variance_true;
    std::optional<double> variance_sim;
    std::size_t n_questions = 0;
};

struct ModelQuality {
    std::string model_id;
    InvalidRates invalid;
    std::size_t modal_collapse = 0;
    std::size_t n_questions = 0;
    std::optional<double> mean_original;
    std::optional<double> mean_flipped;
};

struct SeriesStructure {
    std::string series;
    std::optional<CorrelationArtifacts> correlation;
    std::optional<std::string> error;
    std::optional<double> calibrated_position;
};

struct LevelStructure {
    Level level = Level::Question;
    std::size_t n_rows = 0;
    std::optional<CorrelationArtifacts> truth;
    std::optional<std::string> error;
    std::vector<SeriesStructure> series;
    std::optional<BoundPair> lower;
    std::optional<BoundPair> upper;
    std::vector<std::string> warnings;
};

/// Everything an evaluation run produces. `to_json` and the CSV writers read
/// from these same tables.
struct EvalReport {
    std::string config_hash;
    EvaluateOptions options;
    std::size_t n_questions = 0;
    std::size_t n_respondents = 0;
    std::size_t n_samples = 0;
    std::vector<std::string> warnings;
    std::vector<DistanceRow> distances;
    std::vector<VarianceRow> variances;
    std::vector<SubgroupSummary> by_subgroup;
    std::vector<DimensionSummary> by_dimension;
    std::vector<TopicSummary> by_topic;
    std::vector<ModelQuality> models;
    std::vector<std::pair<std::string, double>> true_nonresponse;
    std::vector<LevelStructure> structure;
};

namespace detail {

using Tally = std::vector<double>;

inline std::optional<ResponseDistribution> distribution_or_empty(const QuestionSpec &q, const Tally &t) {
    double total = 0.0;
    for (const double v : t) {
        total += v;
    }
    if (!(total > 0.0)) {
        return std::nullopt;
    }
    return ResponseDistribution::from_tally(q, t);
}

inline std::string hex64(std::uint64_t v) {
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << v;
    return out.str();
}

inline std::string describe(const std::exception &e) { return e.what(); }

} // namespace detail

/// Runs the full evaluation: marginal metrics per question, subgroup,
/// dimension and topic; invalid rates and modal collapse; correlation
/// structure per requested level with optional calibration bounds.
/// NoComparableQuestions and DegenerateStructure are recorded per section.
inline EvalReport evaluate(const Catalog &catalog, const SurveyData &human, std::span<const SimulatedSample> samples,
                           const EvaluateOptions &options) {
    if (options.bounds_iterations > 0 && !options.seed) {
        throw Error(ErrorKind::Config, "calibration bounds need an explicit seed");
    }
    EvalReport report;
    report.options = options;
    report.n_questions = catalog.questions.size();
    report.n_respondents = human.size();
    report.n_samples = samples.size();
    {
        std::uint64_t h = detail::fnv1a(json(catalog).dump());
        h = detail::splitmix64(h ^ human.size());
        h = detail::splitmix64(h ^ samples.size());
        h = detail::splitmix64(h ^ options.bounds_iterations);
        h = detail::splitmix64(h ^ options.seed.value_or(0));
        for (const auto l : options.levels) {
            h = detail::splitmix64(h ^ detail::fnv1a(to_string(l)));
        }
        report.config_hash = detail::hex64(h);
    }

    // ground truth per subgroup
    std::map<std::string, std::vector<std::size_t>> members;
    std::map<std::string, DistributionMap> truth;
    for (const auto &s : catalog.subgroups) {
        auto m = subgroup_members(human, s);
        std::size_t cells = 0;
        std::size_t missing = 0;
        for (const auto &q : catalog.questions) {
            const auto col = human.question_index(q.id);
            if (!col) {
                continue;
            }
            for (const auto r : m) {
                ++cells;
                if (!human.answer(r, *col)) {
                    ++missing;
                }
            }
            try {
                truth[s.id].emplace(q.id, ground_truth_distribution(human, m, q));
            } catch (const Error &e) {
                if (e.kind() != ErrorKind::EmptyDistribution) {
                    throw;
                }
            }
        }
        if (m.empty()) {
            report.warnings.push_back("subgroup " + s.id + " has no respondents");
        }
        report.true_nonresponse.emplace_back(s.id, cells == 0 ? 0.0
                                                              : static_cast<double>(missing) / static_cast<double>(cells));
        members[s.id] = std::move(m);
    }

    // simulated tallies per model
    std::map<std::string, std::map<std::string, detail::Tally>> tallies;
    std::map<std::string, std::vector<const SimulatedSample *>> by_model;
    std::map<std::string, std::map<std::string, std::pair<std::pair<double, std::size_t>, std::pair<double, std::size_t>>>>
        order_sums;
    for (const auto &s : samples) {
        by_model[s.model_id].push_back(&s);
        const auto *q = catalog.find_question(s.question_id);
        if (q == nullptr) {
            throw Error(ErrorKind::UnknownQuestion, "sample references unknown question " + s.question_id);
        }
        if (!s.is_valid()) {
            continue;
        }
        const auto idx = q->index_of(*s.cleaned_value);
        if (!idx) {
            continue;
        }
        auto &t = tallies[s.model_id][q->id];
        if (t.empty()) {
            t.assign(q->responses.size(), 0.0);
        }
        t[*idx] += 1.0;
        if (q->is_ordinal() && q->diameter() > 0.0) {
            auto &[orig, flip] = order_sums[s.model_id][q->id];
            auto &acc = s.flipped ? flip : orig;
            acc.first += q->normalized(*s.cleaned_value);
            ++acc.second;
        }
    }
    std::map<std::string, DistributionMap> simulated;
    for (const auto &[model, per_q] : tallies) {
        for (const auto &[qid, t] : per_q) {
            if (auto d = detail::distribution_or_empty(catalog.question(qid), t)) {
                simulated[model].emplace(qid, std::move(*d));
            }
        }
    }

    for (const auto &[model, list] : by_model) {
        ModelQuality mq;
        mq.model_id = model;
        std::vector<SimulatedSample> copy;
        copy.reserve(list.size());
        for (const auto *s : list) {
            copy.push_back(*s);
        }
        mq.invalid = invalid_rate(copy);
        if (const auto it = simulated.find(model); it != simulated.end()) {
            mq.modal_collapse = modal_collapse_count(it->second);
            mq.n_questions = it->second.size();
        }
        double so = 0.0;
        double sf = 0.0;
        std::size_t n = 0;
        for (const auto &[qid, sums] : order_sums[model]) {
            const auto &[orig, flip] = sums;
            if (orig.second > 0 && flip.second > 0) {
                so += orig.first / static_cast<double>(orig.second);
                sf += flip.first / static_cast<double>(flip.second);
                ++n;
            }
        }
        if (n > 0) {
            mq.mean_original = so / static_cast<double>(n);
            mq.mean_flipped = sf / static_cast<double>(n);
        }
        report.models.push_back(std::move(mq));
    }

    // marginal comparisons per (model, subgroup)
    std::map<std::string, std::map<std::string, std::string>> series_members; // series -> subgroup -> model
    for (const auto &[model, dists] : simulated) {
        const auto id = ModelId::parse(model);
        std::vector<const SubgroupSpec *> targets;
        if (id.subgroup) {
            const auto *s = catalog.find_subgroup(*id.subgroup);
            if (s == nullptr) {
                report.warnings.push_back("model " + model + " targets unknown subgroup " + *id.subgroup);
                continue;
            }
            targets.push_back(s);
            series_members[id.series()][s->id] = model;
        } else {
            for (const auto &s : catalog.subgroups) {
                targets.push_back(&s);
            }
        }
        for (const auto *s : targets) {
            SubgroupSummary row;
            row.model_id = model;
            row.series = id.series();
            row.subgroup = s->id;
            row.dimension = s->dimension;
            const auto &truth_s = truth[s->id];
            DistributionMap shared_sim;
            DistributionMap shared_true;
            std::map<std::string, std::pair<std::vector<double>, std::pair<std::vector<double>, std::vector<double>>>>
                topic_acc;
            for (const auto &[qid, pm] : dists) {
                const auto it = truth_s.find(qid);
                if (it == truth_s.end()) {
                    continue;
                }
                const auto &q = catalog.question(qid);
                try {
                    const double d = per_question_distance(pm, it->second, q);
                    report.distances.push_back({model, s->id, qid, q.is_ordinal() ? "wasserstein" : "total_variation",
                                                d, it->second.n_effective(), pm.n_effective()});
                    auto &acc = topic_acc[q.topic];
                    acc.first.push_back(d);
                    if (q.is_ordinal()) {
                        const double vt = normalized_variance(it->second, q);
                        const double vs = normalized_variance(pm, q);
                        report.variances.push_back({model, s->id, qid, vt, vs});
                        acc.second.first.push_back(vt);
                        acc.second.second.push_back(vs);
                    }
                    shared_sim.emplace(qid, pm);
                    shared_true.emplace(qid, it->second);
                } catch (const Error &e) {
                    report.warnings.push_back(model + "/" + s->id + "/" + qid + ": " + e.what());
                }
            }
            try {
                const auto d = mean_dissimilarity(dists, truth_s, catalog);
                row.dissimilarity = d.value;
                row.n_questions = d.n_questions;
                row.n_skipped = d.n_skipped;
            } catch (const Error &e) {
                row.error = e.what();
            }
            try {
                row.variance_true = mean_variance(shared_true, catalog).value;
                row.variance_sim = mean_variance(shared_sim, catalog).value;
            } catch (const Error &e) {
                if (!row.error) {
                    row.error = e.what();
                }
            }
            report.by_subgroup.push_back(std::move(row));
            for (const auto &topic : catalog.topics()) {
                const auto it = topic_acc.find(topic);
                if (it == topic_acc.end()) {
                    continue;
                }
                const auto mean = [](const std::vector<double> &v) -> std::optional<double> {
                    if (v.empty()) {
                        return std::nullopt;
                    }
                    double sum = 0.0;
                    for (const double x : v) {
                        sum += x;
                    }
                    return sum / static_cast<double>(v.size());
                };
                report.by_topic.push_back({model, s->id, topic, *mean(it->second.first), mean(it->second.second.first),
                                           mean(it->second.second.second), it->second.first.size()});
            }
        }
    }

    // dimension aggregation: pooled truth vs pooled simulated samples
    std::vector<std::pair<std::string, std::vector<std::string>>> dimension_series; // series -> models
    for (const auto &[series, sub_models] : series_members) {
        std::vector<std::string> ms;
        for (const auto &[sg, m] : sub_models) {
            ms.push_back(m);
        }
        dimension_series.emplace_back(series, ms);
    }
    for (const auto &[model, dists] : simulated) {
        if (!ModelId::parse(model).subgroup) {
            dimension_series.emplace_back(model, std::vector<std::string>{model});
        }
    }
    for (const auto &dimension : catalog.dimensions()) {
        const auto subs = catalog.subgroups_in(dimension);
        std::vector<SubgroupSpec> dim_subgroups;
        for (const auto *s : subs) {
            dim_subgroups.push_back(*s);
        }
        DistributionMap pooled_true;
        for (const auto &q : catalog.questions) {
            if (!human.question_index(q.id)) {
                continue;
            }
            try {
                pooled_true.emplace(q.id, aggregate_by_dimension(human, dim_subgroups, dimension, q));
            } catch (const Error &e) {
                if (e.kind() != ErrorKind::EmptyDistribution) {
                    throw;
                }
            }
        }
        for (const auto &[series, models] : dimension_series) {
            std::vector<std::string> used;
            const bool unsteered = models.size() == 1 && !ModelId::parse(models.front()).subgroup;
            for (const auto &m : models) {
                const auto id = ModelId::parse(m);
                if (unsteered || (id.subgroup && std::any_of(subs.begin(), subs.end(), [&](const SubgroupSpec *s) {
                                      return s->id == *id.subgroup;
                                  }))) {
                    used.push_back(m);
                }
            }
            if (used.empty()) {
                continue;
            }
            DistributionMap pooled_sim;
            for (const auto &q : catalog.questions) {
                detail::Tally t(q.responses.size(), 0.0);
                for (const auto &m : used) {
                    const auto mt = tallies.find(m);
                    if (mt == tallies.end()) {
                        continue;
                    }
                    const auto qt = mt->second.find(q.id);
                    if (qt == mt->second.end()) {
                        continue;
                    }
                    for (std::size_t i = 0; i < t.size(); ++i) {
                        t[i] += qt->second[i];
                    }
                }
                if (auto d = detail::distribution_or_empty(q, t)) {
                    pooled_sim.emplace(q.id, std::move(*d));
                }
            }
            DimensionSummary row;
            row.series = series;
            row.dimension = dimension;
            try {
                const auto d = mean_dissimilarity(pooled_sim, pooled_true, catalog);
                row.dissimilarity = d.value;
                row.n_questions = d.n_questions;
                DistributionMap st;
                DistributionMap ss;
                for (const auto &[qid, p] : pooled_sim) {
                    if (const auto it = pooled_true.find(qid); it != pooled_true.end()) {
                        ss.emplace(qid, p);
                        st.emplace(qid, it->second);
                    }
                }
                row.variance_true = mean_variance(st, catalog).value;
                row.variance_sim = mean_variance(ss, catalog).value;
            } catch (const Error &e) {
                row.error = e.what();
            }
            report.by_dimension.push_back(std::move(row));
        }
    }

    // correlation structure
    std::vector<std::string> rows;
    for (const auto &s : catalog.subgroups) {
        if (!truth[s.id].empty()) {
            rows.push_back(s.id);
        }
    }
    CellDistributions true_cells;
    for (const auto &r : rows) {
        for (const auto &[qid, d] : truth[r]) {
            true_cells.emplace(CellKey{r, qid}, d);
        }
    }
    std::optional<SplitHalfInput> split_input;
    for (const auto level : options.levels) {
        LevelStructure ls;
        ls.level = level;
        ls.n_rows = rows.size();
        std::optional<MeanMatrix> a_true;
        try {
            a_true = mean_matrix(true_cells, catalog, rows, level);
            ls.truth = correlation_matrix(*a_true);
        } catch (const Error &e) {
            ls.error = e.what();
        }
        for (const auto &[series, sub_models] : series_members) {
            SeriesStructure ss;
            ss.series = series;
            if (!ls.truth) {
                ss.error = "no reference structure";
                ls.series.push_back(std::move(ss));
                continue;
            }
            try {
                CellDistributions sim_cells;
                for (const auto &[sg, model] : sub_models) {
                    for (const auto &[qid, d] : simulated[model]) {
                        sim_cells.emplace(CellKey{sg, qid}, d);
                    }
                }
                auto c = correlation_matrix(mean_matrix(sim_cells, catalog, rows, level));
                c.comparison = structure_similarity(*ls.truth, c);
                ss.correlation = std::move(c);
            } catch (const Error &e) {
                ss.error = e.what();
            }
            ls.series.push_back(std::move(ss));
        }
        if (options.bounds_iterations > 0 && a_true && ls.truth) {
            try {
                ls.lower = permutation_null(*a_true, options.bounds_iterations, *options.seed, level, options.workers);
            } catch (const Error &e) {
                ls.warnings.push_back(std::string("lower bound: ") + e.what());
            }
            try {
                if (!split_input) {
                    std::vector<SubgroupSpec> subs;
                    for (const auto &r : rows) {
                        subs.push_back(*catalog.find_subgroup(r));
                    }
                    split_input = SplitHalfInput::prepare(human, catalog, subs);
                    for (const auto &w : split_input->warnings) {
                        report.warnings.push_back(w);
                    }
                }
                ls.upper = split_half(*split_input, catalog, options.bounds_iterations, *options.seed, level,
                                      options.workers);
            } catch (const Error &e) {
                ls.warnings.push_back(std::string("upper bound: ") + e.what());
            }
            for (auto &ss : ls.series) {
                if (ss.correlation && ss.correlation->comparison && ls.lower && ls.upper) {
                    ss.calibrated_position =
                        calibrated_position(ss.correlation->comparison->rho, ls.lower->rho.mean, ls.upper->rho.mean);
                }
            }
        }
        report.structure.push_back(std::move(ls));
    }
    return report;
}

// ---------------------------------------------------------------------------
// Serialisation

namespace detail {

inline json opt(const std::optional<double> &v) { return v ? json(*v) : json(nullptr); }
inline json opt(const std::optional<std::string> &v) { return v ? json(*v) : json(nullptr); }

inline json bounds_json(const std::optional<BoundPair> &b) {
    if (!b) {
        return nullptr;
    }
    return json{{"rho", b->rho}, {"rmse", b->rmse}};
}

/// Metric rows x (series..., lower, upper), the layout of the published
/// structure tables.
inline json structure_table(const LevelStructure &ls) {
    json columns = json::array();
    json rho = json::array();
    json err = json::array();
    for (const auto &s : ls.series) {
        columns.push_back(s.series);
        if (s.correlation && s.correlation->comparison) {
            rho.push_back(opt(s.correlation->comparison->rho));
            err.push_back(s.correlation->comparison->rmse);
        } else {
            rho.push_back(nullptr);
            err.push_back(nullptr);
        }
    }
    columns.push_back("lower");
    columns.push_back("upper");
    rho.push_back(ls.lower ? opt(ls.lower->rho.mean) : json(nullptr));
    rho.push_back(ls.upper ? opt(ls.upper->rho.mean) : json(nullptr));
    err.push_back(ls.lower ? opt(ls.lower->rmse.mean) : json(nullptr));
    err.push_back(ls.upper ? opt(ls.upper->rmse.mean) : json(nullptr));
    return json{{"columns", std::move(columns)},
                {"rows", json::array({json{{"metric", "rho"}, {"values", std::move(rho)}},
                                      json{{"metric", "rmse"}, {"values", std::move(err)}}})}};
}

} // namespace detail

inline json to_json(const EvalReport &r) {
    json levels = json::array();
    for (const auto l : r.options.levels) {
        levels.push_back(std::string(to_string(l)));
    }
    json per_question = json::array();
    for (const auto &d : r.distances) {
        per_question.push_back(json{{"model_id", d.model_id},
                                    {"subgroup", d.subgroup},
                                    {"question_id", d.question_id},
                                    {"metric", d.metric},
                                    {"value", d.value},
                                    {"n_true", d.n_true},
                                    {"n_sim", d.n_sim}});
    }
    json variances = json::array();
    for (const auto &v : r.variances) {
        variances.push_back(json{{"model_id", v.model_id},
                                 {"subgroup", v.subgroup},
                                 {"question_id", v.question_id},
                                 {"var_true", v.var_true},
                                 {"var_sim", v.var_sim}});
    }
    json by_subgroup = json::array();
    for (const auto &s : r.by_subgroup) {
        by_subgroup.push_back(json{{"model_id", s.model_id},
                                   {"series", s.series},
                                   {"subgroup", s.subgroup},
                                   {"dimension", s.dimension},
                                   {"dissimilarity", detail::opt(s.dissimilarity)},
                                   {"n_questions", s.n_questions},
                                   {"n_skipped", s.n_skipped},
                                   {"variance_true", detail::opt(s.variance_true)},
                                   {"variance_sim", detail::opt(s.variance_sim)},
                                   {"error", detail::opt(s.error)}});
    }
    json by_dimension = json::array();
    for (const auto &d : r.by_dimension) {
        by_dimension.push_back(json{{"series", d.series},
                                    {"dimension", d.dimension},
                                    {"dissimilarity", detail::opt(d.dissimilarity)},
                                    {"n_questions", d.n_questions},
                                    {"variance_true", detail::opt(d.variance_true)},
                                    {"variance_sim", detail::opt(d.variance_sim)},
                                    {"error", detail::opt(d.error)}});
    }
    json by_topic = json::array();
    for (const auto &t : r.by_topic) {
        by_topic.push_back(json{{"model_id", t.model_id},
                                {"subgroup", t.subgroup},
                                {"topic", t.topic},
                                {"dissimilarity", t.dissimilarity},
                                {"variance_true", detail::opt(t.variance_true)},
                                {"variance_sim", detail::opt(t.variance_sim)},
                                {"n_questions", t.n_questions}});
    }
    json invalid = json::array();
    json collapse = json::array();
    json order = json::array();
    for (const auto &m : r.models) {
        invalid.push_back(json{{"model_id", m.model_id},
                               {"overall", m.invalid.overall},
                               {"invalid", m.invalid.invalid},
                               {"answered", m.invalid.answered},
                               {"transport_failures", m.invalid.transport_failures},
                               {"per_question", m.invalid.per_question}});
        collapse.push_back(json{{"model_id", m.model_id}, {"count", m.modal_collapse}, {"n_questions", m.n_questions}});
        std::optional<double> diff;
        if (m.mean_original && m.mean_flipped) {
            diff = *m.mean_original - *m.mean_flipped;
        }
        order.push_back(json{{"model_id", m.model_id},
                             {"mean_original", detail::opt(m.mean_original)},
                             {"mean_flipped", detail::opt(m.mean_flipped)},
                             {"difference", detail::opt(diff)}});
    }
    json nonresponse = json::array();
    for (const auto &[sg, rate] : r.true_nonresponse) {
        nonresponse.push_back(json{{"subgroup", sg}, {"rate", rate}});
    }

    json structure = json::object();
    for (const auto &ls : r.structure) {
        json models = json::array();
        json sim = json::object();
        for (const auto &s : ls.series) {
            json m{{"series", s.series},
                   {"rho", nullptr},
                   {"rmse", nullptr},
                   {"n_pairs", 0},
                   {"dropped_columns", json::array()},
                   {"calibrated_position", detail::opt(s.calibrated_position)},
                   {"error", detail::opt(s.error)}};
            if (s.correlation) {
                m["dropped_columns"] = s.correlation->dropped_columns;
                if (s.correlation->comparison) {
                    m["rho"] = detail::opt(s.correlation->comparison->rho);
                    m["rmse"] = s.correlation->comparison->rmse;
                    m["n_pairs"] = s.correlation->comparison->n_pairs;
                }
                sim[s.series] = *s.correlation;
            }
            models.push_back(std::move(m));
        }
        structure[std::string(to_string(ls.level))] =
            json{{"n_rows", ls.n_rows},
                 {"table", detail::structure_table(ls)},
                 {"models", std::move(models)},
                 {"bounds", json{{"lower", detail::bounds_json(ls.lower)}, {"upper", detail::bounds_json(ls.upper)}}},
                 {"correlation", json{{"true", ls.truth ? json(*ls.truth) : json(nullptr)}, {"sim", std::move(sim)}}},
                 {"warnings", ls.warnings},
                 {"error", detail::opt(ls.error)}};
    }

    return json{{"schema", kReportSchema},
                {"provenance",
                 json{{"config_hash", r.config_hash},
                      {"seed", r.options.seed ? json(*r.options.seed) : json(nullptr)},
                      {"bounds_iterations", r.options.bounds_iterations},
                      {"levels", std::move(levels)},
                      {"questions", r.n_questions},
                      {"respondents", r.n_respondents},
                      {"samples", r.n_samples}}},
                {"warnings", r.warnings},
                {"marginal",
                 json{{"per_question", std::move(per_question)},
                      {"variances", std::move(variances)},
                      {"by_subgroup", std::move(by_subgroup)},
                      {"by_dimension", std::move(by_dimension)},
                      {"by_topic", std::move(by_topic)},
                      {"invalid_rates", std::move(invalid)},
                      {"true_nonresponse", std::move(nonresponse)},
                      {"modal_collapse", std::move(collapse)},
                      {"order_effects", std::move(order)}}},
                {"structure", std::move(structure)}};
}

// ---------------------------------------------------------------------------
// CSV sidecars

namespace detail {

inline std::string num(double v) {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
}

inline std::ofstream open_out(const std::filesystem::path &path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw Error(ErrorKind::Io, "cannot write " + path.string());
    }
    return out;
}

} // namespace detail

/// Writes report.json plus distances.csv, variances.csv, corr_true.csv,
/// corr_sim.csv, dropped_columns.csv and (with bounds) bounds_trace.csv.
/// A second level gets its own corr_*_<level>.csv files.
inline std::vector<std::filesystem::path> write_report(const EvalReport &report, const std::filesystem::path &dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;
    {
        auto out = detail::open_out(dir / "report.json");
        out << to_json(report).dump(2) << '\n';
        written.push_back(dir / "report.json");
    }
    {
        auto out = detail::open_out(dir / "distances.csv");
        csv::write_row(out, {"model_id", "subgroup", "question_id", "metric", "value", "n_true", "n_sim"});
        for (const auto &d : report.distances) {
            csv::write_row(out, {d.model_id, d.subgroup, d.question_id, d.metric, detail::num(d.value),
                                 detail::num(d.n_true), detail::num(d.n_sim)});
        }
        written.push_back(dir / "distances.csv");
    }
    {
        auto out = detail::open_out(dir / "variances.csv");
        csv::write_row(out, {"model_id", "subgroup", "question_id", "var_true", "var_sim"});
        for (const auto &v : report.variances) {
            csv::write_row(out, {v.model_id, v.subgroup, v.question_id, detail::num(v.var_true), detail::num(v.var_sim)});
        }
        written.push_back(dir / "variances.csv");
    }
    auto dropped = detail::open_out(dir / "dropped_columns.csv");
    csv::write_row(dropped, {"level", "matrix", "column"});
    written.push_back(dir / "dropped_columns.csv");
    bool any_bounds = false;
    for (std::size_t i = 0; i < report.structure.size(); ++i) {
        const auto &ls = report.structure[i];
        const std::string suffix = i == 0 ? "" : "_" + std::string(to_string(ls.level));
        const std::string level(to_string(ls.level));
        if (ls.truth) {
            auto out = detail::open_out(dir / ("corr_true" + suffix + ".csv"));
            write_correlation_csv(out, *ls.truth);
            written.push_back(dir / ("corr_true" + suffix + ".csv"));
            for (const auto &c : ls.truth->dropped_columns) {
                csv::write_row(dropped, {level, "true", c});
            }
        }
        auto out = detail::open_out(dir / ("corr_sim" + suffix + ".csv"));
        bool header = true;
        for (const auto &s : ls.series) {
            if (!s.correlation) {
                continue;
            }
            write_correlation_csv(out, *s.correlation, s.series, header);
            header = false;
            for (const auto &c : s.correlation->dropped_columns) {
                csv::write_row(dropped, {level, s.series, c});
            }
        }
        written.push_back(dir / ("corr_sim" + suffix + ".csv"));
        any_bounds = any_bounds || ls.lower || ls.upper;
    }
    if (any_bounds) {
        auto out = detail::open_out(dir / "bounds_trace.csv");
        bool header = true;
        for (const auto &ls : report.structure) {
            if (ls.lower) {
                write_bounds_trace(out, *ls.lower, "lower", header);
                header = false;
            }
            if (ls.upper) {
                write_bounds_trace(out, *ls.upper, "upper", header);
                header = false;
            }
        }
        written.push_back(dir / "bounds_trace.csv");
    }
    return written;
}

} // namespace repsuite
