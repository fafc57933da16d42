#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "core.hpp"
#include "distributions.hpp"
#include "ingestion.hpp"
#include "rng.hpp"

namespace repsuite {

/// Parameters of a latent-factor synthetic survey population.
///
/// Each respondent draws a latent vector z ~ N(mu_s, spread^2 I) around its
/// subgroup mean; question q scores y = loading_q . z + noise * e and the
/// score is cut into the question's categories by equal-width thresholds
/// spanning [-threshold_span, threshold_span].
struct SynthConfig {
    std::size_t n_subgroups = 10;
    std::size_t n_respondents = 1000; ///< per subgroup
    std::vector<std::pair<std::string, std::size_t>> topics{{"topic_a", 10}, {"topic_b", 10},
                                                            {"topic_c", 10}, {"topic_d", 10}};
    std::size_t latent_dims = 3;
    std::vector<std::vector<double>> loadings;       ///< question x k; generated when empty
    std::vector<std::vector<double>> subgroup_means; ///< subgroup x k; generated when empty
    double subgroup_spread = 1.0;                    ///< sd of generated subgroup means
    double respondent_spread = 1.0;
    double noise = 0.5;
    int scale_size = 4;
    std::vector<int> scale_sizes; ///< per question; overrides scale_size when given
    double threshold_span = 2.0;
    std::size_t nominal_questions = 0; ///< the last n questions are marked nominal
    double nonresponse_rate = 0.0;
    std::uint64_t seed = 1;

    std::size_t n_questions() const noexcept {
        std::size_t n = 0;
        for (const auto &[t, c] : topics) {
            n += c;
        }
        return n;
    }

    int scale_of(std::size_t question) const {
        return scale_sizes.empty() ? scale_size : scale_sizes.at(question);
    }

    void validate() const {
        const auto fail = [](const std::string &m) { throw Error(ErrorKind::Config, m); };
        if (n_subgroups < 1 || n_respondents < 1 || latent_dims < 1) {
            fail("subgroup, respondent and latent-dimension counts must be at least 1");
        }
        if (topics.empty() || n_questions() == 0) {
            fail("synthetic config has zero questions");
        }
        for (const auto &[t, c] : topics) {
            if (c < 1) {
                fail("topic " + t + " has zero questions");
            }
        }
        if (!scale_sizes.empty() && scale_sizes.size() != n_questions()) {
            fail("scale_sizes must list one size per question");
        }
        for (std::size_t q = 0; q < n_questions(); ++q) {
            if (scale_of(q) < 2) {
                fail("scale sizes must be at least 2");
            }
        }
        if (!loadings.empty()) {
            if (loadings.size() != n_questions()) {
                fail("loadings must have one row per question");
            }
            for (const auto &row : loadings) {
                if (row.size() != latent_dims) {
                    fail("loading rows must have latent_dims entries");
                }
                for (const double v : row) {
                    if (!std::isfinite(v)) {
                        fail("loadings must be finite");
                    }
                }
            }
        }
        if (!subgroup_means.empty()) {
            if (subgroup_means.size() != n_subgroups) {
                fail("subgroup_means must have one row per subgroup");
            }
            for (const auto &row : subgroup_means) {
                if (row.size() != latent_dims) {
                    fail("subgroup mean rows must have latent_dims entries");
                }
                for (const double v : row) {
                    if (!std::isfinite(v)) {
                        fail("subgroup means must be finite");
                    }
                }
            }
        }
        if (!(respondent_spread >= 0.0) || !(noise >= 0.0) || !(subgroup_spread >= 0.0) ||
            !(threshold_span > 0.0)) {
            fail("spreads and noise must be non-negative and threshold_span positive");
        }
        if (!(nonresponse_rate >= 0.0 && nonresponse_rate < 1.0)) {
            fail("nonresponse_rate must lie in [0, 1)");
        }
        if (nominal_questions > n_questions()) {
            fail("more nominal questions than questions");
        }
    }
};

inline void to_json(json &j, const SynthConfig &c) {
    json topics = json::array();
    for (const auto &[t, n] : c.topics) {
        topics.push_back(json{{"topic", t}, {"questions", n}});
    }
    j = json{{"n_subgroups", c.n_subgroups},
             {"n_respondents", c.n_respondents},
             {"topics", std::move(topics)},
             {"latent_dims", c.latent_dims},
             {"loadings", c.loadings},
             {"subgroup_means", c.subgroup_means},
             {"subgroup_spread", c.subgroup_spread},
             {"respondent_spread", c.respondent_spread},
             {"noise", c.noise},
             {"scale_size", c.scale_size},
             {"scale_sizes", c.scale_sizes},
             {"threshold_span", c.threshold_span},
             {"nominal_questions", c.nominal_questions},
             {"nonresponse_rate", c.nonresponse_rate},
             {"seed", c.seed}};
}

inline void from_json(const json &j, SynthConfig &c) {
    c = SynthConfig{};
    c.n_subgroups = j.value("n_subgroups", c.n_subgroups);
    c.n_respondents = j.value("n_respondents", c.n_respondents);
    if (j.contains("topics")) {
        c.topics.clear();
        for (const auto &t : j.at("topics")) {
            c.topics.emplace_back(t.at("topic").get<std::string>(), t.at("questions").get<std::size_t>());
        }
    }
    c.latent_dims = j.value("latent_dims", c.latent_dims);
    c.loadings = j.value("loadings", c.loadings);
    c.subgroup_means = j.value("subgroup_means", c.subgroup_means);
    c.subgroup_spread = j.value("subgroup_spread", c.subgroup_spread);
    c.respondent_spread = j.value("respondent_spread", c.respondent_spread);
    c.noise = j.value("noise", c.noise);
    c.scale_size = j.value("scale_size", c.scale_size);
    c.scale_sizes = j.value("scale_sizes", c.scale_sizes);
    c.threshold_span = j.value("threshold_span", c.threshold_span);
    c.nominal_questions = j.value("nominal_questions", c.nominal_questions);
    c.nonresponse_rate = j.value("nonresponse_rate", c.nonresponse_rate);
    c.seed = j.value("seed", c.seed);
}

struct SynthPopulation {
    Catalog catalog;
    SurveyData data;
    MeanMatrix analytic_means; ///< subgroup x ordinal question, expected normalised means
    std::vector<std::vector<double>> loadings;
    std::vector<std::vector<double>> subgroup_means;
};

namespace detail {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Category index of a score under equal-width thresholds.
inline int discretize(double score, int categories, double span) {
    const double width = 2.0 * span / categories;
    const double pos = std::floor((score + span) / width);
    return static_cast<int>(std::clamp(pos, 0.0, static_cast<double>(categories - 1)));
}

/// Probability of each category when the score is N(mean, sd^2).
inline std::vector<double> category_probabilities(double mean, double sd, int categories, double span) {
    std::vector<double> p(static_cast<std::size_t>(categories), 0.0);
    if (sd <= 0.0) {
        p[static_cast<std::size_t>(discretize(mean, categories, span))] = 1.0;
        return p;
    }
    const double width = 2.0 * span / categories;
    double prev = 0.0;
    for (int c = 0; c < categories; ++c) {
        const double upper = c == categories - 1 ? 1.0 : normal_cdf((-span + (c + 1) * width - mean) / sd);
        p[static_cast<std::size_t>(c)] = upper - prev;
        prev = upper;
    }
    return p;
}

inline std::string subgroup_id(std::size_t s) {
    std::string n = std::to_string(s + 1);
    return "g" + std::string(n.size() < 2 ? 2 - n.size() : 0, '0') + n;
}

inline std::string question_id(std::size_t q) {
    std::string n = std::to_string(q + 1);
    return "S" + std::string(n.size() < 3 ? 3 - n.size() : 0, '0') + n;
}

} // namespace detail

/// Builds a synthetic population together with its catalog and the analytic
/// subgroup x question mean matrix the empirical means converge to.
inline SynthPopulation generate_population(const SynthConfig &config) {
    config.validate();
    const std::size_t nq = config.n_questions();
    const std::size_t k = config.latent_dims;
    SynthPopulation out;

    out.loadings = config.loadings;
    if (out.loadings.empty()) {
        auto rng = seeded_rng(config.seed, "synth/loadings");
        out.loadings.assign(nq, std::vector<double>(k));
        for (auto &row : out.loadings) {
            double norm = 0.0;
            for (auto &v : row) {
                v = rng.normal();
                norm += v * v;
            }
            norm = std::sqrt(norm);
            for (auto &v : row) {
                v = norm > 0.0 ? v / norm : 0.0;
            }
        }
    }
    out.subgroup_means = config.subgroup_means;
    if (out.subgroup_means.empty()) {
        auto rng = seeded_rng(config.seed, "synth/means");
        out.subgroup_means.assign(config.n_subgroups, std::vector<double>(k));
        for (auto &row : out.subgroup_means) {
            for (auto &v : row) {
                v = config.subgroup_spread * rng.normal();
            }
        }
    }

    auto &catalog = out.catalog;
    catalog.demographics.push_back({"group", "Synthetic subgroup membership"});
    std::size_t q = 0;
    for (const auto &[topic, count] : config.topics) {
        for (std::size_t i = 0; i < count; ++i, ++q) {
            QuestionSpec spec;
            spec.id = detail::question_id(q);
            spec.text = "Synthetic item " + std::to_string(q + 1) + " (" + topic + ")";
            spec.topic = topic;
            spec.scale = q >= nq - config.nominal_questions ? ScaleKind::Nominal : ScaleKind::Ordinal;
            for (int c = 1; c <= config.scale_of(q); ++c) {
                spec.responses.push_back({c, "Level " + std::to_string(c)});
            }
            catalog.questions.push_back(std::move(spec));
        }
    }
    const auto &dims = known_dimensions();
    for (std::size_t s = 0; s < config.n_subgroups; ++s) {
        const auto id = detail::subgroup_id(s);
        catalog.subgroups.push_back({id, dims[s % dims.size()], {FilterCondition{"group", {id}, {}, {}}}});
    }

    std::vector<std::string> qids;
    for (const auto &spec : catalog.questions) {
        qids.push_back(spec.id);
    }
    out.data = SurveyData(qids);
    std::vector<std::optional<int>> answers(nq);
    std::vector<double> z(k);
    for (std::size_t s = 0; s < config.n_subgroups; ++s) {
        const auto sid = detail::subgroup_id(s);
        auto demo = std::make_shared<const Demographics>(Demographics{{"group", sid}});
        auto rng = seeded_rng(config.seed, "synth/subgroup/" + std::to_string(s));
        for (std::size_t r = 0; r < config.n_respondents; ++r) {
            for (std::size_t d = 0; d < k; ++d) {
                z[d] = out.subgroup_means[s][d] + config.respondent_spread * rng.normal();
            }
            for (std::size_t i = 0; i < nq; ++i) {
                double y = 0.0;
                for (std::size_t d = 0; d < k; ++d) {
                    y += out.loadings[i][d] * z[d];
                }
                y += config.noise * rng.normal();
                const int cat = detail::discretize(y, config.scale_of(i), config.threshold_span);
                const bool missing = config.nonresponse_rate > 0.0 && rng.bernoulli(config.nonresponse_rate);
                answers[i] = missing ? std::nullopt : std::optional<int>(cat + 1);
            }
            out.data.add_respondent(Respondent{sid + "_" + std::to_string(r + 1), 1.0, demo}, answers);
        }
    }

    std::vector<std::string> row_ids;
    for (std::size_t s = 0; s < config.n_subgroups; ++s) {
        row_ids.push_back(detail::subgroup_id(s));
    }
    std::vector<std::string> ordinal_ids;
    std::vector<std::size_t> ordinal_index;
    for (std::size_t i = 0; i < nq; ++i) {
        if (catalog.questions[i].is_ordinal()) {
            ordinal_ids.push_back(catalog.questions[i].id);
            ordinal_index.push_back(i);
        }
    }
    out.analytic_means = MeanMatrix(row_ids, ordinal_ids);
    for (std::size_t s = 0; s < config.n_subgroups; ++s) {
        for (std::size_t c = 0; c < ordinal_index.size(); ++c) {
            const auto i = ordinal_index[c];
            double mean = 0.0;
            double norm2 = 0.0;
            for (std::size_t d = 0; d < k; ++d) {
                mean += out.loadings[i][d] * out.subgroup_means[s][d];
                norm2 += out.loadings[i][d] * out.loadings[i][d];
            }
            const double sd = std::sqrt(norm2 * config.respondent_spread * config.respondent_spread +
                                        config.noise * config.noise);
            const int cats = config.scale_of(i);
            const auto p = detail::category_probabilities(mean, sd, cats, config.threshold_span);
            double expected = 0.0;
            for (int c = 0; c < cats; ++c) {
                expected += p[static_cast<std::size_t>(c)] * c / static_cast<double>(cats - 1);
            }
            out.analytic_means.set(s, c, expected);
        }
    }
    return out;
}

/// Draws n i.i.d. answers from a distribution, packaged as valid samples.
inline std::vector<SimulatedSample> sample_from_distribution(const ResponseDistribution &dist,
                                                             const QuestionSpec &question, std::string model_id,
                                                             std::size_t n, std::uint64_t seed) {
    auto rng = seeded_rng(seed, "perfect/" + model_id + "/" + question.id);
    std::vector<double> cdf(dist.mass().size());
    double acc = 0.0;
    for (std::size_t i = 0; i < cdf.size(); ++i) {
        acc += dist.mass()[i];
        cdf[i] = acc;
    }
    std::vector<SimulatedSample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = rng.uniform() * acc;
        std::size_t idx = 0;
        while (idx + 1 < cdf.size() && u >= cdf[idx]) {
            ++idx;
        }
        while (dist.mass()[idx] <= 0.0 && idx > 0) {
            --idx;
        }
        const int value = dist.support()[idx];
        SimulatedSample s;
        s.model_id = model_id;
        s.question_id = question.id;
        s.raw_text = question.render(value);
        s.flipped = false;
        s.cleaned_value = value;
        s.status = SampleStatus::Valid;
        s.temperature = 0.0;
        s.seed_info = std::to_string(seed) + "/" + std::to_string(i);
        out.push_back(std::move(s));
    }
    return out;
}

/// The ideal steered model: draws from the subgroup's own weighted pmf.
inline std::vector<SimulatedSample> perfect_model_sampler(const SurveyData &data, const SubgroupSpec &subgroup,
                                                          const QuestionSpec &question, std::size_t n,
                                                          std::uint64_t seed) {
    const auto dist = ground_truth_distribution(data, subgroup, question);
    return sample_from_distribution(dist, question, "perfect:" + subgroup.id, n, seed);
}

inline std::vector<SimulatedSample> perfect_model_sampler(std::span<const ResponseRecord> records,
                                                          const SubgroupSpec &subgroup, const QuestionSpec &question,
                                                          std::size_t n, std::uint64_t seed) {
    const auto dist = ground_truth_distribution(records, subgroup, question);
    return sample_from_distribution(dist, question, "perfect:" + subgroup.id, n, seed);
}

/// Log records for one steered series "<method>:<subgroup>": n answers per
/// subgroup x question drawn from the subgroup's own pmf. With
/// `shuffle_columns`, each question draws from a random permutation of the
/// subgroups' pmfs, which keeps every marginal but destroys the structure.
inline std::vector<RawGeneration> fixture_generations(const SynthPopulation &population, const std::string &method,
                                                      std::size_t n, std::uint64_t seed, bool shuffle_columns) {
    const auto &catalog = population.catalog;
    std::vector<std::vector<std::size_t>> members;
    for (const auto &s : catalog.subgroups) {
        members.push_back(subgroup_members(population.data, s));
    }
    std::vector<RawGeneration> out;
    out.reserve(n * catalog.subgroups.size() * catalog.questions.size());
    std::vector<std::size_t> source(catalog.subgroups.size());
    for (const auto &q : catalog.questions) {
        std::iota(source.begin(), source.end(), std::size_t{0});
        if (shuffle_columns) {
            auto rng = seeded_rng(seed, "shuffle/" + method + "/" + q.id);
            rng.shuffle(std::span(source));
        }
        for (std::size_t s = 0; s < catalog.subgroups.size(); ++s) {
            const auto dist = ground_truth_distribution(population.data, members[source[s]], q);
            const auto model_id = method + ":" + catalog.subgroups[s].id;
            auto samples = sample_from_distribution(dist, q, model_id, n, seed);
            for (std::size_t i = 0; i < samples.size(); ++i) {
                RawGeneration g;
                g.model_id = model_id;
                g.question_id = q.id;
                g.raw_text = std::move(samples[i].raw_text);
                g.temperature = 1.0;
                g.sample_index = static_cast<std::int64_t>(i);
                g.seed_info = std::move(samples[i].seed_info);
                out.push_back(std::move(g));
            }
        }
    }
    return out;
}

/// Largest support the transport oracle accepts.
inline constexpr std::size_t kOracleMaxSupport = 8;

/// Exact minimum-cost transport between two pmfs via successive shortest
/// augmenting paths (Bellman-Ford on the residual network). `cost` is
/// row-major, p.size() x q.size(). Test oracle only.
inline double brute_force_transport(std::span<const double> p, std::span<const double> q,
                                    std::span<const double> cost) {
    const std::size_t m = p.size();
    const std::size_t n = q.size();
    if (m > kOracleMaxSupport || n > kOracleMaxSupport) {
        throw Error(ErrorKind::OracleScaleExceeded, "transport oracle supports at most 8 support points");
    }
    if (cost.size() != m * n) {
        throw Error(ErrorKind::InvalidArgument, "cost matrix must be p.size() x q.size()");
    }
    // nodes: 0 = source, 1..m supplies, m+1..m+n demands, m+n+1 = sink
    struct Edge {
        std::size_t to;
        double cap;
        double cost;
        std::size_t rev;
    };
    const std::size_t nodes = m + n + 2;
    const std::size_t source = 0;
    const std::size_t sink = m + n + 1;
    std::vector<std::vector<Edge>> g(nodes);
    const auto add = [&](std::size_t a, std::size_t b, double cap, double c) {
        g[a].push_back({b, cap, c, g[b].size()});
        g[b].push_back({a, 0.0, -c, g[a].size() - 1});
    };
    for (std::size_t i = 0; i < m; ++i) {
        add(source, 1 + i, p[i], 0.0);
    }
    for (std::size_t j = 0; j < n; ++j) {
        add(1 + m + j, sink, q[j], 0.0);
    }
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            add(1 + i, 1 + m + j, std::numeric_limits<double>::infinity(), cost[i * n + j]);
        }
    }
    constexpr double eps = 1e-15;
    double total = 0.0;
    for (;;) {
        std::vector<double> dist(nodes, std::numeric_limits<double>::infinity());
        std::vector<std::size_t> prev_node(nodes, nodes);
        std::vector<std::size_t> prev_edge(nodes, 0);
        dist[source] = 0.0;
        for (std::size_t pass = 0; pass + 1 < nodes; ++pass) {
            bool changed = false;
            for (std::size_t a = 0; a < nodes; ++a) {
                if (dist[a] == std::numeric_limits<double>::infinity()) {
                    continue;
                }
                for (std::size_t e = 0; e < g[a].size(); ++e) {
                    const auto &edge = g[a][e];
                    if (edge.cap > eps && dist[a] + edge.cost < dist[edge.to] - 1e-15) {
                        dist[edge.to] = dist[a] + edge.cost;
                        prev_node[edge.to] = a;
                        prev_edge[edge.to] = e;
                        changed = true;
                    }
                }
            }
            if (!changed) {
                break;
            }
        }
        if (prev_node[sink] == nodes) {
            break;
        }
        double push = std::numeric_limits<double>::infinity();
        for (std::size_t v = sink; v != source; v = prev_node[v]) {
            push = std::min(push, g[prev_node[v]][prev_edge[v]].cap);
        }
        for (std::size_t v = sink; v != source; v = prev_node[v]) {
            auto &edge = g[prev_node[v]][prev_edge[v]];
            edge.cap -= push;
            g[v][edge.rev].cap += push;
        }
        total += push * dist[sink];
    }
    return total;
}

} // namespace repsuite
