#include <catch_amalgamated.hpp>

#include <set>

#include "repsuite/structure.hpp"
#include "repsuite/synth.hpp"
#include "support.hpp"

using namespace repsuite;
using namespace testing_support;

namespace {

SynthConfig small_config() {
    SynthConfig c;
    c.n_subgroups = 4;
    c.n_respondents = 50;
    c.topics = {{"a", 3}, {"b", 2}};
    c.seed = 5;
    return c;
}

MeanMatrix empirical_means(const SynthPopulation &pop) {
    CellDistributions cells;
    std::vector<std::string> rows;
    for (const auto &s : pop.catalog.subgroups) {
        rows.push_back(s.id);
        for (const auto &q : pop.catalog.questions) {
            if (q.is_ordinal()) {
                cells.emplace(CellKey{s.id, q.id}, ground_truth_distribution(pop.data, s, q));
            }
        }
    }
    return mean_matrix(cells, pop.catalog, rows);
}

ErrorKind kind_of(const std::function<void()> &fn) {
    try {
        fn();
    } catch (const Error &e) {
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::InvalidArgument;
}

} // namespace

TEST_CASE("generation is deterministic in the seed", "[synth]") {
    const auto a = generate_population(small_config());
    const auto b = generate_population(small_config());
    CHECK(a.data.records() == b.data.records());
    CHECK(a.analytic_means == b.analytic_means);
    auto other = small_config();
    other.seed = 6;
    CHECK(generate_population(other).data.records() != a.data.records());

    CHECK(a.catalog.questions.size() == 5);
    CHECK(a.catalog.questions.front().id == "S001");
    CHECK(a.catalog.subgroups.front().id == "g01");
    CHECK(a.data.size() == 200);
    CHECK(validate_catalog(a.catalog).empty());
}

TEST_CASE("zero loadings and zero noise give point masses", "[synth]") {
    auto c = small_config();
    c.loadings.assign(5, std::vector<double>(3, 0.0));
    c.noise = 0.0;
    const auto pop = generate_population(c);
    for (const auto &s : pop.catalog.subgroups) {
        for (const auto &q : pop.catalog.questions) {
            const auto d = ground_truth_distribution(pop.data, s, q);
            CHECK(d.is_point_mass());
            CHECK(d.mass_at(3) == 1.0);
        }
    }
}

TEST_CASE("empirical means converge to the analytic means", "[synth]") {
    SynthConfig c;
    c.n_subgroups = 5;
    c.n_respondents = 10000;
    c.topics = {{"a", 4}, {"b", 4}};
    c.scale_sizes = {2, 3, 4, 5, 7, 4, 4, 10};
    c.seed = 77;
    const auto pop = generate_population(c);
    const auto emp = empirical_means(pop);
    REQUIRE(emp.cols() == pop.analytic_means.cols());
    double worst = 0.0;
    for (std::size_t r = 0; r < emp.rows(); ++r) {
        for (std::size_t q = 0; q < emp.cols(); ++q) {
            worst = std::max(worst, std::abs(*emp.at(r, q) - *pop.analytic_means.at(r, q)));
        }
    }
    CHECK(worst < 0.02);
}

TEST_CASE("analytic means match a test-side simulation", "[synth][oracle]") {
    SynthConfig c;
    c.n_subgroups = 2;
    c.n_respondents = 1;
    c.topics = {{"a", 2}};
    c.latent_dims = 2;
    c.loadings = {{0.6, 0.8}, {1.0, 0.0}};
    c.subgroup_means = {{0.3, -0.2}, {-1.0, 0.5}};
    c.respondent_spread = 0.7;
    c.noise = 0.4;
    c.scale_size = 5;
    const auto pop = generate_population(c);
    TestRng rng(123);
    std::normal_distribution<double> z01(0.0, 1.0);
    for (std::size_t s = 0; s < 2; ++s) {
        for (std::size_t q = 0; q < 2; ++q) {
            const int trials = 200000;
            double sum = 0.0;
            for (int t = 0; t < trials; ++t) {
                double y = 0.0;
                for (std::size_t d = 0; d < 2; ++d) {
                    y += c.loadings[q][d] * (c.subgroup_means[s][d] + c.respondent_spread * z01(rng));
                }
                y += c.noise * z01(rng);
                // five equal bins over [-2, 2]
                int cat = 0;
                for (double edge = -1.2; edge < 2.0 && y >= edge; edge += 0.8) {
                    ++cat;
                }
                sum += cat / 4.0;
            }
            CHECK(std::abs(*pop.analytic_means.at(s, q) - sum / trials) < 0.005);
        }
    }
}

TEST_CASE("shared loadings give perfectly correlated columns", "[synth]") {
    SynthConfig c;
    c.n_subgroups = 10;
    c.n_respondents = 2000;
    c.topics = {{"a", 2}};
    c.latent_dims = 2;
    c.loadings = {{0.8, 0.6}, {0.8, 0.6}};
    c.seed = 3;
    const auto pop = generate_population(c);
    const auto corr = correlation_matrix(empirical_means(pop));
    REQUIRE(corr.size() == 2);
    CHECK(corr.at(0, 1) > 0.95);
}

TEST_CASE("orthogonal loadings give uncorrelated columns", "[synth]") {
    SynthConfig c;
    c.n_subgroups = 1000;
    c.n_respondents = 200;
    c.topics = {{"a", 2}};
    c.latent_dims = 2;
    c.loadings = {{1.0, 0.0}, {0.0, 1.0}};
    c.seed = 4;
    const auto pop = generate_population(c);
    const auto corr = correlation_matrix(empirical_means(pop));
    REQUIRE(corr.size() == 2);
    CHECK(std::abs(corr.at(0, 1)) < 0.1);
}

TEST_CASE("config validation", "[synth]") {
    auto zero = small_config();
    zero.topics = {};
    CHECK(kind_of([&] { generate_population(zero); }) == ErrorKind::Config);
    auto empty_topic = small_config();
    empty_topic.topics = {{"a", 0}};
    CHECK(kind_of([&] { empty_topic.validate(); }) == ErrorKind::Config);
    auto bad_loadings = small_config();
    bad_loadings.loadings = {{1.0}};
    CHECK(kind_of([&] { bad_loadings.validate(); }) == ErrorKind::Config);
    auto bad_scale = small_config();
    bad_scale.scale_size = 1;
    CHECK(kind_of([&] { bad_scale.validate(); }) == ErrorKind::Config);
    auto bad_rate = small_config();
    bad_rate.nonresponse_rate = 1.0;
    CHECK(kind_of([&] { bad_rate.validate(); }) == ErrorKind::Config);

    const auto c = small_config();
    const auto back = json(c).get<SynthConfig>();
    CHECK(json(back) == json(c));
}

TEST_CASE("nominal tail and nonresponse", "[synth]") {
    auto c = small_config();
    c.nominal_questions = 2;
    c.nonresponse_rate = 0.3;
    const auto pop = generate_population(c);
    CHECK(pop.catalog.questions[2].is_ordinal());
    CHECK_FALSE(pop.catalog.questions[3].is_ordinal());
    CHECK(pop.analytic_means.cols() == 3);
    std::size_t missing = 0;
    for (const auto &r : pop.data.records()) {
        missing += r.response ? 0 : 1;
    }
    const double rate = static_cast<double>(missing) / (200.0 * 5.0);
    CHECK(rate == Catch::Approx(0.3).margin(0.05));
}

TEST_CASE("perfect sampler reproduces the subgroup pmf", "[synth]") {
    auto c = small_config();
    c.n_respondents = 300;
    const auto pop = generate_population(c);
    const auto &sg = pop.catalog.subgroups[1];
    const auto &q = pop.catalog.questions[0];
    const auto a = perfect_model_sampler(pop.data, sg, q, 20000, 9);
    CHECK(a == perfect_model_sampler(pop.data, sg, q, 20000, 9));
    CHECK(a.front().model_id == "perfect:g02");
    CHECK(a.front().raw_text == q.render(*a.front().cleaned_value));
    const auto truth = ground_truth_distribution(pop.data, sg, q);
    const auto sim = simulated_distribution(a, "perfect:g02", q);
    for (const int v : q.values()) {
        CHECK(std::abs(sim.mass_at(v) - truth.mass_at(v)) < 0.015);
        if (truth.mass_at(v) == 0.0) {
            CHECK(sim.mass_at(v) == 0.0);
        }
    }
}

TEST_CASE("fixture generations keep marginals under shuffling", "[synth]") {
    const auto pop = generate_population(small_config());
    const auto perfect = fixture_generations(pop, "perfect", 3, 1, false);
    const auto shuffled = fixture_generations(pop, "shuffled", 3, 1, true);
    CHECK(perfect.size() == 3 * 4 * 5);
    CHECK(shuffled.size() == perfect.size());
    CHECK(perfect.front().model_id == "perfect:g01");
    CHECK(perfect.front().temperature == 1.0);
    CHECK(fixture_generations(pop, "shuffled", 3, 1, true) == shuffled);

    // A shuffled column draws each subgroup's answers from some subgroup's
    // pmf, so the pooled support of every question is unchanged.
    for (const auto &q : pop.catalog.questions) {
        std::set<std::string> a;
        std::set<std::string> b;
        for (const auto &g : fixture_generations(pop, "p", 400, 2, false)) {
            if (g.question_id == q.id) {
                a.insert(*g.raw_text);
            }
        }
        for (const auto &g : fixture_generations(pop, "p", 400, 2, true)) {
            if (g.question_id == q.id) {
                b.insert(*g.raw_text);
            }
        }
        CHECK(a == b);
    }
}
