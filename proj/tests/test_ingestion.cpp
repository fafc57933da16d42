#include <catch_amalgamated.hpp>

#include <sstream>

#include "repsuite/ingestion.hpp"
#include "support.hpp"

using namespace repsuite;
using namespace testing_support;

namespace {

Catalog wvs_like_catalog() {
    Catalog c;
    c.questions = {agree_question(), ordinal_range("Q240", 1, 10, "political"), ordinal_range("Q260", 1, 2, "demo")};
    c.demographics = {{"Q261", "Birth year"}, {"Q266", "Country of birth"}};
    c.subgroups = {
        group_filter("liberal", "political", "Q240", {"1", "2", "3"}),
        group_filter("conservative", "political", "Q240", {"8", "9", "10"}),
        group_filter("german", "geographic", "Q266", {"Germany"}),
        SubgroupSpec{"old_people", "age", {FilterCondition{"Q261", {}, std::nullopt, 1980.0}}},
    };
    return c;
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

std::string message_of(const std::function<void()> &fn) {
    try {
        fn();
    } catch (const Error &e) {
        return e.what();
    }
    FAIL("expected an error");
    return {};
}

} // namespace

TEST_CASE("csv rows honour quoting", "[ingestion][csv]") {
    std::istringstream in("a,\"b,c\",\"say \"\"hi\"\"\"\r\n\"multi\nline\",,x\n");
    std::vector<std::string> row;
    REQUIRE(csv::read_row(in, row));
    CHECK(row == std::vector<std::string>{"a", "b,c", "say \"hi\""});
    REQUIRE(csv::read_row(in, row));
    CHECK(row == std::vector<std::string>{"multi\nline", "", "x"});
    CHECK_FALSE(csv::read_row(in, row));

    std::ostringstream out;
    csv::write_row(out, {"plain", "with,comma", "with \"quote\""});
    CHECK(out.str() == "plain,\"with,comma\",\"with \"\"quote\"\"\"\n");
}

TEST_CASE("human table maps cells to records", "[ingestion]") {
    const auto catalog = wvs_like_catalog();
    std::istringstream in("id,weight,Q260,Q33,Q240,Q261,Q266,extra\n"
                          "r1,1.5,2,3,2,1975,Germany,zzz\n"
                          "r2,0.5,,x,11,1990,France,\n");
    const auto data = parse_human_table(in, catalog);
    REQUIRE(data.size() == 2);
    const auto q260 = *data.question_index("Q260");
    const auto q33 = *data.question_index("Q33");
    const auto q240 = *data.question_index("Q240");
    CHECK(data.respondents()[0].weight == 1.5);
    CHECK(data.answer(0, q260) == std::optional<int>(2));
    CHECK(data.answer(0, q33) == std::optional<int>(3));
    CHECK_FALSE(data.answer(1, q260));
    CHECK_FALSE(data.answer(1, q33));
    CHECK_FALSE(data.answer(1, q240));
    CHECK(data.respondents()[0].demographics->at("Q266") == "Germany");
    CHECK(data.respondents()[0].demographics->count("extra") == 0);

    std::istringstream again("id,weight,Q260,Q33,Q240,Q261,Q266,extra\n"
                             "r1,1.5,2,3,2,1975,Germany,zzz\n"
                             "r2,0.5,,x,11,1990,France,\n");
    const auto records = parse_human_responses(again, catalog);
    CHECK(records.size() == 6);
    const auto it = std::find_if(records.begin(), records.end(),
                                 [](const ResponseRecord &r) { return r.respondent_id == "r1" && r.question_id == "Q260"; });
    REQUIRE(it != records.end());
    CHECK(it->weight == 1.5);
    CHECK(it->response == std::optional<int>(2));
}

TEST_CASE("weight problems are fatal with the row index", "[ingestion]") {
    const auto catalog = wvs_like_catalog();
    auto parse = [&](const std::string &text) {
        std::istringstream in(text);
        return parse_human_table(in, catalog);
    };
    CHECK(message_of([&] { parse("id,weight,Q33\nr1,1,2\nr2,-1,2\n"); }).find("negative weight at row 2") !=
          std::string::npos);
    CHECK(message_of([&] { parse("id,weight,Q33\nr1,abc,2\n"); }).find("invalid weight at row 1") != std::string::npos);
    CHECK(message_of([&] { parse("id,weight,Q33\nr1,0,2\n"); }).find("non-positive weight at row 1") !=
          std::string::npos);
    CHECK(message_of([&] { parse("id,Q33\nr1,2\n"); }).find("missing weight column") != std::string::npos);
    CHECK(kind_of([&] { parse("weight,Q33\n1,2\n"); }) == ErrorKind::Parse);
    CHECK(kind_of([&] { parse("id,weight,Q33\nr1,1\n"); }) == ErrorKind::Parse);
    CHECK(kind_of([&] { parse(""); }) == ErrorKind::Parse);
}

TEST_CASE("human table round-trips through the writer", "[ingestion]") {
    const auto catalog = wvs_like_catalog();
    std::istringstream in("id,weight,Q261,Q266,Q33,Q240\n"
                          "a,0.1,1975,\"Germany\",1,\n"
                          "b,2.25,,France,,10\n");
    const auto data = parse_human_table(in, catalog);
    std::ostringstream out;
    write_human_table(out, data, {"Q261", "Q266"});
    std::istringstream back_in(out.str());
    const auto back = parse_human_table(back_in, catalog);
    CHECK(back.records() == data.records());
}

TEST_CASE("subgroup assignment follows the filter table", "[ingestion]") {
    const auto catalog = wvs_like_catalog();
    auto subgroups_for = [&](Demographics d) {
        auto ids = assign_subgroups(d, catalog.subgroups);
        return std::set<std::string>(ids.begin(), ids.end());
    };
    CHECK(subgroups_for({{"Q240", "2"}}) == std::set<std::string>{"liberal"});
    CHECK(subgroups_for({{"Q240", "9"}}) == std::set<std::string>{"conservative"});
    CHECK(subgroups_for({{"Q266", "Germany"}, {"Q261", "1975"}}) == std::set<std::string>{"german", "old_people"});
    CHECK(subgroups_for({{"Q240", "5"}}).empty());

    const std::vector<ResponseRecord> person{
        {"r", "Q240", 2, 1.0, demo({{"Q266", "Germany"}})},
        {"r", "Q33", 1, 1.0, demo({{"Q266", "Germany"}})},
    };
    const auto ids = assign_subgroups(person, catalog.subgroups);
    CHECK(std::set<std::string>(ids.begin(), ids.end()) == std::set<std::string>{"liberal", "german"});
}

TEST_CASE("cleaning follows the precedence ladder", "[ingestion][clean]") {
    const auto q = agree_question();
    CHECK(clean_generation("2: Agree", q) == std::optional<int>(2));
    CHECK(clean_generation("  3: Disagree\n", q) == std::optional<int>(3));
    CHECK_FALSE(clean_generation("I think family matters most", q));
    CHECK(clean_generation("**4: Disagree strongly**", q) == std::optional<int>(4));
    CHECK(clean_generation("1", q) == std::optional<int>(1));
    CHECK(clean_generation("3.", q) == std::optional<int>(3));
    CHECK_FALSE(clean_generation("7", q));
    CHECK_FALSE(clean_generation("0: nothing", q));
    CHECK(clean_generation("I would say disagree strongly.", q) == std::optional<int>(4));
    CHECK(clean_generation("agree STRONGLY", q) == std::optional<int>(1));
    CHECK_FALSE(clean_generation("agree or disagree", q));
    CHECK_FALSE(clean_generation("1: Agree strongly\n2: Agree", q));
    CHECK_FALSE(clean_generation("", q));
    CHECK_FALSE(clean_generation("disagreement", q));
}

TEST_CASE("cleaning is idempotent on canonical renderings", "[ingestion][clean]") {
    const auto q = agree_question();
    for (const auto &r : q.responses) {
        const auto v = clean_generation(q.render(r.value), q);
        REQUIRE(v);
        CHECK(clean_generation(q.render(*v), q) == v);
    }
}

TEST_CASE("flip presentation and unflip", "[ingestion][flip]") {
    const auto q4 = agree_question();
    CHECK(unflip_response(1, q4, true) == 4);
    CHECK(unflip_response(2, q4, false) == 2);
    const auto q10 = ordinal_range("Q", 1, 10);
    CHECK(unflip_response(3, q10, true) == 8);
    for (int v = 1; v <= 10; ++v) {
        CHECK(unflip_response(unflip_response(v, q10, true), q10, true) == v);
    }
    const auto shown = presented_question(q4, true);
    CHECK(shown.responses.front().value == 1);
    CHECK(shown.responses.front().label == "Disagree strongly");
    CHECK(shown.responses.back().label == "Agree strongly");
    CHECK(unflip_response(*clean_generation("1: Disagree strongly", shown), q4, true) == 4);

    const auto nom = nominal("N", {"a", "b"});
    CHECK(kind_of([&] { unflip_response(1, nom, true); }) == ErrorKind::WrongScaleKind);
    CHECK(kind_of([&] { presented_question(nom, true); }) == ErrorKind::WrongScaleKind);
    CHECK(unflip_response(2, nom, false) == 2);
}

TEST_CASE("simulation logs are cleaned and unflipped", "[ingestion][log]") {
    Catalog c;
    c.questions = {agree_question(), nominal("N1", {"Red", "Blue"})};
    std::ostringstream text;
    text << R"({"model_id":"persona:liberal","question_id":"Q33","raw_text":"2: Agree","flipped":false,"temperature":0.9})"
         << "\n"
         << R"({"model_id":"opiniongpt:german","question_id":"Q33","raw_text":"garbage","flipped":false,"temperature":0.9})"
         << "\n"
         << R"({"model_id":"persona:liberal","question_id":"Q33","raw_text":"1: Disagree strongly","flipped":true,"temperature":0.9})"
         << "\n"
         << "this is not json\n"
         << R"({"model_id":"m","question_id":"Q33"})"
         << "\n"
         << R"({"model_id":"m","question_id":"N1","raw_text":"Blue","flipped":true,"temperature":0.9})"
         << "\n"
         << R"({"model_id":"m","question_id":"Q33","raw_text":null,"flipped":false,"temperature":0.9,"status":"transport_failure"})"
         << "\n\n";
    std::istringstream in(text.str());
    const auto log = parse_simulation_log(in, c);
    REQUIRE(log.samples.size() == 4);
    CHECK(log.malformed == 3);
    CHECK(log.warnings.size() == 3);
    CHECK(log.samples[0].cleaned_value == std::optional<int>(2));
    CHECK(log.samples[0].status == SampleStatus::Valid);
    CHECK(log.samples[1].status == SampleStatus::Invalid);
    CHECK(log.samples[2].cleaned_value == std::optional<int>(4));
    CHECK(log.samples[2].flipped);
    CHECK(log.samples[3].status == SampleStatus::TransportFailure);

    std::istringstream unknown(R"({"model_id":"m","question_id":"Q999","raw_text":"1","flipped":false,"temperature":1})");
    CHECK(kind_of([&] { parse_simulation_log(unknown, c); }) == ErrorKind::UnknownQuestion);
}

TEST_CASE("log parsing keeps every record valid or invalid", "[ingestion][log]") {
    Catalog c;
    c.questions = {agree_question()};
    TestRng rng(11);
    const std::vector<std::string> texts{"1: Agree strongly", "2", "nonsense", "Disagree", "9", "  4: Disagree strongly "};
    std::ostringstream text;
    const std::size_t n = 500;
    for (std::size_t i = 0; i < n; ++i) {
        RawGeneration g;
        g.model_id = "persona:liberal";
        g.question_id = "Q33";
        g.raw_text = texts[uniform_index(rng, 0, texts.size() - 1)];
        g.flipped = uniform01(rng) < 0.5;
        g.temperature = 0.9;
        g.sample_index = static_cast<std::int64_t>(i);
        text << json(g).dump() << '\n';
        CHECK(json(g).get<RawGeneration>() == g);
    }
    std::istringstream in(text.str());
    const auto log = parse_simulation_log(in, c);
    CHECK(log.samples.size() == n);
    std::size_t valid = 0;
    std::size_t invalid = 0;
    for (const auto &s : log.samples) {
        (s.status == SampleStatus::Valid ? valid : invalid) += 1;
        if (s.is_valid()) {
            CHECK(c.questions[0].contains(*s.cleaned_value));
        }
    }
    CHECK(valid + invalid == n);
}
