#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "error.hpp"

namespace repsuite {

using json = nlohmann::json;

inline constexpr std::string_view kCatalogSchema = "repsuite-catalog/1";

/// Demographic dimensions a subgroup may belong to.
inline const std::vector<std::string> &known_dimensions() {
    static const std::vector<std::string> dims{"political", "geographic", "gender", "age"};
    return dims;
}

enum class ScaleKind { Ordinal, Nominal };

NLOHMANN_JSON_SERIALIZE_ENUM(ScaleKind, {{ScaleKind::Ordinal, "ordinal"}, {ScaleKind::Nominal, "nominal"}})

struct ResponseOption {
    int value = 0;
    std::string label;

    bool operator==(const ResponseOption &) const = default;
};

/// One survey item and its admissible response set.
struct QuestionSpec {
    std::string id;
    std::string text;
    std::string topic;
    ScaleKind scale = ScaleKind::Ordinal;
    std::vector<ResponseOption> responses;
    bool admits_nonresponse = true;

    bool operator==(const QuestionSpec &) const = default;

    bool is_ordinal() const noexcept { return scale == ScaleKind::Ordinal; }

    std::vector<int> values() const {
        std::vector<int> out;
        out.reserve(responses.size());
        for (const auto &r : responses) {
            out.push_back(r.value);
        }
        return out;
    }

    std::optional<std::size_t> index_of(int value) const noexcept {
        for (std::size_t i = 0; i < responses.size(); ++i) {
            if (responses[i].value == value) {
                return i;
            }
        }
        return std::nullopt;
    }

    bool contains(int value) const noexcept { return index_of(value).has_value(); }

    int min_value() const {
        require_responses();
        return std::min_element(responses.begin(), responses.end(),
                                [](const auto &a, const auto &b) { return a.value < b.value; })
            ->value;
    }

    int max_value() const {
        require_responses();
        return std::max_element(responses.begin(), responses.end(),
                                [](const auto &a, const auto &b) { return a.value < b.value; })
            ->value;
    }

    /// max(R_q) - min(R_q)
    double diameter() const { return static_cast<double>(max_value()) - min_value(); }

    /// Minmax-normalised position of a response value.
    double normalized(int value) const {
        const double diam = diameter();
        if (diam <= 0.0) {
            throw Error(ErrorKind::DegenerateScale, "question " + id + " has a zero-width scale");
        }
        return (static_cast<double>(value) - min_value()) / diam;
    }

    std::string render(int value) const {
        const auto idx = index_of(value);
        if (!idx) {
            throw Error(ErrorKind::InvalidArgument,
                        "value " + std::to_string(value) + " is not a response of " + id);
        }
        return std::to_string(value) + ": " + responses[*idx].label;
    }

private:
    void require_responses() const {
        if (responses.empty()) {
            throw Error(ErrorKind::InvalidArgument, "question " + id + " has no responses");
        }
    }
};

using Demographics = std::map<std::string, std::string>;

/// One clause of a subgroup filter. A respondent satisfies it when the field
/// is present, its value is in `values` (if given) and, read as a number, it
/// lies in [min, max] (for whichever bounds are given).
struct FilterCondition {
    std::string field;
    std::vector<std::string> values;
    std::optional<double> min;
    std::optional<double> max;

    bool operator==(const FilterCondition &) const = default;

    bool matches(const Demographics &demographics) const {
        const auto it = demographics.find(field);
        if (it == demographics.end() || it->second.empty()) {
            return false;
        }
        const std::string &v = it->second;
        if (!values.empty() && std::find(values.begin(), values.end(), v) == values.end()) {
            return false;
        }
        if (min || max) {
            double x = 0.0;
            try {
                std::size_t used = 0;
                x = std::stod(v, &used);
                if (used != v.size()) {
                    return false;
                }
            } catch (const std::exception &) {
                return false;
            }
            if (min && x < *min) {
                return false;
            }
            if (max && x > *max) {
                return false;
            }
        }
        return true;
    }
};

/// A demographic subgroup: a conjunction of filter conditions within one
/// dimension.
struct SubgroupSpec {
    std::string id;
    std::string dimension;
    std::vector<FilterCondition> filter;

    bool operator==(const SubgroupSpec &) const = default;

    bool matches(const Demographics &demographics) const {
        return std::all_of(filter.begin(), filter.end(),
                           [&](const auto &c) { return c.matches(demographics); });
    }
};

struct DemographicField {
    std::string id;
    std::string text;

    bool operator==(const DemographicField &) const = default;
};

struct Catalog {
    std::vector<QuestionSpec> questions;
    std::vector<DemographicField> demographics;
    std::vector<SubgroupSpec> subgroups;

    bool operator==(const Catalog &) const = default;

    const QuestionSpec *find_question(std::string_view id) const noexcept {
        for (const auto &q : questions) {
            if (q.id == id) {
                return &q;
            }
        }
        return nullptr;
    }

    const QuestionSpec &question(std::string_view id) const {
        if (const auto *q = find_question(id)) {
            return *q;
        }
        throw Error(ErrorKind::UnknownQuestion, "unknown question id " + std::string(id));
    }

    const SubgroupSpec *find_subgroup(std::string_view id) const noexcept {
        for (const auto &s : subgroups) {
            if (s.id == id) {
                return &s;
            }
        }
        return nullptr;
    }

    bool has_field(std::string_view id) const noexcept {
        if (find_question(id) != nullptr) {
            return true;
        }
        return std::any_of(demographics.begin(), demographics.end(),
                           [&](const auto &d) { return d.id == id; });
    }

    /// Dimensions in order of first appearance.
    std::vector<std::string> dimensions() const {
        std::vector<std::string> out;
        for (const auto &s : subgroups) {
            if (std::find(out.begin(), out.end(), s.dimension) == out.end()) {
                out.push_back(s.dimension);
            }
        }
        return out;
    }

    std::vector<const SubgroupSpec *> subgroups_in(std::string_view dimension) const {
        std::vector<const SubgroupSpec *> out;
        for (const auto &s : subgroups) {
            if (s.dimension == dimension) {
                out.push_back(&s);
            }
        }
        return out;
    }

    /// Topics in order of first appearance.
    std::vector<std::string> topics() const {
        std::vector<std::string> out;
        for (const auto &q : questions) {
            if (std::find(out.begin(), out.end(), q.topic) == out.end()) {
                out.push_back(q.topic);
            }
        }
        return out;
    }
};

/// One human respondent's answer to one question. An empty response is a
/// non-response; it never contributes mass to a distribution.
struct ResponseRecord {
    std::string respondent_id;
    std::string question_id;
    std::optional<int> response;
    double weight = 1.0;
    std::shared_ptr<const Demographics> demographics;

    bool is_nonresponse() const noexcept { return !response.has_value(); }

    const Demographics &demographic_values() const {
        static const Demographics empty;
        return demographics ? *demographics : empty;
    }

    bool operator==(const ResponseRecord &other) const {
        return respondent_id == other.respondent_id && question_id == other.question_id &&
               response == other.response && weight == other.weight &&
               demographic_values() == other.demographic_values();
    }
};

enum class SampleStatus { Valid, Invalid, TransportFailure };

NLOHMANN_JSON_SERIALIZE_ENUM(SampleStatus, {{SampleStatus::Valid, "valid"},
                                            {SampleStatus::Invalid, "invalid"},
                                            {SampleStatus::TransportFailure, "transport_failure"}})

/// One raw model generation for one question, plus its cleaning outcome.
/// `cleaned_value` is in canonical (unflipped) coordinates.
struct SimulatedSample {
    std::string model_id;
    std::string question_id;
    std::string raw_text;
    bool flipped = false;
    std::optional<int> cleaned_value;
    SampleStatus status = SampleStatus::Invalid;
    double temperature = 0.0;
    std::string seed_info;

    bool operator==(const SimulatedSample &) const = default;

    bool is_valid() const noexcept { return status == SampleStatus::Valid && cleaned_value.has_value(); }
};

/// Model ids follow "<method>:<subgroup>", optionally suffixed with "@<tag>"
/// for sweeps. Anything without a colon (e.g. "baseline") is unsteered.
struct ModelId {
    std::string method;
    std::optional<std::string> subgroup;
    std::string tag;

    static ModelId parse(std::string_view id) {
        ModelId out;
        std::string_view body = id;
        if (const auto at = body.find('@'); at != std::string_view::npos) {
            out.tag = std::string(body.substr(at + 1));
            body = body.substr(0, at);
        }
        if (const auto colon = body.find(':'); colon != std::string_view::npos) {
            out.method = std::string(body.substr(0, colon));
            out.subgroup = std::string(body.substr(colon + 1));
        } else {
            out.method = std::string(body);
        }
        return out;
    }

    /// Method plus tag; steered models sharing a series form one structure row set.
    std::string series() const { return tag.empty() ? method : method + "@" + tag; }
};

/// A probability mass function over a question's canonical response set.
class ResponseDistribution {
public:
    ResponseDistribution() = default;

    ResponseDistribution(std::string question_id, std::vector<int> support, std::vector<double> mass,
                         double n_effective)
        : question_id_{std::move(question_id)}, support_{std::move(support)}, mass_{std::move(mass)},
          n_effective_{n_effective} {
        if (support_.size() != mass_.size()) {
            throw Error(ErrorKind::InvalidArgument, "support and mass lengths differ for " + question_id_);
        }
        if (support_.empty()) {
            throw Error(ErrorKind::InvalidArgument, "empty support for " + question_id_);
        }
        double total = 0.0;
        for (const double m : mass_) {
            if (!(m >= 0.0) || !std::isfinite(m)) {
                throw Error(ErrorKind::InvalidArgument, "negative or non-finite mass for " + question_id_);
            }
            total += m;
        }
        if (n_effective_ > 0.0 && std::abs(total - 1.0) > 1e-9) {
            throw Error(ErrorKind::InvalidArgument, "mass does not sum to 1 for " + question_id_);
        }
    }

    /// Normalises a non-negative tally over the question's response order.
    static ResponseDistribution from_tally(const QuestionSpec &question, std::span<const double> tally) {
        if (tally.size() != question.responses.size()) {
            throw Error(ErrorKind::SupportMismatch, "tally length does not match " + question.id);
        }
        double total = 0.0;
        for (const double t : tally) {
            total += t;
        }
        if (!(total > 0.0)) {
            throw Error(ErrorKind::EmptyDistribution, "no valid responses for " + question.id);
        }
        std::vector<double> mass(tally.size());
        for (std::size_t i = 0; i < tally.size(); ++i) {
            mass[i] = tally[i] / total;
        }
        return ResponseDistribution(question.id, question.values(), std::move(mass), total);
    }

    const std::string &question_id() const noexcept { return question_id_; }
    const std::vector<int> &support() const noexcept { return support_; }
    const std::vector<double> &mass() const noexcept { return mass_; }
    double n_effective() const noexcept { return n_effective_; }

    double mass_at(int value) const noexcept {
        for (std::size_t i = 0; i < support_.size(); ++i) {
            if (support_[i] == value) {
                return mass_[i];
            }
        }
        return 0.0;
    }

    /// Exactly one support value carries positive mass.
    bool is_point_mass() const noexcept {
        return std::count_if(mass_.begin(), mass_.end(), [](double m) { return m > 0.0; }) == 1;
    }

    bool operator==(const ResponseDistribution &) const = default;

private:
    std::string question_id_;
    std::vector<int> support_;
    std::vector<double> mass_;
    double n_effective_ = 0.0;
};

/// Subgroup x column matrix of minmax-normalised mean responses. Columns are
/// questions or topics; absent cells stay absent.
class MeanMatrix {
public:
    MeanMatrix() = default;

    MeanMatrix(std::vector<std::string> row_ids, std::vector<std::string> col_ids)
        : row_ids_{std::move(row_ids)}, col_ids_{std::move(col_ids)},
          entries_(row_ids_.size() * col_ids_.size()) {}

    std::size_t rows() const noexcept { return row_ids_.size(); }
    std::size_t cols() const noexcept { return col_ids_.size(); }
    const std::vector<std::string> &row_ids() const noexcept { return row_ids_; }
    const std::vector<std::string> &col_ids() const noexcept { return col_ids_; }

    const std::optional<double> &at(std::size_t row, std::size_t col) const {
        return entries_.at(row * col_ids_.size() + col);
    }

    void set(std::size_t row, std::size_t col, std::optional<double> value) {
        if (value) {
            if (!std::isfinite(*value) || *value < -1e-9 || *value > 1.0 + 1e-9) {
                throw Error(ErrorKind::InvalidArgument, "mean matrix entry outside [0,1]");
            }
            value = std::clamp(*value, 0.0, 1.0);
        }
        entries_.at(row * col_ids_.size() + col) = value;
    }

    std::vector<std::optional<double>> column(std::size_t col) const {
        std::vector<std::optional<double>> out(rows());
        for (std::size_t r = 0; r < rows(); ++r) {
            out[r] = at(r, col);
        }
        return out;
    }

    std::optional<std::size_t> col_index(std::string_view id) const noexcept {
        for (std::size_t c = 0; c < col_ids_.size(); ++c) {
            if (col_ids_[c] == id) {
                return c;
            }
        }
        return std::nullopt;
    }

    bool operator==(const MeanMatrix &) const = default;

private:
    std::vector<std::string> row_ids_;
    std::vector<std::string> col_ids_;
    std::vector<std::optional<double>> entries_;
};

struct StructureComparison {
    std::optional<double> rho; ///< missing when either u vector is constant
    double rmse = 0.0;
    std::size_t n_pairs = 0;
    std::vector<std::string> columns;

    bool operator==(const StructureComparison &) const = default;
};

/// A correlation matrix over retained columns, plus what was dropped.
struct CorrelationArtifacts {
    std::vector<std::string> ids;
    std::vector<double> matrix; ///< row-major, ids.size() squared
    std::vector<std::string> dropped_columns;
    std::size_t n_rows = 0;
    std::optional<StructureComparison> comparison;

    std::size_t size() const noexcept { return ids.size(); }
    double at(std::size_t i, std::size_t j) const { return matrix.at(i * ids.size() + j); }

    std::optional<std::size_t> index_of(std::string_view id) const noexcept {
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (ids[i] == id) {
                return i;
            }
        }
        return std::nullopt;
    }

    /// Row-major upper triangle (i < j).
    std::vector<double> u() const {
        std::vector<double> out;
        const std::size_t k = ids.size();
        out.reserve(k * (k > 0 ? k - 1 : 0) / 2);
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = i + 1; j < k; ++j) {
                out.push_back(at(i, j));
            }
        }
        return out;
    }

    bool operator==(const CorrelationArtifacts &) const = default;
};

// ---------------------------------------------------------------------------
// Catalog validation

struct Violation {
    std::string code;
    std::string message;

    bool operator==(const Violation &) const = default;
};

/// Returns every structural problem in the catalog; empty means valid.
inline std::vector<Violation> validate_catalog(const std::vector<QuestionSpec> &questions,
                                               const std::vector<SubgroupSpec> &subgroups,
                                               const std::vector<DemographicField> &demographics = {}) {
    std::vector<Violation> out;
    std::set<std::string> ids;
    for (const auto &q : questions) {
        if (q.id.empty()) {
            out.push_back({"empty_id", "question with empty id"});
        } else if (!ids.insert(q.id).second) {
            out.push_back({"duplicate_id", "duplicate id " + q.id});
        }
        if (q.responses.empty()) {
            out.push_back({"empty_responses", "question " + q.id + " has no responses"});
            continue;
        }
        std::set<int> values;
        for (const auto &r : q.responses) {
            if (!values.insert(r.value).second) {
                out.push_back({"duplicate_value",
                               "question " + q.id + " repeats response value " + std::to_string(r.value)});
            }
        }
        if (q.is_ordinal()) {
            for (std::size_t i = 1; i < q.responses.size(); ++i) {
                if (q.responses[i].value <= q.responses[i - 1].value) {
                    out.push_back({"non_increasing_scale",
                                   "ordinal question " + q.id + " values are not strictly increasing"});
                    break;
                }
            }
            if (q.responses.size() < 2 || q.max_value() == q.min_value()) {
                out.push_back({"degenerate_scale", "ordinal question " + q.id + " has zero diameter"});
            }
        }
    }
    for (const auto &d : demographics) {
        if (!ids.insert(d.id).second) {
            out.push_back({"duplicate_id", "duplicate id " + d.id});
        }
    }
    std::set<std::string> subgroup_ids;
    const auto &dims = known_dimensions();
    for (const auto &s : subgroups) {
        if (!subgroup_ids.insert(s.id).second) {
            out.push_back({"duplicate_id", "duplicate subgroup id " + s.id});
        }
        if (std::find(dims.begin(), dims.end(), s.dimension) == dims.end()) {
            out.push_back({"unknown_dimension", "subgroup " + s.id + " has unknown dimension '" + s.dimension + "'"});
        }
        for (const auto &c : s.filter) {
            if (ids.find(c.field) == ids.end()) {
                out.push_back({"dangling_reference",
                               "dangling reference " + c.field + " in filter of subgroup " + s.id});
            }
            if (c.min && c.max && *c.min > *c.max) {
                out.push_back({"empty_range", "subgroup " + s.id + " filter on " + c.field + " has min > max"});
            }
        }
    }
    return out;
}

inline std::vector<Violation> validate_catalog(const Catalog &catalog) {
    return validate_catalog(catalog.questions, catalog.subgroups, catalog.demographics);
}

// ---------------------------------------------------------------------------
// JSON interchange

inline void to_json(json &j, const ResponseOption &o) { j = json{{"value", o.value}, {"label", o.label}}; }

inline void from_json(const json &j, ResponseOption &o) {
    j.at("value").get_to(o.value);
    j.at("label").get_to(o.label);
}

inline void to_json(json &j, const QuestionSpec &q) {
    j = json{{"id", q.id},       {"text", q.text},           {"topic", q.topic},
             {"scale", q.scale}, {"responses", q.responses}, {"admits_nonresponse", q.admits_nonresponse}};
}

inline void from_json(const json &j, QuestionSpec &q) {
    j.at("id").get_to(q.id);
    q.text = j.value("text", "");
    q.topic = j.value("topic", "");
    const auto scale = j.at("scale").get<std::string>();
    if (scale != "ordinal" && scale != "nominal") {
        throw Error(ErrorKind::Parse, "question " + q.id + " has unknown scale '" + scale + "'");
    }
    q.scale = scale == "ordinal" ? ScaleKind::Ordinal : ScaleKind::Nominal;
    j.at("responses").get_to(q.responses);
    q.admits_nonresponse = j.value("admits_nonresponse", true);
}

inline void to_json(json &j, const FilterCondition &c) {
    j = json{{"field", c.field}};
    if (!c.values.empty()) {
        j["values"] = c.values;
    }
    if (c.min) {
        j["min"] = *c.min;
    }
    if (c.max) {
        j["max"] = *c.max;
    }
}

inline void from_json(const json &j, FilterCondition &c) {
    j.at("field").get_to(c.field);
    c.values.clear();
    if (j.contains("values")) {
        for (const auto &v : j.at("values")) {
            c.values.push_back(v.is_string() ? v.get<std::string>() : v.dump());
        }
    }
    c.min = j.contains("min") ? std::optional<double>(j.at("min").get<double>()) : std::nullopt;
    c.max = j.contains("max") ? std::optional<double>(j.at("max").get<double>()) : std::nullopt;
}

inline void to_json(json &j, const SubgroupSpec &s) {
    j = json{{"id", s.id}, {"dimension", s.dimension}, {"filter", s.filter}};
}

inline void from_json(const json &j, SubgroupSpec &s) {
    j.at("id").get_to(s.id);
    j.at("dimension").get_to(s.dimension);
    s.filter = j.value("filter", std::vector<FilterCondition>{});
}

inline void to_json(json &j, const DemographicField &d) { j = json{{"id", d.id}, {"text", d.text}}; }

inline void from_json(const json &j, DemographicField &d) {
    j.at("id").get_to(d.id);
    d.text = j.value("text", "");
}

inline void to_json(json &j, const Catalog &c) {
    j = json{{"schema", kCatalogSchema},
             {"questions", c.questions},
             {"demographics", c.demographics},
             {"subgroups", c.subgroups}};
}

inline void from_json(const json &j, Catalog &c) {
    const auto schema = j.value("schema", std::string{});
    if (schema != kCatalogSchema) {
        throw Error(ErrorKind::Parse, "catalog schema must be '" + std::string(kCatalogSchema) + "', got '" +
                                          schema + "'");
    }
    j.at("questions").get_to(c.questions);
    c.demographics = j.value("demographics", std::vector<DemographicField>{});
    c.subgroups = j.value("subgroups", std::vector<SubgroupSpec>{});
}

inline void to_json(json &j, const ResponseRecord &r) {
    j = json{{"respondent_id", r.respondent_id},
             {"question_id", r.question_id},
             {"response", r.response ? json(*r.response) : json(nullptr)},
             {"weight", r.weight},
             {"demographics", r.demographic_values()}};
}

inline void from_json(const json &j, ResponseRecord &r) {
    j.at("respondent_id").get_to(r.respondent_id);
    j.at("question_id").get_to(r.question_id);
    const auto &resp = j.at("response");
    r.response = resp.is_null() ? std::nullopt : std::optional<int>(resp.get<int>());
    j.at("weight").get_to(r.weight);
    if (!(r.weight > 0.0)) {
        throw Error(ErrorKind::Parse, "record weight must be positive");
    }
    r.demographics = std::make_shared<const Demographics>(j.value("demographics", Demographics{}));
}

inline void to_json(json &j, const SimulatedSample &s) {
    j = json{{"model_id", s.model_id},
             {"question_id", s.question_id},
             {"raw_text", s.raw_text},
             {"flipped", s.flipped},
             {"cleaned_value", s.cleaned_value ? json(*s.cleaned_value) : json(nullptr)},
             {"status", s.status},
             {"temperature", s.temperature},
             {"seed_info", s.seed_info}};
}

inline void from_json(const json &j, SimulatedSample &s) {
    j.at("model_id").get_to(s.model_id);
    j.at("question_id").get_to(s.question_id);
    j.at("raw_text").get_to(s.raw_text);
    s.flipped = j.value("flipped", false);
    const auto &cv = j.at("cleaned_value");
    s.cleaned_value = cv.is_null() ? std::nullopt : std::optional<int>(cv.get<int>());
    j.at("status").get_to(s.status);
    s.temperature = j.value("temperature", 0.0);
    s.seed_info = j.value("seed_info", "");
}

inline void to_json(json &j, const ResponseDistribution &d) {
    j = json{{"question_id", d.question_id()},
             {"support", d.support()},
             {"mass", d.mass()},
             {"n_effective", d.n_effective()}};
}

inline void from_json(const json &j, ResponseDistribution &d) {
    d = ResponseDistribution(j.at("question_id").get<std::string>(), j.at("support").get<std::vector<int>>(),
                             j.at("mass").get<std::vector<double>>(), j.at("n_effective").get<double>());
}

inline void to_json(json &j, const MeanMatrix &m) {
    json entries = json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (std::size_t c = 0; c < m.cols(); ++c) {
            const auto &v = m.at(r, c);
            row.push_back(v ? json(*v) : json(nullptr));
        }
        entries.push_back(std::move(row));
    }
    j = json{{"rows", m.row_ids()}, {"cols", m.col_ids()}, {"entries", std::move(entries)}};
}

inline void from_json(const json &j, MeanMatrix &m) {
    m = MeanMatrix(j.at("rows").get<std::vector<std::string>>(), j.at("cols").get<std::vector<std::string>>());
    const auto &entries = j.at("entries");
    if (entries.size() != m.rows()) {
        throw Error(ErrorKind::Parse, "mean matrix row count mismatch");
    }
    for (std::size_t r = 0; r < m.rows(); ++r) {
        if (entries[r].size() != m.cols()) {
            throw Error(ErrorKind::Parse, "mean matrix column count mismatch");
        }
        for (std::size_t c = 0; c < m.cols(); ++c) {
            const auto &v = entries[r][c];
            m.set(r, c, v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
        }
    }
}

inline void to_json(json &j, const StructureComparison &c) {
    j = json{{"rho", c.rho ? json(*c.rho) : json(nullptr)},
             {"rmse", c.rmse},
             {"n_pairs", c.n_pairs},
             {"columns", c.columns}};
}

inline void from_json(const json &j, StructureComparison &c) {
    const auto &rho = j.at("rho");
    c.rho = rho.is_null() ? std::nullopt : std::optional<double>(rho.get<double>());
    j.at("rmse").get_to(c.rmse);
    j.at("n_pairs").get_to(c.n_pairs);
    c.columns = j.value("columns", std::vector<std::string>{});
}

inline void to_json(json &j, const CorrelationArtifacts &a) {
    j = json{{"ids", a.ids},
             {"matrix", a.matrix},
             {"dropped_columns", a.dropped_columns},
             {"n_rows", a.n_rows},
             {"comparison", a.comparison ? json(*a.comparison) : json(nullptr)}};
}

inline void from_json(const json &j, CorrelationArtifacts &a) {
    j.at("ids").get_to(a.ids);
    j.at("matrix").get_to(a.matrix);
    if (a.matrix.size() != a.ids.size() * a.ids.size()) {
        throw Error(ErrorKind::Parse, "correlation matrix is not square");
    }
    j.at("dropped_columns").get_to(a.dropped_columns);
    j.at("n_rows").get_to(a.n_rows);
    const auto &cmp = j.at("comparison");
    a.comparison = cmp.is_null() ? std::nullopt : std::optional<StructureComparison>(cmp.get<StructureComparison>());
}

inline Catalog parse_catalog(const std::string &text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception &e) {
        throw Error(ErrorKind::Parse, std::string("catalog is not valid JSON: ") + e.what());
    }
    try {
        return j.get<Catalog>();
    } catch (const json::exception &e) {
        throw Error(ErrorKind::Parse, std::string("catalog does not match schema: ") + e.what());
    }
}

} // namespace repsuite
