#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "core.hpp"

namespace repsuite {

// ---------------------------------------------------------------------------
// CSV

namespace csv {

/// Reads one RFC 4180 record. Returns false at end of input.
inline bool read_row(std::istream &in, std::vector<std::string> &fields) {
    fields.clear();
    if (in.peek() == std::char_traits<char>::eof()) {
        return false;
    }
    std::string field;
    bool quoted = false;
    bool any = false;
    char c = 0;
    while (in.get(c)) {
        any = true;
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field.push_back('"');
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (c == '\n') {
            break;
        } else if (c != '\r') {
            field.push_back(c);
        }
    }
    if (quoted) {
        throw Error(ErrorKind::Parse, "unterminated quoted CSV field");
    }
    fields.push_back(std::move(field));
    return any;
}

inline std::string escape(std::string_view field) {
    if (field.find_first_of(",\"\n\r") == std::string_view::npos) {
        return std::string(field);
    }
    std::string out = "\"";
    for (const char c : field) {
        if (c == '"') {
            out.push_back('"');
        }
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

inline void write_row(std::ostream &out, const std::vector<std::string> &fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i > 0) {
            out << ',';
        }
        out << escape(fields[i]);
    }
    out << '\n';
}

} // namespace csv

namespace detail {

inline std::string_view trim(std::string_view s) noexcept {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
        s.remove_prefix(1);
    }
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
        s.remove_suffix(1);
    }
    return s;
}

inline std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

/// Integer parse accepting "3", " 3 ", "+3" and integral decimals like "3.0".
inline std::optional<int> parse_int(std::string_view text) {
    text = trim(text);
    if (!text.empty() && text.front() == '+') {
        text.remove_prefix(1);
    }
    if (text.empty()) {
        return std::nullopt;
    }
    int value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec == std::errc{} && ptr == text.data() + text.size()) {
        return value;
    }
    double d = 0.0;
    const auto [dptr, dec] = std::from_chars(text.data(), text.data() + text.size(), d);
    if (dec == std::errc{} && dptr == text.data() + text.size() && std::isfinite(d) && d == std::floor(d) &&
        std::abs(d) < 2e9) {
        return static_cast<int>(d);
    }
    return std::nullopt;
}

inline std::optional<double> parse_double(std::string_view text) {
    text = trim(text);
    if (!text.empty() && text.front() == '+') {
        text.remove_prefix(1);
    }
    if (text.empty()) {
        return std::nullopt;
    }
    double d = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), d);
    if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(d)) {
        return std::nullopt;
    }
    return d;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Human survey microdata

struct Respondent {
    std::string id;
    double weight = 1.0;
    std::shared_ptr<const Demographics> demographics;
};

/// Wide respondent x question table, the shape survey wave files ship in.
/// Cells outside a question's response set are stored as non-responses.
class SurveyData {
public:
    SurveyData() = default;
    explicit SurveyData(std::vector<std::string> question_ids) : question_ids_{std::move(question_ids)} {}

    void add_respondent(Respondent respondent, std::vector<std::optional<int>> answers) {
        if (answers.size() != question_ids_.size()) {
            throw Error(ErrorKind::InvalidArgument, "answer count does not match question columns");
        }
        if (!(respondent.weight > 0.0)) {
            throw Error(ErrorKind::InvalidArgument, "respondent " + respondent.id + " has non-positive weight");
        }
        if (!respondent.demographics) {
            respondent.demographics = std::make_shared<const Demographics>();
        }
        respondents_.push_back(std::move(respondent));
        answers_.insert(answers_.end(), answers.begin(), answers.end());
    }

    const std::vector<std::string> &question_ids() const noexcept { return question_ids_; }
    const std::vector<Respondent> &respondents() const noexcept { return respondents_; }
    std::size_t size() const noexcept { return respondents_.size(); }

    std::optional<std::size_t> question_index(std::string_view id) const noexcept {
        for (std::size_t i = 0; i < question_ids_.size(); ++i) {
            if (question_ids_[i] == id) {
                return i;
            }
        }
        return std::nullopt;
    }

    const std::optional<int> &answer(std::size_t respondent, std::size_t question) const {
        return answers_.at(respondent * question_ids_.size() + question);
    }

    /// One record per (respondent, question) cell.
    std::vector<ResponseRecord> records() const {
        std::vector<ResponseRecord> out;
        out.reserve(answers_.size());
        for (std::size_t r = 0; r < respondents_.size(); ++r) {
            const auto &resp = respondents_[r];
            for (std::size_t q = 0; q < question_ids_.size(); ++q) {
                out.push_back({resp.id, question_ids_[q], answer(r, q), resp.weight, resp.demographics});
            }
        }
        return out;
    }

    /// Rebuilds the wide table from long records; question columns follow
    /// first appearance.
    static SurveyData from_records(std::span<const ResponseRecord> records) {
        std::vector<std::string> qids;
        std::vector<std::string> rids;
        std::map<std::string, std::size_t> qindex;
        std::map<std::string, std::size_t> rindex;
        for (const auto &rec : records) {
            if (qindex.emplace(rec.question_id, qids.size()).second) {
                qids.push_back(rec.question_id);
            }
            if (rindex.emplace(rec.respondent_id, rids.size()).second) {
                rids.push_back(rec.respondent_id);
            }
        }
        std::vector<std::vector<std::optional<int>>> cells(rids.size(), std::vector<std::optional<int>>(qids.size()));
        std::vector<Respondent> people(rids.size());
        for (const auto &rec : records) {
            const auto r = rindex[rec.respondent_id];
            cells[r][qindex[rec.question_id]] = rec.response;
            people[r] = Respondent{rec.respondent_id, rec.weight,
                                   rec.demographics ? rec.demographics : std::make_shared<const Demographics>()};
        }
        SurveyData out(std::move(qids));
        for (std::size_t r = 0; r < people.size(); ++r) {
            out.add_respondent(std::move(people[r]), std::move(cells[r]));
        }
        return out;
    }

private:
    std::vector<std::string> question_ids_;
    std::vector<Respondent> respondents_;
    std::vector<std::optional<int>> answers_;
};

struct HumanCsvOptions {
    std::string id_column = "id";
    std::string weight_column = "weight";
};

/// Parses a wide CSV: one row per respondent, columns for the respondent id,
/// the survey weight, catalog questions and demographic fields. Columns not
/// named in the catalog are ignored.
inline SurveyData parse_human_table(std::istream &in, const Catalog &catalog, const HumanCsvOptions &options = {}) {
    std::vector<std::string> header;
    if (!csv::read_row(in, header)) {
        throw Error(ErrorKind::Parse, "human data is empty (no header row)");
    }
    for (auto &h : header) {
        h = std::string(detail::trim(h));
    }
    const auto find_col = [&](std::string_view name) -> std::optional<std::size_t> {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) {
                return i;
            }
        }
        return std::nullopt;
    };
    const auto weight_col = find_col(options.weight_column);
    if (!weight_col) {
        throw Error(ErrorKind::Parse, "missing weight column '" + options.weight_column + "'");
    }
    const auto id_col = find_col(options.id_column);
    if (!id_col) {
        throw Error(ErrorKind::Parse, "missing respondent id column '" + options.id_column + "'");
    }

    std::set<std::string> filter_fields;
    for (const auto &d : catalog.demographics) {
        filter_fields.insert(d.id);
    }
    for (const auto &s : catalog.subgroups) {
        for (const auto &c : s.filter) {
            filter_fields.insert(c.field);
        }
    }

    std::vector<std::string> qids;
    std::vector<std::size_t> qcols;
    std::vector<const QuestionSpec *> qspecs;
    for (const auto &q : catalog.questions) {
        if (const auto col = find_col(q.id)) {
            qids.push_back(q.id);
            qcols.push_back(*col);
            qspecs.push_back(&q);
        }
    }
    std::vector<std::pair<std::string, std::size_t>> demo_cols;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (filter_fields.count(header[i]) != 0) {
            demo_cols.emplace_back(header[i], i);
        }
    }

    SurveyData data(qids);
    std::vector<std::string> row;
    std::size_t row_index = 0;
    while (csv::read_row(in, row)) {
        ++row_index;
        if (row.size() == 1 && detail::trim(row[0]).empty()) {
            continue;
        }
        if (row.size() != header.size()) {
            throw Error(ErrorKind::Parse, "row " + std::to_string(row_index) + " has " + std::to_string(row.size()) +
                                              " fields, expected " + std::to_string(header.size()));
        }
        const auto weight = detail::parse_double(row[*weight_col]);
        if (!weight) {
            throw Error(ErrorKind::Parse, "invalid weight at row " + std::to_string(row_index));
        }
        if (*weight < 0.0) {
            throw Error(ErrorKind::Parse, "negative weight at row " + std::to_string(row_index));
        }
        if (*weight == 0.0) {
            throw Error(ErrorKind::Parse, "non-positive weight at row " + std::to_string(row_index));
        }
        auto demo = std::make_shared<Demographics>();
        for (const auto &[name, col] : demo_cols) {
            const auto v = detail::trim(row[col]);
            if (!v.empty()) {
                (*demo)[name] = std::string(v);
            }
        }
        std::vector<std::optional<int>> answers(qids.size());
        for (std::size_t i = 0; i < qids.size(); ++i) {
            const auto v = detail::parse_int(row[qcols[i]]);
            if (v && qspecs[i]->contains(*v)) {
                answers[i] = v;
            }
        }
        data.add_respondent(Respondent{std::string(detail::trim(row[*id_col])), *weight, std::move(demo)},
                            std::move(answers));
    }
    return data;
}

inline std::vector<ResponseRecord> parse_human_responses(std::istream &in, const Catalog &catalog,
                                                         const HumanCsvOptions &options = {}) {
    return parse_human_table(in, catalog, options).records();
}

/// Writes the wide format read by parse_human_table.
inline void write_human_table(std::ostream &out, const SurveyData &data, const std::vector<std::string> &demo_fields,
                              const HumanCsvOptions &options = {}) {
    std::vector<std::string> header{options.id_column, options.weight_column};
    header.insert(header.end(), demo_fields.begin(), demo_fields.end());
    header.insert(header.end(), data.question_ids().begin(), data.question_ids().end());
    csv::write_row(out, header);
    std::vector<std::string> row;
    std::ostringstream num;
    num.precision(17);
    for (std::size_t r = 0; r < data.size(); ++r) {
        const auto &resp = data.respondents()[r];
        row.clear();
        row.push_back(resp.id);
        num.str({});
        num << resp.weight;
        row.push_back(num.str());
        for (const auto &f : demo_fields) {
            const auto it = resp.demographics->find(f);
            row.push_back(it == resp.demographics->end() ? std::string{} : it->second);
        }
        for (std::size_t q = 0; q < data.question_ids().size(); ++q) {
            const auto &a = data.answer(r, q);
            row.push_back(a ? std::to_string(*a) : std::string{});
        }
        csv::write_row(out, row);
    }
}

// ---------------------------------------------------------------------------
// Subgroup assignment

/// Every subgroup whose filter the respondent satisfies. A respondent may
/// match nothing in a dimension.
inline std::vector<std::string> assign_subgroups(const Demographics &demographics,
                                                 std::span<const SubgroupSpec> subgroups) {
    std::vector<std::string> out;
    for (const auto &s : subgroups) {
        if (s.matches(demographics)) {
            out.push_back(s.id);
        }
    }
    return out;
}

/// Record-set form: demographic values and the respondent's own answers are
/// both visible to filters.
inline std::vector<std::string> assign_subgroups(std::span<const ResponseRecord> respondent_records,
                                                 std::span<const SubgroupSpec> subgroups) {
    Demographics merged;
    for (const auto &rec : respondent_records) {
        for (const auto &[k, v] : rec.demographic_values()) {
            merged.emplace(k, v);
        }
        if (rec.response) {
            merged[rec.question_id] = std::to_string(*rec.response);
        }
    }
    return assign_subgroups(merged, subgroups);
}

// ---------------------------------------------------------------------------
// Generation cleaning and scale flipping

/// The question as shown with its response scale reversed: the i-th value
/// carries the label of the (K-1-i)-th canonical option.
inline QuestionSpec presented_question(const QuestionSpec &question, bool flipped) {
    if (!flipped) {
        return question;
    }
    if (!question.is_ordinal()) {
        throw Error(ErrorKind::WrongScaleKind, "cannot flip nominal question " + question.id);
    }
    QuestionSpec out = question;
    const std::size_t k = question.responses.size();
    for (std::size_t i = 0; i < k; ++i) {
        out.responses[i].label = question.responses[k - 1 - i].label;
    }
    return out;
}

/// Maps a value chosen on the presented scale back to the canonical scale.
/// For evenly spaced scales this is min + max - value.
inline int unflip_response(int value, const QuestionSpec &question, bool flipped) {
    if (!flipped) {
        return value;
    }
    if (!question.is_ordinal()) {
        throw Error(ErrorKind::WrongScaleKind, "flipping is only defined for ordinal scales (" + question.id + ")");
    }
    const auto idx = question.index_of(value);
    if (!idx) {
        throw Error(ErrorKind::InvalidArgument,
                    "value " + std::to_string(value) + " is not on the scale of " + question.id);
    }
    return question.responses[question.responses.size() - 1 - *idx].value;
}

namespace detail {

inline std::string normalize_line(std::string_view line) {
    std::string s;
    s.reserve(line.size());
    for (const char c : line) {
        if (c != '*' && c != '`') {
            s.push_back(c);
        }
    }
    std::string_view v = trim(s);
    while (!v.empty() && (v.front() == '#' || v.front() == '>')) {
        v.remove_prefix(1);
        v = trim(v);
    }
    if (v.size() >= 2 && v.front() == '-' && v[1] == ' ') {
        v.remove_prefix(2);
    }
    const auto is_quote = [](char c) { return c == '"' || c == '\''; };
    while (v.size() >= 2 && is_quote(v.front()) && v.back() == v.front()) {
        v = trim(v.substr(1, v.size() - 2));
    }
    while (!v.empty() && v.back() == '.') {
        v.remove_suffix(1);
    }
    return std::string(trim(v));
}

inline std::vector<std::string> normalized_lines(std::string_view raw) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= raw.size()) {
        const auto end = raw.find('\n', start);
        const auto piece = raw.substr(start, end == std::string_view::npos ? raw.size() - start : end - start);
        auto line = normalize_line(piece);
        if (!line.empty()) {
            out.push_back(std::move(line));
        }
        if (end == std::string_view::npos) {
            break;
        }
        start = end + 1;
    }
    return out;
}

inline bool is_word_char(char c) noexcept { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

/// Case-folded occurrence with non-alphanumeric boundaries on both sides.
inline bool contains_word(std::string_view haystack, std::string_view needle) {
    if (needle.empty()) {
        return false;
    }
    std::size_t pos = haystack.find(needle);
    while (pos != std::string_view::npos) {
        const bool left_ok = pos == 0 || !is_word_char(haystack[pos - 1]) || !is_word_char(needle.front());
        const std::size_t after = pos + needle.size();
        const bool right_ok = after >= haystack.size() || !is_word_char(haystack[after]) || !is_word_char(needle.back());
        if (left_ok && right_ok) {
            return true;
        }
        pos = haystack.find(needle, pos + 1);
    }
    return false;
}

} // namespace detail

/// Maps a raw generation onto a response value of `question` (the question as
/// presented). Precedence: an exact "N: Label" line, then a bare leading
/// integer on the scale, then a unique case-insensitive label match. Anything
/// else, including ties at the deciding level, is invalid (nullopt).
inline std::optional<int> clean_generation(std::string_view raw_text, const QuestionSpec &question) {
    const auto lines = detail::normalized_lines(raw_text);
    if (lines.empty()) {
        return std::nullopt;
    }

    std::set<int> exact;
    for (const auto &line : lines) {
        for (const auto &opt : question.responses) {
            if (line == std::to_string(opt.value) + ": " + opt.label) {
                exact.insert(opt.value);
            }
        }
    }
    if (exact.size() == 1) {
        return *exact.begin();
    }
    if (exact.size() > 1) {
        return std::nullopt;
    }

    {
        const std::string_view first = lines.front();
        std::size_t n = 0;
        if (n < first.size() && (first[n] == '-' || first[n] == '+')) {
            ++n;
        }
        const std::size_t digits_start = n;
        while (n < first.size() && std::isdigit(static_cast<unsigned char>(first[n]))) {
            ++n;
        }
        const bool has_digits = n > digits_start;
        const bool decimal = n + 1 < first.size() && first[n] == '.' &&
                             std::isdigit(static_cast<unsigned char>(first[n + 1]));
        if (has_digits && !decimal && (n == first.size() || !detail::is_word_char(first[n]))) {
            const auto v = detail::parse_int(first.substr(0, n));
            if (v && question.contains(*v)) {
                return v;
            }
            return std::nullopt;
        }
    }

    std::string folded;
    for (const auto &line : lines) {
        if (!folded.empty()) {
            folded.push_back(' ');
        }
        folded += detail::to_lower(line);
    }
    std::vector<std::size_t> matched;
    for (std::size_t i = 0; i < question.responses.size(); ++i) {
        if (detail::contains_word(folded, detail::to_lower(question.responses[i].label))) {
            matched.push_back(i);
        }
    }
    std::vector<std::size_t> maximal;
    for (const auto i : matched) {
        const auto li = detail::to_lower(question.responses[i].label);
        const bool shadowed = std::any_of(matched.begin(), matched.end(), [&](std::size_t j) {
            if (j == i) {
                return false;
            }
            const auto lj = detail::to_lower(question.responses[j].label);
            return lj.size() > li.size() && detail::contains_word(lj, li);
        });
        if (!shadowed) {
            maximal.push_back(i);
        }
    }
    if (maximal.size() == 1) {
        return question.responses[maximal.front()].value;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Generation logs

/// One line of a simulation log as written by the sampler.
struct RawGeneration {
    std::string model_id;
    std::string question_id;
    std::optional<std::string> raw_text; ///< absent for transport failures
    bool flipped = false;
    double temperature = 0.0;
    int attempt = 1;
    std::string status = "ok"; ///< "ok" or "transport_failure"
    std::int64_t sample_index = 0;
    std::string seed_info;
    std::string timestamp;

    bool operator==(const RawGeneration &) const = default;
};

inline void to_json(json &j, const RawGeneration &g) {
    j = json{{"model_id", g.model_id},
             {"question_id", g.question_id},
             {"raw_text", g.raw_text ? json(*g.raw_text) : json(nullptr)},
             {"flipped", g.flipped},
             {"temperature", g.temperature},
             {"attempt", g.attempt},
             {"status", g.status},
             {"sample_index", g.sample_index},
             {"seed_info", g.seed_info},
             {"timestamp", g.timestamp}};
}

inline void from_json(const json &j, RawGeneration &g) {
    j.at("model_id").get_to(g.model_id);
    j.at("question_id").get_to(g.question_id);
    const auto &text = j.at("raw_text");
    g.raw_text = text.is_null() ? std::nullopt : std::optional<std::string>(text.get<std::string>());
    j.at("flipped").get_to(g.flipped);
    j.at("temperature").get_to(g.temperature);
    g.attempt = j.value("attempt", 1);
    g.status = j.value("status", std::string("ok"));
    g.sample_index = j.value("sample_index", std::int64_t{0});
    g.seed_info = j.value("seed_info", std::string{});
    g.timestamp = j.value("timestamp", std::string{});
    if (g.status != "ok" && g.status != "transport_failure") {
        throw Error(ErrorKind::Parse, "unknown status '" + g.status + "'");
    }
    if (g.status == "ok" && !g.raw_text) {
        throw Error(ErrorKind::Parse, "ok record without raw_text");
    }
}

/// Cleans and unflips one logged generation.
inline SimulatedSample to_sample(const RawGeneration &g, const QuestionSpec &question) {
    SimulatedSample s;
    s.model_id = g.model_id;
    s.question_id = g.question_id;
    s.raw_text = g.raw_text.value_or("");
    s.flipped = g.flipped;
    s.temperature = g.temperature;
    s.seed_info = g.seed_info;
    if (g.status == "transport_failure") {
        s.status = SampleStatus::TransportFailure;
        return s;
    }
    const auto presented = presented_question(question, g.flipped);
    const auto value = clean_generation(s.raw_text, presented);
    if (value) {
        s.cleaned_value = unflip_response(*value, question, g.flipped);
        s.status = SampleStatus::Valid;
    } else {
        s.status = SampleStatus::Invalid;
    }
    return s;
}

struct SimulationLog {
    std::vector<SimulatedSample> samples;
    std::size_t malformed = 0;
    std::vector<std::string> warnings;
};

/// Parses newline-delimited JSON generation records. Malformed lines are
/// skipped and counted; an unknown question id is fatal.
inline SimulationLog parse_simulation_log(std::istream &in, const Catalog &catalog) {
    SimulationLog out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) {
            continue;
        }
        RawGeneration g;
        try {
            g = json::parse(line).get<RawGeneration>();
        } catch (const std::exception &e) {
            ++out.malformed;
            out.warnings.push_back("line " + std::to_string(line_no) + ": malformed record (" + e.what() + ")");
            continue;
        }
        const auto *question = catalog.find_question(g.question_id);
        if (question == nullptr) {
            throw Error(ErrorKind::UnknownQuestion,
                        "line " + std::to_string(line_no) + ": unknown question id " + g.question_id);
        }
        if (g.flipped && !question->is_ordinal()) {
            ++out.malformed;
            out.warnings.push_back("line " + std::to_string(line_no) + ": flipped nominal question " + g.question_id);
            continue;
        }
        out.samples.push_back(to_sample(g, *question));
    }
    return out;
}

} // namespace repsuite
