#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "vrecs/errors.hpp"
#include "vrecs/response.hpp"
#include "vrecs/sample.hpp"
#include "vrecs/util.hpp"
#include "vrecs/vegalite.hpp"
#include "vrecs/vegazero.hpp"

namespace vrecs::evallm {

enum class ErrorClass { IncorrectScaling, InvertedAxes, NonOptimalSpacing, Hallucination, MissingData, InputError };

inline constexpr std::array<ErrorClass, 6> kErrorClasses = {ErrorClass::IncorrectScaling, ErrorClass::InvertedAxes,
                                                            ErrorClass::NonOptimalSpacing, ErrorClass::Hallucination,
                                                            ErrorClass::MissingData, ErrorClass::InputError};

inline std::string_view to_string(ErrorClass e) {
    switch (e) {
        case ErrorClass::IncorrectScaling: return "IncorrectScaling";
        case ErrorClass::InvertedAxes: return "InvertedAxes";
        case ErrorClass::NonOptimalSpacing: return "NonOptimalSpacing";
        case ErrorClass::Hallucination: return "Hallucination";
        case ErrorClass::MissingData: return "MissingData";
        case ErrorClass::InputError: return "InputError";
    }
    return "InputError";
}

/// Which level scores the y aggregate.
enum class AggregateLevel { axes, data_mapping, ignored };
enum class ParseMode { strict, lenient };

struct EvalOptions {
    AggregateLevel aggregate_level = AggregateLevel::axes;
    ParseMode mode = ParseMode::strict;
};

struct EvalRecord {
    std::string sample_id;
    std::string model_name;
    Hardness hardness = Hardness::easy;
    int syntax = 0;
    std::optional<int> data_mapping;
    std::optional<int> mark;
    std::optional<int> axes;
    std::optional<double> data_mapping_partial;  // Jaccard overlap, reported separately
    std::set<ErrorClass> errors;
    bool lenient = false;
};

// ---------------------------------------------------------------------------
// levels

inline std::optional<response::Recommendation> try_parse(std::string_view raw, ParseMode mode) {
    try {
        return mode == ParseMode::strict ? response::parse_response(raw) : response::lenient_extract(raw);
    } catch (const ResponseError&) {
        return std::nullopt;
    }
}

inline int eval_syntax(std::string_view raw, ParseMode mode = ParseMode::strict) {
    auto rec = try_parse(raw, mode);
    if (!rec) return 0;
    try {
        return vegazero::parse(vegazero::render(rec->spec)) == rec->spec ? 1 : 0;
    } catch (const SyntaxError&) {
        return 0;
    }
}

/// Columns a spec draws from the data: x, y (unless counted), color, and
/// every filter column.
inline std::set<std::string> data_columns(const vegazero::Spec& s) {
    std::set<std::string> cols{s.x};
    if (s.y.aggregate != vegazero::Aggregate::count) cols.insert(s.y.column);
    if (s.color) cols.insert(*s.color);
    if (s.filter) {
        for (const auto& conj : s.filter->any_of) {
            for (const auto& cmp : conj) cols.insert(cmp.column);
        }
    }
    return cols;
}

inline int eval_data_mapping(const vegazero::Spec& pred, const vegazero::Spec& truth, const EvalOptions& o = {}) {
    if (data_columns(pred) != data_columns(truth)) return 0;
    if (o.aggregate_level == AggregateLevel::data_mapping && pred.y.aggregate != truth.y.aggregate) return 0;
    return 1;
}

inline double data_mapping_partial(const vegazero::Spec& pred, const vegazero::Spec& truth) {
    auto a = data_columns(pred);
    auto b = data_columns(truth);
    std::vector<std::string> inter, uni;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(uni));
    return uni.empty() ? 1.0 : static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

inline int eval_mark(const vegazero::Spec& pred, const vegazero::Spec& truth) { return pred.mark == truth.mark ? 1 : 0; }

inline int eval_axes(const vegazero::Spec& pred, const vegazero::Spec& truth, const EvalOptions& o = {}) {
    if (pred.x != truth.x || pred.y.column != truth.y.column) return 0;
    if (o.aggregate_level == AggregateLevel::axes && pred.y.aggregate != truth.y.aggregate) return 0;
    return 1;
}

// ---------------------------------------------------------------------------
// error taxonomy

namespace detail {

inline bool looks_like_year_field(const nlohmann::ordered_json& values, const std::string& field) {
    if (!is_year_like_header(field) || values.empty()) return false;
    for (const auto& row : values) {
        const auto it = row.find(field);
        if (it == row.end() || it->is_null()) continue;
        if (!it->is_number_integer()) return false;
        auto y = it->get<long long>();
        if (y < kMinYear || y > kMaxYear) return false;
    }
    return true;
}

}  // namespace detail

/// Rule-based detection. Hallucination and NonOptimalSpacing are never
/// produced here; they come only from human review.
inline std::set<ErrorClass> classify_errors(const response::Recommendation& pred, const CorpusTriple& truth,
                                            const EvalOptions& o = {}) {
    std::set<ErrorClass> out;
    if (!truth.table) return out;
    if (!vegazero::validate(truth.spec, sketch(*truth.table)).empty()) out.insert(ErrorClass::InputError);

    const auto& p = pred.spec;
    const auto& t = truth.spec;
    if (!eval_axes(p, t, o) && p.x == t.y.column && p.y.column == t.x && t.x != t.y.column) {
        out.insert(ErrorClass::InvertedAxes);
    }

    std::optional<vegazero::VegaLiteDoc> doc = pred.doc;
    if (!doc) {
        try {
            doc = vegazero::compile(p, *truth.table);
        } catch (const Error&) {
        }
    }
    if (doc) {
        const auto& json = doc->json;
        const auto& values = json.contains("data") && json["data"].contains("values") ? json["data"]["values"]
                                                                                        : nlohmann::ordered_json::array();
        if (json.contains("encoding")) {
            for (const auto& [channel, enc] : json["encoding"].items()) {
                if (!enc.contains("field") || enc.value("type", "") != "quantitative") continue;
                const auto field = enc["field"].get<std::string>();
                const Column* c = truth.table->column(field);
                if ((c && c->type == ColumnType::temporal) || detail::looks_like_year_field(values, field)) {
                    out.insert(ErrorClass::IncorrectScaling);
                }
            }
        }
        if (doc->row_count() == 0 && !truth.table->rows().empty()) out.insert(ErrorClass::MissingData);
    }
    return out;
}

// ---------------------------------------------------------------------------
// per-sample evaluation

inline EvalRecord evaluate_sample(const std::string& model_name, std::string_view raw, const CorpusTriple& truth,
                                  const EvalOptions& o = {}) {
    EvalRecord r;
    r.sample_id = truth.id;
    r.model_name = model_name;
    r.hardness = truth.hardness;
    auto pred = try_parse(raw, o.mode);
    r.syntax = pred ? eval_syntax(raw, o.mode) : 0;
    if (!r.syntax) {
        if (truth.table && !vegazero::validate(truth.spec, sketch(*truth.table)).empty()) {
            r.errors.insert(ErrorClass::InputError);
        }
        return r;
    }
    r.lenient = pred->lenient;
    r.data_mapping = eval_data_mapping(pred->spec, truth.spec, o);
    r.data_mapping_partial = data_mapping_partial(pred->spec, truth.spec);
    r.mark = eval_mark(pred->spec, truth.spec);
    r.axes = eval_axes(pred->spec, truth.spec, o);
    r.errors = classify_errors(*pred, truth, o);
    return r;
}

/// One record per truth triple; a triple without a completion scores syntax 0.
inline std::vector<EvalRecord> evaluate_model(const std::string& model_name,
                                              const std::map<std::string, std::string>& completions,
                                              const std::vector<CorpusTriple>& truth, const EvalOptions& o = {}) {
    std::vector<EvalRecord> out;
    for (const auto& t : truth) {
        auto it = completions.find(t.id);
        out.push_back(evaluate_sample(model_name, it == completions.end() ? std::string_view{} : it->second, t, o));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.sample_id < b.sample_id; });
    return out;
}

/// Reads JSON lines of {sample_id, completion}; `id`, `raw` and `text` are
/// accepted as alternative keys.
inline std::map<std::string, std::string> load_completions(const std::filesystem::path& path) {
    std::map<std::string, std::string> out;
    std::size_t n = 0;
    for (const auto& line : util::split_lines(util::read_file(path))) {
        ++n;
        if (util::trim(line).empty()) continue;
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw IndexMalformed(path.string() + ":" + std::to_string(n) + ": not a JSON object");
        std::string id = j.contains("sample_id") ? j["sample_id"].get<std::string>() : j.value("id", "");
        std::string raw = j.contains("completion") ? j["completion"].get<std::string>()
                          : j.contains("raw")      ? j["raw"].get<std::string>()
                                                   : j.value("text", "");
        if (id.empty()) throw IndexMalformed(path.string() + ":" + std::to_string(n) + ": missing sample_id");
        out[id] = std::move(raw);
    }
    return out;
}

// ---------------------------------------------------------------------------
// reports

struct LevelScore {
    std::size_t correct = 0;
    std::size_t applicable = 0;

    std::optional<double> accuracy() const {
        if (applicable == 0) return std::nullopt;
        return static_cast<double>(correct) / static_cast<double>(applicable);
    }

    void add(std::optional<int> v) {
        if (!v) return;
        ++applicable;
        correct += *v ? 1 : 0;
    }

    bool operator==(const LevelScore&) const = default;
};

struct LevelScores {
    LevelScore syntax;
    LevelScore data_mapping;
    LevelScore mark;
    LevelScore axes;

    void add(const EvalRecord& r) {
        syntax.add(r.syntax);
        data_mapping.add(r.data_mapping);
        mark.add(r.mark);
        axes.add(r.axes);
    }

    bool operator==(const LevelScores&) const = default;
};

struct EvalReport {
    std::string model_name;
    std::size_t n_samples = 0;
    LevelScores levels;
    std::map<Hardness, LevelScores> per_hardness;
    std::map<ErrorClass, std::size_t> error_counts;
    std::optional<double> data_mapping_partial;  // mean Jaccard over applicable records
    std::size_t lenient_count = 0;
};

inline EvalReport aggregate_report(std::vector<EvalRecord> records) {
    if (records.empty()) throw EmptyInput("no evaluation records");
    std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.sample_id < b.sample_id; });
    EvalReport rep;
    rep.model_name = records.front().model_name;
    rep.n_samples = records.size();
    double partial_sum = 0;
    std::size_t partial_n = 0;
    for (const auto& r : records) {
        if (r.model_name != rep.model_name) throw InvalidArgument("records mix models " + rep.model_name + " and " + r.model_name);
        rep.levels.add(r);
        rep.per_hardness[r.hardness].add(r);
        for (auto e : r.errors) ++rep.error_counts[e];
        if (r.data_mapping_partial) {
            partial_sum += *r.data_mapping_partial;
            ++partial_n;
        }
        if (r.lenient) ++rep.lenient_count;
    }
    if (partial_n) rep.data_mapping_partial = partial_sum / static_cast<double>(partial_n);
    return rep;
}

inline nlohmann::ordered_json to_json(const LevelScore& s) {
    nlohmann::ordered_json j;
    j["correct"] = s.correct;
    j["applicable"] = s.applicable;
    if (auto a = s.accuracy()) j["accuracy"] = *a;
    else j["accuracy"] = nullptr;
    return j;
}

inline nlohmann::ordered_json to_json(const LevelScores& s) {
    nlohmann::ordered_json j;
    j["syntax"] = to_json(s.syntax);
    j["data_mapping"] = to_json(s.data_mapping);
    j["mark"] = to_json(s.mark);
    j["axes"] = to_json(s.axes);
    return j;
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["model_name"] = r.model_name;
    j["n_samples"] = r.n_samples;
    j["levels"] = to_json(r.levels);
    nlohmann::ordered_json ph = nlohmann::ordered_json::object();
    for (auto h : kHardnessLevels) {
        if (auto it = r.per_hardness.find(h); it != r.per_hardness.end()) ph[std::string(to_string(h))] = to_json(it->second);
    }
    j["per_hardness"] = std::move(ph);
    nlohmann::ordered_json errors = nlohmann::ordered_json::object();
    for (auto e : kErrorClasses) {
        auto it = r.error_counts.find(e);
        errors[std::string(to_string(e))] = it == r.error_counts.end() ? 0 : it->second;
    }
    j["error_counts"] = std::move(errors);
    if (r.data_mapping_partial) j["data_mapping_partial"] = *r.data_mapping_partial;
    else j["data_mapping_partial"] = nullptr;
    j["lenient_count"] = r.lenient_count;
    return j;
}

inline nlohmann::ordered_json to_json(const EvalRecord& r) {
    nlohmann::ordered_json j;
    auto opt = [](std::optional<int> v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr); };
    j["sample_id"] = r.sample_id;
    j["model_name"] = r.model_name;
    j["hardness"] = to_string(r.hardness);
    j["syntax"] = r.syntax;
    j["data_mapping"] = opt(r.data_mapping);
    j["mark"] = opt(r.mark);
    j["axes"] = opt(r.axes);
    auto errors = nlohmann::ordered_json::array();
    for (auto e : r.errors) errors.push_back(to_string(e));
    j["errors"] = std::move(errors);
    j["lenient"] = r.lenient;
    return j;
}

namespace detail {

inline std::string pct(const LevelScore& s) {
    auto a = s.accuracy();
    if (!a) return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", *a);
    return buf;
}

inline std::string html_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

inline const std::array<std::pair<const char*, LevelScore LevelScores::*>, 4> kLevels = {{
    {"syntax", &LevelScores::syntax},
    {"data mapping", &LevelScores::data_mapping},
    {"mark", &LevelScores::mark},
    {"axes", &LevelScores::axes},
}};

}  // namespace detail

/// Plain-text table: one row per level, one column per model.
inline std::string comparison_text(const std::vector<EvalReport>& reports) {
    std::string out = "level        ";
    for (const auto& r : reports) out += " | " + r.model_name;
    out += "\n";
    for (const auto& [label, member] : detail::kLevels) {
        std::string row = label;
        row.resize(std::max<std::size_t>(row.size(), 13), ' ');
        for (const auto& r : reports) {
            std::string cell = detail::pct(r.levels.*member);
            cell.resize(std::max(cell.size(), r.model_name.size()), ' ');
            row += " | " + cell;
        }
        out += row + "\n";
    }
    return out;
}

inline std::string comparison_html(const std::vector<EvalReport>& reports) {
    std::string out = "<table>\n<tr><th>level</th>";
    for (const auto& r : reports) out += "<th>" + detail::html_escape(r.model_name) + "</th>";
    out += "</tr>\n";
    for (const auto& [label, member] : detail::kLevels) {
        out += std::string("<tr><td>") + label + "</td>";
        for (const auto& r : reports) out += "<td>" + detail::pct(r.levels.*member) + "</td>";
        out += "</tr>\n";
    }
    out += "</table>\n";
    return out;
}

}  // namespace vrecs::evallm
