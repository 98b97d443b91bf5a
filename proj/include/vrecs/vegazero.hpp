#pragma once

// VegaZero: keyword-sequence chart grammar.
//
//   mark <M> [data <name>] encoding x <col> y aggregate <agg> <col> [color <col>]
//     [transform [filter <pred>] [group x] [bin x by <unit>] [sort <axis> <dir>] [topk <k>]]
//
// Keywords are case-insensitive, column names are taken verbatim. Transform
// clauses must appear in the order above. A filter predicate is a list of
// `<col> <op> <literal>` comparisons joined by `and`/`or` (and binds tighter,
// no parentheses); string literals may be single- or double-quoted with the
// quote character doubled to escape it.

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "vrecs/dataset.hpp"
#include "vrecs/errors.hpp"
#include "vrecs/util.hpp"

namespace vrecs::vegazero {

enum class Mark { bar, line, point, arc };
enum class Aggregate { none, count, mean, sum, min, max };
enum class TimeUnit { year, month, weekday };
enum class Axis { x, y };
enum class SortOrder { asc, desc };
enum class CompareOp { eq, ne, lt, le, gt, ge };

inline constexpr Mark kMarks[] = {Mark::bar, Mark::line, Mark::point, Mark::arc};
inline constexpr Aggregate kAggregates[] = {Aggregate::none, Aggregate::count, Aggregate::mean,
                                            Aggregate::sum,  Aggregate::min,   Aggregate::max};
inline constexpr TimeUnit kTimeUnits[] = {TimeUnit::year, TimeUnit::month, TimeUnit::weekday};
inline constexpr CompareOp kCompareOps[] = {CompareOp::eq, CompareOp::ne, CompareOp::lt,
                                            CompareOp::le, CompareOp::gt, CompareOp::ge};

inline std::string_view to_string(Mark m) {
    switch (m) {
        case Mark::bar: return "bar";
        case Mark::line: return "line";
        case Mark::point: return "point";
        case Mark::arc: return "arc";
    }
    return "bar";
}

inline std::string_view to_string(Aggregate a) {
    switch (a) {
        case Aggregate::none: return "none";
        case Aggregate::count: return "count";
        case Aggregate::mean: return "mean";
        case Aggregate::sum: return "sum";
        case Aggregate::min: return "min";
        case Aggregate::max: return "max";
    }
    return "none";
}

inline std::string_view to_string(TimeUnit u) {
    switch (u) {
        case TimeUnit::year: return "year";
        case TimeUnit::month: return "month";
        case TimeUnit::weekday: return "weekday";
    }
    return "year";
}

inline std::string_view to_string(Axis a) { return a == Axis::x ? "x" : "y"; }
inline std::string_view to_string(SortOrder o) { return o == SortOrder::asc ? "asc" : "desc"; }

inline std::string_view to_string(CompareOp op) {
    switch (op) {
        case CompareOp::eq: return "=";
        case CompareOp::ne: return "!=";
        case CompareOp::lt: return "<";
        case CompareOp::le: return "<=";
        case CompareOp::gt: return ">";
        case CompareOp::ge: return ">=";
    }
    return "=";
}

template <class Enum, std::size_t N>
std::optional<Enum> enum_from_string(std::string_view s, const Enum (&values)[N]) {
    for (auto v : values) {
        if (util::iequals(s, to_string(v))) return v;
    }
    return std::nullopt;
}

using Literal = std::variant<double, std::string>;

struct Comparison {
    std::string column;
    CompareOp op = CompareOp::eq;
    Literal value;

    bool operator==(const Comparison&) const = default;
};

/// Disjunction of conjunctions.
struct Predicate {
    std::vector<std::vector<Comparison>> any_of;

    bool operator==(const Predicate&) const = default;
};

struct YEncoding {
    std::string column;
    Aggregate aggregate = Aggregate::none;

    bool operator==(const YEncoding&) const = default;
};

struct SortClause {
    Axis axis = Axis::y;
    SortOrder order = SortOrder::asc;

    bool operator==(const SortClause&) const = default;
};

struct Spec {
    Mark mark = Mark::bar;
    std::optional<std::string> data;
    std::string x;
    YEncoding y;
    std::optional<std::string> color;
    std::optional<Predicate> filter;
    bool group = false;
    std::optional<TimeUnit> bin;
    std::optional<SortClause> sort;
    std::optional<int> topk;

    bool operator==(const Spec&) const = default;

    /// Columns the spec reads, deduplicated, in first-mention order.
    std::vector<std::string> referenced_columns() const {
        std::vector<std::string> out;
        auto add = [&](const std::string& c) {
            if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
        };
        add(x);
        add(y.column);
        if (color) add(*color);
        if (filter) {
            for (const auto& conj : filter->any_of) {
                for (const auto& cmp : conj) add(cmp.column);
            }
        }
        return out;
    }
};

namespace detail {

struct Token {
    std::string text;
    std::size_t offset = 0;
    bool quoted = false;
};

inline std::vector<Token> tokenize(std::string_view text) {
    std::vector<Token> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        if (util::is_space(text[i])) {
            ++i;
            continue;
        }
        Token tok;
        tok.offset = i;
        char q = text[i];
        if (q == '\'' || q == '"') {
            tok.quoted = true;
            ++i;
            bool closed = false;
            while (i < text.size()) {
                if (text[i] == q) {
                    if (i + 1 < text.size() && text[i + 1] == q) {
                        tok.text.push_back(q);
                        i += 2;
                        continue;
                    }
                    ++i;
                    closed = true;
                    break;
                }
                tok.text.push_back(text[i++]);
            }
            if (!closed) throw SyntaxError(text.size(), "closing quote");
        } else {
            while (i < text.size() && !util::is_space(text[i])) tok.text.push_back(text[i++]);
        }
        tokens.push_back(std::move(tok));
    }
    return tokens;
}

class Parser {
public:
    explicit Parser(std::string_view text) : text_(text), tokens_(tokenize(text)) {}

    Spec parse() {
        Spec spec;
        keyword("mark");
        spec.mark = choice(kMarks, "mark keyword (bar, line, point, arc)");
        if (peek_keyword("data")) {
            ++pos_;
            spec.data = column("data name");
        }
        keyword("encoding");
        keyword("x");
        spec.x = column("x column");
        keyword("y");
        keyword("aggregate");
        spec.y.aggregate = choice(kAggregates, "aggregate (none, count, mean, sum, min, max)");
        spec.y.column = column("y column");
        if (peek_keyword("color")) {
            ++pos_;
            spec.color = column("color column");
        }
        if (peek_keyword("transform")) {
            ++pos_;
            transforms(spec);
        }
        if (!at_end()) throw SyntaxError(current_offset(), "end of input");
        return spec;
    }

private:
    void transforms(Spec& spec) {
        if (peek_keyword("filter")) {
            ++pos_;
            spec.filter = predicate();
        }
        if (peek_keyword("group")) {
            ++pos_;
            keyword("x");
            spec.group = true;
        }
        if (peek_keyword("bin")) {
            ++pos_;
            keyword("x");
            keyword("by");
            spec.bin = choice(kTimeUnits, "bin unit (year, month, weekday)");
        }
        if (peek_keyword("sort")) {
            ++pos_;
            SortClause s;
            if (peek_keyword("x")) s.axis = Axis::x;
            else if (peek_keyword("y")) s.axis = Axis::y;
            else throw SyntaxError(current_offset(), "sort axis (x, y)");
            ++pos_;
            if (peek_keyword("asc")) s.order = SortOrder::asc;
            else if (peek_keyword("desc")) s.order = SortOrder::desc;
            else throw SyntaxError(current_offset(), "sort direction (asc, desc)");
            ++pos_;
            spec.sort = s;
        }
        if (peek_keyword("topk")) {
            ++pos_;
            if (at_end() || tokens_[pos_].quoted || !detail_all_digits(tokens_[pos_].text) ||
                tokens_[pos_].text.size() > 9) {
                throw SyntaxError(current_offset(), "positive integer");
            }
            int k = std::stoi(tokens_[pos_].text);
            if (k <= 0) throw SyntaxError(current_offset(), "positive integer");
            ++pos_;
            spec.topk = k;
        }
    }

    Predicate predicate() {
        Predicate p;
        std::vector<Comparison> conj;
        for (;;) {
            conj.push_back(comparison());
            if (peek_keyword("and")) {
                ++pos_;
                continue;
            }
            p.any_of.push_back(std::move(conj));
            conj.clear();
            if (peek_keyword("or")) {
                ++pos_;
                continue;
            }
            break;
        }
        return p;
    }

    Comparison comparison() {
        Comparison c;
        c.column = column("filter column");
        if (at_end()) throw SyntaxError(current_offset(), "comparison operator");
        const auto& op = tokens_[pos_];
        auto parsed = op.quoted ? std::nullopt : enum_from_string(op.text, kCompareOps);
        if (!parsed) throw SyntaxError(op.offset, "comparison operator (=, !=, <, <=, >, >=)");
        c.op = *parsed;
        ++pos_;
        if (at_end()) throw SyntaxError(current_offset(), "literal");
        const auto& lit = tokens_[pos_];
        if (lit.quoted) {
            c.value = lit.text;
        } else if (auto n = util::parse_number(lit.text)) {
            c.value = *n;
        } else {
            c.value = lit.text;
        }
        ++pos_;
        return c;
    }

    static bool detail_all_digits(std::string_view s) { return vrecs::detail::all_digits(s); }

    bool at_end() const { return pos_ >= tokens_.size(); }
    std::size_t current_offset() const { return at_end() ? text_.size() : tokens_[pos_].offset; }

    bool peek_keyword(std::string_view kw) const {
        return !at_end() && !tokens_[pos_].quoted && util::iequals(tokens_[pos_].text, kw);
    }

    void keyword(std::string_view kw) {
        if (!peek_keyword(kw)) throw SyntaxError(current_offset(), "'" + std::string(kw) + "'");
        ++pos_;
    }

    std::string column(std::string_view what) {
        if (at_end() || tokens_[pos_].quoted) throw SyntaxError(current_offset(), std::string(what));
        return tokens_[pos_++].text;
    }

    template <class Enum, std::size_t N>
    Enum choice(const Enum (&values)[N], std::string_view what) {
        if (at_end() || tokens_[pos_].quoted) throw SyntaxError(current_offset(), std::string(what));
        auto v = enum_from_string(tokens_[pos_].text, values);
        if (!v) throw SyntaxError(tokens_[pos_].offset, std::string(what));
        ++pos_;
        return *v;
    }

    std::string_view text_;
    std::vector<Token> tokens_;
    std::size_t pos_ = 0;
};

inline std::string render_literal(const Literal& lit) {
    if (const auto* d = std::get_if<double>(&lit)) return util::format_number(*d);
    const auto& s = std::get<std::string>(lit);
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += "''";
        else out.push_back(c);
    }
    out += "'";
    return out;
}

}  // namespace detail

/// Throws SyntaxError(position, expected) on any deviation from the grammar.
inline Spec parse(std::string_view text) { return detail::Parser(text).parse(); }

inline std::string render(const Predicate& pred) {
    std::string out;
    for (std::size_t i = 0; i < pred.any_of.size(); ++i) {
        if (i) out += " or ";
        for (std::size_t j = 0; j < pred.any_of[i].size(); ++j) {
            if (j) out += " and ";
            const auto& c = pred.any_of[i][j];
            out += c.column;
            out += ' ';
            out += to_string(c.op);
            out += ' ';
            out += detail::render_literal(c.value);
        }
    }
    return out;
}

/// Canonical form: lowercase keywords, single spaces, fixed clause order.
inline std::string render(const Spec& spec) {
    std::string out = "mark ";
    out += to_string(spec.mark);
    if (spec.data) out += " data " + *spec.data;
    out += " encoding x " + spec.x;
    out += " y aggregate ";
    out += to_string(spec.y.aggregate);
    out += ' ' + spec.y.column;
    if (spec.color) out += " color " + *spec.color;
    std::string transform;
    if (spec.filter) transform += " filter " + render(*spec.filter);
    if (spec.group) transform += " group x";
    if (spec.bin) {
        transform += " bin x by ";
        transform += to_string(*spec.bin);
    }
    if (spec.sort) {
        transform += " sort ";
        transform += to_string(spec.sort->axis);
        transform += ' ';
        transform += to_string(spec.sort->order);
    }
    if (spec.topk) transform += " topk " + std::to_string(*spec.topk);
    if (!transform.empty()) out += " transform" + transform;
    return out;
}

// ---------------------------------------------------------------------------
// validation

enum class ViolationCode { UnknownColumn, TypeMismatch, IllegalAggregate, BinOnNonTemporal, TopkWithoutSort };

inline std::string_view to_string(ViolationCode c) {
    switch (c) {
        case ViolationCode::UnknownColumn: return "UnknownColumn";
        case ViolationCode::TypeMismatch: return "TypeMismatch";
        case ViolationCode::IllegalAggregate: return "IllegalAggregate";
        case ViolationCode::BinOnNonTemporal: return "BinOnNonTemporal";
        case ViolationCode::TopkWithoutSort: return "TopkWithoutSort";
    }
    return "UnknownColumn";
}

struct Violation {
    ViolationCode code;
    std::string message;
    std::string location;  // e.g. "encoding.x", "transform.filter[0][1]"

    bool operator==(const Violation&) const = default;
};

inline std::string describe(const Violation& v) {
    return std::string(to_string(v.code)) + " at " + v.location + ": " + v.message;
}

inline bool literal_matches(const Literal& lit, ColumnType type) {
    switch (type) {
        case ColumnType::nominal: return true;
        case ColumnType::quantitative: return std::holds_alternative<double>(lit);
        case ColumnType::temporal:
            if (const auto* d = std::get_if<double>(&lit)) return std::floor(*d) == *d;
            return parse_iso_date(std::get<std::string>(lit)).has_value() ||
                   parse_year(std::get<std::string>(lit)).has_value();
    }
    return false;
}

/// Empty iff every referenced column exists in the sketch and all type rules hold.
inline std::vector<Violation> validate(const Spec& spec, const TableSketch& sketch) {
    std::vector<Violation> out;
    auto lookup = [&](const std::string& col, const std::string& where) -> const Column* {
        const Column* c = sketch.feature(col);
        if (!c) {
            out.push_back({ViolationCode::UnknownColumn,
                           "column '" + col + "' is not in table '" + sketch.table_name + "'", where});
        }
        return c;
    };

    const Column* x = lookup(spec.x, "encoding.x");
    const Column* y = lookup(spec.y.column, "encoding.y");
    if (spec.color) lookup(*spec.color, "encoding.color");

    if (spec.x == spec.y.column && spec.y.aggregate != Aggregate::count) {
        out.push_back({ViolationCode::IllegalAggregate,
                       "x and y use the same column '" + spec.x + "' without a count aggregate", "encoding.y"});
    }
    switch (spec.y.aggregate) {
        case Aggregate::mean:
        case Aggregate::sum:
        case Aggregate::min:
        case Aggregate::max:
            if (y && y->type != ColumnType::quantitative) {
                out.push_back({ViolationCode::IllegalAggregate,
                               std::string(to_string(spec.y.aggregate)) + " over " +
                                   std::string(to_string(y->type)) + " column '" + y->name + "'",
                               "encoding.y"});
            }
            break;
        default: break;
    }
    if (spec.filter) {
        for (std::size_t i = 0; i < spec.filter->any_of.size(); ++i) {
            for (std::size_t j = 0; j < spec.filter->any_of[i].size(); ++j) {
                const auto& cmp = spec.filter->any_of[i][j];
                auto where = "transform.filter[" + std::to_string(i) + "][" + std::to_string(j) + "]";
                if (const Column* c = lookup(cmp.column, where); c && !literal_matches(cmp.value, c->type)) {
                    out.push_back({ViolationCode::TypeMismatch,
                                   "literal " + detail::render_literal(cmp.value) + " does not match " +
                                       std::string(to_string(c->type)) + " column '" + c->name + "'",
                                   where});
                }
            }
        }
    }
    if (spec.bin && x && x->type != ColumnType::temporal) {
        out.push_back({ViolationCode::BinOnNonTemporal,
                       "bin requires a temporal x column, '" + x->name + "' is " + std::string(to_string(x->type)),
                       "transform.bin"});
    }
    if (spec.topk && !spec.sort) {
        out.push_back({ViolationCode::TopkWithoutSort, "topk requires a sort clause", "transform.topk"});
    }
    return out;
}

}  // namespace vrecs::vegazero
