#pragma once

#include <algorithm>
#include <array>
#include <compare>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "vrecs/dataset.hpp"
#include "vrecs/vegazero.hpp"

namespace vrecs::vegazero {

inline constexpr std::array<std::string_view, 12> kMonthNames = {"Jan", "Feb", "Mar", "Apr", "May", "Jun",
                                                                 "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};
inline constexpr std::array<std::string_view, 7> kWeekdayNames = {"Mon", "Tue", "Wed", "Thu",
                                                                  "Fri", "Sat", "Sun"};

/// Binned x value: a display label plus the chronological ordinal it sorts by.
struct BinnedValue {
    std::string label;
    int ordinal = 0;
};

inline BinnedValue bin_date(const Date& d, TimeUnit unit) {
    switch (unit) {
        case TimeUnit::year: return {std::to_string(d.year), d.year};
        case TimeUnit::month: return {std::string(kMonthNames[d.month - 1]), static_cast<int>(d.month)};
        case TimeUnit::weekday: {
            auto wd = d.iso_weekday();
            return {std::string(kWeekdayNames[wd - 1]), static_cast<int>(wd)};
        }
    }
    return {};
}

/// Output column names of execute(): x, then y (renamed `<agg>_<col>` when it
/// would collide with x), then color (renamed `color_<col>` on collision).
struct OutputNames {
    std::string x;
    std::string y;
    std::optional<std::string> color;
};

inline OutputNames output_names(const Spec& spec) {
    OutputNames n;
    n.x = spec.x;
    n.y = spec.y.column;
    if (n.y == n.x) n.y = std::string(to_string(spec.y.aggregate)) + "_" + spec.y.column;
    if (spec.color) {
        n.color = *spec.color;
        if (*n.color == n.x || *n.color == n.y) n.color = "color_" + *spec.color;
    }
    return n;
}

namespace detail {

inline bool compare_with(std::strong_ordering ord, CompareOp op) {
    switch (op) {
        case CompareOp::eq: return ord == 0;
        case CompareOp::ne: return ord != 0;
        case CompareOp::lt: return ord < 0;
        case CompareOp::le: return ord <= 0;
        case CompareOp::gt: return ord > 0;
        case CompareOp::ge: return ord >= 0;
    }
    return false;
}

/// Null cells never satisfy a comparison.
inline bool eval_comparison(const Cell& cell, const Comparison& cmp) {
    if (is_null(cell)) return false;
    if (const auto* d = std::get_if<double>(&cell)) {
        const auto* lit = std::get_if<double>(&cmp.value);
        if (!lit) return false;
        auto ord = *d < *lit   ? std::strong_ordering::less
                   : *lit < *d ? std::strong_ordering::greater
                               : std::strong_ordering::equal;
        return compare_with(ord, cmp.op);
    }
    if (const auto* date = std::get_if<Date>(&cell)) {
        if (const auto* year = std::get_if<double>(&cmp.value)) {
            return compare_with(date->year <=> static_cast<int>(*year), cmp.op);
        }
        const auto& s = std::get<std::string>(cmp.value);
        auto lit = parse_iso_date(s);
        if (!lit) lit = parse_year(s);
        if (!lit) return false;
        auto key = [](const Date& x) { return std::make_tuple(x.year, x.month, x.day); };
        return compare_with(key(*date) <=> key(*lit), cmp.op);
    }
    const auto& text = std::get<std::string>(cell);
    std::string lit = std::holds_alternative<double>(cmp.value) ? util::format_number(std::get<double>(cmp.value))
                                                                : std::get<std::string>(cmp.value);
    return compare_with(text.compare(lit) <=> 0, cmp.op);
}

inline std::size_t require_column(const DataTable& table, const std::string& column, std::string_view role) {
    auto idx = table.column_index(column);
    if (!idx) throw EvalError(std::string(role) + " references missing column '" + column + "'");
    return *idx;
}

struct XKey {
    Cell value;
    std::optional<int> ordinal;  // set when binned
};

inline std::strong_ordering compare_keys(const XKey& a, const XKey& b) {
    if (a.ordinal && b.ordinal) return *a.ordinal <=> *b.ordinal;
    if (a.ordinal != b.ordinal) return a.ordinal.has_value() <=> b.ordinal.has_value();
    return compare_cells(a.value, b.value);
}

struct OutRow {
    XKey x;
    Cell y;
    Cell color;
};

struct Accumulator {
    std::size_t rows = 0;
    std::size_t numeric = 0;
    double sum = 0.0;
    double min = std::numeric_limits<double>::infinity();
    double max = -std::numeric_limits<double>::infinity();

    void add(const Cell& c) {
        ++rows;
        if (const auto* v = std::get_if<double>(&c)) {
            ++numeric;
            sum += *v;
            min = std::min(min, *v);
            max = std::max(max, *v);
        }
    }

    Cell result(Aggregate agg) const {
        if (agg == Aggregate::count) return static_cast<double>(rows);
        if (numeric == 0) return Cell{};
        switch (agg) {
            case Aggregate::sum: return sum;
            case Aggregate::mean: return sum / static_cast<double>(numeric);
            case Aggregate::min: return min;
            case Aggregate::max: return max;
            default: return Cell{};
        }
    }
};

}  // namespace detail

/// Applies filter, group+aggregate, sort and topk, in that order. Output
/// columns are (x, y[, color]). Without a sort clause rows are ordered by
/// group key ascending (binned keys chronologically). count counts rows;
/// mean/sum/min/max skip nulls and yield null for an all-null group.
/// With aggregate `none` rows are not collapsed; they are ordered by (x, y, color).
inline DataTable execute(const Spec& spec, const DataTable& table) {
    const auto xi = detail::require_column(table, spec.x, "x");
    const auto yi = detail::require_column(table, spec.y.column, "y");
    std::optional<std::size_t> ci;
    if (spec.color) ci = detail::require_column(table, *spec.color, "color");

    struct BoundComparison {
        std::size_t column;
        const Comparison* cmp;
    };
    std::vector<std::vector<BoundComparison>> bound;
    if (spec.filter) {
        for (const auto& conj : spec.filter->any_of) {
            std::vector<BoundComparison> b;
            for (const auto& cmp : conj) {
                b.push_back({detail::require_column(table, cmp.column, "filter predicate"), &cmp});
            }
            bound.push_back(std::move(b));
        }
    }
    auto keep = [&](const Row& row) {
        if (bound.empty()) return true;
        return std::any_of(bound.begin(), bound.end(), [&](const auto& conj) {
            return std::all_of(conj.begin(), conj.end(),
                               [&](const BoundComparison& b) { return detail::eval_comparison(row[b.column], *b.cmp); });
        });
    };
    auto x_key = [&](const Cell& c) -> detail::XKey {
        if (spec.bin) {
            if (const auto* d = std::get_if<Date>(&c)) {
                auto b = bin_date(*d, *spec.bin);
                return {Cell{b.label}, b.ordinal};
            }
            return {Cell{}, std::numeric_limits<int>::min()};
        }
        return {c, std::nullopt};
    };

    std::vector<detail::OutRow> out;
    if (spec.y.aggregate == Aggregate::none) {
        for (const auto& row : table.rows()) {
            if (!keep(row)) continue;
            out.push_back({x_key(row[xi]), row[yi], ci ? row[*ci] : Cell{}});
        }
        std::stable_sort(out.begin(), out.end(), [](const detail::OutRow& a, const detail::OutRow& b) {
            if (auto c = detail::compare_keys(a.x, b.x); c != 0) return c < 0;
            if (auto c = compare_cells(a.y, b.y); c != 0) return c < 0;
            return compare_cells(a.color, b.color) < 0;
        });
    } else {
        struct Group {
            detail::XKey x;
            Cell color;
            detail::Accumulator acc;
        };
        std::vector<Group> groups;
        for (const auto& row : table.rows()) {
            if (!keep(row)) continue;
            auto key = x_key(row[xi]);
            Cell color = ci ? row[*ci] : Cell{};
            auto it = std::lower_bound(groups.begin(), groups.end(), std::pair{&key, &color},
                                       [](const Group& g, const auto& k) {
                                           if (auto c = detail::compare_keys(g.x, *k.first); c != 0) return c < 0;
                                           return compare_cells(g.color, *k.second) < 0;
                                       });
            if (it == groups.end() || detail::compare_keys(it->x, key) != 0 || compare_cells(it->color, color) != 0) {
                it = groups.insert(it, Group{std::move(key), std::move(color), {}});
            }
            it->acc.add(row[yi]);
        }
        out.reserve(groups.size());
        for (auto& g : groups) out.push_back({std::move(g.x), g.acc.result(spec.y.aggregate), std::move(g.color)});
    }

    if (spec.sort) {
        const bool by_x = spec.sort->axis == Axis::x;
        const bool desc = spec.sort->order == SortOrder::desc;
        std::stable_sort(out.begin(), out.end(), [&](const detail::OutRow& a, const detail::OutRow& b) {
            auto c = by_x ? detail::compare_keys(a.x, b.x) : compare_cells(a.y, b.y);
            return desc ? c > 0 : c < 0;
        });
    }
    if (spec.topk && out.size() > static_cast<std::size_t>(*spec.topk)) out.resize(static_cast<std::size_t>(*spec.topk));

    const auto names = output_names(spec);
    const auto& src = table.columns();
    std::vector<Column> columns;
    columns.push_back({names.x, spec.bin ? ColumnType::nominal : src[xi].type});
    columns.push_back({names.y, spec.y.aggregate == Aggregate::none ? src[yi].type : ColumnType::quantitative});
    if (ci) columns.push_back({*names.color, src[*ci].type});

    std::vector<Row> rows;
    rows.reserve(out.size());
    for (auto& r : out) {
        Row row{std::move(r.x.value), std::move(r.y)};
        if (ci) row.push_back(std::move(r.color));
        rows.push_back(std::move(row));
    }
    return DataTable(table.name(), std::move(columns), std::move(rows));
}

}  // namespace vrecs::vegazero
