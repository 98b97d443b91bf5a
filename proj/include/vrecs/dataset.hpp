#pragma once

#include <nlohmann/json.hpp>

#include <chrono>
#include <compare>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <variant>
#include <vector>

#include "vrecs/csv.hpp"
#include "vrecs/errors.hpp"
#include "vrecs/util.hpp"

namespace vrecs {

enum class ColumnType { nominal, quantitative, temporal };

inline std::string_view to_string(ColumnType t) {
    switch (t) {
        case ColumnType::nominal: return "nominal";
        case ColumnType::quantitative: return "quantitative";
        case ColumnType::temporal: return "temporal";
    }
    return "nominal";
}

inline std::optional<ColumnType> parse_column_type(std::string_view s) {
    if (util::iequals(s, "nominal")) return ColumnType::nominal;
    if (util::iequals(s, "quantitative")) return ColumnType::quantitative;
    if (util::iequals(s, "temporal")) return ColumnType::temporal;
    return std::nullopt;
}

/// Calendar date (day precision). `text` keeps the source spelling so a
/// year-only value renders back as "2018", not "2018-01-01".
struct Date {
    int year = 1970;
    unsigned month = 1;
    unsigned day = 1;
    std::string text;

    auto operator<=>(const Date&) const = default;
    bool operator==(const Date&) const = default;

    /// ISO weekday, Monday = 1.
    unsigned iso_weekday() const {
        using namespace std::chrono;
        return weekday{sys_days{std::chrono::year{year} / std::chrono::month{month} /
                                std::chrono::day{day}}}
            .iso_encoding();
    }
};

namespace detail {

inline bool all_digits(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

inline int to_int(std::string_view s) {
    int v = 0;
    for (char c : s) v = v * 10 + (c - '0');
    return v;
}

// HH:MM[:SS[.fff]][Z|+HH:MM|-HHMM]
inline bool valid_time_suffix(std::string_view s) {
    if (s.size() < 5 || !all_digits(s.substr(0, 2)) || s[2] != ':' || !all_digits(s.substr(3, 2))) {
        return false;
    }
    if (to_int(s.substr(0, 2)) > 23 || to_int(s.substr(3, 2)) > 59) return false;
    s.remove_prefix(5);
    if (s.size() >= 3 && s[0] == ':') {
        if (!all_digits(s.substr(1, 2)) || to_int(s.substr(1, 2)) > 60) return false;
        s.remove_prefix(3);
        if (!s.empty() && s[0] == '.') {
            std::size_t n = 1;
            while (n < s.size() && s[n] >= '0' && s[n] <= '9') ++n;
            if (n == 1) return false;
            s.remove_prefix(n);
        }
    }
    if (s.empty() || s == "Z") return true;
    if (s[0] != '+' && s[0] != '-') return false;
    s.remove_prefix(1);
    if (s.size() == 5 && s[2] == ':') return all_digits(s.substr(0, 2)) && all_digits(s.substr(3, 2));
    return s.size() == 4 && all_digits(s);
}

}  // namespace detail

/// Parses ISO-8601 dates: YYYY-MM-DD, YYYY-MM, optionally followed by a
/// `T`/space separated time.
inline std::optional<Date> parse_iso_date(std::string_view raw) {
    auto s = util::trim(raw);
    if (s.size() < 7 || !detail::all_digits(s.substr(0, 4)) || s[4] != '-' ||
        !detail::all_digits(s.substr(5, 2))) {
        return std::nullopt;
    }
    Date d;
    d.year = detail::to_int(s.substr(0, 4));
    d.month = static_cast<unsigned>(detail::to_int(s.substr(5, 2)));
    d.text = std::string(s);
    if (s.size() == 7) {
        if (d.month < 1 || d.month > 12) return std::nullopt;
        return d;
    }
    if (s.size() < 10 || s[7] != '-' || !detail::all_digits(s.substr(8, 2))) return std::nullopt;
    d.day = static_cast<unsigned>(detail::to_int(s.substr(8, 2)));
    std::chrono::year_month_day ymd{std::chrono::year{d.year}, std::chrono::month{d.month},
                                    std::chrono::day{d.day}};
    if (!ymd.ok()) return std::nullopt;
    if (s.size() == 10) return d;
    if (s[10] != 'T' && s[10] != ' ') return std::nullopt;
    if (!detail::valid_time_suffix(s.substr(11))) return std::nullopt;
    return d;
}

inline constexpr int kMinYear = 1500;
inline constexpr int kMaxYear = 2100;

/// Four-digit integer in [1500, 2100].
inline std::optional<Date> parse_year(std::string_view raw) {
    auto s = util::trim(raw);
    if (s.size() != 4 || !detail::all_digits(s)) return std::nullopt;
    int y = detail::to_int(s);
    if (y < kMinYear || y > kMaxYear) return std::nullopt;
    return Date{y, 1, 1, std::string(s)};
}

/// True when the header has a token like "year", "yr" or "years"
/// (tokens split on non-alphanumerics and lower/upper camel-case boundaries).
inline bool is_year_like_header(std::string_view header) {
    std::vector<std::string> tokens;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) tokens.push_back(util::to_lower(cur));
        cur.clear();
    };
    for (std::size_t i = 0; i < header.size(); ++i) {
        auto c = static_cast<unsigned char>(header[i]);
        if (!std::isalnum(c)) {
            flush();
            continue;
        }
        if (std::isupper(c) && i > 0 && std::islower(static_cast<unsigned char>(header[i - 1]))) {
            flush();
        }
        cur.push_back(static_cast<char>(c));
    }
    flush();
    for (const auto& t : tokens) {
        if (t == "year" || t == "years" || t == "yr" || t == "yyyy") return true;
    }
    return false;
}

using Cell = std::variant<std::monostate, std::string, double, Date>;
using Row = std::vector<Cell>;

inline bool is_null(const Cell& c) { return std::holds_alternative<std::monostate>(c); }

/// Total order over cells: null < number < date < string; natural order inside a kind.
inline std::strong_ordering compare_cells(const Cell& a, const Cell& b) {
    auto rank = [](const Cell& c) -> int {
        switch (c.index()) {
            case 0: return 0;
            case 2: return 1;
            case 3: return 2;
            default: return 3;
        }
    };
    if (auto r = rank(a) <=> rank(b); r != 0) return r;
    switch (a.index()) {
        case 0: return std::strong_ordering::equal;
        case 1: return std::get<std::string>(a).compare(std::get<std::string>(b)) <=> 0;
        case 2: {
            double x = std::get<double>(a), y = std::get<double>(b);
            if (x < y) return std::strong_ordering::less;
            if (y < x) return std::strong_ordering::greater;
            return std::strong_ordering::equal;
        }
        default: return std::get<Date>(a) <=> std::get<Date>(b);
    }
}

inline std::string cell_text(const Cell& c) {
    switch (c.index()) {
        case 0: return "";
        case 1: return std::get<std::string>(c);
        case 2: return util::format_number(std::get<double>(c));
        default: return std::get<Date>(c).text;
    }
}

inline nlohmann::json cell_to_json(const Cell& c) {
    switch (c.index()) {
        case 0: return nullptr;
        case 1: return std::get<std::string>(c);
        case 2: {
            double v = std::get<double>(c);
            if (std::floor(v) == v && std::abs(v) < 9.007199254740992e15) {
                return static_cast<std::int64_t>(v);
            }
            return v;
        }
        default: return std::get<Date>(c).text;
    }
}

struct Column {
    std::string name;
    ColumnType type = ColumnType::nominal;

    bool operator==(const Column&) const = default;
};

/// Converts one raw CSV value to a cell of the given column type; nullopt
/// when the value does not conform.
inline std::optional<Cell> convert_cell(std::string_view raw, ColumnType type) {
    auto s = util::trim(raw);
    if (s.empty()) return Cell{};
    switch (type) {
        case ColumnType::nominal: return Cell{std::string(raw)};
        case ColumnType::quantitative:
            if (auto v = util::parse_number(s)) return Cell{*v};
            return std::nullopt;
        case ColumnType::temporal:
            if (auto d = parse_iso_date(s)) return Cell{*d};
            if (auto y = parse_year(s)) return Cell{*y};
            return std::nullopt;
    }
    return std::nullopt;
}

inline bool conforms(const Cell& c, ColumnType type) {
    switch (c.index()) {
        case 0: return true;
        case 1: return type == ColumnType::nominal;
        case 2: return type == ColumnType::quantitative;
        default: return type == ColumnType::temporal;
    }
}

/// An immutable, validated table. Column names are unique; every row has one
/// cell per column and each non-null cell conforms to its column's type.
class DataTable {
public:
    DataTable() = default;

    DataTable(std::string name, std::vector<Column> columns, std::vector<Row> rows)
        : name_(std::move(name)), columns_(std::move(columns)), rows_(std::move(rows)) {
        std::unordered_set<std::string> seen;
        for (const auto& c : columns_) {
            if (!seen.insert(c.name).second) throw DuplicateColumn("duplicate column '" + c.name + "'");
        }
        for (std::size_t r = 0; r < rows_.size(); ++r) {
            if (rows_[r].size() != columns_.size()) {
                throw RaggedRow(r + 1, columns_.size(), rows_[r].size());
            }
            for (std::size_t i = 0; i < columns_.size(); ++i) {
                if (!conforms(rows_[r][i], columns_[i].type)) {
                    throw SchemaError("row " + std::to_string(r + 1) + " column '" + columns_[i].name +
                                      "' does not conform to " + std::string(to_string(columns_[i].type)));
                }
            }
        }
    }

    const std::string& name() const noexcept { return name_; }
    const std::vector<Column>& columns() const noexcept { return columns_; }
    const std::vector<Row>& rows() const noexcept { return rows_; }

    std::optional<std::size_t> column_index(std::string_view column) const {
        for (std::size_t i = 0; i < columns_.size(); ++i) {
            if (columns_[i].name == column) return i;
        }
        return std::nullopt;
    }

    const Column* column(std::string_view column) const {
        auto i = column_index(column);
        return i ? &columns_[*i] : nullptr;
    }

    bool operator==(const DataTable& other) const {
        if (name_ != other.name_ || columns_ != other.columns_ || rows_.size() != other.rows_.size()) {
            return false;
        }
        for (std::size_t r = 0; r < rows_.size(); ++r) {
            for (std::size_t i = 0; i < columns_.size(); ++i) {
                if (compare_cells(rows_[r][i], other.rows_[r][i]) != 0) return false;
            }
        }
        return true;
    }

private:
    std::string name_;
    std::vector<Column> columns_;
    std::vector<Row> rows_;
};

/// The compact table description fed to prompts: feature names and types only.
struct TableSketch {
    std::string table_name;
    std::vector<Column> features;
    std::size_t row_count = 0;

    const Column* feature(std::string_view name) const {
        for (const auto& f : features) {
            if (f.name == name) return &f;
        }
        return nullptr;
    }

    bool operator==(const TableSketch&) const = default;
};

inline TableSketch sketch(const DataTable& table) {
    return TableSketch{table.name(), table.columns(), table.rows().size()};
}

/// Column type inference. Empty strings are nulls; all-null columns are nominal.
inline ColumnType infer_column_type(std::span<const std::string> values, std::string_view header = {}) {
    bool any = false;
    bool all_iso = true;
    bool all_years = true;
    bool all_numeric = true;
    for (const auto& raw : values) {
        auto v = util::trim(raw);
        if (v.empty()) continue;
        any = true;
        if (all_iso && !parse_iso_date(v)) all_iso = false;
        if (all_years && !parse_year(v)) all_years = false;
        if (all_numeric && !util::parse_number(v)) all_numeric = false;
        if (!all_iso && !all_years && !all_numeric) break;
    }
    if (!any) return ColumnType::nominal;
    if (all_iso) return ColumnType::temporal;
    if (all_years && is_year_like_header(header)) return ColumnType::temporal;
    if (all_numeric) return ColumnType::quantitative;
    return ColumnType::nominal;
}

struct LoadOptions {
    std::size_t max_cells = 1'000'000;
    /// Explicit types (e.g. from a corpus schema) win over inference.
    std::map<std::string, ColumnType> type_overrides;
};

inline DataTable load_csv(std::string_view bytes, std::string name, const LoadOptions& options = {}) {
    if (bytes.size() >= 3 && bytes.substr(0, 3) == "\xEF\xBB\xBF") bytes.remove_prefix(3);
    if (!util::valid_utf8(bytes)) throw EncodingError("input is not valid UTF-8");
    auto records = csv::parse(bytes);
    if (records.empty()) throw EmptyInput("no header row");

    const auto& header = records.front().fields;
    const std::size_t width = header.size();
    const std::size_t n_rows = records.size() - 1;
    if (width * (n_rows + 1) > options.max_cells) {
        throw LimitExceeded("table exceeds " + std::to_string(options.max_cells) + " cells");
    }
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].fields.size() != width) throw RaggedRow(r, width, records[r].fields.size());
    }

    std::vector<Column> columns;
    columns.reserve(width);
    std::vector<std::string> values(n_rows);
    for (std::size_t c = 0; c < width; ++c) {
        std::string col_name(util::trim(header[c]));
        if (col_name.empty()) throw SchemaError("empty column name at position " + std::to_string(c + 1));
        ColumnType type;
        if (auto it = options.type_overrides.find(col_name); it != options.type_overrides.end()) {
            type = it->second;
        } else {
            for (std::size_t r = 0; r < n_rows; ++r) values[r] = records[r + 1].fields[c];
            type = infer_column_type(values, col_name);
        }
        columns.push_back({std::move(col_name), type});
    }

    std::vector<Row> rows;
    rows.reserve(n_rows);
    for (std::size_t r = 1; r < records.size(); ++r) {
        Row row;
        row.reserve(width);
        for (std::size_t c = 0; c < width; ++c) {
            auto cell = convert_cell(records[r].fields[c], columns[c].type);
            if (!cell) {
                throw SchemaError("row " + std::to_string(r) + " column '" + columns[c].name + "': '" +
                                  records[r].fields[c] + "' is not " +
                                  std::string(to_string(columns[c].type)));
            }
            row.push_back(std::move(*cell));
        }
        rows.push_back(std::move(row));
    }
    return DataTable(std::move(name), std::move(columns), std::move(rows));
}

inline std::string to_csv(const DataTable& table) {
    std::vector<std::vector<std::string>> out;
    out.reserve(table.rows().size() + 1);
    std::vector<std::string> header;
    for (const auto& c : table.columns()) header.push_back(c.name);
    out.push_back(std::move(header));
    for (const auto& row : table.rows()) {
        std::vector<std::string> line;
        for (const auto& cell : row) line.push_back(cell_text(cell));
        out.push_back(std::move(line));
    }
    return csv::write(out);
}

// JSON document: {name, columns:[{name,type}], rows:[[...]]}

inline nlohmann::json columns_to_json(const std::vector<Column>& columns) {
    auto arr = nlohmann::json::array();
    for (const auto& c : columns) arr.push_back({{"name", c.name}, {"type", to_string(c.type)}});
    return arr;
}

inline std::vector<Column> columns_from_json(const nlohmann::json& j) {
    std::vector<Column> out;
    for (const auto& c : j) {
        auto type = parse_column_type(c.at("type").get<std::string>());
        if (!type) throw SchemaError("unknown column type " + c.at("type").dump());
        out.push_back({c.at("name").get<std::string>(), *type});
    }
    return out;
}

inline nlohmann::json to_json(const DataTable& table) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : table.rows()) {
        auto r = nlohmann::json::array();
        for (const auto& cell : row) r.push_back(cell_to_json(cell));
        rows.push_back(std::move(r));
    }
    return {{"name", table.name()}, {"columns", columns_to_json(table.columns())}, {"rows", std::move(rows)}};
}

inline DataTable table_from_json(const nlohmann::json& j) {
    try {
        auto columns = columns_from_json(j.at("columns"));
        std::vector<Row> rows;
        for (const auto& jr : j.at("rows")) {
            if (!jr.is_array()) throw SchemaError("row is not an array");
            if (jr.size() != columns.size()) throw RaggedRow(rows.size() + 1, columns.size(), jr.size());
            Row row;
            for (std::size_t i = 0; i < columns.size(); ++i) {
                const auto& v = jr[i];
                if (v.is_null()) {
                    row.emplace_back();
                } else if (v.is_number() && columns[i].type == ColumnType::quantitative) {
                    row.emplace_back(v.get<double>());
                } else {
                    std::string raw = v.is_string() ? v.get<std::string>() : v.dump();
                    auto cell = convert_cell(raw, columns[i].type);
                    if (!cell) throw SchemaError("value " + v.dump() + " does not conform to column '" +
                                                 columns[i].name + "'");
                    row.push_back(std::move(*cell));
                }
            }
            rows.push_back(std::move(row));
        }
        return DataTable(j.at("name").get<std::string>(), std::move(columns), std::move(rows));
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed table document: ") + e.what());
    }
}

inline nlohmann::json to_json(const TableSketch& s) {
    return {{"table_name", s.table_name}, {"features", columns_to_json(s.features)}, {"row_count", s.row_count}};
}

inline TableSketch sketch_from_json(const nlohmann::json& j) {
    return TableSketch{j.at("table_name").get<std::string>(), columns_from_json(j.at("features")),
                       j.at("row_count").get<std::size_t>()};
}

}  // namespace vrecs
