#pragma once

#include <random>
#include <string>
#include <vector>

#include "vrecs/dataset.hpp"
#include "vrecs/vegazero.hpp"

namespace testsupport {

using namespace vrecs;
using namespace vrecs::vegazero;

template <class T>
const T& pick(std::mt19937_64& rng, const std::vector<T>& v) {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

inline bool coin(std::mt19937_64& rng, double p = 0.5) { return std::bernoulli_distribution(p)(rng); }

/// Identifiers, deliberately including grammar keywords and mixed case.
inline std::string random_identifier(std::mt19937_64& rng) {
    static const std::vector<std::string> special = {"x", "y", "color", "transform", "group", "and", "or", "sort",
                                                     "topk", "bin", "by", "data", "mark", "Year", "COUNT"};
    if (coin(rng, 0.2)) return pick(rng, special);
    static const std::string first = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_";
    static const std::string rest = "abcdefghijklmnopqrstuvwxyz0123456789_-.";
    std::string s(1, first[std::uniform_int_distribution<std::size_t>(0, first.size() - 1)(rng)]);
    int n = std::uniform_int_distribution<int>(0, 10)(rng);
    for (int i = 0; i < n; ++i) s.push_back(rest[std::uniform_int_distribution<std::size_t>(0, rest.size() - 1)(rng)]);
    return s;
}

inline Literal random_literal(std::mt19937_64& rng) {
    switch (std::uniform_int_distribution<int>(0, 4)(rng)) {
        case 0: return static_cast<double>(std::uniform_int_distribution<int>(-1000, 3000)(rng));
        case 1: return std::uniform_real_distribution<double>(-1e6, 1e6)(rng);
        case 2: return std::ldexp(std::uniform_real_distribution<double>(0.5, 1.0)(rng),
                                  std::uniform_int_distribution<int>(-300, 300)(rng));
        case 3: {
            static const std::vector<std::string> tricky = {"",     "O'Brien", "two words", "''",  "\"quoted\"",
                                                            "and",  "123",     "1e5",       "München", " lead",
                                                            "tab\t", "2018-03-01"};
            return pick(rng, tricky);
        }
        default: return random_identifier(rng);
    }
}

/// Arbitrary syntactically valid AST (not necessarily meaningful for any table).
inline Spec random_spec(std::mt19937_64& rng) {
    Spec s;
    s.mark = kMarks[std::uniform_int_distribution<int>(0, 3)(rng)];
    if (coin(rng)) s.data = random_identifier(rng);
    s.x = random_identifier(rng);
    s.y.aggregate = kAggregates[std::uniform_int_distribution<int>(0, 5)(rng)];
    s.y.column = random_identifier(rng);
    if (coin(rng, 0.3)) s.color = random_identifier(rng);
    if (coin(rng, 0.5)) {
        Predicate p;
        int disj = std::uniform_int_distribution<int>(1, 3)(rng);
        for (int i = 0; i < disj; ++i) {
            std::vector<Comparison> conj;
            int n = std::uniform_int_distribution<int>(1, 3)(rng);
            for (int j = 0; j < n; ++j) {
                conj.push_back({random_identifier(rng), kCompareOps[std::uniform_int_distribution<int>(0, 5)(rng)],
                                random_literal(rng)});
            }
            p.any_of.push_back(std::move(conj));
        }
        s.filter = std::move(p);
    }
    s.group = coin(rng, 0.4);
    if (coin(rng, 0.3)) s.bin = kTimeUnits[std::uniform_int_distribution<int>(0, 2)(rng)];
    if (coin(rng, 0.4)) s.sort = SortClause{coin(rng) ? Axis::x : Axis::y, coin(rng) ? SortOrder::asc : SortOrder::desc};
    if (coin(rng, 0.3)) s.topk = std::uniform_int_distribution<int>(1, 50)(rng);
    return s;
}

// ---------------------------------------------------------------------------
// executable cases

/// Small table with nominal, quantitative (with nulls) and temporal columns.
inline DataTable random_table(std::mt19937_64& rng) {
    std::vector<Column> cols = {{"cat", ColumnType::nominal},
                                {"sub", ColumnType::nominal},
                                {"v", ColumnType::quantitative},
                                {"w", ColumnType::quantitative},
                                {"d", ColumnType::temporal}};
    static const std::vector<std::string> cats = {"a", "b", "c", "d"};
    static const std::vector<std::string> subs = {"p", "q"};
    int n = std::uniform_int_distribution<int>(0, 20)(rng);
    std::vector<Row> rows;
    for (int i = 0; i < n; ++i) {
        Row r;
        r.push_back(coin(rng, 0.05) ? Cell{} : Cell{pick(rng, cats)});
        r.push_back(Cell{pick(rng, subs)});
        r.push_back(coin(rng, 0.1) ? Cell{} : Cell{std::uniform_int_distribution<int>(-20, 20)(rng) * 0.25});
        r.push_back(Cell{std::uniform_real_distribution<double>(0, 1000)(rng)});
        if (coin(rng, 0.05)) {
            r.push_back(Cell{});
        } else {
            int y = std::uniform_int_distribution<int>(2019, 2021)(rng);
            unsigned m = std::uniform_int_distribution<unsigned>(1, 12)(rng);
            unsigned d = std::uniform_int_distribution<unsigned>(1, 28)(rng);
            char buf[16];
            std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", y, m, d);
            r.push_back(Cell{Date{y, m, d, buf}});
        }
        rows.push_back(std::move(r));
    }
    return DataTable("t", std::move(cols), std::move(rows));
}

inline Literal literal_for(std::mt19937_64& rng, ColumnType type) {
    switch (type) {
        case ColumnType::nominal: return std::string(pick(rng, std::vector<std::string>{"a", "b", "c", "p", "zz"}));
        case ColumnType::quantitative: return std::uniform_int_distribution<int>(-20, 20)(rng) * 0.25;
        case ColumnType::temporal:
            if (coin(rng)) return static_cast<double>(std::uniform_int_distribution<int>(2018, 2022)(rng));
            return std::string(pick(rng, std::vector<std::string>{"2020-06-15", "2019-12-31", "2021-01-01", "2020"}));
    }
    return 0.0;
}

/// A spec that validates against random_table's schema.
inline Spec random_valid_spec(std::mt19937_64& rng, const DataTable& table) {
    const auto& cols = table.columns();
    Spec s;
    s.mark = kMarks[std::uniform_int_distribution<int>(0, 3)(rng)];
    s.data = table.name();
    const Column& x = pick(rng, cols);
    s.x = x.name;
    s.y.aggregate = kAggregates[std::uniform_int_distribution<int>(0, 5)(rng)];
    if (s.y.aggregate == Aggregate::count) {
        s.y.column = pick(rng, cols).name;
    } else {
        std::vector<std::string> quant;
        for (const auto& c : cols) {
            if (c.type == ColumnType::quantitative && c.name != s.x) quant.push_back(c.name);
        }
        if (s.y.aggregate == Aggregate::none && coin(rng, 0.3)) {
            std::vector<std::string> others;
            for (const auto& c : cols) {
                if (c.name != s.x) others.push_back(c.name);
            }
            s.y.column = pick(rng, others);
        } else {
            s.y.column = pick(rng, quant);
        }
    }
    if (coin(rng, 0.3)) s.color = pick(rng, std::vector<std::string>{"cat", "sub"});
    if (coin(rng, 0.6)) {
        Predicate p;
        int disj = std::uniform_int_distribution<int>(1, 2)(rng);
        for (int i = 0; i < disj; ++i) {
            std::vector<Comparison> conj;
            int n = std::uniform_int_distribution<int>(1, 2)(rng);
            for (int j = 0; j < n; ++j) {
                const Column& c = pick(rng, cols);
                conj.push_back({c.name, kCompareOps[std::uniform_int_distribution<int>(0, 5)(rng)],
                                literal_for(rng, c.type)});
            }
            p.any_of.push_back(std::move(conj));
        }
        s.filter = std::move(p);
    }
    s.group = s.y.aggregate != Aggregate::none;
    if (x.type == ColumnType::temporal && coin(rng, 0.6)) {
        s.bin = kTimeUnits[std::uniform_int_distribution<int>(0, 2)(rng)];
    }
    if (coin(rng, 0.6)) {
        s.sort = SortClause{coin(rng) ? Axis::x : Axis::y, coin(rng) ? SortOrder::asc : SortOrder::desc};
        if (coin(rng, 0.5)) s.topk = std::uniform_int_distribution<int>(1, 8)(rng);
    }
    return s;
}

}  // namespace testsupport
