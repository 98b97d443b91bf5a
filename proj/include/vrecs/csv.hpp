#pragma once

// RFC-4180 reader/writer. Records are returned as raw strings; typing is
// dataset.hpp's job.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "vrecs/errors.hpp"

namespace vrecs::csv {

struct Record {
    std::vector<std::string> fields;
    std::size_t line = 0;  // physical line where the record starts, 1-based
};

inline std::vector<Record> parse(std::string_view text) {
    std::vector<Record> records;
    Record current;
    std::string field;
    bool in_quotes = false;
    bool field_was_quoted = false;
    bool record_has_content = false;
    std::size_t line = 1;
    current.line = 1;

    auto end_field = [&] {
        current.fields.push_back(std::move(field));
        field.clear();
        field_was_quoted = false;
    };
    auto end_record = [&] {
        end_field();
        // A physically blank line yields one empty unquoted field; skip it.
        bool blank = !record_has_content && current.fields.size() == 1 && current.fields[0].empty();
        if (!blank) records.push_back(std::move(current));
        current = Record{};
        current.line = line;
        record_has_content = false;
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                if (field.empty() && !field_was_quoted) {
                    in_quotes = true;
                    field_was_quoted = true;
                    record_has_content = true;
                } else {
                    field.push_back(c);  // stray quote inside an unquoted field, kept verbatim
                }
                break;
            case ',':
                record_has_content = true;
                end_field();
                break;
            case '\r':
                if (i + 1 < text.size() && text[i + 1] == '\n') break;
                ++line;
                end_record();
                break;
            case '\n':
                ++line;
                end_record();
                break;
            default:
                record_has_content = true;
                field.push_back(c);
        }
    }
    if (in_quotes) throw EncodingError("unterminated quoted field");
    if (record_has_content || !field.empty()) end_record();
    return records;
}

inline std::string quote_field(std::string_view value) {
    bool needs = value.find_first_of(",\"\r\n") != std::string_view::npos ||
                 (!value.empty() && (value.front() == ' ' || value.back() == ' '));
    if (!needs) return std::string(value);
    std::string out = "\"";
    for (char c : value) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += '"';
    return out;
}

inline std::string write(const std::vector<std::vector<std::string>>& rows) {
    std::string out;
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out.push_back(',');
            out += quote_field(row[i]);
        }
        out.push_back('\n');
    }
    return out;
}

}  // namespace vrecs::csv
