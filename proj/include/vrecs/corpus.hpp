#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vrecs/dataset.hpp"
#include "vrecs/enrichment.hpp"
#include "vrecs/errors.hpp"
#include "vrecs/sample.hpp"
#include "vrecs/util.hpp"
#include "vrecs/vegazero.hpp"

namespace vrecs::corpus {

struct CorpusStats {
    std::size_t size = 0;  // input records
    std::map<Hardness, std::size_t> hardness;  // surviving triples
    std::size_t parse_failures = 0;
    std::size_t validation_failures = 0;
    std::map<vegazero::Mark, std::size_t> marks;

    std::size_t survivors() const {
        std::size_t n = 0;
        for (const auto& [h, c] : hardness) n += c;
        return n;
    }

    bool consistent() const { return survivors() + parse_failures + validation_failures == size; }
};

inline nlohmann::ordered_json to_json(const CorpusStats& s) {
    nlohmann::ordered_json j;
    j["size"] = s.size;
    nlohmann::ordered_json h = nlohmann::ordered_json::object();
    for (auto level : kHardnessLevels) {
        auto it = s.hardness.find(level);
        h[std::string(to_string(level))] = it == s.hardness.end() ? 0 : it->second;
    }
    j["hardness"] = std::move(h);
    j["parse_failures"] = s.parse_failures;
    j["validation_failures"] = s.validation_failures;
    nlohmann::ordered_json m = nlohmann::ordered_json::object();
    for (auto mark : vegazero::kMarks) {
        auto it = s.marks.find(mark);
        m[std::string(to_string(mark))] = it == s.marks.end() ? 0 : it->second;
    }
    j["marks"] = std::move(m);
    return j;
}

inline CorpusStats corpus_stats(const std::vector<CorpusTriple>& triples) {
    CorpusStats s;
    s.size = triples.size();
    for (const auto& t : triples) {
        ++s.hardness[t.hardness];
        ++s.marks[t.spec.mark];
    }
    return s;
}

struct ImportResult {
    std::vector<CorpusTriple> triples;
    CorpusStats stats;
    std::vector<enrichment::QuarantineEntry> quarantine;
};

namespace detail {

inline const nlohmann::json* field(const nlohmann::json& j, std::initializer_list<const char*> names) {
    for (const char* n : names) {
        if (auto it = j.find(n); it != j.end() && !it->is_null()) return &*it;
    }
    return nullptr;
}

inline std::string string_field(const nlohmann::json& j, std::initializer_list<const char*> names,
                                std::size_t line, const char* what) {
    const auto* f = field(j, names);
    if (!f) throw IndexMalformed("index line " + std::to_string(line) + ": missing " + what);
    if (f->is_string()) return f->get<std::string>();
    if (f->is_number_integer()) return std::to_string(f->get<long long>());
    throw IndexMalformed("index line " + std::to_string(line) + ": " + what + " must be a string");
}

}  // namespace detail

/// Reads a JSON-lines index of {id, table_file, query, hardness, vegazero}.
/// Alternative key spellings found in ncNet-style releases are accepted
/// (table/db_file, nl_query/question, vega_zero/VegaZero, difficulty) and
/// unknown keys are ignored. `column_types` optionally pins column types.
/// Records whose table, spec or validation fails are quarantined.
inline ImportResult import_corpus(const std::filesystem::path& index_path) {
    if (!std::filesystem::is_regular_file(index_path)) throw IoError("index not found: " + index_path.string());
    const auto base = index_path.parent_path();
    std::string text;
    try {
        text = util::read_file(index_path);
    } catch (const std::exception& e) {
        throw IoError(e.what());
    }

    ImportResult out;
    std::map<std::string, std::shared_ptr<const DataTable>> tables;
    std::map<std::string, std::size_t> seen_ids;
    std::size_t line_no = 0;
    for (const auto& line : util::split_lines(text)) {
        ++line_no;
        if (util::trim(line).empty()) continue;
        auto rec = nlohmann::json::parse(line, nullptr, false);
        if (rec.is_discarded() || !rec.is_object()) {
            throw IndexMalformed("index line " + std::to_string(line_no) + " is not a JSON object");
        }
        const auto id = detail::string_field(rec, {"id", "sample_id"}, line_no, "id");
        const auto table_file = detail::string_field(rec, {"table_file", "table", "db_file", "csv"}, line_no, "table_file");
        const auto query = detail::string_field(rec, {"query", "nl_query", "question"}, line_no, "query");
        const auto hardness_text = detail::string_field(rec, {"hardness", "difficulty"}, line_no, "hardness");
        const auto vz = detail::string_field(rec, {"vegazero", "vega_zero", "VegaZero"}, line_no, "vegazero");
        auto hardness = parse_hardness(hardness_text);
        if (!hardness) throw IndexMalformed("index line " + std::to_string(line_no) + ": unknown hardness '" + hardness_text + "'");
        if (auto [it, fresh] = seen_ids.emplace(id, line_no); !fresh) {
            throw IndexMalformed("index line " + std::to_string(line_no) + ": duplicate id '" + id + "'");
        }
        ++out.stats.size;

        LoadOptions opts;
        nlohmann::json types = nlohmann::json::object();
        if (const auto* ct = detail::field(rec, {"column_types"})) {
            if (!ct->is_object()) throw IndexMalformed("index line " + std::to_string(line_no) + ": column_types must be an object");
            types = *ct;
            for (const auto& [col, ty] : ct->items()) {
                auto parsed = ty.is_string() ? parse_column_type(ty.get<std::string>()) : std::nullopt;
                if (!parsed) throw IndexMalformed("index line " + std::to_string(line_no) + ": bad type for column " + col);
                opts.type_overrides[col] = *parsed;
            }
        }

        std::shared_ptr<const DataTable> table;
        const auto cache_key = table_file + "\n" + types.dump();
        if (auto it = tables.find(cache_key); it != tables.end()) {
            table = it->second;
        } else {
            const auto path = base / table_file;
            if (!std::filesystem::is_regular_file(path)) throw IoError("table not found: " + path.string());
            try {
                table = std::make_shared<const DataTable>(
                    load_csv(util::read_file(path), path.stem().string(), opts));
            } catch (const Error& e) {
                ++out.stats.parse_failures;
                out.quarantine.push_back({id, "table", e.kind(), e.what(), ""});
                continue;
            }
            tables.emplace(cache_key, table);
        }

        vegazero::Spec spec;
        try {
            spec = vegazero::parse(vz);
        } catch (const SyntaxError& e) {
            ++out.stats.parse_failures;
            out.quarantine.push_back({id, "parse", e.kind(), e.what(), vz});
            continue;
        }
        if (auto violations = vegazero::validate(spec, sketch(*table)); !violations.empty()) {
            ++out.stats.validation_failures;
            out.quarantine.push_back({id, "validate", "InputError", vegazero::describe(violations.front()), vz});
            continue;
        }
        ++out.stats.hardness[*hardness];
        ++out.stats.marks[spec.mark];
        out.triples.push_back({id, table, query, *hardness, std::move(spec)});
    }
    return out;
}

/// Writes tables/<name>.csv and index.jsonl (with explicit column types so a
/// re-import reproduces the same schemas).
inline void export_corpus(const std::vector<CorpusTriple>& triples, const std::filesystem::path& dir) {
    std::map<const DataTable*, std::string> files;
    std::map<std::string, const DataTable*> by_file;
    std::string index;
    auto sorted = triples;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    for (const auto& t : sorted) {
        auto it = files.find(t.table.get());
        if (it == files.end()) {
            std::string file = "tables/" + t.table->name() + ".csv";
            for (int k = 2; by_file.count(file) && !(*by_file[file] == *t.table); ++k) {
                file = "tables/" + t.table->name() + "_" + std::to_string(k) + ".csv";
            }
            if (!by_file.count(file)) {
                util::write_file(dir / file, to_csv(*t.table));
                by_file[file] = t.table.get();
            }
            it = files.emplace(t.table.get(), file).first;
        }
        nlohmann::ordered_json rec;
        rec["id"] = t.id;
        rec["table_file"] = it->second;
        rec["query"] = t.query;
        rec["hardness"] = to_string(t.hardness);
        rec["vegazero"] = vegazero::render(t.spec);
        nlohmann::ordered_json types = nlohmann::ordered_json::object();
        for (const auto& c : t.table->columns()) types[c.name] = to_string(c.type);
        rec["column_types"] = std::move(types);
        index += rec.dump() + "\n";
    }
    util::write_file(dir / "index.jsonl", index);
}

}  // namespace vrecs::corpus
