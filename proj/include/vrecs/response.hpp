#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "vrecs/errors.hpp"
#include "vrecs/prompt.hpp"
#include "vrecs/sample.hpp"
#include "vrecs/vegalite.hpp"
#include "vrecs/vegazero.hpp"

namespace vrecs::response {

struct Recommendation {
    vegazero::Spec spec;
    Narrative narrative;
    std::string raw_text;
    std::optional<vegazero::VegaLiteDoc> doc;
    bool lenient = false;
    std::vector<vegazero::Violation> warnings;
};

/// Located `[MARKER]` sections of a completion, keyed by upper-case marker.
struct Sections {
    struct Span {
        std::size_t begin = 0;  // marker start
        std::size_t content = 0;
        std::size_t end = 0;
    };
    std::vector<std::pair<std::string, Span>> found;

    std::optional<std::string> get(std::string_view raw, std::string_view name) const {
        for (const auto& [n, s] : found) {
            if (n == name) return std::string(util::trim(raw.substr(s.content, s.end - s.content)));
        }
        return std::nullopt;
    }
};

/// Finds the first occurrence of each known marker (case-insensitive, any order).
inline Sections find_sections(std::string_view raw) {
    const std::string lower = util::to_lower(raw);
    Sections out;
    for (auto marker : prompt::markers::all) {
        std::string needle = "[" + util::to_lower(marker) + "]";
        auto pos = lower.find(needle);
        if (pos == std::string::npos) continue;
        out.found.push_back({std::string(marker), {pos, pos + needle.size(), raw.size()}});
    }
    std::sort(out.found.begin(), out.found.end(),
              [](const auto& a, const auto& b) { return a.second.begin < b.second.begin; });
    for (std::size_t i = 0; i + 1 < out.found.size(); ++i) out.found[i].second.end = out.found[i + 1].second.begin;
    return out;
}

/// Splits "1) a 2)b 3. c" into items. Numbering must run 1, 2, 3, ...; an
/// item marker is the number followed by ')' or by '.' plus whitespace, at
/// the start of the text or after whitespace / sentence punctuation.
inline std::vector<std::string> split_numbered(std::string_view text) {
    auto marker_at = [&](std::size_t pos, int n, std::size_t& after) {
        std::string num = std::to_string(n);
        if (text.substr(pos, num.size()) != num) return false;
        std::size_t p = pos + num.size();
        if (p >= text.size()) return false;
        if (pos > 0) {
            char prev = text[pos - 1];
            if (!(util::is_space(prev) || prev == '?' || prev == '.' || prev == '!' || prev == ';')) return false;
        }
        if (text[p] == ')') {
            after = p + 1;
            return true;
        }
        if (text[p] == '.' && p + 1 < text.size() && util::is_space(text[p + 1])) {
            after = p + 1;
            return true;
        }
        return false;
    };
    auto find_marker = [&](std::size_t from, int n, std::size_t& at, std::size_t& after) {
        for (std::size_t i = from; i < text.size(); ++i) {
            if (marker_at(i, n, after)) {
                at = i;
                return true;
            }
        }
        return false;
    };

    std::vector<std::string> items;
    std::size_t at = 0, after = 0;
    if (!find_marker(0, 1, at, after)) return items;
    int n = 1;
    for (;;) {
        std::size_t next_at = 0, next_after = 0;
        bool more = find_marker(after, n + 1, next_at, next_after);
        auto item = util::trim(text.substr(after, (more ? next_at : text.size()) - after));
        if (!item.empty()) items.emplace_back(item);
        if (!more) break;
        after = next_after;
        ++n;
    }
    return items;
}

/// Strict parse of the labeled response format. Throws MissingSection when a
/// marker is absent or its section is empty, SpecSyntaxError when the spec
/// does not parse; both keep the raw text.
inline Recommendation parse_response(std::string_view raw) {
    namespace mk = prompt::markers;
    auto sections = find_sections(raw);
    auto required = [&](std::string_view name) {
        auto s = sections.get(raw, name);
        if (!s || s->empty()) throw MissingSection(std::string(name), std::string(raw));
        return *s;
    };
    Recommendation rec;
    rec.raw_text = std::string(raw);
    auto spec_text = required(mk::vegazero);
    rec.narrative.e1 = required(mk::explanation1);
    rec.narrative.e2 = required(mk::explanation2);
    rec.narrative.caption = required(mk::caption);
    auto suggestions_text = required(mk::suggestions);
    rec.narrative.suggestions = split_numbered(suggestions_text);
    if (rec.narrative.suggestions.empty()) rec.narrative.suggestions.push_back(suggestions_text);
    try {
        rec.spec = vegazero::parse(spec_text);
    } catch (const SyntaxError& e) {
        throw SpecSyntaxError(e, std::string(raw));
    }
    return rec;
}

namespace detail {

inline std::vector<std::string> paragraphs(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (const auto& line : util::split_lines(text)) {
        if (util::trim(line).empty()) {
            if (!util::trim(cur).empty()) out.emplace_back(util::trim(cur));
            cur.clear();
            continue;
        }
        if (!cur.empty()) cur.push_back('\n');
        cur += line;
    }
    if (!util::trim(cur).empty()) out.emplace_back(util::trim(cur));
    return out;
}

inline bool mentions_axes(std::string_view p) {
    auto lower = util::to_lower(p);
    return lower.find("axis") != std::string::npos || lower.find("axes") != std::string::npos;
}

/// The marker named by a paragraph's first line when that line is just `[MARKER]`.
inline std::optional<std::string_view> leading_marker(std::string_view p) {
    auto first = util::trim(p.substr(0, p.find('\n')));
    if (first.size() < 3 || first.front() != '[' || first.back() != ']') return std::nullopt;
    for (auto m : prompt::markers::all) {
        if (util::iequals(first.substr(1, first.size() - 2), m)) return m;
    }
    return std::nullopt;
}

inline bool starts_numbered(std::string_view p) {
    auto t = util::trim(p);
    return t.size() >= 2 && t[0] == '1' && (t[1] == ')' || t[1] == '.');
}

}  // namespace detail

/// Fallback for completions that ignore the section format. The marked format
/// wins when it parses. Otherwise the first line containing
/// `mark <M> [data <d>] encoding ...` is the spec; of the remaining
/// paragraphs, one that opens with a lone `[MARKER]` line fills that part, a
/// numbered list becomes the suggestions, the first paragraph mentioning an
/// axis becomes the caption, and the other paragraphs fill E1 then E2.
inline Recommendation lenient_extract(std::string_view raw) {
    try {
        return parse_response(raw);
    } catch (const ResponseError&) {
    }

    static const std::regex spec_line(R"((^|[^A-Za-z])(mark\s+\S+\s+(data\s+\S+\s+)?encoding\s.*))",
                                      std::regex::icase);
    auto lines = util::split_lines(raw);
    std::optional<std::size_t> spec_line_index;
    std::optional<vegazero::Spec> spec;
    std::optional<SyntaxError> first_error;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        std::smatch m;
        if (!std::regex_search(lines[i], m, spec_line)) continue;
        std::string candidate = m[2].str();
        while (!candidate.empty() && (candidate.back() == '`' || util::is_space(candidate.back()))) candidate.pop_back();
        try {
            spec = vegazero::parse(candidate);
            spec_line_index = i;
            break;
        } catch (const SyntaxError& e) {
            if (!first_error) first_error = e;
        }
    }
    if (!spec) {
        if (first_error) throw SpecSyntaxError(*first_error, std::string(raw));
        throw NoSpecFound(std::string(raw));
    }

    std::string rest;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i == *spec_line_index) {
            rest += "\n";  // keeps paragraphs on either side apart
            continue;
        }
        auto t = util::trim(lines[i]);
        if (t.starts_with("```")) continue;
        rest += lines[i];
        rest.push_back('\n');
    }

    Recommendation rec;
    rec.raw_text = std::string(raw);
    rec.spec = *spec;
    rec.lenient = true;
    namespace mk = prompt::markers;
    std::vector<std::string> prose;
    for (auto& p : detail::paragraphs(rest)) {
        if (auto label = detail::leading_marker(p)) {
            auto nl = p.find('\n');
            std::string body = nl == std::string::npos ? "" : std::string(util::trim(p.substr(nl + 1)));
            if (body.empty() || *label == mk::vegazero) continue;
            if (*label == mk::explanation1) rec.narrative.e1 = body;
            else if (*label == mk::explanation2) rec.narrative.e2 = body;
            else if (*label == mk::caption) rec.narrative.caption = body;
            else rec.narrative.suggestions = split_numbered(body);
            continue;
        }
        if (rec.narrative.suggestions.empty() && detail::starts_numbered(p)) {
            rec.narrative.suggestions = split_numbered(p);
        } else if (rec.narrative.caption.empty() && detail::mentions_axes(p)) {
            rec.narrative.caption = p;
        } else {
            prose.push_back(p);
        }
    }
    for (auto& p : prose) {
        if (rec.narrative.e1.empty()) rec.narrative.e1 = std::move(p);
        else if (rec.narrative.e2.empty()) rec.narrative.e2 = std::move(p);
        else break;
    }
    return rec;
}

inline nlohmann::json to_json(const Recommendation& r, bool include_raw = true) {
    nlohmann::json j;
    j["vegazero"] = vegazero::render(r.spec);
    j["narrative"] = vrecs::to_json(r.narrative);
    j["lenient"] = r.lenient;
    if (r.doc) j["doc"] = nlohmann::json::parse(r.doc->json.dump());
    auto warnings = nlohmann::json::array();
    for (const auto& w : r.warnings) warnings.push_back({{"code", to_string(w.code)}, {"message", w.message}, {"location", w.location}});
    j["warnings"] = std::move(warnings);
    if (include_raw) j["raw_text"] = r.raw_text;
    return j;
}

}  // namespace vrecs::response
