#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vrecs/dataset.hpp"
#include "vrecs/errors.hpp"
#include "vrecs/sample.hpp"
#include "vrecs/util.hpp"
#include "vrecs/vegazero.hpp"

#ifndef VRECS_DEFAULT_TEMPLATE_DIR
#define VRECS_DEFAULT_TEMPLATE_DIR "templates/v1"
#endif

namespace vrecs::prompt {

enum class TeacherTask { T1_explain, T2_caption, T3_suggest };
enum class PromptKind { T1_explain, T2_caption, T3_suggest, inference, baseline };

inline std::string_view to_string(TeacherTask t) {
    switch (t) {
        case TeacherTask::T1_explain: return "T1_explain";
        case TeacherTask::T2_caption: return "T2_caption";
        case TeacherTask::T3_suggest: return "T3_suggest";
    }
    return "T1_explain";
}

inline std::string_view to_string(PromptKind k) {
    switch (k) {
        case PromptKind::T1_explain: return "T1_explain";
        case PromptKind::T2_caption: return "T2_caption";
        case PromptKind::T3_suggest: return "T3_suggest";
        case PromptKind::inference: return "inference";
        case PromptKind::baseline: return "baseline";
    }
    return "inference";
}

struct Section {
    std::string label;
    std::size_t offset = 0;
    std::size_t length = 0;

    bool operator==(const Section&) const = default;
};

struct PromptText {
    std::string text;
    PromptKind kind = PromptKind::inference;
    std::vector<Section> sections;  // contiguous, covering text
    std::string template_hash;

    std::string_view section(std::string_view label) const {
        for (const auto& s : sections) {
            if (s.label == label) return std::string_view(text).substr(s.offset, s.length);
        }
        return {};
    }
};

/// Response section markers shared by the student format, the baseline
/// prompt and the teacher reply templates.
namespace markers {
inline constexpr std::string_view vegazero = "VEGAZERO";
inline constexpr std::string_view explanation1 = "EXPLANATION-1";
inline constexpr std::string_view explanation2 = "EXPLANATION-2";
inline constexpr std::string_view caption = "CAPTION";
inline constexpr std::string_view suggestions = "SUGGESTIONS";
inline constexpr std::string_view all[] = {vegazero, explanation1, explanation2, caption, suggestions};
}  // namespace markers

struct PromptOptions {
    int suggestion_count = 3;  // 1..5
};

using Vars = std::map<std::string, std::string, std::less<>>;

/// A versioned, read-only set of prompt templates loaded from a directory.
class TemplateSet {
public:
    static constexpr std::string_view kRequired[] = {
        "vegazero_template.txt", "response_format.txt", "teacher_t1.txt",       "teacher_t2.txt",
        "teacher_t3.txt",        "student_header.txt",  "student_input.txt",    "student_body.txt",
        "student_response.txt",  "baseline.txt"};

    static TemplateSet load(const std::filesystem::path& dir) {
        TemplateSet set;
        if (!std::filesystem::is_directory(dir)) throw TemplateError("template directory not found: " + dir.string());
        for (const auto& entry : std::filesystem::directory_iterator(dir)) {
            if (!entry.is_regular_file()) continue;
            set.files_[entry.path().filename().string()] = util::read_file(entry.path());
        }
        for (auto name : kRequired) {
            if (!set.files_.count(std::string(name))) throw TemplateError("missing template " + std::string(name));
        }
        set.version_ = std::filesystem::absolute(dir).lexically_normal().filename().string();
        if (set.version_.empty()) set.version_ = std::filesystem::absolute(dir).parent_path().filename().string();
        std::string digest_input;
        for (const auto& [name, body] : set.files_) {
            digest_input += name;
            digest_input.push_back('\0');
            digest_input += body;
            digest_input.push_back('\0');
        }
        set.hash_ = util::sha256_hex(digest_input);
        return set;
    }

    static TemplateSet load_default() { return load(VRECS_DEFAULT_TEMPLATE_DIR); }

    const std::string& hash() const noexcept { return hash_; }
    const std::string& version() const noexcept { return version_; }

    const std::string& raw(std::string_view name) const {
        auto it = files_.find(std::string(name));
        if (it == files_.end()) throw TemplateError("unknown template " + std::string(name));
        return it->second;
    }

private:
    std::map<std::string, std::string> files_;
    std::string version_;
    std::string hash_;
};

/// Single-pass `{{name}}` substitution; substituted values are not rescanned.
inline std::string substitute(std::string_view tmpl, const Vars& vars) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        auto open = tmpl.find("{{", i);
        if (open == std::string_view::npos) {
            out.append(tmpl.substr(i));
            break;
        }
        auto close = tmpl.find("}}", open + 2);
        if (close == std::string_view::npos) throw TemplateError("unterminated placeholder");
        out.append(tmpl.substr(i, open - i));
        auto name = util::trim(tmpl.substr(open + 2, close - open - 2));
        auto it = vars.find(name);
        if (it == vars.end()) throw TemplateError("unbound placeholder {{" + std::string(name) + "}}");
        out.append(it->second);
        i = close + 2;
    }
    return out;
}

/// Renders a template that uses `[[block:X]]` lines into a sectioned prompt.
inline PromptText render_blocks(std::string_view tmpl, const Vars& vars, PromptKind kind, std::string hash) {
    PromptText p;
    p.kind = kind;
    p.template_hash = std::move(hash);
    std::string label = "body";
    std::string pending;
    bool started = false;
    auto flush = [&] {
        if (!started && pending.empty()) return;
        auto text = substitute(pending, vars);
        p.sections.push_back({label, p.text.size(), text.size()});
        p.text += text;
        pending.clear();
    };
    for (const auto& line : util::split_lines(tmpl)) {
        auto t = util::trim(line);
        if (t.starts_with("[[block:") && t.ends_with("]]")) {
            flush();
            started = true;
            label = std::string(t.substr(8, t.size() - 10));
            continue;
        }
        pending += line;
        pending.push_back('\n');
    }
    flush();
    return p;
}

namespace detail {

inline std::string chomp(std::string s) {
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
    return s;
}

inline std::string features_block(const TableSketch& sketch) {
    std::string out;
    for (const auto& f : sketch.features) {
        if (!out.empty()) out.push_back('\n');
        out += "- " + f.name + " (" + std::string(to_string(f.type)) + ")";
    }
    return out;
}

inline int checked_count(const PromptOptions& o) {
    if (o.suggestion_count < 1 || o.suggestion_count > 5) {
        throw InvalidInput("suggestion_count must be in [1, 5]");
    }
    return o.suggestion_count;
}

inline std::string suggestion_slots(int n) {
    std::string out;
    for (int i = 1; i <= n; ++i) {
        if (i > 1) out.push_back('\n');
        out += std::to_string(i) + ") <question>";
    }
    return out;
}

inline Vars common_vars(const TemplateSet& t, const PromptOptions& o) {
    int n = checked_count(o);
    Vars v;
    v["vegazero_template"] = chomp(t.raw("vegazero_template.txt"));
    v["suggestion_count"] = std::to_string(n);
    v["suggestion_slots"] = suggestion_slots(n);
    v["response_format"] = chomp(substitute(t.raw("response_format.txt"), v));
    return v;
}

}  // namespace detail

inline std::string numbered_list(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out.push_back('\n');
        out += std::to_string(i + 1) + ") " + items[i];
    }
    return out;
}

/// The response-format block shared verbatim by the student and baseline prompts.
inline std::string response_format_block(const TemplateSet& t, const PromptOptions& o = {}) {
    return detail::common_vars(t, o).at("response_format");
}

/// Teacher prompt with blocks A (step-by-step cue and inputs), B (numbered
/// steps) and C (reply template). T2/T3 only see the spec.
inline PromptText teacher_prompt(TeacherTask task, const TableSketch& sketch, std::string_view query,
                                 const vegazero::Spec& spec, const TemplateSet& t, const PromptOptions& o = {}) {
    auto vars = detail::common_vars(t, o);
    vars["vegazero"] = vegazero::render(spec);
    std::string_view file;
    PromptKind kind;
    switch (task) {
        case TeacherTask::T1_explain: {
            auto violations = vegazero::validate(spec, sketch);
            if (!violations.empty()) throw InvalidInput("T1 spec does not validate: " + vegazero::describe(violations.front()));
            vars["table_name"] = sketch.table_name;
            vars["features"] = detail::features_block(sketch);
            vars["query"] = std::string(query);
            file = "teacher_t1.txt";
            kind = PromptKind::T1_explain;
            break;
        }
        case TeacherTask::T2_caption:
            file = "teacher_t2.txt";
            kind = PromptKind::T2_caption;
            break;
        case TeacherTask::T3_suggest:
        default:
            file = "teacher_t3.txt";
            kind = PromptKind::T3_suggest;
            break;
    }
    return render_blocks(t.raw(file), vars, kind, t.hash());
}

struct TrainingInstance {
    std::string header;
    std::string input;
    std::string body;
    std::string response;
    TableSketch sketch;
    std::string query;
    vegazero::Spec spec;
    Narrative narrative;
    Hardness hardness = Hardness::easy;

    std::string prompt() const { return header + input; }
    std::string completion() const { return body + response; }
};

/// Renders just the response part (V plus E/C/S) in the student format.
inline std::string format_response(const vegazero::Spec& spec, const Narrative& n, const TemplateSet& t,
                                   const PromptOptions& o = {}) {
    auto vars = detail::common_vars(t, o);
    vars["vegazero"] = vegazero::render(spec);
    vars["e1"] = n.e1;
    vars["e2"] = n.e2;
    vars["caption"] = n.caption;
    vars["suggestions"] = numbered_list(n.suggestions);
    return substitute(t.raw("student_response.txt"), vars);
}

inline TrainingInstance training_instance(const TableSketch& sketch, std::string_view query, const vegazero::Spec& spec,
                                          const Narrative& narrative, Hardness hardness, const TemplateSet& t,
                                          const PromptOptions& o = {}) {
    if (auto missing = narrative.missing_parts(); !missing.empty()) throw IncompleteNarrative(std::move(missing));
    auto vars = detail::common_vars(t, o);
    vars["query"] = std::string(query);
    vars["table_name"] = sketch.table_name;
    vars["features"] = detail::features_block(sketch);
    vars["e1"] = narrative.e1;
    vars["e2"] = narrative.e2;

    TrainingInstance ti;
    ti.header = substitute(t.raw("student_header.txt"), vars);
    ti.input = substitute(t.raw("student_input.txt"), vars);
    ti.body = substitute(t.raw("student_body.txt"), vars);
    ti.response = format_response(spec, narrative, t, o);
    ti.sketch = sketch;
    ti.query = std::string(query);
    ti.spec = spec;
    ti.narrative = narrative;
    ti.hardness = hardness;
    return ti;
}

/// Student prompt at inference: the training header and input, with the body
/// and response left for the model (zero-length trailing sections).
inline PromptText inference_prompt(const TableSketch& sketch, std::string_view query, const TemplateSet& t,
                                   const PromptOptions& o = {}) {
    auto vars = detail::common_vars(t, o);
    vars["query"] = std::string(query);
    vars["table_name"] = sketch.table_name;
    vars["features"] = detail::features_block(sketch);
    PromptText p;
    p.kind = PromptKind::inference;
    p.template_hash = t.hash();
    auto header = substitute(t.raw("student_header.txt"), vars);
    auto input = substitute(t.raw("student_input.txt"), vars);
    p.sections.push_back({"header", 0, header.size()});
    p.sections.push_back({"input", header.size(), input.size()});
    p.text = header + input;
    p.sections.push_back({"body", p.text.size(), 0});
    p.sections.push_back({"response", p.text.size(), 0});
    return p;
}

/// Zero-shot CoT prompt for an untuned model, mirroring the student format.
inline PromptText baseline_cot_prompt(const TableSketch& sketch, std::string_view query, const TemplateSet& t,
                                      const PromptOptions& o = {}) {
    auto vars = detail::common_vars(t, o);
    vars["query"] = std::string(query);
    vars["table_name"] = sketch.table_name;
    vars["features"] = detail::features_block(sketch);
    return render_blocks(t.raw("baseline.txt"), vars, PromptKind::baseline, t.hash());
}

}  // namespace vrecs::prompt
