#pragma once

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "vrecs/errors.hpp"
#include "vrecs/gateway.hpp"
#include "vrecs/prompt.hpp"
#include "vrecs/response.hpp"
#include "vrecs/sample.hpp"
#include "vrecs/util.hpp"

namespace vrecs::enrichment {

struct TeacherMeta {
    std::string model_name;
    std::string template_hash;
    std::string template_version;
    std::int64_t started_ms = 0;  // unix epoch milliseconds
    std::int64_t finished_ms = 0;
};

struct EnrichedSample {
    CorpusTriple triple;
    Narrative narrative;
    TeacherMeta meta;
};

struct QuarantineEntry {
    std::string id;
    std::string stage;  // T1/T2/T3, import, ...
    std::string error;  // error kind
    std::string message;
    std::string raw_text;
};

inline nlohmann::ordered_json to_json(const QuarantineEntry& q) {
    nlohmann::ordered_json j;
    j["id"] = q.id;
    j["stage"] = q.stage;
    j["error"] = q.error;
    j["message"] = q.message;
    j["raw_text"] = q.raw_text;
    return j;
}

inline std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

// ---------------------------------------------------------------------------
// teacher response parsing

inline std::pair<std::string, std::string> parse_t1(const std::string& raw) {
    auto s = response::find_sections(raw);
    auto e1 = s.get(raw, prompt::markers::explanation1);
    auto e2 = s.get(raw, prompt::markers::explanation2);
    if (!e1 || e1->empty()) throw TeacherParseFailure("T1", raw, "missing [EXPLANATION-1] section");
    if (!e2 || e2->empty()) throw TeacherParseFailure("T1", raw, "missing [EXPLANATION-2] section");
    return {*e1, *e2};
}

/// The caption is the [CAPTION] section when present, else the whole reply.
inline std::string parse_t2(const std::string& raw) {
    auto s = response::find_sections(raw);
    std::string caption = s.get(raw, prompt::markers::caption).value_or(std::string(util::trim(raw)));
    if (caption.empty()) throw TeacherParseFailure("T2", raw, "empty caption");
    return caption;
}

inline std::vector<std::string> parse_t3(const std::string& raw) {
    auto s = response::find_sections(raw);
    std::string text = s.get(raw, prompt::markers::suggestions).value_or(std::string(util::trim(raw)));
    auto items = response::split_numbered(text);
    if (items.empty()) throw TeacherParseFailure("T3", raw, "no numbered suggestions");
    if (items.size() > 5) throw TeacherParseFailure("T3", raw, "more than 5 suggestions");
    return items;
}

// ---------------------------------------------------------------------------
// enrichment

/// Runs T1, T2 and T3 for one triple. Parse failures raise
/// TeacherParseFailure; gateway errors propagate unchanged.
inline EnrichedSample enrich(const CorpusTriple& triple, gateway::Gateway& teacher, const prompt::TemplateSet& t,
                             const prompt::PromptOptions& o = {}) {
    if (!triple.table) throw InvalidArgument("triple " + triple.id + " has no table");
    const auto sk = sketch(*triple.table);
    EnrichedSample out;
    out.triple = triple;
    out.meta.model_name = teacher.config().model_name;
    out.meta.template_hash = t.hash();
    out.meta.template_version = t.version();
    out.meta.started_ms = now_ms();

    auto ask = [&](prompt::TeacherTask task) {
        return teacher.complete(prompt::teacher_prompt(task, sk, triple.query, triple.spec, t, o)).text;
    };
    std::tie(out.narrative.e1, out.narrative.e2) = parse_t1(ask(prompt::TeacherTask::T1_explain));
    out.narrative.caption = parse_t2(ask(prompt::TeacherTask::T2_caption));
    out.narrative.suggestions = parse_t3(ask(prompt::TeacherTask::T3_suggest));
    out.meta.finished_ms = now_ms();
    return out;
}

struct EnrichResult {
    std::vector<EnrichedSample> samples;     // sorted by id
    std::vector<QuarantineEntry> quarantine;  // sorted by id
    std::optional<std::string> fatal;         // set when the backend failed and the run stopped
};

/// Enriches all triples with up to `workers` concurrent samples. Teacher
/// parse failures quarantine the sample; backend or auth failures stop the
/// run and are reported in `fatal`.
inline EnrichResult enrich_all(const std::vector<CorpusTriple>& triples, gateway::Gateway& teacher,
                               const prompt::TemplateSet& t, const prompt::PromptOptions& o = {}, int workers = 4) {
    EnrichResult result;
    std::mutex mu;
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};

    // std::function keeps the thread callable a non-local type
    const std::function<void()> work = [&] {
        for (;;) {
            if (stop.load()) return;
            std::size_t i = next.fetch_add(1);
            if (i >= triples.size()) return;
            const auto& triple = triples[i];
            try {
                auto s = enrich(triple, teacher, t, o);
                std::lock_guard lock(mu);
                result.samples.push_back(std::move(s));
            } catch (const TeacherParseFailure& e) {
                spdlog::warn("quarantined {}: {}", triple.id, e.what());
                std::lock_guard lock(mu);
                result.quarantine.push_back({triple.id, e.task(), e.kind(), e.what(), e.raw_text()});
            } catch (const UnmatchedPrompt& e) {
                std::lock_guard lock(mu);
                result.quarantine.push_back({triple.id, "teacher", e.kind(), e.what(), ""});
            } catch (const InvalidInput& e) {
                std::lock_guard lock(mu);
                result.quarantine.push_back({triple.id, "T1", e.kind(), e.what(), ""});
            } catch (const Error& e) {
                std::lock_guard lock(mu);
                if (!result.fatal) result.fatal = std::string(e.kind()) + ": " + e.what();
                stop = true;
            }
        }
    };

    const int n = std::max(1, std::min<int>(workers, static_cast<int>(triples.size())));
    {
        std::vector<std::jthread> pool;
        for (int i = 1; i < n; ++i) pool.emplace_back(work);
        work();
    }
    std::sort(result.samples.begin(), result.samples.end(),
              [](const auto& a, const auto& b) { return a.triple.id < b.triple.id; });
    std::sort(result.quarantine.begin(), result.quarantine.end(),
              [](const auto& a, const auto& b) { return a.id < b.id; });
    return result;
}

// ---------------------------------------------------------------------------
// export

struct FineTuneHyperparameters {
    std::string base_model = "Llama-2-7B";
    std::string method = "QLoRA";
    int lora_r = 64;
    int lora_alpha = 128;
    std::string target_modules = "all-linear";
    int batch_size = 4;
    double learning_rate = 1e-4;
    std::string optimizer = "AdamW";
};

inline nlohmann::ordered_json to_json(const FineTuneHyperparameters& h) {
    nlohmann::ordered_json j;
    j["base_model"] = h.base_model;
    j["method"] = h.method;
    j["lora_r"] = h.lora_r;
    j["lora_alpha"] = h.lora_alpha;
    j["target_modules"] = h.target_modules;
    j["batch_size"] = h.batch_size;
    j["learning_rate"] = h.learning_rate;
    j["optimizer"] = h.optimizer;
    return j;
}

struct ExportManifest {
    std::string file;
    std::size_t count = 0;
    std::map<std::string, std::size_t> per_hardness;
    std::string template_hash;
    std::string template_version;
    FineTuneHyperparameters hyperparameters;
};

inline nlohmann::ordered_json hardness_counts_json(const std::map<std::string, std::size_t>& counts) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (auto h : kHardnessLevels) {
        auto it = counts.find(std::string(to_string(h)));
        j[std::string(to_string(h))] = it == counts.end() ? 0 : it->second;
    }
    return j;
}

inline nlohmann::ordered_json to_json(const ExportManifest& m) {
    nlohmann::ordered_json j;
    j["file"] = m.file;
    j["count"] = m.count;
    j["per_hardness"] = hardness_counts_json(m.per_hardness);
    j["template_hash"] = m.template_hash;
    j["template_version"] = m.template_version;
    j["hyperparameters"] = to_json(m.hyperparameters);
    return j;
}

inline nlohmann::ordered_json export_record(const EnrichedSample& s, const prompt::TemplateSet& t,
                                            const prompt::PromptOptions& o) {
    const auto sk = sketch(*s.triple.table);
    auto ti = prompt::training_instance(sk, s.triple.query, s.triple.spec, s.narrative, s.triple.hardness, t, o);
    nlohmann::ordered_json j;
    j["id"] = s.triple.id;
    j["query"] = s.triple.query;
    j["hardness"] = to_string(s.triple.hardness);
    j["sketch"] = vrecs::to_json(sk);
    j["vegazero"] = vegazero::render(s.triple.spec);
    j["e1"] = s.narrative.e1;
    j["e2"] = s.narrative.e2;
    j["caption"] = s.narrative.caption;
    j["suggestions"] = s.narrative.suggestions;
    j["prompt"] = ti.prompt();
    j["completion"] = ti.completion();
    return j;
}

/// Writes one JSON object per sample, ordered by id. Output is a pure
/// function of the samples and templates.
inline ExportManifest export_jsonl(std::vector<EnrichedSample> samples, const std::filesystem::path& path,
                                   const prompt::TemplateSet& t, const prompt::PromptOptions& o = {},
                                   FineTuneHyperparameters hp = {}) {
    if (samples.empty()) throw EmptyInput("nothing to export");
    std::sort(samples.begin(), samples.end(), [](const auto& a, const auto& b) { return a.triple.id < b.triple.id; });
    ExportManifest m;
    m.file = path.filename().string();
    m.template_hash = t.hash();
    m.template_version = t.version();
    m.hyperparameters = std::move(hp);
    std::string out;
    for (const auto& s : samples) {
        out += export_record(s, t, o).dump();
        out.push_back('\n');
        ++m.per_hardness[std::string(to_string(s.triple.hardness))];
        ++m.count;
    }
    try {
        util::write_file(path, out);
    } catch (const std::exception& e) {
        throw IoError(e.what());
    }
    return m;
}

// ---------------------------------------------------------------------------
// stratified split

inline const std::string& sample_id(const CorpusTriple& t) { return t.id; }
inline const std::string& sample_id(const EnrichedSample& s) { return s.triple.id; }
inline Hardness sample_hardness(const CorpusTriple& t) { return t.hardness; }
inline Hardness sample_hardness(const EnrichedSample& s) { return s.triple.hardness; }

template <class T>
struct Split {
    std::vector<T> train;
    std::vector<T> eval;
};

/// Stratified by hardness: each class of size n contributes round(ratio*n)
/// samples to train, chosen by a seeded shuffle of the id-sorted class.
template <class T>
Split<T> split(const std::vector<T>& samples, double train_ratio, double eval_ratio, std::uint64_t seed = 42) {
    if (train_ratio < 0 || eval_ratio < 0 || std::abs(train_ratio + eval_ratio - 1.0) > 1e-9) {
        throw InvalidArgument("split ratios must be non-negative and sum to 1");
    }
    std::map<Hardness, std::vector<const T*>> classes;
    for (const auto& s : samples) classes[sample_hardness(s)].push_back(&s);
    for (auto h : kHardnessLevels) {
        if (classes[h].empty()) throw InsufficientClass(std::string(to_string(h)));
    }

    std::mt19937_64 rng(seed);
    Split<T> out;
    for (auto h : kHardnessLevels) {
        auto& members = classes[h];
        std::sort(members.begin(), members.end(), [](const T* a, const T* b) { return sample_id(*a) < sample_id(*b); });
        for (std::size_t i = members.size() - 1; i > 0; --i) {
            std::swap(members[i], members[rng() % (i + 1)]);
        }
        const auto n_train = static_cast<std::size_t>(std::lround(train_ratio * static_cast<double>(members.size())));
        for (std::size_t i = 0; i < members.size(); ++i) (i < n_train ? out.train : out.eval).push_back(*members[i]);
    }
    auto by_id = [](const T& a, const T& b) { return sample_id(a) < sample_id(b); };
    std::sort(out.train.begin(), out.train.end(), by_id);
    std::sort(out.eval.begin(), out.eval.end(), by_id);
    return out;
}

struct SplitExport {
    ExportManifest train;
    std::optional<ExportManifest> eval;
    nlohmann::ordered_json manifest;
};

/// Writes train.jsonl, eval.jsonl, quarantine.jsonl and manifest.json into `dir`.
inline SplitExport export_split(const std::filesystem::path& dir, const Split<EnrichedSample>& parts,
                                const std::vector<QuarantineEntry>& quarantine, const prompt::TemplateSet& t,
                                const prompt::PromptOptions& o = {}, FineTuneHyperparameters hp = {},
                                std::optional<std::pair<double, std::uint64_t>> split_info = std::nullopt) {
    SplitExport out;
    out.train = export_jsonl(parts.train, dir / "train.jsonl", t, o, hp);
    if (!parts.eval.empty()) {
        out.eval = export_jsonl(parts.eval, dir / "eval.jsonl", t, o, hp);
    } else {
        util::write_file(dir / "eval.jsonl", "");
    }

    std::string q;
    for (const auto& e : quarantine) q += to_json(e).dump() + "\n";
    util::write_file(dir / "quarantine.jsonl", q);

    std::map<std::string, std::size_t> totals = out.train.per_hardness;
    if (out.eval) {
        for (const auto& [h, n] : out.eval->per_hardness) totals[h] += n;
    }
    auto& m = out.manifest;
    m["template_hash"] = t.hash();
    m["template_version"] = t.version();
    m["suggestion_count"] = o.suggestion_count;
    m["count"] = out.train.count + (out.eval ? out.eval->count : 0);
    m["per_hardness"] = hardness_counts_json(totals);
    m["files"] = nlohmann::ordered_json::array();
    m["files"].push_back(to_json(out.train));
    if (out.eval) m["files"].push_back(to_json(*out.eval));
    if (split_info) m["split"] = {{"train_ratio", split_info->first}, {"seed", split_info->second}};
    m["hyperparameters"] = to_json(hp);
    auto qj = nlohmann::ordered_json::array();
    for (const auto& e : quarantine) {
        nlohmann::ordered_json entry;
        entry["id"] = e.id;
        entry["stage"] = e.stage;
        entry["error"] = e.error;
        qj.push_back(std::move(entry));
    }
    m["quarantine"] = std::move(qj);
    util::write_file(dir / "manifest.json", m.dump(2) + "\n");
    return out;
}

// ---------------------------------------------------------------------------
// offline teacher

/// Deterministic narrative derived from the spec alone; used to script the
/// mock teacher for offline pipeline runs.
inline Narrative synthetic_narrative(const CorpusTriple& triple, int suggestion_count = 3) {
    const auto& s = triple.spec;
    const std::string y = s.y.aggregate == vegazero::Aggregate::none
                              ? s.y.column
                              : std::string(to_string(s.y.aggregate)) + " of " + s.y.column;
    Narrative n;
    n.e1 = "The user wants to see the " + y + " for each " + s.x + " in the " + triple.table->name() + " table.";
    n.e2 = "A " + std::string(to_string(s.mark)) + " chart places " + s.x + " on the x axis and the " + y +
           " on the y axis; the other features are not needed to answer the question.";
    n.caption = "The chart shows the " + y + " by " + s.x + ".";
    const std::string templates[] = {"Which " + s.x + " has the highest " + y + "?",
                                     "Which " + s.x + " has the lowest " + y + "?",
                                     "How is the " + y + " distributed across " + s.x + "?",
                                     "What is the total " + s.y.column + " overall?",
                                     "How does the " + y + " change over time?"};
    for (int i = 0; i < suggestion_count && i < 5; ++i) n.suggestions.push_back(templates[i]);
    return n;
}

/// Exact-prompt mock rules that make the teacher answer every triple with
/// its synthetic narrative in the expected reply formats.
inline gateway::MockScript synthetic_teacher_script(const std::vector<CorpusTriple>& triples,
                                                    const prompt::TemplateSet& t, const prompt::PromptOptions& o = {}) {
    gateway::MockScript script;
    for (const auto& triple : triples) {
        const auto sk = sketch(*triple.table);
        const auto n = synthetic_narrative(triple, o.suggestion_count);
        auto p = [&](prompt::TeacherTask task) {
            return prompt::teacher_prompt(task, sk, triple.query, triple.spec, t, o).text;
        };
        script.add_exact(p(prompt::TeacherTask::T1_explain),
                         "[EXPLANATION-1]\n" + n.e1 + "\n[EXPLANATION-2]\n" + n.e2 + "\n");
        script.add_exact(p(prompt::TeacherTask::T2_caption), "[CAPTION]\n" + n.caption + "\n");
        script.add_exact(p(prompt::TeacherTask::T3_suggest),
                         "[SUGGESTIONS]\n" + prompt::numbered_list(n.suggestions) + "\n");
    }
    return script;
}

}  // namespace vrecs::enrichment
