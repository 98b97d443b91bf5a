// Command-line front end: corpus ingest, enrichment, export, evaluation,
// one-shot recommendation and the HTTP service.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <csignal>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vrecs/corpus.hpp"
#include "vrecs/enrichment.hpp"
#include "vrecs/evallm.hpp"
#include "vrecs/gateway.hpp"
#include "vrecs/prompt.hpp"
#include "vrecs/service.hpp"
#include "vrecs/study.hpp"

namespace fs = std::filesystem;
using namespace vrecs;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kPipelineFailure = 2;

struct Common {
    std::string templates = VRECS_DEFAULT_TEMPLATE_DIR;
    int suggestions = 3;
    std::string cache = "cache/completions.jsonl";
    bool no_cache = false;
    int concurrency = 4;
};

gateway::GatewayOptions gateway_options(const Common& c) {
    gateway::GatewayOptions o;
    if (!c.no_cache) o.cache_path = c.cache;
    o.concurrency = c.concurrency;
    return o;
}

prompt::PromptOptions prompt_options(const Common& c) {
    prompt::PromptOptions o;
    o.suggestion_count = c.suggestions;
    return o;
}

std::map<std::string, std::string> parse_tagged(const std::vector<std::string>& items) {
    std::map<std::string, std::string> out;
    for (const auto& item : items) {
        auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) throw InvalidArgument("expected TAG=PATH, got '" + item + "'");
        out[item.substr(0, eq)] = item.substr(eq + 1);
    }
    return out;
}

void write_quarantine(const fs::path& path, const std::vector<enrichment::QuarantineEntry>& q) {
    std::string text;
    for (const auto& e : q) text += enrichment::to_json(e).dump() + "\n";
    util::write_file(path, text);
}

std::vector<enrichment::QuarantineEntry> read_quarantine(const fs::path& path) {
    std::vector<enrichment::QuarantineEntry> out;
    if (!fs::exists(path)) return out;
    for (const auto& line : util::split_lines(util::read_file(path))) {
        if (util::trim(line).empty()) continue;
        auto j = nlohmann::json::parse(line);
        out.push_back({j.value("id", ""), j.value("stage", ""), j.value("error", ""), j.value("message", ""),
                       j.value("raw_text", "")});
    }
    return out;
}

int cmd_ingest(const std::string& index, const std::string& out) {
    auto result = corpus::import_corpus(index);
    std::cout << corpus::to_json(result.stats).dump(2) << "\n";
    if (!out.empty()) {
        corpus::export_corpus(result.triples, out);
        write_quarantine(fs::path(out) / "quarantine.jsonl", result.quarantine);
        util::write_file(fs::path(out) / "stats.json", corpus::to_json(result.stats).dump(2) + "\n");
    }
    return kOk;
}

int cmd_mock_teacher(const Common& c, const std::string& index, const std::string& out) {
    auto triples = corpus::import_corpus(index).triples;
    auto t = prompt::TemplateSet::load(c.templates);
    auto script = enrichment::synthetic_teacher_script(triples, t, prompt_options(c));
    util::write_file(out, script.to_json().dump(2) + "\n");
    spdlog::info("wrote {} mock rules to {}", script.size(), out);
    return kOk;
}

int cmd_enrich(const Common& c, const std::string& index, const std::string& backend, const std::string& out,
               int workers) {
    auto imported = corpus::import_corpus(index);
    auto [tag, config] = service::parse_backend(backend);
    gateway::Gateway teacher(config, gateway_options(c));
    auto t = prompt::TemplateSet::load(c.templates);
    auto result = enrichment::enrich_all(imported.triples, teacher, t, prompt_options(c), workers);

    std::string text;
    for (const auto& s : result.samples) {
        nlohmann::ordered_json j;
        j["id"] = s.triple.id;
        j["narrative"] = to_json(s.narrative);
        j["teacher"] = {{"model_name", s.meta.model_name},
                        {"template_hash", s.meta.template_hash},
                        {"template_version", s.meta.template_version},
                        {"started_ms", s.meta.started_ms},
                        {"finished_ms", s.meta.finished_ms}};
        text += j.dump() + "\n";
    }
    util::write_file(out, text);
    auto quarantine = imported.quarantine;
    quarantine.insert(quarantine.end(), result.quarantine.begin(), result.quarantine.end());
    const auto qpath = fs::path(out).parent_path() / "quarantine.jsonl";
    write_quarantine(qpath, quarantine);
    spdlog::info("enriched {} samples, quarantined {}", result.samples.size(), quarantine.size());
    if (result.fatal) {
        spdlog::error("enrichment stopped: {}", *result.fatal);
        return kPipelineFailure;
    }
    return kOk;
}

int cmd_export(const Common& c, const std::string& index, const std::string& enriched_path, const std::string& out,
               double train_ratio, std::uint64_t seed) {
    auto imported = corpus::import_corpus(index);
    std::map<std::string, const CorpusTriple*> by_id;
    for (const auto& t : imported.triples) by_id[t.id] = &t;

    std::vector<enrichment::EnrichedSample> samples;
    for (const auto& line : util::split_lines(util::read_file(enriched_path))) {
        if (util::trim(line).empty()) continue;
        auto j = nlohmann::json::parse(line);
        auto it = by_id.find(j.at("id").get<std::string>());
        if (it == by_id.end()) continue;
        enrichment::EnrichedSample s;
        s.triple = *it->second;
        s.narrative = narrative_from_json(j.at("narrative"));
        const auto& m = j.at("teacher");
        s.meta = {m.value("model_name", ""), m.value("template_hash", ""), m.value("template_version", ""),
                  m.value("started_ms", std::int64_t{0}), m.value("finished_ms", std::int64_t{0})};
        samples.push_back(std::move(s));
    }
    auto quarantine = read_quarantine(fs::path(enriched_path).parent_path() / "quarantine.jsonl");
    auto t = prompt::TemplateSet::load(c.templates);
    auto parts = enrichment::split(samples, train_ratio, 1.0 - train_ratio, seed);
    auto exported = enrichment::export_split(out, parts, quarantine, t, prompt_options(c), {},
                                             std::make_pair(train_ratio, seed));
    std::cout << exported.manifest.dump(2) << "\n";
    return kOk;
}

int cmd_evaluate(const std::string& index, const std::vector<std::string>& completions, const std::string& out,
                 const std::string& mode, const std::string& level) {
    auto truth = corpus::import_corpus(index).triples;
    evallm::EvalOptions o;
    o.mode = mode == "lenient" ? evallm::ParseMode::lenient : evallm::ParseMode::strict;
    o.aggregate_level = level == "data_mapping" ? evallm::AggregateLevel::data_mapping
                        : level == "ignored"    ? evallm::AggregateLevel::ignored
                                                : evallm::AggregateLevel::axes;
    std::vector<evallm::EvalReport> reports;
    for (const auto& [model, path] : parse_tagged(completions)) {
        auto records = evallm::evaluate_model(model, evallm::load_completions(path), truth, o);
        auto report = evallm::aggregate_report(records);
        std::string lines;
        for (const auto& r : records) lines += evallm::to_json(r).dump() + "\n";
        util::write_file(fs::path(out) / ("records_" + model + ".jsonl"), lines);
        util::write_file(fs::path(out) / ("report_" + model + ".json"), evallm::to_json(report).dump(2) + "\n");
        reports.push_back(std::move(report));
    }
    util::write_file(fs::path(out) / "comparison.txt", evallm::comparison_text(reports));
    util::write_file(fs::path(out) / "comparison.html", evallm::comparison_html(reports));
    std::cout << evallm::comparison_text(reports);
    return kOk;
}

int cmd_recommend(const Common& c, const std::string& dataset, const std::string& query, const std::string& backend,
                  bool lenient) {
    auto table = load_csv(util::read_file(dataset), fs::path(dataset).stem().string());
    auto [tag, config] = service::parse_backend(backend);
    gateway::Gateway g(config, gateway_options(c));
    auto t = prompt::TemplateSet::load(c.templates);
    try {
        auto rec = service::recommend(table, query, g, t, prompt_options(c), lenient);
        std::cout << response::to_json(rec).dump(2) << "\n";
        return kOk;
    } catch (const ResponseError& e) {
        std::cout << service::error_body(e).dump(2) << "\n";
        return kPipelineFailure;
    }
}

int cmd_study_pool(const std::string& index, const std::vector<std::string>& completions, const std::string& data_dir,
                   std::uint64_t seed) {
    auto tagged = parse_tagged(completions);
    if (tagged.size() != 2) throw InvalidArgument("study-pool needs exactly two --completions TAG=PATH");
    auto triples = corpus::import_corpus(index).triples;
    std::vector<std::pair<std::string, std::map<std::string, std::string>>> sides;
    for (const auto& [tag, path] : tagged) sides.emplace_back(tag, evallm::load_completions(path));
    study::StudyStore store(fs::path(data_dir), seed);
    std::size_t added = 0;
    for (const auto& t : triples) {
        auto a = sides[0].second.find(t.id);
        auto b = sides[1].second.find(t.id);
        if (a == sides[0].second.end() || b == sides[1].second.end()) continue;
        study::StudySample s;
        s.id = t.id;
        s.sketch = sketch(*t.table);
        s.query = t.query;
        s.responses[0] = {sides[0].first, study::payload_from_completion(a->second, *t.table)};
        s.responses[1] = {sides[1].first, study::payload_from_completion(b->second, *t.table)};
        store.add_sample(std::move(s));
        ++added;
    }
    spdlog::info("added {} study samples to {}", added, data_dir);
    return kOk;
}

service::Service* g_service = nullptr;

int cmd_serve(const Common& c, const std::string& host, int port, const std::string& data_dir,
              const std::vector<std::string>& backends, const std::string& index, std::uint64_t seed) {
    service::ServiceConfig config;
    if (!data_dir.empty()) config.data_dir = data_dir;
    config.template_dir = c.templates;
    config.prompt_options = prompt_options(c);
    if (!index.empty()) config.corpus_index = index;
    config.study_seed = seed;
    service::BackendRegistry registry;
    for (const auto& b : backends) {
        auto [tag, bc] = service::parse_backend(b);
        registry.add(tag, bc, gateway_options(c));
    }
    service::Service svc(std::move(config), std::move(registry));
    g_service = &svc;
    std::signal(SIGINT, [](int) {
        if (g_service) g_service->stop();
    });
    std::signal(SIGTERM, [](int) {
        if (g_service) g_service->stop();
    });
    return svc.listen(host, port) ? kOk : kPipelineFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Visualization recommendations with narratives"};
    app.require_subcommand(1);
    app.set_config("--config", "", "TOML configuration file");
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Debug logging");

    Common common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--templates", common.templates, "Prompt template directory")->check(CLI::ExistingDirectory);
        sub->add_option("--suggestions", common.suggestions, "Suggestions per narrative")->check(CLI::Range(1, 5));
        sub->add_option("--cache", common.cache, "Completion cache file");
        sub->add_flag("--no-cache", common.no_cache, "Disable the completion cache");
        sub->add_option("--concurrency", common.concurrency, "In-flight request limit")->check(CLI::PositiveNumber);
    };

    std::string index, out, backend, enriched, mode = "strict", level = "axes", dataset, query, data_dir, host = "127.0.0.1";
    std::vector<std::string> completions, backends;
    int workers = 4, port = 8080;
    double train_ratio = 0.8;
    std::uint64_t seed = 42;
    bool lenient = false;

    auto* ingest = app.add_subcommand("ingest", "Import and validate a corpus index");
    ingest->add_option("--corpus", index, "Corpus index.jsonl")->required()->check(CLI::ExistingFile);
    ingest->add_option("--out", out, "Write a normalized copy, stats and quarantine here");

    auto* mock = app.add_subcommand("mock-teacher", "Write a scripted teacher for offline enrichment");
    add_common(mock);
    mock->add_option("--corpus", index, "Corpus index.jsonl")->required()->check(CLI::ExistingFile);
    mock->add_option("--out", out, "Mock script JSON")->required();

    auto* enrich = app.add_subcommand("enrich", "Run the teacher tasks over a corpus");
    add_common(enrich);
    enrich->add_option("--corpus", index, "Corpus index.jsonl")->required()->check(CLI::ExistingFile);
    enrich->add_option("--backend", backend, "Teacher: TAG=mock:FILE or TAG=URL@MODEL#ENV")->required();
    enrich->add_option("--out", out, "Enriched samples JSONL")->required();
    enrich->add_option("--workers", workers, "Samples enriched concurrently")->check(CLI::PositiveNumber);

    auto* exp = app.add_subcommand("export", "Split and export fine-tuning data");
    add_common(exp);
    exp->add_option("--corpus", index, "Corpus index.jsonl")->required()->check(CLI::ExistingFile);
    exp->add_option("--enriched", enriched, "Output of enrich")->required()->check(CLI::ExistingFile);
    exp->add_option("--out", out, "Output directory")->required();
    exp->add_option("--train-ratio", train_ratio, "Train fraction")->check(CLI::Range(0.0, 1.0));
    exp->add_option("--seed", seed, "Split seed");

    auto* eval = app.add_subcommand("evaluate", "Score model completions against the corpus");
    eval->add_option("--corpus", index, "Ground-truth index.jsonl")->required()->check(CLI::ExistingFile);
    eval->add_option("--completions", completions, "MODEL=completions.jsonl (repeatable)")->required();
    eval->add_option("--out", out, "Report directory")->required();
    eval->add_option("--mode", mode, "strict or lenient")->check(CLI::IsMember({"strict", "lenient"}));
    eval->add_option("--aggregate-level", level, "Level scoring the aggregate")
        ->check(CLI::IsMember({"axes", "data_mapping", "ignored"}));

    auto* rec = app.add_subcommand("recommend", "Recommend a chart for one query");
    add_common(rec);
    rec->add_option("--dataset", dataset, "CSV file")->required()->check(CLI::ExistingFile);
    rec->add_option("--query", query, "Natural-language query")->required();
    rec->add_option("--backend", backend, "Student: TAG=mock:FILE or TAG=URL@MODEL#ENV")->required();
    rec->add_flag("--lenient", lenient, "Fall back to lenient extraction");

    auto* pool = app.add_subcommand("study-pool", "Load paired completions into the study pool");
    pool->add_option("--corpus", index, "Corpus index.jsonl")->required()->check(CLI::ExistingFile);
    pool->add_option("--completions", completions, "TAG=completions.jsonl (exactly two)")->required();
    pool->add_option("--data-dir", data_dir, "Service data directory")->required();
    pool->add_option("--seed", seed, "Study seed");

    auto* serve = app.add_subcommand("serve", "Run the HTTP service");
    add_common(serve);
    serve->add_option("--host", host, "Bind address");
    serve->add_option("--port", port, "Port")->check(CLI::Range(1, 65535));
    serve->add_option("--data-dir", data_dir, "Persistent state directory");
    serve->add_option("--backend", backends, "TAG=mock:FILE or TAG=URL@MODEL#ENV (repeatable)");
    serve->add_option("--corpus", index, "Ground truth for /eval/run")->check(CLI::ExistingFile);
    serve->add_option("--seed", seed, "Study seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    auto logger = spdlog::stderr_color_mt("vrecs");
    spdlog::set_default_logger(logger);
    spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

    try {
        if (*ingest) return cmd_ingest(index, out);
        if (*mock) return cmd_mock_teacher(common, index, out);
        if (*enrich) return cmd_enrich(common, index, backend, out, workers);
        if (*exp) return cmd_export(common, index, enriched, out, train_ratio, seed);
        if (*eval) return cmd_evaluate(index, completions, out, mode, level);
        if (*rec) return cmd_recommend(common, dataset, query, backend, lenient);
        if (*pool) return cmd_study_pool(index, completions, data_dir, seed);
        if (*serve) return cmd_serve(common, host, port, data_dir, backends, index, seed);
    } catch (const InvalidArgument& e) {
        spdlog::error("{}", e.what());
        return kUsage;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kPipelineFailure;
    }
    return kUsage;
}
