#pragma once

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <utility>
#include <vector>

#include "vrecs/corpus.hpp"
#include "vrecs/dataset.hpp"
#include "vrecs/errors.hpp"
#include "vrecs/evallm.hpp"
#include "vrecs/gateway.hpp"
#include "vrecs/prompt.hpp"
#include "vrecs/response.hpp"
#include "vrecs/study.hpp"
#include "vrecs/vegalite.hpp"

namespace vrecs::service {

// ---------------------------------------------------------------------------
// backends

/// Parses "tag=mock:script.json" or "tag=https://host/v1@model#ENV_VAR".
inline std::pair<std::string, gateway::BackendConfig> parse_backend(std::string_view descriptor) {
    auto eq = descriptor.find('=');
    if (eq == std::string_view::npos || eq == 0) {
        throw InvalidArgument("backend must look like tag=mock:FILE or tag=URL@MODEL[#ENV]");
    }
    std::string tag(descriptor.substr(0, eq));
    std::string rest(descriptor.substr(eq + 1));
    if (rest.starts_with("mock:")) {
        auto path = rest.substr(5);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(util::read_file(path));
        } catch (const std::exception& e) {
            throw InvalidArgument("cannot read mock script " + path + ": " + e.what());
        }
        return {tag, gateway::mock_backend(gateway::MockScript::from_json(j), tag)};
    }
    static const std::regex re(R"(^(https?://[^@#]+)@([^#]+)(#(.+))?$)");
    std::smatch m;
    if (!std::regex_match(rest, m, re)) throw InvalidArgument("cannot parse backend descriptor '" + std::string(descriptor) + "'");
    gateway::BackendConfig c;
    c.base_url = m[1].str();
    c.model_name = m[2].str();
    if (m[4].matched) c.api_key_ref = m[4].str();
    return {tag, c};
}

class BackendRegistry {
public:
    void add(const std::string& tag, gateway::BackendConfig config, gateway::GatewayOptions options = {}) {
        gateways_[tag] = std::make_shared<gateway::Gateway>(std::move(config), std::move(options));
    }

    void add(const std::string& tag, std::shared_ptr<gateway::Gateway> g) { gateways_[tag] = std::move(g); }

    gateway::Gateway& get(const std::string& tag) const {
        auto it = gateways_.find(tag);
        if (it == gateways_.end()) throw UnknownBackend("backend '" + tag + "' is not configured");
        return *it->second;
    }

    std::vector<std::string> tags() const {
        std::vector<std::string> out;
        for (const auto& [t, g] : gateways_) out.push_back(t);
        return out;
    }

private:
    std::map<std::string, std::shared_ptr<gateway::Gateway>> gateways_;
};

// ---------------------------------------------------------------------------
// datasets

/// Uploaded tables, persisted to datasets.jsonl. Ids are content-derived so a
/// repeated upload of the same bytes and name returns the same id.
class DatasetStore {
public:
    explicit DatasetStore(std::optional<std::filesystem::path> dir = std::nullopt) : dir_(std::move(dir)) {
        if (!dir_) return;
        auto path = *dir_ / "datasets.jsonl";
        if (!std::filesystem::exists(path)) return;
        for (const auto& line : util::split_lines(util::read_file(path))) {
            if (util::trim(line).empty()) continue;
            auto j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded()) continue;
            tables_[j.at("id").get<std::string>()] =
                std::make_shared<const DataTable>(table_from_json(j.at("table")));
        }
    }

    std::string add(std::string_view csv_bytes, const std::string& name) {
        auto table = std::make_shared<const DataTable>(load_csv(csv_bytes, name));
        std::string id = "ds_" + util::sha256_hex(name + '\0' + std::string(csv_bytes)).substr(0, 16);
        std::lock_guard lock(mu_);
        if (tables_.emplace(id, table).second && dir_) {
            util::append_line(*dir_ / "datasets.jsonl", nlohmann::json{{"id", id}, {"table", to_json(*table)}}.dump());
        }
        return id;
    }

    std::shared_ptr<const DataTable> get(const std::string& id) const {
        std::lock_guard lock(mu_);
        auto it = tables_.find(id);
        if (it == tables_.end()) throw DatasetNotFound("dataset '" + id + "' not found");
        return it->second;
    }

private:
    std::optional<std::filesystem::path> dir_;
    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<const DataTable>> tables_;
};

// ---------------------------------------------------------------------------
// recommendation

/// Inference path: prompt, complete, parse, validate, compile. Violations
/// are attached as warnings and suppress the compiled doc.
inline response::Recommendation recommend(const DataTable& table, std::string_view query, gateway::Gateway& backend,
                                          const prompt::TemplateSet& t, const prompt::PromptOptions& o = {},
                                          bool lenient = false) {
    if (util::trim(query).empty()) throw InvalidArgument("query must not be empty");
    const auto sk = sketch(table);
    auto completion = backend.complete(prompt::inference_prompt(sk, query, t, o));
    auto rec = lenient ? response::lenient_extract(completion.text) : response::parse_response(completion.text);
    rec.warnings = vegazero::validate(rec.spec, sk);
    if (rec.warnings.empty()) rec.doc = vegazero::compile(rec.spec, table);
    return rec;
}

// ---------------------------------------------------------------------------
// HTTP

inline int http_status(const Error& e) {
    const std::string_view k = e.kind();
    if (k == "DatasetNotFound") return 404;
    if (k == "MissingSection" || k == "SpecSyntaxError" || k == "NoSpecFound" || k == "RangeError") return 422;
    if (k == "NotAssigned" || k == "PoolExhausted") return 409;
    if (k == "BackendUnavailable" || k == "AuthError" || k == "ResponseMalformed") return 502;
    if (k == "UnmatchedPrompt") return 502;
    return 400;
}

inline nlohmann::json error_body(const Error& e) {
    nlohmann::json j = {{"error", e.kind()}, {"message", e.what()}};
    if (const auto* r = dynamic_cast<const ResponseError*>(&e)) j["raw_text"] = r->raw_text();
    if (const auto* r = dynamic_cast<const RangeError*>(&e)) j["field"] = r->field();
    if (const auto* r = dynamic_cast<const MissingSection*>(&e)) j["section"] = r->section();
    return j;
}

struct ServiceConfig {
    std::optional<std::filesystem::path> data_dir;
    std::filesystem::path template_dir = VRECS_DEFAULT_TEMPLATE_DIR;
    prompt::PromptOptions prompt_options;
    std::optional<std::filesystem::path> corpus_index;  // ground truth for /eval/run
    std::uint64_t study_seed = 7;
};

class Service {
public:
    Service(ServiceConfig config, BackendRegistry backends)
        : config_(std::move(config)),
          templates_(prompt::TemplateSet::load(config_.template_dir)),
          backends_(std::move(backends)),
          datasets_(config_.data_dir),
          study_(config_.data_dir, config_.study_seed) {
        if (config_.corpus_index) truth_ = corpus::import_corpus(*config_.corpus_index).triples;
        register_routes();
    }

    DatasetStore& datasets() { return datasets_; }
    study::StudyStore& study() { return study_; }
    const BackendRegistry& backends() const { return backends_; }
    httplib::Server& server() { return server_; }

    response::Recommendation recommend(const std::string& dataset_id, std::string_view query, const std::string& tag,
                                       bool lenient = false) {
        auto table = datasets_.get(dataset_id);
        return service::recommend(*table, query, backends_.get(tag), templates_, config_.prompt_options, lenient);
    }

    evallm::EvalReport run_eval(const std::string& model, const std::map<std::string, std::string>& completions,
                                const evallm::EvalOptions& o = {}) {
        if (truth_.empty()) throw InvalidArgument("no ground-truth corpus configured");
        auto report = evallm::aggregate_report(evallm::evaluate_model(model, completions, truth_, o));
        std::lock_guard lock(eval_mu_);
        reports_[model] = report;
        return report;
    }

    bool listen(const std::string& host, int port) {
        spdlog::info("listening on {}:{}", host, port);
        return server_.listen(host, port);
    }

    int bind_any_port(const std::string& host = "127.0.0.1") { return server_.bind_to_any_port(host); }
    void listen_after_bind() { server_.listen_after_bind(); }
    void stop() { server_.stop(); }

private:
    static void reply(httplib::Response& res, int status, const nlohmann::json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    static nlohmann::json parse_body(const httplib::Request& req) {
        auto j = nlohmann::json::parse(req.body, nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw InvalidArgument("request body must be a JSON object");
        return j;
    }

    template <class F>
    static httplib::Server::Handler guarded(F f) {
        return [f](const httplib::Request& req, httplib::Response& res) {
            try {
                f(req, res);
            } catch (const Error& e) {
                reply(res, http_status(e), error_body(e));
            } catch (const nlohmann::json::exception& e) {
                reply(res, 400, {{"error", "InvalidArgument"}, {"message", e.what()}});
            } catch (const std::exception& e) {
                spdlog::error("{} {} failed: {}", req.method, req.path, e.what());
                reply(res, 500, {{"error", "Internal"}, {"message", e.what()}});
            }
        };
    }

    void register_routes() {
        server_.Post("/datasets", guarded([this](const httplib::Request& req, httplib::Response& res) {
            std::string name = req.has_param("name") ? req.get_param_value("name") : "";
            std::string csv;
            if (req.get_header_value("Content-Type").starts_with("application/json")) {
                auto j = parse_body(req);
                csv = j.at("csv").get<std::string>();
                if (name.empty()) name = j.value("name", "");
            } else {
                csv = req.body;
            }
            if (name.empty()) name = "dataset";
            auto id = datasets_.add(csv, name);
            reply(res, 201, {{"id", id}, {"sketch", to_json(sketch(*datasets_.get(id)))}});
        }));

        server_.Get(R"(/datasets/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto table = datasets_.get(req.matches[1].str());
            reply(res, 200, {{"id", req.matches[1].str()}, {"sketch", to_json(sketch(*table))}, {"table", to_json(*table)}});
        }));

        server_.Post("/recommend", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto j = parse_body(req);
            auto rec = recommend(j.at("dataset_id").get<std::string>(), j.at("query").get<std::string>(),
                                 j.at("backend").get<std::string>(), j.value("lenient", false));
            reply(res, 200, response::to_json(rec));
        }));

        server_.Get("/study/next", guarded([this](const httplib::Request& req, httplib::Response& res) {
            if (!req.has_param("participant")) throw InvalidArgument("participant parameter required");
            auto next = study_.next(req.get_param_value("participant"));
            if (!next) {
                reply(res, 200, {{"done", true}});
                return;
            }
            auto body = next->payload;
            body["done"] = false;
            reply(res, 200, body);
        }));

        server_.Post("/study/rating", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto r = study::rating_from_json(parse_body(req));
            study_.record_rating(r);
            reply(res, 200, {{"ok", true}, {"sample_id", r.sample_id}});
        }));

        server_.Get("/study/summary", guarded([this](const httplib::Request&, httplib::Response& res) {
            try {
                res.status = 200;
                res.set_content(study_.summary().dump(), "application/json");
            } catch (const EmptyInput& e) {
                reply(res, 404, error_body(e));
            }
        }));

        server_.Post("/eval/run", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto j = parse_body(req);
            std::map<std::string, std::string> completions;
            for (const auto& c : j.at("completions")) {
                completions[c.at("sample_id").get<std::string>()] = c.at("completion").get<std::string>();
            }
            evallm::EvalOptions o;
            if (j.value("mode", "strict") == "lenient") o.mode = evallm::ParseMode::lenient;
            auto level = j.value("aggregate_level", "axes");
            o.aggregate_level = level == "data_mapping" ? evallm::AggregateLevel::data_mapping
                                : level == "ignored"    ? evallm::AggregateLevel::ignored
                                                        : evallm::AggregateLevel::axes;
            auto report = run_eval(j.at("model").get<std::string>(), completions, o);
            res.status = 200;
            res.set_content(evallm::to_json(report).dump(), "application/json");
        }));

        server_.Get("/eval/report", guarded([this](const httplib::Request& req, httplib::Response& res) {
            std::vector<evallm::EvalReport> reports;
            {
                std::lock_guard lock(eval_mu_);
                if (req.has_param("model")) {
                    auto it = reports_.find(req.get_param_value("model"));
                    if (it != reports_.end()) reports.push_back(it->second);
                } else {
                    for (const auto& [m, r] : reports_) reports.push_back(r);
                }
            }
            if (reports.empty()) {
                reply(res, 404, {{"error", "EmptyInput"}, {"message", "no evaluation has been run"}});
                return;
            }
            auto format = req.has_param("format") ? req.get_param_value("format") : "json";
            res.status = 200;
            if (format == "text") {
                res.set_content(evallm::comparison_text(reports), "text/plain");
            } else if (format == "html") {
                res.set_content(evallm::comparison_html(reports), "text/html");
            } else {
                nlohmann::ordered_json out = nlohmann::ordered_json::array();
                for (const auto& r : reports) out.push_back(evallm::to_json(r));
                res.set_content(out.dump(), "application/json");
            }
        }));
    }

    ServiceConfig config_;
    prompt::TemplateSet templates_;
    BackendRegistry backends_;
    DatasetStore datasets_;
    study::StudyStore study_;
    std::vector<CorpusTriple> truth_;
    std::mutex eval_mu_;
    std::map<std::string, evallm::EvalReport> reports_;
    httplib::Server server_;
};

}  // namespace vrecs::service
