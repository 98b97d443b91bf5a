#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "vrecs/corpus.hpp"
#include "vrecs/enrichment.hpp"
#include "vrecs/prompt.hpp"

namespace testsupport {

inline std::filesystem::path fixture_dir() { return VRECS_FIXTURE_DIR; }
inline std::filesystem::path corpus_index() { return fixture_dir() / "mini-corpus" / "index.jsonl"; }

inline const vrecs::prompt::TemplateSet& templates() {
    static const auto t = vrecs::prompt::TemplateSet::load_default();
    return t;
}

inline const vrecs::corpus::ImportResult& mini_corpus() {
    static const auto r = vrecs::corpus::import_corpus(corpus_index());
    return r;
}

inline std::shared_ptr<const vrecs::DataTable> corpus_table(const std::string& name) {
    for (const auto& t : mini_corpus().triples) {
        if (t.table->name() == name) return t.table;
    }
    throw std::runtime_error("no table " + name);
}

/// A completion in the labeled student format with arbitrary spec text.
inline std::string marked_response(const std::string& spec_text, const std::string& caption = "A caption on the x axis.",
                                   std::vector<std::string> suggestions = {"First?", "Second?", "Third?"}) {
    return "[VEGAZERO]\n" + spec_text + "\n[EXPLANATION-1]\nThe user wants an overview.\n[EXPLANATION-2]\n" +
           "The chart uses the selected columns.\n[CAPTION]\n" + caption + "\n[SUGGESTIONS]\n" +
           vrecs::prompt::numbered_list(suggestions) + "\n";
}

/// Ground-truth completion for a triple, as the teacher-enriched training
/// record would contain it.
inline std::string truth_completion(const vrecs::CorpusTriple& t) {
    return vrecs::prompt::format_response(t.spec, vrecs::enrichment::synthetic_narrative(t), templates());
}

// ---------------------------------------------------------------------------
// Metric fixture: 20 records against one pilots truth spec.
//   r01-r10  exact                      dm 1  mark 1  axes 1
//   r11-r12  axes inverted, bar         dm 1  mark 1  axes 0  InvertedAxes
//   r13-r14  axes inverted, line        dm 1  mark 0  axes 0  InvertedAxes
//   r15      point over age             dm 0  mark 0  axes 0
//   r16-r20  unparseable                syntax 0, other levels n/a
// Hand counts: syntax 15/20, data mapping 14/15, mark 12/15, axes 10/15.

struct MetricFixture {
    std::vector<vrecs::CorpusTriple> truth;
    std::map<std::string, std::string> completions;
    std::vector<std::string> inverted_ids;
};

inline MetricFixture metric_fixture() {
    const std::string truth_text = "mark bar data pilots encoding x position y aggregate mean rank transform group x";
    const auto spec = vrecs::vegazero::parse(truth_text);
    const auto table = corpus_table("pilots");

    MetricFixture f;
    auto id = [](int i) { return std::string(i < 10 ? "r0" : "r") + std::to_string(i); };
    for (int i = 1; i <= 20; ++i) {
        f.truth.push_back({id(i), table, "What is the average rank of pilots in each position?",
                           vrecs::kHardnessLevels[static_cast<std::size_t>(i % 4)], spec});
    }
    for (int i = 1; i <= 10; ++i) f.completions[id(i)] = marked_response(truth_text);
    for (int i = 11; i <= 12; ++i) {
        f.completions[id(i)] = marked_response("mark bar data pilots encoding x rank y aggregate mean position transform group x");
        f.inverted_ids.push_back(id(i));
    }
    for (int i = 13; i <= 14; ++i) {
        f.completions[id(i)] = marked_response("mark line data pilots encoding x rank y aggregate none position");
        f.inverted_ids.push_back(id(i));
    }
    f.completions[id(15)] = marked_response("mark point data pilots encoding x position y aggregate mean age transform group x");
    f.completions[id(16)] = marked_response("mark histogram data pilots encoding x position y aggregate mean rank");
    f.completions[id(17)] = marked_response("mark chart encoding x position y aggregate mean rank");
    f.completions[id(18)] = "The average rank differs by position; centers rank best.";
    f.completions[id(19)] = "";
    f.completions[id(20)] = "[VEGAZERO]\nmark bar encoding x position y aggregate mean rank\n[CAPTION]\nNo explanations.\n";
    return f;
}

}  // namespace testsupport
