#include <gtest/gtest.h>

#include <random>

#include <unistd.h>

#include "support/fixtures.hpp"
#include "vrecs/evallm.hpp"

using namespace vrecs;
using namespace vrecs::evallm;
using vegazero::parse;

namespace {

const char* kTruth = "mark bar data pilots encoding x position y aggregate mean rank transform group x";

CorpusTriple truth_triple(const std::string& spec = kTruth) {
    return {"t1", testsupport::corpus_table("pilots"), "q", Hardness::easy, parse(spec)};
}

response::Recommendation rec_of(const std::string& spec) {
    return response::parse_response(testsupport::marked_response(spec));
}

}  // namespace

TEST(Levels, SyntaxStrictAndLenient) {
    EXPECT_EQ(eval_syntax(testsupport::marked_response(kTruth)), 1);
    EXPECT_EQ(eval_syntax(testsupport::marked_response("mark chart encoding x a y b")), 0);
    EXPECT_EQ(eval_syntax("just prose"), 0);
    const std::string bare = std::string("Here you go:\n") + kTruth + "\n";
    EXPECT_EQ(eval_syntax(bare), 0);
    EXPECT_EQ(eval_syntax(bare, ParseMode::lenient), 1);
}

TEST(Levels, DataMappingIsOrderInsensitive) {
    auto truth = parse(kTruth);
    EXPECT_EQ(eval_data_mapping(parse("mark line encoding x rank y aggregate mean position"), truth), 1);
    EXPECT_EQ(eval_data_mapping(parse("mark bar encoding x position y aggregate mean age"), truth), 0);
    EXPECT_EQ(eval_data_mapping(parse("mark bar encoding x position y aggregate sum rank"), truth), 1);
    EvalOptions o;
    o.aggregate_level = AggregateLevel::data_mapping;
    EXPECT_EQ(eval_data_mapping(parse("mark bar encoding x position y aggregate sum rank"), truth, o), 0);
    // a filter column counts as mapped data
    EXPECT_EQ(eval_data_mapping(parse("mark bar encoding x position y aggregate mean rank transform filter age > 30"), truth), 0);
    // counting the x column draws no extra data
    EXPECT_EQ(data_columns(parse("mark bar encoding x team y aggregate count team")), (std::set<std::string>{"team"}));
}

TEST(Levels, PartialOverlap) {
    auto truth = parse(kTruth);
    EXPECT_DOUBLE_EQ(data_mapping_partial(truth, truth), 1.0);
    EXPECT_DOUBLE_EQ(data_mapping_partial(parse("mark bar encoding x position y aggregate mean age"), truth), 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(data_mapping_partial(parse("mark bar encoding x team y aggregate mean age"), truth), 0.0);
}

TEST(Levels, MarkAndAxes) {
    auto truth = parse(kTruth);
    EXPECT_EQ(eval_mark(parse("mark bar encoding x a y aggregate none b"), truth), 1);
    EXPECT_EQ(eval_mark(parse("mark arc encoding x position y aggregate mean rank"), truth), 0);
    EXPECT_EQ(eval_axes(parse("mark line encoding x position y aggregate mean rank"), truth), 1);
    EXPECT_EQ(eval_axes(parse("mark bar encoding x rank y aggregate mean position"), truth), 0);
    EXPECT_EQ(eval_axes(parse("mark bar encoding x position y aggregate sum rank"), truth), 0);
    EvalOptions o;
    o.aggregate_level = AggregateLevel::ignored;
    EXPECT_EQ(eval_axes(parse("mark bar encoding x position y aggregate sum rank"), truth, o), 1);
}

TEST(Classify, InvertedAxes) {
    auto errors = classify_errors(rec_of("mark bar encoding x rank y aggregate mean position"), truth_triple());
    EXPECT_TRUE(errors.count(ErrorClass::InvertedAxes));
    EXPECT_FALSE(classify_errors(rec_of(kTruth), truth_triple()).count(ErrorClass::InvertedAxes));
}

TEST(Classify, YearColumnPlottedAsQuantity) {
    LoadOptions opts;
    opts.type_overrides["year"] = ColumnType::quantitative;
    auto table = std::make_shared<const DataTable>(load_csv("year,sales\n2019,10\n2020,12\n2021,9\n", "sales", opts));
    CorpusTriple truth{"y1", table, "q", Hardness::easy, parse("mark line encoding x year y aggregate sum sales")};
    auto errors = classify_errors(rec_of("mark line encoding x year y aggregate sum sales"), truth);
    EXPECT_TRUE(errors.count(ErrorClass::IncorrectScaling));

    auto plain = std::make_shared<const DataTable>(load_csv("amount,sales\n2019,10\n2020,12\n", "sales"));
    CorpusTriple other{"y2", plain, "q", Hardness::easy, parse("mark line encoding x amount y aggregate sum sales")};
    EXPECT_FALSE(classify_errors(rec_of("mark line encoding x amount y aggregate sum sales"), other)
                     .count(ErrorClass::IncorrectScaling));
}

TEST(Classify, EmptyResultIsMissingData) {
    auto errors =
        classify_errors(rec_of("mark bar encoding x position y aggregate mean rank transform filter age > 500"), truth_triple());
    EXPECT_TRUE(errors.count(ErrorClass::MissingData));
    EXPECT_TRUE(classify_errors(rec_of(kTruth), truth_triple()).empty());
}

TEST(Classify, InvalidTruthIsInputError) {
    auto truth = truth_triple("mark bar encoding x speed y aggregate mean rank");
    EXPECT_TRUE(classify_errors(rec_of(kTruth), truth).count(ErrorClass::InputError));
    auto rec = evaluate_sample("m", "garbage", truth);
    EXPECT_EQ(rec.syntax, 0);
    EXPECT_TRUE(rec.errors.count(ErrorClass::InputError));
}

TEST(Classify, NeverProducesReviewOnlyClasses) {
    auto f = testsupport::metric_fixture();
    for (const auto& r : evaluate_model("m", f.completions, f.truth)) {
        EXPECT_FALSE(r.errors.count(ErrorClass::Hallucination));
        EXPECT_FALSE(r.errors.count(ErrorClass::NonOptimalSpacing));
    }
}

TEST(Report, HandCountedFixture) {
    auto f = testsupport::metric_fixture();
    auto records = evaluate_model("student", f.completions, f.truth);
    auto rep = aggregate_report(records);
    EXPECT_EQ(rep.n_samples, 20u);
    EXPECT_EQ(rep.levels.syntax, (LevelScore{15, 20}));
    EXPECT_EQ(rep.levels.data_mapping, (LevelScore{14, 15}));
    EXPECT_EQ(rep.levels.mark, (LevelScore{12, 15}));
    EXPECT_EQ(rep.levels.axes, (LevelScore{10, 15}));
    EXPECT_DOUBLE_EQ(*rep.levels.syntax.accuracy(), 0.75);
    EXPECT_EQ(rep.error_counts[ErrorClass::InvertedAxes], 4u);
    std::vector<std::string> inverted;
    for (const auto& r : records) {
        if (r.errors.count(ErrorClass::InvertedAxes)) inverted.push_back(r.sample_id);
        if (!r.syntax) {
            EXPECT_FALSE(r.data_mapping || r.mark || r.axes) << r.sample_id;
        }
    }
    EXPECT_EQ(inverted, f.inverted_ids);
    std::size_t per_hardness_total = 0;
    for (const auto& [h, s] : rep.per_hardness) per_hardness_total += s.syntax.applicable;
    EXPECT_EQ(per_hardness_total, 20u);
}

TEST(Report, AllCorrectScoresOne) {
    std::map<std::string, std::string> completions;
    for (const auto& t : testsupport::mini_corpus().triples) completions[t.id] = testsupport::truth_completion(t);
    auto rep = aggregate_report(evaluate_model("oracle", completions, testsupport::mini_corpus().triples));
    for (const auto* level : {&rep.levels.syntax, &rep.levels.data_mapping, &rep.levels.mark, &rep.levels.axes}) {
        EXPECT_DOUBLE_EQ(*level->accuracy(), 1.0);
        EXPECT_EQ(level->applicable, 60u);
    }
    EXPECT_DOUBLE_EQ(*rep.data_mapping_partial, 1.0);
}

TEST(Report, MissingCompletionScoresZero) {
    auto rep = aggregate_report(evaluate_model("m", {}, {truth_triple()}));
    EXPECT_EQ(rep.levels.syntax, (LevelScore{0, 1}));
    EXPECT_FALSE(rep.levels.axes.accuracy());
}

TEST(Report, RejectsEmptyAndMixedModels) {
    EXPECT_THROW(aggregate_report({}), EmptyInput);
    EvalRecord a, b;
    a.model_name = "x";
    b.model_name = "y";
    EXPECT_THROW(aggregate_report({a, b}), InvalidArgument);
}

TEST(Report, LevelMonotonicityProperty) {
    // accuracies only count parsed records, so correct never exceeds applicable
    std::mt19937_64 rng(3);
    auto f = testsupport::metric_fixture();
    std::vector<std::string> pool;
    for (const auto& [id, c] : f.completions) pool.push_back(c);
    for (int iter = 0; iter < 30; ++iter) {
        std::map<std::string, std::string> completions;
        for (const auto& t : f.truth) completions[t.id] = pool[rng() % pool.size()];
        auto rep = aggregate_report(evaluate_model("m", completions, f.truth));
        EXPECT_EQ(rep.levels.data_mapping.applicable, rep.levels.syntax.correct);
        EXPECT_EQ(rep.levels.mark.applicable, rep.levels.syntax.correct);
        EXPECT_EQ(rep.levels.axes.applicable, rep.levels.syntax.correct);
        EXPECT_LE(rep.levels.axes.correct, rep.levels.axes.applicable);
    }
}

TEST(Report, LenientModeRecoversBareSpecs) {
    auto truth = truth_triple();
    std::map<std::string, std::string> completions{{"t1", std::string("```\n") + kTruth + "\n```\nAverage rank."}};
    auto strict = aggregate_report(evaluate_model("m", completions, {truth}));
    EvalOptions o;
    o.mode = ParseMode::lenient;
    auto lenient = aggregate_report(evaluate_model("m", completions, {truth}, o));
    EXPECT_EQ(strict.levels.syntax.correct, 0u);
    EXPECT_EQ(lenient.levels.syntax.correct, 1u);
    EXPECT_EQ(lenient.lenient_count, 1u);
    EXPECT_EQ(lenient.levels.axes.correct, 1u);
}

TEST(Report, ComparisonTextAndHtml) {
    auto f = testsupport::metric_fixture();
    auto a = aggregate_report(evaluate_model("student", f.completions, f.truth));
    std::map<std::string, std::string> perfect;
    for (const auto& t : f.truth) perfect[t.id] = testsupport::marked_response(kTruth);
    auto b = aggregate_report(evaluate_model("base<line>", perfect, f.truth));

    auto text = comparison_text({a, b});
    EXPECT_NE(text.find("student"), std::string::npos);
    EXPECT_NE(text.find("0.75"), std::string::npos);
    EXPECT_NE(text.find("0.93"), std::string::npos);
    EXPECT_NE(text.find("1.00"), std::string::npos);
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);

    auto html = comparison_html({a, b});
    EXPECT_NE(html.find("<th>base&lt;line&gt;</th>"), std::string::npos);
    EXPECT_EQ(html.find("<th>base<line>"), std::string::npos);
    EXPECT_NE(html.find("<td>0.67</td>"), std::string::npos);
}

TEST(Report, JsonShape) {
    auto f = testsupport::metric_fixture();
    auto j = to_json(aggregate_report(evaluate_model("student", f.completions, f.truth)));
    EXPECT_EQ(j["levels"]["syntax"]["correct"], 15);
    EXPECT_EQ(j["error_counts"]["InvertedAxes"], 4);
    EXPECT_EQ(j["error_counts"]["Hallucination"], 0);
    EXPECT_TRUE(j["per_hardness"].contains("extra_hard"));
}

TEST(Completions, LoadWithAlternativeKeys) {
    auto path = std::filesystem::temp_directory_path() / ("vrecs-completions-" + std::to_string(::getpid()) + ".jsonl");
    util::write_file(path, "{\"sample_id\":\"a\",\"completion\":\"x\"}\n\n{\"id\":\"b\",\"raw\":\"y\"}\n{\"id\":\"c\",\"text\":\"z\"}\n");
    auto c = load_completions(path);
    EXPECT_EQ(c, (std::map<std::string, std::string>{{"a", "x"}, {"b", "y"}, {"c", "z"}}));
    util::write_file(path, "{\"completion\":\"x\"}\n");
    EXPECT_THROW(load_completions(path), IndexMalformed);
    util::write_file(path, "[1]\n");
    EXPECT_THROW(load_completions(path), IndexMalformed);
    std::filesystem::remove(path);
}
