#include <gtest/gtest.h>

#include <random>

#include "support/fixtures.hpp"
#include "vrecs/corpus.hpp"
#include "vrecs/enrichment.hpp"

using namespace vrecs;
using namespace vrecs::enrichment;

namespace {

std::filesystem::path temp_dir(const std::string& stem) {
    static std::mt19937_64 rng(std::random_device{}());
    auto p = std::filesystem::temp_directory_path() / (stem + "-" + std::to_string(rng()));
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

std::vector<CorpusTriple> first_triples(std::size_t n) {
    const auto& all = testsupport::mini_corpus().triples;
    return {all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n)};
}

gateway::Gateway synthetic_teacher(const std::vector<CorpusTriple>& triples) {
    return gateway::Gateway(gateway::mock_backend(synthetic_teacher_script(triples, testsupport::templates()), "teacher"));
}

std::vector<std::string> lines_of(const std::filesystem::path& p) {
    std::vector<std::string> out;
    for (auto& l : util::split_lines(util::read_file(p))) {
        if (!l.empty()) out.push_back(l);
    }
    return out;
}

/// Samples with ids s000.. and the requested count per hardness class.
std::vector<EnrichedSample> synthetic_samples(std::array<int, 4> per_class) {
    auto base = testsupport::mini_corpus().triples.front();
    std::vector<EnrichedSample> out;
    int id = 0;
    for (std::size_t h = 0; h < 4; ++h) {
        for (int i = 0; i < per_class[h]; ++i) {
            EnrichedSample s;
            s.triple = base;
            char buf[16];
            std::snprintf(buf, sizeof buf, "s%03d", id++);
            s.triple.id = buf;
            s.triple.hardness = kHardnessLevels[h];
            s.narrative = synthetic_narrative(base);
            out.push_back(std::move(s));
        }
    }
    return out;
}

std::map<Hardness, int> histogram(const std::vector<EnrichedSample>& v) {
    std::map<Hardness, int> m;
    for (const auto& s : v) ++m[s.triple.hardness];
    return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// teacher reply parsing

TEST(TeacherReplies, T1NeedsBothParts) {
    auto [e1, e2] = parse_t1("[EXPLANATION-1]\none\n[EXPLANATION-2]\ntwo\n");
    EXPECT_EQ(e1, "one");
    EXPECT_EQ(e2, "two");
    try {
        parse_t1("[EXPLANATION-1]\nonly one\n");
        FAIL();
    } catch (const TeacherParseFailure& e) {
        EXPECT_EQ(e.task(), "T1");
        EXPECT_EQ(e.raw_text(), "[EXPLANATION-1]\nonly one\n");
    }
}

TEST(TeacherReplies, T2AndT3AcceptUnmarkedReplies) {
    EXPECT_EQ(parse_t2("  Average rank by position. "), "Average rank by position.");
    EXPECT_EQ(parse_t2("[CAPTION]\nA caption"), "A caption");
    EXPECT_THROW(parse_t2("   "), TeacherParseFailure);
    EXPECT_EQ(parse_t3("1) a? 2) b? 3) c?").size(), 3u);
    EXPECT_EQ(parse_t3("[SUGGESTIONS]\n1) a\n2) b").size(), 2u);
    EXPECT_THROW(parse_t3("no list"), TeacherParseFailure);
    EXPECT_THROW(parse_t3("1) a 2) b 3) c 4) d 5) e 6) f"), TeacherParseFailure);
}

// ---------------------------------------------------------------------------
// enrichment

TEST(Enrich, MockTeacherFillsAllParts) {
    auto triples = first_triples(3);
    auto teacher = synthetic_teacher(triples);
    for (const auto& t : triples) {
        auto s = enrich(t, teacher, testsupport::templates());
        EXPECT_EQ(s.narrative, synthetic_narrative(t)) << t.id;
        EXPECT_EQ(s.meta.model_name, "teacher");
        EXPECT_EQ(s.meta.template_hash, testsupport::templates().hash());
        EXPECT_LE(s.meta.started_ms, s.meta.finished_ms);
    }
}

TEST(Enrich, T1WithoutSecondPartFails) {
    auto t = first_triples(1).front();
    gateway::MockScript script;
    script.add({gateway::MockRule::Kind::contains, "Explain the design", "[EXPLANATION-1]\nonly the first part\n"});
    script.add({gateway::MockRule::Kind::contains, "Write a caption", "cap"});
    script.add({gateway::MockRule::Kind::contains, "suggest questions", "1) a"});
    gateway::Gateway teacher(gateway::mock_backend(script));
    EXPECT_THROW(enrich(t, teacher, testsupport::templates()), TeacherParseFailure);
}

TEST(Enrich, FailuresAreQuarantinedAndTheRestSucceed) {
    auto triples = first_triples(5);
    auto script = synthetic_teacher_script({triples[0], triples[1], triples[3], triples[4]}, testsupport::templates());
    // triple 2: the teacher answers T1 with prose only
    auto sk = sketch(*triples[2].table);
    for (auto task : {prompt::TeacherTask::T1_explain, prompt::TeacherTask::T2_caption, prompt::TeacherTask::T3_suggest}) {
        auto p = prompt::teacher_prompt(task, sk, triples[2].query, triples[2].spec, testsupport::templates());
        script.add_exact(p.text, task == prompt::TeacherTask::T1_explain ? "I think it is a fine chart." : "1) x");
    }
    gateway::Gateway teacher(gateway::mock_backend(script));
    auto r = enrich_all(triples, teacher, testsupport::templates(), {}, 3);
    EXPECT_FALSE(r.fatal);
    ASSERT_EQ(r.samples.size(), 4u);
    ASSERT_EQ(r.quarantine.size(), 1u);
    EXPECT_EQ(r.quarantine[0].id, triples[2].id);
    EXPECT_EQ(r.quarantine[0].stage, "T1");
    EXPECT_EQ(r.quarantine[0].raw_text, "I think it is a fine chart.");
    EXPECT_TRUE(std::is_sorted(r.samples.begin(), r.samples.end(),
                               [](const auto& a, const auto& b) { return a.triple.id < b.triple.id; }));
}

TEST(Enrich, BackendFailureStopsTheRun) {
    auto triples = first_triples(2);
    auto cfg = gateway::mock_backend({});
    cfg.mock.reset();
    cfg.base_url = "http://127.0.0.1:1";
    cfg.max_retries = 0;
    cfg.timeout = std::chrono::milliseconds(200);
    gateway::Gateway teacher(cfg);
    auto r = enrich_all(triples, teacher, testsupport::templates(), {}, 1);
    ASSERT_TRUE(r.fatal);
    EXPECT_NE(r.fatal->find("BackendUnavailable"), std::string::npos);
    EXPECT_TRUE(r.samples.empty());
}

// ---------------------------------------------------------------------------
// export

TEST(Export, OneRecordPerSampleWithManifest) {
    auto triples = first_triples(3);
    auto teacher = synthetic_teacher(triples);
    auto r = enrich_all(triples, teacher, testsupport::templates());
    auto dir = temp_dir("vrecs-export");
    auto m = export_jsonl(r.samples, dir / "train.jsonl", testsupport::templates());
    auto lines = lines_of(dir / "train.jsonl");
    ASSERT_EQ(lines.size(), 3u);
    EXPECT_EQ(m.count, 3u);
    std::size_t total = 0;
    for (const auto& [h, n] : m.per_hardness) total += n;
    EXPECT_EQ(total, 3u);
    EXPECT_EQ(m.template_hash, testsupport::templates().hash());
    EXPECT_EQ(m.hyperparameters.lora_r, 64);
    EXPECT_EQ(m.hyperparameters.lora_alpha, 128);
    EXPECT_EQ(m.hyperparameters.batch_size, 4);
    EXPECT_DOUBLE_EQ(m.hyperparameters.learning_rate, 1e-4);
    EXPECT_EQ(m.hyperparameters.optimizer, "AdamW");

    for (std::size_t i = 0; i < lines.size(); ++i) {
        auto j = nlohmann::json::parse(lines[i]);
        EXPECT_EQ(j["id"], triples[i].id);
        auto rec = response::parse_response(j["completion"].get<std::string>());
        EXPECT_EQ(rec.spec, triples[i].spec);
        EXPECT_EQ(j["e1"], r.samples[i].narrative.e1);
        EXPECT_EQ(j["prompt"].get<std::string>(),
                  prompt::inference_prompt(sketch(*triples[i].table), triples[i].query, testsupport::templates()).text);
    }
    std::filesystem::remove_all(dir);
}

TEST(Export, ReExportIsByteIdentical) {
    auto triples = first_triples(4);
    auto teacher = synthetic_teacher(triples);
    auto r = enrich_all(triples, teacher, testsupport::templates());
    auto dir = temp_dir("vrecs-export");
    auto reversed = r.samples;
    std::reverse(reversed.begin(), reversed.end());
    export_jsonl(r.samples, dir / "a.jsonl", testsupport::templates());
    export_jsonl(reversed, dir / "b.jsonl", testsupport::templates());
    EXPECT_EQ(util::read_file(dir / "a.jsonl"), util::read_file(dir / "b.jsonl"));
    std::filesystem::remove_all(dir);
}

TEST(Export, EmptySetIsRejected) {
    auto dir = temp_dir("vrecs-export");
    EXPECT_THROW(export_jsonl({}, dir / "x.jsonl", testsupport::templates()), EmptyInput);
    std::filesystem::remove_all(dir);
}

TEST(Export, SplitWritesAllFiles) {
    auto samples = synthetic_samples({4, 4, 4, 4});
    auto parts = split(samples, 0.75, 0.25, 7);
    auto dir = temp_dir("vrecs-split");
    QuarantineEntry q{"bad1", "T1", "TeacherParseFailure", "missing", "raw"};
    auto out = export_split(dir, parts, {q}, testsupport::templates(), {}, {}, std::make_pair(0.75, 7ull));
    EXPECT_EQ(lines_of(dir / "train.jsonl").size(), 12u);
    EXPECT_EQ(lines_of(dir / "eval.jsonl").size(), 4u);
    EXPECT_EQ(lines_of(dir / "quarantine.jsonl").size(), 1u);
    auto manifest = nlohmann::json::parse(util::read_file(dir / "manifest.json"));
    EXPECT_EQ(manifest["count"], 16);
    EXPECT_EQ(manifest["per_hardness"]["easy"], 4);
    EXPECT_EQ(manifest["split"]["seed"], 7);
    EXPECT_EQ(manifest["quarantine"][0]["id"], "bad1");
    std::filesystem::remove_all(dir);
}

// ---------------------------------------------------------------------------
// stratified split

TEST(Split, ProportionsFollowEachClass) {
    auto samples = synthetic_samples({40, 30, 20, 10});
    auto parts = split(samples, 0.62, 0.38, 1);
    EXPECT_EQ(parts.train.size() + parts.eval.size(), 100u);
    auto h = histogram(parts.train);
    EXPECT_NEAR(h[Hardness::easy], 25, 1);
    EXPECT_NEAR(h[Hardness::medium], 19, 1);
    EXPECT_NEAR(h[Hardness::hard], 12, 1);
    EXPECT_NEAR(h[Hardness::extra_hard], 6, 1);
    EXPECT_NEAR(static_cast<double>(parts.train.size()), 62, 2);
}

TEST(Split, DisjointCompleteAndSeeded) {
    auto samples = synthetic_samples({7, 5, 3, 2});
    auto a = split(samples, 0.6, 0.4, 11);
    auto b = split(samples, 0.6, 0.4, 11);
    std::set<std::string> ids;
    for (const auto& s : a.train) ids.insert(s.triple.id);
    for (const auto& s : a.eval) EXPECT_TRUE(ids.insert(s.triple.id).second);
    EXPECT_EQ(ids.size(), samples.size());
    ASSERT_EQ(a.train.size(), b.train.size());
    for (std::size_t i = 0; i < a.train.size(); ++i) EXPECT_EQ(a.train[i].triple.id, b.train[i].triple.id);
}

TEST(Split, AllTrain) {
    auto samples = synthetic_samples({3, 3, 3, 3});
    auto parts = split(samples, 1.0, 0.0);
    EXPECT_EQ(parts.train.size(), 12u);
    EXPECT_TRUE(parts.eval.empty());
}

TEST(Split, EmptyClassAndBadRatios) {
    EXPECT_THROW(split(synthetic_samples({3, 3, 0, 3}), 0.5, 0.5), InsufficientClass);
    EXPECT_THROW(split(synthetic_samples({3, 3, 3, 3}), 0.5, 0.4), InvalidArgument);
    EXPECT_THROW(split(synthetic_samples({3, 3, 3, 3}), 1.2, -0.2), InvalidArgument);
}

// ---------------------------------------------------------------------------
// corpus import

namespace {

/// Four records over one table: three bars and one line.
std::filesystem::path four_record_corpus() {
    auto dir = temp_dir("vrecs-corpus");
    util::write_file(dir / "tables" / "shop.csv",
                     "region,revenue,order_date\nNorth,10,2021-01-05\nSouth,20,2021-02-11\nNorth,5,2021-03-02\n");
    util::write_file(dir / "index.jsonl",
                     R"({"id":"a1","table_file":"tables/shop.csv","query":"Revenue per region?","hardness":"easy","vegazero":"mark bar encoding x region y aggregate sum revenue transform group x"})" "\n"
                     R"({"id":"a2","table":"tables/shop.csv","nl_query":"Orders per region?","difficulty":"Medium","vega_zero":"mark bar encoding x region y aggregate count region transform group x"})" "\n"
                     R"({"id":"a3","table_file":"tables/shop.csv","query":"Top region?","hardness":"hard","vegazero":"mark bar encoding x region y aggregate sum revenue transform group x sort y desc topk 1","extra":1})" "\n"
                     R"({"id":"a4","table_file":"tables/shop.csv","query":"Revenue by month?","hardness":"extra hard","vegazero":"mark line encoding x order_date y aggregate sum revenue transform bin x by month"})" "\n");
    return dir;
}

}  // namespace

TEST(Import, FourRecordsWithAlternativeKeys) {
    auto dir = four_record_corpus();
    auto r = corpus::import_corpus(dir / "index.jsonl");
    ASSERT_EQ(r.triples.size(), 4u);
    EXPECT_EQ(r.stats.size, 4u);
    EXPECT_EQ(r.stats.marks[vegazero::Mark::bar], 3u);
    EXPECT_EQ(r.stats.marks[vegazero::Mark::line], 1u);
    for (auto h : kHardnessLevels) EXPECT_EQ(r.stats.hardness[h], 1u);
    EXPECT_TRUE(r.stats.consistent());
    EXPECT_EQ(r.triples[1].query, "Orders per region?");
    EXPECT_EQ(r.triples[0].table, r.triples[3].table);  // tables are shared
    std::filesystem::remove_all(dir);
}

TEST(Import, ValidationAndParseFailuresAreCounted) {
    auto dir = four_record_corpus();
    util::append_line(dir / "index.jsonl",
                      R"({"id":"b1","table_file":"tables/shop.csv","query":"q","hardness":"easy","vegazero":"mark bar encoding x profit y aggregate sum revenue"})");
    util::append_line(dir / "index.jsonl",
                      R"({"id":"b2","table_file":"tables/shop.csv","query":"q","hardness":"easy","vegazero":"mark pie encoding x region y aggregate sum revenue"})");
    auto r = corpus::import_corpus(dir / "index.jsonl");
    EXPECT_EQ(r.triples.size(), 4u);
    EXPECT_EQ(r.stats.size, 6u);
    EXPECT_EQ(r.stats.validation_failures, 1u);
    EXPECT_EQ(r.stats.parse_failures, 1u);
    EXPECT_TRUE(r.stats.consistent());
    ASSERT_EQ(r.quarantine.size(), 2u);
    EXPECT_EQ(r.quarantine[0].id, "b1");
    EXPECT_EQ(r.quarantine[0].stage, "validate");
    std::filesystem::remove_all(dir);
}

TEST(Import, MalformedIndex) {
    auto dir = temp_dir("vrecs-corpus");
    util::write_file(dir / "index.jsonl", "not json\n");
    EXPECT_THROW(corpus::import_corpus(dir / "index.jsonl"), IndexMalformed);
    util::write_file(dir / "index.jsonl", R"({"id":"x","query":"q","hardness":"easy","vegazero":"v"})" "\n");
    EXPECT_THROW(corpus::import_corpus(dir / "index.jsonl"), IndexMalformed);
    util::write_file(dir / "index.jsonl",
                     R"({"id":"x","table_file":"t.csv","query":"q","hardness":"trivial","vegazero":"v"})" "\n");
    EXPECT_THROW(corpus::import_corpus(dir / "index.jsonl"), IndexMalformed);
    EXPECT_THROW(corpus::import_corpus(dir / "missing.jsonl"), IoError);
    std::filesystem::remove_all(dir);
}

TEST(Import, EmptyIndexGivesZeroStats) {
    auto dir = temp_dir("vrecs-corpus");
    util::write_file(dir / "index.jsonl", "");
    auto r = corpus::import_corpus(dir / "index.jsonl");
    EXPECT_TRUE(r.triples.empty());
    EXPECT_EQ(r.stats.size, 0u);
    EXPECT_TRUE(r.stats.consistent());
    auto j = corpus::to_json(r.stats);
    EXPECT_EQ(j["hardness"]["extra_hard"], 0);
    EXPECT_EQ(j["marks"]["arc"], 0);
    std::filesystem::remove_all(dir);
}

TEST(Import, MiniCorpusStatsAreConsistent) {
    const auto& r = testsupport::mini_corpus();
    EXPECT_EQ(r.stats.size, 60u);
    EXPECT_TRUE(r.quarantine.empty());
    EXPECT_TRUE(r.stats.consistent());
    std::size_t marks = 0;
    for (const auto& [m, n] : r.stats.marks) marks += n;
    EXPECT_EQ(marks, r.triples.size());
    for (auto h : kHardnessLevels) EXPECT_GT(r.stats.hardness.at(h), 0u);
}

TEST(Import, ExportThenReimportIsIdentity) {
    auto dir = temp_dir("vrecs-corpus");
    const auto& original = testsupport::mini_corpus().triples;
    corpus::export_corpus(original, dir);
    auto again = corpus::import_corpus(dir / "index.jsonl");
    ASSERT_EQ(again.triples.size(), original.size());
    for (std::size_t i = 0; i < original.size(); ++i) {
        EXPECT_EQ(again.triples[i].id, original[i].id);
        EXPECT_EQ(again.triples[i].spec, original[i].spec);
        EXPECT_EQ(again.triples[i].hardness, original[i].hardness);
        EXPECT_EQ(*again.triples[i].table, *original[i].table) << original[i].id;
    }
    std::filesystem::remove_all(dir);
}
