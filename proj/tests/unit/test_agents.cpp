#include <gtest/gtest.h>

#include <fstream>

#include "../support/check.hpp"
#include "../support/fixtures.hpp"
#include "../support/generators.hpp"
#include "../support/stubs.hpp"
#include "polydoc/agents.hpp"
#include "polydoc/util.hpp"

using namespace polydoc;
using namespace polydoc::agents;
using namespace polydoc::testing;
using nlohmann::json;

namespace {

gateway::ModelEndpoint fake_endpoint() {
    gateway::ModelEndpoint e;
    e.base_url = "http://fake.invalid/v1";
    e.model_name = "fake";
    return e;
}

PipelineConfig variant(bool text, bool image, bool general_critical, size_t k = 4) {
    PipelineConfig c = PipelineConfig::with_defaults(fake_endpoint());
    c.k = k;
    c.enable_text_agent = text;
    c.enable_image_agent = image;
    c.enable_general_critical = general_critical;
    return c;
}

/// Corpus, embedder and indexes held together for pipeline runs.
struct World {
    TempDir dir{"agents"};
    ingest::Corpus corpus;
    FakeEmbedder emb;
    retrieval::Index text, image;
    std::unique_ptr<retrieval::Retriever> retriever;

    explicit World(int pages = 5) {
        corpus = synthetic_corpus(dir.path(), pages);
        text = retrieval::build_text_index(corpus, emb);
        image = retrieval::build_image_index(corpus, emb);
        retriever = std::make_unique<retrieval::Retriever>(corpus, text, image, emb, emb);
    }
};

const FakeChat::Call& call_for(const std::vector<FakeChat::Call>& calls, const std::string& role) {
    for (const auto& c : calls)
        if (c.role == role) return c;
    throw std::runtime_error("no call for " + role);
}

} // namespace

// ---------------------------------------------------------------------------
// Parsers

TEST(ParseCritical, TabulatedExamples) {
    EXPECT_EQ(parse_critical(R"({"text": "see table 3", "image": "page 2 chart"})"),
              (CriticalInfo{"see table 3", "page 2 chart"}));
    EXPECT_EQ(parse_critical(R"(Sure: {"text":"A","image":"B"} hope it helps)"), (CriticalInfo{"A", "B"}));
    EXPECT_EQ(parse_critical(R"({"text":"T","image":"I"})"), (CriticalInfo{"T", "I"}));
    EXPECT_EQ(parse_critical(R"({"text":"T"})"), (CriticalInfo{"T", ""}));
    EXPECT_EQ(parse_critical(R"({"image":"I"})"), (CriticalInfo{"", "I"}));
    EXPECT_EQ(parse_critical("[1,2]"), std::nullopt);
    EXPECT_EQ(parse_critical("no braces here"), std::nullopt);
    EXPECT_EQ(parse_critical(""), std::nullopt);
}

TEST(ParseCritical, HarderShapes) {
    EXPECT_EQ(parse_critical("{'text': 'A', 'image': 'B'}"), (CriticalInfo{"A", "B"}));
    EXPECT_EQ(parse_critical("```json\n{\"text\": \"x\", \"image\": \"y\"}\n```"), (CriticalInfo{"x", "y"}));
    EXPECT_EQ(parse_critical(R"({"text": "use {x}", "image": "}"})"), (CriticalInfo{"use {x}", "}"}));
    EXPECT_EQ(parse_critical(R"({"other": 1} then {"text": "X"})"), (CriticalInfo{"X", ""}));
    EXPECT_EQ(parse_critical(R"({"outer": {"text": "inner"}})"), (CriticalInfo{"inner", ""}));
    EXPECT_EQ(parse_critical(R"({"text": 5})"), std::nullopt);
    EXPECT_EQ(parse_critical(R"({"text": "a", "image": ["b"]})"), std::nullopt);
    EXPECT_EQ(parse_critical(R"({"text": "unterminated)"), std::nullopt);
    EXPECT_EQ(parse_critical("it's {'text': \"don't\", 'image': 'ok'}"), (CriticalInfo{"don't", "ok"}));
}

TEST(ParseAnswer, TabulatedExamples) {
    EXPECT_EQ(parse_answer(R"({"Answer": "42"})"), "42");
    EXPECT_EQ(parse_answer(R"(The result is {"Answer": "Paris"}.)"), "Paris");
    EXPECT_EQ(parse_answer(R"({"Answer": 42})"), "42");
    EXPECT_EQ(parse_answer(R"({"Answer": 42 apples})"), "42 apples");
    EXPECT_EQ(parse_answer("{'Answer': 'yes'}"), "yes");
    EXPECT_EQ(parse_answer(R"({"Answer": ""})"), "");
    EXPECT_EQ(parse_answer("unmarked prose"), std::nullopt);
    EXPECT_EQ(parse_answer(R"({"answer_text": "x"})"), std::nullopt);
}

TEST(ParseCorrectness, TabulatedExamples) {
    EXPECT_EQ(parse_correctness(R"({"correctness": 1})"), 1);
    EXPECT_EQ(parse_correctness(R"({"correctness": 0})"), 0);
    EXPECT_EQ(parse_correctness("I think it's right"), std::nullopt);
    EXPECT_EQ(parse_correctness(R"({"correctness": true})"), 1);
    EXPECT_EQ(parse_correctness(R"({"correctness": false})"), 0);
    EXPECT_EQ(parse_correctness(R"({"correctness": "1"})"), 1);
    EXPECT_EQ(parse_correctness("{'correctness': 0}"), 0);
    EXPECT_EQ(parse_correctness("```json\n{\"correctness\": 1}\n```"), 1);
    EXPECT_EQ(parse_correctness(R"({"correctness": 2})"), std::nullopt);
    EXPECT_EQ(parse_correctness(R"({"correctness": 0.5})"), std::nullopt);
    EXPECT_EQ(parse_correctness(R"({"correctness": "yes"})"), std::nullopt);
}

TEST(ParserFuzz, ProseAroundObjectsNeverChangesFields) {
    gen::Rng rng(51);
    for (int i = 0; i < 2000; ++i) {
        std::string t = gen::value_text(rng), im = gen::value_text(rng);
        json obj = json::object();
        bool with_t = gen::coin(rng, 0.8), with_i = !with_t || gen::coin(rng, 0.8);
        if (with_t) obj["text"] = t;
        if (with_i) obj["image"] = im;
        std::string pre = gen::safe_prefix(rng), post = gen::noise(rng);
        std::string reply = pre + obj.dump(gen::coin(rng) ? -1 : 2) + (gen::coin(rng) ? " " : "") + post;
        auto got = parse_critical(reply);
        ASSERT_TRUE(got) << reply;
        EXPECT_EQ(got->text_hint, with_t ? t : "") << reply;
        EXPECT_EQ(got->image_hint, with_i ? im : "") << reply;

        std::string ans = gen::value_text(rng);
        std::string areply = gen::safe_prefix(rng) + json{{"Answer", ans}}.dump() + gen::noise(rng);
        EXPECT_EQ(parse_answer(areply), ans) << areply;

        int v = static_cast<int>(gen::range(rng, 0, 1));
        std::string creply = gen::safe_prefix(rng) + json{{"correctness", v}}.dump() + gen::noise(rng);
        EXPECT_EQ(parse_correctness(creply), v) << creply;
    }
}

TEST(ParserFuzz, NoiseAloneNeverParses) {
    gen::Rng rng(52);
    for (int i = 0; i < 1000; ++i) {
        std::string s = gen::noise(rng) + gen::noise(rng);
        EXPECT_EQ(parse_critical(s), std::nullopt) << s;
        EXPECT_EQ(parse_correctness(s), std::nullopt) << s;
    }
}

// ---------------------------------------------------------------------------
// Prompts

TEST(Prompts, DefaultsAreNonEmptyAndDistinct) {
    std::set<std::string_view> seen;
    for (AgentRole r : kAllRoles) {
        EXPECT_FALSE(default_prompt(r).empty());
        EXPECT_TRUE(seen.insert(default_prompt(r)).second);
        EXPECT_EQ(role_from_string(to_string(r)), r);
    }
    EXPECT_EQ(role_from_string("judge"), std::nullopt);
    EXPECT_NE(default_prompt(AgentRole::Critical).find(R"({"text": )"), std::string_view::npos);
    EXPECT_NE(default_prompt(AgentRole::Summarizing).find("Answer"), std::string_view::npos);
}

TEST(Prompts, AssetsMatchShippedFiles) {
    const std::pair<AgentRole, const char*> files[] = {{AgentRole::General, "general"}, {AgentRole::Critical, "critical"},
                                                       {AgentRole::Text, "text"},       {AgentRole::Image, "image"},
                                                       {AgentRole::Summarizing, "summarizing"}};
    for (auto [role, name] : files) {
        std::string file = util::read_file(std::string(POLYDOC_SOURCE_DIR) + "/prompts/" + name + ".txt");
        EXPECT_EQ(util::trim(file), default_prompt(role)) << name;
    }
    std::string eval = util::read_file(std::string(POLYDOC_SOURCE_DIR) + "/prompts/evaluation.txt");
    EXPECT_EQ(util::trim(eval), default_evaluation_prompt());
}

TEST(Prompts, EvaluationSlotsFilledOnce) {
    std::string out = fill_evaluation_prompt("Q={question} A={answer} G={gt}", "what {answer}", "{gt}", "42");
    EXPECT_EQ(out, "Q=what {answer} A={gt} G=42");
    std::string real = fill_evaluation_prompt(default_evaluation_prompt(), "q?", "pred", "truth");
    EXPECT_NE(real.find("pred"), std::string::npos);
    EXPECT_EQ(real.find("{question}"), std::string::npos);
    EXPECT_EQ(real.find("{gt}"), std::string::npos);
}

// ---------------------------------------------------------------------------
// Single agents

class AgentTest : public ::testing::Test {
protected:
    World w;
    FakeChat chat;
    CallLog log;
    PipelineConfig cfg = variant(true, true, true);
    AgentContext ctx{cfg, chat, log};
};

TEST_F(AgentTest, GeneralOneCallWithOneTextBlockAndKImages) {
    auto r = w.retriever->retrieve("revenue chart", 4);
    chat.fixed["general"] = "prelim";
    EXPECT_EQ(run_general(ctx, "revenue chart", r.text_hits, r.image_hits), "prelim");
    ASSERT_EQ(chat.call_count(), 1u);
    ASSERT_EQ(log.entries().size(), 1u);
    EXPECT_EQ(log.entries()[0].role, "general");
    auto calls = chat.calls();
    const auto& msgs = calls[0].messages;
    ASSERT_EQ(msgs.size(), 2u);
    EXPECT_EQ(msgs[0].role, gateway::Role::System);
    ASSERT_EQ(msgs[1].parts.size(), 5u);
    EXPECT_TRUE(std::holds_alternative<gateway::TextPart>(msgs[1].parts[0]));
    EXPECT_EQ(image_part_count(msgs), 4u);
    std::string text = last_user_text(msgs);
    EXPECT_EQ(text.rfind("Question: revenue chart\n\nText context:\n[1] (doc, page ", 0), 0u) << text;
    EXPECT_NE(text.find(r.text_hits[3].segment.content), std::string::npos);
    EXPECT_NE(text.find("Page images (attached in this order):\n[1] (doc, page " +
                        std::to_string(r.image_hits[0].image.page_index) + ")"),
              std::string::npos);
    EXPECT_EQ(std::get<gateway::ImagePart>(msgs[1].parts[1]).data, util::read_file(r.image_hits[0].image.file_ref));
}

TEST_F(AgentTest, GeneralWithImagesOnly) {
    auto r = w.retriever->retrieve("q", 2);
    r.text_hits.clear();
    run_general(ctx, "q", r.text_hits, r.image_hits);
    auto msgs = chat.calls().at(0).messages;
    EXPECT_EQ(image_part_count(msgs), 2u);
    EXPECT_EQ(last_user_text(msgs).find("Text context"), std::string::npos);
}

TEST_F(AgentTest, CriticalParsesAndFallsBack) {
    auto r = w.retriever->retrieve("q", 1);
    chat.queued["critical"] = {R"({"text": "see table 3", "image": "page 2 chart"})"};
    bool fb = true;
    EXPECT_EQ(run_critical(ctx, "q", r.text_hits, r.image_hits, "a_G text", &fb), (CriticalInfo{"see table 3", "page 2 chart"}));
    EXPECT_FALSE(fb);
    EXPECT_NE(last_user_text(chat.calls()[0].messages).find("Preliminary answer:\na_G text"), std::string::npos);

    chat.queued["critical"] = {R"(Sure: {"text":"A","image":"B"} hope it helps)"};
    EXPECT_EQ(run_critical(ctx, "q", r.text_hits, r.image_hits, "g", &fb), (CriticalInfo{"A", "B"}));

    chat.queued["critical"] = {"no braces here", "no braces here"};
    EXPECT_EQ(run_critical(ctx, "q", r.text_hits, r.image_hits, "g", &fb), (CriticalInfo{"no braces here", "no braces here"}));
    EXPECT_TRUE(fb);
    auto calls = chat.calls();
    ASSERT_EQ(calls.size(), 4u);
    // The retry continues the conversation with the bad reply and a reminder.
    const auto& retry = calls[3].messages;
    ASSERT_EQ(retry.size(), 4u);
    EXPECT_EQ(retry[2].role, gateway::Role::Assistant);
    EXPECT_NE(last_user_text(retry).find("dictionary"), std::string::npos);
    EXPECT_TRUE(log.entries()[3].format_retry);
    EXPECT_FALSE(log.entries()[2].format_retry);
}

TEST_F(AgentTest, CriticalRecoversOnRetry) {
    chat.queued["critical"] = {"hmm", R"({"text": "t"})"};
    bool fb = true;
    EXPECT_EQ(run_critical(ctx, "q", {}, {}, "g", &fb), (CriticalInfo{"t", ""}));
    EXPECT_FALSE(fb);
    EXPECT_EQ(chat.call_count(), 2u);
}

TEST_F(AgentTest, TextAgentHintSection) {
    auto r = w.retriever->retrieve("q", 2);
    chat.fixed["text"] = "scripted text";
    EXPECT_EQ(run_text_agent(ctx, "q", r.text_hits, "look at part 1"), "scripted text");
    EXPECT_EQ(run_text_agent(ctx, "q", r.text_hits, ""), "scripted text");
    EXPECT_EQ(run_text_agent(ctx, "q", {}, "hint only"), "scripted text");
    auto calls = chat.calls();
    std::string with = last_user_text(calls[0].messages), without = last_user_text(calls[1].messages),
                hint_only = last_user_text(calls[2].messages);
    EXPECT_NE(with.find("Critical information:\nlook at part 1"), std::string::npos);
    EXPECT_EQ(without.find("ritical information"), std::string::npos);
    EXPECT_EQ(hint_only, "Question: q\n\nCritical information:\nhint only");
    EXPECT_EQ(image_part_count(calls[0].messages), 0u);
}

TEST_F(AgentTest, ImageAgentKOneAndNoHint) {
    auto r = w.retriever->retrieve("q", 1);
    chat.fixed["image"] = "scripted image";
    EXPECT_EQ(run_image_agent(ctx, "q", r.image_hits, ""), "scripted image");
    auto msgs = chat.calls()[0].messages;
    EXPECT_EQ(image_part_count(msgs), 1u);
    EXPECT_EQ(last_user_text(msgs).find("ritical information"), std::string::npos);
    EXPECT_EQ(last_user_text(msgs).find("Text context"), std::string::npos);
}

TEST_F(AgentTest, SummarizerExamples) {
    chat.queued["summarizing"] = {R"({"Answer": "42"})"};
    bool fb = true;
    EXPECT_EQ(run_summarizer(ctx, "q", std::string("only general"), std::nullopt, std::nullopt, &fb), "42");
    EXPECT_FALSE(fb);
    std::string block = last_user_text(chat.calls()[0].messages);
    EXPECT_EQ(block, "Question: q\n\nAnswers:\nGeneral agent:\nonly general");

    chat.queued["summarizing"] = {"plain prose answer", "still prose"};
    EXPECT_EQ(run_summarizer(ctx, "q", std::string("g"), std::string("t"), std::string("i"), &fb), "still prose");
    EXPECT_TRUE(fb);
    EXPECT_EQ(chat.call_count(), 3u);
    EXPECT_EQ(code_of([&] { run_summarizer(ctx, "q", std::nullopt, std::nullopt, std::nullopt, &fb); }),
              ErrorCode::ConfigInvalid);
}

TEST_F(AgentTest, ParamsAndEndpointPerRole) {
    cfg.agent(AgentRole::Text).params.max_new_tokens = 99;
    cfg.agent(AgentRole::Text).endpoint.model_name = "text-model";
    run_text_agent(ctx, "q", {}, "");
    EXPECT_EQ(chat.calls()[0].params.max_new_tokens, 99);
    EXPECT_NE(chat.calls()[0].endpoint.find("text-model"), std::string::npos);
}

// ---------------------------------------------------------------------------
// Pipeline

TEST(Pipeline, FullRunOrderHintsAndDataflow) {
    World w;
    FakeChat chat;
    chat.fixed = {{"general", "GEN-ANSWER"},
                  {"critical", R"({"text": "TEXT-HINT verbatim", "image": "IMAGE-HINT verbatim"})"},
                  {"text", "TEXT-ANSWER"},
                  {"image", "IMAGE-ANSWER"},
                  {"summarizing", R"({"Answer": "FINAL"})"}};
    QATranscript t = answer_question("growth margin", *w.retriever, variant(true, true, true), chat);
    ASSERT_FALSE(t.failure) << t.failure->message;
    EXPECT_EQ(chat.roles(), (std::vector<std::string>{"general", "critical", "text", "image", "summarizing"}));
    EXPECT_EQ(t.final_answer, "FINAL");
    ASSERT_TRUE(t.critical);
    EXPECT_EQ(t.critical->text_hint, "TEXT-HINT verbatim");
    auto calls = chat.calls();
    EXPECT_NE(last_user_text(call_for(calls, "text").messages).find("TEXT-HINT verbatim"), std::string::npos);
    EXPECT_NE(last_user_text(call_for(calls, "image").messages).find("IMAGE-HINT verbatim"), std::string::npos);
    EXPECT_EQ(last_user_text(call_for(calls, "text").messages).find("GEN-ANSWER"), std::string::npos);
    EXPECT_EQ(last_user_text(call_for(calls, "image").messages).find("GEN-ANSWER"), std::string::npos);

    const auto& s = call_for(calls, "summarizing").messages;
    std::string block = last_user_text(s);
    EXPECT_EQ(block, "Question: growth margin\n\nAnswers:\nGeneral agent:\nGEN-ANSWER\n\nText agent:\nTEXT-ANSWER\n\n"
                     "Image agent:\nIMAGE-ANSWER");
    EXPECT_EQ(image_part_count(s), 0u);
    for (const auto& h : t.retrieval.text_hits) EXPECT_EQ(block.find(h.segment.content), std::string::npos);

    ASSERT_EQ(t.call_log.size(), 5u);
    for (size_t i = 0; i < t.call_log.size(); ++i) EXPECT_EQ(t.call_log[i].seq, static_cast<int>(i) + 1);
    EXPECT_EQ(t.answers.at("general"), "GEN-ANSWER");
    EXPECT_EQ(t.answers.at("text"), "TEXT-ANSWER");
    EXPECT_EQ(t.answers.at("image"), "IMAGE-ANSWER");
    EXPECT_EQ(t.prompt_hashes.at("critical"), util::sha256_hex(default_prompt(AgentRole::Critical)));
}

TEST(Pipeline, AblationCallCountsAndSummarizerInputs) {
    World w;
    struct Case {
        bool text, image, gc;
        std::vector<std::string> roles;
        std::vector<std::string> present, absent;
    };
    const Case cases[] = {
        {true, true, true, {"general", "critical", "text", "image", "summarizing"}, {"General agent", "Text agent", "Image agent"}, {}},
        {false, true, true, {"general", "critical", "image", "summarizing"}, {"General agent", "Image agent"}, {"Text agent"}},
        {true, false, true, {"general", "critical", "text", "summarizing"}, {"General agent", "Text agent"}, {"Image agent"}},
        {true, true, false, {"text", "image", "summarizing"}, {"Text agent", "Image agent"}, {"General agent"}},
    };
    for (const auto& c : cases) {
        FakeChat chat;
        QATranscript t = answer_question("cost profit", *w.retriever, variant(c.text, c.image, c.gc), chat);
        EXPECT_EQ(chat.roles(), c.roles);
        EXPECT_EQ(t.call_log.size(), c.roles.size());
        std::string block = last_user_text(call_for(chat.calls(), "summarizing").messages);
        for (const auto& p : c.present) EXPECT_NE(block.find(p + ":\n"), std::string::npos) << block;
        for (const auto& a : c.absent) EXPECT_EQ(block.find(a), std::string::npos) << block;
        if (!c.gc) {
            EXPECT_FALSE(t.critical);
            EXPECT_EQ(last_user_text(call_for(chat.calls(), "text").messages).find("ritical information"), std::string::npos);
        }
    }
}

TEST(Pipeline, TranscriptIsByteIdenticalAcrossRuns) {
    World w;
    std::string first, second;
    for (std::string* out : {&first, &second}) {
        FakeChat chat;
        *out = to_json(answer_question("market share", *w.retriever, variant(true, true, true), chat)).dump();
    }
    EXPECT_EQ(first, second);
}

TEST(Pipeline, TranscriptJsonRoundTrip) {
    World w;
    FakeChat chat;
    chat.queued["critical"] = {"bad", "bad"};
    QATranscript t = answer_question("index", *w.retriever, variant(true, true, true, 2), chat, "doc");
    EXPECT_TRUE(t.critical_fallback);
    json j = to_json(t);
    EXPECT_EQ(to_json(transcript_from_json(j)), j);
    EXPECT_EQ(j["doc_id"], "doc");
    EXPECT_EQ(j["k"], 2);
    EXPECT_TRUE(j["critical_fallback"].get<bool>());
    EXPECT_EQ(j["call_log"].size(), 6u);
    EXPECT_TRUE(j["call_log"][2]["format_retry"].get<bool>());
    EXPECT_EQ(j["retrieval"]["text_hits"].size(), 2u);
}

TEST(Pipeline, GatewayFailureAbortsWithStage) {
    World w;
    FakeChat chat;
    chat.reply = [](const std::string& role, const auto&) -> std::string {
        if (role == "text") throw Error(ErrorCode::Transport, "connection refused");
        return "x";
    };
    chat.fixed = {{"critical", R"({"text": "a", "image": "b"})"}};
    QATranscript t = answer_question("q", *w.retriever, variant(true, true, true), chat);
    ASSERT_TRUE(t.failure);
    EXPECT_EQ(t.failure->stage, "text");
    EXPECT_EQ(t.failure->code, "Transport");
    EXPECT_NE(t.failure->message.find("text agent"), std::string::npos);
    EXPECT_FALSE(t.final_answer);
    EXPECT_EQ(t.call_log.size(), 2u);
    EXPECT_FALSE(t.completed());
}

TEST(Pipeline, RetrievalFailureRecorded) {
    World w;
    FakeEmbedder wrong("fake-embedder", 8);
    retrieval::Retriever bad(w.corpus, w.text, w.image, wrong, wrong);
    FakeChat chat;
    QATranscript t = answer_question("q", bad, variant(true, true, true), chat);
    ASSERT_TRUE(t.failure);
    EXPECT_EQ(t.failure->stage, "retrieval");
    EXPECT_EQ(t.failure->code, "DimensionMismatch");
    EXPECT_EQ(chat.call_count(), 0u);
}

TEST(Pipeline, InvalidConfigThrows) {
    World w;
    FakeChat chat;
    auto c = variant(true, true, true);
    c.k = 0;
    EXPECT_EQ(code_of([&] { answer_question("q", *w.retriever, c, chat); }), ErrorCode::ConfigInvalid);
    c = variant(false, false, false);
    EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::ConfigInvalid);
    c = variant(true, true, true);
    c.agent(AgentRole::Image).endpoint.base_url.clear();
    std::string msg;
    EXPECT_EQ(code_of([&] { c.validate(); }, &msg), ErrorCode::ConfigInvalid);
    EXPECT_NE(msg.find("image"), std::string::npos) << msg;
    EXPECT_EQ(chat.call_count(), 0u);
}

TEST(Pipeline, EmptyTextModalityStillRuns) {
    TempDir dir("agents-empty");
    StaticOcr blank;
    auto corpus = make_corpus(dir.path(), {{"d", {"", ""}}}, 36, &blank);
    FakeEmbedder emb;
    auto text = retrieval::build_text_index(corpus, emb);
    auto image = retrieval::build_image_index(corpus, emb);
    retrieval::Retriever r(corpus, text, image, emb, emb);
    FakeChat chat;
    QATranscript t = answer_question("q", r, variant(true, true, true), chat);
    EXPECT_TRUE(t.completed());
    EXPECT_TRUE(t.retrieval.text_index_empty);
    EXPECT_EQ(chat.call_count(), 5u);
    EXPECT_EQ(image_part_count(call_for(chat.calls(), "general").messages), 2u);
}
