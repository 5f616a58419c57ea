#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <thread>

#include <opencv2/imgcodecs.hpp>

#include "../support/check.hpp"
#include "../support/pdf_writer.hpp"
#include "../support/stubs.hpp"
#include "polydoc/gateway.hpp"
#include "polydoc/util.hpp"

using namespace polydoc;
using namespace polydoc::gateway;
using namespace polydoc::testing;
using nlohmann::json;
using SteadyClock = std::chrono::steady_clock;

namespace {

std::vector<ChatMessage> hello() { return {ChatMessage::system("sys"), ChatMessage::user({TextPart{"hi"}})}; }

std::string png_of(int w, int h) {
    cv::Mat m(h, w, CV_8UC3, cv::Scalar(10, 200, 30));
    std::vector<uchar> out;
    cv::imencode(".png", m, out);
    return {out.begin(), out.end()};
}

double seconds_since(SteadyClock::time_point t) { return std::chrono::duration<double>(SteadyClock::now() - t).count(); }

} // namespace

TEST(ChatRequest, TextOnlyUserMessageIsAString) {
    ModelEndpoint e;
    e.model_name = "m";
    json body = build_chat_request(e, hello(), {});
    EXPECT_EQ(body["model"], "m");
    EXPECT_EQ(body["max_tokens"], 256);
    EXPECT_FALSE(body.contains("temperature"));
    ASSERT_EQ(body["messages"].size(), 2u);
    EXPECT_EQ(body["messages"][0], (json{{"role", "system"}, {"content", "sys"}}));
    EXPECT_EQ(body["messages"][1], (json{{"role", "user"}, {"content", "hi"}}));
}

TEST(ChatRequest, ImagesBecomeDataUrlParts) {
    ModelEndpoint e;
    e.extra_body = {{"max_pixels", 16384}, {"top_p", 0.5}};
    GenerationParams p;
    p.max_new_tokens = 17;
    p.temperature = 0.0;
    std::string png = png_of(3, 2);
    json body = build_chat_request(e, {ChatMessage::user({TextPart{"look"}, ImagePart{png}, ImagePart{png}})}, p);
    const json& content = body["messages"][0]["content"];
    ASSERT_TRUE(content.is_array());
    ASSERT_EQ(content.size(), 3u);
    EXPECT_EQ(content[0], (json{{"type", "text"}, {"text", "look"}}));
    EXPECT_EQ(content[1]["type"], "image_url");
    EXPECT_EQ(content[1]["image_url"]["url"], "data:image/png;base64," + util::base64_encode(png));
    EXPECT_EQ(body["max_tokens"], 17);
    EXPECT_EQ(body["temperature"], 0.0);
    EXPECT_EQ(body["max_pixels"], 16384);
    EXPECT_EQ(body["top_p"], 0.5);
}

TEST(ChatRequest, Rejections) {
    ModelEndpoint e;
    EXPECT_EQ(code_of([&] { build_chat_request(e, {}, {}); }), ErrorCode::ConfigInvalid);
    ChatMessage sys_img{Role::System, {ImagePart{"x"}}};
    EXPECT_EQ(code_of([&] { build_chat_request(e, {sys_img}, {}); }), ErrorCode::ConfigInvalid);
    EXPECT_EQ(code_of([&] { build_chat_request(e, {ChatMessage::user({})}, {}); }), ErrorCode::ConfigInvalid);
}

TEST(ChatRequest, DownscalesLargeImages) {
    ModelEndpoint e;
    e.max_image_pixels = 100;
    std::string big = png_of(40, 20);
    json body = build_chat_request(e, {ChatMessage::user({TextPart{"x"}, ImagePart{big}})}, {});
    std::string url = body["messages"][0]["content"][1]["image_url"]["url"];
    auto data = util::base64_decode(url.substr(url.find(',') + 1));
    ASSERT_TRUE(data);
    RgbImage img = decode_png(*data);
    EXPECT_LE(img.width * img.height, 100);
    EXPECT_NEAR(static_cast<double>(img.width) / img.height, 2.0, 0.5);
    EXPECT_EQ(downscale_image(big, 10000), big);
    EXPECT_EQ(downscale_image("not an image", 10), "not an image");
}

TEST(ChatResponse, Parsing) {
    EXPECT_EQ(parse_chat_response(R"({"choices":[{"message":{"content":"OK"}}]})"), "OK");
    EXPECT_EQ(parse_chat_response(R"({"choices":[{"message":{"content":[{"type":"text","text":"A"},{"type":"text","text":"B"}]}}]})"),
              "AB");
    EXPECT_EQ(code_of([] { parse_chat_response(R"({"choices":[{"message":{"content":"  "}}]})"); }), ErrorCode::EmptyCompletion);
    EXPECT_EQ(code_of([] { parse_chat_response(R"({"choices":[{"message":{"content":null}}]})"); }), ErrorCode::EmptyCompletion);
    EXPECT_EQ(code_of([] { parse_chat_response(R"({"choices":[]})"); }), ErrorCode::EmptyCompletion);
    EXPECT_EQ(code_of([] { parse_chat_response("<html>"); }), ErrorCode::ShapeError);
    EXPECT_EQ(code_of([] { parse_chat_response(R"([1])"); }), ErrorCode::ShapeError);
}

// ---------------------------------------------------------------------------

TEST(Retry, BackoffIsSeededAndBounded) {
    ModelEndpoint e;
    e.timeout_s = 100;
    e.max_retries = 4;
    e.backoff_initial_s = 1;
    e.backoff_max_s = 3;
    auto run = [&](uint64_t seed) {
        std::vector<double> sleeps;
        RetryPolicyOptions o;
        o.seed = seed;
        auto t = SteadyClock::now();
        o.clock = [&] { return t; };
        o.sleep = [&](std::chrono::duration<double> d) { sleeps.push_back(d.count()); };
        int retries = -1;
        int n = 0;
        auto r = call_with_retries(e, o, [&](double) { return HttpResponse{++n < 5 ? 503 : 200, "ok"}; }, &retries);
        EXPECT_EQ(r.status, 200);
        EXPECT_EQ(retries, 4);
        return sleeps;
    };
    auto a = run(7), b = run(7), c = run(8);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
    ASSERT_EQ(a.size(), 4u);
    double caps[] = {1, 2, 3, 3};
    for (size_t i = 0; i < a.size(); ++i) {
        EXPECT_GE(a[i], caps[i] * 0.5);
        EXPECT_LE(a[i], caps[i]);
    }
}

TEST(Retry, NonTransientStatusIsImmediate) {
    ModelEndpoint e;
    e.max_retries = 3;
    RetryPolicyOptions o;
    o.sleep = [](auto) {};
    int n = 0;
    std::string msg;
    try {
        call_with_retries(e, o, [&](double) { ++n; return HttpResponse{401, "denied"}; }, nullptr);
        FAIL();
    } catch (const Error& err) {
        EXPECT_EQ(err.code(), ErrorCode::ApiError);
        EXPECT_EQ(err.http_status(), 401);
        EXPECT_EQ(err.body(), "denied");
    }
    EXPECT_EQ(n, 1);
}

TEST(Retry, ExhaustedStatusAndTransport) {
    ModelEndpoint e;
    e.max_retries = 2;
    RetryPolicyOptions o;
    o.sleep = [](auto) {};
    int n = 0;
    try {
        call_with_retries(e, o, [&](double) { ++n; return HttpResponse{500, ""}; }, nullptr);
        FAIL();
    } catch (const Error& err) {
        EXPECT_EQ(err.code(), ErrorCode::ApiError);
        EXPECT_EQ(err.http_status(), 500);
    }
    EXPECT_EQ(n, 3);
    n = 0;
    int retries = -1;
    EXPECT_EQ(code_of([&] {
                  call_with_retries(
                      e, o, [&](double) -> HttpResponse { ++n; throw Error(ErrorCode::Transport, "refused"); }, &retries);
              }),
              ErrorCode::Transport);
    EXPECT_EQ(n, 3);
    EXPECT_EQ(retries, 2);
}

TEST(Retry, DeadlineStopsFurtherAttempts) {
    ModelEndpoint e;
    e.timeout_s = 1;
    e.max_retries = 5;
    e.backoff_initial_s = 0.1;
    RetryPolicyOptions o;
    auto t = SteadyClock::now();
    o.clock = [&] { return t; };
    o.sleep = [&](std::chrono::duration<double> d) { t += std::chrono::duration_cast<SteadyClock::duration>(d); };
    std::vector<double> budgets;
    EXPECT_EQ(code_of([&] {
                  call_with_retries(
                      e, o,
                      [&](double budget) -> HttpResponse {
                          budgets.push_back(budget);
                          t += std::chrono::duration_cast<SteadyClock::duration>(std::chrono::duration<double>(budget));
                          throw Error(ErrorCode::Transport, "timed out");
                      },
                      nullptr);
              }),
              ErrorCode::Transport);
    double total = 0;
    for (double b : budgets) total += b;
    EXPECT_LE(budgets.size(), 6u);
    EXPECT_LE(total, 6.0 + 1e-9);
    for (double b : budgets) EXPECT_LE(b, 1.0);
}

// ---------------------------------------------------------------------------

TEST(HttpChat, EchoContract) {
    ChatStub stub;
    stub.set_reply("custom", "OK");
    HttpChatBackend backend;
    ChatResult r = backend.complete(stub.endpoint(), hello(), {});
    EXPECT_EQ(r.text, "OK");
    EXPECT_EQ(r.meta.retry_count, 0);
    EXPECT_EQ(r.meta.http_status, 200);
    EXPECT_EQ(r.meta.endpoint, stub.endpoint().label());
    auto reqs = stub.requests();
    ASSERT_EQ(reqs.size(), 1u);
    EXPECT_EQ(reqs[0].body["model"], "stub-model");
    EXPECT_EQ(reqs[0].authorization, "");
}

TEST(HttpChat, RetryAfter429) {
    ChatStub stub;
    stub.queue("custom", {429, "", "", 0});
    stub.set_reply("custom", "OK");
    HttpChatBackend backend;
    ChatResult r = backend.complete(stub.endpoint(), hello(), {});
    EXPECT_EQ(r.text, "OK");
    EXPECT_EQ(r.meta.retry_count, 1);
    EXPECT_EQ(backend.attempts(), 2u);
}

TEST(HttpChat, NeverRespondingServerIsTransport) {
    ChatStub stub;
    stub.set_reply("custom", "late");
    stub.queue("custom", {200, "late", "", 1.5});
    auto e = stub.endpoint();
    e.timeout_s = 0.3;
    e.max_retries = 0;
    HttpChatBackend backend;
    auto t = SteadyClock::now();
    EXPECT_EQ(code_of([&] { backend.complete(e, hello(), {}); }), ErrorCode::Transport);
    EXPECT_LT(seconds_since(t), 1.0);
}

TEST(HttpChat, WholeCallBoundedByRetryBudget) {
    ChatStub stub;
    for (int i = 0; i < 3; ++i) stub.queue("custom", {200, "late", "", 1.0});
    auto e = stub.endpoint();
    e.timeout_s = 0.25;
    e.max_retries = 2;
    HttpChatBackend backend;
    auto t = SteadyClock::now();
    EXPECT_EQ(code_of([&] { backend.complete(e, hello(), {}); }), ErrorCode::Transport);
    // (max_retries + 1) x timeout, plus scheduling slack.
    EXPECT_LT(seconds_since(t), 3 * 0.25 + 0.4);
}

TEST(HttpChat, ApiErrorsAndBadBodies) {
    ChatStub stub;
    stub.queue("custom", {400, "", "", 0});
    stub.queue("custom", {200, "", R"({"choices": [{"message": {"content": ""}}]})", 0});
    stub.queue("custom", {200, "", "not json", 0});
    HttpChatBackend backend;
    EXPECT_EQ(code_of([&] { backend.complete(stub.endpoint(), hello(), {}); }), ErrorCode::ApiError);
    EXPECT_EQ(code_of([&] { backend.complete(stub.endpoint(), hello(), {}); }), ErrorCode::EmptyCompletion);
    EXPECT_EQ(code_of([&] { backend.complete(stub.endpoint(), hello(), {}); }), ErrorCode::ShapeError);
}

TEST(HttpChat, UnreachableIsTransport) {
    ModelEndpoint e;
    e.base_url = "http://127.0.0.1:1/v1";
    e.timeout_s = 1;
    e.max_retries = 1;
    e.backoff_initial_s = 0.01;
    HttpChatBackend backend;
    EXPECT_EQ(code_of([&] { backend.complete(e, hello(), {}); }), ErrorCode::Transport);
    EXPECT_EQ(backend.attempts(), 2u);
}

TEST(HttpChat, BearerFromEnvironmentNeverInLabel) {
    ChatStub stub;
    ::setenv("POLYDOC_TEST_KEY", "sk-test-secret-123", 1);
    auto e = stub.endpoint();
    e.api_key_env = "POLYDOC_TEST_KEY";
    HttpChatBackend backend;
    ChatResult r = backend.complete(e, hello(), {});
    EXPECT_EQ(stub.requests().at(0).authorization, "Bearer sk-test-secret-123");
    EXPECT_EQ(r.meta.endpoint.find("sk-test"), std::string::npos);
    EXPECT_EQ(e.label().find("sk-test"), std::string::npos);
    e.api_key_env = "POLYDOC_TEST_KEY_UNSET";
    ::unsetenv("POLYDOC_TEST_KEY_UNSET");
    EXPECT_EQ(code_of([&] { backend.complete(e, hello(), {}); }), ErrorCode::ConfigInvalid);
    EXPECT_EQ(stub.request_count(), 1u);
}

TEST(HttpChat, PerEndpointConcurrencyLimit) {
    ChatStub stub;
    std::atomic<int> in_flight{0}, peak{0};
    stub.fallback = [&](const std::string&, const json&) {
        int now = ++in_flight;
        int p = peak.load();
        while (now > p && !peak.compare_exchange_weak(p, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(60));
        --in_flight;
        return ScriptedReply{200, "ok", "", 0};
    };
    auto e = stub.endpoint();
    e.max_concurrency = 1;
    HttpChatBackend backend;
    std::vector<std::thread> threads;
    for (int i = 0; i < 3; ++i) threads.emplace_back([&] { backend.complete(e, hello(), {}); });
    for (auto& t : threads) t.join();
    EXPECT_EQ(peak.load(), 1);
    EXPECT_EQ(stub.request_count(), 3u);
}

// ---------------------------------------------------------------------------

TEST(Sidecar, FixedMatricesOrderPreserved) {
    SidecarStub stub("fixed", 4);
    stub.text_embed = [](const std::string& t, const std::string&) {
        float tag = static_cast<float>(t.size());
        return retrieval::TokenEmbeddingMatrix(2, 4, {tag, 0, 0, 0, 0, tag, 0, 0});
    };
    SidecarClient client(stub.endpoint());
    auto mats = client.embed_texts({"a", "bbb", "cc"}, retrieval::EmbedKind::Document);
    ASSERT_EQ(mats.size(), 3u);
    for (const auto& m : mats) {
        EXPECT_EQ(m.rows(), 2u);
        EXPECT_EQ(m.dim(), 4u);
    }
    EXPECT_EQ(mats[0].row(0)[0], 1.0f);
    EXPECT_EQ(mats[1].row(0)[0], 3.0f);
    EXPECT_EQ(mats[2].row(1)[1], 2.0f);
    auto info = client.info();
    EXPECT_EQ(info.embedder_id, "fixed");
    EXPECT_EQ(info.dim, 4u);
}

TEST(Sidecar, ImagesAndOcr) {
    SidecarStub stub;
    stub.ocr = [](const std::string& png) { return png == "PNGBYTES" ? std::string("Total: 42") : std::string(); };
    SidecarClient client(stub.endpoint());
    auto mats = client.embed_images({"one", "two"});
    ASSERT_EQ(mats.size(), 2u);
    EXPECT_EQ(mats[0], bytes_embedding("one", 16));
    EXPECT_EQ(client.ocr("PNGBYTES"), "Total: 42");
    EXPECT_EQ(client.ocr("blank"), "");
    EXPECT_EQ(stub.paths(), (std::vector<std::string>{"/embed/image", "/ocr", "/ocr"}));
}

TEST(Sidecar, ShapeViolations) {
    SidecarStub stub;
    SidecarClient client(stub.endpoint());
    stub.raw_replies.push_back({{"embedder_id", "x"}, {"dim", 4}, {"matrices", json::array({json::array()})}});
    EXPECT_EQ(code_of([&] { client.embed_texts({"a"}, retrieval::EmbedKind::Query); }), ErrorCode::ShapeError);
    stub.raw_replies.push_back({{"embedder_id", "x"}, {"dim", 2}, {"matrices", json::array({{{1, 2}}})}});
    EXPECT_EQ(code_of([&] { client.embed_texts({"a", "b"}, retrieval::EmbedKind::Query); }), ErrorCode::ShapeError);
    stub.raw_replies.push_back({{"embedder_id", "x"}, {"dim", 2}, {"matrices", json::array({{{1, 2}, {3}}})}});
    EXPECT_EQ(code_of([&] { client.embed_texts({"a"}, retrieval::EmbedKind::Query); }), ErrorCode::ShapeError);
    stub.raw_replies.push_back({{"embedder_id", "x"}, {"dim", 3}, {"matrices", json::array({{{1, 2}}})}});
    EXPECT_EQ(code_of([&] { client.embed_texts({"a"}, retrieval::EmbedKind::Query); }), ErrorCode::ShapeError);
    stub.raw_replies.push_back({{"embedder_id", "x"}});
    EXPECT_EQ(code_of([&] { client.embed_texts({"a"}, retrieval::EmbedKind::Query); }), ErrorCode::ShapeError);
    EXPECT_EQ(code_of([&] { client.embed_texts({}, retrieval::EmbedKind::Query); }), ErrorCode::ConfigInvalid);
}

TEST(Sidecar, DownServerIsTransport) {
    ModelEndpoint e;
    e.base_url = "http://127.0.0.1:1/v1";
    e.timeout_s = 1;
    e.max_retries = 0;
    SidecarClient client(e);
    EXPECT_EQ(code_of([&] { client.info(); }), ErrorCode::Transport);
}
