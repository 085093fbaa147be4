#include <atomic>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "doctest.h"
#include "httplib.h"

#include "ctxdistill/backend.hpp"
#include "ctxdistill/cache.hpp"
#include "ctxdistill/context.hpp"
#include "ctxdistill/errors.hpp"
#include "ctxdistill/http_backend.hpp"
#include "ctxdistill/prompts.hpp"
#include "ctxdistill/retail.hpp"
#include "support/tempdir.hpp"

using namespace ctxdistill;
using namespace ctxdistill::gen;

namespace {

std::string seed_selection_prompt_for_rules() {
  std::vector<std::string> texts;
  for (int i = 0; i < 30; ++i) texts.emplace_back(retail::rule_text(i));
  return fill_template(seed_selection_template(),
                       {{"feedback", numbered_list(texts)}, {"examples section", ""}});
}

std::string query_generation_prompt_for(const std::vector<int>& rule_ids) {
  std::string selected;
  for (int id : rule_ids) {
    if (!selected.empty()) selected += "\n";
    selected += std::string(retail::rule_text(id));
  }
  return fill_template(query_generation_template(),
                       {{"selected feedback", selected}, {"examples section", ""}});
}

retail::RetailQuery senior_query() {
  retail::RetailQuery q;
  q.customer = retail::CustomerType::kSenior;
  q.membership_years = 4;
  q.cart = {{"Shoes", retail::ProductCategory::kClothing, 8500, 2},
            {"Jacket", retail::ProductCategory::kClothing, 6000, 1},
            {"Coffee Maker", retail::ProductCategory::kHome, 4500, 1}};
  return q;
}

}  // namespace

TEST_CASE("scripted model decomposes the rules corpus into all 30 rules") {
  auto model = generic_scripted_model();
  const std::string prompt =
      fill_template(decomposition_template(), {{"chunk", retail::rules_corpus_text()}});
  const BackendReply reply = model(Role::kInstruct, prompt, {});
  const auto units = parse_units(reply.text);
  REQUIRE(units.size() == 30);
  for (int i = 0; i < 30; ++i) CHECK(units[i] == retail::rule_text(i));
}

TEST_CASE("scripted model selects 3-5 guidelines deterministically per seed") {
  auto model = generic_scripted_model();
  const std::string prompt = seed_selection_prompt_for_rules();
  SamplingParams params;
  params.seed = 11;
  const BackendReply a = model(Role::kBase, prompt, params);
  const BackendReply b = model(Role::kBase, prompt, params);
  CHECK(a.text == b.text);
  CHECK(!a.text.empty());

  bool any_differs = false;
  for (std::uint64_t s = 12; s < 18; ++s) {
    SamplingParams other = params;
    other.seed = s;
    if (model(Role::kBase, prompt, other).text != a.text) any_differs = true;
  }
  CHECK(any_differs);
}

TEST_CASE("scripted model backtranslates selected rules into a satisfying query") {
  auto model = generic_scripted_model();
  for (const auto& rule_ids :
       std::vector<std::vector<int>>{{1, 20}, {10}, {16}, {12}, {8, 24}, {29}}) {
    const BackendReply reply =
        model(Role::kInstruct, query_generation_prompt_for(rule_ids), {});
    const auto parsed = retail::parse_rendered_query(reply.text);
    REQUIRE(parsed.has_value());
    for (int id : rule_ids) {
      CAPTURE(id);
      CHECK(retail::condition_holds(retail::canonical_rules()[id], *parsed));
    }
  }
}

TEST_CASE("scripted model verification matches exact rule applicability") {
  auto model = generic_scripted_model();
  const std::string rendered = retail::render_query(senior_query());
  const auto holds = retail::applicable_rules(senior_query(), retail::canonical_rules(),
                                              retail::ApplicabilityMode::kConditionHolds);
  for (int id : {0, 1, 17, 11, 20, 29}) {
    const std::string prompt = fill_template(
        verification_template(),
        {{"query", rendered}, {"unit", std::string(retail::rule_text(id))}});
    const BackendReply reply = model(Role::kInstruct, prompt, {});
    CHECK((reply.text.rfind("Yes", 0) == 0) == (holds.count(id) > 0));
  }
}

TEST_CASE("scripted model batched verification lists the applicable numbers") {
  auto model = generic_scripted_model();
  const std::string rendered = retail::render_query(senior_query());
  std::vector<std::string> batch = {std::string(retail::rule_text(0)),
                                    std::string(retail::rule_text(1)),
                                    std::string(retail::rule_text(17)),
                                    std::string(retail::rule_text(11))};
  const std::string prompt = fill_template(
      verification_batched_template(), {{"query", rendered}, {"units", numbered_list(batch)}});
  const BackendReply reply = model(Role::kInstruct, prompt, {});
  CHECK(reply.text == "2, 3");  // senior 15% and the $150 threshold apply
}

TEST_CASE("scripted rollouts price the query from the rules in the prompt") {
  auto model = generic_scripted_model();
  const auto truth = retail::compute_price(senior_query(), retail::canonical_rules());
  const std::string prompt = render_teacher_input(
      retail::render_query(senior_query()),
      {std::string(retail::rule_text(1)), std::string(retail::rule_text(20))});
  const BackendReply reply = model(Role::kInstruct, prompt, {});
  CHECK(retail::grade(reply.text, truth));
  CHECK(reply.text.find("Final Price: $214.20") != std::string::npos);
}

TEST_CASE("scripted rollouts degrade once distractor rules crowd the prompt") {
  auto model = generic_scripted_model();
  std::vector<std::string> context = {std::string(retail::rule_text(1)),
                                      std::string(retail::rule_text(20))};
  for (int id : {0, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}) {  // 11 rules that do not apply
    context.emplace_back(retail::rule_text(id));
  }
  const std::string prompt =
      render_teacher_input(retail::render_query(senior_query()), context);
  const BackendReply reply = model(Role::kInstruct, prompt, {});
  // The overloaded teacher loses the senior 15% total discount: only the
  // clothing 10% survives, so 230 -> 207, plus 45 home, gives $252.00.
  CHECK(reply.text.find("Final Price: $252.00") != std::string::npos);
  CHECK(!retail::grade(reply.text, retail::compute_price(senior_query(),
                                                         retail::canonical_rules())));
}

TEST_CASE("scripted rollouts attach a coherent top-logprobs channel on demand") {
  auto model = generic_scripted_model();
  const std::string prompt = render_teacher_input(retail::render_query(senior_query()),
                                                  {std::string(retail::rule_text(1))});
  SamplingParams params;
  params.top_logprobs = 3;
  const BackendReply reply = model(Role::kInstruct, prompt, params);
  REQUIRE(reply.logprobs.size() == reply.text.size());
  for (std::size_t i = 0; i < reply.logprobs.size(); ++i) {
    const auto& tok = reply.logprobs[i];
    CHECK(tok.token == std::string(1, reply.text[i]));
    REQUIRE(!tok.top.empty());
    CHECK(tok.top.size() <= 3);
    CHECK(tok.top[0].first == tok.token);  // emitted char carries the top mass
    double mass = 0.0;
    for (const auto& [t, lp] : tok.top) {
      CHECK(lp <= 0.0);
      mass += std::exp(lp);
    }
    CHECK(mass <= 1.0 + 1e-9);
  }
}

TEST_CASE("request cache serves identical requests from disk") {
  testsupport::TempDir tmp("cache");
  auto inner = std::make_shared<ScriptedBackend>(
      [](Role, const std::string& prompt, const SamplingParams& p) {
        return BackendReply{"reply to " + prompt + "/" + std::to_string(p.seed)};
      });
  CachingBackend cached(inner, tmp.path());

  SamplingParams params;
  params.seed = 1;
  const auto first = cached.complete(Role::kInstruct, "hello", params);
  const auto second = cached.complete(Role::kInstruct, "hello", params);
  CHECK(first.text == second.text);
  CHECK(inner->request_count() == 1);
  CHECK(cached.hit_count() == 1);
  CHECK(cached.miss_count() == 1);

  params.seed = 2;  // any sampling-parameter change is a different request
  cached.complete(Role::kInstruct, "hello", params);
  CHECK(inner->request_count() == 2);

  cached.complete(Role::kBase, "hello", params);  // role is part of the key
  CHECK(inner->request_count() == 3);
}

TEST_CASE("request cache persists across backend instances") {
  testsupport::TempDir tmp("cache-persist");
  SamplingParams params;
  params.top_logprobs = 2;
  BackendReply canned{"text"};
  canned.logprobs.push_back({"t", {{"t", -0.1}, {"x", -2.5}}});
  {
    auto inner = std::make_shared<ScriptedBackend>(
        [&](Role, const std::string&, const SamplingParams&) { return canned; });
    CachingBackend cached(inner, tmp.path());
    cached.complete(Role::kInstruct, "prompt", params);
  }
  auto inner2 = std::make_shared<ScriptedBackend>(
      [](Role, const std::string&, const SamplingParams&) {
        return BackendReply{"should never be called"};
      });
  CachingBackend warm(inner2, tmp.path());
  const auto reply = warm.complete(Role::kInstruct, "prompt", params);
  CHECK(inner2->request_count() == 0);
  CHECK(reply.text == "text");
  REQUIRE(reply.logprobs.size() == 1);
  REQUIRE(reply.logprobs[0].top.size() == 2);
  CHECK(reply.logprobs[0].top[1].first == "x");
  CHECK(reply.logprobs[0].top[1].second == doctest::Approx(-2.5));
}

TEST_CASE("concurrent identical requests hit the inner backend once") {
  testsupport::TempDir tmp("cache-conc");
  std::atomic<int> slow_calls{0};
  auto inner = std::make_shared<ScriptedBackend>(
      [&](Role, const std::string&, const SamplingParams&) {
        ++slow_calls;
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
        return BackendReply{"slow"};
      });
  CachingBackend cached(inner, tmp.path());
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&cached] {
      const auto reply = cached.complete(Role::kInstruct, "same", {});
      CHECK(reply.text == "slow");
    });
  }
  for (auto& t : threads) t.join();
  CHECK(slow_calls.load() == 1);
  CHECK(cached.hit_count() == 7);
}

TEST_CASE("chat-completions request body carries the sampling parameters") {
  SamplingParams params;
  params.temperature = 0.25;
  params.max_tokens = 77;
  params.seed = 42;
  params.stop = {"\n\n"};
  params.top_logprobs = 5;
  const auto body = nlohmann::json::parse(chat_completions_body("m1", "the prompt", params));
  CHECK(body.at("model") == "m1");
  CHECK(body.at("messages").at(0).at("role") == "user");
  CHECK(body.at("messages").at(0).at("content") == "the prompt");
  CHECK(body.at("temperature").get<double>() == doctest::Approx(0.25));
  CHECK(body.at("max_tokens") == 77);
  CHECK(body.at("seed") == 42);
  CHECK(body.at("stop").at(0) == "\n\n");
  CHECK(body.at("logprobs") == true);
  CHECK(body.at("top_logprobs") == 5);
}

TEST_CASE("chat-completions responses parse content and the logprobs channel") {
  const std::string body = R"({"choices":[{"message":{"content":"hi"},
    "logprobs":{"content":[{"token":"h","top_logprobs":[{"token":"h","logprob":-0.1},
    {"token":"x","logprob":-3.0}]},{"token":"i","top_logprobs":[{"token":"i","logprob":-0.2}]}]}}]})";
  const BackendReply reply = parse_chat_completions_response(body);
  CHECK(reply.text == "hi");
  REQUIRE(reply.logprobs.size() == 2);
  CHECK(reply.logprobs[0].top[1].first == "x");
  CHECK_THROWS_AS(parse_chat_completions_response("not json"), BackendError);
  CHECK_THROWS_AS(parse_chat_completions_response(R"({"choices":[]})"), BackendError);
}

TEST_CASE("http backend requires the named key variable and sends the bearer token") {
  HttpBackendConfig config;
  config.api_key_env = "CTXDISTILL_TEST_MISSING_KEY";
  ::unsetenv("CTXDISTILL_TEST_MISSING_KEY");
  config.endpoint = "http://127.0.0.1:1/v1/chat/completions";
  CHECK_THROWS_AS(HttpBackend{config}, ConfigError);

  httplib::Server server;
  std::string seen_auth;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    res.set_content(R"({"choices":[{"message":{"content":"pong"}}]})", "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread server_thread([&server] { server.listen_after_bind(); });
  server.wait_until_ready();

  ::setenv("CTXDISTILL_TEST_KEY", "sekrit-from-env", 1);
  HttpBackendConfig live;
  live.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  live.model = "test-model";
  live.api_key_env = "CTXDISTILL_TEST_KEY";
  live.backoff_base_ms = 5;
  HttpBackend backend(live);
  const BackendReply reply = backend.complete(Role::kInstruct, "ping", {});
  CHECK(reply.text == "pong");
  CHECK(seen_auth == "Bearer sekrit-from-env");

  server.stop();
  server_thread.join();
}

TEST_CASE("http backend retries 5xx with backoff and fails fast on 4xx") {
  httplib::Server server;
  std::atomic<int> calls{0};
  server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    const int n = ++calls;
    if (n <= 2) {
      res.status = 503;
      res.set_content("overloaded", "text/plain");
    } else {
      res.set_content(R"({"choices":[{"message":{"content":"recovered"}}]})",
                      "application/json");
    }
  });
  server.Post("/bad", [](const httplib::Request&, httplib::Response& res) {
    res.status = 400;
    res.set_content("bad request", "text/plain");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread server_thread([&server] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpBackendConfig config;
  config.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  config.backoff_base_ms = 5;
  config.max_retries = 3;
  HttpBackend backend(config);
  CHECK(backend.complete(Role::kInstruct, "p", {}).text == "recovered");
  CHECK(calls.load() == 3);

  HttpBackendConfig bad = config;
  bad.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/bad";
  HttpBackend bad_backend(bad);
  CHECK_THROWS_AS(bad_backend.complete(Role::kInstruct, "p", {}), BackendError);

  HttpBackendConfig dead = config;
  dead.endpoint = "http://127.0.0.1:1/v1/chat/completions";  // nothing listens here
  dead.max_retries = 1;
  HttpBackend dead_backend(dead);
  CHECK_THROWS_AS(dead_backend.complete(Role::kInstruct, "p", {}), BackendError);

  server.stop();
  server_thread.join();
}

TEST_CASE("backend replies serialize losslessly") {
  BackendReply reply{"text body"};
  reply.logprobs.push_back({"a", {{"a", -0.5}, {"b", -1.25}}});
  const auto j = reply_to_json(reply);
  const BackendReply back = reply_from_json(j);
  CHECK(back.text == reply.text);
  REQUIRE(back.logprobs.size() == 1);
  CHECK(back.logprobs[0].token == "a");
  CHECK(back.logprobs[0].top[1].second == doctest::Approx(-1.25));
}
