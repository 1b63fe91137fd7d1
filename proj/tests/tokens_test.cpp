#include <doctest.h>

#include <httplib.h>
#include <longbio/tokens.hpp>
#include <longbio/util.hpp>

#include <atomic>
#include <thread>

using namespace longbio;

TEST_SUITE("tokens") {
  TEST_CASE("chars counter rounds bytes up by four") {
    auto c = TokenCounter::make("chars");
    CHECK(c.count("") == 0);
    CHECK(c.count("aaaa") == 1);
    CHECK(c.count("aaaaa") == 2);
    CHECK(c.count(std::string(4096, 'x')) == 1024);
    CHECK(c.exact_incremental());
  }

  TEST_CASE("words counter applies the 1.3 factor") {
    auto c = TokenCounter::make("words");
    CHECK(c.count("") == 0);
    CHECK(c.count("   ") == 0);
    CHECK(c.count("one") == 2);               // ceil(1.3)
    CHECK(c.count("one two three") == 4);     // ceil(3.9)
    CHECK(c.count("a b c d e f g h i j") == 13);
    CHECK(c.count("spaced\n\nacross\tlines ok") == 6);  // 4 words
  }

  TEST_CASE("parts arithmetic matches direct counting") {
    const std::string text = "Alpha beta gamma.\n\nDelta epsilon!";
    for (const char* spec : {"chars", "words"}) {
      auto c = TokenCounter::make(spec);
      CHECK(c.count(text) == c.tokens_from_parts(int64_t(text.size()),
                                                 TokenCounter::words_in(text)));
    }
  }

  TEST_CASE("cmd counter round-trips through a shell command") {
    auto c = TokenCounter::make("cmd:wc -w");
    CHECK_FALSE(c.exact_incremental());
    CHECK(c.count("one two three") == 3);
    CHECK(c.count("") == 0);
  }

  TEST_CASE("cmd counter failure is reported") {
    auto c = TokenCounter::make("cmd:false");
    CHECK_THROWS_AS((void)c.count("x"), Error);
    auto garbled = TokenCounter::make("cmd:echo not-a-number");
    CHECK_THROWS_AS((void)garbled.count("x"), Error);
  }

  TEST_CASE("svc counter posts text and parses replies") {
    httplib::Server server;
    std::atomic<int> hits{0};
    server.Post("/count", [&](const httplib::Request& req, httplib::Response& res) {
      ++hits;
      res.set_content(std::to_string(req.body.size() / 2), "text/plain");
    });
    server.Post("/count_json", [&](const httplib::Request& req, httplib::Response& res) {
      res.set_content("{\"tokens\": " + std::to_string(req.body.size()) + "}",
                      "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    auto c = TokenCounter::make("svc:http://127.0.0.1:" + std::to_string(port) + "/count");
    CHECK(c.count("abcdef") == 3);
    auto j = TokenCounter::make("svc:http://127.0.0.1:" + std::to_string(port) + "/count_json");
    CHECK(j.count("abcd") == 4);
    CHECK(hits.load() == 1);

    server.stop();
    t.join();
  }

  TEST_CASE("svc counter errors when the service is down") {
    auto c = TokenCounter::make("svc:http://127.0.0.1:1/count");
    CHECK_THROWS_AS((void)c.count("x"), Error);
  }

  TEST_CASE("unknown specs are rejected") {
    CHECK_THROWS_AS((void)TokenCounter::make("bytes"), Error);
    CHECK_THROWS_AS((void)TokenCounter::make("cmd:"), Error);
    CHECK_THROWS_AS((void)TokenCounter::make("svc:"), Error);
  }
}
