#pragma once

// In-process stand-in for the model adapter service. Serves the same JSON
// endpoints the primary talks to, backed by local scorers and tokenizers.

#include <atomic>
#include <functional>
#include <string>
#include <thread>

#include <httplib.h>

#include "domainbench/eval.hpp"
#include "domainbench/tokens.hpp"
#include "domainbench/util.hpp"

namespace testsupport {

using domainbench::json;

class MockAdapter {
 public:
  MockAdapter() { port_ = server_.bind_to_any_port("127.0.0.1"); }
  ~MockAdapter() { stop(); }
  MockAdapter(const MockAdapter&) = delete;
  MockAdapter& operator=(const MockAdapter&) = delete;

  httplib::Server& server() { return server_; }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

  void start() {
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  void stop() {
    if (thread_.joinable()) {
      server_.stop();
      thread_.join();
    }
  }

  static void reply(httplib::Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  /// /info, /score, /topk and /tokenize backed by a local scorer and tokenizer.
  void serve_model(const domainbench::eval::Scorer& scorer, const domainbench::tokens::Tokenizer& tokenizer) {
    server_.Get("/info", [&](const httplib::Request&, httplib::Response& res) {
      reply(res, {{"model_id", scorer.model_id()},
                  {"vocab_size", scorer.vocab_size()},
                  {"context_limit", scorer.context_limit()},
                  {"tokenizer_id", tokenizer.id()}});
    });
    server_.Post("/score", [&](const httplib::Request& req, httplib::Response& res) {
      const auto body = json::parse(req.body);
      const auto prefix = body.at("prefix_ids").get<std::vector<domainbench::tokens::TokenId>>();
      const auto query = body.at("query_ids").get<std::vector<domainbench::tokens::TokenId>>();
      if (prefix.size() >= scorer.context_limit()) return reply(res, {{"error", "context overflow"}}, 413);
      const auto r = scorer.score(prefix, query);
      reply(res, {{"ranks", r.ranks}, {"probs", r.probs}});
    });
    server_.Post("/topk", [&](const httplib::Request& req, httplib::Response& res) {
      const auto body = json::parse(req.body);
      const auto prefix = body.at("prefix_ids").get<std::vector<domainbench::tokens::TokenId>>();
      const auto t = scorer.topk(prefix, body.at("k").get<std::size_t>());
      reply(res, {{"ids", t.ids}, {"probs", t.probs}});
    });
    serve_tokenizer(tokenizer, false);
  }

  /// /tokenize and, unless a model already provides it, /info.
  void serve_tokenizer(const domainbench::tokens::Tokenizer& tokenizer, bool with_info = true) {
    if (with_info) {
      server_.Get("/info", [&](const httplib::Request&, httplib::Response& res) {
        reply(res, {{"tokenizer_id", tokenizer.id()}, {"vocab_size", tokenizer.vocab_size()}});
      });
    }
    server_.Post("/tokenize", [&](const httplib::Request& req, httplib::Response& res) {
      const auto body = json::parse(req.body);
      if (body.contains("text")) {
        reply(res, {{"ids", tokenizer.encode(body.at("text").get<std::string>())}});
      } else {
        const auto ids = body.at("ids").get<std::vector<domainbench::tokens::TokenId>>();
        reply(res, {{"text", tokenizer.decode(ids)}});
      }
    });
  }

  /// /embed computing vectors with `fn` and counting calls.
  void serve_embed(std::function<std::vector<double>(const std::string&)> fn) {
    embed_fn_ = std::move(fn);
    server_.Post("/embed", [this](const httplib::Request& req, httplib::Response& res) {
      ++embed_calls;
      const auto texts = json::parse(req.body).at("texts").get<std::vector<std::string>>();
      std::vector<std::vector<double>> vectors;
      for (const auto& t : texts) vectors.push_back(embed_fn_(t));
      const std::size_t dim = vectors.empty() ? 0 : vectors.front().size();
      reply(res, {{"dim", dim}, {"vectors", vectors}});
    });
  }

  std::atomic<int> embed_calls{0};

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::function<std::vector<double>(const std::string&)> embed_fn_;
};

}  // namespace testsupport
