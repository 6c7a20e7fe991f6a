#pragma once

// Remote scoring over HTTP. A batch is one POST whose body holds one JSON
// request per line; the reply carries one JSON object per line in the same
// order.
//
//   request: {"knowledge": str, "prefix": [str], "candidates": [str]}
//   reply:   {"logprobs": [float|null], "entropy_raw": float, "vocab_size": int}

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "csc/error.hpp"
#include "csc/lm.hpp"
#include "csc/log.hpp"
#include "csc/utf8.hpp"

namespace csc {

class RemoteError : public Error {
 public:
  enum class Reason { Transport, Malformed, MissingCandidate };

  RemoteError(Reason reason, const std::string& message)
      : Error(ErrorKind::Remote, message), reason_(reason) {}

  Reason reason() const noexcept { return reason_; }

 private:
  Reason reason_;
};

inline std::string_view to_string(RemoteError::Reason r) {
  switch (r) {
    case RemoteError::Reason::Transport: return "transport";
    case RemoteError::Reason::Malformed: return "malformed_reply";
    case RemoteError::Reason::MissingCandidate: return "missing_candidate";
  }
  return "remote";
}

inline nlohmann::json encode_lm_query(const LMQuery& q) {
  nlohmann::json prefix = nlohmann::json::array();
  for (const auto& t : q.token_prefix) prefix.push_back(encode_utf8(t));
  nlohmann::json cands = nlohmann::json::array();
  for (const auto& c : q.candidates) cands.push_back(encode_utf8(c));
  return {{"knowledge", encode_utf8(q.knowledge_prefix)}, {"prefix", std::move(prefix)},
          {"candidates", std::move(cands)}};
}

inline LMQuery decode_lm_query(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorKind::InvalidArgument, "request must be a JSON object");
  LMQuery q;
  auto text_field = [](const nlohmann::json& v, const char* what) {
    if (!v.is_string()) throw Error(ErrorKind::InvalidArgument, std::string(what) + " must be a string");
    return decode_utf8(v.get<std::string>());
  };
  if (j.contains("knowledge")) q.knowledge_prefix = text_field(j.at("knowledge"), "knowledge");
  if (j.contains("prefix")) {
    if (!j.at("prefix").is_array()) throw Error(ErrorKind::InvalidArgument, "prefix must be an array");
    for (const auto& t : j.at("prefix")) q.token_prefix.push_back(text_field(t, "prefix entry"));
  }
  if (!j.contains("candidates") || !j.at("candidates").is_array() || j.at("candidates").empty()) {
    throw Error(ErrorKind::InvalidArgument, "candidates must be a non-empty array");
  }
  for (const auto& c : j.at("candidates")) q.candidates.push_back(text_field(c, "candidate"));
  return q;
}

/// Server side of the protocol for an n-gram model.
inline nlohmann::json handle_lm_request(const NGramModel& lm, const nlohmann::json& request) {
  const auto query = decode_lm_query(request);
  const auto resp = lm.next_token_logprobs(query);
  const auto v = lm.alphabet_size();
  return {{"logprobs", resp.logprobs},
          {"entropy_raw", resp.entropy * std::log(static_cast<double>(v))},
          {"vocab_size", v}};
}

/// Handles a whole request body (JSON lines) and returns the reply body.
inline std::string handle_lm_batch(const NGramModel& lm, std::string_view body) {
  std::string out;
  std::istringstream in{std::string(body)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json reply;
    try {
      reply = handle_lm_request(lm, nlohmann::json::parse(line));
    } catch (const std::exception& e) {
      reply = {{"error", e.what()}};
    }
    out += reply.dump();
    out += '\n';
  }
  return out;
}

inline LMResponse decode_lm_reply(const nlohmann::json& j, std::size_t expected) {
  using R = RemoteError::Reason;
  if (!j.is_object()) throw RemoteError(R::Malformed, "reply is not a JSON object");
  if (j.contains("error")) throw RemoteError(R::Malformed, "server error: " + j.at("error").dump());
  if (!j.contains("logprobs") || !j.at("logprobs").is_array()) {
    throw RemoteError(R::Malformed, "reply lacks a logprobs array");
  }
  if (!j.contains("entropy_raw") || !j.at("entropy_raw").is_number() || !j.contains("vocab_size") ||
      !j.at("vocab_size").is_number_integer()) {
    throw RemoteError(R::Malformed, "reply lacks entropy_raw or vocab_size");
  }
  const auto& lps = j.at("logprobs");
  if (lps.size() < expected) {
    throw RemoteError(R::MissingCandidate, "reply scores " + std::to_string(lps.size()) + " of " +
                                               std::to_string(expected) + " candidates");
  }
  if (lps.size() > expected) throw RemoteError(R::Malformed, "reply has more scores than candidates");
  LMResponse out;
  for (const auto& v : lps) {
    if (v.is_null()) {
      out.logprobs.push_back(kUnknownTokenLogProb);
    } else if (v.is_number()) {
      out.logprobs.push_back(std::min(v.get<double>(), 0.0));
    } else {
      throw RemoteError(R::Malformed, "non-numeric log-probability");
    }
  }
  const auto vocab = j.at("vocab_size").get<long long>();
  if (vocab < 2) throw RemoteError(R::Malformed, "vocab_size must be at least 2");
  const double h = j.at("entropy_raw").get<double>() / std::log(static_cast<double>(vocab));
  out.entropy = std::clamp(h, 0.0, 1.0);
  return out;
}

class RemoteLM final : public LanguageModel {
 public:
  /// `url` looks like `http://host:port/path`.
  explicit RemoteLM(const std::string& url, int timeout_seconds = 30) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) throw Error(ErrorKind::InvalidArgument, "remote url needs a scheme: " + url);
    const auto slash = url.find('/', scheme + 3);
    base_ = url.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : url.substr(slash);
    client_ = std::make_unique<httplib::Client>(base_);
    if (!client_->is_valid()) throw Error(ErrorKind::InvalidArgument, "unsupported remote url: " + url);
    client_->set_connection_timeout(timeout_seconds, 0);
    client_->set_read_timeout(timeout_seconds, 0);
    client_->set_keep_alive(true);
  }

  LMResponse next_token_logprobs(const LMQuery& query) const override {
    return next_token_logprobs_batch(std::span<const LMQuery>(&query, 1)).front();
  }

  std::vector<LMResponse> next_token_logprobs_batch(std::span<const LMQuery> queries) const override {
    using R = RemoteError::Reason;
    if (queries.empty()) return {};
    std::string body;
    for (const auto& q : queries) {
      body += encode_lm_query(q).dump();
      body += '\n';
    }
    httplib::Result res;
    {
      std::lock_guard lock(mu_);
      res = client_->Post(path_, body, "application/x-ndjson");
    }
    if (!res) throw RemoteError(R::Transport, "request to " + base_ + path_ + " failed: " + httplib::to_string(res.error()));
    if (res->status != 200) {
      throw RemoteError(R::Transport, "server answered HTTP " + std::to_string(res->status));
    }
    std::vector<LMResponse> out;
    out.reserve(queries.size());
    std::istringstream in(res->body);
    std::string line;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      if (out.size() == queries.size()) throw RemoteError(R::Malformed, "reply has more lines than requests");
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw RemoteError(R::Malformed, std::string("reply is not JSON: ") + e.what());
      }
      out.push_back(decode_lm_reply(j, queries[out.size()].candidates.size()));
    }
    if (out.size() != queries.size()) {
      throw RemoteError(R::MissingCandidate, "reply answered " + std::to_string(out.size()) + " of " +
                                                 std::to_string(queries.size()) + " queries");
    }
    return out;
  }

  bool concurrency_safe() const override { return false; }

 private:
  std::string base_;
  std::string path_;
  std::unique_ptr<httplib::Client> client_;
  mutable std::mutex mu_;
};

inline void attach_lm(httplib::Server& server, const NGramModel& lm, const std::string& path = "/score") {
  server.Post(path, [&lm](const httplib::Request& req, httplib::Response& res) {
    res.set_content(handle_lm_batch(lm, req.body), "application/x-ndjson");
  });
}

/// Blocking LM server; returns when `server.stop()` is called.
inline void serve_lm(httplib::Server& server, const NGramModel& lm, const std::string& host, int port,
                     const std::string& path = "/score") {
  attach_lm(server, lm, path);
  log::info("lm server listening on " + host + ":" + std::to_string(port) + path);
  if (!server.listen(host, port)) throw Error(ErrorKind::Load, "cannot bind " + host + ":" + std::to_string(port));
}

}  // namespace csc
