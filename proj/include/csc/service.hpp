#pragma once

// JSON correction service over HTTP:
//   POST /correct  {"text": str, "knowledge": str?}  ->  {"output": str, "score": float}
// Bad requests get {"error": str} with status 400.

#include <httplib.h>

#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "csc/decoder.hpp"
#include "csc/error.hpp"
#include "csc/utf8.hpp"

namespace csc {

/// Shared by the CLI and the service so both answer identically. An empty
/// line corrects to itself with score 0.
inline CorrectionResult correct_text(const Engine& engine, std::string_view utf8, const DecoderConfig& cfg) {
  const auto x = decode_utf8(utf8);
  if (x.empty()) return {};
  return engine.correct(x, cfg);
}

class CorrectionService {
 public:
  CorrectionService(const Engine& engine, DecoderConfig cfg) : engine_(engine), cfg_(std::move(cfg)) {}

  /// Handles one JSON request body; returns the HTTP status and reply.
  std::pair<int, nlohmann::json> handle(std::string_view body) const {
    nlohmann::json req;
    try {
      req = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
      return {400, {{"error", std::string("malformed JSON: ") + e.what()}}};
    }
    if (!req.is_object() || !req.contains("text") || !req.at("text").is_string()) {
      return {400, {{"error", "request needs a string field 'text'"}}};
    }
    DecoderConfig cfg = cfg_;
    try {
      if (req.contains("knowledge")) {
        if (!req.at("knowledge").is_string()) return {400, {{"error", "'knowledge' must be a string"}}};
        cfg.knowledge_prefix = decode_utf8(req.at("knowledge").get<std::string>());
      }
      std::optional<std::unique_lock<std::mutex>> lock;
      if (!engine_.language_model().concurrency_safe()) lock.emplace(mu_);
      const auto result = correct_text(engine_, req.at("text").get<std::string>(), cfg);
      return {200, {{"output", encode_utf8(result.output)}, {"score", result.score}}};
    } catch (const Error& e) {
      const int status = e.kind() == ErrorKind::InvalidArgument ? 400 : 500;
      return {status, {{"error", e.what()}, {"kind", std::string(to_string(e.kind()))}}};
    }
  }

  void attach(httplib::Server& server) const {
    server.Post("/correct", [this](const httplib::Request& req, httplib::Response& res) {
      auto [status, reply] = handle(req.body);
      res.status = status;
      res.set_content(reply.dump(), "application/json");
    });
    server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("{\"ok\":true}", "application/json");
    });
  }

 private:
  const Engine& engine_;
  DecoderConfig cfg_;
  mutable std::mutex mu_;
};

}  // namespace csc
