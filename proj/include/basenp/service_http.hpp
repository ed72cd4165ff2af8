#pragma once

// HTTP/JSON binding of basenp::Service. Routes are documented in docs/API.md.

#include <algorithm>
#include <string>

#include "basenp/service.hpp"
#include "httplib.h"
#include "json.hpp"

namespace basenp {

namespace detail {

inline void send_json(httplib::Response& res, const nlohmann::json& j, int status = 200)
{
  res.status = status;
  res.set_content(j.dump(2) + "\n", "application/json");
}

inline void send_error(httplib::Response& res, int status, const std::string& kind, const std::string& message,
                       std::optional<std::size_t> line = std::nullopt)
{
  nlohmann::json j{{"error", kind}, {"message", message}};
  if (line) j["line"] = *line;
  send_json(res, j, status);
}

/// Runs `fn`, mapping library exceptions onto HTTP statuses.
template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn)
{
  try {
    fn();
  } catch (const SessionNotFound& e) {
    send_error(res, 404, "not_found", e.what());
  } catch (const NoTentativeError& e) {
    send_error(res, 409, "no_tentative", e.what());
  } catch (const RangeError& e) {
    send_error(res, 416, "range", e.what());
  } catch (const ParseError& e) {
    send_error(res, 400, "parse", e.what(), e.line());
  } catch (const nlohmann::json::exception& e) {
    send_error(res, 400, "bad_request", e.what());
  } catch (const Error& e) {
    send_error(res, 422, "data", e.what());
  }
}

inline CorpusFormat format_field(const nlohmann::json& j)
{
  auto name = j.value("format", std::string("slash"));
  auto f = corpus_format_from(name);
  if (!f) throw Error("unknown corpus format '" + name + "'");
  return *f;
}

/// {"text": ...} or {"path": ...}, with an optional "format".
inline Corpus corpus_field(const nlohmann::json& j, const char* label)
{
  auto f = format_field(j);
  if (j.contains("text")) return parse_corpus(j.at("text").get<std::string>(), f, label);
  auto path = j.at("path").get<std::string>();
  try {
    return parse_corpus(read_file(path), f, label);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.message(), e.line(), e.offset());
  }
}

} // namespace detail

/// Registers every route on `server`.
inline void install_routes(httplib::Server& server, Service& service)
{
  using detail::guarded;
  using detail::send_json;
  using nlohmann::json;
  const std::string sid = R"(/api/sessions/([0-9A-Za-z_-]+))";

  server.Post("/api/sessions", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto body = json::parse(req.body);
      auto train = detail::corpus_field(body.at("train"), "train");
      std::optional<Corpus> test;
      if (body.contains("test") && !body.at("test").is_null()) test = detail::corpus_field(body.at("test"), "test");
      auto id = service.create_session(std::move(train), std::move(test));
      send_json(res, {{"id", id}, {"version", 0}}, 201);
    });
  });

  server.Get("/api/sessions", [&service](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send_json(res, {{"sessions", service.session_ids()}}); });
  });

  server.Post(sid + "/propose", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto body = json::parse(req.body);
      send_json(res, to_json(service.propose_rules(req.matches[1], body.at("rules").get<std::string>())));
    });
  });

  server.Post(sid + "/commit", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto e = service.commit(req.matches[1]);
      send_json(res, {{"version", e.version}, {"report", to_json(e.report)}});
    });
  });

  server.Post(sid + "/rollback", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      service.rollback(req.matches[1]);
      send_json(res, {{"version", service.committed_version(req.matches[1])}});
    });
  });

  server.Get(sid + "/view", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto num = [&req](const char* key, std::size_t def) -> std::size_t {
        if (!req.has_param(key)) return def;
        auto v = req.get_param_value(key);
        try {
          std::size_t used = 0;
          auto n = std::stoull(v, &used);
          if (used != v.size()) throw std::invalid_argument(v);
          return n;
        } catch (const std::exception&) {
          throw RangeError(std::string("bad ") + key + " '" + v + "'");
        }
      };
      auto which_name = req.has_param("which") ? req.get_param_value("which") : std::string("committed");
      if (which_name != "committed" && which_name != "tentative")
        throw RangeError("which must be 'committed' or 'tentative'");
      auto start = num("start", 0);
      // Without an explicit end, show up to 20 sentences.
      auto end = num("end", std::min(start + 20, std::max(start, service.sentence_count(req.matches[1]))));
      auto which = which_name == "committed" ? Which::Committed : Which::Tentative;
      send_json(res, to_json(service.view_page(req.matches[1], start, end, which)));
    });
  });

  server.Get(sid + "/reports", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, to_json(service.reports(req.matches[1]))); });
  });

  server.Get(sid + "/rules", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { res.set_content(service.committed_rules(req.matches[1]), "text/plain"); });
  });
}

} // namespace basenp
