/* Copyright 2026 The StorInfer Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <httplib.h>

#include <charconv>

#include "storinfer/error.hpp"
#include "storinfer/gateway.hpp"

namespace storinfer {
using nlohmann::json;

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

json error_body(std::string_view code, std::string_view message) {
  return {{"error", code}, {"message", message}};
}

}  // namespace

struct Server::Impl {
  Gateway& gateway;
  httplib::Server http;

  explicit Impl(Gateway& g) : gateway(g) {}
};

Server::Server(Gateway& gateway) : impl_(std::make_unique<Impl>(gateway)) {
  auto& http = impl_->http;
  Gateway& gw = impl_->gateway;

  http.Post("/v1/answer", [&gw](const httplib::Request& req, httplib::Response& res) {
    std::string query;
    try {
      auto body = json::parse(req.body);
      if (!body.is_object() || !body.contains("query") || !body["query"].is_string()) {
        reply(res, 400, error_body("BadRequest", "body must be {\"query\": string}"));
        return;
      }
      query = body["query"].get<std::string>();
    } catch (const json::exception& e) {
      reply(res, 400, error_body("BadRequest", e.what()));
      return;
    }
    try {
      reply(res, 200, gw.answer(query).to_json());
    } catch (const Error& e) {
      switch (e.code()) {
        case Errc::kEmptyQuery:
          reply(res, 400, error_body(errc_name(e.code()), e.what()));
          break;
        case Errc::kLlmUnavailable:
        case Errc::kEmptyCompletion:
          reply(res, 503, error_body(errc_name(e.code()), e.what()));
          break;
        default:
          reply(res, 500, error_body(errc_name(e.code()), e.what()));
      }
    }
  });

  http.Get("/v1/stats", [&gw](const httplib::Request&, httplib::Response& res) {
    json body = gw.deps().metrics ? gw.deps().metrics->snapshot().to_json()
                                  : MetricsSnapshot{}.to_json();
    body["pair_count"] = gw.deps().artifacts->size();
    reply(res, 200, body);
  });

  http.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, {{"status", "ok"}});
  });
}

Server::~Server() { stop(); }

int Server::bind(const std::string& host, int port) {
  int bound = port == 0 ? impl_->http.bind_to_any_port(host) : (impl_->http.bind_to_port(host, port) ? port : -1);
  if (bound < 0) {
    throw Error(Errc::kBindFailure, "cannot bind " + host + ":" + std::to_string(port));
  }
  return bound;
}

void Server::run() { impl_->http.listen_after_bind(); }

void Server::wait_until_ready() const { impl_->http.wait_until_ready(); }

void Server::stop() {
  if (impl_->http.is_running()) impl_->http.stop();
}

std::pair<std::string, int> parse_bind_address(std::string_view addr) {
  auto colon = addr.rfind(':');
  if (colon == std::string_view::npos || colon == 0 || colon + 1 == addr.size()) {
    throw Error(Errc::kInvalidArgument, "bind address must be host:port");
  }
  int port = -1;
  auto tail = addr.substr(colon + 1);
  auto [ptr, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), port);
  if (ec != std::errc() || ptr != tail.data() + tail.size() || port < 0 || port > 65535) {
    throw Error(Errc::kInvalidArgument, "bad port in bind address");
  }
  return {std::string(addr.substr(0, colon)), port};
}

}  // namespace storinfer
