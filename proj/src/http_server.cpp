// Copyright 2026 The ecoref Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecoref/http_server.hpp"

#include <atomic>
#include <charconv>
#include <chrono>
#include <condition_variable>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "ecoref/error.hpp"
#include "ecoref/formats.hpp"

namespace ecoref::referee {

using nlohmann::json;

int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kAuthentication: return 401;
    case ErrorKind::kConflict:
    case ErrorKind::kState: return 409;
    case ErrorKind::kSession: return 410;
    case ErrorKind::kNotFound: return 404;
    case ErrorKind::kParse:
    case ErrorKind::kInvalidRequest:
    case ErrorKind::kInvalidInput: return 400;
    case ErrorKind::kMeterFailure:
    case ErrorKind::kConfig:
    case ErrorKind::kIo:
    case ErrorKind::kNetwork: return 500;
  }
  return 500;
}

namespace {

void send_error(httplib::Response& res, ErrorKind kind, const std::string& message) {
  res.status = http_status(kind);
  res.set_content(json{{"error", std::string(to_string(kind))}, {"message", message}}.dump(), "application/json");
}

std::string bearer(const httplib::Request& req) {
  const auto& h = req.get_header_value("Authorization");
  constexpr std::string_view kPrefix = "Bearer ";
  if (h.size() <= kPrefix.size() || h.compare(0, kPrefix.size(), kPrefix) != 0) {
    throw Error(ErrorKind::kAuthentication, "missing bearer token");
  }
  return h.substr(kPrefix.size());
}

std::size_t query_count(const httplib::Request& req, const char* key) {
  if (!req.has_param(key)) throw Error(ErrorKind::kInvalidRequest, std::string("missing query parameter ") + key);
  const auto v = req.get_param_value(key);
  std::size_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw Error(ErrorKind::kInvalidRequest, std::string("bad ") + key + " '" + v + "'");
  }
  return out;
}

// Runs a handler, mapping exceptions to JSON error bodies.
template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const Error& e) {
      send_error(res, e.kind(), e.what());
    } catch (const std::exception& e) {
      send_error(res, ErrorKind::kInvalidRequest, e.what());
    }
  };
}

}  // namespace

struct HttpServer::Impl {
  Referee& referee;
  double reaper_interval_s;
  httplib::Server server;
  std::thread listener;
  std::thread reaper;
  std::mutex mu;
  std::condition_variable wake;
  bool stopping = false;

  Impl(Referee& r, double interval) : referee(r), reaper_interval_s(interval) {}

  void reap() {
    std::unique_lock<std::mutex> lock(mu);
    while (!stopping) {
      wake.wait_for(lock, std::chrono::duration<double>(reaper_interval_s), [this] { return stopping; });
      if (stopping) break;
      lock.unlock();
      referee.expire_sessions();
      lock.lock();
    }
  }
};

HttpServer::HttpServer(Referee& referee, double reaper_interval_s)
    : impl_(std::make_unique<Impl>(referee, reaper_interval_s)) {
  auto& svr = impl_->server;
  auto& ref = impl_->referee;
  const unsigned threads = ref.config().worker_threads;
  svr.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  svr.set_payload_max_length(64u << 20);
  svr.set_keep_alive_max_count(1000000);
  svr.set_tcp_nodelay(true);
  // httplib's default adds SO_REUSEPORT, which lets a second referee bind a
  // port that is already serving.
  svr.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof yes);
  });

  svr.Post("/login", guarded([&ref](const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kParse, std::string("login body: ") + e.what());
    }
    if (!body.is_object() || !body.contains("team") || !body.contains("secret")) {
      throw Error(ErrorKind::kParse, "login body needs team and secret");
    }
    const auto token = ref.login(body.at("team").get<std::string>(), body.at("secret").get<std::string>());
    res.set_content(json{{"token", token},
                         {"images", ref.image_count()},
                         {"batch_max", ref.config().batch_max},
                         {"session_seconds", ref.config().session_seconds}}
                        .dump(),
                    "application/json");
  }));

  svr.Get(R"(/image/(\d+))", guarded([&ref](const httplib::Request& req, httplib::Response& res) {
    std::size_t index = 0;
    const auto& m = req.matches[1];
    const auto parsed = std::from_chars(&*m.first, &*m.first + m.length(), index);
    if (parsed.ec != std::errc()) throw Error(ErrorKind::kNotFound, "no image at index " + m.str());
    const auto img = ref.get_image(bearer(req), index);
    res.set_header("X-Image-Id", img.image_id);
    res.set_content(*img.bytes, img.content_type);
  }));

  svr.Get("/images", guarded([&ref](const httplib::Request& req, httplib::Response& res) {
    const auto token = bearer(req);
    const auto zip = ref.get_batch(token, query_count(req, "offset"), query_count(req, "count"));
    res.set_content(zip, "application/zip");
  }));

  svr.Post("/results", guarded([&ref](const httplib::Request& req, httplib::Response& res) {
    const auto n = ref.post_results(bearer(req), req.body);
    res.set_content(json{{"accepted", n}}.dump(), "application/json");
  }));

  svr.Post("/logout", guarded([&ref](const httplib::Request& req, httplib::Response& res) {
    ref.logout(bearer(req));
    res.set_content(json{{"status", "closed"}}.dump(), "application/json");
  }));

  svr.Get("/score", guarded([&ref](const httplib::Request& req, httplib::Response& res) {
    const auto r = ref.finalize(bearer(req));
    auto body = json::parse(formats::report_json(r.score));
    body["team"] = r.team_id;
    body["window_s"] = r.energy.window_end_s - r.energy.window_start_s;
    body["meter_samples"] = r.energy.sample_count;
    body["submissions_md5"] = r.submissions_md5;
    res.set_content(body.dump(), "application/json");
  }));
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  auto& svr = impl_->server;
  if (port == 0) {
    port_ = svr.bind_to_any_port(host);
    if (port_ < 0) throw Error(ErrorKind::kNetwork, "cannot bind " + host + ":0");
  } else {
    if (!svr.bind_to_port(host, port)) {
      throw Error(ErrorKind::kNetwork, "cannot bind " + host + ":" + std::to_string(port) + " (address in use?)");
    }
    port_ = port;
  }
  return port_;
}

void HttpServer::run() {
  {
    std::lock_guard<std::mutex> lock(impl_->mu);
    if (!impl_->reaper.joinable()) impl_->reaper = std::thread([this] { impl_->reap(); });
  }
  impl_->server.listen_after_bind();
}

int HttpServer::start(const std::string& host, int port) {
  const int bound = bind(host, port);
  impl_->listener = std::thread([this] { run(); });
  impl_->server.wait_until_ready();
  return bound;
}

void HttpServer::stop() {
  {
    std::lock_guard<std::mutex> lock(impl_->mu);
    impl_->stopping = true;
  }
  impl_->wake.notify_all();
  impl_->server.stop();
  if (impl_->listener.joinable()) impl_->listener.join();
  if (impl_->reaper.joinable()) impl_->reaper.join();
}

}  // namespace ecoref::referee
