// Copyright 2026 The ecoref Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string>

#include "ecoref/error.hpp"
#include "ecoref/referee.hpp"

namespace ecoref::referee {

// HTTP status for each error category (401, 409, 410, ...).
int http_status(ErrorKind kind);

// Serves a Referee over HTTP/1.1:
//
//   POST /login           {"team": ..., "secret": ...} -> {"token", "images", "batch_max", "session_seconds"}
//   GET  /image/{index}   stored bytes, stored content type
//   GET  /images?offset=&count=   application/zip
//   POST /results         detection rows or JSON array -> {"accepted": n}
//   POST /logout
//   GET  /score           finalized report as JSON
//
// Every call except /login carries `Authorization: Bearer <token>`. Errors
// come back as {"error": "<category>", "message": ...}.
class HttpServer {
 public:
  explicit HttpServer(Referee& referee, double reaper_interval_s = 0.25);
  ~HttpServer();

  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Port 0 binds a free port. Returns the bound port; Error(kNetwork) when
  // the address is unavailable.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void run();
  // bind() then run() on a background thread.
  int start(const std::string& host, int port);
  void stop();

  int port() const { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = -1;
};

}  // namespace ecoref::referee
