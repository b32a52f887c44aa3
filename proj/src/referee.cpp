// Copyright 2026 The ecoref Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecoref/referee.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ecoref/digest.hpp"
#include "ecoref/error.hpp"
#include "ecoref/formats.hpp"
#include "ecoref/zip_archive.hpp"

namespace ecoref::referee {

namespace fs = std::filesystem;
using nlohmann::json;

void CompetitionConfig::validate() const {
  if (!(session_seconds > 0.0) || !std::isfinite(session_seconds)) {
    throw Error(ErrorKind::kConfig, "session_seconds must be > 0");
  }
  if (batch_max < 1) throw Error(ErrorKind::kConfig, "batch_max must be >= 1");
  if (port < 0 || port > 65535) throw Error(ErrorKind::kConfig, "port out of range: " + std::to_string(port));
  if (worker_threads < 1) throw Error(ErrorKind::kConfig, "worker_threads must be >= 1");
  if (teams.empty()) throw Error(ErrorKind::kConfig, "no teams registered");
  std::set<std::string> seen;
  for (const auto& t : teams) {
    if (t.team_id.empty()) throw Error(ErrorKind::kConfig, "team with empty id");
    if (!seen.insert(t.team_id).second) throw Error(ErrorKind::kConfig, "duplicate team '" + t.team_id + "'");
  }
  meter.validate();
}

namespace {

energy::MeterProfile parse_meter(const json& j, const fs::path& base) {
  static const std::set<std::string> kKeys = {"mode",         "watts",          "idle_watts", "active_watts",
                                              "noise_stddev", "sample_rate_hz", "seed",       "trace"};
  for (const auto& [key, _] : j.items()) {
    if (!kKeys.count(key)) throw Error(ErrorKind::kConfig, "unknown meter key '" + key + "'");
  }
  energy::MeterProfile p;
  const auto mode = j.value("mode", std::string("synthetic"));
  if (mode == "synthetic") {
    p.mode = energy::MeterMode::kSynthetic;
  } else if (mode == "replay") {
    p.mode = energy::MeterMode::kTraceReplay;
  } else {
    throw Error(ErrorKind::kConfig, "meter mode must be synthetic or replay, got '" + mode + "'");
  }
  if (j.contains("watts")) p.idle_watts = p.active_watts = j.at("watts").get<double>();
  p.idle_watts = j.value("idle_watts", p.idle_watts);
  p.active_watts = j.value("active_watts", p.active_watts);
  p.noise_stddev = j.value("noise_stddev", 0.0);
  p.sample_rate_hz = j.value("sample_rate_hz", energy::kDefaultSampleRateHz);
  p.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("trace")) {
    fs::path trace = j.at("trace").get<std::string>();
    p.trace_path = trace.is_absolute() ? trace : base / trace;
  }
  return p;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

CompetitionConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kConfig, "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, path.string() + ": " + e.what());
  }
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    fs::path v = p;
    return v.is_absolute() ? v : base / v;
  };

  CompetitionConfig c;
  try {
    if (!j.is_object()) throw Error(ErrorKind::kConfig, "config must be a JSON object");
    static const std::set<std::string> kKeys = {"host",       "port",  "manifest",   "session_seconds",
                                                "batch_max",  "meter", "teams",      "report_dir",
                                                "worker_threads"};
    for (const auto& [key, _] : j.items()) {
      if (!kKeys.count(key)) throw Error(ErrorKind::kConfig, "unknown config key '" + key + "'");
    }
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    if (!j.contains("manifest")) throw Error(ErrorKind::kConfig, "config needs a manifest path");
    c.manifest_path = resolve(j.at("manifest").get<std::string>());
    c.session_seconds = j.value("session_seconds", c.session_seconds);
    c.batch_max = j.value("batch_max", c.batch_max);
    if (j.contains("meter")) c.meter = parse_meter(j.at("meter"), base);
    for (const auto& t : j.value("teams", json::array())) {
      c.teams.push_back({t.at("team").get<std::string>(), t.at("secret").get<std::string>()});
    }
    if (j.contains("report_dir")) c.report_dir = resolve(j.at("report_dir").get<std::string>());
    c.worker_threads = j.value("worker_threads", c.worker_threads);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw Error(ErrorKind::kConfig, path.string() + ": " + e.what());
  }
  c.validate();
  return c;
}

struct Referee::Session {
  std::mutex mu;
  std::string token;
  std::string team_id;
  std::size_t serial = 0;
  SessionStatus status = SessionStatus::kActive;
  double start_s = 0.0;
  double deadline_s = 0.0;
  std::optional<double> end_s;
  std::vector<bool> fetched;
  std::size_t fetched_count = 0;
  std::vector<Detection> detections;
  std::vector<SubmissionBatch> batches;
  std::unique_ptr<energy::PowerMeter> meter;
  std::vector<energy::PowerSample> samples;
  std::optional<SessionReport> report;
};

Referee::Referee(CompetitionConfig config, dataset::DatasetManifest manifest,
                 std::shared_ptr<const Clock> clock, MeterFactory meter_factory)
    : config_(std::move(config)),
      manifest_(std::move(manifest)),
      clock_(std::move(clock)),
      meter_factory_(std::move(meter_factory)),
      token_rng_(std::random_device{}()) {
  config_.validate();
  if (manifest_.images.empty()) throw Error(ErrorKind::kConfig, "manifest lists no images");
  if (manifest_.ground_truth.empty()) throw Error(ErrorKind::kConfig, "manifest has no ground truth");
  // Probe the meter once so a broken profile fails at startup, not at login.
  meter_factory_(config_.meter, clock_);
  load_images();
}

Referee::~Referee() {
  std::lock_guard<std::mutex> lock(mu_);
  for (auto& [_, s] : sessions_) {
    std::lock_guard<std::mutex> sl(s->mu);
    if (s->meter && s->meter->active()) s->meter->stop();
  }
}

std::unique_ptr<Referee> Referee::from_config(const CompetitionConfig& config,
                                              std::shared_ptr<const Clock> clock) {
  auto manifest = dataset::load_manifest(config.manifest_path);
  return std::make_unique<Referee>(config, std::move(manifest), std::move(clock));
}

void Referee::load_images() {
  images_.reserve(manifest_.images.size());
  for (std::size_t i = 0; i < manifest_.images.size(); ++i) {
    const auto path = manifest_.image_path(i);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::kIo, "cannot read image " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    images_.push_back(std::make_shared<const std::string>(std::move(buf).str()));
  }
}

std::shared_ptr<Referee::Session> Referee::find(std::string_view token) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = sessions_.find(token);
  if (it == sessions_.end()) throw Error(ErrorKind::kAuthentication, "unknown session token");
  return it->second;
}

void Referee::close_locked(Session& s, double end_s) {
  if (s.status == SessionStatus::kClosed) return;
  s.status = SessionStatus::kClosed;
  s.end_s = std::min(std::max(end_s, s.start_s), s.deadline_s);
  if (s.meter && s.meter->active()) s.samples = s.meter->stop();
  s.meter.reset();
}

void Referee::expire_locked(Session& s, double now) {
  if (s.status == SessionStatus::kActive && now > s.deadline_s) close_locked(s, s.deadline_s);
}

std::string Referee::login(std::string_view team_id, std::string_view secret) {
  const auto team = std::find_if(config_.teams.begin(), config_.teams.end(),
                                 [&](const TeamCredentials& t) { return t.team_id == team_id; });
  if (team == config_.teams.end() || team->secret != secret) {
    throw Error(ErrorKind::kAuthentication, "bad credentials for team '" + std::string(team_id) + "'");
  }

  std::lock_guard<std::mutex> lock(mu_);
  if (auto active = active_by_team_.find(team_id); active != active_by_team_.end()) {
    auto& prior = *sessions_.at(active->second);
    std::lock_guard<std::mutex> sl(prior.mu);
    expire_locked(prior, clock_->now_seconds());
    if (prior.status == SessionStatus::kActive) {
      throw Error(ErrorKind::kConflict, "team '" + std::string(team_id) + "' already has an active session");
    }
    active_by_team_.erase(active);
  }

  auto s = std::make_shared<Session>();
  do {
    s->token = hex64(token_rng_()) + hex64(token_rng_());
  } while (sessions_.count(s->token));
  s->team_id = std::string(team_id);
  s->serial = ++session_counter_;
  s->fetched.assign(images_.size(), false);
  s->meter = meter_factory_(config_.meter, clock_);
  s->start_s = clock_->now_seconds();
  s->deadline_s = s->start_s + config_.session_seconds;
  s->meter->start();

  sessions_.emplace(s->token, s);
  active_by_team_.emplace(s->team_id, s->token);
  return s->token;
}

ImagePayload Referee::get_image(std::string_view token, std::size_t index) {
  auto s = find(token);
  const double now = clock_->now_seconds();
  std::lock_guard<std::mutex> sl(s->mu);
  expire_locked(*s, now);
  if (s->status != SessionStatus::kActive) throw Error(ErrorKind::kSession, "session is closed");
  if (index >= images_.size()) {
    throw Error(ErrorKind::kNotFound, "no image at index " + std::to_string(index));
  }
  if (!s->fetched[index]) {
    s->fetched[index] = true;
    ++s->fetched_count;
  }
  const auto& entry = manifest_.images[index];
  return {entry.id, entry.content_type, images_[index]};
}

std::string Referee::get_batch(std::string_view token, std::size_t offset, std::size_t count) {
  if (count < 1 || count > config_.batch_max) {
    throw Error(ErrorKind::kInvalidRequest,
                "count must be in [1, " + std::to_string(config_.batch_max) + "], got " + std::to_string(count));
  }
  auto s = find(token);
  const double now = clock_->now_seconds();
  const std::size_t end = offset < images_.size() ? std::min(images_.size(), offset + count) : offset;
  {
    std::lock_guard<std::mutex> sl(s->mu);
    expire_locked(*s, now);
    if (s->status != SessionStatus::kActive) throw Error(ErrorKind::kSession, "session is closed");
    if (offset >= images_.size()) {
      throw Error(ErrorKind::kNotFound, "offset " + std::to_string(offset) + " past end of manifest");
    }
    for (std::size_t i = offset; i < end; ++i) {
      if (!s->fetched[i]) {
        s->fetched[i] = true;
        ++s->fetched_count;
      }
    }
  }
  std::vector<zip::Entry> entries;
  entries.reserve(end - offset);
  for (std::size_t i = offset; i < end; ++i) entries.push_back({manifest_.images[i].id, *images_[i]});
  return zip::write_archive(entries);
}

std::size_t Referee::post_results(std::string_view token, std::string_view body) {
  const double arrival = clock_->now_seconds();
  auto s = find(token);
  {
    // Reject closed sessions before paying for the parse.
    std::lock_guard<std::mutex> sl(s->mu);
    expire_locked(*s, arrival);
    if (s->status != SessionStatus::kActive) throw Error(ErrorKind::kSession, "session is closed");
  }
  auto dets = formats::parse_detections(body, &manifest_);
  std::lock_guard<std::mutex> sl(s->mu);
  expire_locked(*s, arrival);
  if (s->status != SessionStatus::kActive) throw Error(ErrorKind::kSession, "session is closed");
  s->batches.push_back({arrival, s->detections.size(), dets.size()});
  s->detections.insert(s->detections.end(), std::make_move_iterator(dets.begin()),
                       std::make_move_iterator(dets.end()));
  return dets.size();
}

std::size_t Referee::post_detections(std::string_view token, std::vector<Detection> detections) {
  const double arrival = clock_->now_seconds();
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const auto& d = detections[i];
    try {
      validate_detection(d, manifest_.num_classes());
    } catch (const Error& e) {
      throw Error(ErrorKind::kParse, "detection " + std::to_string(i) + ": " + e.what());
    }
    if (!manifest_.index_of(d.image_id)) {
      throw Error(ErrorKind::kParse, "detection " + std::to_string(i) + ": unknown image_id '" + d.image_id + "'");
    }
  }
  auto s = find(token);
  std::lock_guard<std::mutex> sl(s->mu);
  expire_locked(*s, arrival);
  if (s->status != SessionStatus::kActive) throw Error(ErrorKind::kSession, "session is closed");
  s->batches.push_back({arrival, s->detections.size(), detections.size()});
  s->detections.insert(s->detections.end(), std::make_move_iterator(detections.begin()),
                       std::make_move_iterator(detections.end()));
  return detections.size();
}

void Referee::logout(std::string_view token) {
  auto s = find(token);
  const double now = clock_->now_seconds();
  std::lock_guard<std::mutex> sl(s->mu);
  close_locked(*s, now);
}

SessionReport Referee::finalize_locked(Session& s) {
  if (s.report) return *s.report;
  if (s.status != SessionStatus::kClosed) throw Error(ErrorKind::kState, "session is still active");

  SessionReport r;
  r.team_id = s.team_id;
  r.start_s = s.start_s;
  r.end_s = *s.end_s;
  r.energy = energy::integrate_energy(s.samples, 0.0, r.end_s - r.start_s);
  if (!(r.energy.energy_wh > 0.0) || !std::isfinite(r.energy.energy_wh)) {
    throw Error(ErrorKind::kMeterFailure,
                "meter recorded no energy over a " + std::to_string(r.end_s - r.start_s) + " s window");
  }
  r.score = scoring::make_score_report(s.detections, manifest_.ground_truth, manifest_.num_classes(),
                                       manifest_.images.size(), r.energy.energy_wh);
  r.submissions_md5 = md5_hex(formats::format_detection_rows(s.detections));

  if (!config_.report_dir.empty()) {
    std::error_code ec;
    fs::create_directories(config_.report_dir, ec);
    char name[64];
    std::snprintf(name, sizeof name, "_%04zu_", s.serial);
    const auto stem = config_.report_dir / (s.team_id + name + s.token.substr(0, 8));
    auto write = [](const fs::path& path, const auto& body) {
      std::ofstream out(path);
      body(out);
      if (!out.flush()) throw Error(ErrorKind::kIo, "cannot write " + path.string());
    };
    write(fs::path(stem).concat(".detections"),
          [&](std::ostream& o) { o << formats::format_detection_rows(s.detections); });
    write(fs::path(stem).concat(".trace"), [&](std::ostream& o) { energy::write_power_trace(o, s.samples); });
    r.persisted_to = fs::path(stem).concat(".report");
    write(r.persisted_to, [&](std::ostream& o) { write_session_report(o, r); });
  }
  s.report = r;
  return r;
}

SessionReport Referee::finalize(std::string_view token) {
  auto s = find(token);
  const double now = clock_->now_seconds();
  std::lock_guard<std::mutex> sl(s->mu);
  expire_locked(*s, now);
  return finalize_locked(*s);
}

std::size_t Referee::expire_sessions() {
  const double now = clock_->now_seconds();
  std::lock_guard<std::mutex> lock(mu_);
  std::size_t closed = 0;
  for (auto it = active_by_team_.begin(); it != active_by_team_.end();) {
    auto& s = *sessions_.at(it->second);
    std::lock_guard<std::mutex> sl(s.mu);
    expire_locked(s, now);
    if (s.status == SessionStatus::kClosed) {
      ++closed;
      it = active_by_team_.erase(it);
    } else {
      ++it;
    }
  }
  return closed;
}

std::vector<SessionReport> Referee::close_all() {
  const double now = clock_->now_seconds();
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<SessionReport> reports;
  for (auto& [_, sp] : sessions_) {
    std::lock_guard<std::mutex> sl(sp->mu);
    close_locked(*sp, now);
    if (!sp->report) reports.push_back(finalize_locked(*sp));
  }
  active_by_team_.clear();
  return reports;
}

SessionView Referee::session(std::string_view token) const {
  auto s = find(token);
  std::lock_guard<std::mutex> sl(s->mu);
  SessionView v;
  v.token = s->token;
  v.team_id = s->team_id;
  v.status = s->status;
  v.start_s = s->start_s;
  v.deadline_s = s->deadline_s;
  v.end_s = s->end_s;
  v.fetched = s->fetched_count;
  v.detections = s->detections;
  v.batches = s->batches;
  v.samples = s->samples;
  return v;
}

std::vector<std::string> Referee::tokens() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<std::string> out;
  out.reserve(sessions_.size());
  for (const auto& [token, _] : sessions_) out.push_back(token);
  return out;
}

void write_session_report(std::ostream& out, const SessionReport& r) {
  formats::write_score_report(out, r.score,
                              {{"team", r.team_id},
                               {"session_start_s", formats::exact(r.start_s)},
                               {"session_end_s", formats::exact(r.end_s)},
                               {"window_s", formats::exact(r.energy.window_end_s - r.energy.window_start_s)},
                               {"meter_samples", std::to_string(r.energy.sample_count)},
                               {"submissions_md5", r.submissions_md5}});
}

}  // namespace ecoref::referee
