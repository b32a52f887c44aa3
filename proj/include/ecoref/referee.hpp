// Copyright 2026 The ecoref Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "ecoref/clock.hpp"
#include "ecoref/dataset.hpp"
#include "ecoref/detection.hpp"
#include "ecoref/energy.hpp"
#include "ecoref/scoring.hpp"

namespace ecoref::referee {

inline constexpr double kDefaultSessionSeconds = 600.0;
inline constexpr std::size_t kDefaultBatchMax = 100;

struct TeamCredentials {
  std::string team_id;
  std::string secret;
};

struct CompetitionConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::filesystem::path manifest_path;
  double session_seconds = kDefaultSessionSeconds;
  std::size_t batch_max = kDefaultBatchMax;
  energy::MeterProfile meter = energy::MeterProfile::constant(6.0);
  std::vector<TeamCredentials> teams;
  std::filesystem::path report_dir;  // empty: reports are kept in memory only
  unsigned worker_threads = 8;

  // Throws Error(kConfig).
  void validate() const;
};

// JSON config. Relative manifest, trace and report paths resolve against the
// config file's directory.
CompetitionConfig load_config(const std::filesystem::path& path);

enum class SessionStatus { kActive, kClosed };

struct SubmissionBatch {
  double arrival_s = 0.0;
  std::size_t first = 0;  // index into SessionView::detections
  std::size_t count = 0;
};

struct SessionView {
  std::string token;
  std::string team_id;
  SessionStatus status = SessionStatus::kActive;
  double start_s = 0.0;
  double deadline_s = 0.0;
  std::optional<double> end_s;
  std::size_t fetched = 0;
  std::vector<Detection> detections;
  std::vector<SubmissionBatch> batches;
  std::vector<energy::PowerSample> samples;  // filled once the session closes
};

struct SessionReport {
  std::string team_id;
  scoring::ScoreReport score;
  energy::EnergyReport energy;  // window is relative to login
  double start_s = 0.0;
  double end_s = 0.0;
  std::string submissions_md5;
  std::filesystem::path persisted_to;
};

struct ImagePayload {
  std::string image_id;
  std::string content_type;
  std::shared_ptr<const std::string> bytes;
};

using MeterFactory = std::function<std::unique_ptr<energy::PowerMeter>(
    const energy::MeterProfile&, std::shared_ptr<const Clock>)>;

// Transport-independent referee. Every method is safe to call from many
// threads; each session's state is serialized by its own mutex while image
// payloads are shared read-only.
class Referee {
 public:
  Referee(CompetitionConfig config, dataset::DatasetManifest manifest,
          std::shared_ptr<const Clock> clock, MeterFactory meter_factory = energy::make_meter);
  ~Referee();

  Referee(const Referee&) = delete;
  Referee& operator=(const Referee&) = delete;

  // Loads the manifest named in the config and reads every image into memory.
  static std::unique_ptr<Referee> from_config(const CompetitionConfig& config,
                                              std::shared_ptr<const Clock> clock);

  std::string login(std::string_view team_id, std::string_view secret);
  ImagePayload get_image(std::string_view token, std::size_t index);
  // Stored zip, entries named by image id in manifest order. A range running
  // past the end of the manifest is truncated.
  std::string get_batch(std::string_view token, std::size_t offset, std::size_t count);
  // Whole body accepted or nothing is; returns the number of detections added.
  std::size_t post_results(std::string_view token, std::string_view body);
  std::size_t post_detections(std::string_view token, std::vector<Detection> detections);
  void logout(std::string_view token);
  // Requires a closed session. Computed once; later calls return the same
  // report.
  SessionReport finalize(std::string_view token);

  // Closes sessions whose deadline has passed. Returns how many were closed.
  std::size_t expire_sessions();
  // Shutdown path: closes every active session at the current time (capped at
  // its deadline) and finalizes everything still unscored.
  std::vector<SessionReport> close_all();

  SessionView session(std::string_view token) const;
  std::vector<std::string> tokens() const;

  const CompetitionConfig& config() const { return config_; }
  const dataset::DatasetManifest& manifest() const { return manifest_; }
  std::size_t image_count() const { return manifest_.images.size(); }

 private:
  struct Session;

  std::shared_ptr<Session> find(std::string_view token) const;
  void close_locked(Session& s, double end_s);
  void expire_locked(Session& s, double now);
  SessionReport finalize_locked(Session& s);
  void load_images();

  CompetitionConfig config_;
  dataset::DatasetManifest manifest_;
  std::shared_ptr<const Clock> clock_;
  MeterFactory meter_factory_;
  std::vector<std::shared_ptr<const std::string>> images_;

  // Lock order: mu_ first, then at most one session mutex.
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>, std::less<>> sessions_;
  std::map<std::string, std::string, std::less<>> active_by_team_;
  std::mt19937_64 token_rng_;
  std::size_t session_counter_ = 0;
};

// Key/value report persisted for every finalized session. The accepted
// detections and the meter trace are written alongside it with the
// extensions .detections and .trace.
void write_session_report(std::ostream& out, const SessionReport& report);

}  // namespace ecoref::referee
