// Copyright 2026 The ecoref Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ecoref/dataset.hpp"
#include "ecoref/detection.hpp"
#include "ecoref/scoring.hpp"
#include "ecoref/zip_archive.hpp"

namespace ecoref::client {

struct LoginInfo {
  std::string token;
  std::size_t images = 0;
  std::size_t batch_max = 0;
  double session_seconds = 0.0;
};

struct RemoteScore {
  std::string team_id;
  scoring::ScoreReport report;
  double window_s = 0.0;
  std::string submissions_md5;
};

// Blocking SDK for one referee. Not thread-safe; use one per thread.
// Server errors are rethrown as Error with the category the server reported;
// transport failures are Error(kNetwork).
class RefereeClient {
 public:
  RefereeClient(std::string host, int port, double timeout_s = 60.0);
  ~RefereeClient();
  RefereeClient(RefereeClient&&) noexcept;
  RefereeClient& operator=(RefereeClient&&) noexcept;

  LoginInfo login(std::string_view team_id, std::string_view secret);
  std::string get_image(std::size_t index);
  std::string get_batch_raw(std::size_t offset, std::size_t count);
  std::vector<zip::Entry> get_batch(std::size_t offset, std::size_t count);
  std::size_t post_results(std::span<const Detection> detections);
  std::size_t post_body(std::string_view body, const std::string& content_type = "text/plain");
  void logout();
  RemoteScore score();

  const std::string& token() const { return token_; }
  void set_token(std::string token) { token_ = std::move(token); }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::string token_;
};

// Entries in archive order; a corrupt or truncated archive yields nothing and
// throws Error(kParse).
std::vector<zip::Entry> unzip_batch(std::string_view archive);

enum class Strategy { kOracle, kNoisy, kLazy, kSlow };
enum class ConfidenceModel { kConstant, kSampled };

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view name);

// Behavioural stand-in for a contestant's detector. Noise is drawn from a
// per-image stream keyed on (seed, image index), so results do not depend on
// batching or pipelining, and raising a probability with the seed fixed only
// ever affects a superset of objects.
struct ContestantProfile {
  Strategy strategy = Strategy::kOracle;
  double box_jitter_px = 0.0;
  double label_flip_prob = 0.0;
  double drop_prob = 0.0;
  double per_image_delay_ms = 0.0;
  std::size_t batch_size = 100;
  ConfidenceModel confidence_model = ConfidenceModel::kConstant;
  double confidence = 1.0;     // constant model
  double image_fraction = 1.0;  // share of the test set processed before stopping
  std::uint64_t seed = 1;
  bool pipeline = true;
  bool logout = true;

  // Throws Error(kConfig).
  void validate() const;

  // Defaults for each strategy: oracle is exact, noisy jitters boxes and
  // flips labels, lazy stops after half the images, slow sleeps per image.
  static ContestantProfile preset(Strategy strategy);
};

ContestantProfile load_profile(const std::filesystem::path& path);

// Detections this profile would submit for one image.
std::vector<Detection> contestant_detections(const ContestantProfile& profile, std::size_t image_index,
                                             std::span<const GroundTruthObject> objects, int num_classes);

struct RunSummary {
  std::size_t images_fetched = 0;
  std::size_t detections_posted = 0;    // accepted by the referee
  std::size_t detections_rejected = 0;  // refused, e.g. after the deadline
  double elapsed_s = 0.0;
  bool completed = false;  // every intended image processed and posted
  std::string error;       // first failure, empty on success
  std::optional<RemoteScore> score;  // fetched after logout
};

struct Credentials {
  std::string team_id;
  std::string secret;
};

// login, batched fetch, detections from `answers`, post, logout. Fetching the
// next batch overlaps posting the current one when profile.pipeline is set;
// posts are always sent in processing order.
RunSummary run_contestant(const ContestantProfile& profile, const std::string& host, int port,
                          const Credentials& credentials, const dataset::DatasetManifest& answers);

}  // namespace ecoref::client
