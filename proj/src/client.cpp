// Copyright 2026 The ecoref Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecoref/client.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <future>
#include <thread>
#include <unordered_map>

#include <httplib.h>
#include <json.hpp>

#include "ecoref/error.hpp"
#include "ecoref/formats.hpp"

namespace ecoref::client {

using nlohmann::json;

struct RefereeClient::Impl {
  httplib::Client http;

  Impl(const std::string& host, int port, double timeout_s) : http(host, port) {
    const auto secs = static_cast<time_t>(timeout_s);
    const auto usecs = static_cast<time_t>((timeout_s - static_cast<double>(secs)) * 1e6);
    http.set_connection_timeout(secs, usecs);
    http.set_read_timeout(secs, usecs);
    http.set_write_timeout(secs, usecs);
    http.set_keep_alive(true);
    http.set_tcp_nodelay(true);
  }
};

namespace {

std::string checked(httplib::Result res, const char* what) {
  if (!res) {
    throw Error(ErrorKind::kNetwork, std::string(what) + ": " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    ErrorKind kind = ErrorKind::kNetwork;
    std::string message = res->body;
    try {
      const auto body = json::parse(res->body);
      if (auto k = error_kind_from_string(body.value("error", std::string()))) kind = *k;
      message = body.value("message", message);
    } catch (const json::exception&) {
    }
    throw Error(kind, std::string(what) + ": HTTP " + std::to_string(res->status) + ": " + message);
  }
  return std::move(res->body);
}

json parse_json(const std::string& body, const char* what) {
  try {
    return json::parse(body);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string(what) + ": " + e.what());
  }
}

}  // namespace

RefereeClient::RefereeClient(std::string host, int port, double timeout_s)
    : impl_(std::make_unique<Impl>(host, port, timeout_s)) {}
RefereeClient::~RefereeClient() = default;
RefereeClient::RefereeClient(RefereeClient&&) noexcept = default;
RefereeClient& RefereeClient::operator=(RefereeClient&&) noexcept = default;

LoginInfo RefereeClient::login(std::string_view team_id, std::string_view secret) {
  const auto body = json{{"team", team_id}, {"secret", secret}}.dump();
  const auto j = parse_json(checked(impl_->http.Post("/login", body, "application/json"), "login"), "login");
  LoginInfo info;
  try {
    info.token = j.at("token").get<std::string>();
    info.images = j.at("images").get<std::size_t>();
    info.batch_max = j.at("batch_max").get<std::size_t>();
    info.session_seconds = j.at("session_seconds").get<double>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("login: ") + e.what());
  }
  token_ = info.token;
  return info;
}

std::string RefereeClient::get_image(std::size_t index) {
  httplib::Headers h{{"Authorization", "Bearer " + token_}};
  return checked(impl_->http.Get("/image/" + std::to_string(index), h), "get image");
}

std::string RefereeClient::get_batch_raw(std::size_t offset, std::size_t count) {
  httplib::Headers h{{"Authorization", "Bearer " + token_}};
  const auto path = "/images?offset=" + std::to_string(offset) + "&count=" + std::to_string(count);
  return checked(impl_->http.Get(path, h), "get batch");
}

std::vector<zip::Entry> RefereeClient::get_batch(std::size_t offset, std::size_t count) {
  return unzip_batch(get_batch_raw(offset, count));
}

std::size_t RefereeClient::post_body(std::string_view body, const std::string& content_type) {
  httplib::Headers h{{"Authorization", "Bearer " + token_}};
  const auto res = checked(impl_->http.Post("/results", h, body.data(), body.size(), content_type), "post results");
  return parse_json(res, "post results").value("accepted", std::size_t{0});
}

std::size_t RefereeClient::post_results(std::span<const Detection> detections) {
  return post_body(formats::format_detection_rows(detections));
}

void RefereeClient::logout() {
  httplib::Headers h{{"Authorization", "Bearer " + token_}};
  checked(impl_->http.Post("/logout", h, "", 0, "text/plain"), "logout");
}

RemoteScore RefereeClient::score() {
  httplib::Headers h{{"Authorization", "Bearer " + token_}};
  const auto j = parse_json(checked(impl_->http.Get("/score", h), "score"), "score");
  RemoteScore s;
  try {
    s.team_id = j.at("team").get<std::string>();
    s.report.map_value = j.at("map_value").get<double>();
    s.report.energy_wh = j.at("energy_wh").get<double>();
    s.report.score = j.at("score").get<double>();
    s.report.images_processed = j.at("images_processed").get<std::size_t>();
    s.report.images_total = j.at("images_total").get<std::size_t>();
    s.window_s = j.at("window_s").get<double>();
    s.submissions_md5 = j.at("submissions_md5").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("score: ") + e.what());
  }
  return s;
}

std::vector<zip::Entry> unzip_batch(std::string_view archive) { return zip::read_archive(archive); }

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::kOracle: return "oracle";
    case Strategy::kNoisy: return "noisy";
    case Strategy::kLazy: return "lazy";
    case Strategy::kSlow: return "slow";
  }
  return "oracle";
}

Strategy parse_strategy(std::string_view name) {
  for (auto s : {Strategy::kOracle, Strategy::kNoisy, Strategy::kLazy, Strategy::kSlow}) {
    if (to_string(s) == name) return s;
  }
  throw Error(ErrorKind::kConfig, "unknown strategy '" + std::string(name) + "'");
}

void ContestantProfile::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorKind::kConfig, std::string(name) + " must lie in [0, 1]");
  };
  prob(label_flip_prob, "label_flip_prob");
  prob(drop_prob, "drop_prob");
  prob(confidence, "confidence");
  if (!(box_jitter_px >= 0.0) || !std::isfinite(box_jitter_px)) {
    throw Error(ErrorKind::kConfig, "box_jitter_px must be >= 0");
  }
  if (!(per_image_delay_ms >= 0.0) || !std::isfinite(per_image_delay_ms)) {
    throw Error(ErrorKind::kConfig, "per_image_delay_ms must be >= 0");
  }
  if (batch_size < 1) throw Error(ErrorKind::kConfig, "batch_size must be >= 1");
  if (!(image_fraction > 0.0 && image_fraction <= 1.0)) {
    throw Error(ErrorKind::kConfig, "image_fraction must lie in (0, 1]");
  }
}

ContestantProfile ContestantProfile::preset(Strategy strategy) {
  ContestantProfile p;
  p.strategy = strategy;
  switch (strategy) {
    case Strategy::kOracle:
      break;
    case Strategy::kNoisy:
      p.box_jitter_px = 2.0;
      p.label_flip_prob = 0.1;
      p.drop_prob = 0.1;
      p.confidence_model = ConfidenceModel::kSampled;
      break;
    case Strategy::kLazy:
      p.image_fraction = 0.5;
      break;
    case Strategy::kSlow:
      p.per_image_delay_ms = 20.0;
      break;
  }
  return p;
}

ContestantProfile load_profile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kConfig, "cannot open profile " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, path.string() + ": " + e.what());
  }
  ContestantProfile p;
  try {
    p = ContestantProfile::preset(parse_strategy(j.value("strategy", std::string("oracle"))));
    p.box_jitter_px = j.value("box_jitter_px", p.box_jitter_px);
    p.label_flip_prob = j.value("label_flip_prob", p.label_flip_prob);
    p.drop_prob = j.value("drop_prob", p.drop_prob);
    p.per_image_delay_ms = j.value("per_image_delay_ms", p.per_image_delay_ms);
    p.batch_size = j.value("batch_size", p.batch_size);
    if (j.contains("confidence_model")) {
      const auto m = j.at("confidence_model").get<std::string>();
      if (m == "constant") {
        p.confidence_model = ConfidenceModel::kConstant;
      } else if (m == "sampled") {
        p.confidence_model = ConfidenceModel::kSampled;
      } else {
        throw Error(ErrorKind::kConfig, "confidence_model must be constant or sampled");
      }
    }
    p.confidence = j.value("confidence", p.confidence);
    p.image_fraction = j.value("image_fraction", p.image_fraction);
    p.seed = j.value("seed", p.seed);
    p.pipeline = j.value("pipeline", p.pipeline);
    p.logout = j.value("logout", p.logout);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, path.string() + ": " + e.what());
  }
  p.validate();
  return p;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// std::uniform_real_distribution is implementation-defined; this is not.
double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

std::vector<Detection> contestant_detections(const ContestantProfile& profile, std::size_t image_index,
                                             std::span<const GroundTruthObject> objects, int num_classes) {
  std::vector<Detection> out;
  out.reserve(objects.size());
  std::mt19937_64 rng(splitmix64(profile.seed ^ splitmix64(image_index)));
  const bool exact = profile.strategy == Strategy::kOracle;
  for (const auto& gt : objects) {
    // Always draw the full tuple so each object's noise is fixed by the seed.
    const double u_drop = unit(rng);
    const double u_flip = unit(rng);
    const double u_target = unit(rng);
    double jitter[4];
    for (double& j : jitter) j = (2.0 * unit(rng) - 1.0) * profile.box_jitter_px;
    const double u_conf = unit(rng);

    Detection d{gt.image_id, gt.class_id, 1.0, gt.box};
    if (!exact) {
      if (u_drop < profile.drop_prob) continue;
      if (u_flip < profile.label_flip_prob && num_classes > 1) {
        const int shift = 1 + static_cast<int>(u_target * (num_classes - 1));
        d.class_id = (gt.class_id - 1 + std::min(shift, num_classes - 1)) % num_classes + 1;
      }
      const BoundingBox moved{gt.box.xmin + jitter[0], gt.box.ymin + jitter[1], gt.box.xmax + jitter[2],
                              gt.box.ymax + jitter[3]};
      if (moved.is_valid()) d.box = moved;
      d.confidence = profile.confidence_model == ConfidenceModel::kConstant ? profile.confidence
                                                                           : 0.5 + 0.5 * u_conf;
    }
    out.push_back(std::move(d));
  }
  return out;
}

RunSummary run_contestant(const ContestantProfile& profile, const std::string& host, int port,
                          const Credentials& credentials, const dataset::DatasetManifest& answers) {
  profile.validate();
  RunSummary summary;
  const auto t0 = std::chrono::steady_clock::now();
  auto finish = [&] {
    summary.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return summary;
  };

  std::unordered_map<std::string_view, std::vector<GroundTruthObject>> truth;
  for (const auto& g : answers.ground_truth) truth[g.image_id].push_back(g);

  RefereeClient session(host, port);
  LoginInfo info;
  try {
    info = session.login(credentials.team_id, credentials.secret);
  } catch (const Error& e) {
    summary.error = e.what();
    return finish();
  }

  const std::size_t batch = std::min(profile.batch_size, info.batch_max);
  const auto target = std::min(
      info.images, static_cast<std::size_t>(std::ceil(profile.image_fraction * static_cast<double>(info.images))));
  std::optional<RefereeClient> fetcher;
  if (profile.pipeline) {
    fetcher.emplace(host, port);
    fetcher->set_token(info.token);
  }
  auto fetch = [&](std::size_t offset) {
    auto& c = fetcher ? *fetcher : session;
    return c.get_batch(offset, std::min(batch, target - offset));
  };

  std::size_t processed = 0;
  std::future<std::vector<zip::Entry>> pending;
  if (fetcher && target > 0) pending = std::async(std::launch::async, fetch, std::size_t{0});
  try {
    for (std::size_t offset = 0; offset < target; offset += batch) {
      auto entries = fetcher ? pending.get() : fetch(offset);
      if (fetcher && offset + batch < target) pending = std::async(std::launch::async, fetch, offset + batch);
      summary.images_fetched += entries.size();

      std::vector<Detection> dets;
      for (const auto& e : entries) {
        const auto index = answers.index_of(e.name);
        if (!index) throw Error(ErrorKind::kNotFound, "referee served unknown image '" + e.name + "'");
        if (auto it = truth.find(e.name); it != truth.end()) {
          auto more = contestant_detections(profile, *index, it->second, answers.num_classes());
          dets.insert(dets.end(), more.begin(), more.end());
        }
      }
      if (profile.per_image_delay_ms > 0.0) {
        std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(
            profile.per_image_delay_ms * static_cast<double>(entries.size())));
      }
      if (!dets.empty()) {
        try {
          summary.detections_posted += session.post_results(dets);
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::kSession) throw;
          summary.detections_rejected += dets.size();
          throw;
        }
      }
      processed += entries.size();
    }
  } catch (const Error& e) {
    summary.error = e.what();
  } catch (const std::exception& e) {
    summary.error = e.what();
  }
  if (pending.valid()) {
    try {
      pending.get();
    } catch (const std::exception&) {
    }
  }
  summary.completed = summary.error.empty() && processed == target;

  if (profile.logout) {
    try {
      session.logout();
      summary.score = session.score();
    } catch (const Error& e) {
      if (summary.error.empty()) summary.error = e.what();
      summary.completed = false;
    }
  }
  return finish();
}

}  // namespace ecoref::client
