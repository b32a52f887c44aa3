// Copyright 2026 The ecoref Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecoref/formats.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "ecoref/dataset.hpp"
#include "ecoref/error.hpp"

namespace ecoref::formats {

using nlohmann::json;

std::string exact(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool to_double(std::string_view tok, double& out) {
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return res.ec == std::errc() && res.ptr == tok.data() + tok.size() && std::isfinite(out);
}

bool to_int(std::string_view tok, int& out) {
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return res.ec == std::errc() && res.ptr == tok.data() + tok.size();
}

// Domain checks shared by both body encodings; returns an empty string when
// the detection is acceptable.
std::string check(const Detection& d, const dataset::DatasetManifest* manifest) {
  if (d.image_id.empty()) return "empty image_id";
  if (d.class_id < 1) return "class_id must be >= 1";
  if (manifest && d.class_id > manifest->num_classes()) {
    return "class_id " + std::to_string(d.class_id) + " outside label space";
  }
  if (!(d.confidence >= 0.0 && d.confidence <= 1.0)) return "confidence outside [0, 1]";
  if (!d.box.is_valid()) return "invalid bounding box";
  if (manifest && !manifest->index_of(d.image_id)) return "unknown image_id '" + d.image_id + "'";
  return {};
}

std::vector<Detection> parse_json_body(std::string_view body, const dataset::DatasetManifest* manifest,
                                       const std::string& source) {
  json doc;
  try {
    doc = json::parse(body.begin(), body.end());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, source + ": " + e.what());
  }
  if (!doc.is_array()) throw Error(ErrorKind::kParse, source + ": expected a JSON array of detections");
  std::vector<Detection> dets;
  dets.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& row = doc[i];
    Detection d;
    try {
      d.image_id = row.at("image_id").get<std::string>();
      d.class_id = row.at("class_id").get<int>();
      d.confidence = row.at("confidence").get<double>();
      if (row.contains("box")) {
        const auto b = row.at("box").get<std::vector<double>>();
        if (b.size() != 4) throw Error(ErrorKind::kParse, "box needs four numbers");
        d.box = BoundingBox{b[0], b[1], b[2], b[3]};
      } else {
        d.box = BoundingBox{row.at("xmin").get<double>(), row.at("ymin").get<double>(),
                            row.at("xmax").get<double>(), row.at("ymax").get<double>()};
      }
    } catch (const std::exception& e) {
      throw Error(ErrorKind::kParse, source + ": element " + std::to_string(i) + ": " + e.what());
    }
    if (auto why = check(d, manifest); !why.empty()) {
      throw Error(ErrorKind::kParse, source + ": element " + std::to_string(i) + ": " + why);
    }
    dets.push_back(std::move(d));
  }
  return dets;
}

}  // namespace

std::vector<Detection> parse_detections(std::string_view body, const dataset::DatasetManifest* manifest,
                                        const std::string& source) {
  if (const auto t = trim(body); !t.empty() && t.front() == '[') return parse_json_body(t, manifest, source);

  std::vector<Detection> dets;
  std::size_t line_no = 0;
  while (!body.empty()) {
    const auto nl = body.find('\n');
    std::string_view line = body.substr(0, nl);
    body = nl == std::string_view::npos ? std::string_view{} : body.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto fields = split_ws(line);
    if (fields.empty()) continue;

    auto fail = [&](const std::string& why) {
      throw Error(ErrorKind::kParse, source + ":" + std::to_string(line_no) + ": " + why);
    };
    if (fields.size() != 7) fail("expected 7 fields, found " + std::to_string(fields.size()));
    Detection d;
    d.image_id = std::string(fields[0]);
    if (!to_int(fields[1], d.class_id)) fail("class_id is not an integer");
    if (!to_double(fields[2], d.confidence) || !to_double(fields[3], d.box.xmin) ||
        !to_double(fields[4], d.box.ymin) || !to_double(fields[5], d.box.xmax) ||
        !to_double(fields[6], d.box.ymax)) {
      fail("non-numeric field");
    }
    if (auto why = check(d, manifest); !why.empty()) fail(why);
    dets.push_back(std::move(d));
  }
  return dets;
}

std::string format_detection_rows(std::span<const Detection> dets) {
  std::string out;
  out.reserve(dets.size() * 48);
  for (const auto& d : dets) {
    out += d.image_id;
    out += ' ';
    out += std::to_string(d.class_id);
    for (double v : {d.confidence, d.box.xmin, d.box.ymin, d.box.xmax, d.box.ymax}) {
      out += ' ';
      out += exact(v);
    }
    out += '\n';
  }
  return out;
}

std::string format_detection_json(std::span<const Detection> dets) {
  json arr = json::array();
  for (const auto& d : dets) {
    arr.push_back({{"image_id", d.image_id},
                   {"class_id", d.class_id},
                   {"confidence", d.confidence},
                   {"xmin", d.box.xmin},
                   {"ymin", d.box.ymin},
                   {"xmax", d.box.xmax},
                   {"ymax", d.box.ymax}});
  }
  return arr.dump();
}

std::vector<scoring::Track1Record> parse_track1_log(std::istream& in, const std::string& source) {
  std::vector<scoring::Track1Record> records;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (records.empty() && line.rfind("image_id", 0) == 0) continue;

    auto fail = [&](const std::string& why) {
      throw Error(ErrorKind::kParse, source + ":" + std::to_string(line_no) + ": " + why);
    };
    std::vector<std::string_view> fields;
    for (std::size_t start = 0;;) {
      const auto comma = line.find(',', start);
      fields.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (fields.size() != 4) fail("expected 4 comma-separated fields");
    scoring::Track1Record r;
    r.image_id = std::string(fields[0]);
    if (r.image_id.empty()) fail("empty image_id");
    if (!to_int(fields[1], r.predicted_class)) fail("predicted_class is not an integer");
    if (!to_double(fields[2], r.latency_ms) || r.latency_ms < 0.0) fail("latency_ms must be a finite number >= 0");
    if (fields[3] == "1" || fields[3] == "true") {
      r.correct = true;
    } else if (fields[3] == "0" || fields[3] == "false") {
      r.correct = false;
    } else {
      fail("correct must be 0/1/true/false");
    }
    records.push_back(std::move(r));
  }
  return records;
}

void write_track1_log(std::ostream& out, std::span<const scoring::Track1Record> records) {
  out << "image_id,predicted_class,latency_ms,correct\n";
  for (const auto& r : records) {
    out << r.image_id << ',' << r.predicted_class << ',' << exact(r.latency_ms) << ',' << (r.correct ? 1 : 0) << '\n';
  }
}

void write_score_report(std::ostream& out, const scoring::ScoreReport& report,
                        const std::vector<std::pair<std::string, std::string>>& metadata) {
  for (const auto& [k, v] : metadata) out << k << '=' << v << '\n';
  char buf[64];
  auto put = [&](const char* key, double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << key << '=' << buf << '\n';
  };
  put("map_value", report.map_value);
  put("energy_wh", report.energy_wh);
  put("score", report.score);
  out << "images_processed=" << report.images_processed << '\n';
  out << "images_total=" << report.images_total << '\n';
}

PersistedReport read_score_report(std::istream& in, const std::string& source) {
  PersistedReport out;
  std::string raw;
  std::size_t line_no = 0;
  bool seen_map = false, seen_energy = false, seen_score = false;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorKind::kParse, source + ":" + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    auto number = [&](double& dst) {
      if (!to_double(value, dst)) {
        throw Error(ErrorKind::kParse, source + ":" + std::to_string(line_no) + ": bad number for " + key);
      }
    };
    auto count = [&](std::size_t& dst) {
      const auto res = std::from_chars(value.data(), value.data() + value.size(), dst);
      if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
        throw Error(ErrorKind::kParse, source + ":" + std::to_string(line_no) + ": bad count for " + key);
      }
    };
    if (key == "map_value") {
      number(out.report.map_value);
      seen_map = true;
    } else if (key == "energy_wh") {
      number(out.report.energy_wh);
      seen_energy = true;
    } else if (key == "score") {
      number(out.report.score);
      seen_score = true;
    } else if (key == "images_processed") {
      count(out.report.images_processed);
    } else if (key == "images_total") {
      count(out.report.images_total);
    } else {
      out.metadata[key] = std::string(value);
    }
  }
  if (!seen_map || !seen_energy || !seen_score) {
    throw Error(ErrorKind::kParse, source + ": report needs map_value, energy_wh and score");
  }
  if (auto it = out.metadata.find("label"); it != out.metadata.end()) {
    out.label = it->second;
  } else if (auto team = out.metadata.find("team"); team != out.metadata.end()) {
    out.label = team->second;
  }
  return out;
}

std::string report_json(const scoring::ScoreReport& r) {
  return json{{"map_value", r.map_value},
              {"energy_wh", r.energy_wh},
              {"score", r.score},
              {"images_processed", r.images_processed},
              {"images_total", r.images_total}}
      .dump();
}

std::string track1_json(const scoring::Track1Report& r) {
  return json{{"mean_latency_ms", r.mean_latency_ms},
              {"test_metric", r.test_metric},
              {"accuracy_on_classified", r.accuracy_on_classified},
              {"accuracy_per_time", r.accuracy_per_time},
              {"num_classified", r.num_classified},
              {"num_total", r.num_total}}
      .dump();
}

}  // namespace ecoref::formats
