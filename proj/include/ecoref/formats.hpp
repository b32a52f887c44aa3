// Copyright 2026 The ecoref Authors
// SPDX-License-Identifier: Apache-2.0
//
// Text formats shared by the referee, the client and the CLI.
//
// Detections travel either as newline-delimited rows
//
//     image_id class_id confidence xmin ymin xmax ymax
//
// (blank lines and `#` comments ignored) or as a JSON array of objects with
// the same field names. Score reports are persisted as `key=value` lines.

#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ecoref/detection.hpp"
#include "ecoref/scoring.hpp"

namespace ecoref::dataset {
struct DatasetManifest;
}

namespace ecoref::formats {

// Parses a whole request body. Any bad row rejects the whole body with
// Error(kParse) naming the row. With a manifest, image ids and class ids are
// also checked against it.
std::vector<Detection> parse_detections(std::string_view body,
                                        const dataset::DatasetManifest* manifest = nullptr,
                                        const std::string& source = "body");

std::string format_detection_rows(std::span<const Detection> dets);
std::string format_detection_json(std::span<const Detection> dets);

// CSV rows `image_id,predicted_class,latency_ms,correct` in processing order.
// An optional header row starting with `image_id` is skipped; `correct` is
// 0/1 or true/false.
std::vector<scoring::Track1Record> parse_track1_log(std::istream& in,
                                                    const std::string& source = "log");
void write_track1_log(std::ostream& out, std::span<const scoring::Track1Record> records);

struct PersistedReport {
  std::string label;
  scoring::ScoreReport report;
  std::map<std::string, std::string> metadata;  // every other key
};

// Values are written with 17 significant digits so reading back is exact.
void write_score_report(std::ostream& out, const scoring::ScoreReport& report,
                        const std::vector<std::pair<std::string, std::string>>& metadata = {});
PersistedReport read_score_report(std::istream& in, const std::string& source = "report");

std::string report_json(const scoring::ScoreReport& report);
std::string track1_json(const scoring::Track1Report& report);

// Shortest decimal text that reads back to the same double.
std::string exact(double value);

}  // namespace ecoref::formats
