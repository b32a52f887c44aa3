// Copyright 2026 The ecoref Authors
// SPDX-License-Identifier: Apache-2.0
//
// Competition metrics. Everything in this header is a pure function over its
// arguments and may be called concurrently.
//
// Detection accuracy is all-point average precision (area under the
// interpolated precision/recall curve), averaged over the classes that have
// at least one ground-truth object. A detection counts as a true positive when
// its class matches and its IoU with a not-yet-matched ground truth of the
// same image is at least the threshold (0.5 by default). Images a contestant
// never answered simply leave their ground truths unmatched, so the fraction
// of processed images shows up as lost recall.
//
// The energy-weighted score is mAP divided by Watt-hours.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ecoref/detection.hpp"

namespace ecoref::scoring {

inline constexpr double kDefaultIouThreshold = 0.5;
inline constexpr double kDefaultTrack1BudgetMs = 30.0;
inline constexpr double kDefaultModeBinWidth = 0.05;

double iou(const BoundingBox& a, const BoundingBox& b);

struct RankedFlag {
  double confidence = 0.0;
  bool is_true_positive = false;

  bool operator==(const RankedFlag&) const = default;
};

struct MatchResult {
  // Descending confidence; ties keep submission order.
  std::vector<RankedFlag> flags;
  std::size_t unmatched_gt = 0;
};

// Greedy matching for a single class. Each detection, taken in descending
// confidence order, claims the unmatched ground truth of its image with the
// highest IoU, provided that IoU reaches `iou_threshold`.
MatchResult match_detections(std::span<const Detection> dets,
                             std::span<const GroundTruthObject> gts,
                             double iou_threshold = kDefaultIouThreshold);

// All-point AP. Returns nullopt when there is neither ground truth nor any
// detection (the class is undefined and must be excluded from the mean).
std::optional<double> average_precision(std::span<const RankedFlag> flags,
                                        std::int64_t num_gt);

// Unweighted mean of per-class AP over classes 1..num_classes having ground
// truth. Detections for classes without ground truth do not affect the mean.
double mean_average_precision(std::span<const Detection> dets,
                              std::span<const GroundTruthObject> gts,
                              int num_classes,
                              double iou_threshold = kDefaultIouThreshold);

// mAP per Wh. Non-positive energy means the meter failed and throws.
double final_score(double map_value, double energy_wh);

struct ScoreReport {
  double map_value = 0.0;
  double energy_wh = 0.0;
  double score = 0.0;
  std::size_t images_processed = 0;
  std::size_t images_total = 0;

  bool operator==(const ScoreReport&) const = default;
};

// Shared by the online referee and offline scoring so both produce identical
// reports. `images_processed` counts distinct images with at least one
// detection.
ScoreReport make_score_report(std::span<const Detection> dets,
                              std::span<const GroundTruthObject> gts,
                              int num_classes, std::size_t images_total,
                              double energy_wh);

struct Track1Record {
  std::string image_id;
  int predicted_class = 0;
  double latency_ms = 0.0;
  bool correct = false;
};

struct Track1Report {
  double mean_latency_ms = 0.0;
  double test_metric = 0.0;
  double accuracy_on_classified = 0.0;
  double accuracy_per_time = 0.0;  // per millisecond
  std::size_t num_classified = 0;
  std::size_t num_total = 0;

  bool operator==(const Track1Report&) const = default;
};

// Wall-time semantics: the budget is num_total * per_image_budget_ms and an
// image counts as classified when the running sum of latencies, in processing
// order, is still within that budget.
Track1Report track1_metrics(std::span<const Track1Record> records,
                            double per_image_budget_ms, std::size_t num_total);

struct ScoreStatistics {
  double mean = 0.0;
  double median = 0.0;
  double mode = 0.0;    // center of the most populated bin
  double stddev = 0.0;  // population
};

// Bins are [k*w, (k+1)*w); ties go to the lowest bin.
ScoreStatistics score_statistics(std::span<const double> scores,
                                 double bin_width = kDefaultModeBinWidth);

}  // namespace ecoref::scoring
